"""Predict a data matrix that was never observed.

Cohort A has expression data, cohort B has both expression and
methylation, and cohort C has methylation only. The methylation of
cohort A is missing entirely, but the model links cohort A to the
methylation features through cohort B, so V_A D_A D_meth V_meth' is a
prediction for it. The demo compares that prediction with the withheld
truth.

Run with ``python demos/imputing_a_missing_matrix.py``.
"""
import numpy as np

from mmpca import Dataset, fit, impute

rng = np.random.default_rng(11)
dims = {"A": 30, "B": 25, "C": 40, "expr": 50, "meth": 45}
latent = {name: rng.standard_normal((p, 2)) for name, p in dims.items()}
names = list(dims)


def block(rows, cols):
    signal = latent[rows] @ latent[cols].T
    return signal, signal + 0.5 * rng.standard_normal(signal.shape)


observed = {}
for rows, cols in (("A", "expr"), ("B", "expr"), ("B", "meth"), ("C", "meth")):
    observed[(names.index(rows), names.index(cols))] = block(rows, cols)[1]
hidden, _ = block("A", "meth")

data = Dataset.from_arrays(tuple(dims.values()), observed, names=tuple(names))
solution = fit(data, k=2)
prediction = impute(solution, ("A", "meth"))

corr = np.corrcoef(prediction.ravel(), hidden.ravel())[0, 1]
print(f"fitted {len(observed)} matrices; optimizer stopped on '{solution.report.termination}' "
      f"after {solution.report.iterations} iterations")
print(f"correlation between predicted and withheld cohort A methylation: {corr:.3f}")
