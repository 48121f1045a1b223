"""Recover which views each component touches.

Three cohorts are measured on the same features. One component is shared
by all cohorts, a second one only by the first two cohorts and a third
one lives in cohort 3 alone. A penalized fit with cross-validated weights
should report this pattern as the zero structure of the augmented D
matrix, and the directed R^2 table then tells how much of each matrix is
explained by structure it shares with another.

Run with ``python demos/partially_shared_structure.py``.
"""
import numpy as np

from mmpca import Dataset, LambdaGrid, cross_validate, directed_r2_matrix, r2_table

rng = np.random.default_rng(7)
n_features, cohort_sizes = 40, (30, 25, 35)
features = np.linalg.qr(rng.standard_normal((n_features, 3)))[0]
# rows: components, columns: cohorts; zero means absent
strength = np.array([[6.0, 5.0, 7.0], [4.0, 5.0, 0.0], [0.0, 0.0, 6.0]])

blocks = {}
for i, n in enumerate(cohort_sizes):
    scores = np.linalg.qr(rng.standard_normal((n, 3)))[0]
    signal = scores @ np.diag(strength[:, i]) @ features.T
    blocks[(i, 3)] = signal + 0.1 * rng.standard_normal(signal.shape)
data = Dataset.from_arrays(cohort_sizes + (n_features,), blocks,
                           names=("cohort1", "cohort2", "cohort3", "features"))

grid = LambdaGrid.logspace(np.exp(-8), 1.0, 8, flags=(1, 1, 1, 0))
result = cross_validate(data, k=4, grid=grid, seed=1)
solution = result.solution

print("held-out error per candidate:")
for lam, err in zip(result.candidates, result.test_errors):
    print(f"  lambda0={lam[0]:.2e}  error={err:.4f}")
print(f"chosen lambda0: {result.chosen_lambdas[0]:.2e}\n")

print("augmented D (rows are components, columns are views):")
print(np.array2string(solution.augmented_d, precision=2, suppress_small=True))

print("\nR^2 per matrix:")
for row_view, col_view, total, per in r2_table(solution):
    print(f"  {row_view} x {col_view}: {total:.3f}  per component {np.round(per, 3)}")

print("\ndirected R^2 (row: explained matrix, column: source matrix):")
print(np.array2string(directed_r2_matrix(solution), precision=3))
