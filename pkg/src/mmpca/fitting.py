"""Fitting one model at fixed penalty weights."""
import numpy as np

from .analysis import DEFAULT_ZERO_THRESHOLD, Solution
from .data import rescale_to_pi2
from .gradients import Objective
from .initialize import init_global
from .objective import DEFAULT_TAU, ModelParams, Penalties
from .optimizer import OptimizerConfig, minimize

__all__ = ["fit"]


def fit(dataset, k, lambdas=(0.0, 0.0, 0.0, 0.0), *, tau=DEFAULT_TAU, config=None, init=None,
        zero_threshold=DEFAULT_ZERO_THRESHOLD, rescale=True, normalization=None):
    """Fit a rank-``k`` model with penalty weights ``lambdas``.

    Parameters
    ----------
    dataset : Dataset
    k : int
        Maximal rank; penalties may switch components off.
    lambdas : sequence of 4 floats
        Weights of the D sparsity, rank, loading sparsity and row-group
        penalties, before rescaling with the data.
    tau : float
        Smoothing width of the absolute value.
    config : OptimizerConfig, optional
    init : ModelParams, optional
        Starting point in the scale of ``dataset``; by default the globally
        joint SVD initialization.
    zero_threshold : float
        Entries below this magnitude (in the optimizer's scale) are reported
        as exact zeros.
    rescale : bool
        Optimize on data multiplied by one factor that makes the largest
        singular value pi**2. The returned parameters are in the original
        scale either way.
    normalization : NormalizationRecord, optional
        Attached to the solution for de-normalized imputation.

    Returns
    -------
    Solution
    """
    config = config or OptimizerConfig()
    penalties = Penalties(tuple(lambdas), tau)
    work, g = rescale_to_pi2(dataset) if rescale else (dataset, 1.0)
    root = np.sqrt(g)
    if init is None:
        start = init_global(work, k)
    else:
        if init.k != k:
            raise ValueError(f"initial parameters have rank {init.k}, expected {k}")
        start = ModelParams(init.xi, init.d * root)
    obj = Objective(work, k, penalties)
    x, report = minimize(lambda t: obj.value_and_grad(t)[0], obj.gradient, start.to_vector(), config)
    fitted = ModelParams.from_vector(x, dataset.dims, k)
    params = ModelParams(fitted.xi, fitted.d / root)
    norms = [float(np.sum(m.values ** 2)) for m in dataset]
    return Solution(dataset.views, params, penalties, norms, g, zero_threshold, report, normalization)
