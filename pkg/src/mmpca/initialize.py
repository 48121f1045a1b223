"""Starting values that treat every component as globally joint."""
import warnings

import numpy as np

from .kframe import invert_kframe, orthogonal_complement
from .objective import ModelParams
from .optimizer import OptimizerConfig, minimize

__all__ = ["init_global", "view_loadings", "factor_scales"]


def view_loadings(dataset, view, k):
    """Top-k left singular vectors of every matrix touching ``view``.

    Matrices where the view indexes columns are transposed before the
    horizontal concatenation. Missing elements count as zero.
    """
    p = dataset.dims[view]
    blocks = [m.values if m.row_view == view else m.values.T
              for m in dataset if view in (m.row_view, m.col_view)]
    if not blocks:
        return np.eye(p)[:, :k]
    U, s, _ = np.linalg.svd(np.hstack(blocks), full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    if rank < k:
        warnings.warn(f"view {dataset.views.names[view]}: only {rank} nonzero singular values for k={k}; "
                      "padding with an arbitrary orthonormal completion", stacklevel=2)
        U = U[:, :rank]
        U = np.hstack([U, orthogonal_complement(U)[:, :k - rank]]) if rank else np.eye(p)[:, :k]
    V = U[:, :k].copy()
    if k == p and np.linalg.det(V) < 0:
        # a full rotation must have determinant +1; the sign moves into D
        V[:, -1] = -V[:, -1]
    return V


def _fit_error(d, links, lam):
    err = 0.0
    for l, (i, j) in enumerate(links):
        err += float(np.sum((d[:, i] * d[:, j] - lam[l]) ** 2))
    return err


def _fit_magnitudes(d0, links, lam, config):
    k, n_v = d0.shape

    def f(x):
        return _fit_error(x.reshape(k, n_v), links, lam)

    def g(x):
        d = x.reshape(k, n_v)
        out = np.zeros_like(d)
        for l, (i, j) in enumerate(links):
            r = 2.0 * (d[:, i] * d[:, j] - lam[l])
            out[:, i] += r * d[:, j]
            out[:, j] += r * d[:, i]
        return out.ravel()

    x, _ = minimize(f, g, d0.ravel(), config)
    return x.reshape(k, n_v)


def factor_scales(links, lam, n_views, config=None):
    """Split per-matrix scales ``lam[l, c]`` into products d_ic d_jc.

    Signs are chosen greedily (component by component, views in index
    order, ties go to +) and magnitudes are then fitted by quasi-Newton
    least squares. The all-positive starting point is fitted as well and
    the better of the two is kept.
    """
    lam = np.asarray(lam, dtype=float)
    k = lam.shape[1] if lam.ndim == 2 else 0
    config = config or OptimizerConfig(gradient_tolerance=1e-10, objective_tolerance=0.0, max_iterations=500)
    mag = np.zeros((k, n_views))
    touching = [[l for l, link in enumerate(links) if v in link] for v in range(n_views)]
    for v in range(n_views):
        if touching[v]:
            mag[:, v] = np.mean(np.sqrt(np.abs(lam[touching[v]])), axis=0)
    signs = np.ones((k, n_views))
    for c in range(k):
        for v in range(n_views):
            errs = []
            for s in (1.0, -1.0):
                signs[c, v] = s
                d = signs[c] * mag[c]
                errs.append(sum((d[links[l][0]] * d[links[l][1]] - lam[l, c]) ** 2 for l in touching[v]))
            signs[c, v] = 1.0 if errs[0] <= errs[1] else -1.0
    greedy = _fit_magnitudes(signs * mag, links, lam, config)
    plain = _fit_magnitudes(mag, links, lam, config)
    if _fit_error(plain, links, lam) < _fit_error(greedy, links, lam):
        return plain
    return greedy


def init_global(dataset, k, config=None):
    """Initial :class:`ModelParams` assuming all k components are globally joint.

    Each V_i comes from the SVD of the concatenation of all matrices that
    touch view i; the per-matrix scales diag(V_i' X_ij V_j) are factored
    into D_i D_j, and the angles are recovered with the inverse k-frame map.
    """
    if k < 1 or k > min(dataset.dims):
        raise ValueError(f"k must be between 1 and the smallest view dimension ({min(dataset.dims)})")
    frames = [view_loadings(dataset, v, k) for v in range(dataset.n_views)]
    lam = np.array([np.diag(frames[m.row_view].T @ m.values @ frames[m.col_view]) for m in dataset])
    d = factor_scales(list(dataset.links), lam, dataset.n_views, config)
    return ModelParams([invert_kframe(V) for V in frames], d)
