"""The penalized, masked reconstruction objective.

For a dataset with links S the objective is

    sum_{(i,j) in S} ||M_ij * (X_ij - V_i D_i D_j V_j')||_F^2
      + l1 * sum_i |D_i|_1
      + l2 * sum_c sqrt(sum_i D_ic^2)
      + l3 / n_v * sum_i |V_i D_i|_1
      + l4 / n_v * sum_i sum_rows ||(V_i D_i)_r||_2

with V_i = V(xi_i). Absolute values are replaced by the smooth surrogate
``x * tanh(x / tau)``; the penalty weights are multiplied by c**1.5 where c
is the mean Frobenius norm of the data matrices.
"""
from dataclasses import dataclass

import numpy as np

from .kframe import angles_to_vector, build_kframe, frame_from_vector, n_angles, vector_to_angles

__all__ = [
    "ModelParams",
    "Penalties",
    "smooth_abs",
    "smooth_abs_grad",
    "reconstruct",
    "reconstruction_loss",
    "penalty_terms",
    "lambda_factor",
    "scale_lambda",
    "objective_value",
]

DEFAULT_TAU = 1e-3


@dataclass
class ModelParams:
    """Angles for each view and the augmented D matrix.

    ``d`` has shape (k, n_views); column i is the diagonal of D_i.
    """

    xi: list
    d: np.ndarray

    def __post_init__(self):
        self.xi = [np.asarray(x, dtype=float) for x in self.xi]
        self.d = np.asarray(self.d, dtype=float)
        if self.d.ndim != 2 or self.d.shape[1] != len(self.xi):
            raise ValueError("d must have shape (k, n_views)")
        k = self.d.shape[0]
        for i, x in enumerate(self.xi):
            if x.ndim != 2 or x.shape[1] != k or x.shape[0] < k:
                raise ValueError(f"xi[{i}] has shape {x.shape}; expected (p_{i}, {k}) with p_{i} >= {k}")
        if not np.all(np.isfinite(self.d)):
            raise ValueError("d must be finite")

    @property
    def k(self):
        return self.d.shape[0]

    @property
    def n_views(self):
        return self.d.shape[1]

    @property
    def dims(self):
        return tuple(x.shape[0] for x in self.xi)

    def frames(self):
        return [build_kframe(x) for x in self.xi]

    @property
    def n_params(self):
        return self.n_views * self.k + sum(n_angles(p, self.k) for p in self.dims)

    def to_vector(self):
        """Flat layout: angles of view 0, ..., angles of view n-1, then d view by view."""
        return np.concatenate([angles_to_vector(x) for x in self.xi] + [self.d.T.ravel()])

    @classmethod
    def from_vector(cls, theta, dims, k):
        theta = np.asarray(theta, dtype=float)
        xi, pos = [], 0
        for p in dims:
            m = n_angles(p, k)
            xi.append(vector_to_angles(theta[pos:pos + m], p, k))
            pos += m
        d = theta[pos:].reshape(len(dims), k).T.copy()
        if d.shape != (k, len(dims)):
            raise ValueError("parameter vector has the wrong length")
        return cls(xi, d)

    @classmethod
    def zeros(cls, dims, k):
        return cls([np.zeros((p, k)) for p in dims], np.zeros((k, len(dims))))

    def copy(self):
        return ModelParams([x.copy() for x in self.xi], self.d.copy())


def frames_from_vector(theta, dims, k):
    """Frames and the d block straight from a flat parameter vector."""
    frames, pos = [], 0
    for p in dims:
        m = n_angles(p, k)
        frames.append(frame_from_vector(theta[pos:pos + m], p, k))
        pos += m
    return frames, theta[pos:].reshape(len(dims), k).T


@dataclass(frozen=True)
class Penalties:
    lambdas: tuple = (0.0, 0.0, 0.0, 0.0)
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        if len(lam) != 4 or any(v < 0 or not np.isfinite(v) for v in lam):
            raise ValueError("need four nonnegative finite penalty weights")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "lambdas", lam)


def smooth_abs(x, tau=DEFAULT_TAU):
    """``x * tanh(x / tau)``: smooth, never above |x| and within 0.28 tau of it."""
    x = np.asarray(x, dtype=float)
    return x * np.tanh(x / tau)


def smooth_abs_grad(x, tau=DEFAULT_TAU):
    x = np.asarray(x, dtype=float)
    t = np.tanh(x / tau)
    return t + (x / tau) * (1.0 - t * t)


def reconstruct(frames, d, i, j):
    """V_i D_i D_j V_j' for any pair of views."""
    return (frames[i] * (d[:, i] * d[:, j])) @ frames[j].T


def reconstruction_loss(dataset, params):
    frames = params.frames()
    total = 0.0
    for m in dataset:
        r = m.mask * (m.values - reconstruct(frames, params.d, m.row_view, m.col_view))
        total += float(np.sum(r * r))
    return total


def penalty_terms(params, tau=DEFAULT_TAU, frames=None):
    """The four unweighted penalties (P1, P2, P3, P4)."""
    frames = params.frames() if frames is None else frames
    d = params.d
    n_v = params.n_views
    p1 = float(np.sum(smooth_abs(d, tau)))
    p2 = float(np.sum(np.sqrt(np.sum(d * d, axis=1))))
    p3 = p4 = 0.0
    for i, V in enumerate(frames):
        VD = V * d[:, i]
        p3 += float(np.sum(smooth_abs(VD, tau)))
        p4 += float(np.sum(np.sqrt(np.sum(VD * VD, axis=1))))
    return p1, p2, p3 / n_v, p4 / n_v


def lambda_factor(dataset):
    """c**1.5 with c the mean Frobenius norm of the (observed) data matrices."""
    return dataset.mean_frobenius_norm() ** 1.5


def scale_lambda(lambdas, dataset):
    return tuple(lambda_factor(dataset) * float(v) for v in lambdas)


def objective_value(dataset, params, penalties=None, scale=True):
    """Reconstruction loss plus weighted penalties.

    With ``scale`` the weights are multiplied by :func:`lambda_factor`.
    """
    penalties = penalties or Penalties()
    lam = scale_lambda(penalties.lambdas, dataset) if scale else penalties.lambdas
    value = reconstruction_loss(dataset, params)
    if any(lam):
        value += sum(l * p for l, p in zip(lam, penalty_terms(params, penalties.tau)))
    return value
