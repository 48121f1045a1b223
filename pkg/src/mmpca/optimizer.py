"""Quasi-Newton minimization (dense BFGS or L-BFGS) with a strong Wolfe
line search."""
import warnings
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import blas
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

__all__ = ["OptimizerConfig", "OptimizerReport", "OptimizationError", "minimize"]


class OptimizationError(RuntimeError):
    """Objective or gradient became non-finite."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 2000
    gradient_tolerance: float = 1e-6
    objective_tolerance: float = 1e-9
    c1: float = 1e-4
    c2: float = 0.9
    line_search_iterations: int = 20
    # "auto" switches to limited memory above ``dense_limit`` parameters
    memory: str = "auto"
    history: int = 10
    dense_limit: int = 1000

    def __post_init__(self):
        if self.gradient_tolerance < 0 or self.objective_tolerance < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory not in ("auto", "full", "limited"):
            raise ValueError("memory must be 'auto', 'full' or 'limited'")
        if self.history < 1:
            raise ValueError("history must be at least 1")

    def limited(self, n):
        return self.memory == "limited" or (self.memory == "auto" and n > self.dense_limit)

    def replace(self, **changes):
        return OptimizerConfig(**{**asdict(self), **changes})


@dataclass
class OptimizerReport:
    objective: float
    iterations: int
    termination: str
    gradient_norm: float
    objective_trace: list = field(default_factory=list)
    gradient_norm_trace: list = field(default_factory=list)
    evaluations: int = 0

    @property
    def converged(self):
        return self.termination in ("gradient", "objective")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class _Counter:
    def __init__(self, f, g):
        self.f, self.g = f, g
        self.n = 0

    def value(self, x):
        self.n += 1
        v = float(self.f(x))
        if not np.isfinite(v):
            raise OptimizationError(f"objective is not finite ({v}) at evaluation {self.n}")
        return v

    def grad(self, x):
        g = np.asarray(self.g(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise OptimizationError(f"gradient is not finite at evaluation {self.n}")
        return g


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= np.dot(s, y) / np.dot(y, y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return q


def minimize(f, g, x0, config=None):
    """Minimize ``f`` from ``x0`` given its gradient ``g``.

    Stops when the largest gradient component falls to
    ``gradient_tolerance``, when the relative decrease of one accepted step
    is at most ``objective_tolerance``, after ``max_iterations`` steps, or
    when no step satisfying the Wolfe conditions can be found (even along
    steepest descent). In every case the best iterate is returned.

    Returns
    -------
    x : ndarray
    report : OptimizerReport

    Raises
    ------
    OptimizationError
        If ``f`` or ``g`` returns a non-finite value.
    """
    config = config or OptimizerConfig()
    fun = _Counter(f, g)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise OptimizationError("starting point is not finite")
    n = x.size
    limited = config.limited(n)
    fx = fun.value(x)
    gx = fun.grad(x)
    gnorm = float(np.max(np.abs(gx))) if n else 0.0
    f_trace, g_trace = [fx], [gnorm]
    H = None
    pairs = deque(maxlen=config.history)
    old_old = fx + np.linalg.norm(gx) / 2
    termination = "max_iterations"
    it = 0
    if gnorm <= config.gradient_tolerance:
        termination = "gradient"

    def search(p):
        if not np.dot(p, gx) < 0:
            return None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, _, _, f_new, _, g_new = line_search(
                fun.value, fun.grad, x, p, gx, fx, old_old,
                c1=config.c1, c2=config.c2, maxiter=config.line_search_iterations)
        if alpha is None or f_new is None or f_new > fx:
            return None
        return alpha, f_new, g_new

    while termination == "max_iterations" and it < config.max_iterations:
        curved = bool(pairs) or H is not None
        if curved:
            p = -_two_loop(gx, list(pairs)) if limited else -blas.dsymv(1.0, H, gx)
        else:
            p = -gx
        step = search(p)
        if step is None and curved:
            # drop the curvature model and retry along steepest descent
            H = None
            pairs.clear()
            old_old = fx + np.linalg.norm(gx) / 2
            p = -gx
            step = search(p)
        if step is None:
            termination = "line_search"
            break
        alpha, f_new, g_new = step
        s = alpha * p
        x_new = x + s
        if g_new is None:
            g_new = fun.grad(x_new)
        y = g_new - gx
        sy = float(np.dot(s, y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if limited:
                pairs.append((s, y, 1.0 / sy))
            else:
                if H is None:
                    H = np.asfortranarray(np.eye(n) * (sy / np.dot(y, y)))
                # in-place symmetric rank updates on the upper triangle
                rho = 1.0 / sy
                Hy = blas.dsymv(1.0, H, y)
                H = blas.dsyr(rho * rho * np.dot(y, Hy) + rho, s, a=H, overwrite_a=True)
                H = blas.dsyr2(-rho, Hy, s, a=H, overwrite_a=True)
        old_old, fx_prev = fx, fx
        x, fx, gx = x_new, float(f_new), g_new
        gnorm = float(np.max(np.abs(gx)))
        it += 1
        f_trace.append(fx)
        g_trace.append(gnorm)
        if gnorm <= config.gradient_tolerance:
            termination = "gradient"
        elif fx_prev - fx <= config.objective_tolerance * max(abs(fx_prev), abs(fx), 1.0):
            termination = "objective"
    report = OptimizerReport(fx, it, termination, gnorm, f_trace, g_trace, fun.n)
    return x, report
