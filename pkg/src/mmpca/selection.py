"""Choosing penalty weights by element hold-out cross-validation."""
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import DEFAULT_ZERO_THRESHOLD
from .data import holdout_split, rescale_to_pi2
from .fitting import fit
from .initialize import init_global
from .kframe import KFrameError
from .objective import DEFAULT_TAU, ModelParams
from .optimizer import OptimizationError, OptimizerConfig

__all__ = ["LambdaGrid", "CvResult", "CvFailure", "cross_validate", "parse_grid", "parse_flags", "test_error"]

DEFAULT_HOLDOUT = 0.1


class CvFailure(RuntimeError):
    """Every candidate failed."""


@dataclass(frozen=True)
class LambdaGrid:
    """Candidate penalty weights.

    Either a ray ``lambda = lambda0 * (b1, b2, b3, b4)`` over sorted
    ``lambda0`` values, or an explicit list of 4-tuples kept in the given
    order.
    """

    lambda0: tuple = ()
    flags: tuple = (1, 1, 1, 1)
    explicit: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lambda0", tuple(sorted(float(v) for v in self.lambda0)))
        object.__setattr__(self, "flags", tuple(int(b) for b in self.flags))
        object.__setattr__(self, "explicit", tuple(tuple(float(v) for v in c) for c in self.explicit))
        if len(self.flags) != 4 or any(b not in (0, 1) for b in self.flags):
            raise ValueError("flags must be four binary values")
        if any(v < 0 for v in self.lambda0) or any(len(c) != 4 or min(c) < 0 for c in self.explicit):
            raise ValueError("penalty weights must be nonnegative")
        if not self.candidates:
            raise ValueError("grid has no candidates")

    @classmethod
    def logspace(cls, low, high, num, flags=(1, 1, 1, 1)):
        """``num`` values of lambda0 log-spaced between ``low`` and ``high``."""
        return cls(tuple(np.geomspace(low, high, num)), flags)

    @property
    def candidates(self):
        if self.explicit:
            return list(self.explicit)
        return [tuple(l0 * b for b in self.flags) for l0 in self.lambda0]

    def __len__(self):
        return len(self.candidates)


_NUM = r"\s*([^,()]+?)\s*"


def _number(text):
    text = text.strip().replace(" ", "")
    m = re.fullmatch(r"e\^?\(?([-+]?[0-9.eE+-]+)\)?", text)
    if m:
        return math.exp(float(m.group(1)))
    return float(text)


def parse_grid(spec, flags=(1, 1, 1, 1)):
    """Parse a grid description.

    Accepted forms: ``logspace(LOW,HIGH,NUM)``, a comma separated list of
    lambda0 values, or semicolon separated explicit 4-tuples
    (``0.1,0,0,0;1,0,0,0``). Numbers may be written ``e^-8``.
    """
    spec = spec.strip()
    m = re.fullmatch(rf"logspace\({_NUM},{_NUM},{_NUM}\)", spec)
    if m:
        return LambdaGrid.logspace(_number(m.group(1)), _number(m.group(2)), int(m.group(3)), flags)
    if ";" in spec or spec.count(",") == 3 and spec.startswith("("):
        cands = [tuple(_number(v) for v in part.strip("() ").split(",")) for part in spec.split(";") if part.strip()]
        return LambdaGrid(explicit=tuple(cands))
    return LambdaGrid(tuple(_number(v) for v in spec.split(",") if v.strip()), flags)


def parse_flags(text):
    text = text.strip()
    if not re.fullmatch(r"[01]{4}", text):
        raise ValueError(f"penalty flags must be four binary digits, got {text!r}")
    return tuple(int(c) for c in text)


@dataclass
class CvResult:
    candidates: list
    test_errors: list
    reports: list
    failed: list
    chosen: int
    solution: object = None
    errors: list = field(default_factory=list)

    @property
    def chosen_lambdas(self):
        return self.candidates[self.chosen]

    def rows(self):
        out = []
        for idx, (lam, err, rep, bad) in enumerate(zip(self.candidates, self.test_errors, self.reports, self.failed)):
            out.append({
                "candidate": idx,
                "lambda1": lam[0], "lambda2": lam[1], "lambda3": lam[2], "lambda4": lam[3],
                "test_error": err,
                "failed": bad,
                "chosen": idx == self.chosen,
                "iterations": None if rep is None else rep.iterations,
                "termination": None if rep is None else rep.termination,
            })
        return out


def test_error(solution, dataset, tests):
    """Sum of squared errors over held-out elements."""
    from .analysis import impute

    total = 0.0
    for m, mask in zip(dataset, tests):
        if mask.any():
            xhat = impute(solution, (m.row_view, m.col_view))
            total += float(np.sum((m.values[mask] - xhat[mask]) ** 2))
    return total


def _fit_candidate(args):
    train, k, lam, inits, tau, config, zero_threshold = args
    best, msg = None, None
    for init in inits:
        try:
            sol = fit(train, k, lam, tau=tau, config=config, init=init, zero_threshold=zero_threshold,
                      rescale=False)
        except (OptimizationError, KFrameError, np.linalg.LinAlgError) as exc:
            msg = f"{type(exc).__name__}: {exc}"
            continue
        if best is None or sol.report.objective < best.report.objective:
            best = sol
    return best, (None if best is not None else msg)


def cross_validate(dataset, k, grid, probability=DEFAULT_HOLDOUT, seed=None, config=None, *,
                   tau=DEFAULT_TAU, zero_threshold=DEFAULT_ZERO_THRESHOLD, starts="best", jobs=1,
                   normalization=None, refit=True):
    """Select penalty weights on one shared element hold-out split.

    Candidates are fitted on the training elements in grid order and scored
    by the squared error on held-out elements; the best one (earliest on
    ties) is refitted on all data.

    ``starts`` picks the starting point of each candidate fit: "init" uses
    the globally joint initialization for every candidate (candidates are
    then independent and run on ``jobs`` processes), "warm" chains each fit
    from the previous candidate's solution, and "best" runs both and keeps
    the one with the lower training objective. The final refit likewise
    starts from the full-data initialization and, unless ``starts`` is
    "init" or the grid has a single candidate, also from the chosen
    candidate's solution; a single-candidate grid thus reproduces a plain
    fit.

    Errors are reported in the scale of ``dataset``.
    """
    config = config or OptimizerConfig()
    if starts not in ("init", "warm", "best"):
        raise ValueError("starts must be 'init', 'warm' or 'best'")
    work, g = rescale_to_pi2(dataset)
    train, tests = holdout_split(work, probability, seed)
    start = init_global(train, k)
    cands = grid.candidates
    common = (tau, config, zero_threshold)
    if starts == "init":
        args = [(train, k, lam, [start]) + common for lam in cands]
        if jobs > 1 and len(cands) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_fit_candidate, args))
        else:
            results = [_fit_candidate(a) for a in args]
    else:
        results, prev = [], None
        for lam in cands:
            inits = [start] if prev is None else ([prev] if starts == "warm" else [start, prev])
            sol, msg = _fit_candidate((train, k, lam, inits) + common)
            results.append((sol, msg))
            if sol is not None:
                prev = sol.params
    errors, reports, failed, messages = [], [], [], []
    for sol, msg in results:
        failed.append(sol is None)
        messages.append(msg)
        reports.append(None if sol is None else sol.report)
        errors.append(math.nan if sol is None else test_error(sol, work, tests) / g ** 2)
    valid = [i for i, bad in enumerate(failed) if not bad]
    if not valid:
        raise CvFailure("all candidates failed: " + "; ".join(m for m in messages if m))
    best = min(valid, key=lambda i: (errors[i], i))
    result = CvResult(list(cands), errors, reports, failed, best, None, messages)
    if refit:
        inits = [None]
        if starts != "init" and len(cands) > 1:
            chosen = results[best][0].params
            inits.append(ModelParams(chosen.xi, chosen.d / np.sqrt(g)))
        final = None
        for init in inits:
            sol = fit(dataset, k, cands[best], tau=tau, config=config, init=init,
                      zero_threshold=zero_threshold, normalization=normalization)
            if final is None or sol.report.objective < final.report.objective:
                final = sol
        result.solution = final
    return result
