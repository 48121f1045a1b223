"""Simulated benchmarks with planted structure, recovery metrics and a
study runner.

Study 1: four 10x10 cohorts over one feature view; cohorts 1-2 and 3-4
share a rank-one component each.
Study 2: three cohorts over one feature view; each observation lies
either on a globally joint direction or on its cohort's individual
direction (individual directions at pairwise angle pi/3).
Study 3: one 30x30 matrix made of two components with 0/1 loadings that
have three ones each.
"""
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm
from scipy.optimize import linear_sum_assignment

from .analysis import (
    DEFAULT_ZERO_THRESHOLD,
    component_order,
    effective_rank,
    impute,
    joint_components,
    matrix_rank,
)
from .data import Dataset
from .objective import DEFAULT_TAU
from .optimizer import OptimizerConfig
from .selection import DEFAULT_HOLDOUT, CvFailure, LambdaGrid, cross_validate

__all__ = [
    "SimData",
    "SimSpec",
    "MethodConfig",
    "gen_sim1",
    "gen_sim2",
    "gen_sim3",
    "sim2_joint_rows",
    "structure_rmse",
    "angular_distance",
    "joint_direction_accuracy",
    "matthews",
    "loading_mcc",
    "generate_run",
    "run_one",
    "run_study",
    "aggregate",
    "results_csv",
    "RESULT_COLUMNS",
]


@dataclass
class SimData:
    dataset: Dataset
    signal: list
    noise: list
    truth: dict


def _noise_factor(signal, noise, snr):
    return float(np.linalg.norm(signal) / (snr * np.linalg.norm(noise)))


def gen_sim1(snr, seed=None):
    """Four 10x10 matrices, views 0-3 (cohorts) by view 4 (features).

    X_i = u_i v_i' + c_i e_i with v_0 = v_1 and v_2 = v_3 unit vectors;
    c_i makes ||u_i v_i'||_F / ||c_i e_i||_F equal ``snr`` exactly.
    """
    if not snr > 0:
        raise ValueError("snr must be positive")
    rng = np.random.default_rng(seed)
    shared = []
    for _ in range(2):
        v = rng.standard_normal(10)
        shared.append(v / np.linalg.norm(v))
    blocks, signal, noise = {}, [], []
    for i in range(4):
        u = rng.standard_normal(10)
        s = np.outer(u, shared[i // 2])
        e = rng.standard_normal((10, 10))
        e = _noise_factor(s, e, snr) * e
        blocks[(i, 4)] = s + e
        signal.append(s)
        noise.append(e)
    ds = Dataset.from_arrays((10,) * 5, blocks, names=("cohort1", "cohort2", "cohort3", "cohort4", "features"))
    pattern = np.array([[1, 1, 0, 0, 1], [0, 0, 1, 1, 1]], dtype=float)
    return SimData(ds, signal, noise, {"d_pattern": pattern, "v": np.column_stack(shared)})


def sim2_joint_rows(p, p_joint):
    """Rows on the joint direction: p * p_joint rounded half up."""
    return int(math.floor(p * p_joint + 0.5))


def _pi3_directions(n, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((n, 3)))
    gram = np.full((3, 3), 0.5) + 0.5 * np.eye(3)
    return Q @ np.real(sqrtm(gram))


def gen_sim2(n, p, p_joint, seed=None):
    """Three p x n matrices, views 0-2 (cohorts) by view 3 (features, dim n).

    The first rows of X_i are u_ir v_i' and the last
    ``sim2_joint_rows(p, p_joint)`` rows are w_ir v_4', plus N(0, 0.05^2)
    noise.
    """
    if not 0.0 <= p_joint <= 1.0:
        raise ValueError("p_joint must lie in [0, 1]")
    if n < 3:
        raise ValueError("need n >= 3 for three individual directions")
    rng = np.random.default_rng(seed)
    v_ind = _pi3_directions(n, rng)
    v4 = rng.standard_normal(n)
    v4 /= np.linalg.norm(v4)
    n_joint = sim2_joint_rows(p, p_joint)
    blocks, signal, noise = {}, [], []
    for i in range(3):
        u = rng.standard_normal(p - n_joint)
        w = rng.standard_normal(n_joint)
        s = np.vstack([np.outer(u, v_ind[:, i]), np.outer(w, v4)])
        e = 0.05 * rng.standard_normal((p, n))
        blocks[(i, 3)] = s + e
        signal.append(s)
        noise.append(e)
    ds = Dataset.from_arrays((p, p, p, n), blocks, names=("cohort1", "cohort2", "cohort3", "features"))
    _, _, vt = np.linalg.svd(np.vstack(noise), full_matrices=False)
    truth = {"directions": np.column_stack([v_ind, v4]), "n_joint": n_joint, "noise_direction": vt[0]}
    return SimData(ds, signal, noise, truth)


def gen_sim3(snr, seed=None, size=30, ones=3, components=2):
    """One ``size`` x ``size`` matrix: sum of u_c v_c' with 0/1 loadings plus noise."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    rng = np.random.default_rng(seed)
    U = np.zeros((size, components))
    V = np.zeros((size, components))
    for c in range(components):
        U[rng.choice(size, ones, replace=False), c] = 1.0
        V[rng.choice(size, ones, replace=False), c] = 1.0
    s = U @ V.T
    e = rng.standard_normal((size, size))
    e = _noise_factor(s, e, snr) * e
    ds = Dataset.from_arrays((size, size), {(0, 1): s + e}, names=("rows", "columns"))
    return SimData(ds, [s], [e], {"loadings": [U, V]})


def structure_rmse(estimated, truth, binarize=False):
    """RMSE between augmented D matrices, up to row order, sign and scale.

    Zero rows of the estimate are dropped and the shorter matrix is padded
    with zero rows. Rows are scaled to unit norm and the best row matching
    and signs are used. With ``binarize`` only the zero patterns are
    compared, so the result is 0 exactly when the estimate has the true
    zero structure.
    """
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.ndim != 2 or tru.ndim != 2 or est.shape[1] != tru.shape[1]:
        raise ValueError("both matrices need the same number of views")
    est = est[np.any(est != 0, axis=1)]
    if binarize:
        est = (est != 0).astype(float)
        tru = (tru != 0).astype(float)

    def unit_rows(a):
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        return np.divide(a, norms, out=np.zeros_like(a), where=norms > 0)

    est, tru = unit_rows(est), unit_rows(tru)
    rows = max(len(est), len(tru))
    est = np.vstack([est, np.zeros((rows - len(est), est.shape[1]))])
    tru = np.vstack([tru, np.zeros((rows - len(tru), tru.shape[1]))])
    # cost of pairing estimate row r with truth row t, best sign
    cost = np.empty((rows, rows))
    for r in range(rows):
        for t in range(rows):
            cost[r, t] = min(np.sum((est[r] - tru[t]) ** 2), np.sum((est[r] + tru[t]) ** 2))
    ri, ci = linear_sum_assignment(cost)
    return float(np.sqrt(cost[ri, ci].sum() / tru.size))


def angular_distance(a, b):
    """Angle between the lines spanned by ``a`` and ``b``, in [0, pi/2]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cos = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(min(1.0, cos)))


def joint_direction_accuracy(estimate, directions, noise_direction):
    """True when ``estimate`` is closer to the joint direction than to any rival.

    ``directions`` holds the individual directions followed by the joint
    one as columns.
    """
    directions = np.asarray(directions, dtype=float)
    target = angular_distance(estimate, directions[:, -1])
    rivals = [angular_distance(estimate, directions[:, c]) for c in range(directions.shape[1] - 1)]
    rivals.append(angular_distance(estimate, noise_direction))
    return bool(all(target < r for r in rivals))


def matthews(truth, predicted):
    """Matthews correlation of two boolean arrays.

    Returns ``(mcc, degenerate)``; a zero denominator gives mcc = 0 with
    ``degenerate`` True.
    """
    t = np.asarray(truth, dtype=bool).ravel()
    p = np.asarray(predicted, dtype=bool).ravel()
    tp = float(np.sum(t & p))
    tn = float(np.sum(~t & ~p))
    fp = float(np.sum(~t & p))
    fn = float(np.sum(t & ~p))
    den = math.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    if den == 0:
        return 0.0, True
    return (tp * tn - fp * fn) / den, False


def loading_mcc(estimated, truth):
    """MCC of loading supports after matching components.

    ``estimated`` and ``truth`` are lists (one entry per view) of p x k
    arrays. Estimated components are matched to true ones by maximal
    support agreement summed over views; unmatched true components are
    compared against an empty support.
    """
    est = [np.asarray(e) != 0 for e in estimated]
    tru = [np.asarray(t) != 0 for t in truth]
    k_true = tru[0].shape[1]
    k_est = est[0].shape[1]
    width = max(k_true, k_est)

    def pad(a):
        return np.hstack([a, np.zeros((a.shape[0], width - a.shape[1]), dtype=bool)])

    est = [pad(e) for e in est]
    tru = [pad(t) for t in tru]
    agree = np.zeros((width, width))
    for e, t in zip(est, tru):
        agree += (e[:, :, None] == t[:, None, :]).sum(axis=0)
    ri, ci = linear_sum_assignment(-agree)
    perm = np.empty(width, dtype=int)
    perm[ci] = ri
    pred = np.concatenate([e[:, perm[:k_true]].ravel() for e in est])
    target = np.concatenate([t[:, :k_true].ravel() for t in tru])
    return matthews(target, pred)[0]


@dataclass(frozen=True)
class SimSpec:
    """One simulation study.

    ``levels`` are SNR values for studies 1 and 3 and joint proportions for
    study 2; ``n`` and ``p`` are used by study 2 only.
    """

    study: int
    levels: tuple
    runs: int = 100
    seed: int = 0
    n: int = 100
    p: int = 25

    def __post_init__(self):
        if self.study not in (1, 2, 3):
            raise ValueError("study must be 1, 2 or 3")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if not self.levels:
            raise ValueError("at least one level is required")
        for v in self.levels:
            if self.study == 2 and not 0.0 <= v <= 1.0:
                raise ValueError("joint proportions must lie in [0, 1]")
            if self.study != 2 and not v > 0:
                raise ValueError("SNR values must be positive")


DEFAULT_FLAGS = (1, 1, 1, 0)


@dataclass(frozen=True)
class MethodConfig:
    k: int = None
    grid: LambdaGrid = field(default_factory=lambda: LambdaGrid.logspace(math.exp(-8), 1.0, 10, DEFAULT_FLAGS))
    holdout_probability: float = DEFAULT_HOLDOUT
    tau: float = DEFAULT_TAU
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    starts: str = "best"
    jobs: int = 1


DEFAULT_K = {1: 2, 2: 10, 3: 2}

RESULT_COLUMNS = [
    "study", "level", "run", "status", "k", "lambda0", "effective_rank", "iterations", "termination",
    "structure_rmse", "exact_structure", "signal_error",
    "joint_components", "rank_matrix1", "rank_matrix2", "rank_matrix3", "accuracy_mmpca", "accuracy_pca",
    "mcc",
]


def _run_seeds(master, level_index, run):
    data_seq, cv_seq = np.random.SeedSequence([master, level_index, run]).spawn(2)
    return int(data_seq.generate_state(1)[0]), int(cv_seq.generate_state(1)[0])


def _generate(spec, level, seed):
    if spec.study == 1:
        return gen_sim1(level, seed)
    if spec.study == 2:
        return gen_sim2(spec.n, spec.p, level, seed)
    return gen_sim3(level, seed)


def _score(spec, sim, sol):
    row = {}
    D = sol.augmented_d
    if spec.study == 1:
        row["structure_rmse"] = structure_rmse(D, sim.truth["d_pattern"])
        row["exact_structure"] = structure_rmse(D, sim.truth["d_pattern"], binarize=True) == 0.0
        num = sum(np.sum((impute(sol, (i, 4)) - s) ** 2) for i, s in enumerate(sim.signal))
        row["signal_error"] = float(num / sum(np.sum(s ** 2) for s in sim.signal))
    elif spec.study == 2:
        joint = joint_components(sol)
        row["joint_components"] = len(joint)
        for i in range(3):
            row[f"rank_matrix{i + 1}"] = matrix_rank(sol, (i, 3))
        if len(joint):
            order = [c for c in component_order(sol) if c in set(joint)]
            estimate = sol.loadings[3][:, order[0]]
        else:
            resid = np.vstack([m.values - impute(sol, (i, 3)) for i, m in enumerate(sim.dataset)])
            estimate = np.linalg.svd(resid, full_matrices=False)[2][0]
        dirs, noise_dir = sim.truth["directions"], sim.truth["noise_direction"]
        row["accuracy_mmpca"] = joint_direction_accuracy(estimate, dirs, noise_dir)
        pca = np.linalg.svd(np.vstack([m.values for m in sim.dataset]), full_matrices=False)[2][0]
        row["accuracy_pca"] = joint_direction_accuracy(pca, dirs, noise_dir)
    else:
        row["mcc"] = loading_mcc(sol.sparse_loadings, sim.truth["loadings"])
    return row


def generate_run(spec, level_index, run):
    """The simulated data of one replicate, as used by :func:`run_one`."""
    data_seed, _ = _run_seeds(spec.seed, level_index, run)
    return _generate(spec, spec.levels[level_index], data_seed)


def run_one(spec, method, level_index, run):
    """Generate, fit (with cross-validation) and score one replicate."""
    level = spec.levels[level_index]
    _, cv_seed = _run_seeds(spec.seed, level_index, run)
    sim = generate_run(spec, level_index, run)
    k = method.k or DEFAULT_K[spec.study]
    row = dict.fromkeys(RESULT_COLUMNS)
    row.update(study=spec.study, level=level, run=run, k=k)
    try:
        cv = cross_validate(sim.dataset, k, method.grid, method.holdout_probability, cv_seed, method.optimizer,
                            tau=method.tau, zero_threshold=method.zero_threshold, starts=method.starts)
    except CvFailure:
        row["status"] = "failed"
        return row
    sol = cv.solution
    chosen = cv.chosen_lambdas
    row.update(status="ok", lambda0=max(chosen), effective_rank=effective_rank(sol),
               iterations=sol.report.iterations, termination=sol.report.termination)
    if row["effective_rank"] == 0:
        row["status"] = "rank_zero"
    row.update(_score(spec, sim, sol))
    return row


def _run_job(args):
    return run_one(*args)


def run_study(spec, method=None):
    """All replicates of a study, ordered by (level, run).

    Replicates are seeded from (spec.seed, level index, run index), so the
    table does not depend on ``method.jobs``.
    """
    method = method or MethodConfig()
    jobs = [(spec, method, li, r) for li in range(len(spec.levels)) for r in range(spec.runs)]
    if method.jobs > 1:
        with ProcessPoolExecutor(max_workers=method.jobs) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


_METRICS = ["effective_rank", "structure_rmse", "signal_error", "joint_components", "rank_matrix1",
            "rank_matrix2", "rank_matrix3", "accuracy_mmpca", "accuracy_pca", "mcc"]


def aggregate(rows):
    """Median and quartiles of each metric per level over successful runs.

    Runs with status other than "ok" are excluded and counted.
    """
    out = []
    for level in sorted({r["level"] for r in rows}):
        group = [r for r in rows if r["level"] == level]
        ok = [r for r in group if r["status"] == "ok"]
        for stat, q in (("q25", 25), ("median", 50), ("q75", 75)):
            agg = dict.fromkeys(RESULT_COLUMNS)
            agg.update(study=group[0]["study"], level=level, run=stat, status=f"ok={len(ok)}/{len(group)}")
            for col in _METRICS:
                vals = [float(r[col]) for r in ok if r[col] is not None]
                agg[col] = float(np.percentile(vals, q)) if vals else None
            out.append(agg)
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def results_csv(rows, with_aggregate=True):
    """CSV text of per-run rows followed by the aggregate rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    body = list(rows) + (aggregate(rows) if with_aggregate else [])
    for r in body:
        writer.writerow([_fmt(r.get(c)) for c in RESULT_COLUMNS])
    return buf.getvalue()
