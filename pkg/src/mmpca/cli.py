"""Command-line interface: ``mmpca fit|cv|simulate|impute``.

Exit codes: 0 success, 2 input error, 3 optimization failure, 4 internal
invariant violation. Option values are resolved as command-line flag,
then the manifest's ``options`` object, then the built-in default; the
source of each value is logged to stderr.
"""
import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from .analysis import DEFAULT_ZERO_THRESHOLD, impute
from .data import normalize
from .fitting import fit
from .io import InputError, load_bundle, load_manifest, write_bundle, write_json, write_matrix_csv, write_table
from .kframe import KFrameError
from .optimizer import OptimizationError, OptimizerConfig
from .selection import DEFAULT_HOLDOUT, CvFailure, cross_validate, parse_flags, parse_grid
from .simulation import DEFAULT_FLAGS, DEFAULT_K, MethodConfig, SimSpec, generate_run, results_csv, run_study

__all__ = ["main", "build_parser", "InvariantError"]

log = logging.getLogger("mmpca")

EXIT_OK, EXIT_INPUT, EXIT_OPTIMIZATION, EXIT_INVARIANT = 0, 2, 3, 4

DEFAULT_GRID = "logspace(e^-8,1,10)"
DEFAULT_SIM_LEVELS = {1: "0.5,1,2,4", 2: "0,0.25,0.5,0.75,1", 3: "0.5,1,2,4"}


class InvariantError(RuntimeError):
    """A fitted model violates a structural guarantee."""


def _flags_text(flags):
    return "".join(str(b) for b in flags)


DEFAULTS = {
    "k_max": None,
    "lambda": "0",
    "lambda0_grid": DEFAULT_GRID,
    "penalty_flags": _flags_text(DEFAULT_FLAGS),
    "holdout_prob": DEFAULT_HOLDOUT,
    "seed": 0,
    "jobs": 1,
    "tol_grad": OptimizerConfig.gradient_tolerance,
    "max_iter": OptimizerConfig.max_iterations,
    "zero_threshold": DEFAULT_ZERO_THRESHOLD,
    "directed_r2_edge_threshold": 0.0,
    "bicluster_depth": 1,
    "starts": "best",
}


def _resolve(args, options, name):
    value = getattr(args, name, None)
    source = "flag"
    if value is None and name in options:
        value, source = options[name], "manifest"
    if value is None:
        value, source = DEFAULTS[name], "default"
    log.info("%s = %s (%s)", name, value, source)
    return value


def _add_optimizer_flags(p):
    p.add_argument("--tol-grad", type=float, help="gradient tolerance (max-norm) [1e-6]")
    p.add_argument("--max-iter", type=int, help="maximum quasi-Newton iterations [2000]")


def _add_fit_flags(p):
    p.add_argument("manifest", help="dataset manifest (JSON)")
    p.add_argument("--out", required=True, help="output directory for the solution bundle")
    p.add_argument("--k-max", type=int, help="maximal rank")
    p.add_argument("--penalty-flags", help="active penalties as four binary digits b1b2b3b4 [1110]")
    p.add_argument("--seed", type=int, help="random seed [0]")
    p.add_argument("--zero-threshold", type=float, help="magnitude below which D and V*D entries are zero [1e-3]")
    p.add_argument("--directed-r2-edge-threshold", type=float,
                   help="smallest directed R^2 listed as an edge [0]")
    p.add_argument("--bicluster-depth", type=int, help="number of components used for bi-clustering [1]")
    _add_optimizer_flags(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="mmpca", description="Penalized multi-view matrix factorization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log option resolution and progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at fixed penalty weights")
    _add_fit_flags(p)
    p.add_argument("--lambda", dest="lambda", help="lambda0 (combined with --penalty-flags) or four comma separated "
                                                  "weights l1,l2,l3,l4 [0]")

    p = sub.add_parser("cv", help="choose penalty weights by hold-out cross-validation, then fit")
    _add_fit_flags(p)
    p.add_argument("--lambda0-grid", help=f"grid of lambda0 values [{DEFAULT_GRID}]")
    p.add_argument("--holdout-prob", type=float, help="probability that an element is held out [0.1]")
    p.add_argument("--jobs", type=int, help="parallel candidate fits (with --starts init) [1]")
    p.add_argument("--starts", choices=("init", "warm", "best"), help="starting points of candidate fits [best]")

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("--study", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--levels", help="SNR values (studies 1, 3) or joint proportions (study 2), comma separated")
    p.add_argument("--regimes", default="100x25,10x40", help="study 2 (n)x(p) settings [100x25,10x40]")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--k-max", type=int, help="maximal rank [2, 10, 2 for studies 1, 2, 3]")
    p.add_argument("--lambda0-grid")
    p.add_argument("--penalty-flags")
    p.add_argument("--holdout-prob", type=float)
    p.add_argument("--zero-threshold", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--starts", choices=("init", "warm", "best"))
    p.add_argument("--dump-truth", action="store_true", help="also write the ground truth of every run as JSON")
    p.add_argument("--out", required=True, help="output directory")
    _add_optimizer_flags(p)

    p = sub.add_parser("impute", help="predict a (possibly unobserved) view pair from a bundle")
    p.add_argument("bundle", help="solution bundle directory")
    p.add_argument("--pair", nargs=2, required=True, metavar=("ROW_VIEW", "COL_VIEW"))
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--normalized", action="store_true", help="stay in the normalized scale")
    return parser


def _optimizer(args, options):
    return OptimizerConfig(gradient_tolerance=float(_resolve(args, options, "tol_grad")),
                           max_iterations=int(_resolve(args, options, "max_iter")))


def _lambdas(text, flags):
    parts = [p for p in str(text).split(",") if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise InputError(f"--lambda: not a number list: {text!r}") from None
    if len(values) == 1:
        return tuple(values[0] * b for b in flags)
    if len(values) == 4:
        return tuple(values)
    raise InputError("--lambda takes one lambda0 value or four weights")


def _check_solution(solution):
    """Structural guarantees every fitted model must satisfy."""
    if not np.all(np.isfinite(solution.params.d)):
        raise InvariantError("non-finite entries in D")
    for name, V in zip(solution.views.names, solution.loadings):
        err = float(np.max(np.abs(V.T @ V - np.eye(V.shape[1]))))
        if not err <= 1e-8:
            raise InvariantError(f"loadings of view {name} are not orthonormal (error {err:.2e})")


def _prepare(args):
    manifest = load_manifest(args.manifest)
    options = manifest.options
    k = _resolve(args, options, "k_max")
    if k is None:
        raise InputError("--k-max is required (or options.k_max in the manifest)")
    k = int(k)
    if not 1 <= k <= min(manifest.dataset.dims):
        raise InputError(f"k_max must be between 1 and {min(manifest.dataset.dims)}")
    try:
        flags = parse_flags(str(_resolve(args, options, "penalty_flags")))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    data, record = normalize(manifest.dataset, manifest.policy)
    return manifest, options, k, flags, data, record


def _write(args, options, solution, extra):
    _check_solution(solution)
    write_bundle(args.out, solution,
                 edge_threshold=float(_resolve(args, options, "directed_r2_edge_threshold")),
                 depth=int(_resolve(args, options, "bicluster_depth")), extra=extra)


def cmd_fit(args):
    manifest, options, k, flags, data, record = _prepare(args)
    lambdas = _lambdas(_resolve(args, options, "lambda"), flags)
    seed = int(_resolve(args, options, "seed"))
    threshold = float(_resolve(args, options, "zero_threshold"))
    solution = fit(data, k, lambdas, config=_optimizer(args, options), zero_threshold=threshold,
                   normalization=record)
    _write(args, options, solution, {"command": "fit", "seed": seed})
    return EXIT_OK


def cmd_cv(args):
    manifest, options, k, flags, data, record = _prepare(args)
    try:
        grid = parse_grid(str(_resolve(args, options, "lambda0_grid")), flags)
    except ValueError as exc:
        raise InputError(f"--lambda0-grid: {exc}") from None
    prob = float(_resolve(args, options, "holdout_prob"))
    if not 0.0 < prob < 1.0:
        raise InputError("--holdout-prob must lie in (0, 1)")
    seed = int(_resolve(args, options, "seed"))
    result = cross_validate(data, k, grid, prob, seed, _optimizer(args, options),
                            zero_threshold=float(_resolve(args, options, "zero_threshold")),
                            starts=_resolve(args, options, "starts"), jobs=int(_resolve(args, options, "jobs")),
                            normalization=record)
    _write(args, options, result.solution,
           {"command": "cv", "seed": seed, "chosen_lambdas": list(result.chosen_lambdas)})
    cols = ["candidate", "lambda1", "lambda2", "lambda3", "lambda4", "test_error", "failed", "chosen",
            "iterations", "termination"]
    write_table(Path(args.out) / "cv.csv", result.rows(), cols)
    return EXIT_OK


def _floats(text, what):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise InputError(f"{what}: not a number list: {text!r}") from None


def cmd_simulate(args):
    options = {}
    levels = _floats(args.levels or DEFAULT_SIM_LEVELS[args.study], "--levels")
    flags = parse_flags(str(_resolve(args, options, "penalty_flags")))
    grid = parse_grid(str(_resolve(args, options, "lambda0_grid")), flags)
    method = MethodConfig(
        k=args.k_max or DEFAULT_K[args.study], grid=grid,
        holdout_probability=float(_resolve(args, options, "holdout_prob")),
        zero_threshold=float(_resolve(args, options, "zero_threshold")),
        optimizer=_optimizer(args, options), starts=_resolve(args, options, "starts"),
        jobs=int(_resolve(args, options, "jobs")))
    seed = int(_resolve(args, options, "seed"))
    if args.study == 2:
        regimes = []
        for item in args.regimes.split(","):
            try:
                n, p = (int(v) for v in item.lower().split("x"))
            except ValueError:
                raise InputError(f"--regimes: expected NxP, got {item!r}") from None
            regimes.append((n, p))
    else:
        regimes = [(100, 25)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n, p in regimes:
        try:
            spec = SimSpec(args.study, levels, args.runs, seed, n, p)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if method.k > min(n, p) and args.study == 2:
            raise InputError(f"k_max {method.k} exceeds the smallest view dimension {min(n, p)}")
        suffix = f"_n{n}_p{p}" if args.study == 2 else ""
        rows = run_study(spec, method)
        (out / f"study{args.study}{suffix}.csv").write_text(results_csv(rows))
        if args.dump_truth:
            tdir = out / f"truth{suffix}"
            tdir.mkdir(exist_ok=True)
            for li in range(len(levels)):
                for r in range(args.runs):
                    sim = generate_run(spec, li, r)
                    write_json(tdir / f"level{li}_run{r}.json",
                               {"level": levels[li], "run": r, "truth": sim.truth,
                                "signal": sim.signal})
    return EXIT_OK


def cmd_impute(args):
    solution = load_bundle(args.bundle)
    names = solution.views.names
    for v in args.pair:
        if v not in names:
            raise InputError(f"unknown view {v!r}; known views: {', '.join(names)}")
    xhat = impute(solution, tuple(args.pair), denormalize=not args.normalized)
    write_matrix_csv(args.out, xhat)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "simulate": cmd_simulate, "impute": cmd_impute}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="mmpca: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError) as exc:
        print(f"mmpca: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OptimizationError, CvFailure) as exc:
        print(f"mmpca: optimization failed: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZATION
    except (InvariantError, KFrameError) as exc:
        print(f"mmpca: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception:  # noqa: BLE001 - any other failure is a bug
        traceback.print_exc()
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
