"""Reading manifests and CSV matrices, writing result bundles.

A manifest is a JSON object::

    {
      "views": [{"name": "cohort", "dim": 96}, {"name": "genes", "dim": 297}],
      "matrices": [{"row_view": "cohort", "col_view": "genes", "path": "expr.csv",
                    "header": false, "scaling": "frobenius"}],
      "normalization": {"center_rows": true, "center_columns": true,
                        "scaling": "none", "rescale": true},
      "header": false,
      "options": {"k_max": 5, "zero_threshold": 0.001}
    }

Paths are relative to the manifest. ``header`` may be given per matrix or
for all matrices; when absent it is detected from the first row. Empty
cells (and ``NA``/``NaN``) are missing elements. ``options`` holds
defaults for command-line flags.

All writers produce byte-identical files for identical inputs: floats are
written with ``repr`` and JSON keys are sorted.
"""
import csv
import json
import math
from pathlib import Path

import numpy as np

from .analysis import Solution, bicluster, directed_r2_matrix, effective_rank, r2_table
from .data import SCALINGS, Dataset, MaskedMatrix, NormalizationPolicy, NormalizationRecord, ViewGraph

__all__ = [
    "InputError",
    "Manifest",
    "load_manifest",
    "read_matrix_csv",
    "write_matrix_csv",
    "write_json",
    "write_table",
    "write_bundle",
    "load_bundle",
    "format_float",
]

_MISSING = {"", "na", "nan", "null"}


class InputError(ValueError):
    """Malformed input, with the offending file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


def format_float(x):
    """Shortest round-trip text of a float; NaN becomes an empty cell."""
    x = float(x)
    if math.isnan(x):
        return ""
    if x == 0.0:
        return "0.0"
    return repr(x)


def _parse_cell(text):
    t = text.strip()
    if t.lower() in _MISSING:
        return math.nan
    return float(t)


def _looks_numeric(row):
    try:
        for cell in row:
            _parse_cell(cell)
    except ValueError:
        return False
    return True


def read_matrix_csv(path, header=None, shape=None):
    """Read a numeric CSV matrix; missing cells become NaN.

    Parameters
    ----------
    path : str or Path
    header : bool, optional
        Whether the first row is a header. Detected when None: a first row
        with any non-numeric cell is a header.
    shape : tuple of int, optional
        Expected shape; a mismatch raises :class:`InputError`.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read file ({exc.strerror or exc})", path) from None
    numbered = [(n, row) for n, row in enumerate(rows, start=1) if row and any(c.strip() for c in row)]
    if not numbered:
        raise InputError("file has no data rows", path)
    if header is None:
        header = not _looks_numeric(numbered[0][1])
    if header:
        numbered = numbered[1:]
    if not numbered:
        raise InputError("file has a header but no data rows", path)
    width = len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for r, (line, row) in enumerate(numbered):
        if len(row) != width:
            raise InputError(f"expected {width} fields, found {len(row)}", path, line)
        for c, cell in enumerate(row):
            try:
                out[r, c] = _parse_cell(cell)
            except ValueError:
                raise InputError(f"column {c + 1}: not a number: {cell!r}", path, line) from None
    if not np.all(np.isfinite(out) | np.isnan(out)):
        bad = np.argwhere(np.isinf(out))[0]
        raise InputError(f"column {bad[1] + 1}: infinite value", path, numbered[bad[0]][0])
    if shape is not None and out.shape != tuple(shape):
        raise InputError(f"matrix has shape {out.shape[0]}x{out.shape[1]}, expected {shape[0]}x{shape[1]}", path)
    return out


def write_matrix_csv(path, array, header=None, index=None):
    """Write a 2-D array as CSV; NaN is written as an empty cell.

    ``index`` adds a first column of row labels.
    """
    array = np.atleast_2d(np.asarray(array, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(([""] if index is not None else []) + list(header))
        for r, row in enumerate(array):
            cells = [format_float(v) for v in row]
            w.writerow(([index[r]] if index is not None else []) + cells)


def write_table(path, rows, columns):
    """Write a list of dicts as CSV with the given column order."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([cell(row.get(c)) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else x
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


class Manifest:
    """A parsed manifest: the raw dataset, its normalization policy and
    option defaults."""

    def __init__(self, dataset, policy, options, path):
        self.dataset = dataset
        self.policy = policy
        self.options = options
        self.path = path


def _require(obj, key, kind, path, where):
    if not isinstance(obj, dict) or key not in obj:
        raise InputError(f"{where}: missing field {key!r}", path)
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise InputError(f"{where}: field {key!r} must be an integer", path)
    if kind is str and not isinstance(value, str):
        raise InputError(f"{where}: field {key!r} must be a string", path)
    return value


def load_manifest(path):
    """Parse a manifest and read every matrix it lists.

    Raises
    ------
    InputError
        For malformed JSON, unknown views, missing files, bad CSV content or
        shapes that disagree with the declared view dimensions.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read manifest ({exc.strerror or exc})", path) from None
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(spec, dict):
        raise InputError("manifest must be a JSON object", path)
    views = spec.get("views")
    if not isinstance(views, list) or not views:
        raise InputError("'views' must be a non-empty list", path)
    names, dims = [], []
    for n, v in enumerate(views):
        names.append(_require(v, "name", str, path, f"views[{n}]"))
        dim = _require(v, "dim", int, path, f"views[{n}]")
        if dim < 1:
            raise InputError(f"views[{n}]: dim must be positive", path)
        dims.append(dim)
    if len(set(names)) != len(names):
        raise InputError("view names must be unique", path)
    entries = spec.get("matrices")
    if not isinstance(entries, list) or not entries:
        raise InputError("'matrices' must be a non-empty list", path)
    default_header = spec.get("header")
    links, matrices, per_matrix = [], [], {}
    for n, e in enumerate(entries):
        where = f"matrices[{n}]"
        pair = []
        for key in ("row_view", "col_view"):
            name = _require(e, key, str, path, where)
            if name not in names:
                raise InputError(f"{where}: unknown view {name!r}", path)
            pair.append(names.index(name))
        i, j = pair
        file = path.parent / _require(e, "path", str, path, where)
        if not file.exists():
            raise InputError(f"{where}: data file not found: {file}", path)
        x = read_matrix_csv(file, e.get("header", default_header), (dims[i], dims[j]))
        if "scaling" in e:
            if e["scaling"] not in SCALINGS:
                raise InputError(f"{where}: unknown scaling {e['scaling']!r}; choose from {SCALINGS}", path)
            per_matrix[n] = e["scaling"]
        links.append((i, j))
        matrices.append(MaskedMatrix.from_array(i, j, x))
    try:
        graph = ViewGraph(tuple(dims), tuple(links), tuple(names))
    except ValueError as exc:
        raise InputError(str(exc), path) from None
    norm = spec.get("normalization", {})
    if not isinstance(norm, dict):
        raise InputError("'normalization' must be an object", path)
    allowed = {"center_rows", "center_columns", "scaling", "rescale"}
    unknown = set(norm) - allowed
    if unknown:
        raise InputError(f"normalization: unknown fields {sorted(unknown)}", path)
    try:
        policy = NormalizationPolicy(per_matrix=per_matrix, **norm)
    except (TypeError, ValueError) as exc:
        raise InputError(f"normalization: {exc}", path) from None
    options = spec.get("options", {})
    if not isinstance(options, dict):
        raise InputError("'options' must be an object", path)
    return Manifest(Dataset(graph, tuple(matrices)), policy, options, path)


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def write_bundle(outdir, solution, edge_threshold=0.0, depth=1, extra=None):
    """Write every artifact describing ``solution`` to ``outdir``.

    Files: ``solution.json`` (parameters and metadata, enough to reload),
    ``D.csv`` (augmented D after snapping), ``loadings_<view>.csv``
    (snapped V_i D_i), ``r2.csv``, ``directed_r2.csv``,
    ``directed_r2_edges.csv`` (off-diagonal entries at or above
    ``edge_threshold``), ``biclusters.json``, ``optimizer_report.json`` and
    ``normalization.json``.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    names = solution.views.names
    comps = [f"component_{c + 1}" for c in range(solution.k)]
    doc = solution.to_dict()
    if extra:
        doc["extra"] = extra
    write_json(out / "solution.json", doc)
    write_matrix_csv(out / "D.csv", solution.augmented_d, header=names, index=comps)
    for name, L in zip(names, solution.sparse_loadings):
        write_matrix_csv(out / f"loadings_{_safe(name)}.csv", L, header=comps)
    rows = []
    for rv, cv, total, per in r2_table(solution):
        row = {"row_view": rv, "col_view": cv, "r2_total": total}
        row.update({f"r2_{c}": v for c, v in zip(comps, per)})
        rows.append(row)
    write_table(out / "r2.csv", rows, ["row_view", "col_view", "r2_total"] + [f"r2_{c}" for c in comps])
    labels = [f"{names[i]}:{names[j]}" for i, j in solution.links]
    directed = directed_r2_matrix(solution)
    write_matrix_csv(out / "directed_r2.csv", directed, header=labels, index=labels)
    edges = [{"target": labels[t], "source": labels[s], "directed_r2": directed[t, s]}
             for t in range(len(labels)) for s in range(len(labels))
             if t != s and directed[t, s] >= edge_threshold and directed[t, s] > 0]
    write_table(out / "directed_r2_edges.csv", edges, ["target", "source", "directed_r2"])
    rank = effective_rank(solution)
    clusters = {}
    if rank > 0:
        clusters = {k: v.to_dict() for k, v in bicluster(solution, depth=min(depth, rank)).items()}
    write_json(out / "biclusters.json", clusters)
    write_json(out / "optimizer_report.json", None if solution.report is None else solution.report.to_dict())
    rec = solution.normalization
    if rec is None:
        dims = solution.views.dims
        rec = NormalizationRecord(1.0, [1.0] * len(solution.links),
                                  [np.zeros(dims[i]) for i, _ in solution.links],
                                  [np.zeros(dims[j]) for _, j in solution.links])
    write_json(out / "normalization.json", rec.to_dict())
    return out


def load_bundle(outdir):
    """Reload the :class:`Solution` written by :func:`write_bundle`."""
    path = Path(outdir) / "solution.json"
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read solution ({exc.strerror or exc})", path) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        return Solution.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"not a valid solution: {exc}", path) from None
