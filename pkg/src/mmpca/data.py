"""Augmented multi-view datasets: views, linked matrices, missingness and
normalization.

Views are indexed from 0. A matrix linking views (i, j) has shape
``(dims[i], dims[j])``; rows and columns are treated symmetrically.
Missing entries are stored as 0 in ``values`` with ``mask`` False, so
``mask * values`` is always safe to compute with.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ViewGraph",
    "MaskedMatrix",
    "Dataset",
    "NormalizationPolicy",
    "NormalizationRecord",
    "NormalizationError",
    "SCALINGS",
    "normalize",
    "denormalize",
    "rescale_to_pi2",
    "holdout_split",
]

PI2 = np.pi ** 2
SCALINGS = ("none", "frobenius", "elements", "rows", "columns", "first_pc")


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class ViewGraph:
    """Views and the set of view pairs that carry a data matrix."""

    dims: tuple
    links: tuple
    names: tuple = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        links = tuple((int(i), int(j)) for i, j in self.links)
        names = tuple(self.names) if self.names is not None else tuple(f"view{i}" for i in range(len(dims)))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "names", names)
        if any(d < 1 for d in dims):
            raise ValueError("view dimensions must be positive")
        if len(names) != len(dims):
            raise ValueError("one name per view required")
        if len(set(names)) != len(names):
            raise ValueError("view names must be unique")
        seen = set()
        for i, j in links:
            if not (0 <= i < len(dims) and 0 <= j < len(dims)):
                raise ValueError(f"link {(i, j)} refers to an unknown view")
            if i == j:
                raise ValueError(f"link {(i, j)} joins a view to itself")
            if (i, j) in seen:
                raise ValueError(f"link {(i, j)} appears twice")
            seen.add((i, j))
        if links and not self.is_connected():
            warnings.warn("view graph is not connected; the integration decomposes into independent parts",
                          stacklevel=3)

    @property
    def n_views(self):
        return len(self.dims)

    @property
    def n_matrices(self):
        return len(self.links)

    def is_connected(self):
        if not self.dims:
            return True
        adj = {v: set() for v in range(self.n_views)}
        for i, j in self.links:
            adj[i].add(j)
            adj[j].add(i)
        used = {v for link in self.links for v in link}
        if not used:
            return True
        start = next(iter(used))
        stack, reached = [start], {start}
        while stack:
            v = stack.pop()
            for w in adj[v] - reached:
                reached.add(w)
                stack.append(w)
        return reached == set(range(self.n_views))

    def index(self, name_or_index):
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.n_views:
                raise KeyError(f"unknown view index {name_or_index}")
            return int(name_or_index)
        try:
            return self.names.index(name_or_index)
        except ValueError:
            raise KeyError(f"unknown view {name_or_index!r}") from None


@dataclass(frozen=True)
class MaskedMatrix:
    """One observed block X_ij together with its observation mask."""

    row_view: int
    col_view: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ValueError("values and mask must be 2-d arrays of equal shape")
        if not mask.any():
            raise ValueError(f"matrix ({self.row_view}, {self.col_view}) has no observed elements")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError(f"matrix ({self.row_view}, {self.col_view}) has non-finite observed values")
        values[~mask] = 0.0
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_array(cls, row_view, col_view, x):
        """Build from an array where NaN marks a missing element."""
        x = np.asarray(x, dtype=float)
        return cls(row_view, col_view, np.nan_to_num(x, nan=0.0), ~np.isnan(x))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_observed(self):
        return int(self.mask.sum())

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def to_array(self):
        """Values with NaN at missing positions."""
        out = self.values.copy()
        out[~self.mask] = np.nan
        return out

    def with_values(self, values, mask=None):
        return MaskedMatrix(self.row_view, self.col_view, values, self.mask if mask is None else mask)


@dataclass(frozen=True)
class Dataset:
    views: ViewGraph
    matrices: tuple

    def __post_init__(self):
        matrices = tuple(self.matrices)
        object.__setattr__(self, "matrices", matrices)
        links = tuple((m.row_view, m.col_view) for m in matrices)
        if links != self.views.links:
            raise ValueError("matrices do not match the links of the view graph")
        for m in matrices:
            expected = (self.views.dims[m.row_view], self.views.dims[m.col_view])
            if m.shape != expected:
                raise ValueError(f"matrix ({m.row_view}, {m.col_view}) has shape {m.shape}, expected {expected}")

    @classmethod
    def from_arrays(cls, dims, blocks, names=None):
        """``blocks`` maps (row_view, col_view) to an array (NaN = missing)."""
        mats = [MaskedMatrix.from_array(i, j, x) for (i, j), x in blocks.items()]
        views = ViewGraph(dims, [(m.row_view, m.col_view) for m in mats], names)
        return cls(views, mats)

    @property
    def links(self):
        return self.views.links

    @property
    def dims(self):
        return self.views.dims

    @property
    def n_views(self):
        return self.views.n_views

    def __len__(self):
        return len(self.matrices)

    def __iter__(self):
        return iter(self.matrices)

    def __getitem__(self, idx):
        return self.matrices[idx]

    def replace(self, matrices):
        return Dataset(self.views, matrices)

    def scaled(self, factor):
        return self.replace([m.with_values(m.values * factor) for m in self.matrices])

    def max_singular_value(self):
        return max(np.linalg.norm(m.values, 2) for m in self.matrices)

    def mean_frobenius_norm(self):
        return float(np.mean([m.frobenius_norm() for m in self.matrices]))


@dataclass(frozen=True)
class NormalizationPolicy:
    """Centering and matrix-wise scaling options.

    ``scaling`` is one of :data:`SCALINGS`; ``per_matrix`` may override it
    for individual matrices (by position in the dataset).
    """

    center_rows: bool = True
    center_columns: bool = True
    scaling: str = "none"
    per_matrix: dict = field(default_factory=dict)
    rescale: bool = True

    def __post_init__(self):
        for s in (self.scaling, *self.per_matrix.values()):
            if s not in SCALINGS:
                raise ValueError(f"unknown scaling {s!r}; choose from {SCALINGS}")

    def scaling_for(self, index):
        return self.per_matrix.get(index, self.scaling)


@dataclass
class NormalizationRecord:
    """Everything needed to undo :func:`normalize`.

    normalized = (x - row_mean - col_mean) * matrix_scale * global_scale
    """

    global_scale: float
    matrix_scales: list
    row_means: list
    col_means: list

    def to_dict(self):
        return {
            "global_scale": self.global_scale,
            "matrix_scales": list(self.matrix_scales),
            "row_means": [np.asarray(r).tolist() for r in self.row_means],
            "col_means": [np.asarray(c).tolist() for c in self.col_means],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["global_scale"]),
            [float(s) for s in d["matrix_scales"]],
            [np.asarray(r, dtype=float) for r in d["row_means"]],
            [np.asarray(c, dtype=float) for c in d["col_means"]],
        )

    @classmethod
    def identity(cls, dataset):
        return cls(1.0, [1.0] * len(dataset),
                   [np.zeros(m.shape[0]) for m in dataset],
                   [np.zeros(m.shape[1]) for m in dataset])

    def total_scale(self, index):
        return self.matrix_scales[index] * self.global_scale

    def invert(self, index, values):
        """Map a normalized-scale block of matrix ``index`` back to data scale."""
        values = np.asarray(values, dtype=float)
        out = values / self.total_scale(index)
        return out + self.row_means[index][:, None] + self.col_means[index][None, :]


def _observed_mean(values, mask, axis, where):
    counts = mask.sum(axis=axis)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        kind = "row" if axis == 1 else "column"
        raise NormalizationError(f"{where}: {kind} {int(empty[0])} has no observed elements; centering undefined")
    return (values * mask).sum(axis=axis) / counts


def _matrix_scale(values, mask, scaling):
    x = values * mask
    sq = float(np.sum(x ** 2))
    if scaling == "none" or sq == 0.0:
        return 1.0
    if scaling == "frobenius":
        target = 1.0
    elif scaling == "elements":
        target = float(mask.sum())
    elif scaling == "rows":
        target = float(x.shape[0])
    elif scaling == "columns":
        target = float(x.shape[1])
    elif scaling == "first_pc":
        return 1.0 / float(np.linalg.norm(x, 2))
    return float(np.sqrt(target / sq))


def normalize(dataset, policy=None):
    """Center, scale and globally rescale a dataset.

    Rows are centered first and then columns (one pass each), using means
    over observed elements. Each matrix is then scaled according to the
    policy, and finally all matrices are multiplied by one global factor
    so the largest singular value among them is pi**2.

    Returns
    -------
    (Dataset, NormalizationRecord)
    """
    policy = policy or NormalizationPolicy()
    out, row_means, col_means, scales = [], [], [], []
    for idx, m in enumerate(dataset):
        where = f"matrix {idx} ({dataset.views.names[m.row_view]} x {dataset.views.names[m.col_view]})"
        x = m.values.copy()
        r = np.zeros(m.shape[0])
        c = np.zeros(m.shape[1])
        if policy.center_rows:
            r = _observed_mean(x, m.mask, 1, where)
            x = (x - r[:, None]) * m.mask
        if policy.center_columns:
            c = _observed_mean(x, m.mask, 0, where)
            x = (x - c[None, :]) * m.mask
        s = _matrix_scale(x, m.mask, policy.scaling_for(idx))
        out.append(m.with_values(x * s))
        row_means.append(r)
        col_means.append(c)
        scales.append(s)
    normalized = dataset.replace(out)
    g = 1.0
    if policy.rescale:
        normalized, g = rescale_to_pi2(normalized)
    return normalized, NormalizationRecord(g, scales, row_means, col_means)


def rescale_to_pi2(dataset):
    """Scale all matrices by one factor so the largest singular value is pi**2."""
    top = dataset.max_singular_value()
    if top == 0.0:
        return dataset, 1.0
    g = PI2 / top
    return dataset.scaled(g), g


def denormalize(dataset, record):
    """Inverse of :func:`normalize` on observed elements."""
    return dataset.replace([m.with_values(record.invert(idx, m.values)) for idx, m in enumerate(dataset)])


def holdout_split(dataset, probability, seed=None, max_tries=100):
    """Assign observed elements to a test set independently with ``probability``.

    Returns the training dataset, where test elements are marked missing,
    and one boolean test mask per matrix. Elements missing in the input
    never enter the test set. A draw that would leave a matrix with no
    training elements is redrawn for that matrix.
    """
    if not 0.0 <= probability < 1.0:
        raise ValueError("probability must be in [0, 1)")
    rng = np.random.default_rng(seed)
    train, tests = [], []
    for idx, m in enumerate(dataset):
        for _ in range(max_tries):
            test = (rng.random(m.shape) < probability) & m.mask
            if (m.mask & ~test).any():
                break
        else:
            raise ValueError(f"matrix {idx}: every draw removed all observed elements")
        train.append(m.with_values(m.values, m.mask & ~test))
        tests.append(test)
    return dataset.replace(train), tests
