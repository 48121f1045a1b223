"""Interpretation of a fitted model: augmented D structure, explained
variation, bi-clusters, effective rank and imputation."""
from dataclasses import dataclass, field

import numpy as np

from .data import NormalizationRecord, ViewGraph
from .objective import ModelParams, Penalties, reconstruct
from .optimizer import OptimizerReport

__all__ = [
    "Solution",
    "Bicluster",
    "DEFAULT_ZERO_THRESHOLD",
    "component_importance",
    "component_order",
    "r2_matrix",
    "r2_table",
    "directed_r2",
    "directed_r2_matrix",
    "effective_rank",
    "matrix_rank",
    "joint_components",
    "bicluster",
    "impute",
]

DEFAULT_ZERO_THRESHOLD = 1e-3


@dataclass
class Solution:
    """A fitted model together with everything needed to interpret it.

    ``params`` is expressed in the scale of the data passed to the fit.
    ``fit_scale`` is the global factor the optimizer worked under; exact
    zeros are decided in that scale, where entries of D and of V_i D_i with
    magnitude below ``zero_threshold`` are set to zero.
    """

    views: ViewGraph
    params: ModelParams
    penalties: Penalties = field(default_factory=Penalties)
    data_sq_norms: list = None
    fit_scale: float = 1.0
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD
    report: OptimizerReport = None
    normalization: NormalizationRecord = None

    def __post_init__(self):
        if self.data_sq_norms is None:
            self.data_sq_norms = [np.nan] * len(self.views.links)
        root = np.sqrt(self.fit_scale)
        d_fit = self.params.d * root
        snapped = np.where(np.abs(d_fit) < self.zero_threshold, 0.0, d_fit)
        self.augmented_d = snapped / root
        self.loadings = self.params.frames()
        self.sparse_loadings = []
        for i, V in enumerate(self.loadings):
            vd = V * snapped[:, i]
            vd[np.abs(vd) < self.zero_threshold] = 0.0
            self.sparse_loadings.append(vd / root)

    @property
    def k(self):
        return self.params.k

    @property
    def links(self):
        return self.views.links

    def link_index(self, pair):
        i, j = (self.views.index(v) for v in pair)
        try:
            return self.views.links.index((i, j))
        except ValueError:
            raise KeyError(f"no data matrix links views {pair}") from None

    def to_dict(self):
        return {
            "views": {"names": list(self.views.names), "dims": list(self.views.dims),
                      "links": [list(l) for l in self.views.links]},
            "k": self.k,
            "xi": [x.tolist() for x in self.params.xi],
            "d": self.params.d.tolist(),
            "lambdas": list(self.penalties.lambdas),
            "tau": self.penalties.tau,
            "data_sq_norms": [float(v) for v in self.data_sq_norms],
            "fit_scale": self.fit_scale,
            "zero_threshold": self.zero_threshold,
            "report": None if self.report is None else self.report.to_dict(),
            "normalization": None if self.normalization is None else self.normalization.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        v = d["views"]
        views = ViewGraph(v["dims"], [tuple(l) for l in v["links"]], v["names"])
        return cls(
            views,
            ModelParams([np.asarray(x, dtype=float).reshape(p, d["k"]) for x, p in zip(d["xi"], v["dims"])],
                        np.asarray(d["d"], dtype=float).reshape(d["k"], len(v["dims"]))),
            Penalties(tuple(d["lambdas"]), d["tau"]),
            list(d["data_sq_norms"]),
            d["fit_scale"],
            d["zero_threshold"],
            None if d.get("report") is None else OptimizerReport.from_dict(d["report"]),
            None if d.get("normalization") is None else NormalizationRecord.from_dict(d["normalization"]),
        )


def component_importance(solution):
    """Explained variation of each component summed over all matrices."""
    D2 = solution.augmented_d ** 2
    return np.array([sum(D2[c, i] * D2[c, j] for i, j in solution.links) for c in range(solution.k)])


def component_order(solution):
    """Components by decreasing importance (stable for ties)."""
    return np.argsort(-component_importance(solution), kind="stable")


def r2_matrix(solution, pair):
    """Per-component and total R^2 of the matrix linking ``pair``.

    Returns
    -------
    per_component : ndarray, shape (k,)
    total : float
    """
    l = solution.link_index(pair)
    i, j = solution.links[l]
    norm2 = solution.data_sq_norms[l]
    if not norm2 > 0:
        raise ValueError(f"matrix {pair} has zero norm; R^2 undefined")
    D = solution.augmented_d
    per = D[:, i] ** 2 * D[:, j] ** 2 / norm2
    return per, float(per.sum())


def r2_table(solution):
    """Rows of (row view, column view, total R^2, per-component R^2)."""
    rows = []
    for i, j in solution.links:
        per, total = r2_matrix(solution, (i, j))
        rows.append((solution.views.names[i], solution.views.names[j], total, per))
    return rows


def directed_r2(solution, target, source):
    """Share of the target matrix explained by components active in the source."""
    per, _ = r2_matrix(solution, target)
    i, j = solution.links[solution.link_index(source)]
    D = solution.augmented_d
    active = D[:, i] * D[:, j] != 0
    return float(per[active].sum())


def directed_r2_matrix(solution):
    """Entry (t, s) is the directed R^2 of matrix t given matrix s."""
    links = solution.links
    out = np.zeros((len(links), len(links)))
    for t, tgt in enumerate(links):
        for s, src in enumerate(links):
            out[t, s] = directed_r2(solution, tgt, src)
    return out


def effective_rank(solution_or_d):
    D = solution_or_d.augmented_d if isinstance(solution_or_d, Solution) else np.asarray(solution_or_d)
    return int(np.sum(np.any(np.abs(D) > 0, axis=1)))


def matrix_rank(solution, pair):
    """Number of components active in the matrix linking ``pair``."""
    i, j = solution.links[solution.link_index(pair)]
    D = solution.augmented_d
    return int(np.sum(D[:, i] * D[:, j] != 0))


def joint_components(solution, views=None):
    """Components that are nonzero in every one of ``views`` (default: all linked views)."""
    if views is None:
        views = sorted({v for link in solution.links for v in link})
    else:
        views = [solution.views.index(v) for v in views]
    D = solution.augmented_d
    return np.flatnonzero(np.all(D[:, views] != 0, axis=1))


_SIGN_RANK = {1: 0, 0: 1, -1: 2}


@dataclass
class Bicluster:
    """Sign-based hierarchical clustering of the items of one view.

    ``labels[r, c]`` is the sign (+1, 0, -1) of item r on the c-th used
    component; ``clusters[c]`` holds cluster ids after cutting the ternary
    tree at depth c+1, numbered in the order of ``order``.
    """

    view: str
    components: np.ndarray
    labels: np.ndarray
    order: np.ndarray
    clusters: list

    def paths(self):
        return [tuple(int(s) for s in row) for row in self.labels]

    def tree(self):
        """Nested dict keyed by sign, leaves are lists of item indices."""
        root = {}
        for r in self.order:
            node = root
            path = tuple(int(s) for s in self.labels[r])
            for s in path[:-1]:
                node = node.setdefault(s, {})
            node.setdefault(path[-1], []).append(int(r))
        return root

    def to_dict(self):
        return {
            "view": self.view,
            "components": self.components.tolist(),
            "labels": self.labels.tolist(),
            "order": self.order.tolist(),
            "clusters": [c.tolist() for c in self.clusters],
        }


def bicluster(solution, views=None, depth=1):
    """Partition the items of each view by the signs of their sparse loadings.

    Components are taken in decreasing importance. Items sharing the same
    sign path over the first ``depth`` components end up in the same leaf
    and are contiguous in ``order`` (+ before 0 before -).

    Returns
    -------
    dict mapping view name to :class:`Bicluster`
    """
    n_active = effective_rank(solution)
    if depth < 1 or depth > n_active:
        raise ValueError(f"depth must be between 1 and the effective rank ({n_active})")
    comps = component_order(solution)[:depth]
    names = solution.views.names
    views = range(len(names)) if views is None else [solution.views.index(v) for v in views]
    out = {}
    for v in views:
        labels = np.sign(solution.sparse_loadings[v][:, comps]).astype(int)
        keys = [tuple(_SIGN_RANK[s] for s in row) for row in labels]
        order = np.array(sorted(range(len(keys)), key=lambda r: keys[r]), dtype=int)
        clusters = []
        for c in range(1, depth + 1):
            ids = np.empty(len(keys), dtype=int)
            seen = {}
            for r in order:
                ids[r] = seen.setdefault(keys[r][:c], len(seen))
            clusters.append(ids)
        out[names[v]] = Bicluster(names[v], comps.copy(), labels, order, clusters)
    return out


def impute(solution, pair, denormalize=False):
    """Model prediction V_i D_i D_j V_j' for any pair of views.

    With ``denormalize`` the prediction is mapped back through the
    normalization record: fully (means and scales) when the pair, or its
    transpose, is a fitted matrix, otherwise by the global scale only.
    """
    i, j = (solution.views.index(v) for v in pair)
    xhat = reconstruct(solution.loadings, solution.params.d, i, j)
    if not denormalize or solution.normalization is None:
        return xhat
    rec = solution.normalization
    links = solution.links
    if (i, j) in links:
        return rec.invert(links.index((i, j)), xhat)
    if (j, i) in links:
        return rec.invert(links.index((j, i)), xhat.T).T
    return xhat / rec.global_scale
