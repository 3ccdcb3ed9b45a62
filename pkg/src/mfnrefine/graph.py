"""Domain types for candidate graphs, edge beliefs and model parameters.

Node features are stored packed, one row of 14 numbers per node::

    [x, y, z, r, vx, vy, vz,  var(x), ..., var(vz)]

Directed candidate pairs ``(k, l)`` with ``l`` in the neighborhood of ``k``
are enumerated once per graph in ascending ``(k, l)`` order; every array of
per-pair quantities (beliefs, potentials, gradients) is aligned to that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

N_MEAN = 7
N_FEATURES = 14
POS = slice(0, 3)
RADIUS = 3
ORIENT = slice(4, 7)

#: Lower/upper clamp applied to every stored belief.
EPS_CLAMP = 1e-7


class GraphError(ValueError):
    """Raised for structurally invalid graphs or mismatched keys."""


@dataclass(frozen=True)
class NodeFeatures:
    """Gaussian summary of one node: 7 means and 7 variances."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if mean.shape != (N_MEAN,) or var.shape != (N_MEAN,):
            raise GraphError("node features need 7 means and 7 variances")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def packed(self) -> np.ndarray:
        return np.concatenate([self.mean, self.var])

    @property
    def position(self) -> np.ndarray:
        return self.mean[POS]

    @property
    def radius(self) -> float:
        return float(self.mean[RADIUS])

    @classmethod
    def from_packed(cls, x) -> "NodeFeatures":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_FEATURES,):
            raise GraphError(f"packed feature vector must have length 14, got {x.shape}")
        return cls(x[:N_MEAN], x[N_MEAN:])


def build_knn_neighborhoods(positions, L: int) -> list[tuple[int, ...]]:
    """Return, for every node, its ``min(L, N-1)`` nearest nodes by position.

    Ties in distance go to the lower node index.  ``positions`` may be an
    ``(N, 3)`` array, an ``(N, 14)`` packed feature array or a sequence of
    :class:`NodeFeatures`.
    """
    pos = _positions(positions)
    n = len(pos)
    if n < 2:
        raise GraphError("empty graph: need at least 2 nodes for neighborhoods")
    if L < 1:
        raise ValueError("L must be >= 1")
    k = min(L, n - 1)
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    # stable sort keeps ascending index order among equal distances
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return [tuple(sorted(int(j) for j in row)) for row in order]


def symmetrize_neighborhoods(neighborhoods: Sequence[Iterable[int]]) -> list[tuple[int, ...]]:
    """Union-symmetrize: if ``l`` is in ``N_k`` then ``k`` is added to ``N_l``."""
    sets = [set(int(j) for j in nb) for nb in neighborhoods]
    for k, nb in enumerate(list(sets)):
        for l in nb:
            sets[l].add(k)
    return [tuple(sorted(s)) for s in sets]


def _positions(nodes) -> np.ndarray:
    if isinstance(nodes, np.ndarray):
        arr = np.asarray(nodes, dtype=float)
        return arr[:, POS] if arr.ndim == 2 and arr.shape[1] >= 3 else arr
    return np.array([nf.position for nf in nodes], dtype=float).reshape(-1, 3)


def _norm_edge(i, j) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True, eq=False)
class CandidateGraph:
    """Over-complete input graph: node features plus directed candidate neighborhoods.

    ``gt_edges`` holds the ground-truth tree as unordered pairs ``(i, j)``
    with ``i < j``; it is empty for unlabelled graphs.
    """

    features: np.ndarray
    neighborhoods: tuple[tuple[int, ...], ...]
    gt_edges: frozenset = field(default_factory=frozenset)
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[1] != N_FEATURES:
            raise GraphError(f"features must be (N, 14), got {feats.shape}")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        nbs = tuple(tuple(sorted(int(j) for j in nb)) for nb in self.neighborhoods)
        if len(nbs) != len(feats):
            raise GraphError("one neighborhood per node required")
        for nb in nbs:
            if nb and (nb[0] < 0 or nb[-1] >= len(feats)):
                raise GraphError("neighbor index out of range")
        object.__setattr__(self, "neighborhoods", nbs)
        object.__setattr__(self, "gt_edges", frozenset(_norm_edge(i, j) for i, j in self.gt_edges))
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_features(cls, features, L: int = 10, gt_edges=(), meta=None) -> "CandidateGraph":
        """Build the symmetrized L-nearest-neighbor candidate graph."""
        features = np.asarray(features, dtype=float)
        nbs = symmetrize_neighborhoods(build_knn_neighborhoods(features, L))
        return cls(features, tuple(nbs), frozenset(gt_edges), meta or {})

    @property
    def n_nodes(self) -> int:
        return len(self.features)

    def node(self, i: int) -> NodeFeatures:
        return NodeFeatures.from_packed(self.features[i])

    @property
    def positions(self) -> np.ndarray:
        return self.features[:, POS]

    @cached_property
    def pairs(self) -> np.ndarray:
        """``(M, 2)`` int array of directed candidate pairs in ascending order."""
        out = [(k, l) for k, nb in enumerate(self.neighborhoods) for l in nb]
        arr = np.array(out, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @cached_property
    def pair_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(k), int(l)): p for p, (k, l) in enumerate(self.pairs)}

    @cached_property
    def reverse(self) -> np.ndarray:
        """Index of ``(l, k)`` for each pair ``(k, l)``; requires symmetric neighborhoods."""
        lookup = self.pair_lookup
        try:
            rev = np.array([lookup[(int(l), int(k))] for k, l in self.pairs], dtype=np.int64)
        except KeyError as exc:
            raise GraphError(f"neighborhoods are not symmetric: missing reverse of {exc.args[0]}") from None
        return rev

    @cached_property
    def slots(self) -> np.ndarray:
        """``(N, K)`` pair indices per node row, padded with -1 (K = max degree)."""
        width = max((len(nb) for nb in self.neighborhoods), default=0)
        out = -np.ones((self.n_nodes, max(width, 1)), dtype=np.int64)
        p = 0
        for k, nb in enumerate(self.neighborhoods):
            out[k, : len(nb)] = np.arange(p, p + len(nb))
            p += len(nb)
        return out

    @cached_property
    def gt_directed(self) -> np.ndarray:
        """Ground truth as a 0/1 array aligned with :attr:`pairs`."""
        gt = self.gt_edges
        return np.array([_norm_edge(k, l) in gt for k, l in self.pairs], dtype=float)

    @cached_property
    def uncovered_gt_edges(self) -> list[tuple[int, int]]:
        lookup = self.pair_lookup
        return sorted(e for e in self.gt_edges if e not in lookup and e[::-1] not in lookup)

    def gt_coverage(self) -> float:
        if not self.gt_edges:
            return 1.0
        return 1.0 - len(self.uncovered_gt_edges) / len(self.gt_edges)

    def gt_adjacency(self) -> "AdjacencyEstimate":
        return AdjacencyEstimate(self.pairs, self.gt_directed.astype(np.int8))

    def subgraph(self, nodes: Sequence[int]) -> "CandidateGraph":
        """Induced subgraph on ``nodes`` (relabelled 0..n-1 in the given order)."""
        nodes = [int(i) for i in nodes]
        remap = {old: new for new, old in enumerate(nodes)}
        nbs = tuple(tuple(remap[j] for j in self.neighborhoods[i] if j in remap) for i in nodes)
        gt = frozenset(
            _norm_edge(remap[i], remap[j]) for i, j in self.gt_edges if i in remap and j in remap
        )
        meta = dict(self.meta)
        meta["node_ids"] = nodes
        return CandidateGraph(self.features[nodes], nbs, gt, meta)


def validate_graph(graph: CandidateGraph) -> list[str]:
    """List violated invariants; an empty list means the graph is valid."""
    report = []
    feats = graph.features
    for i in np.flatnonzero(~np.isfinite(feats).all(axis=1)):
        report.append(f"non-finite features at node {i}")
    for i in np.flatnonzero(feats[:, RADIUS] <= 0):
        report.append(f"radius mean must be > 0 at node {i}")
    for i in np.flatnonzero((feats[:, N_MEAN:] < 0).any(axis=1)):
        report.append(f"negative variance at node {i}")
    sets = [set(nb) for nb in graph.neighborhoods]
    for k, nb in enumerate(sets):
        if k in nb:
            report.append(f"self-pair at node {k}")
        for l in nb:
            if k not in sets[l]:
                report.append(f"non-symmetric neighborhood: ({k}, {l}) without ({l}, {k})")
    for i, j in sorted(graph.gt_edges):
        if i == j or max(i, j) >= graph.n_nodes:
            report.append(f"invalid gt edge ({i}, {j})")
        elif j not in sets[i] and i not in sets[j]:
            report.append(f"uncovered gt edge ({i}, {j})")
    return report


@dataclass(frozen=True, eq=False)
class EdgeBeliefs:
    """Clamped edge probabilities, one per directed candidate pair."""

    pairs: np.ndarray
    values: np.ndarray
    layer: int = 0

    def __post_init__(self):
        vals = np.clip(np.asarray(self.values, dtype=float), EPS_CLAMP, 1.0 - EPS_CLAMP)
        if vals.shape != (len(self.pairs),):
            raise GraphError("beliefs must have one value per candidate pair")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, graph: CandidateGraph, value: float = 0.5) -> "EdgeBeliefs":
        return cls(graph.pairs, np.full(graph.n_pairs, float(value)))

    def check_graph(self, graph: CandidateGraph) -> None:
        if self.pairs is not graph.pairs and not np.array_equal(self.pairs, graph.pairs):
            raise GraphError("beliefs are not keyed by this graph's candidate pairs")

    def __getitem__(self, kl) -> float:
        k, l = kl
        hit = np.flatnonzero((self.pairs[:, 0] == k) & (self.pairs[:, 1] == l))
        if not len(hit):
            raise KeyError(kl)
        return float(self.values[hit[0]])


@dataclass(frozen=True, eq=False)
class AdjacencyEstimate:
    """Binary directed adjacency over candidate pairs."""

    pairs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values).astype(np.int8)
        if vals.shape != (len(self.pairs),):
            raise GraphError("adjacency must have one value per candidate pair")
        if not np.isin(vals, (0, 1)).all():
            raise GraphError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "values", vals)

    def undirected_edges(self) -> set[tuple[int, int]]:
        """Pairs ``{k, l}`` with both directions switched on."""
        on = {(int(k), int(l)) for (k, l), v in zip(self.pairs, self.values) if v}
        return {(k, l) for k, l in on if k < l and (l, k) in on}

    def check_graph(self, graph: CandidateGraph) -> None:
        if self.pairs is not graph.pairs and not np.array_equal(self.pairs, graph.pairs):
            raise GraphError("adjacency is not keyed by this graph's candidate pairs")


_PARAM_SIZES = (("beta", 3), ("lam", 1), ("a", N_FEATURES), ("eta", N_FEATURES), ("nu", N_FEATURES))
N_PARAMS = sum(n for _, n in _PARAM_SIZES)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """MRF parameters shared by every mean-field layer.

    ``beta`` weights the degree prior for degrees 0, 1, 2; ``lam`` the
    symmetry term; ``a`` the node data term; ``eta`` and ``nu`` the pairwise
    absolute-difference and product terms.
    """

    beta: np.ndarray
    lam: float
    a: np.ndarray
    eta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name, size in _PARAM_SIZES:
            if name == "lam":
                object.__setattr__(self, "lam", float(self.lam))
                continue
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (size,):
                raise GraphError(f"{name} must have {size} entries, got {arr.shape}")
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls) -> "ModelParams":
        return cls.from_vector(np.zeros(N_PARAMS))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, [self.lam], self.a, self.eta, self.nu])

    @classmethod
    def from_vector(cls, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS,):
            raise GraphError(f"parameter vector must have {N_PARAMS} entries")
        return cls(vec[0:3], vec[3], vec[4:18], vec[18:32], vec[32:46])

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "lambda": self.lam,
            "a": self.a.tolist(),
            "eta": self.eta.tolist(),
            "nu": self.nu.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelParams":
        try:
            return cls(d["beta"], d["lambda"], d["a"], d["eta"], d["nu"])
        except KeyError as exc:
            raise GraphError(f"model file missing field {exc.args[0]!r}") from None

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.to_vector()).all())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return np.array_equal(self.to_vector(), other.to_vector())


class GradientSet(ModelParams):
    """Loss gradient with the same layout as :class:`ModelParams`."""
