"""Edge classification metrics and the centerline distance error.

Centerlines are represented by points sampled along edge segments between
node mean positions (no volume rendering or thinning), so absolute values
are not comparable with voxel-based centerlines.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .graph import AdjacencyEstimate, CandidateGraph, GraphError

#: Default point spacing along edges; a quarter of the root-branch node
#: spacing of the default synthetic trees.
DEFAULT_STEP = 0.05


@dataclass(frozen=True)
class EdgeMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def binary_accuracy(self) -> float:
        total = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / total if total else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(precision=self.precision, recall=self.recall, f1=self.f1, binary_accuracy=self.binary_accuracy)
        return d


@dataclass(frozen=True)
class CenterlineResult:
    d_fp: float
    d_fn: float

    @property
    def d_err(self) -> float:
        return (self.d_fp + self.d_fn) / 2.0

    def to_dict(self) -> dict:
        return {"d_FP": self.d_fp, "d_FN": self.d_fn, "d_err": self.d_err}


def _counts(pred, gt) -> EdgeMetrics:
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    return EdgeMetrics(
        tp=int((pred & gt).sum()),
        fp=int((pred & ~gt).sum()),
        fn=int((~pred & gt).sum()),
        tn=int((~pred & ~gt).sum()),
    )


def edge_metrics(pred: AdjacencyEstimate, gt: AdjacencyEstimate) -> EdgeMetrics:
    """Counts and rates over directed candidate pairs."""
    if not np.array_equal(pred.pairs, gt.pairs):
        raise GraphError("prediction and ground truth are keyed by different pairs")
    return _counts(pred.values, gt.values)


def undirected_edge_metrics(pred_edges, gt_edges, graph: CandidateGraph | None = None) -> EdgeMetrics:
    """Counts over unordered edges; ``tn`` counts candidate pairs in neither set (0 without a graph)."""
    pred = {tuple(sorted(e)) for e in pred_edges}
    gt = {tuple(sorted(e)) for e in gt_edges}
    tp, fp, fn = len(pred & gt), len(pred - gt), len(gt - pred)
    tn = 0
    if graph is not None:
        cand = {(int(k), int(l)) for k, l in graph.pairs if k < l}
        tn = len(cand - pred - gt)
    return EdgeMetrics(tp, fp, fn, tn)


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) < 2:
        return points
    tree = cKDTree(points)
    keep = np.ones(len(points), dtype=bool)
    for i, j in sorted(tree.query_pairs(tol)):
        if keep[i] and keep[j]:
            keep[j] = False
    return points[keep]


def sample_centerline_points(positions, edges, step: float = DEFAULT_STEP) -> np.ndarray:
    """Points along every edge segment at spacing ``<= step``, endpoints included.

    ``positions`` is an ``(N, 3)`` array or a :class:`CandidateGraph`.
    Points closer than ``step / 10`` are merged.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    pos = positions.positions if isinstance(positions, CandidateGraph) else np.asarray(positions, dtype=float)
    chunks = []
    for i, j in sorted(tuple(e) for e in edges):
        p, q = pos[i], pos[j]
        n_seg = int(np.ceil(np.linalg.norm(q - p) / step))
        t = np.linspace(0.0, 1.0, n_seg + 1) if n_seg else np.zeros(1)
        chunks.append(p + t[:, None] * (q - p))
    if not chunks:
        return np.empty((0, 3))
    return _dedup(np.vstack(chunks), step / 10.0)


def nearest_distances(src, dst) -> np.ndarray:
    """Distance from each point of ``src`` to its nearest point of ``dst``."""
    return cKDTree(dst).query(src)[0]


def centerline_distance(pred_points, ref_points) -> CenterlineResult:
    """Mean nearest distances pred->ref (false-positive error) and ref->pred (false-negative error)."""
    pred = np.asarray(pred_points, dtype=float).reshape(-1, 3)
    ref = np.asarray(ref_points, dtype=float).reshape(-1, 3)
    if not len(pred) or not len(ref):
        raise ValueError("centerline distance is undefined for an empty point set")
    return CenterlineResult(
        float(nearest_distances(pred, ref).mean()),
        float(nearest_distances(ref, pred).mean()),
    )


def greedy_nn_edges(graph: CandidateGraph) -> set[tuple[int, int]]:
    """Baseline: link every node to its nearest candidate neighbor by position."""
    pos = graph.positions
    edges = set()
    for k, nb in enumerate(graph.neighborhoods):
        if not nb:
            continue
        nb = np.array(nb)
        j = int(nb[np.argmin(((pos[nb] - pos[k]) ** 2).sum(axis=1))])
        edges.add((min(k, j), max(k, j)))
    return edges


def evaluate_edges(graph: CandidateGraph, pred_edges, step: float = DEFAULT_STEP, directed: AdjacencyEstimate | None = None) -> dict:
    """Per-graph report: edge metrics plus centerline distance to the ground-truth tree."""
    report = {"undirected": undirected_edge_metrics(pred_edges, graph.gt_edges, graph).to_dict()}
    if directed is not None:
        report["edge_metrics"] = edge_metrics(directed, graph.gt_adjacency()).to_dict()
    pred_pts = sample_centerline_points(graph, pred_edges, step)
    ref_pts = sample_centerline_points(graph, graph.gt_edges, step)
    if len(pred_pts) and len(ref_pts):
        report["centerline"] = centerline_distance(pred_pts, ref_pts).to_dict()
    else:
        report["centerline"] = {"d_FP": None, "d_FN": None, "d_err": None}
    return report


def aggregate(values) -> dict:
    """Mean and sample standard deviation, skipping undefined (None) entries."""
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if not len(arr):
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, "n": len(arr)}
