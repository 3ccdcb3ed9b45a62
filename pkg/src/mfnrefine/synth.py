"""Synthetic airway-like trees with 14-dimensional node features.

A rooted binary tree is grown in 3D.  Nodes are placed along each branch at
a spacing proportional to the local radius; features are (position, radius,
unit tangent) means plus per-feature variances.  :func:`corrupt` then adds
clutter nodes and feature noise and builds the over-complete candidate graph.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .graph import N_MEAN, CandidateGraph, GraphError

_DEFAULT_VAR_RANGES = (
    (1e-4, 1e-3), (1e-4, 1e-3), (1e-4, 1e-3),
    (1e-5, 1e-4),
    (1e-3, 1e-2), (1e-3, 1e-2), (1e-3, 1e-2),
)


@dataclass(frozen=True)
class TreeConfig:
    """Generator settings.

    Branch lengths are drawn from ``branch_length`` and shrink by ``decay``
    per generation along with the radius, so every branch carries a similar
    number of nodes.
    """

    depth: int = 4
    branch_length: tuple = (1.6, 3.0)
    root_radius: float = 0.2
    decay: float = 0.7
    spacing: float = 1.0
    branch_angle: tuple = (0.35, 0.8)
    clutter_fraction: float = 0.2
    pos_noise: float = 0.1
    radius_noise: float = 0.05
    orient_noise: float = 0.1
    var_ranges: tuple = _DEFAULT_VAR_RANGES
    L: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.spacing <= 0 or self.root_radius <= 0:
            raise ValueError("spacing and root_radius must be positive")
        if min(self.pos_noise, self.radius_noise, self.orient_noise) < 0:
            raise ValueError("noise scales must be >= 0")
        if not 0.0 <= self.clutter_fraction < 1.0:
            raise ValueError("clutter_fraction must lie in [0, 1)")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        object.__setattr__(self, "branch_length", tuple(float(x) for x in self.branch_length))
        object.__setattr__(self, "branch_angle", tuple(float(x) for x in self.branch_angle))
        object.__setattr__(self, "var_ranges", tuple(tuple(float(x) for x in r) for r in self.var_ranges))
        if len(self.var_ranges) != N_MEAN:
            raise ValueError("var_ranges needs one (lo, hi) range per mean feature")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branch_length"] = list(self.branch_length)
        d["branch_angle"] = list(self.branch_angle)
        d["var_ranges"] = [list(r) for r in self.var_ranges]
        return d

    @classmethod
    def from_dict(cls, d) -> "TreeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown tree config fields: {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "TreeConfig":
        return TreeConfig(**{**asdict(self), "seed": int(seed)})


def _perpendicular(d, rng):
    v = rng.normal(size=3)
    v -= v @ d * d
    return v / np.linalg.norm(v)


def _rotate(d, axis, angle):
    # Rodrigues rotation of d about a unit axis perpendicular to it
    return np.cos(angle) * d + np.sin(angle) * np.cross(axis, d)


def _sample_variances(rng, cfg: TreeConfig, n: int) -> np.ndarray:
    lo = np.array([r[0] for r in cfg.var_ranges])
    hi = np.array([r[1] for r in cfg.var_ranges])
    return rng.uniform(lo, hi, size=(n, N_MEAN))


def generate_tree(config: TreeConfig = TreeConfig()) -> CandidateGraph:
    """Grow a clean tree; ``gt_edges`` is a spanning tree over its nodes."""
    rng = np.random.default_rng(config.seed)
    means: list[np.ndarray] = []
    edges: list[tuple[int, int]] = []

    def add(pos, radius, tangent):
        means.append(np.concatenate([pos, [radius], tangent]))
        return len(means) - 1

    # (start point, direction, generation, index of parent's last node)
    stack = [(np.zeros(3), np.array([0.0, 0.0, -1.0]), 0, None)]
    while stack:
        start, d, gen, parent = stack.pop()
        r = config.root_radius * config.decay**gen
        step = config.spacing * r
        length = rng.uniform(*config.branch_length) * config.decay**gen
        n = max(1, int(length / step))
        first = 0 if parent is None else 1
        prev = parent
        for i in range(first, n + 1):
            idx = add(start + d * step * i, r, d)
            if prev is not None:
                edges.append((prev, idx))
            prev = idx
        if gen < config.depth:
            end = means[prev][:3]
            axis = _perpendicular(d, rng)
            for sign in (1.0, -1.0):
                angle = rng.uniform(*config.branch_angle)
                child = _rotate(d, sign * axis, angle)
                stack.append((end, child / np.linalg.norm(child), gen + 1, prev))
    if len(means) < 2:
        raise GraphError("tree config yields fewer than 2 nodes")
    mean = np.array(means)
    feats = np.hstack([mean, _sample_variances(rng, config, len(mean))])
    meta = {"n_true": len(mean), "tree_seed": config.seed}
    return CandidateGraph.from_features(feats, L=config.L, gt_edges=edges, meta=meta)


def corrupt(graph: CandidateGraph, config: TreeConfig = TreeConfig()) -> CandidateGraph:
    """Add clutter nodes and feature noise, then rebuild the symmetrized L-NN candidate graph.

    Clutter features are drawn from the same marginal ranges as the tree's
    nodes.  The returned graph's ``meta["gt_coverage"]`` is the fraction of
    ground-truth edges present among the candidate pairs.
    """
    rng = np.random.default_rng([config.seed, 1])
    feats = np.array(graph.features)
    n_true = len(feats)
    r = feats[:, 3].copy()
    feats[:, :3] += rng.normal(size=(n_true, 3)) * (config.pos_noise * r)[:, None]
    feats[:, 3] = np.maximum(r * (1.0 + config.radius_noise * rng.normal(size=n_true)), 0.05 * r)
    v = feats[:, 4:7] + config.orient_noise * rng.normal(size=(n_true, 3))
    feats[:, 4:7] = v / np.linalg.norm(v, axis=1, keepdims=True)

    n_clutter = int(round(config.clutter_fraction * n_true))
    if n_clutter:
        lo, hi = feats[:, :3].min(axis=0), feats[:, :3].max(axis=0)
        pos = rng.uniform(lo, hi, size=(n_clutter, 3))
        radius = rng.choice(feats[:, 3], size=n_clutter)
        orient = rng.normal(size=(n_clutter, 3))
        orient /= np.linalg.norm(orient, axis=1, keepdims=True)
        clutter = np.hstack([pos, radius[:, None], orient, _sample_variances(rng, config, n_clutter)])
        feats = np.vstack([feats, clutter])

    meta = dict(graph.meta)
    meta["n_true"] = n_true
    meta["n_clutter"] = n_clutter
    out = CandidateGraph.from_features(feats, L=config.L, gt_edges=graph.gt_edges, meta=meta)
    out.meta["gt_coverage"] = out.gt_coverage()
    return out


def make_dataset(n_trees: int, config: TreeConfig = TreeConfig(), seed: int = 0, n_folds: int = 4) -> list[CandidateGraph]:
    """``n_trees`` independent corrupted trees with round-robin fold labels in ``meta["fold"]``."""
    if n_trees < n_folds:
        raise ValueError(f"need at least {n_folds} trees")
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=n_trees)
    out = []
    for i, s in enumerate(seeds):
        cfg = config.with_seed(int(s))
        g = corrupt(generate_tree(cfg), cfg)
        g.meta["fold"] = i % n_folds
        g.meta["index"] = i
        out.append(g)
    return out
