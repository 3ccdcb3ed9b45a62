"""JSON serialization for graphs, models and curves.

Floats go through ``repr`` (the :mod:`json` default), which round-trips
doubles exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .graph import N_MEAN, CandidateGraph, GraphError, ModelParams


def graph_to_dict(graph: CandidateGraph) -> dict:
    nodes = [
        {"id": i, "mean": row[:N_MEAN].tolist(), "var": row[N_MEAN:].tolist()}
        for i, row in enumerate(graph.features)
    ]
    meta = dict(graph.meta)
    meta["neighborhoods"] = [list(nb) for nb in graph.neighborhoods]
    return {
        "nodes": nodes,
        "gt_edges": [list(e) for e in sorted(graph.gt_edges)],
        "meta": meta,
    }


def graph_from_dict(d: dict, L: int = 10) -> CandidateGraph:
    """Parse a graph document.

    Neighborhoods are read from ``meta.neighborhoods`` when present,
    otherwise rebuilt as the symmetrized ``L``-nearest-neighbor graph.
    """
    try:
        nodes = sorted(d["nodes"], key=lambda n: n["id"])
        if [n["id"] for n in nodes] != list(range(len(nodes))):
            raise GraphError("node ids must be 0..N-1")
        feats = np.array([list(n["mean"]) + list(n["var"]) for n in nodes], dtype=float)
    except (KeyError, TypeError) as exc:
        raise GraphError(f"malformed graph document: {exc}") from None
    meta = dict(d.get("meta") or {})
    gt = [tuple(e) for e in d.get("gt_edges", [])]
    nbs = meta.pop("neighborhoods", None)
    if nbs is None:
        return CandidateGraph.from_features(feats, L=L, gt_edges=gt, meta=meta)
    return CandidateGraph(feats, tuple(tuple(nb) for nb in nbs), frozenset(gt), meta)


def save_graph(graph: CandidateGraph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph)) + "\n")


def load_graph(path, L: int = 10) -> CandidateGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON ({exc})") from None
    return graph_from_dict(doc, L=L)


def save_model(theta: ModelParams, path, optimizer_state: dict | None = None) -> None:
    doc = theta.to_dict()
    if optimizer_state is not None:
        doc["optimizer"] = optimizer_state
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON ({exc})") from None
    return ModelParams.from_dict(doc)


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
