"""K-fold cross-validation of the Mean Field Network against the greedy linking baseline."""

from __future__ import annotations

import time

import numpy as np

from .inference import threshold
from .metrics import DEFAULT_STEP, aggregate, evaluate_edges, greedy_nn_edges
from .network import TrainConfig, infer, train


def split_folds(graphs, fold: int):
    """``(train, test)`` by ``meta["fold"]``."""
    test = [g for g in graphs if g.meta.get("fold") == fold]
    rest = [g for g in graphs if g.meta.get("fold") != fold]
    return rest, test


def cross_validate(graphs, config: TrainConfig = TrainConfig(), step: float = DEFAULT_STEP, folds=None):
    """Train one model per fold and evaluate it, and the baseline, on the held-out graphs."""
    folds = range(config.n_folds) if folds is None else folds
    results = {"folds": [], "per_graph": []}
    for fold in folds:
        tr, te = split_folds(graphs, fold)
        t0 = time.perf_counter()
        theta, curves, _ = train(tr, config)
        fold_rec = {"fold": fold, "train_seconds": time.perf_counter() - t0, "curves": curves, "theta": theta.to_dict()}
        for g in te:
            t1 = time.perf_counter()
            alpha = infer(g, theta, config.T, config.alpha0, config.damping)
            infer_s = time.perf_counter() - t1
            adj = threshold(alpha)
            rep = evaluate_edges(g, adj.undirected_edges(), step, directed=adj)
            rep["baseline"] = evaluate_edges(g, greedy_nn_edges(g), step)
            rep["infer_seconds"] = infer_s
            rep["fold"] = fold
            rep["index"] = g.meta.get("index")
            results["per_graph"].append(rep)
        results["folds"].append(fold_rec)

    per = results["per_graph"]
    tp = sum(r["undirected"]["tp"] for r in per)
    fp = sum(r["undirected"]["fp"] for r in per)
    fn = sum(r["undirected"]["fn"] for r in per)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    results["summary"] = {
        "undirected_f1": 2 * prec * rec / (prec + rec) if prec + rec else 0.0,
        "binary_accuracy": aggregate(r["edge_metrics"]["binary_accuracy"] for r in per),
        "d_err": aggregate(r["centerline"]["d_err"] for r in per),
        "d_FP": aggregate(r["centerline"]["d_FP"] for r in per),
        "d_FN": aggregate(r["centerline"]["d_FN"] for r in per),
        "baseline_d_err": aggregate(r["baseline"]["centerline"]["d_err"] for r in per),
        "max_infer_seconds": float(np.max([r["infer_seconds"] for r in per])),
    }
    return results
