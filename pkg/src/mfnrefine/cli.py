"""Command-line front end: generate | train | infer | eval | oracle | gradcheck."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .experiment import split_folds
from .graph import AdjacencyEstimate, GraphError, ModelParams
from .inference import threshold
from .io import load_graph, load_model, save_graph, save_model, write_jsonl
from .metrics import DEFAULT_STEP, aggregate, evaluate_edges
from .network import ConfigError, TrainConfig, infer, loss_and_grad, train, training_loss
from .oracle import enumerate_posterior, numeric_param_gradient
from .synth import TreeConfig, make_dataset

log = logging.getLogger("mfnrefine")


class DataError(Exception):
    pass


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise DataError(f"config {path} must be a mapping")
    return doc


def _config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _write_manifest(out: Path, command: str, config: dict, seed, inputs, outputs, t0: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "config_hash": _config_hash(config),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "duration_seconds": time.perf_counter() - t0,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _dump(obj, out) -> None:
    text = json.dumps(obj, indent=1)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_generate(args) -> None:
    t0 = time.perf_counter()
    cfg = TreeConfig.from_dict(_read_config(args.config))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graphs = make_dataset(args.n, cfg, seed=args.seed, n_folds=args.folds)
    paths = [out / f"graph_{i:03d}.json" for i in range(len(graphs))]
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        list(pool.map(save_graph, graphs, paths))
    _write_manifest(out, "generate", {"tree": cfg.to_dict(), "n": args.n, "folds": args.folds}, args.seed,
                    [args.config] if args.config else [], paths, t0)


def _train_config(args) -> TrainConfig:
    raw = _read_config(args.config)
    for name in ("epochs", "T", "lr"):
        val = getattr(args, name)
        if val is not None:
            raw[name] = val
    raw["seed"] = args.seed
    raw["n_folds"] = args.folds
    try:
        return TrainConfig(**raw)
    except TypeError as exc:
        raise DataError(f"bad train config: {exc}") from None


def cmd_train(args) -> None:
    t0 = time.perf_counter()
    cfg = _train_config(args)
    files = sorted(Path(args.data).glob("graph_*.json"))
    if not files:
        raise DataError(f"no graph_*.json files in {args.data}")
    graphs = [load_graph(f, L=cfg.L) for f in files]
    if args.fold is not None:
        graphs, _ = split_folds(graphs, args.fold)
    theta, curves, state = train(graphs, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(theta, out / "model.json")
    save_model(theta, out / "checkpoint.json", optimizer_state=state)
    write_jsonl(curves, out / "curves.jsonl")
    _write_manifest(out, "train", {"train": cfg.to_dict(), "fold": args.fold}, args.seed, files,
                    [out / "model.json", out / "checkpoint.json", out / "curves.jsonl"], t0)


def cmd_infer(args) -> None:
    theta = load_model(args.model)
    graph = load_graph(args.graph)
    alpha = infer(graph, theta, args.T)
    adj = threshold(alpha, args.tau)
    _dump({
        "pairs": graph.pairs.tolist(),
        "alpha": alpha.values.tolist(),
        "directed": adj.values.tolist(),
        "edges": [list(e) for e in sorted(adj.undirected_edges())],
    }, args.out)


def _eval_one(pred_path, graph_path, step):
    graph = load_graph(graph_path)
    pred = json.loads(Path(pred_path).read_text())
    directed = None
    if "directed" in pred:
        directed = AdjacencyEstimate(np.array(pred["pairs"], dtype=np.int64).reshape(-1, 2), pred["directed"])
        if not np.array_equal(directed.pairs, graph.pairs):
            raise DataError(f"{pred_path} does not match the candidate pairs of {graph_path}")
        directed = AdjacencyEstimate(graph.pairs, directed.values)
    rep = evaluate_edges(graph, [tuple(e) for e in pred["edges"]], step, directed=directed)
    rep["graph"] = str(graph_path)
    return rep


def cmd_eval(args) -> None:
    if len(args.pred) != len(args.graph):
        raise DataError("--pred and --graph must be given the same number of times")
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        reports = list(pool.map(lambda pg: _eval_one(*pg, args.step), zip(args.pred, args.graph)))
    out = {"graphs": reports}
    if len(reports) > 1:
        out["aggregate"] = {
            key: aggregate(r["centerline"][key] for r in reports) for key in ("d_FP", "d_FN", "d_err")
        }
        out["aggregate"]["f1"] = aggregate(r["undirected"]["f1"] for r in reports)
    _dump(out if len(reports) > 1 else reports[0], args.out)


def _model_or_zero(path) -> ModelParams:
    return load_model(path) if path else ModelParams.zeros()


def cmd_oracle(args) -> None:
    post = enumerate_posterior(load_graph(args.graph), _model_or_zero(args.model))
    _dump(post.to_dict(), args.out)


def cmd_gradcheck(args) -> None:
    graph = load_graph(args.graph)
    theta = _model_or_zero(args.model) if args.model else ModelParams.from_vector(
        np.random.default_rng(args.seed).uniform(-0.5, 0.5, 46))
    _, analytic, _ = loss_and_grad(graph, theta, args.T)

    numeric = numeric_param_gradient(lambda t: training_loss(graph, t, args.T), theta, args.h)
    a, n = analytic.to_vector(), numeric.to_vector()
    rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), args.floor)
    _dump({"max_rel_error": float(rel.max()), "worst_index": int(rel.argmax()), "T": args.T, "h": args.h}, None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mfnrefine", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic tree dataset")
    g.add_argument("--config")
    g.add_argument("--n", type=int, default=32)
    g.add_argument("--folds", type=int, default=4)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the mean field network")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--folds", type=int, default=4)
    t.add_argument("--fold", type=int, help="held-out fold, excluded from training")
    t.add_argument("--epochs", type=int)
    t.add_argument("--T", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", parents=[common], help="predict edges for one graph")
    i.add_argument("--model", required=True)
    i.add_argument("--graph", required=True)
    i.add_argument("--T", type=int, default=10)
    i.add_argument("--tau", type=float, default=0.5)
    i.add_argument("--out")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", parents=[common], help="edge metrics and centerline distance")
    e.add_argument("--pred", action="append", required=True)
    e.add_argument("--graph", action="append", required=True)
    e.add_argument("--step", type=float, default=DEFAULT_STEP)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle", parents=[common], help="exact posterior by enumeration (small graphs)")
    o.add_argument("--graph", required=True)
    o.add_argument("--model")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of backward()")
    c.add_argument("--graph", required=True)
    c.add_argument("--model")
    c.add_argument("--T", type=int, default=2)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--floor", type=float, default=1e-4)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (DataError, GraphError, ConfigError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
