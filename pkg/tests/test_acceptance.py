"""Acceptance suite: one test per headline criterion, each printing a PASS/FAIL line.

The end-to-end, learning-curve and determinism checks train real models and
take several minutes; they are marked ``slow``.
"""

import time

import numpy as np
import pytest
from scipy.special import logit

from mfnrefine.cli import main
from mfnrefine.graph import EdgeBeliefs, ModelParams
from mfnrefine.inference import MfaSchedule, degree_expectation, elbo, gamma_all, mfa_sweep_sequential, run_mfa, threshold
from mfnrefine.metrics import CenterlineResult
from mfnrefine.network import loss_and_grad, training_loss
from mfnrefine.oracle import (
    brute_degree_distribution,
    brute_degree_expectation,
    brute_elbo,
    enumerate_posterior,
    numeric_elbo_derivative,
    numeric_param_gradient,
)

from conftest import random_graph, random_params, rel_err

RESULTS: list[str] = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def enumerable_instances(n_inst, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_inst):
        n = int(rng.integers(2, 5))
        g = random_graph(rng, n, L=int(rng.integers(1, n)))
        yield g, random_params(rng, 3.0), rng.uniform(0, 1, g.n_pairs)


def test_metric_arithmetic():
    t0 = time.perf_counter()
    d = CenterlineResult(0.792, 4.807).d_err
    dt = time.perf_counter() - t0
    report("metric arithmetic", abs(d - 2.7995) < 5e-4 and round(d, 3) in (2.799, 2.8) and dt < 1e-3,
           f"d_err={d:.4f} in {dt * 1e6:.1f} us")


def test_elbo_bound():
    t0 = time.perf_counter()
    gaps = []
    for g, th, a in enumerable_instances(200, 11):
        gaps.append(elbo(a, g, th).total - enumerate_posterior(g, th).log_partition)
    dt = time.perf_counter() - t0
    worst = max(gaps)
    report("oracle ELBO bound", worst <= 1e-9 and dt < 10.0, f"max(ELBO - lnZ)={worst:.3e} over 200 instances in {dt:.2f} s")


def test_elbo_consistency():
    errs = [abs(elbo(a, g, th).total - brute_elbo(a, g, th)) for g, th, a in enumerable_instances(200, 11)]
    report("ELBO consistency", max(errs) < 1e-10, f"max abs error {max(errs):.3e}")


def test_degree_expectations():
    rng = np.random.default_rng(12)
    worst = worst_total = 0.0
    for _ in range(1000):
        row = rng.uniform(0, 1, int(rng.integers(0, 11)))
        for v in range(3):
            worst = max(worst, abs(degree_expectation(row, v) - brute_degree_expectation(row, v)))
        low = sum(degree_expectation(row, v) for v in range(3))
        high = brute_degree_distribution(row)[3:].sum()
        worst_total = max(worst_total, abs(low + high - 1.0))
    report("degree expectations", worst < 1e-12 and worst_total < 1e-12,
           f"max abs error {worst:.3e}, |P(deg<=2) + P(deg>2) - 1| <= {worst_total:.3e}")


def test_analytic_derivative():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 9))
        g = random_graph(rng, n, L=int(rng.integers(1, n)))
        th = random_params(rng, 3.0)
        a = rng.uniform(0.05, 0.95, g.n_pairs)
        p = int(rng.integers(g.n_pairs))
        analytic = gamma_all(a, g, th)[p] - logit(a[p])
        numeric = numeric_elbo_derivative(a, p, g, th, 1e-6)
        worst = max(worst, float(rel_err(analytic, numeric, 1e-8)))
    report("analytic derivative", worst < 1e-6, f"max relative error {worst:.3e} over 500 draws")


def test_monotonicity():
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        g = random_graph(rng, n, L=int(rng.integers(1, n)))
        th = random_params(rng, 3.0)
        cur = EdgeBeliefs(g.pairs, rng.uniform(0, 1, g.n_pairs))
        f = elbo(cur, g, th).total
        for _ in range(20):
            cur = mfa_sweep_sequential(cur, g, th)
            f_new = elbo(cur, g, th).total
            worst = min(worst, f_new - f)
            f = f_new
    report("monotonicity", worst >= -1e-10, f"most negative per-sweep change {worst:.3e} over 100 x 20 sweeps")


def test_gradient_check():
    rng = np.random.default_rng(15)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(2, 9))
        g = random_graph(rng, n, L=int(rng.integers(1, n)))
        th = random_params(rng, 3.0)
        T = 1 + i % 3
        _, grads, _ = loss_and_grad(g, th, T)
        numeric = numeric_param_gradient(lambda t: training_loss(g, t, T), th, 1e-5)
        worst = max(worst, float(rel_err(grads.to_vector(), numeric.to_vector(), 1e-4).max()))
    dt = time.perf_counter() - t0
    report("gradient check", worst < 1e-5 and dt < 30.0, f"max relative error {worst:.3e} on 50 instances in {dt:.1f} s")


@pytest.mark.slow
def test_end_to_end(cv_results):
    s = cv_results["summary"]
    f1 = s["undirected_f1"]
    acc = s["binary_accuracy"]["mean"]
    ours, base = s["d_err"]["mean"], s["baseline_d_err"]["mean"]
    total, infer_max = cv_results["total_seconds"], s["max_infer_seconds"]
    ok = f1 >= 0.90 and acc >= 0.97 and ours < base and total <= 1800 and infer_max < 1.0
    report("end-to-end synthetic", ok,
           f"F1={f1:.4f} acc={acc:.4f} d_err={ours:.4f} vs greedy {base:.4f}, "
           f"run {total / 60:.1f} min, max inference {infer_max * 1e3:.0f} ms")


@pytest.mark.slow
def test_learning_curve(cv_results):
    ratios, worst_step = [], 0.0
    for fold in cv_results["folds"]:
        curves = fold["curves"]
        ratios.append(curves[-1]["train_loss"] / curves[0]["train_loss"])
        layers = np.asarray(curves[-1]["elbo_per_layer"])
        worst_step = min(worst_step, float(np.diff(layers).min()))
    ok = max(ratios) < 0.5 and worst_step >= -1e-10
    report("learning-curve shape", ok,
           f"final/initial train loss per fold {[round(r, 4) for r in ratios]}, "
           f"smallest per-layer ELBO step {worst_step:.3e}")


@pytest.mark.slow
def test_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["generate", "--n", "4", "--seed", "21", "--out", str(data)]) == 0
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--data", str(data), "--epochs", "3", "--seed", "4", "--out", str(out)]) == 0
        outs.append(out)
    same_model = (outs[0] / "model.json").read_bytes() == (outs[1] / "model.json").read_bytes()
    same_ckpt = (outs[0] / "checkpoint.json").read_bytes() == (outs[1] / "checkpoint.json").read_bytes()
    report("determinism", same_model and same_ckpt, f"model identical={same_model}, checkpoint identical={same_ckpt}")


@pytest.mark.slow
def test_trained_run_mfa_recovers_adjacency(cv_results):
    # not a headline criterion: trained parameters driven through run_mfa on a held-out graph
    fold = cv_results["folds"][0]
    theta = ModelParams.from_dict(fold["theta"])
    g = next(g for g in cv_results["graphs"] if g.meta["fold"] == fold["fold"])
    traj = run_mfa(EdgeBeliefs.constant(g), g, theta, MfaSchedule(max_iters=10))
    agree = np.mean(threshold(traj[-1][0]).values == g.gt_directed)
    assert agree >= 0.95
