"""Mean Field Network: unrolled parallel mean-field layers with shared parameters.

Gradients are computed by reverse-mode differentiation over the fixed
unrolled structure.  Each layer maps

    alpha_t = clamp((1 - d) * sigmoid(gamma(alpha_{t-1}; theta)) + d * alpha_{t-1})

and the loss is the mean binary cross-entropy of ``alpha_T`` against the
ground-truth directed adjacency over candidate pairs.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from .graph import EPS_CLAMP, CandidateGraph, EdgeBeliefs, GradientSet, ModelParams, N_PARAMS
from .inference import (
    _bernoulli_factors,
    _leave_one_out,
    _slot_values,
    _Terms,
    clamp,
    elbo,
    mfa_sweep_sequential,
)
from .potentials import pair_features

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    T: int = 10
    batch_nodes: int = 500
    L: int = 10
    epochs: int = 60
    lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    init_scale: float = 0.01
    alpha0: float = 0.5
    damping: float = 0.0
    pos_weight: float = 1.0
    n_val: int = 1
    n_folds: int = 4
    elbo_mode: str = "sequential"

    def __post_init__(self):
        for name in ("T", "batch_nodes", "L", "n_folds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.lr < 0 or self.n_val < 0:
            raise ConfigError("epochs, lr and n_val must be non-negative")
        if self.elbo_mode not in ("sequential", "parallel"):
            raise ConfigError(f"unknown elbo_mode {self.elbo_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Tape:
    """Per-layer beliefs ``alpha_0..alpha_T`` and pre-activations ``gamma_1..gamma_T``."""

    graph: CandidateGraph
    theta: ModelParams
    alphas: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    damping: float = 0.0

    @property
    def T(self) -> int:
        return len(self.gammas)

    def replay(self) -> np.ndarray:
        out, _ = forward(self.graph, self.theta, self.T, self.alphas[0], self.damping)
        return out.values


def init_params(seed: int = 0, scale: float = 0.01) -> ModelParams:
    if scale < 0:
        raise ValueError("scale must be >= 0")
    rng = np.random.default_rng(seed)
    return ModelParams.from_vector(rng.uniform(-scale, scale, N_PARAMS))


def forward(graph: CandidateGraph, theta: ModelParams, T: int, alpha0=0.5, damping: float = 0.0):
    """Run ``T`` parallel mean-field layers; returns ``(alpha_T, tape)``."""
    if np.isscalar(alpha0):
        a = np.full(graph.n_pairs, float(alpha0))
    else:
        a = np.asarray(getattr(alpha0, "values", alpha0), dtype=float)
    a = clamp(a)
    terms = _Terms(graph, theta)
    tape = Tape(graph, theta, [a], [], damping)
    for _ in range(T):
        g = terms.gamma(a)
        a = clamp((1.0 - damping) * expit(g) + damping * a)
        tape.gammas.append(g)
        tape.alphas.append(a)
    return EdgeBeliefs(graph.pairs, a, layer=T), tape


def _targets(gt, graph: CandidateGraph) -> np.ndarray:
    if gt is None:
        return graph.gt_directed
    return np.asarray(getattr(gt, "values", gt), dtype=float)


def bce_loss(alpha, gt, pos_weight: float = 1.0) -> float:
    """Mean negative log-likelihood of the targets over candidate pairs."""
    a = clamp(np.asarray(getattr(alpha, "values", alpha), dtype=float))
    s = np.asarray(getattr(gt, "values", gt), dtype=float)
    if a.shape != s.shape:
        raise ValueError("beliefs and targets must cover the same candidate pairs")
    if not len(a):
        return 0.0
    return float(-np.mean(pos_weight * s * np.log(a) + (1.0 - s) * np.log1p(-a)))


def _clamped_log_probs(tape: Tape):
    """``(ln alpha_T, ln(1 - alpha_T))`` from the last pre-activation, exact to working precision.

    Going through ``alpha_T`` loses the low digits of ``1 - alpha`` once beliefs
    saturate; the log-sigmoid form does not.  Only valid without damping.
    """
    g = tape.gammas[-1]
    lo, l1 = log_expit(g), log_expit(-g)
    a = expit(g)
    small, big = a < EPS_CLAMP, a > 1.0 - EPS_CLAMP
    lo = np.where(small, np.log(EPS_CLAMP), np.where(big, np.log1p(-EPS_CLAMP), lo))
    l1 = np.where(big, np.log(EPS_CLAMP), np.where(small, np.log1p(-EPS_CLAMP), l1))
    return lo, l1


def tape_loss(tape: Tape, gt, pos_weight: float = 1.0) -> float:
    """Same value as ``bce_loss(alpha_T, gt)``, evaluated in log space when possible."""
    if tape.damping or not tape.T:
        return bce_loss(tape.alphas[-1], gt, pos_weight)
    s = np.asarray(getattr(gt, "values", gt), dtype=float)
    if not len(s):
        return 0.0
    lo, l1 = _clamped_log_probs(tape)
    return float(-np.mean(pos_weight * s * lo + (1.0 - s) * l1))


def training_loss(graph: CandidateGraph, theta: ModelParams, T: int, alpha0=0.5, damping: float = 0.0, pos_weight: float = 1.0) -> float:
    """Forward pass and loss against ``graph``'s ground truth, without gradients."""
    return tape_loss(forward(graph, theta, T, alpha0, damping)[1], graph.gt_directed, pos_weight)


def _bce_grad(a, s, pos_weight):
    return -(pos_weight * s / a - (1.0 - s) / (1.0 - a)) / len(a)


def _layer_vjp(g_gamma, a, terms: _Terms, graph: CandidateGraph):
    """Pull a cotangent on ``gamma(a)`` back to ``a`` and to the parameters."""
    theta = terms.theta
    b0, b1, b2 = theta.beta
    mask = graph.slots >= 0
    fac = _bernoulli_factors(_slot_values(a, graph))
    extra = np.zeros_like(fac)
    extra[..., 0] = _slot_values(g_gamma, graph)
    loo0, loo1 = _leave_one_out(fac, extra)
    q, s = loo0[mask], loo1[mask]

    ar = a[terms.rev]
    absdiff, prod = pair_features(graph)
    grad = np.zeros(N_PARAMS)
    grad[0] = -(g_gamma @ q[:, 0])
    grad[1] = g_gamma @ (q[:, 0] - q[:, 1])
    grad[2] = g_gamma @ (q[:, 1] - q[:, 2])
    grad[3] = g_gamma @ (2.0 * (4.0 * ar - 2.0))
    node_w = np.bincount(terms.src, weights=g_gamma, minlength=graph.n_nodes)
    grad[4:18] = node_w @ graph.features
    w = 4.0 * ar * g_gamma
    grad[18:32] = w @ absdiff
    grad[32:46] = w @ prod

    g_a = b0 * s[:, 0] + b1 * (s[:, 1] - 2.0 * s[:, 0]) + b2 * (s[:, 2] - 2.0 * s[:, 1] + s[:, 0])
    g_a = g_a + (g_gamma * 2.0 * (4.0 * theta.lam + 2.0 * terms.data))[terms.rev]
    return g_a, grad


def backward(tape: Tape, graph: CandidateGraph, theta: ModelParams, gt=None, pos_weight: float = 1.0) -> GradientSet:
    """Exact gradient of ``bce_loss(alpha_T, gt)`` with respect to every parameter."""
    s = _targets(gt, graph)
    terms = _Terms(graph, theta)
    d = tape.damping
    g_a = _bce_grad(tape.alphas[-1], s, pos_weight)
    total = np.zeros(N_PARAMS)
    for t in range(tape.T, 0, -1):
        prev = tape.alphas[t - 1]
        sig = expit(tape.gammas[t - 1])
        raw = (1.0 - d) * sig + d * prev
        live = (raw > EPS_CLAMP) & (raw < 1.0 - EPS_CLAMP)
        g_out = np.where(live, g_a, 0.0)
        g_gamma = g_out * (1.0 - d) * sig * (1.0 - sig)
        g_prev, g_theta = _layer_vjp(g_gamma, prev, terms, graph)
        total += g_theta
        g_a = g_prev + d * g_out
    return GradientSet.from_vector(total)


def loss_and_grad(graph: CandidateGraph, theta: ModelParams, T: int, alpha0=0.5, damping: float = 0.0, pos_weight: float = 1.0):
    alpha, tape = forward(graph, theta, T, alpha0, damping)
    loss = tape_loss(tape, graph.gt_directed, pos_weight)
    return loss, backward(tape, graph, theta, None, pos_weight), alpha


# -- optimizer ---------------------------------------------------------------

def adam_init() -> dict:
    return {"m": [0.0] * N_PARAMS, "v": [0.0] * N_PARAMS, "step": 0}


def adam_step(theta: ModelParams, grads, state: dict, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected adaptive-moment step; returns ``(theta', state')``."""
    g = grads.to_vector() if isinstance(grads, ModelParams) else np.asarray(grads, dtype=float)
    step = state["step"] + 1
    m = beta1 * np.asarray(state["m"]) + (1.0 - beta1) * g
    v = beta2 * np.asarray(state["v"]) + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    new = theta.to_vector() - lr * m_hat / (np.sqrt(v_hat) + eps)
    return ModelParams.from_vector(new), {"m": m.tolist(), "v": v.tolist(), "step": step}


# -- batching and training -----------------------------------------------------

def make_batches(graph: CandidateGraph, batch_nodes: int = 500, seed: int = 0) -> list[CandidateGraph]:
    """Split into spatially contiguous induced subgraphs of at most ``batch_nodes`` nodes.

    Each batch is the set of unassigned nodes nearest to a randomly chosen
    unassigned seed node.
    """
    if batch_nodes < 2:
        raise ValueError("batch_nodes must be >= 2")
    n = graph.n_nodes
    if n <= batch_nodes:
        return [graph]
    rng = np.random.default_rng(seed)
    pos = graph.positions
    free = np.ones(n, dtype=bool)
    batches = []
    while free.any():
        idx = np.flatnonzero(free)
        centre = idx[rng.integers(len(idx))]
        d2 = ((pos[idx] - pos[centre]) ** 2).sum(axis=1)
        chosen = np.sort(idx[np.argsort(d2, kind="stable")[:batch_nodes]])
        free[chosen] = False
        batches.append(graph.subgraph(chosen))
    return batches


def binary_accuracy(alpha, gt) -> float:
    a = np.asarray(getattr(alpha, "values", alpha))
    s = np.asarray(getattr(gt, "values", gt))
    return float(np.mean((a > 0.5) == (s > 0.5))) if len(a) else 1.0


def _evaluate(batches, theta, config: TrainConfig):
    loss = correct = count = 0.0
    for b in batches:
        alpha, tape = forward(b, theta, config.T, config.alpha0, config.damping)
        s = b.gt_directed
        loss += tape_loss(tape, s, config.pos_weight) * b.n_pairs
        correct += binary_accuracy(alpha, s) * b.n_pairs
        count += b.n_pairs
    count = max(count, 1.0)
    return loss / count, correct / count


def elbo_per_layer(graph: CandidateGraph, theta: ModelParams, config: TrainConfig) -> list[float]:
    """ELBO after each of the ``T`` layers (sequential sweeps or parallel steps)."""
    if config.elbo_mode == "parallel":
        _, tape = forward(graph, theta, config.T, config.alpha0, config.damping)
        return [elbo(a, graph, theta).total for a in tape.alphas[1:]]
    cur = EdgeBeliefs.constant(graph, config.alpha0)
    out = []
    for _ in range(config.T):
        cur = mfa_sweep_sequential(cur, graph, theta)
        out.append(elbo(cur, graph, theta).total)
    return out


def train(dataset, config: TrainConfig = TrainConfig(), theta0: ModelParams | None = None):
    """Fit shared parameters by Adam on per-batch BCE gradients.

    The last ``config.n_val`` graphs of ``dataset`` are held out for
    validation and model selection.  Returns ``(best_theta, curves, state)``
    where ``curves`` has one record per epoch (epoch 0 = initial parameters).
    """
    dataset = list(dataset)
    if not dataset:
        raise ConfigError("empty dataset")
    for g in dataset:
        if not g.gt_edges:
            raise ConfigError("every training graph needs ground-truth edges")
    n_val = min(config.n_val, len(dataset) - 1)
    train_graphs = dataset[: len(dataset) - n_val]
    val_graphs = dataset[len(dataset) - n_val:]
    rng = np.random.default_rng(config.seed)
    batches = []
    for i, g in enumerate(train_graphs):
        batches.extend(make_batches(g, config.batch_nodes, seed=config.seed + i))
    val_batches = []
    for i, g in enumerate(val_graphs):
        val_batches.extend(make_batches(g, config.batch_nodes, seed=config.seed + 10_000 + i))
    monitor = val_batches[0] if val_batches else batches[0]

    theta = theta0 if theta0 is not None else init_params(config.seed, config.init_scale)
    state = adam_init()
    curves = []

    def record(epoch, train_loss, train_acc):
        val_loss, val_acc = _evaluate(val_batches, theta, config) if val_batches else (train_loss, train_acc)
        rec = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "train_acc": train_acc,
            "val_acc": val_acc,
            "elbo_per_layer": elbo_per_layer(monitor, theta, config),
        }
        curves.append(rec)
        log.info("epoch %d train %.4f val %.4f acc %.4f", epoch, train_loss, val_loss, val_acc)
        return rec

    record(0, *_evaluate(batches, theta, config))
    best_theta, best_val = theta, curves[0]["val_loss"]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(batches))
        loss_sum = correct = count = 0.0
        for bi in order:
            b = batches[bi]
            loss, grads, alpha = loss_and_grad(b, theta, config.T, config.alpha0, config.damping, config.pos_weight)
            loss_sum += loss * b.n_pairs
            correct += binary_accuracy(alpha, b.gt_directed) * b.n_pairs
            count += b.n_pairs
            theta, state = adam_step(
                theta, grads, state, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps
            )
        rec = record(epoch, loss_sum / count, correct / count)
        if rec["val_loss"] < best_val:
            best_theta, best_val = theta, rec["val_loss"]
    return best_theta, curves, state


def infer(graph: CandidateGraph, theta: ModelParams, T: int = 10, alpha0=0.5, damping: float = 0.0) -> EdgeBeliefs:
    alpha, _ = forward(graph, theta, T, alpha0, damping)
    return alpha
