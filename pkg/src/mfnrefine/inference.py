"""Mean-field inference for the edge MRF.

The variational family is a product of independent Bernoullis, one per
directed candidate pair.  Degree-indicator expectations are evaluated from
the generating polynomial ``prod_j (1 - a_j + a_j z)`` truncated at ``z**2``;
this equals ``prod(1 - a) * e_v(a / (1 - a))`` but never divides by
``1 - a``.

Note on the degree-2 term: the closed form commonly written with a double
sum over ``m`` and ``n != m`` counts each unordered pair of edges twice.  We
use the true probability ``P(deg = 2)`` (unordered pairs), and the update
``gamma`` is the exact derivative of the ELBO implemented here.  Because
pairwise potentials are summed over ordered pairs, ``alpha_kl`` enters both
``phi_kl`` and ``phi_lk`` and the symmetry/data part of ``gamma`` carries a
factor 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from .graph import EPS_CLAMP, AdjacencyEstimate, CandidateGraph, EdgeBeliefs, GraphError, ModelParams
from .potentials import pair_data_term


@dataclass(frozen=True)
class ElboBreakdown:
    node_term: float
    pairwise_term: float
    entropy_term: float

    @property
    def total(self) -> float:
        return self.node_term + self.pairwise_term + self.entropy_term

    def to_dict(self) -> dict:
        return {
            "node_term": self.node_term,
            "pairwise_term": self.pairwise_term,
            "entropy_term": self.entropy_term,
            "total": self.total,
        }


@dataclass(frozen=True)
class MfaSchedule:
    mode: Literal["parallel", "sequential"] = "parallel"
    max_iters: int = 10
    elbo_tolerance: float = 1e-6
    damping: float = 0.0

    def __post_init__(self):
        if self.mode not in ("parallel", "sequential"):
            raise ValueError(f"unknown MFA mode {self.mode!r}")
        if self.max_iters < 0 or self.elbo_tolerance < 0:
            raise ValueError("max_iters and elbo_tolerance must be >= 0")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


# -- truncated polynomial helpers ------------------------------------------

def _pmul(p, q):
    """Product of polynomials in z truncated at degree 2; last axis holds coefficients."""
    out = np.empty(np.broadcast_shapes(p.shape, q.shape))
    out[..., 0] = p[..., 0] * q[..., 0]
    out[..., 1] = p[..., 0] * q[..., 1] + p[..., 1] * q[..., 0]
    out[..., 2] = p[..., 0] * q[..., 2] + p[..., 1] * q[..., 1] + p[..., 2] * q[..., 0]
    return out


def _leave_one_out(fac, extra=None):
    """Prefix/suffix products over the slot axis.

    ``fac`` has shape ``(N, K, 3)``.  Returns ``(loo, full)`` where
    ``loo[:, s]`` is the product of all factors except slot ``s``.

    With ``extra`` (same shape) each factor is ``fac + w * extra`` and the
    products are also kept to first order in ``w``; the function then returns
    ``(loo0, loo1)``, the ``w**0`` and ``w**1`` parts of the leave-one-out
    products.
    """
    n, K, _ = fac.shape
    one = np.zeros((n, 3))
    one[:, 0] = 1.0
    zero = np.zeros((n, 3))
    pre0, pre1 = [one], [zero]
    for s in range(K):
        f0 = fac[:, s]
        pre0.append(_pmul(pre0[-1], f0))
        if extra is not None:
            pre1.append(_pmul(pre1[-1], f0) + _pmul(pre0[-2], extra[:, s]))
    suf0, suf1 = [one] * (K + 1), [zero] * (K + 1)
    for s in range(K - 1, -1, -1):
        f0 = fac[:, s]
        suf0[s] = _pmul(f0, suf0[s + 1])
        if extra is not None:
            suf1[s] = _pmul(f0, suf1[s + 1]) + _pmul(extra[:, s], suf0[s + 1])
    loo0 = np.stack([_pmul(pre0[s], suf0[s + 1]) for s in range(K)], axis=1)
    if extra is None:
        return loo0, pre0[K]
    loo1 = np.stack(
        [_pmul(pre0[s], suf1[s + 1]) + _pmul(pre1[s], suf0[s + 1]) for s in range(K)], axis=1
    )
    return loo0, loo1


def _slot_values(values, graph: CandidateGraph, fill=0.0):
    slots = graph.slots
    return np.where(slots >= 0, values[np.maximum(slots, 0)], fill)


def _bernoulli_factors(alpha_slots):
    fac = np.zeros(alpha_slots.shape + (3,))
    fac[..., 0] = 1.0 - alpha_slots
    fac[..., 1] = alpha_slots
    return fac


def degree_distribution(values, graph: CandidateGraph):
    """``P(deg_k = v)`` for v = 0, 1, 2 per node ``(N, 3)``, plus leave-one-out per pair ``(M, 3)``.

    The leave-one-out row for pair ``(k, l)`` is the degree distribution of
    node ``k`` with edge ``(k, l)`` removed.
    """
    fac = _bernoulli_factors(_slot_values(values, graph))
    loo, full = _leave_one_out(fac)
    return full, loo[graph.slots >= 0]


def degree_expectation(alpha_row, v: int) -> float:
    """``E_q[ 1[sum_j s_j = v] ]`` for independent Bernoulli edges with means ``alpha_row``."""
    if v not in (0, 1, 2):
        raise ValueError(f"degree v must be 0, 1 or 2, got {v}")
    poly = np.array([1.0, 0.0, 0.0])
    for a in np.asarray(alpha_row, dtype=float):
        poly = _pmul(poly, np.array([1.0 - a, a, 0.0]))
    return float(poly[v])


# -- ELBO and coordinate derivative ----------------------------------------

def _values(alpha, graph: CandidateGraph) -> np.ndarray:
    if isinstance(alpha, EdgeBeliefs):
        alpha.check_graph(graph)
        return alpha.values
    vals = np.asarray(alpha, dtype=float)
    if vals.shape != (graph.n_pairs,):
        raise GraphError("beliefs are not keyed by this graph's candidate pairs")
    return vals


def _entropy(a):
    return -(a * np.log(a) + (1.0 - a) * np.log1p(-a))


def elbo(alpha, graph: CandidateGraph, theta: ModelParams) -> ElboBreakdown:
    """Evidence lower bound ``E_q[ln p~(S, X)] + H(q)`` (``ln Z`` excluded)."""
    a = _values(alpha, graph)
    src = graph.pairs[:, 0]
    full, _ = degree_distribution(a, graph)
    node = float((full @ theta.beta).sum() + ((graph.features @ theta.a)[src] * a).sum())
    ar = a[graph.reverse]
    data = pair_data_term(graph, theta)
    pair = theta.lam * (1.0 - 2.0 * (a + ar) + 4.0 * a * ar) + (2.0 * a * ar - 1.0) * data
    return ElboBreakdown(node, float(pair.sum()), float(_entropy(a).sum()))


class _Terms:
    """Parameter-dependent per-pair constants reused across layers."""

    def __init__(self, graph: CandidateGraph, theta: ModelParams):
        self.graph = graph
        self.theta = theta
        self.src = graph.pairs[:, 0]
        self.rev = graph.reverse
        self.node_lin = (graph.features @ theta.a)[self.src]
        self.data = pair_data_term(graph, theta)

    def gamma(self, a):
        b0, b1, b2 = self.theta.beta
        _, q = degree_distribution(a, self.graph)
        deg = (b1 - b0) * q[:, 0] + (b2 - b1) * q[:, 1] - b2 * q[:, 2]
        ar = a[self.rev]
        return deg + self.node_lin + 2.0 * ((4.0 * ar - 2.0) * self.theta.lam + 2.0 * ar * self.data)


def gamma_all(alpha, graph: CandidateGraph, theta: ModelParams) -> np.ndarray:
    """``dF/d alpha_kl + logit(alpha_kl)`` for every candidate pair."""
    return _Terms(graph, theta).gamma(_values(alpha, graph))


def gamma(k: int, l: int, alpha, graph: CandidateGraph, theta: ModelParams) -> float:
    """Sigmoid argument of the mean-field update for directed pair ``(k, l)``."""
    p = graph.pair_lookup.get((int(k), int(l)))
    if p is None:
        raise GraphError(f"({k}, {l}) is not a candidate pair")
    return float(gamma_all(alpha, graph, theta)[p])


def clamp(a):
    return np.clip(a, EPS_CLAMP, 1.0 - EPS_CLAMP)


def mfa_step_parallel(alpha, graph: CandidateGraph, theta: ModelParams, damping: float = 0.0) -> EdgeBeliefs:
    a = _values(alpha, graph)
    new = (1.0 - damping) * expit(gamma_all(a, graph, theta)) + damping * a
    layer = alpha.layer + 1 if isinstance(alpha, EdgeBeliefs) else 1
    return EdgeBeliefs(graph.pairs, clamp(new), layer)


def mfa_sweep_sequential(alpha, graph: CandidateGraph, theta: ModelParams) -> EdgeBeliefs:
    """One coordinate-ascent sweep over pairs in ascending ``(k, l)`` order.

    Each coordinate is set to its exact maximizer given the current values of
    all others, so the ELBO cannot decrease.
    """
    a = _values(alpha, graph).astype(float).tolist()
    terms = _Terms(graph, theta)
    b0, b1, b2 = (float(b) for b in theta.beta)
    lam = theta.lam
    rev = terms.rev.tolist()
    const = terms.node_lin.tolist()
    data = terms.data.tolist()
    rows = [[int(p) for p in row if p >= 0] for row in graph.slots]
    lo, hi = EPS_CLAMP, 1.0 - EPS_CLAMP
    for k, row in enumerate(rows):
        for p in row:
            q0, q1, q2 = 1.0, 0.0, 0.0
            for j in row:
                if j != p:
                    aj = a[j]
                    q0, q1, q2 = q0 * (1.0 - aj), q1 * (1.0 - aj) + q0 * aj, q2 * (1.0 - aj) + q1 * aj
            ar = a[rev[p]]
            g = (b1 - b0) * q0 + (b2 - b1) * q1 - b2 * q2 + const[p]
            g += 2.0 * ((4.0 * ar - 2.0) * lam + 2.0 * ar * data[p])
            val = 1.0 / (1.0 + math.exp(-g)) if g >= 0 else math.exp(g) / (1.0 + math.exp(g))
            a[p] = min(max(val, lo), hi)
    layer = alpha.layer + 1 if isinstance(alpha, EdgeBeliefs) else 1
    return EdgeBeliefs(graph.pairs, np.array(a), layer)


def run_mfa(alpha0, graph: CandidateGraph, theta: ModelParams, schedule: MfaSchedule = MfaSchedule()):
    """Iterate mean-field updates; returns ``[(beliefs, elbo), ...]`` starting at layer 0.

    Stops after ``schedule.max_iters`` updates or once the ELBO changes by
    less than ``schedule.elbo_tolerance``.
    """
    if not isinstance(alpha0, EdgeBeliefs):
        alpha0 = EdgeBeliefs(graph.pairs, _values(alpha0, graph))
    cur = alpha0
    traj = [(cur, elbo(cur, graph, theta))]
    for _ in range(schedule.max_iters):
        if schedule.mode == "parallel":
            cur = mfa_step_parallel(cur, graph, theta, schedule.damping)
        else:
            cur = mfa_sweep_sequential(cur, graph, theta)
        f = elbo(cur, graph, theta)
        converged = abs(f.total - traj[-1][1].total) < schedule.elbo_tolerance
        traj.append((cur, f))
        if converged:
            break
    return traj


def threshold(alpha, tau: float = 0.5) -> AdjacencyEstimate:
    """Directed adjacency ``1[alpha > tau]``; use ``.undirected_edges()`` for the AND-symmetrized set."""
    if not 0.0 < tau < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return AdjacencyEstimate(alpha.pairs, (alpha.values > tau).astype(np.int8))
