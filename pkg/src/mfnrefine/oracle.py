"""Brute-force reference computations for small instances.

Everything here is computed by enumerating configurations or by finite
differences, never from the closed forms in :mod:`mfnrefine.inference`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .graph import CandidateGraph, GradientSet, ModelParams
from .inference import elbo
from .potentials import joint_log_density_batch

MAX_ENUM_PAIRS = 20
MAX_ROW = 10


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class ExactPosterior:
    log_partition: float
    marginals: np.ndarray
    pairs: np.ndarray
    probabilities: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "log_partition": self.log_partition,
            "pairs": self.pairs.tolist(),
            "marginals": self.marginals.tolist(),
        }
        if self.probabilities is not None:
            out["probabilities"] = self.probabilities.tolist()
        return out


def all_configurations(m: int) -> np.ndarray:
    """``(2**m, m)`` matrix of every binary configuration, first pair as most significant bit."""
    codes = np.arange(2**m, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def _check_size(graph: CandidateGraph):
    if graph.n_pairs > MAX_ENUM_PAIRS:
        raise OracleSizeError(f"{graph.n_pairs} candidate pairs exceed the enumeration cap of {MAX_ENUM_PAIRS}")


def enumerate_posterior(graph: CandidateGraph, theta: ModelParams) -> ExactPosterior:
    """Exact ``ln Z`` and edge marginals by summing over all ``2**M`` configurations."""
    _check_size(graph)
    configs = all_configurations(graph.n_pairs)
    logp = joint_log_density_batch(configs, graph, theta)
    log_z = float(logsumexp(logp))
    prob = np.exp(logp - log_z)
    marg = prob @ configs
    keep = prob if graph.n_nodes <= 4 else None
    return ExactPosterior(log_z, marg, graph.pairs, keep)


def brute_elbo(alpha_values, graph: CandidateGraph, theta: ModelParams) -> float:
    """``E_q[ln p~(S)] + H(q)`` by enumeration, ``q`` the product of Bernoullis."""
    _check_size(graph)
    a = np.asarray(alpha_values, dtype=float)
    configs = all_configurations(graph.n_pairs)
    logq = np.where(configs == 1, np.log(a), np.log1p(-a)).sum(axis=1)
    q = np.exp(logq)
    logp = joint_log_density_batch(configs, graph, theta)
    return float(q @ logp - q @ logq)


def brute_degree_distribution(alpha_row) -> np.ndarray:
    """``P(deg = v)`` for ``v = 0..len(row)`` by summing over all ``2**len(row)`` row states."""
    a = np.asarray(alpha_row, dtype=float)
    if len(a) > MAX_ROW:
        raise OracleSizeError(f"row of length {len(a)} exceeds {MAX_ROW}")
    configs = all_configurations(len(a)).astype(bool)
    prob = np.where(configs, a, 1.0 - a).prod(axis=1)
    return np.bincount(configs.sum(axis=1), weights=prob, minlength=len(a) + 1)


def brute_degree_expectation(alpha_row, v: int) -> float:
    dist = brute_degree_distribution(alpha_row)
    return float(dist[v]) if 0 <= v < len(dist) else 0.0


def numeric_elbo_derivative(alpha_values, pair: int, graph: CandidateGraph, theta: ModelParams, h: float = 1e-6) -> float:
    """Centered difference of the ELBO total in coordinate ``pair``."""
    a = np.array(alpha_values, dtype=float)
    if not 2 * h <= a[pair] <= 1 - 2 * h:
        raise ValueError("alpha too close to the clamp boundary for a centered difference")
    up, dn = a.copy(), a.copy()
    up[pair] += h
    dn[pair] -= h
    return (elbo(up, graph, theta).total - elbo(dn, graph, theta).total) / (2 * h)


def numeric_param_gradient(loss_fn, theta: ModelParams, h: float = 1e-5) -> GradientSet:
    """Centered finite-difference gradient of ``loss_fn(theta)``."""
    if h <= 0:
        raise ValueError("step must be positive")
    vec = theta.to_vector()
    grad = np.zeros_like(vec)
    for i in range(len(vec)):
        up, dn = vec.copy(), vec.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (loss_fn(ModelParams.from_vector(up)) - loss_fn(ModelParams.from_vector(dn))) / (2 * h)
    return GradientSet.from_vector(grad)
