"""Node and pairwise potentials of the edge MRF and the unnormalized joint log-density.

The pairwise sum runs over *ordered* candidate pairs, so each unordered pair
contributes its potential twice.  The same convention is used by the ELBO
and the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import POS, RADIUS, AdjacencyEstimate, CandidateGraph, GraphError, ModelParams, NodeFeatures


@dataclass(frozen=True)
class PairFeature:
    absdiff: np.ndarray
    prod: np.ndarray


def _packed(x) -> np.ndarray:
    return x.packed if isinstance(x, NodeFeatures) else np.asarray(x, dtype=float)


def pair_feature(x_i, x_j) -> PairFeature:
    """Radius-normalized absolute difference and elementwise product of two nodes."""
    xi, xj = _packed(x_i), _packed(x_j)
    rsum = xi[RADIUS] + xj[RADIUS]
    if not rsum > 0:
        raise GraphError(f"degenerate radius: r_i + r_j = {rsum}")
    absdiff = np.abs(xi - xj)
    absdiff[POS] /= rsum
    return PairFeature(absdiff, xi * xj)


def pair_features(graph: CandidateGraph) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`pair_feature` over all candidate pairs, ``(M, 14)`` each.

    The result is memoized on the (immutable) graph.
    """
    cached = graph.__dict__.get("_pair_features")
    if cached is not None:
        return cached
    x = graph.features
    src, dst = graph.pairs[:, 0], graph.pairs[:, 1]
    rsum = x[src, RADIUS] + x[dst, RADIUS]
    if graph.n_pairs and not (rsum > 0).all():
        raise GraphError("degenerate radius: r_i + r_j <= 0 for some candidate pair")
    absdiff = np.abs(x[src] - x[dst])
    absdiff[:, POS] /= rsum[:, None]
    prod = x[src] * x[dst]
    absdiff.setflags(write=False)
    prod.setflags(write=False)
    graph.__dict__["_pair_features"] = (absdiff, prod)
    return absdiff, prod


def pair_data_term(graph: CandidateGraph, theta: ModelParams) -> np.ndarray:
    """``eta . absdiff + nu . prod`` for every candidate pair."""
    absdiff, prod = pair_features(graph)
    return absdiff @ theta.eta + prod @ theta.nu


def node_potential(s_row, x_i, theta: ModelParams) -> float:
    deg = int(np.sum(s_row))
    prior = theta.beta[deg] if deg <= 2 else 0.0
    return float(prior + theta.a @ _packed(x_i) * deg)


def pairwise_potential(s_ij, s_ji, pf: PairFeature, theta: ModelParams) -> float:
    data = theta.eta @ pf.absdiff + theta.nu @ pf.prod
    return float(theta.lam * (1 - 2 * abs(s_ij - s_ji)) + (2 * s_ij * s_ji - 1) * data)


def joint_log_density_unnorm(S: AdjacencyEstimate, graph: CandidateGraph, theta: ModelParams) -> float:
    """``sum_i phi_i(s_i) + sum_(i,j) phi_ij(s_i, s_j)``, i.e. ``ln p(S, X) + ln Z``."""
    S.check_graph(graph)
    return float(joint_log_density_batch(S.values[None, :], graph, theta)[0])


def joint_log_density_batch(configs, graph: CandidateGraph, theta: ModelParams) -> np.ndarray:
    """Unnormalized log-density of each row of a ``(B, M)`` 0/1 configuration matrix."""
    s = np.asarray(configs, dtype=float)
    if s.ndim != 2 or s.shape[1] != graph.n_pairs:
        raise GraphError("configurations must be (B, M) over the graph's candidate pairs")
    src = graph.pairs[:, 0]
    deg = np.zeros((len(s), graph.n_nodes))
    np.add.at(deg.T, src, s.T)
    prior = np.zeros_like(deg)
    for v in range(3):
        prior += theta.beta[v] * (deg == v)
    node = prior + deg * (graph.features @ theta.a)
    s_rev = s[:, graph.reverse]
    data = pair_data_term(graph, theta)
    pair = theta.lam * (1 - 2 * np.abs(s - s_rev)) + (2 * s * s_rev - 1) * data
    return node.sum(axis=1) + pair.sum(axis=1)
