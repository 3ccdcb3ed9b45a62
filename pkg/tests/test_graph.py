import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfnrefine.graph import (
    AdjacencyEstimate,
    CandidateGraph,
    EdgeBeliefs,
    GraphError,
    ModelParams,
    NodeFeatures,
    build_knn_neighborhoods,
    symmetrize_neighborhoods,
    validate_graph,
)
from mfnrefine.io import graph_from_dict, graph_to_dict, load_graph, load_model, save_graph, save_model

from conftest import random_features, random_params


def line(xs):
    pos = np.zeros((len(xs), 3))
    pos[:, 0] = xs
    return pos


class TestKnn:
    def test_collinear_L1(self):
        assert build_knn_neighborhoods(line([0, 1, 2]), 1) == [(1,), (0,), (1,)]

    def test_collinear_complete(self):
        assert build_knn_neighborhoods(line([0, 1, 2]), 2) == [(1, 2), (0, 2), (0, 1)]

    def test_tie_goes_to_lower_index(self):
        # nodes 1 and 2 are both at distance 1 from node 0
        assert build_knn_neighborhoods(line([0, 1, -1]), 1)[0] == (1,)
        assert build_knn_neighborhoods(line([0, -1, 1]), 1)[0] == (1,)

    def test_empty_graph(self):
        with pytest.raises(GraphError):
            build_knn_neighborhoods(line([0.0]), 3)

    def test_accepts_node_features(self):
        nodes = [NodeFeatures([x, 0, 0, 1, 1, 0, 0], np.zeros(7)) for x in (0, 1, 2)]
        assert build_knn_neighborhoods(nodes, 1) == [(1,), (0,), (1,)]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 5))
    def test_permutation_equivariant(self, seed, n, L):
        rng = np.random.default_rng(seed)
        pos = rng.normal(size=(n, 3))
        perm = rng.permutation(n)
        base = build_knn_neighborhoods(pos, L)
        permuted = build_knn_neighborhoods(pos[perm], L)
        # new index i is old node perm[i]
        for i in range(n):
            assert sorted(perm[j] for j in permuted[i]) == sorted(base[perm[i]])


class TestSymmetrize:
    def test_union_closure(self):
        assert symmetrize_neighborhoods([(1,), ()]) == [(1,), (0,)]

    def test_symmetric_unchanged(self):
        nbs = [(1, 2), (0,), (0,)]
        assert symmetrize_neighborhoods(nbs) == nbs

    def test_no_transitive_closure(self):
        out = symmetrize_neighborhoods([(1,), (2,), ()])
        pairs = {(k, l) for k, nb in enumerate(out) for l in nb}
        assert pairs == {(0, 1), (1, 0), (1, 2), (2, 1)}

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.integers(0, 7), max_size=4), min_size=8, max_size=8))
    def test_idempotent(self, nbs):
        nbs = [[j for j in nb if j != k] for k, nb in enumerate(nbs)]
        once = symmetrize_neighborhoods(nbs)
        assert symmetrize_neighborhoods(once) == once


class TestValidate:
    def test_valid_synthetic(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 10), L=3, gt_edges=[])
        assert validate_graph(g) == []

    def test_uncovered_gt_edge(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 10), L=2)
        far = next((i, j) for i in range(10) for j in range(i + 1, 10)
                   if j not in g.neighborhoods[i])
        g2 = CandidateGraph(g.features, g.neighborhoods, frozenset([far]))
        report = validate_graph(g2)
        assert len(report) == 1 and "uncovered gt edge" in report[0]

    def test_negative_radius(self, rng):
        f = random_features(rng, 6)
        f[2, 3] = -0.5
        g = CandidateGraph(f, tuple(symmetrize_neighborhoods(build_knn_neighborhoods(f, 2))))
        report = validate_graph(g)
        assert len(report) == 1 and "radius" in report[0]

    def test_asymmetric_and_self_pairs(self, rng):
        g = CandidateGraph(random_features(rng, 3), ((0, 1), (), ()))
        report = validate_graph(g)
        assert any("self-pair" in r for r in report)
        assert any("non-symmetric" in r for r in report)


class TestTypes:
    def test_node_features_layout(self):
        nf = NodeFeatures(np.arange(7.0), np.ones(7))
        assert nf.packed.shape == (14,)
        assert nf.radius == 3.0
        with pytest.raises(GraphError):
            NodeFeatures(np.zeros(6), np.zeros(7))

    def test_pairs_reverse_and_slots(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 8), L=3)
        pairs = g.pairs
        assert (np.lexsort((pairs[:, 1], pairs[:, 0])) == np.arange(len(pairs))).all()
        np.testing.assert_array_equal(pairs[g.reverse], pairs[:, ::-1])
        flat = g.slots[g.slots >= 0]
        np.testing.assert_array_equal(flat, np.arange(g.n_pairs))

    def test_beliefs_clamped(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 4), L=3)
        b = EdgeBeliefs(g.pairs, np.linspace(0, 1, g.n_pairs))
        assert b.values.min() == 1e-7 and b.values.max() == 1 - 1e-7

    def test_adjacency_rejects_non_binary(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 3), L=2)
        with pytest.raises(GraphError):
            AdjacencyEstimate(g.pairs, np.full(g.n_pairs, 2))

    def test_subgraph_induces_gt(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 6), L=5, gt_edges=[(0, 1), (1, 2), (3, 4)])
        sub = g.subgraph([1, 2, 4])
        assert sub.gt_edges == {(0, 1)}
        assert sub.meta["node_ids"] == [1, 2, 4]
        assert validate_graph(sub) == []


class TestSerialization:
    def test_graph_roundtrip_bit_exact(self, rng, tmp_path):
        g = CandidateGraph.from_features(random_features(rng, 12) * np.pi, L=4, gt_edges=[(0, 1)], meta={"fold": 2})
        save_graph(g, tmp_path / "g.json")
        back = load_graph(tmp_path / "g.json")
        np.testing.assert_array_equal(back.features, g.features)
        assert back.neighborhoods == g.neighborhoods
        assert back.gt_edges == g.gt_edges
        assert back.meta["fold"] == 2

    def test_graph_schema(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 3), L=2, gt_edges=[(0, 2)])
        doc = json.loads(json.dumps(graph_to_dict(g)))
        assert set(doc) == {"nodes", "gt_edges", "meta"}
        assert set(doc["nodes"][0]) == {"id", "mean", "var"}
        assert len(doc["nodes"][0]["mean"]) == 7 and len(doc["nodes"][0]["var"]) == 7
        assert doc["gt_edges"] == [[0, 2]]

    def test_graph_without_neighborhoods_rebuilds_knn(self, rng):
        g = CandidateGraph.from_features(random_features(rng, 9), L=3)
        doc = graph_to_dict(g)
        del doc["meta"]["neighborhoods"]
        assert graph_from_dict(doc, L=3).neighborhoods == g.neighborhoods

    def test_model_roundtrip_bit_exact(self, rng, tmp_path):
        theta = random_params(rng)
        save_model(theta, tmp_path / "m.json")
        assert load_model(tmp_path / "m.json") == theta
        doc = json.loads((tmp_path / "m.json").read_text())
        assert set(doc) == {"beta", "lambda", "a", "eta", "nu"}

    def test_model_missing_field(self):
        with pytest.raises(GraphError):
            ModelParams.from_dict({"beta": [0, 0, 0]})
