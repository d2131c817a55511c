"Minimum DFS codes, reduced codes and reconstruction."

import itertools

import networkx as nx
import numpy as np
import pytest

import canonical
import constants
import graphs
from canonical import Quintuple, ReducedCode, Triplet
from conftest import (
    EXAMPLE_CODE,
    EXAMPLE_CODE_FROM_V1,
    EXAMPLE_REDUCED,
    make_random_graph,
    random_permutation,
)
from graphs import LabeledGraph
from utils import Error


def brute_force_isomorphic(g1, g2):
    "Try every node bijection."
    if len(g1.nodes) != len(g2.nodes) or len(g1.edges) != len(g2.edges):
        return False
    edges2 = dict([(frozenset((e.u, e.v)), e.label) for e in g2.edges])
    for mapping in itertools.permutations(range(len(g2.nodes))):
        if any([g1.nodes[i].label != g2.nodes[mapping[i]].label for i in range(len(g1.nodes))]):
            continue
        if all(
            [edges2.get(frozenset((mapping[e.u], mapping[e.v]))) == e.label for e in g1.edges]
        ):
            return True
    return False


class TestOrder:
    def test_labels_break_ties(self):
        assert canonical.compare_entries(
            Quintuple(1, 2, "X", "a", "Y"), Quintuple(1, 2, "X", "b", "Y")
        ) < 0

    def test_backward_before_forward(self):
        assert canonical.compare_edges(Quintuple(2, 0, "", "", ""), Quintuple(2, 3, "", "", "")) < 0
        assert canonical.compare_edges(Quintuple(1, 2, "", "", ""), Quintuple(2, 0, "", "", "")) < 0

    def test_forward_order(self):
        # Smaller t_v first; for equal t_v the larger t_u first.
        assert canonical.compare_edges(Quintuple(0, 2, "", "", ""), Quintuple(1, 3, "", "", "")) < 0
        assert canonical.compare_edges(Quintuple(1, 3, "", "", ""), Quintuple(0, 3, "", "", "")) < 0

    def test_backward_order(self):
        assert canonical.compare_edges(Quintuple(2, 0, "", "", ""), Quintuple(3, 0, "", "", "")) < 0
        assert canonical.compare_edges(Quintuple(3, 0, "", "", ""), Quintuple(3, 1, "", "", "")) < 0

    def test_prefix_smaller(self):
        a = canonical.DfsCode([Quintuple(0, 1, "X", "a", "X")])
        b = canonical.DfsCode([Quintuple(0, 1, "X", "a", "X"), Quintuple(1, 2, "X", "a", "X")])
        assert a < b
        assert not b < a


class TestEnumerate:
    def test_from_first_node(self, example):
        assert str(canonical.enumerate_dfs_code(example, 0)) == EXAMPLE_CODE

    def test_from_second_node(self, example):
        assert str(canonical.enumerate_dfs_code(example, 1)) == EXAMPLE_CODE_FROM_V1

    def test_single_edge(self):
        g = LabeledGraph(["X", "Y"], [(0, 1, "a")])
        assert str(canonical.enumerate_dfs_code(g, 0)) == "<0,1,X,a,Y>"

    def test_disconnected(self):
        g = LabeledGraph(["X", "Y", "Z"], [(0, 1, "a")])
        with pytest.raises(Error) as excinfo:
            canonical.enumerate_dfs_code(g, 0)
        assert excinfo.value.kind == constants.DATA_ERROR

    def test_code_length(self, random_graph):
        for seed in range(10):
            g = random_graph(seed, 7)
            assert len(canonical.enumerate_dfs_code(g, 3)) == len(g.edges)


class TestMinimum:
    def test_example(self, example):
        assert str(canonical.min_dfs_code(example)) == EXAMPLE_CODE

    def test_single_edge(self):
        g = LabeledGraph(["Y", "X"], [(0, 1, "a")])
        assert str(canonical.min_dfs_code(g)) == "<0,1,X,a,Y>"

    def test_no_edges(self):
        with pytest.raises(Error) as excinfo:
            canonical.min_dfs_code(LabeledGraph(["X"], []))
        assert excinfo.value.kind == constants.DATA_ERROR

    def test_disconnected(self):
        g = LabeledGraph(["X", "Y", "X", "Y"], [(0, 1, "a"), (2, 3, "a")])
        with pytest.raises(Error):
            canonical.min_dfs_code(g)

    def test_permutation_invariance(self):
        generator = np.random.default_rng(3)
        for i in range(200):
            g = make_random_graph(generator, int(generator.integers(2, 11)), edge_labels="ab")
            code = canonical.min_dfs_code(g)
            for j in range(20):
                assert canonical.min_dfs_code(random_permutation(g, generator)) == code

    def test_exhaustive(self):
        generator = np.random.default_rng(4)
        for i in range(100):
            g = make_random_graph(generator, int(generator.integers(2, 7)), extra=0.2)
            assert canonical.min_dfs_code(g) == canonical.exhaustive_min_dfs_code(g)

    @pytest.mark.slow
    def test_exhaustive_full(self):
        generator = np.random.default_rng(5)
        for i in range(500):
            g = make_random_graph(generator, int(generator.integers(2, 8)), extra=0.2)
            assert canonical.min_dfs_code(g) == canonical.exhaustive_min_dfs_code(g)

    def test_example_is_minimum(self, example):
        codes = list(canonical.all_dfs_codes(example))
        assert min(codes) == canonical.min_dfs_code(example)
        assert all([len(code) == 5 for code in codes])

    def test_parallel(self, random_graph):
        corpus = [random_graph(seed, 6) for seed in range(6)]
        corpus.append(LabeledGraph(["X", "Y", "Z"], [(0, 1, "a")], gid="split"))
        sequential = canonical.min_dfs_codes(corpus)
        assert canonical.min_dfs_codes(corpus, workers=2) == sequential
        assert sequential[-1] is None
        assert sequential[0] == canonical.min_dfs_code(corpus[0])


class TestReduce:
    def test_example(self, example):
        reduced = canonical.reduce(canonical.min_dfs_code(example))
        assert isinstance(reduced, ReducedCode)
        assert str(reduced) == EXAMPLE_REDUCED

    def test_expand(self, example):
        code = canonical.min_dfs_code(example)
        assert canonical.expand(canonical.reduce(code)) == code

    def test_single(self):
        code = canonical.DfsCode([Quintuple(0, 1, "X", "a", "Y")])
        assert canonical.reduce(code) == ReducedCode([Triplet(0, 1, ("X", "a", "Y"))])

    def test_order_preserved(self):
        generator = np.random.default_rng(6)
        codes = []
        for i in range(30):
            g = make_random_graph(generator, int(generator.integers(2, 6)))
            codes.extend(list(canonical.all_dfs_codes(g))[:5])
        for a, b in itertools.combinations(codes, 2):
            expected = canonical.compare_codes(a, b)
            assert canonical.compare_codes(canonical.reduce(a), canonical.reduce(b)) == expected


class TestReconstruct:
    def test_example(self, example):
        code = canonical.min_dfs_code(example)
        g, report = canonical.graph_from_reduced(canonical.reduce(code))
        assert canonical.min_dfs_code(g) == code
        assert report.kept == 5
        assert report.discarded == []

    def test_single_edge(self):
        code = ReducedCode([Triplet(0, 1, ("X", "a", "Y"))])
        g, report = canonical.graph_from_reduced(code)
        assert g.node_labels == ("X", "Y")
        assert g.edges == (graphs.Edge(0, 1, "a"),)

    def test_unseen_timestamps(self):
        code = ReducedCode(
            [Triplet(0, 1, ("X", "a", "X")), Triplet(5, 9, ("X", "a", "X"))]
        )
        g, report = canonical.graph_from_reduced(code)
        assert len(g.nodes) == 2
        assert len(g.edges) == 1
        assert len(report.discarded) == 1
        assert report.discarded[0][0] == 1

    def test_strict(self):
        code = ReducedCode(
            [Triplet(0, 1, ("X", "a", "X")), Triplet(5, 9, ("X", "a", "X"))]
        )
        with pytest.raises(Error) as excinfo:
            canonical.graph_from_reduced(code, policy=canonical.STRICT)
        assert excinfo.value.kind == constants.DATA_ERROR

    def test_bad_start(self):
        code = ReducedCode([Triplet(1, 2, ("X", "a", "X")), Triplet(0, 1, ("X", "a", "X"))])
        g, report = canonical.graph_from_reduced(code)
        assert len(g.nodes) == 0
        assert len(report.discarded) == 2

    def test_conflicts(self):
        code = ReducedCode(
            [
                Triplet(0, 1, ("X", "a", "Y")),
                Triplet(1, 2, ("Z", "a", "X")),  # Label of node 1 is Y.
                Triplet(1, 0, ("Y", "a", "X")),  # Duplicate edge.
                Triplet(1, 1, ("Y", "a", "Y")),  # Self-loop.
                Triplet(1, 2, ("Y", "b", "X")),
            ]
        )
        g, report = canonical.graph_from_reduced(code)
        assert g.node_labels == ("X", "Y", "X")
        assert report.kept == 2
        assert [d[2] for d in report.discarded] == [
            "node label conflict",
            "duplicate edge",
            "self-loop",
        ]
        assert report.as_dict()["discarded"][0]["position"] == 1

    def test_round_trip(self):
        generator = np.random.default_rng(7)
        for i in range(500):
            g = make_random_graph(generator, int(generator.integers(2, 8)))
            code = canonical.min_dfs_code(g)
            rebuilt, report = canonical.graph_from_reduced(canonical.reduce(code))
            assert not report.discarded
            assert canonical.is_isomorphic(rebuilt, g)


class TestIsomorphism:
    def test_permuted(self, example):
        generator = np.random.default_rng(8)
        assert canonical.is_isomorphic(example, random_permutation(example, generator))

    def test_edge_labels(self):
        g1 = LabeledGraph(["X", "Y"], [(0, 1, "a")])
        g2 = LabeledGraph(["X", "Y"], [(0, 1, "b")])
        assert not canonical.is_isomorphic(g1, g2)

    def test_brute_force(self):
        generator = np.random.default_rng(9)
        for i in range(100):
            n = int(generator.integers(2, 7))
            g1 = make_random_graph(generator, n, node_labels="AB", edge_labels="a", extra=0.3)
            if generator.random() < 0.5:
                g2 = random_permutation(g1, generator)
            else:
                g2 = make_random_graph(generator, n, node_labels="AB", edge_labels="a", extra=0.3)
            assert canonical.is_isomorphic(g1, g2) == brute_force_isomorphic(g1, g2)

    def test_networkx(self):
        generator = np.random.default_rng(10)
        match = lambda a, b: a["label"] == b["label"]
        for i in range(100):
            n = int(generator.integers(3, 9))
            g1 = make_random_graph(generator, n, node_labels="AB", edge_labels="ab", extra=0.2)
            g2 = make_random_graph(generator, n, node_labels="AB", edge_labels="ab", extra=0.2)
            expected = nx.is_isomorphic(
                graphs.to_networkx(g1),
                graphs.to_networkx(g2),
                node_match=match,
                edge_match=match,
            )
            assert canonical.is_isomorphic(g1, g2) == expected
