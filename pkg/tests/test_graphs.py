"Labeled graphs and the transaction file format."

import numpy as np
import pytest

import constants
import graphs
from conftest import make_random_graph
from graphs import LabeledGraph
from utils import Error


class TestParse:
    def test_example(self, example):
        assert example.gid == "0"
        assert example.node_labels == ("X", "X", "Y", "Z")
        assert len(example.edges) == 5
        assert example.edge_label(3, 1) == "b"
        assert example.edge_label(0, 3) is None

    def test_empty(self):
        assert graphs.parse_graphs("") == []

    def test_file(self, example_file, example):
        assert graphs.parse_graph_file(example_file) == [example]

    def test_self_loop(self):
        with pytest.raises(Error) as excinfo:
            graphs.parse_graphs("t # g1\nv 0 X\ne 0 0 a\n")
        assert excinfo.value.kind == constants.VALIDATION_ERROR
        assert "g1" in str(excinfo.value)

    def test_duplicate_edge(self):
        with pytest.raises(Error) as excinfo:
            graphs.parse_graphs("t # g2\nv 0 X\nv 1 X\ne 0 1 a\ne 1 0 b\n")
        assert excinfo.value.kind == constants.VALIDATION_ERROR
        assert "g2" in str(excinfo.value)

    @pytest.mark.parametrize(
        "text,number",
        [
            ("t # 0\nv 0 X\nv 1 X\ne 0 1 a\nv 2 X\n", 5),
            ("t # 0\nv 0 X\ne 0 1 a\n", 3),
            ("t # 0\nv 1 X\n", 2),
            ("t # 0\nx 0 X\n", 2),
            ("v 0 X\n", 1),
            ("t # 0\nv 0\n", 2),
            ("t #\n", 1),
        ],
    )
    def test_malformed(self, text, number):
        with pytest.raises(Error) as excinfo:
            graphs.parse_graphs(text)
        assert excinfo.value.kind == constants.PARSE_ERROR
        assert str(excinfo.value).startswith(f"line {number}:")


class TestWrite:
    def test_round_trip(self, tmp_path, example):
        path = tmp_path / "out.txt"
        graphs.write_graph_file([example], path)
        assert graphs.parse_graph_file(path) == [example]

    def test_round_trip_random(self, tmp_path):
        generator = np.random.default_rng(1)
        corpus = [make_random_graph(generator, 6, gid=f"r{i}") for i in range(10)]
        path = tmp_path / "out.txt"
        graphs.write_graph_file(corpus, path)
        result = graphs.parse_graph_file(path)
        assert result == corpus
        assert [g.gid for g in result] == [g.gid for g in corpus]

    def test_empty(self, tmp_path):
        path = tmp_path / "out.txt"
        graphs.write_graph_file([], path)
        assert path.read_text() == ""

    def test_whitespace_label(self, tmp_path):
        path = tmp_path / "out.txt"
        g = LabeledGraph(["X 1", "Y"], [(0, 1, "a")], gid="w")
        with pytest.raises(Error) as excinfo:
            graphs.write_graph_file([g], path)
        assert excinfo.value.kind == constants.VALIDATION_ERROR
        assert not path.exists()


class TestStatistics:
    def test_degree_sequence(self, example):
        assert graphs.degree_sequence(example) == [2, 3, 3, 2]

    def test_single_node(self):
        assert graphs.degree_sequence(LabeledGraph(["X"], [])) == [0]

    def test_triangle(self):
        g = LabeledGraph(["X"] * 3, [(0, 1, "a"), (1, 2, "a"), (2, 0, "a")])
        assert graphs.degree_sequence(g) == [2, 2, 2]

    def test_degree_sum(self):
        generator = np.random.default_rng(2)
        for i in range(20):
            g = make_random_graph(generator, int(generator.integers(1, 10)))
            assert sum(graphs.degree_sequence(g)) == 2 * len(g.edges)

    def test_alphabets(self, example):
        alphabets = graphs.LabelAlphabets.from_graphs([example])
        assert alphabets.node_labels == ("X", "Y", "Z")
        assert alphabets.edge_labels == ("a", "b")


class TestStructure:
    def test_connected(self, example):
        assert example.is_connected()
        assert not LabeledGraph(["X", "Y"], []).is_connected()

    def test_components(self):
        g = LabeledGraph(["X", "Y", "Z", "W"], [(0, 2, "a")], gid="c")
        parts = graphs.components(g)
        assert [p.node_labels for p in parts] == [("X", "Z"), ("Y",), ("W",)]
        assert parts[0].edges[0].label == "a"

    def test_permute(self, example):
        permuted = graphs.permute(example, [3, 2, 1, 0])
        assert permuted.node_labels == ("Z", "Y", "X", "X")
        assert sorted(graphs.degree_sequence(permuted)) == [2, 2, 3, 3]

    def test_networkx(self, example):
        nxg = graphs.to_networkx(example)
        assert nxg.number_of_edges() == 5
        assert nxg.nodes[3]["label"] == "Z"
        assert nxg.edges[2, 0]["label"] == "b"
