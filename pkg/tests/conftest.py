"Shared fixtures: the example graph, random labeled graphs, vocabularies."

import numpy as np
import pytest

import canonical
import dataset
import graphs
from graphs import LabeledGraph

EXAMPLE_TEXT = """t # 0
v 0 X
v 1 X
v 2 Y
v 3 Z
e 0 1 a
e 1 2 a
e 2 0 b
e 2 3 a
e 3 1 b
"""

EXAMPLE_CODE = "<0,1,X,a,X> <1,2,X,a,Y> <2,0,Y,b,X> <2,3,Y,a,Z> <3,1,Z,b,X>"
EXAMPLE_CODE_FROM_V1 = "<0,1,X,a,X> <1,2,X,b,Y> <2,0,Y,a,X> <2,3,Y,a,Z> <3,0,Z,b,X>"
EXAMPLE_REDUCED = "<0,1,(X,a,X)> <1,2,(X,a,Y)> <2,0,(Y,b,X)> <2,3,(Y,a,Z)> <3,1,(Z,b,X)>"


def make_random_graph(
    generator,
    n,
    node_labels="ABC",
    edge_labels="ab",
    extra=0.3,
    gid=None,
):
    "Connected graph: random spanning tree plus each other pair with probability extra."
    nodes = [str(generator.choice(list(node_labels))) for i in range(n)]
    edges = []
    pairs = set()
    for v in range(1, n):
        u = int(generator.integers(v))
        edges.append((u, v, str(generator.choice(list(edge_labels)))))
        pairs.add((u, v))
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in pairs and generator.random() < extra:
                edges.append((u, v, str(generator.choice(list(edge_labels)))))
    return LabeledGraph(nodes, edges, gid=gid)


def random_permutation(g, generator):
    return graphs.permute(g, [int(i) for i in generator.permutation(len(g.nodes))])


@pytest.fixture
def example():
    return graphs.parse_graphs(EXAMPLE_TEXT)[0]


@pytest.fixture
def example_file(tmp_path):
    path = tmp_path / "example.txt"
    path.write_text(EXAMPLE_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def random_graph():
    "Factory of random connected graphs: random_graph(seed, n, **options)."

    def make(seed, n, **options):
        return make_random_graph(np.random.default_rng(seed), n, **options)

    return make


@pytest.fixture
def example_vocabulary(example):
    code = canonical.reduce(canonical.min_dfs_code(example))
    return dataset.build_vocabulary([code], len(example.nodes))


@pytest.fixture
def toy_corpus():
    "Twenty graphs of 4 to 8 nodes, 3 node labels, 2 edge labels."
    generator = np.random.default_rng(20)
    return [
        make_random_graph(generator, int(generator.integers(4, 9)), extra=0.15, gid=f"toy{i}")
        for i in range(20)
    ]
