"Labeled graphs; data model, transaction file format and basic statistics."

import logging
from pathlib import Path
from typing import NamedTuple

import networkx as nx

import constants
import utils
from utils import Error

logger = logging.getLogger(__name__)


class Node(NamedTuple):
    index: int
    label: str


class Edge(NamedTuple):
    u: int
    v: int
    label: str


class LabeledGraph:
    """Undirected graph with one text label per node and per edge.
    No self-loops, no duplicate edges. Not to be modified after creation.
    """

    def __init__(self, nodes, edges, gid=None):
        """The nodes may be given as labels or as Node records; the edges as
        (u, v, label) tuples or Edge records.
        """
        self.gid = gid
        self.nodes = tuple(
            [
                Node(i, n.label if isinstance(n, Node) else n)
                for i, n in enumerate(nodes)
            ]
        )
        self.edges = tuple([Edge(int(u), int(v), label) for u, v, label in edges])
        self.validate()
        adjacency = [[] for n in self.nodes]
        for edge in self.edges:
            adjacency[edge.u].append((edge.v, edge.label))
            adjacency[edge.v].append((edge.u, edge.label))
        self.adjacency = tuple([tuple(a) for a in adjacency])

    def __repr__(self):
        return f"LabeledGraph('{self.gid}', {len(self.nodes)} nodes, {len(self.edges)} edges)"

    def __eq__(self, other):
        "Identical node and edge lists; not isomorphism."
        if not isinstance(other, LabeledGraph):
            return False
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self):
        return hash((self.nodes, self.edges))

    def validate(self):
        "Raise a validation error if any invariant is violated."
        pairs = set()
        for node in self.nodes:
            if not isinstance(node.label, str) or not node.label:
                raise Error(
                    f"graph {self.gid}: node {node.index} has no label",
                    constants.VALIDATION_ERROR,
                )
        for edge in self.edges:
            if not isinstance(edge.label, str) or not edge.label:
                raise Error(
                    f"graph {self.gid}: edge {edge.u}-{edge.v} has no label",
                    constants.VALIDATION_ERROR,
                )
            for index in (edge.u, edge.v):
                if not 0 <= index < len(self.nodes):
                    raise Error(
                        f"graph {self.gid}: edge {edge.u}-{edge.v} refers to undefined node {index}",
                        constants.VALIDATION_ERROR,
                    )
            if edge.u == edge.v:
                raise Error(
                    f"graph {self.gid}: self-loop at node {edge.u}",
                    constants.VALIDATION_ERROR,
                )
            pair = frozenset((edge.u, edge.v))
            if pair in pairs:
                raise Error(
                    f"graph {self.gid}: duplicate edge {edge.u}-{edge.v}",
                    constants.VALIDATION_ERROR,
                )
            pairs.add(pair)

    @property
    def node_labels(self):
        return tuple([n.label for n in self.nodes])

    def edge_label(self, u, v):
        "Return the label of the edge between the nodes, or None."
        for neighbor, label in self.adjacency[u]:
            if neighbor == v:
                return label
        return None

    def is_connected(self):
        if not self.nodes:
            return False
        return nx.is_connected(to_networkx(self))


class LabelAlphabets(NamedTuple):
    "Node and edge label sets; deduplicated and sorted."

    node_labels: tuple
    edge_labels: tuple

    @classmethod
    def from_graphs(cls, graphs):
        node_labels = set()
        edge_labels = set()
        for g in graphs:
            node_labels.update(g.node_labels)
            edge_labels.update([e.label for e in g.edges])
        return cls(tuple(sorted(node_labels)), tuple(sorted(edge_labels)))


def parse_graph_file(path):
    "Read the graphs in transaction format from the file; return a list."
    with open(path, encoding=constants.ENCODING) as infile:
        return parse_graphs(infile.read())


def parse_graphs(text):
    "Parse the graphs in transaction format from the text; return a list."
    result = []
    current = None

    def finish():
        if current is not None:
            gid, nodes, edges = current
            result.append(LabeledGraph(nodes, edges, gid=gid))

    for number, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        parts = line.split(" ")
        kind = parts[0]
        if kind == constants.GRAPH_LINE:
            if len(parts) != 3 or parts[1] != "#" or not parts[2]:
                raise Error(f"line {number}: malformed graph line", constants.PARSE_ERROR)
            finish()
            current = (parts[2], [], [])
        elif kind == constants.NODE_LINE:
            if current is None:
                raise Error(f"line {number}: node before any graph", constants.PARSE_ERROR)
            if len(parts) != 3 or not parts[2]:
                raise Error(f"line {number}: malformed node line", constants.PARSE_ERROR)
            gid, nodes, edges = current
            if edges:
                raise Error(
                    f"line {number}: node after edge in graph {gid}",
                    constants.PARSE_ERROR,
                )
            try:
                index = int(parts[1])
            except ValueError:
                raise Error(f"line {number}: invalid node index", constants.PARSE_ERROR)
            if index != len(nodes):
                raise Error(
                    f"line {number}: node index {index} out of sequence in graph {gid}",
                    constants.PARSE_ERROR,
                )
            nodes.append(parts[2])
        elif kind == constants.EDGE_LINE:
            if current is None:
                raise Error(f"line {number}: edge before any graph", constants.PARSE_ERROR)
            if len(parts) != 4 or not parts[3]:
                raise Error(f"line {number}: malformed edge line", constants.PARSE_ERROR)
            gid, nodes, edges = current
            try:
                u, v = int(parts[1]), int(parts[2])
            except ValueError:
                raise Error(f"line {number}: invalid edge endpoint", constants.PARSE_ERROR)
            for index in (u, v):
                if not 0 <= index < len(nodes):
                    raise Error(
                        f"line {number}: undeclared node {index} in graph {gid}",
                        constants.PARSE_ERROR,
                    )
            edges.append((u, v, parts[3]))
        else:
            raise Error(f"line {number}: unknown line type '{kind}'", constants.PARSE_ERROR)
    finish()
    return result


def format_graphs(graphs):
    "Return the graphs as text in transaction format."
    lines = []
    for number, g in enumerate(graphs):
        gid = number if g.gid is None else g.gid
        if not utils.whitespace_free(str(gid)):
            raise Error(f"graph id '{gid}' contains whitespace", constants.VALIDATION_ERROR)
        lines.append(f"{constants.GRAPH_LINE} # {gid}")
        for node in g.nodes:
            if not utils.whitespace_free(node.label):
                raise Error(
                    f"graph {gid}: node label '{node.label}' must be whitespace-free",
                    constants.VALIDATION_ERROR,
                )
            lines.append(f"{constants.NODE_LINE} {node.index} {node.label}")
        for edge in g.edges:
            if not utils.whitespace_free(edge.label):
                raise Error(
                    f"graph {gid}: edge label '{edge.label}' must be whitespace-free",
                    constants.VALIDATION_ERROR,
                )
            lines.append(f"{constants.EDGE_LINE} {edge.u} {edge.v} {edge.label}")
    if not lines:
        return ""
    return "\n".join(lines) + "\n"


def write_graph_file(graphs, path):
    "Write the graphs in transaction format to the file."
    # Format everything first; nothing is written for invalid input.
    text = format_graphs(graphs)
    with open(path, "w", encoding=constants.ENCODING, newline="\n") as outfile:
        outfile.write(text)
    logger.debug("wrote %s graphs to %s", len(graphs), path)


def degree_sequence(g):
    "Return the number of neighbors for each node, in node order."
    return [len(a) for a in g.adjacency]


def to_networkx(g):
    "Return a networkx graph with 'label' attributes on nodes and edges."
    result = nx.Graph()
    for node in g.nodes:
        result.add_node(node.index, label=node.label)
    for edge in g.edges:
        result.add_edge(edge.u, edge.v, label=edge.label)
    return result


def permute(g, permutation):
    "Return a copy of the graph where node i becomes node permutation[i]."
    nodes = [None] * len(g.nodes)
    for node in g.nodes:
        nodes[permutation[node.index]] = node.label
    edges = [(permutation[e.u], permutation[e.v], e.label) for e in g.edges]
    return LabeledGraph(nodes, edges, gid=g.gid)


def subgraph(g, indices, gid=None):
    """Return the subgraph induced by the given nodes, renumbered
    in the given order.
    """
    lookup = dict([(index, i) for i, index in enumerate(indices)])
    nodes = [g.nodes[index].label for index in indices]
    edges = [
        (lookup[e.u], lookup[e.v], e.label)
        for e in g.edges
        if e.u in lookup and e.v in lookup
    ]
    return LabeledGraph(nodes, edges, gid=gid)


def components(g):
    "Return the connected components as subgraphs."
    parts = sorted([sorted(c) for c in nx.connected_components(to_networkx(g))])
    return [subgraph(g, nodes, gid=g.gid) for nodes in parts]
