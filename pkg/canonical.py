"""Minimum DFS codes; the canonical label of a connected labeled graph.

A DFS code lists the edges of a graph in the order given by a depth-first
visit, each edge as the quintuple (t_u, t_v, label u, label e, label v)
where t_u and t_v are the visit timestamps of the endpoints. The minimum
code over all visits is the canonical label: equal iff isomorphic.
The reduced form packs the three labels into a single token.

Labels are compared as Python strings, i.e. by code point, which is
the same order as UTF-8 byte order.
"""

import functools
import logging
from typing import NamedTuple

import joblib

import constants
from graphs import LabeledGraph
from utils import Error

logger = logging.getLogger(__name__)

LENIENT = "lenient"
STRICT = "strict"
POLICIES = (LENIENT, STRICT)


class Quintuple(NamedTuple):
    t_u: int
    t_v: int
    l_u: str
    l_e: str
    l_v: str

    def __str__(self):
        return f"<{self.t_u},{self.t_v},{self.l_u},{self.l_e},{self.l_v}>"

    @property
    def labels(self):
        return (self.l_u, self.l_e, self.l_v)

    @property
    def is_forward(self):
        return self.t_u < self.t_v


class Triplet(NamedTuple):
    t_u: int
    t_v: int
    token: tuple

    def __str__(self):
        return f"<{self.t_u},{self.t_v},({','.join(self.token)})>"

    @property
    def labels(self):
        return self.token

    @property
    def is_forward(self):
        return self.t_u < self.t_v


def compare_edges(a, b):
    "Compare the timestamp pairs of two entries by the DFS edge order."
    if a.t_u == b.t_u and a.t_v == b.t_v:
        return 0
    a_forward = a.t_u < a.t_v
    b_forward = b.t_u < b.t_v
    if a_forward and b_forward:
        less = a.t_v < b.t_v or (a.t_v == b.t_v and a.t_u > b.t_u)
    elif not a_forward and not b_forward:
        less = a.t_u < b.t_u or (a.t_u == b.t_u and a.t_v < b.t_v)
    elif not a_forward:
        less = a.t_u < b.t_v
    else:
        less = a.t_v <= b.t_u
    return -1 if less else 1


def compare_entries(a, b):
    "Compare two quintuples (or two triplets); edge order, then labels."
    result = compare_edges(a, b)
    if result:
        return result
    if a.labels < b.labels:
        return -1
    if a.labels > b.labels:
        return 1
    return 0


def compare_codes(a, b):
    "Lexicographic comparison of two codes; a proper prefix is smaller."
    for x, y in zip(a, b):
        result = compare_entries(x, y)
        if result:
            return result
    return (len(a) > len(b)) - (len(a) < len(b))


entry_key = functools.cmp_to_key(compare_entries)


class Code(tuple):
    "Sequence of entries, ordered lexicographically by the DFS comparator."

    def __str__(self):
        return " ".join([str(e) for e in self])

    def __lt__(self, other):
        return compare_codes(self, other) < 0

    def __le__(self, other):
        return compare_codes(self, other) <= 0

    def __gt__(self, other):
        return compare_codes(self, other) > 0

    def __ge__(self, other):
        return compare_codes(self, other) >= 0

    def __hash__(self):
        return tuple.__hash__(self)

    def __eq__(self, other):
        return tuple.__eq__(self, other)

    def __ne__(self, other):
        return tuple.__ne__(self, other)


class DfsCode(Code):
    "Sequence of quintuples."


class ReducedCode(Code):
    "Sequence of triplets."


def check_canonicable(g):
    "Raise an error unless the graph has edges and is connected."
    if not g.edges:
        raise Error(f"graph {g.gid}: no edges; no DFS code", constants.DATA_ERROR)
    if not g.is_connected():
        raise Error(f"graph {g.gid}: not connected", constants.DATA_ERROR)


def by_index(g, node, neighbor, label):
    "Default neighbor order; by node index."
    return neighbor


def enumerate_dfs_code(g, start, neighbor_order=by_index):
    """Return the DFS code for the visit from the start node, taking
    unvisited neighbors in the order given by the key function
    neighbor_order(g, node, neighbor, edge_label).
    """
    check_canonicable(g)
    labels = g.node_labels
    timestamps = {start: 0}
    code = []
    # Explicit stack of (node, iterator over ordered neighbors).
    stack = [(start, _ordered(g, start, neighbor_order))]
    while stack:
        node, neighbors = stack[-1]
        for neighbor, label in neighbors:
            if neighbor in timestamps:
                continue
            t = len(timestamps)
            timestamps[neighbor] = t
            code.append(Quintuple(timestamps[node], t, labels[node], label, labels[neighbor]))
            code.extend(_backward(g, neighbor, node, timestamps))
            stack.append((neighbor, _ordered(g, neighbor, neighbor_order)))
            break
        else:
            stack.pop()
    return DfsCode(code)


def _ordered(g, node, neighbor_order):
    return iter(
        sorted(g.adjacency[node], key=lambda a: neighbor_order(g, node, a[0], a[1]))
    )


def _backward(g, node, parent, timestamps):
    "Backward edges of a newly discovered node, in timestamp order."
    labels = g.node_labels
    t = timestamps[node]
    result = [
        Quintuple(t, timestamps[w], labels[node], label, labels[w])
        for w, label in g.adjacency[node]
        if w in timestamps and w != parent
    ]
    result.sort(key=lambda q: q.t_v)
    return result


class _Projection:
    "One partial visit consistent with the best code prefix found so far."

    __slots__ = ("order", "timestamps", "rmpath", "used")

    def __init__(self, order, timestamps, rmpath, used):
        self.order = order
        self.timestamps = timestamps
        self.rmpath = rmpath
        self.used = used

    def extensions(self, g):
        "Yield (quintuple, projection factory) for all rightmost extensions."
        labels = g.node_labels
        rightmost = self.order[self.rmpath[-1]]
        on_path = set(self.rmpath)
        for w, label in g.adjacency[rightmost]:
            tw = self.timestamps.get(w)
            if tw is None or tw not in on_path:
                continue
            pair = frozenset((rightmost, w))
            if pair in self.used:
                continue
            q = Quintuple(self.rmpath[-1], tw, labels[rightmost], label, labels[w])
            yield q, functools.partial(self.backward, pair)
        n = len(self.order)
        for position in range(len(self.rmpath) - 1, -1, -1):
            t = self.rmpath[position]
            node = self.order[t]
            for w, label in g.adjacency[node]:
                if w in self.timestamps:
                    continue
                q = Quintuple(t, n, labels[node], label, labels[w])
                yield q, functools.partial(self.forward, position, node, w)

    def backward(self, pair):
        return _Projection(self.order, self.timestamps, self.rmpath, self.used | {pair})

    def forward(self, position, node, w):
        timestamps = dict(self.timestamps)
        timestamps[w] = len(self.order)
        return _Projection(
            self.order + [w],
            timestamps,
            self.rmpath[: position + 1] + [len(self.order)],
            self.used | {frozenset((node, w))},
        )


def min_dfs_code(g):
    """Return the minimum DFS code of the connected graph.
    All partial visits that share the smallest prefix are grown in lockstep
    by rightmost-path extension; only those whose next quintuple is the
    smallest survive each step.
    """
    check_canonicable(g)
    labels = g.node_labels
    best = None
    projections = []
    for edge in g.edges:
        for u, v in ((edge.u, edge.v), (edge.v, edge.u)):
            q = Quintuple(0, 1, labels[u], edge.label, labels[v])
            if best is None or compare_entries(q, best) < 0:
                best = q
                projections = []
            if compare_entries(q, best) == 0:
                projections.append(
                    _Projection([u, v], {u: 0, v: 1}, [0, 1], frozenset([frozenset((u, v))]))
                )
    code = [best]
    while len(code) < len(g.edges):
        best = None
        candidates = []
        for projection in projections:
            for q, extend in projection.extensions(g):
                if best is None or compare_entries(q, best) < 0:
                    best = q
                    candidates = []
                if compare_entries(q, best) == 0:
                    candidates.append(extend)
        code.append(best)
        projections = [extend() for extend in candidates]
    return DfsCode(code)


def exhaustive_min_dfs_code(g):
    """Return the minimum DFS code by enumerating every DFS visit.
    Exponential; only for small graphs and for checking the pruned search.
    """
    check_canonicable(g)
    best = None
    for code in all_dfs_codes(g):
        if best is None or compare_codes(code, best) < 0:
            best = code
    return best


def all_dfs_codes(g):
    "Yield the DFS code of every possible DFS visit of the graph."
    labels = g.node_labels

    def visit(timestamps, stack, code):
        stack = list(stack)
        while stack:
            node = stack[-1]
            unvisited = [(w, l) for w, l in g.adjacency[node] if w not in timestamps]
            if unvisited:
                break
            stack.pop()
        else:
            yield DfsCode(code)
            return
        for w, label in unvisited:
            t = len(timestamps)
            new_timestamps = dict(timestamps)
            new_timestamps[w] = t
            new_code = list(code)
            new_code.append(Quintuple(timestamps[node], t, labels[node], label, labels[w]))
            new_code.extend(_backward(g, w, node, new_timestamps))
            yield from visit(new_timestamps, stack + [w], new_code)

    for start in range(len(g.nodes)):
        yield from visit({start: 0}, [start], [])


def reduce(code):
    "Return the reduced code; labels packed into one token per entry."
    return ReducedCode([Triplet(q.t_u, q.t_v, q.labels) for q in code])


def expand(code):
    "Inverse of reduce."
    return DfsCode([Quintuple(t.t_u, t.t_v, *t.token) for t in code])


class ReconstructionReport:
    "Outcome of converting a (possibly invalid) reduced code into a graph."

    def __init__(self, length):
        self.length = length
        self.kept = 0
        self.discarded = []  # List of (position, triplet, reason).

    def __repr__(self):
        return f"ReconstructionReport(kept={self.kept}, discarded={len(self.discarded)})"

    def discard(self, position, triplet, reason):
        self.discarded.append((position, triplet, reason))

    def as_dict(self):
        return dict(
            length=self.length,
            kept=self.kept,
            discarded=[
                dict(position=p, entry=str(t), reason=r) for p, t, r in self.discarded
            ],
        )


def graph_from_reduced(code, policy=LENIENT, gid=None):
    """Convert the reduced code into a graph; return (graph, report).
    Entries that cannot be placed consistently are discarded and reported;
    the 'strict' policy raises an error at the first such entry instead.
    Node labels are set by the first entry that mentions the timestamp.
    """
    if policy not in POLICIES:
        raise ValueError(f"invalid reconstruction policy '{policy}'")
    report = ReconstructionReport(len(code))

    def discard(position, triplet, reason):
        if policy == STRICT:
            raise Error(f"entry {position} {triplet}: {reason}", constants.DATA_ERROR)
        report.discard(position, triplet, reason)

    if not code:
        return LabeledGraph([], [], gid=gid), report
    first = code[0]
    if (first.t_u, first.t_v) != (0, 1):
        for position, triplet in enumerate(code):
            discard(position, triplet, "code does not start with (0, 1)")
        return LabeledGraph([], [], gid=gid), report

    l_u, l_e, l_v = first.token
    nodes = [l_u, l_v]
    edges = [(0, 1, l_e)]
    pairs = {frozenset((0, 1))}
    report.kept = 1
    for position, triplet in enumerate(code[1:], 1):
        a, b = triplet.t_u, triplet.t_v
        l_u, l_e, l_v = triplet.token
        if a == b:
            discard(position, triplet, "self-loop")
        elif b == len(nodes) and 0 <= a < len(nodes):
            if nodes[a] != l_u:
                discard(position, triplet, "node label conflict")
                continue
            nodes.append(l_v)
            edges.append((a, b, l_e))
            pairs.add(frozenset((a, b)))
            report.kept += 1
        elif 0 <= a < len(nodes) and 0 <= b < len(nodes):
            if nodes[a] != l_u or nodes[b] != l_v:
                discard(position, triplet, "node label conflict")
            elif frozenset((a, b)) in pairs:
                discard(position, triplet, "duplicate edge")
            else:
                edges.append((a, b, l_e))
                pairs.add(frozenset((a, b)))
                report.kept += 1
        else:
            discard(position, triplet, "timestamp not yet seen")
    return LabeledGraph(nodes, edges, gid=gid), report


def is_isomorphic(g1, g2):
    "Are the two connected graphs isomorphic, respecting all labels?"
    if len(g1.nodes) != len(g2.nodes) or len(g1.edges) != len(g2.edges):
        check_canonicable(g1)
        check_canonicable(g2)
        return False
    return min_dfs_code(g1) == min_dfs_code(g2)


def _min_dfs_code_or_none(g):
    try:
        return min_dfs_code(g)
    except Error as error:
        logger.warning("skipping %s", error)
        return None


def min_dfs_codes(graphs, workers=1):
    """Return the minimum DFS code for each graph, in order, computed in
    parallel. None for graphs that have no code (edgeless or disconnected).
    """
    if workers == 1 or len(graphs) < 2:
        return [_min_dfs_code_or_none(g) for g in graphs]
    return joblib.Parallel(n_jobs=workers)(
        joblib.delayed(_min_dfs_code_or_none)(g) for g in graphs
    )
