"""Evaluation of generated graphs against a reference sample: descriptor
distributions compared by maximum mean discrepancy, the neighborhood
subgraph pairwise distance kernel, and novelty and uniqueness.
"""

import collections
import logging
import shlex
import subprocess
from typing import NamedTuple

import joblib
import networkx as nx
import numpy as np
import scipy.sparse
import scipy.spatial.distance

import canonical
import constants
import graphs
import utils
from graphs import LabeledGraph
from utils import Error

logger = logging.getLogger(__name__)

# Prefix of the root node label in neighborhood certificates.
ROOT_MARK = "^"


class Descriptor(NamedTuple):
    """Normalized histogram of one kind of graph statistic, as a mapping
    from bin to mass. Empty when the graph has nothing to count.
    """

    kind: str
    histogram: dict

    @property
    def empty(self):
        return not self.histogram


def _normalized(kind, counts):
    total = sum(counts.values())
    if not total:
        return Descriptor(kind, {})
    return Descriptor(kind, dict([(key, value / total) for key, value in sorted(counts.items())]))


def descriptor(g, kind):
    "Return the descriptor of the given kind for the graph."
    degrees = graphs.degree_sequence(g)
    if kind == constants.DEGREE:
        return _normalized(kind, collections.Counter(degrees))
    elif kind == constants.CLUSTERING:
        coefficients = nx.clustering(graphs.to_networkx(g)).values()
        bins = constants.CLUSTERING_BINS
        return _normalized(
            kind, collections.Counter([min(int(c * bins), bins - 1) for c in coefficients])
        )
    elif kind == constants.ORBIT:
        counts = orbit_counts(g)
        if not counts.size:
            return Descriptor(kind, {})
        means = counts.mean(axis=0)
        return _normalized(kind, dict([(i, float(m)) for i, m in enumerate(means) if m]))
    elif kind == constants.NODE_LABEL:
        return _normalized(kind, collections.Counter(g.node_labels))
    elif kind == constants.EDGE_LABEL:
        return _normalized(kind, collections.Counter([e.label for e in g.edges]))
    elif kind == constants.LABEL_DEGREE:
        return _normalized(kind, collections.Counter(zip(g.node_labels, degrees)))
    else:
        raise ValueError(f"invalid descriptor kind '{kind}'")


def connected_subsets(g, size):
    """Yield every connected node subset of the given size exactly once,
    as a tuple of node indices, by enumerating subgraph extensions.
    """
    neighbors = [set([n for n, label in a]) for a in g.adjacency]

    def extend(subset, extension, root, border):
        if len(subset) == size:
            yield tuple(sorted(subset))
            return
        extension = set(extension)
        while extension:
            w = extension.pop()
            exclusive = set([u for u in neighbors[w] if u > root and u not in border])
            yield from extend(subset | {w}, extension | exclusive, root, border | neighbors[w])

    for root in range(len(g.nodes)):
        border = neighbors[root] | {root}
        yield from extend({root}, set([u for u in neighbors[root] if u > root]), root, border)


def orbit_counts(g):
    """Return the matrix (nodes x 15) of the number of times each node
    appears in each orbit of the connected graphlets on 2 to 4 nodes.
    Orbits: 0 edge; 1-2 path on 3 (end, middle); 3 triangle;
    4-5 path on 4 (end, inner); 6-7 star (leaf, center); 8 cycle;
    9-11 paw (tail end, triangle degree 2, degree 3);
    12-13 diamond (degree 2, degree 3); 14 complete.
    """
    result = np.zeros((len(g.nodes), constants.ORBIT_COUNT), dtype=np.int64)
    neighbors = [set([n for n, label in a]) for a in g.adjacency]
    for node, adjacent in enumerate(neighbors):
        result[node, 0] = len(adjacent)
    for size in (3, 4):
        for subset in connected_subsets(g, size):
            inner = dict([(u, len(neighbors[u].intersection(subset))) for u in subset])
            edges = sum(inner.values()) // 2
            for u, degree in inner.items():
                result[u, _orbit(size, edges, degree, sorted(inner.values()))] += 1
    return result


def _orbit(size, edges, degree, degrees):
    "Orbit of a node of the given inner degree within a connected graphlet."
    if size == 3:
        if edges == 3:
            return 3
        return 1 if degree == 1 else 2
    if edges == 3:
        if degrees == [1, 1, 1, 3]:
            return 6 if degree == 1 else 7
        return 4 if degree == 1 else 5
    if edges == 4:
        if degrees == [2, 2, 2, 2]:
            return 8
        return {1: 9, 2: 10, 3: 11}[degree]
    if edges == 5:
        return 12 if degree == 2 else 13
    return 14


def total_variation(p, q):
    "Total variation distance between two descriptor histograms."
    keys = set(p.histogram).union(q.histogram)
    return 0.5 * sum([abs(p.histogram.get(k, 0.0) - q.histogram.get(k, 0.0)) for k in keys])


def gaussian_tv_kernel(sample_a, sample_b, sigma=constants.MMD_SIGMA):
    "Gram matrix exp(-TV(p, q)^2 / (2 sigma^2)) between two samples of descriptors."
    keys = sorted(set().union(*[d.histogram for d in list(sample_a) + list(sample_b)]))
    index = dict([(key, i) for i, key in enumerate(keys)])

    def dense(sample):
        result = np.zeros((len(sample), max(len(keys), 1)))
        for row, d in enumerate(sample):
            for key, value in d.histogram.items():
                result[row, index[key]] = value
        return result

    distances = 0.5 * scipy.spatial.distance.cdist(dense(sample_a), dense(sample_b), "cityblock")
    return np.exp(-(distances**2) / (2 * sigma**2))


def mmd_from_gram(kxx, kyy, kxy):
    """Maximum mean discrepancy from the Gram blocks; the unbiased estimate
    when both samples have two or more elements, otherwise the biased one.
    The squared value is clipped at zero before the square root.
    """
    m, n = kxy.shape
    if m >= 2 and n >= 2:
        value = (
            (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
            + (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
            - 2 * kxy.mean()
        )
    else:
        value = kxx.mean() + kyy.mean() - 2 * kxy.mean()
    return float(np.sqrt(max(value, 0.0)))


def mmd(sample_a, sample_b, sigma=constants.MMD_SIGMA):
    "Maximum mean discrepancy between two samples of descriptors of the same kind."
    if not sample_a or not sample_b:
        raise Error("empty descriptor sample", constants.DATA_ERROR)
    kinds = set([d.kind for d in sample_a]).union([d.kind for d in sample_b])
    if len(kinds) != 1:
        raise Error(f"descriptor kinds differ: {sorted(kinds)}", constants.DATA_ERROR)
    return mmd_from_gram(
        gaussian_tv_kernel(sample_a, sample_a, sigma),
        gaussian_tv_kernel(sample_b, sample_b, sigma),
        gaussian_tv_kernel(sample_a, sample_b, sigma),
    )


def certificate(g, root, radius, distances=None):
    """Canonical string of the radius-bounded neighborhood of the root,
    with the root label marked.
    """
    if distances is None:
        distances = nx.single_source_shortest_path_length(graphs.to_networkx(g), root, cutoff=radius)
    indices = sorted([n for n, d in distances.items() if d <= radius])
    ball = graphs.subgraph(g, indices)
    nodes = [
        ROOT_MARK + node.label if index == root else node.label
        for index, node in zip(indices, ball.nodes)
    ]
    ball = LabeledGraph(nodes, ball.edges)
    if not ball.edges:
        return nodes[0]
    return str(canonical.min_dfs_code(ball))


def nspdk_features(g, r_max=constants.NSPDK_R, d_max=constants.NSPDK_D):
    """Counts of the features (radius, distance, pair of neighborhood
    certificates) over all node pairs at distance at most d_max.
    """
    nxg = graphs.to_networkx(g)
    lengths = dict(nx.all_pairs_shortest_path_length(nxg, cutoff=max(r_max, d_max)))
    certificates = {}
    for node in range(len(g.nodes)):
        for radius in range(r_max + 1):
            certificates[(node, radius)] = certificate(g, node, radius, lengths[node])
    result = collections.Counter()
    for u in range(len(g.nodes)):
        for v, distance in lengths[u].items():
            if v < u or distance > d_max:
                continue
            for radius in range(r_max + 1):
                pair = sorted([certificates[(u, radius)], certificates[(v, radius)]])
                result[(radius, distance, pair[0], pair[1])] += 1
    return result


def _dot(a, b):
    if len(a) > len(b):
        a, b = b, a
    return float(sum([count * b.get(key, 0) for key, count in a.items()]))


def nspdk_kernel(g1, g2, r_max=constants.NSPDK_R, d_max=constants.NSPDK_D):
    "Normalized kernel value in [0, 1]."
    f1 = nspdk_features(g1, r_max, d_max)
    f2 = nspdk_features(g2, r_max, d_max)
    norm = np.sqrt(_dot(f1, f1) * _dot(f2, f2))
    if not norm:
        return 1.0 if not f1 and not f2 else 0.0
    return _dot(f1, f2) / norm


def nspdk_vectors(features_list, index):
    "Return the sparse matrix of unit-length feature rows, columns given by the index."
    rows, columns, values = [], [], []
    for row, features in enumerate(features_list):
        for key, count in features.items():
            rows.append(row)
            columns.append(index[key])
            values.append(float(count))
    matrix = scipy.sparse.csr_matrix(
        (values, (rows, columns)), shape=(len(features_list), max(len(index), 1))
    )
    norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
    norms[norms == 0] = 1.0
    return scipy.sparse.diags(1.0 / norms) @ matrix


def nspdk_gram(features_a, features_b):
    "Gram matrix of the normalized kernel between two lists of feature counts."
    index = {}
    for features in list(features_a) + list(features_b):
        for key in features:
            index.setdefault(key, len(index))
    a = nspdk_vectors(features_a, index)
    b = nspdk_vectors(features_b, index)
    return (a @ b.T).toarray()


def canonical_key(g):
    """Isomorphism-invariant key of any graph: the sorted minimum DFS code
    strings of its connected components, isolated nodes by their label.
    """
    keys = []
    for component in graphs.components(g):
        if component.edges:
            keys.append(str(canonical.min_dfs_code(component)))
        else:
            keys.append(component.nodes[0].label)
    return tuple(sorted(keys))


def novelty(generated_keys, training_keys):
    "Percentage of generated graphs not present in the training set."
    if not generated_keys:
        return 0.0
    training = set(training_keys)
    return 100.0 * len([k for k in generated_keys if k not in training]) / len(generated_keys)


def uniqueness(generated_keys):
    "Percentage of distinct graphs among the generated ones."
    if not generated_keys:
        return 0.0
    return 100.0 * len(set(generated_keys)) / len(generated_keys)


def validity(graph_list, command):
    """Percentage of graphs judged valid by the external command, which
    gets one graph in transaction format on its standard input and answers
    'valid' or 'invalid'.
    """
    if not graph_list:
        return 0.0
    arguments = shlex.split(command)
    valid = 0
    for g in graph_list:
        try:
            process = subprocess.run(
                arguments,
                input=graphs.format_graphs([g]),
                capture_output=True,
                text=True,
                check=True,
            )
        except (OSError, subprocess.CalledProcessError) as error:
            raise Error(f"validator '{command}' failed: {error}", constants.IO_ERROR)
        answer = process.stdout.strip()
        if answer == constants.VALID:
            valid += 1
        elif answer != constants.INVALID:
            raise Error(f"validator '{command}' answered '{answer}'", constants.DATA_ERROR)
    return 100.0 * valid / len(graph_list)


class EvalProtocol(NamedTuple):
    "Batch size and number of rounds, kernel settings and seed of an evaluation."

    batch: int = constants.EVAL_BATCH
    rounds: int = constants.EVAL_ROUNDS
    sigma: float = constants.MMD_SIGMA
    nspdk_r: int = constants.NSPDK_R
    nspdk_d: int = constants.NSPDK_D
    seed: int = 0
    workers: int = 1

    @classmethod
    def preset(cls, name, **settings):
        try:
            batch, rounds = constants.PROTOCOLS[name]
        except KeyError:
            raise Error(f"no evaluation protocol '{name}'", constants.CONFIG_ERROR)
        return cls(batch=batch, rounds=rounds, **settings)


MMD_KEYS = [f"mmd_{kind}" for kind in constants.DESCRIPTOR_KINDS] + ["nspdk"]


class MetricReport:
    "Result of an evaluation; per-round MMD values and their means."

    def __init__(self, rounds):
        self.rounds = rounds
        self.values = dict([(key, []) for key in MMD_KEYS])
        self.avg_nodes = (0.0, 0.0)
        self.avg_edges = (0.0, 0.0)
        self.novelty_pct = None
        self.uniqueness_pct = 0.0
        self.validity_pct = None

    def __repr__(self):
        return f"MetricReport({self.rounds} rounds)"

    def mean(self, key):
        return float(np.mean(self.values[key]))

    def as_dict(self):
        "Flat key to value mapping of the report."
        result = dict([(key, self.mean(key)) for key in MMD_KEYS])
        result["avg_nodes_gen"], result["avg_nodes_ref"] = self.avg_nodes
        result["avg_edges_gen"], result["avg_edges_ref"] = self.avg_edges
        if self.novelty_pct is not None:
            result["novelty_pct"] = self.novelty_pct
        result["uniqueness_pct"] = self.uniqueness_pct
        if self.validity_pct is not None:
            result["validity_pct"] = self.validity_pct
        result["rounds"] = self.rounds
        return result

    def format(self):
        "Return the text of the report file: key=value lines."
        lines = [f"format_version={constants.FORMAT_VERSIONS['report']}"]
        for key, value in self.as_dict().items():
            lines.append(f"{key}={value}")
        for key in MMD_KEYS:
            for number, value in enumerate(self.values[key]):
                lines.append(f"{key}.round{number}={value}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding=constants.ENCODING, newline="\n") as outfile:
            outfile.write(self.format())

    def table(self):
        "Return a human-readable table of the means."
        rows = [(key, f"{self.mean(key):.6f}") for key in MMD_KEYS]
        rows.append(("avg nodes gen/ref", "{:.1f}/{:.1f}".format(*self.avg_nodes)))
        rows.append(("avg edges gen/ref", "{:.1f}/{:.1f}".format(*self.avg_edges)))
        if self.novelty_pct is not None:
            rows.append(("novelty %", f"{self.novelty_pct:.2f}"))
        rows.append(("uniqueness %", f"{self.uniqueness_pct:.2f}"))
        if self.validity_pct is not None:
            rows.append(("validity %", f"{self.validity_pct:.2f}"))
        width = max([len(name) for name, value in rows])
        return "\n".join([f"{name.ljust(width)}  {value}" for name, value in rows])


def _graph_summary(g, protocol):
    "Descriptors of all kinds and NSPDK feature counts for one graph."
    descriptors = dict([(kind, descriptor(g, kind)) for kind in constants.DESCRIPTOR_KINDS])
    return descriptors, nspdk_features(g, protocol.nspdk_r, protocol.nspdk_d)


def _average(values):
    return float(np.mean(values)) if values else 0.0


def _shuffled(size, seed):
    "Seeded order of the indices; the same for the same size and seed."
    return utils.rng(seed, "evaluate").permutation(size)


def evaluate(generated, reference, protocol=None, training=None, validator=None):
    """Compare the generated graphs to the reference graphs. The generated
    graphs are shuffled and split into one batch per round. The reference
    graphs are split the same way when there are enough of them, otherwise
    each round draws its own batch (with replacement only if the reference
    set is smaller than a batch). Identical inputs give identical batches.
    Novelty is computed against the training graphs, if given.
    """
    protocol = protocol or EvalProtocol()
    needed = protocol.batch * protocol.rounds
    if len(generated) < needed:
        raise Error(
            f"{len(generated)} generated graphs; {needed} needed for"
            f" {protocol.rounds} rounds of {protocol.batch}",
            constants.DATA_ERROR,
        )
    if not reference:
        raise Error("no reference graphs", constants.DATA_ERROR)
    timer = utils.Timer()
    used = [generated[i] for i in _shuffled(len(generated), protocol.seed)[:needed]]
    if len(reference) >= needed:
        order = _shuffled(len(reference), protocol.seed)
        chosen = [
            order[n * protocol.batch : (n + 1) * protocol.batch] for n in range(protocol.rounds)
        ]
    else:
        chosen = []
        for number in range(protocol.rounds):
            generator = utils.rng(protocol.seed, "evaluate", number)
            replace = len(reference) < protocol.batch
            chosen.append(generator.choice(len(reference), size=protocol.batch, replace=replace))
    summaries = joblib.Parallel(n_jobs=protocol.workers)(
        joblib.delayed(_graph_summary)(g, protocol) for g in list(used) + list(reference)
    )
    generated_summaries = summaries[: len(used)]
    reference_summaries = summaries[len(used) :]
    report = MetricReport(protocol.rounds)
    for number in range(protocol.rounds):
        batch_a = generated_summaries[number * protocol.batch : (number + 1) * protocol.batch]
        batch_b = [reference_summaries[i] for i in chosen[number]]
        for kind in constants.DESCRIPTOR_KINDS:
            value = mmd(
                [s[0][kind] for s in batch_a],
                [s[0][kind] for s in batch_b],
                protocol.sigma,
            )
            report.values[f"mmd_{kind}"].append(value)
        features_a = [s[1] for s in batch_a]
        features_b = [s[1] for s in batch_b]
        report.values["nspdk"].append(
            mmd_from_gram(
                nspdk_gram(features_a, features_a),
                nspdk_gram(features_b, features_b),
                nspdk_gram(features_a, features_b),
            )
        )
        logger.debug("round %s: degree %.6f", number, report.values["mmd_degree"][-1])
    report.avg_nodes = (
        _average([len(g.nodes) for g in used]),
        _average([len(g.nodes) for g in reference]),
    )
    report.avg_edges = (
        _average([len(g.edges) for g in used]),
        _average([len(g.edges) for g in reference]),
    )
    generated_keys = joblib.Parallel(n_jobs=protocol.workers)(
        joblib.delayed(canonical_key)(g) for g in generated
    )
    report.uniqueness_pct = uniqueness(generated_keys)
    if training is not None:
        training_keys = joblib.Parallel(n_jobs=protocol.workers)(
            joblib.delayed(canonical_key)(g) for g in training
        )
        report.novelty_pct = novelty(generated_keys, training_keys)
    if validator:
        report.validity_pct = validity(generated, validator)
    logger.info("evaluated %s rounds in %.1f s CPU", protocol.rounds, timer.elapsed)
    return report
