"Training corpora; token vocabulary, code files, splits and subgraph sampling."

import logging
import math

import joblib
import numpy as np

import constants
import graphs
import utils
from canonical import ReducedCode, Triplet
from graphs import LabeledGraph
from utils import Error

logger = logging.getLogger(__name__)


class TokenVocabulary:
    """Bijection between token ids and (node label, edge label, node label)
    triples, and the timestamp alphabet size. Each of the three alphabets
    has two extra slots after the regular values: EOS, then SOS.
    """

    def __init__(self, tokens, max_nodes):
        self.tokens = tuple([tuple(t) for t in tokens])
        self.max_nodes = int(max_nodes)
        self.lookup = dict([(t, i) for i, t in enumerate(self.tokens)])
        if len(self.lookup) != len(self.tokens):
            raise Error("duplicate token in vocabulary", constants.VOCABULARY_ERROR)
        if self.max_nodes < 2:
            raise Error("timestamp alphabet smaller than 2", constants.VOCABULARY_ERROR)

    def __repr__(self):
        return f"TokenVocabulary({len(self.tokens)} tokens, T={self.max_nodes})"

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        if not isinstance(other, TokenVocabulary):
            return False
        return self.tokens == other.tokens and self.max_nodes == other.max_nodes

    @property
    def eos_id(self):
        return len(self.tokens)

    @property
    def sos_id(self):
        return len(self.tokens) + 1

    @property
    def timestamp_eos(self):
        return self.max_nodes

    @property
    def timestamp_sos(self):
        return self.max_nodes + 1

    @property
    def timestamp_width(self):
        return self.max_nodes + 2

    @property
    def token_width(self):
        return len(self.tokens) + 2

    @property
    def widths(self):
        "Widths of the t_u, t_v and token alphabets, in that order."
        return (self.timestamp_width, self.timestamp_width, self.token_width)

    @property
    def eos(self):
        return (self.timestamp_eos, self.timestamp_eos, self.eos_id)

    @property
    def sos(self):
        return (self.timestamp_sos, self.timestamp_sos, self.sos_id)

    @property
    def alphabets(self):
        "Node and edge label alphabets seen in the tokens."
        node_labels = set()
        edge_labels = set()
        for l_u, l_e, l_v in self.tokens:
            node_labels.update((l_u, l_v))
            edge_labels.add(l_e)
        return graphs.LabelAlphabets(tuple(sorted(node_labels)), tuple(sorted(edge_labels)))

    @property
    def bound(self):
        "Upper bound for the number of tokens given the label alphabets."
        alphabets = self.alphabets
        return len(alphabets.node_labels) ** 2 * len(alphabets.edge_labels)

    def token_id(self, token):
        try:
            return self.lookup[tuple(token)]
        except KeyError:
            raise Error(f"token {token} not in vocabulary", constants.VOCABULARY_ERROR)

    def token(self, token_id):
        if not 0 <= token_id < len(self.tokens):
            raise Error(f"no token with id {token_id}", constants.VOCABULARY_ERROR)
        return self.tokens[token_id]

    def encode(self, code):
        "Return the reduced code as a list of (t_u, t_v, token id)."
        result = []
        for triplet in code:
            for t in (triplet.t_u, triplet.t_v):
                if not 0 <= t < self.max_nodes:
                    raise Error(
                        f"timestamp {t} outside alphabet of size {self.max_nodes}",
                        constants.VOCABULARY_ERROR,
                    )
            result.append((triplet.t_u, triplet.t_v, self.token_id(triplet.token)))
        return result

    def decode(self, ids):
        "Return the reduced code for a list of (t_u, t_v, token id)."
        return ReducedCode([Triplet(int(a), int(b), self.token(int(i))) for a, b, i in ids])

    def format(self):
        "Return the text of the vocabulary file."
        lines = [f"{constants.VOCABULARY_HEADER} {self.max_nodes}"]
        for i, token in enumerate(self.tokens):
            for label in token:
                if not utils.whitespace_free(label):
                    raise Error(
                        f"label '{label}' must be whitespace-free",
                        constants.VALIDATION_ERROR,
                    )
            lines.append(f"{i} {' '.join(token)}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self):
        return utils.get_digest(self.format())

    def write(self, path):
        with open(path, "w", encoding=constants.ENCODING, newline="\n") as outfile:
            outfile.write(self.format())

    @classmethod
    def parse(cls, text):
        lines = [line for line in text.split("\n") if line.strip()]
        if not lines:
            raise Error("line 1: empty vocabulary file", constants.PARSE_ERROR)
        parts = lines[0].split(" ")
        if len(parts) != 2 or parts[0] != constants.VOCABULARY_HEADER:
            raise Error("line 1: malformed vocabulary header", constants.PARSE_ERROR)
        try:
            max_nodes = int(parts[1])
        except ValueError:
            raise Error("line 1: invalid timestamp alphabet size", constants.PARSE_ERROR)
        tokens = []
        for number, line in enumerate(lines[1:], 2):
            parts = line.split(" ")
            if len(parts) != 4 or parts[0] != str(len(tokens)):
                raise Error(f"line {number}: malformed token line", constants.PARSE_ERROR)
            tokens.append(tuple(parts[1:]))
        return cls(tokens, max_nodes)

    @classmethod
    def read(cls, path):
        with open(path, encoding=constants.ENCODING) as infile:
            return cls.parse(infile.read())


def corpus_max_nodes(graph_list):
    "Return the largest node count in the graphs."
    return max([len(g.nodes) for g in graph_list], default=0)


def _code_tokens(code):
    "Tokens of the code, and its largest timestamp."
    tokens = set([tuple(triplet.token) for triplet in code])
    largest = max([max(triplet.t_u, triplet.t_v) for triplet in code], default=-1)
    return tokens, largest


def build_vocabulary(codes, max_nodes, workers=1):
    """Return the vocabulary of all tokens in the reduced codes, sorted.
    The timestamp alphabet size is max_nodes. The codes are scanned in
    parallel and merged in order.
    """
    if not codes:
        raise Error("no codes to build vocabulary from", constants.DATA_ERROR)
    if workers == 1 or len(codes) < 2:
        scanned = [_code_tokens(code) for code in codes]
    else:
        scanned = joblib.Parallel(n_jobs=workers)(joblib.delayed(_code_tokens)(c) for c in codes)
    tokens = set()
    for position, (found, largest) in enumerate(scanned):
        if largest >= max_nodes:
            raise Error(
                f"code {position}: timestamp {largest} not below max_nodes {max_nodes}",
                constants.VOCABULARY_ERROR,
            )
        tokens.update(found)
    result = TokenVocabulary(sorted(tokens), max_nodes)
    assert len(result) <= result.bound
    logger.info("vocabulary: %s tokens of %s possible, T=%s", len(result), result.bound, max_nodes)
    return result


def format_codes(entries, vocabulary):
    "Return the text of a reduced-code file for a list of (graph id, code)."
    lines = []
    for gid, code in entries:
        lines.append(f"{constants.CODE_HEADER} {gid}")
        for t_u, t_v, token_id in vocabulary.encode(code):
            lines.append(f"{t_u} {t_v} {token_id}")
    if not lines:
        return ""
    return "\n".join(lines) + "\n"


def write_codes(entries, vocabulary, path):
    text = format_codes(entries, vocabulary)
    with open(path, "w", encoding=constants.ENCODING, newline="\n") as outfile:
        outfile.write(text)


def read_codes(path, vocabulary):
    "Read a reduced-code file; return a list of (graph id, code)."
    with open(path, encoding=constants.ENCODING) as infile:
        text = infile.read()
    result = []
    for number, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        parts = line.split(" ")
        if parts[0] == constants.CODE_HEADER:
            if len(parts) != 2:
                raise Error(f"line {number}: malformed code header", constants.PARSE_ERROR)
            result.append((parts[1], []))
            continue
        if not result:
            raise Error(f"line {number}: entry before any code header", constants.PARSE_ERROR)
        try:
            t_u, t_v, token_id = [int(p) for p in parts]
        except ValueError:
            raise Error(f"line {number}: malformed code entry", constants.PARSE_ERROR)
        result[-1][1].append((t_u, t_v, token_id))
    return [(gid, vocabulary.decode(ids)) for gid, ids in result]


class SplitSpec:
    "Parameters of a train/validation/test split, and its outcome."

    def __init__(
        self,
        seed,
        test_fraction=constants.TEST_FRACTION,
        val_fraction=constants.VAL_FRACTION,
    ):
        self.seed = seed
        self.test_fraction = test_fraction
        self.val_fraction = val_fraction
        # Key: graph id; value: partition name. Set by 'split'.
        self.membership = {}

    def __repr__(self):
        return f"SplitSpec(seed={self.seed}, test={self.test_fraction}, val={self.val_fraction})"


def graph_id(item, position):
    "Return the identifier of a graph, or of a (graph id, code) pair."
    if isinstance(item, tuple):
        gid = item[0]
    else:
        gid = getattr(item, "gid", None)
    return str(position) if gid is None else str(gid)


def split(items, spec):
    """Partition the items into (train, val, test). The test set is
    test_fraction of all items, the validation set val_fraction of the
    remainder, both rounded down. Item order is kept within each partition.
    """
    n = len(items)
    n_test = math.floor(n * spec.test_fraction + 1e-9)
    n_val = math.floor((n - n_test) * spec.val_fraction + 1e-9)
    permutation = utils.rng(spec.seed, "split").permutation(n)
    test = set(permutation[:n_test].tolist())
    val = set(permutation[n_test : n_test + n_val].tolist())
    result = dict([(p, []) for p in constants.PARTITIONS])
    spec.membership = {}
    for position, item in enumerate(items):
        if position in test:
            partition = constants.TEST
        elif position in val:
            partition = constants.VAL
        else:
            partition = constants.TRAIN
        result[partition].append(item)
        spec.membership[graph_id(item, position)] = partition
    logger.info(
        "split %s: %s train, %s val, %s test",
        n,
        len(result[constants.TRAIN]),
        len(result[constants.VAL]),
        len(result[constants.TEST]),
    )
    return result[constants.TRAIN], result[constants.VAL], result[constants.TEST]


def write_splits(membership, path):
    "Write the split file; one line per graph id in the given order."
    with open(path, "w", encoding=constants.ENCODING, newline="\n") as outfile:
        for gid, partition in membership.items():
            outfile.write(f"{gid} {partition}\n")


def read_splits(path):
    "Read the split file; return dictionary graph id -> partition."
    result = {}
    with open(path, encoding=constants.ENCODING) as infile:
        for number, line in enumerate(infile, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in constants.PARTITIONS:
                raise Error(f"line {number}: malformed split line", constants.PARSE_ERROR)
            result[parts[0]] = parts[1]
    return result


def augment_with_degree(g):
    "Return a copy of the graph with each node label suffixed by its degree."
    degrees = graphs.degree_sequence(g)
    nodes = [
        f"{node.label}{constants.DEGREE_SEPARATOR}{degree}"
        for node, degree in zip(g.nodes, degrees)
    ]
    return LabeledGraph(nodes, g.edges, gid=g.gid)


def choose_start_node(big, generator):
    "Pick a node at random with probability proportional to its degree."
    degrees = np.array(graphs.degree_sequence(big), dtype=float)
    return int(generator.choice(len(degrees), p=degrees / degrees.sum()))


def sample_subgraphs(
    big,
    count,
    walks_per_sample=constants.WALK_COUNT,
    restart_p=constants.RESTART_P,
    seed=0,
    walk_len=constants.WALK_LEN,
):
    """Sample subgraphs of a large graph by random walks with restart.
    For each sample a start node is picked proportionally to degree, then
    walks_per_sample walks of walk_len steps are run from it; after each
    step the walk returns to the start with probability restart_p.
    The sample consists of the edges traversed and their endpoints.
    """
    if count <= 0:
        return []
    if not big.edges:
        raise Error(f"graph {big.gid}: no edges to walk", constants.DATA_ERROR)
    result = []
    for number in range(count):
        generator = utils.rng(seed, "walk", number)
        start = choose_start_node(big, generator)
        traversed = {}
        for walk in range(walks_per_sample):
            current = start
            for step in range(walk_len):
                neighbors = big.adjacency[current]
                neighbor, label = neighbors[int(generator.integers(len(neighbors)))]
                traversed.setdefault(frozenset((current, neighbor)), label)
                if generator.random() < restart_p:
                    current = start
                else:
                    current = neighbor
        indices = sorted(set().union(*traversed.keys()))
        lookup = dict([(index, i) for i, index in enumerate(indices)])
        edges = []
        for pair, label in traversed.items():
            u, v = sorted([lookup[index] for index in pair])
            edges.append((u, v, label))
        edges.sort()
        nodes = [big.nodes[index].label for index in indices]
        result.append(LabeledGraph(nodes, edges, gid=f"{big.gid}_{number}"))
        logger.debug("sample %s: %s nodes, %s edges", number, len(nodes), len(edges))
    return result


def corpus_statistics(graph_list, vocabulary=None):
    "Return a dictionary of summary statistics for the corpus."
    alphabets = graphs.LabelAlphabets.from_graphs(graph_list)
    n = len(graph_list)
    result = dict(
        graphs=n,
        max_nodes=corpus_max_nodes(graph_list),
        avg_nodes=sum([len(g.nodes) for g in graph_list]) / n if n else 0.0,
        avg_edges=sum([len(g.edges) for g in graph_list]) / n if n else 0.0,
        node_labels=len(alphabets.node_labels),
        edge_labels=len(alphabets.edge_labels),
        token_bound=len(alphabets.node_labels) ** 2 * len(alphabets.edge_labels),
    )
    if vocabulary is not None:
        result["tokens"] = len(vocabulary)
        result["timestamp_alphabet"] = vocabulary.max_nodes
    return result
