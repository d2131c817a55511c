"""The recurrent generator network: teacher-forced training and
autoregressive sampling of reduced codes, and the checkpoint file.

Each step feeds the concatenated one-hot encoding of the previous triplet
through a linear embedding, a stack of LSTM layers, and three heads giving
the distributions of t_u, t_v and the token, conditionally independent
given the recurrent state.
"""

import logging
import struct
from collections import defaultdict
from typing import NamedTuple

import joblib
import numpy as np

import autodiff
import constants
import utils
from autodiff import Tensor
from utils import Error

logger = logging.getLogger(__name__)

HEADS = ("t_u", "t_v", "token")


class ModelParams:
    "The named parameter tensors of the network, and its dimensions."

    def __init__(
        self,
        vocabulary,
        tensors,
        dropout=constants.DROPOUT,
        max_edges=0,
    ):
        self.vocabulary = vocabulary
        self.tensors = tensors
        self.dropout = float(dropout)
        self.max_edges = int(max_edges)
        self.check()

    def __repr__(self):
        return (
            f"ModelParams(embed={self.embed}, hidden={self.hidden}, layers={self.layers},"
            f" head_hidden={self.head_hidden}, count={self.count})"
        )

    @classmethod
    def initialize(
        cls,
        vocabulary,
        seed=0,
        embed=constants.EMBED,
        hidden=constants.HIDDEN,
        layers=constants.LAYERS,
        head_hidden=constants.HEAD_HIDDEN,
        dropout=constants.DROPOUT,
        dtype=np.float32,
    ):
        """Weights uniform in +-1/sqrt(fan_in), biases zero, except for
        the forget gate input bias which is one.
        """
        generator = utils.rng(seed, "init")
        tensors = {}

        def add(name, shape, fan_in=None):
            if fan_in is None:
                values = np.zeros(shape, dtype=dtype)
            else:
                bound = 1.0 / np.sqrt(fan_in)
                values = generator.uniform(-bound, bound, shape).astype(dtype)
            tensors[name] = Tensor(values, requires_grad=True)

        input_width = sum(vocabulary.widths)
        add("embed.weight", (input_width, embed), input_width)
        add("embed.bias", (embed,))
        for layer in range(layers):
            width = embed if layer == 0 else hidden
            add(f"lstm.{layer}.weight_ih", (width, 4 * hidden), width)
            add(f"lstm.{layer}.weight_hh", (hidden, 4 * hidden), hidden)
            add(f"lstm.{layer}.bias_ih", (4 * hidden,))
            add(f"lstm.{layer}.bias_hh", (4 * hidden,))
            tensors[f"lstm.{layer}.bias_ih"].values[hidden : 2 * hidden] = 1
        for head, width in zip(HEADS, vocabulary.widths):
            add(f"head.{head}.hidden.weight", (hidden, head_hidden), hidden)
            add(f"head.{head}.hidden.bias", (head_hidden,))
            add(f"head.{head}.output.weight", (head_hidden, width), head_hidden)
            add(f"head.{head}.output.bias", (width,))
        result = cls(vocabulary, tensors, dropout=dropout)
        logger.info("initialized model with %s parameters", utils.thousands(result.count))
        return result

    def check(self):
        "Raise a checkpoint error if the tensors do not form a network for the vocabulary."
        try:
            if self.tensors["embed.weight"].shape[0] != sum(self.vocabulary.widths):
                raise Error("embedding does not match vocabulary", constants.CHECKPOINT_ERROR)
            for head, width in zip(HEADS, self.vocabulary.widths):
                if self.tensors[f"head.{head}.output.bias"].shape != (width,):
                    raise Error(f"head {head} does not match vocabulary", constants.CHECKPOINT_ERROR)
            if self.layers < 1:
                raise Error("no recurrent layers", constants.CHECKPOINT_ERROR)
        except KeyError as error:
            raise Error(f"missing tensor {error}", constants.CHECKPOINT_ERROR)

    @property
    def embed(self):
        return self.tensors["embed.weight"].shape[1]

    @property
    def hidden(self):
        return self.tensors["lstm.0.weight_hh"].shape[0]

    @property
    def layers(self):
        return len([n for n in self.tensors if n.startswith("lstm.") and n.endswith(".weight_hh")])

    @property
    def head_hidden(self):
        return self.tensors["head.t_u.hidden.weight"].shape[1]

    @property
    def dtype(self):
        return self.tensors["embed.weight"].dtype

    @property
    def count(self):
        "Total number of parameters."
        return sum([t.values.size for t in self.tensors.values()])

    @property
    def default_max_steps(self):
        return 2 * self.max_edges

    def zero_grad(self):
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def gradients(self):
        return dict([(name, t.grad) for name, t in self.tensors.items() if t.grad is not None])

    def snapshot(self):
        "Return copies of all parameter values."
        return dict([(name, t.values.copy()) for name, t in self.tensors.items()])

    def restore(self, values):
        for name, tensor in self.tensors.items():
            tensor.values = values[name].copy()


class StepOutput(NamedTuple):
    "Probability vectors of the three heads for one step."

    o_tu: np.ndarray
    o_tv: np.ndarray
    o_tau: np.ndarray

    @property
    def concatenated(self):
        return np.concatenate([self.o_tu, self.o_tv, self.o_tau])

    def log_prob(self, ids):
        "Log-probability of the step (t_u, t_v, token id); the sum over the heads."
        return float(sum([np.log(p[i]) for p, i in zip(self, ids)]))

    def most_probable(self):
        "The (t_u, t_v, token id) taking the most probable value of each head."
        return tuple([int(np.argmax(p)) for p in self])


class EncodedSequence:
    """Reduced code as a sequence of steps. The target steps are the
    triplets followed by EOS in all three segments; the input of the first
    step is SOS in all three segments, thereafter the previous target.
    """

    def __init__(self, targets, vocabulary):
        self.targets = tuple([tuple(t) for t in targets])
        self.vocabulary = vocabulary

    def __repr__(self):
        return f"EncodedSequence({len(self.targets)} steps)"

    def __len__(self):
        return len(self.targets)

    def __eq__(self, other):
        return isinstance(other, EncodedSequence) and self.targets == other.targets

    @property
    def inputs(self):
        return (self.vocabulary.sos,) + self.targets[:-1]

    @property
    def steps(self):
        "The target steps as concatenated one-hot vectors."
        return list(one_hot_rows(self.targets, self.vocabulary.widths))

    @property
    def edges(self):
        return len(self.targets) - 1


def one_hot_rows(triples, widths, dtype=np.float64):
    "Return the matrix of concatenated one-hot rows for the (t_u, t_v, token id) triples."
    offsets = np.cumsum([0] + list(widths[:-1]))
    result = np.zeros((len(triples), sum(widths)), dtype=dtype)
    for row, triple in enumerate(triples):
        for offset, width, index in zip(offsets, widths, triple):
            if not 0 <= index < width:
                raise Error(f"index {index} outside alphabet of width {width}", constants.VOCABULARY_ERROR)
            result[row, offset + index] = 1
    return result


def encode_sequence(code, vocabulary):
    "Return the encoded sequence for the reduced code."
    return EncodedSequence(list(vocabulary.encode(code)) + [vocabulary.eos], vocabulary)


def decode_sequence(sequence):
    "Return the reduced code of the encoded sequence, up to the first EOS."
    vocabulary = sequence.vocabulary
    ids = []
    for triple in sequence.targets:
        if _eos_segment(triple, vocabulary) is not None:
            break
        ids.append(triple)
    return vocabulary.decode(ids)


def _eos_segment(triple, vocabulary):
    "Return the name of the first segment holding EOS, or None."
    for head, index, eos in zip(HEADS, triple, vocabulary.eos):
        if index == eos:
            return head
    return None


class BatchOutput(NamedTuple):
    loss: Tensor
    probabilities: list


def _initial_state(params, batch):
    zeros = np.zeros((batch, params.hidden), dtype=params.dtype)
    return [(Tensor(zeros), Tensor(zeros)) for layer in range(params.layers)]


def _network_step(params, tensors, state, inputs, training=False, generator=None):
    """One step of the network for a batch of input rows; returns the
    logits of the concatenated heads and the new recurrent state.
    """
    x = autodiff.linear(inputs, tensors["embed.weight"], tensors["embed.bias"])
    new_state = []
    for number, (h, c) in enumerate(state):
        if number > 0:
            x = autodiff.dropout(x, params.dropout, training, generator)
        layer = dict(
            [
                (name, tensors[f"lstm.{number}.{name}"])
                for name in ("weight_ih", "weight_hh", "bias_ih", "bias_hh")
            ]
        )
        h, c = autodiff.recurrent_cell_step(x, h, c, layer)
        new_state.append((h, c))
        x = h
    logits = []
    for head in HEADS:
        hidden = autodiff.relu(
            autodiff.linear(
                x,
                tensors[f"head.{head}.hidden.weight"],
                tensors[f"head.{head}.hidden.bias"],
            )
        )
        logits.append(
            autodiff.linear(
                hidden,
                tensors[f"head.{head}.output.weight"],
                tensors[f"head.{head}.output.bias"],
            )
        )
    return autodiff.concat(logits), new_state


def forward_batch(params, sequences, training=False, generator=None):
    """Teacher-forced forward pass over a batch of encoded sequences padded
    to the longest; padded steps are masked out of the loss. The loss is
    the binary cross-entropy summed over steps, averaged over the batch.
    """
    if not sequences:
        raise Error("empty batch", constants.DATA_ERROR)
    widths = params.vocabulary.widths
    length = max([len(s) for s in sequences])
    batch = len(sequences)
    tensors = params.tensors
    all_inputs = np.zeros((length, batch, sum(widths)), dtype=params.dtype)
    all_targets = np.zeros((length, batch, sum(widths)), dtype=params.dtype)
    masks = np.zeros((length, batch), dtype=params.dtype)
    for row, sequence in enumerate(sequences):
        all_inputs[: len(sequence), row] = one_hot_rows(sequence.inputs, widths)
        all_targets[: len(sequence), row] = one_hot_rows(sequence.targets, widths)
        masks[: len(sequence), row] = 1
    state = _initial_state(params, batch)
    total = None
    probabilities = []
    for step in range(length):
        inputs, targets, mask = all_inputs[step], all_targets[step], masks[step]
        logits, state = _network_step(params, tensors, state, inputs, training, generator)
        probs = autodiff.softmax(logits, widths)
        probabilities.append(probs.values)
        loss = autodiff.bce_loss(probs, targets, mask=mask)
        total = loss if total is None else total + loss
    return BatchOutput(total * (1.0 / batch), probabilities)


def forward_teacher_forced(params, sequence):
    "Return the per-step outputs and the loss for one encoded sequence."
    output = forward_batch(params, [sequence])
    offsets = np.cumsum([0] + list(params.vocabulary.widths))
    steps = [
        StepOutput(*[probs[0, a:b] for a, b in zip(offsets[:-1], offsets[1:])])
        for probs in output.probabilities
    ]
    return steps, output.loss


def determined_steps(sequences):
    """For each sequence, one flag per step: is its target the only
    continuation of the preceding steps among all the sequences?
    """
    continuations = defaultdict(set)
    for sequence in sequences:
        for position, target in enumerate(sequence.targets):
            continuations[sequence.targets[:position]].add(target)
    return [
        [len(continuations[s.targets[:position]]) == 1 for position in range(len(s))]
        for s in sequences
    ]


def reproduces(params, sequence, determined=None):
    """Given the true preceding steps, is the most probable value of each
    head the target at every step? Only the flagged steps count, if given.
    """
    steps, loss = forward_teacher_forced(params, sequence)
    if determined is None:
        determined = [True] * len(steps)
    return all(
        [
            step.most_probable() == target
            for step, target, flag in zip(steps, sequence.targets, determined)
            if flag
        ]
    )


def mean_loss(params, sequences, batch_size=constants.BATCH_SIZE):
    "Mean per-sequence loss, without dropout."
    if not sequences:
        return float("nan")
    total = 0.0
    for start in range(0, len(sequences), batch_size):
        batch = sequences[start : start + batch_size]
        total += forward_batch(params, batch).loss.item() * len(batch)
    return total / len(sequences)


class EpochRecord(NamedTuple):
    epoch: int
    lr: float
    train_loss: float
    val_loss: float

    def __str__(self):
        return (
            f"epoch {self.epoch} lr {self.lr:g} train_loss {self.train_loss:.6f}"
            f" val_loss {self.val_loss:.6f}"
        )


class TrainingResult(NamedTuple):
    params: ModelParams
    log: list
    best_epoch: int
    best_loss: float
    parameter_count: int
    cpu_time: float


def train(params, corpus, config, validation=None, log_path=None):
    """Train the parameters in place with Adam on the encoded sequences.
    The config gives epochs, seed, batch_size, lr, decay and milestones.
    The parameters with the lowest validation loss (training loss when there
    is no validation set) are kept at the end. One log line per epoch is
    written to the log file, if given.
    """
    if not corpus:
        raise Error("empty training corpus", constants.DATA_ERROR)
    params.max_edges = max(params.max_edges, max([s.edges for s in corpus]))
    state = autodiff.AdamState(
        params.tensors,
        lr=config.lr,
        decay=config.decay,
        milestones=config.milestones,
    )
    timer = utils.Timer()
    best_epoch = 0
    best_loss = float("inf")
    best_values = params.snapshot()
    log = []
    logfile = open(log_path, "w", encoding=constants.ENCODING, newline="\n") if log_path else None
    logger.info(
        "training %s parameters on %s sequences for %s epochs",
        utils.thousands(params.count),
        len(corpus),
        config.epochs,
    )
    try:
        for epoch in range(1, config.epochs + 1):
            order = utils.rng(config.seed, "shuffle", epoch).permutation(len(corpus))
            total = 0.0
            for number, start in enumerate(range(0, len(corpus), config.batch_size)):
                batch = [corpus[i] for i in order[start : start + config.batch_size]]
                generator = utils.rng(config.seed, "dropout", epoch, number)
                loss = forward_batch(params, batch, training=True, generator=generator).loss
                params.zero_grad()
                loss.backward()
                autodiff.adam_step(params.tensors, params.gradients(), state, epoch)
                total += loss.item() * len(batch)
            train_loss = total / len(corpus)
            if validation:
                val_loss = mean_loss(params, validation, config.batch_size)
                selection = val_loss
            else:
                val_loss = float("nan")
                selection = train_loss
            record = EpochRecord(epoch, state.learning_rate(epoch), train_loss, val_loss)
            log.append(record)
            logger.info(str(record))
            if logfile:
                logfile.write(f"{record}\n")
                logfile.flush()
            if selection < best_loss:
                best_loss = selection
                best_epoch = epoch
                best_values = params.snapshot()
    finally:
        if logfile:
            logfile.close()
    params.zero_grad()
    params.restore(best_values)
    elapsed = timer.elapsed
    logger.info("training done in %.1f s CPU; best epoch %s", elapsed, best_epoch)
    return TrainingResult(params, log, best_epoch, best_loss, params.count, elapsed)


class GenerationReport(NamedTuple):
    "Outcome of sampling one sequence."

    steps: int
    truncated: bool
    eos_segment: str

    def as_dict(self):
        return dict(steps=self.steps, truncated=self.truncated, eos_segment=self.eos_segment)


def sample(params, vocabulary, max_steps=None, seed=0, greedy=False, counter=0):
    """Sample a reduced code from the model; stop at the first EOS in any
    head, or after max_steps steps (truncation). SOS is never chosen.
    Greedy mode takes the most probable value of each head.
    Return (ReducedCode, GenerationReport).
    """
    if vocabulary.digest != params.vocabulary.digest:
        raise Error("vocabulary differs from the model's", constants.VOCABULARY_ERROR)
    if max_steps is None:
        max_steps = params.default_max_steps
    generator = utils.rng(seed, "sample", counter)
    widths = vocabulary.widths
    offsets = np.cumsum([0] + list(widths))
    tensors = dict([(name, Tensor(t.values)) for name, t in params.tensors.items()])
    state = _initial_state(params, 1)
    current = vocabulary.sos
    ids = []
    eos_segment = None
    for step in range(max_steps):
        inputs = one_hot_rows([current], widths, dtype=params.dtype)
        logits, state = _network_step(params, tensors, state, inputs)
        probs = autodiff.softmax(logits, widths).values[0].astype(np.float64)
        chosen = []
        for a, b, sos in zip(offsets[:-1], offsets[1:], vocabulary.sos):
            p = probs[a:b].copy()
            p[sos] = 0.0
            if greedy:
                chosen.append(int(np.argmax(p)))
            else:
                chosen.append(int(generator.choice(len(p), p=p / p.sum())))
        current = tuple(chosen)
        eos_segment = _eos_segment(current, vocabulary)
        if eos_segment is not None:
            break
        ids.append(current)
    truncated = eos_segment is None
    if truncated:
        logger.debug("sample %s truncated at %s steps", counter, max_steps)
    report = GenerationReport(len(ids), truncated, eos_segment)
    return vocabulary.decode(ids), report


def sample_many(params, vocabulary, count, seed=0, max_steps=None, greedy=False, workers=1):
    "Sample count codes, number i from its own random stream; return list of (code, report)."
    return joblib.Parallel(n_jobs=workers)(
        joblib.delayed(sample)(params, vocabulary, max_steps, seed, greedy, number)
        for number in range(count)
    )


CHECKPOINT_HEADER = struct.Struct("<4sIH")


def save_checkpoint(params, path):
    """Write the checkpoint: magic, format version, vocabulary digest, then
    the named tensors (name, rank, dims, little-endian 32-bit reals).
    """
    digest = params.vocabulary.digest.encode("ascii")
    tensors = list(params.tensors.items())
    tensors.append((f"{constants.META_PREFIX}dropout", np.array(params.dropout)))
    tensors.append((f"{constants.META_PREFIX}max_edges", np.array(params.max_edges)))
    chunks = [
        CHECKPOINT_HEADER.pack(
            constants.CHECKPOINT_MAGIC,
            constants.FORMAT_VERSIONS["checkpoint"],
            len(digest),
        ),
        digest,
        struct.pack("<I", len(tensors)),
    ]
    for name, tensor in tensors:
        values = tensor.values if isinstance(tensor, Tensor) else tensor
        encoded = name.encode(constants.ENCODING)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype="<f4").tobytes())
    with open(path, "wb") as outfile:
        outfile.write(b"".join(chunks))
    logger.info("wrote checkpoint %s (%s tensors)", path, len(tensors))


def load_checkpoint(path, vocabulary):
    "Read the checkpoint; refuse it if written for another vocabulary."
    with open(path, "rb") as infile:
        data = infile.read()
    position = 0

    def take(size):
        nonlocal position
        if position + size > len(data):
            raise Error(f"checkpoint {path} is truncated", constants.CHECKPOINT_ERROR)
        chunk = data[position : position + size]
        position += size
        return chunk

    magic, version, digest_length = CHECKPOINT_HEADER.unpack(take(CHECKPOINT_HEADER.size))
    if magic != constants.CHECKPOINT_MAGIC:
        raise Error(f"{path} is not a checkpoint file", constants.CHECKPOINT_ERROR)
    if version != constants.FORMAT_VERSIONS["checkpoint"]:
        raise Error(f"checkpoint format version {version} not supported", constants.CHECKPOINT_ERROR)
    digest = take(digest_length).decode("ascii")
    if digest != vocabulary.digest:
        raise Error("checkpoint was written for another vocabulary", constants.CHECKPOINT_ERROR)
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    meta = {}
    for number in range(count):
        (length,) = struct.unpack("<H", take(2))
        name = take(length).decode(constants.ENCODING)
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        if name.startswith(constants.META_PREFIX):
            meta[name[len(constants.META_PREFIX) :]] = values
        else:
            tensors[name] = Tensor(values, requires_grad=True)
    if position != len(data):
        raise Error(f"checkpoint {path} has trailing data", constants.CHECKPOINT_ERROR)
    result = ModelParams(
        vocabulary,
        tensors,
        dropout=float(meta.get("dropout", constants.DROPOUT)),
        max_edges=int(meta.get("max_edges", 0)),
    )
    logger.info("read checkpoint %s: %s", path, result)
    return result
