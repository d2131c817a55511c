"Various simple utility functions."

import datetime
import hashlib
import time

import numpy as np

import constants


class Error(Exception):
    "Custom exception; carries a message and the kind of error."

    def __init__(self, message, kind):
        super().__init__(message)
        if kind not in constants.ERROR_KINDS:
            raise ValueError(f"invalid error kind '{kind}'")
        self.kind = kind

    @property
    def exit_code(self):
        return constants.EXIT_CODES[self.kind]

    def oneline(self):
        "Return the machine-parseable single-line form of the error."
        message = " ".join(str(self).split())
        return f"error kind={self.kind} message={message}"


def thousands(i):
    return f"{i:,}"


def whitespace_free(value):
    "Is the value a non-empty text without any whitespace?"
    return bool(value) and not any(c.isspace() for c in value)


def get_digest(content):
    "Return the hex digest for the given text or bytes."
    if isinstance(content, str):
        content = content.encode(constants.ENCODING)
    return hashlib.sha256(content).hexdigest()


def timestr():
    "Return the ISO time string for now, in UTC."
    result = datetime.datetime.now(datetime.timezone.utc).strftime(constants.DATETIME_ISO_FORMAT)
    return result.replace(" ", "T") + "Z"


# Component numbers for the counter-based seed scheme.
SEED_COMPONENTS = dict(
    split=0,
    init=1,
    shuffle=2,
    dropout=3,
    sample=4,
    walk=5,
    evaluate=6,
)


def rng(seed, component, *counters):
    """Return an independent random generator for the component of the run,
    optionally for a given counter (e.g. sample number or epoch).
    Same arguments always give the same stream.
    """
    entropy = [int(seed), SEED_COMPONENTS[component], *[int(c) for c in counters]]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class Timer:
    "Timer for process CPU time."

    def __init__(self):
        self.restart()

    def __str__(self):
        return f"{self.elapsed:.3f}"

    @property
    def elapsed(self):
        return time.process_time() - self.start

    def restart(self):
        self.start = time.process_time()
