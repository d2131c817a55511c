"""Run configuration: built-in defaults, overridden by a flat key=value
file, overridden by command-line settings.
"""

import logging
import os
from pathlib import Path

import dotenv
import psutil

import constants
from utils import Error

logger = logging.getLogger(__name__)


def to_path(value):
    if value is None or value == "":
        return None
    return Path(value)


def to_optional_int(value):
    if value is None or str(value).lower() in ("", "none"):
        return None
    return int(value)


def to_milestones(value):
    if isinstance(value, str):
        return tuple([int(part) for part in value.split(",") if part.strip()])
    return tuple([int(part) for part in value])


def default_workers():
    return psutil.cpu_count(logical=True) or 1


# Key: (converter, default). Defaults are the published hyperparameters.
FIELDS = dict(
    graphs=(to_path, None),
    codes=(to_path, None),
    vocab=(to_path, None),
    splits=(to_path, None),
    checkpoint=(to_path, None),
    training_log=(to_path, None),
    report=(to_path, None),
    seed=(int, 0),
    epochs=(int, 0),
    batch_size=(int, constants.BATCH_SIZE),
    lr=(float, constants.LEARNING_RATE),
    milestones=(to_milestones, constants.MILESTONES),
    decay=(float, constants.DECAY),
    dropout=(float, constants.DROPOUT),
    embed=(int, constants.EMBED),
    hidden=(int, constants.HIDDEN),
    layers=(int, constants.LAYERS),
    head_hidden=(int, constants.HEAD_HIDDEN),
    test_fraction=(float, constants.TEST_FRACTION),
    val_fraction=(float, constants.VAL_FRACTION),
    sample_count=(int, constants.SAMPLE_COUNT),
    eval_batch=(int, constants.EVAL_BATCH),
    eval_rounds=(int, constants.EVAL_ROUNDS),
    walk_count=(int, constants.WALK_COUNT),
    restart_p=(float, constants.RESTART_P),
    walk_len=(int, constants.WALK_LEN),
    nspdk_r=(int, constants.NSPDK_R),
    nspdk_d=(int, constants.NSPDK_D),
    mmd_sigma=(float, constants.MMD_SIGMA),
    max_steps=(to_optional_int, None),
    workers=(int, None),
)


class RunConfig:
    "Fully resolved settings of a run."

    def __init__(self, **settings):
        for key, (converter, default) in FIELDS.items():
            setattr(self, key, default)
        self.workers = default_workers()
        self.update(settings, "arguments")

    def __repr__(self):
        return f"RunConfig({', '.join([f'{k}={v}' for k, v in self.as_dict().items()])})"

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.as_dict() == other.as_dict()

    @classmethod
    def load(cls, path=None, overrides=None):
        """Return the configuration from the file (or the file named by the
        environment variable), with the overrides applied on top.
        """
        result = cls()
        path = path or os.environ.get(constants.CONFIG_ENVVAR)
        if path:
            if not Path(path).is_file():
                raise Error(f"config file {path} not found", constants.IO_ERROR)
            result.update(dotenv.dotenv_values(path), str(path))
        result.update(overrides or {}, "command line")
        return result

    def update(self, settings, source):
        "Set the given values; keys may use hyphens for underscores."
        for key, value in settings.items():
            name = key.replace("-", "_")
            try:
                converter, default = FIELDS[name]
            except KeyError:
                raise Error(f"unknown config key '{key}' in {source}", constants.CONFIG_ERROR)
            try:
                setattr(self, name, converter(value))
            except (TypeError, ValueError):
                raise Error(f"invalid value '{value}' for '{key}' in {source}", constants.CONFIG_ERROR)
        self.check()

    def check(self):
        "Raise a config error for values out of range."
        for key in ("batch_size", "embed", "hidden", "layers", "head_hidden", "workers"):
            if getattr(self, key) < 1:
                raise Error(f"'{key}' must be positive", constants.CONFIG_ERROR)
        for key in ("epochs", "sample_count", "walk_count", "walk_len", "nspdk_r", "nspdk_d"):
            if getattr(self, key) < 0:
                raise Error(f"'{key}' must not be negative", constants.CONFIG_ERROR)
        if self.eval_batch < 1 or self.eval_rounds < 1:
            raise Error("evaluation batch and rounds must be positive", constants.CONFIG_ERROR)
        if not 0 <= self.dropout < 1:
            raise Error("'dropout' must be in [0, 1)", constants.CONFIG_ERROR)
        if not 0 <= self.restart_p <= 1:
            raise Error("'restart_p' must be in [0, 1]", constants.CONFIG_ERROR)
        if self.lr <= 0 or self.mmd_sigma <= 0:
            raise Error("'lr' and 'mmd_sigma' must be positive", constants.CONFIG_ERROR)
        if self.max_steps is not None and self.max_steps < 0:
            raise Error("'max_steps' must not be negative", constants.CONFIG_ERROR)

    def as_dict(self):
        return dict([(key, getattr(self, key)) for key in FIELDS])

    def format(self):
        "Return the settings as key=value lines, in config file format."
        lines = []
        for key, value in self.as_dict().items():
            if value is None:
                value = ""
            elif key == "milestones":
                value = ",".join([str(m) for m in value])
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def log(self):
        for line in self.format().split("\n"):
            if line:
                logger.info("config %s", line)
