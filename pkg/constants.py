"Constants."

SOFTWARE = "ggredux"
VERSION = (1, 0, 0)
__version__ = ".".join([str(n) for n in VERSION])

ENCODING = "utf-8"

CONFIG_ENVVAR = "GGREDUX_CONFIG"

# File format versions; printed by '--version'.
FORMAT_VERSIONS = dict(
    graphs=1,
    codes=1,
    vocabulary=1,
    splits=1,
    checkpoint=1,
    training_log=1,
    report=1,
)

# Error kinds, and the process exit status for each.
PARSE_ERROR = "parse"
VALIDATION_ERROR = "validation"
SHAPE_ERROR = "shape"
VOCABULARY_ERROR = "vocabulary"
CHECKPOINT_ERROR = "checkpoint"
CONFIG_ERROR = "config"
DATA_ERROR = "data"
IO_ERROR = "io"
ERROR_KINDS = (
    PARSE_ERROR,
    VALIDATION_ERROR,
    SHAPE_ERROR,
    VOCABULARY_ERROR,
    CHECKPOINT_ERROR,
    CONFIG_ERROR,
    DATA_ERROR,
    IO_ERROR,
)
EXIT_CODES = dict([(kind, number) for number, kind in enumerate(ERROR_KINDS, 2)])

# Graph transaction format.
GRAPH_LINE = "t"
NODE_LINE = "v"
EDGE_LINE = "e"

# Reduced code and vocabulary files.
CODE_HEADER = "#"
VOCABULARY_HEADER = "T"

# Split membership.
TRAIN = "train"
VAL = "val"
TEST = "test"
PARTITIONS = (TRAIN, VAL, TEST)
TEST_FRACTION = 0.10
VAL_FRACTION = 0.10

# Enzymes-style degree augmentation separator.
DEGREE_SEPARATOR = ":"

# Random-walk subgraph sampler.
WALK_COUNT = 150
RESTART_P = 0.15
WALK_LEN = 30

# Checkpoint file.
CHECKPOINT_MAGIC = b"GGRX"
META_PREFIX = "meta."

# Optimizer and schedule.
LEARNING_RATE = 0.003
DECAY = 0.3
MILESTONES = (100, 200, 400, 800)
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
BCE_EPS = 1e-12

# Network dimensions.
EMBED = 64
HIDDEN = 128
LAYERS = 4
HEAD_HIDDEN = 128
DROPOUT = 0.2
BATCH_SIZE = 32

# Evaluation.
SAMPLE_COUNT = 2560
EVAL_BATCH = 256
EVAL_ROUNDS = 10
NSPDK_R = 2
NSPDK_D = 4
MMD_SIGMA = 1.0
CLUSTERING_BINS = 100
ORBIT_COUNT = 15

# Descriptor kinds.
DEGREE = "degree"
CLUSTERING = "clustering"
ORBIT = "orbit"
NODE_LABEL = "node_label"
EDGE_LABEL = "edge_label"
LABEL_DEGREE = "label_degree"
DESCRIPTOR_KINDS = (DEGREE, CLUSTERING, ORBIT, NODE_LABEL, EDGE_LABEL, LABEL_DEGREE)

# Evaluation protocols; (batch size, rounds).
PROTOCOLS = dict(
    standard=(EVAL_BATCH, EVAL_ROUNDS),
    small=(40, 64),
)

VALID = "valid"
INVALID = "invalid"

DATETIME_ISO_FORMAT = "%Y-%m-%d %H:%M:%S"
