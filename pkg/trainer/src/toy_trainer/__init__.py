"""Weight-shared toy supernet: batch-stream training and penalty serving.

This package sits on the consuming side of the search tooling's file and
pipe formats.  It reads sampled batch streams, trains one shared
parameter store over all children, and serves validation penalties to a
searcher over the monas-eval/1 line protocol.  It never imports the
search package; architecture records are parsed from their documented
JSON form.
"""
from .model import IDENTITY_OP, ToySupernet
from .records import (
    HEAD,
    ChildRecord,
    Edge,
    GridSpec,
    RecordError,
    StreamBatch,
    load_stream,
    parse_record,
    parse_stream_line,
    validity_problem,
)
from .server import PROTOCOL_NAME, PenaltyServer, serve
from .task import holdout_examples, make_examples
from .training import (
    CHECKPOINT_FORMAT,
    TrainingDivergedError,
    TrainingResult,
    load_checkpoint,
    save_checkpoint,
    train_on_stream,
)

__all__ = [
    "CHECKPOINT_FORMAT",
    "ChildRecord",
    "Edge",
    "GridSpec",
    "HEAD",
    "IDENTITY_OP",
    "PROTOCOL_NAME",
    "PenaltyServer",
    "RecordError",
    "StreamBatch",
    "ToySupernet",
    "TrainingDivergedError",
    "TrainingResult",
    "holdout_examples",
    "load_checkpoint",
    "load_stream",
    "make_examples",
    "parse_record",
    "parse_stream_line",
    "save_checkpoint",
    "serve",
    "train_on_stream",
    "validity_problem",
]
