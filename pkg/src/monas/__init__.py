"""Multi-path one-shot architecture search toolkit.

Submodules:

* ``search_space``: grid model, validity, pruning, canonical serialization
* ``sampler``: strict-fairness child batches and reproducible batch streams
* ``searcher``: simulated-annealing search with single-edge mutations
* ``evaluators``: planted, table-backed, subprocess, and memoizing evaluators
* ``protocol``: the evaluator wire protocol shared with external processes
* ``cli``: the ``monas`` command
"""
from __future__ import annotations

from .evaluators import (
    EvaluationError,
    Evaluator,
    MemoizingEvaluator,
    PlantedEvaluator,
    ProcessEvaluator,
    TableEvaluator,
)
from .sampler import (
    BatchSample,
    BatchSizeError,
    FairnessReport,
    StreamSummary,
    assert_fair,
    batch_stream,
    derive_seed,
    read_batch_stream,
    sample_batch,
)
from .searcher import (
    AnnealingSchedule,
    NeighborExhaustedError,
    SearchAbortedError,
    SearchResult,
    SearchTraceEntry,
    acceptance_probability,
    anneal,
    neighbor,
    temperature_at,
    trace_line,
)
from .search_space import (
    ChildArchitecture,
    DecodeError,
    InvalidArchitectureError,
    NodeId,
    SearchSpaceConfig,
    ShapeMismatchError,
    SpaceTooLargeError,
    ValidityReport,
    canonical_encoding,
    decode,
    edge_count,
    encode,
    enumerate_all,
    enumerate_valid,
    prune,
    random_valid,
    space_size_unconstrained,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealingSchedule",
    "BatchSample",
    "BatchSizeError",
    "ChildArchitecture",
    "DecodeError",
    "EvaluationError",
    "Evaluator",
    "FairnessReport",
    "InvalidArchitectureError",
    "MemoizingEvaluator",
    "NeighborExhaustedError",
    "NodeId",
    "PlantedEvaluator",
    "ProcessEvaluator",
    "SearchAbortedError",
    "SearchResult",
    "SearchSpaceConfig",
    "SearchTraceEntry",
    "ShapeMismatchError",
    "SpaceTooLargeError",
    "StreamSummary",
    "TableEvaluator",
    "ValidityReport",
    "acceptance_probability",
    "anneal",
    "assert_fair",
    "batch_stream",
    "canonical_encoding",
    "decode",
    "derive_seed",
    "edge_count",
    "encode",
    "enumerate_all",
    "enumerate_valid",
    "neighbor",
    "prune",
    "random_valid",
    "read_batch_stream",
    "sample_batch",
    "space_size_unconstrained",
    "temperature_at",
    "trace_line",
    "validate",
]
