"""Simulated-annealing search over valid architectures.

The search walks the space through single-edge mutations.  Each round draws
one neighbor of the incumbent, evaluates it, and accepts it either because it
improves the penalty or by the Metropolis rule at the current temperature.
Temperature follows a geometric schedule, t0 * xi**k at round k, computed
from the round index so long runs accumulate no rounding drift.  The best
architecture ever accepted is returned; because improving candidates are
always accepted, that equals the best ever evaluated.

Every evaluation is memoized on the pruned canonical encoding, so revisiting
an architecture (or an equivalent one differing only in dead edges) costs
nothing.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import IO

from .evaluators import EvaluationError, Evaluator, MemoizingEvaluator
from .search_space import (
    ChildArchitecture,
    SearchSpaceConfig,
    active_scales,
    architecture_from_states,
    canonical_encoding,
    edge_slots,
    encode,
    prune,
    random_valid,
    validate,
)

TRACE_HEADER = "iteration,temperature,candidate_penalty,current_penalty,best_penalty,accepted,reason"

DEFAULT_T0 = 1024.0
DEFAULT_XI = 0.85
DEFAULT_ITERATIONS = 200

_NEIGHBOR_ATTEMPTS = 100


class NeighborExhaustedError(RuntimeError):
    """No distinct valid neighbor was found within the attempt budget."""


@dataclass(frozen=True)
class AnnealingSchedule:
    """Geometric cooling plan: temperature t0 * xi**k before round k."""

    initial_temperature: float = DEFAULT_T0
    decay_factor: float = DEFAULT_XI
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self) -> None:
        if not self.initial_temperature > 0:
            raise ValueError(
                f"initial_temperature must be positive, got {self.initial_temperature}"
            )
        if not 0 < self.decay_factor < 1:
            raise ValueError(
                f"decay_factor must lie in (0, 1), got {self.decay_factor}"
            )
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def temperature_at(schedule: AnnealingSchedule, k: int) -> float:
    """Temperature of 0-based round k: initial_temperature * decay_factor**k."""
    if k < 0:
        raise ValueError(f"round index must be >= 0, got {k}")
    return schedule.initial_temperature * schedule.decay_factor**k


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis acceptance: 1 for non-worsening moves, exp(-delta/T) else."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if delta <= 0:
        return 1.0
    return math.exp(-delta / temperature)


def accept_candidate(delta: float, temperature: float, rng: random.Random) -> bool:
    """One acceptance decision; always consumes exactly one uniform draw."""
    return rng.random() < acceptance_probability(delta, temperature)


def _repair(
    config: SearchSpaceConfig,
    states: dict,
    rng: random.Random,
) -> None:
    # Reconnects until valid: feed the earliest inactive node that matters,
    # then force a gather edge if the head is starved.  New edges from
    # inactive sources are themselves repaired on a later pass; each pass
    # only adds edges, so activity grows monotonically and the loop ends.
    L, D = config.num_layers, config.num_scales
    n_ops = len(config.op_alphabet)
    while True:
        arch = architecture_from_states(config, states)
        report = validate(config, arch)
        if report.is_valid:
            return
        active = active_scales(config, arch)
        if report.dangling_edges:
            layer, scale, _target = min(
                report.dangling_edges, key=lambda e: (e[0], e[1])
            )
            _feed_node(config, states, rng, active, layer, scale)
            continue
        # Head starved: gather from an active layer-L node when one exists,
        # otherwise from any node and let the dangling repair build its path.
        candidates = sorted(active[L]) or list(range(1, D + 1))
        source = candidates[rng.randrange(len(candidates))]
        states[(L, source, 0)] = rng.randrange(n_ops)


def _feed_node(
    config: SearchSpaceConfig,
    states: dict,
    rng: random.Random,
    active: tuple,
    layer: int,
    scale: int,
) -> None:
    # Give (layer, scale) one incoming edge, preferring an active source.
    D = config.num_scales
    n_ops = len(config.op_alphabet)
    if layer == 2:
        sources = [1]
    else:
        sources = sorted(active[layer - 1]) or list(range(1, D + 1))
    source = sources[rng.randrange(len(sources))]
    states[(layer - 1, source, scale)] = rng.randrange(n_ops)


def neighbor(
    config: SearchSpaceConfig, arch: ChildArchitecture, rng_seed: int
) -> ChildArchitecture:
    """A valid architecture one mutation away, canonically distinct from arch.

    Mutations start from the pruned canonical form, so dead edges on the
    input can neither absorb moves nor block the repair of new ones.  The
    mutation adds an absent edge, drops a present edge, or rewrites one
    edge's op, each feasible kind equally likely; repair then restores
    validity.  Candidates that prune down to the input are rejected and
    retried.  Raises NeighborExhaustedError after 100 fruitless attempts.
    """
    rng = random.Random(rng_seed)
    slots = edge_slots(config)
    n_ops = len(config.op_alphabet)
    pruned = prune(config, arch)
    origin = encode(pruned)
    base = {
        slot: pruned.state_of(*slot)
        for slot in slots
        if pruned.state_of(*slot) is not None
    }
    for _ in range(_NEIGHBOR_ATTEMPTS):
        states = dict(base)
        present = [slot for slot in slots if slot in states]
        absent = [slot for slot in slots if slot not in states]
        moves = []
        if absent:
            moves.append("add")
        if present:
            moves.append("drop")
        if present and n_ops > 1:
            moves.append("change_op")
        move = moves[rng.randrange(len(moves))]
        if move == "add":
            slot = absent[rng.randrange(len(absent))]
            states[slot] = rng.randrange(n_ops)
        elif move == "drop":
            slot = present[rng.randrange(len(present))]
            del states[slot]
        else:
            slot = present[rng.randrange(len(present))]
            states[slot] = (states[slot] + 1 + rng.randrange(n_ops - 1)) % n_ops
        _repair(config, states, rng)
        candidate = architecture_from_states(config, states)
        if canonical_encoding(config, candidate) != origin:
            return candidate
    raise NeighborExhaustedError(
        f"no canonically distinct valid neighbor in {_NEIGHBOR_ATTEMPTS} attempts"
    )


@dataclass(frozen=True)
class SearchTraceEntry:
    """One annealing round as it lands in the trace.

    current_penalty is the incumbent's penalty before the decision;
    best_penalty is the best after it, hence non-increasing down the trace.
    """

    iteration: int
    temperature: float
    candidate_penalty: float
    current_penalty: float
    best_penalty: float
    accepted: bool
    reason: str


def trace_line(entry: SearchTraceEntry) -> str:
    """Render one trace entry as its CSV row (floats at 9 significant digits)."""
    cells = (
        str(entry.iteration),
        f"{entry.temperature:.9g}",
        f"{entry.candidate_penalty:.9g}",
        f"{entry.current_penalty:.9g}",
        f"{entry.best_penalty:.9g}",
        "true" if entry.accepted else "false",
        entry.reason,
    )
    return ",".join(cells)


class SearchAbortedError(RuntimeError):
    """The annealing loop stopped early; trace holds the completed rounds."""

    def __init__(self, message: str, trace: tuple[SearchTraceEntry, ...]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one completed annealing run."""

    best_architecture: ChildArchitecture
    best_penalty: float
    trace: tuple[SearchTraceEntry, ...]
    evaluations: int
    cache_hits: int

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def initial_penalty(self) -> float:
        return self.trace[0].current_penalty

    @property
    def accepted(self) -> int:
        return sum(1 for entry in self.trace if entry.accepted)

    @property
    def improvements(self) -> int:
        return sum(1 for entry in self.trace if entry.reason == "improvement")


def anneal(
    config: SearchSpaceConfig,
    evaluator: Evaluator,
    schedule: AnnealingSchedule | None = None,
    *,
    rng_seed: int,
    initial: ChildArchitecture | None = None,
    trace_sink: IO[str] | None = None,
) -> SearchResult:
    """Run the annealing loop and return the best architecture found.

    Reruns with identical arguments reproduce the same walk and, when
    trace_sink is given, byte-identical trace text.  Per round the generator
    is consumed in a fixed order: one 64-bit draw for the neighbor seed, then
    one uniform for the acceptance decision.  An evaluator failure or an
    exhausted neighbor budget raises SearchAbortedError carrying the rounds
    finished so far.
    """
    if schedule is None:
        schedule = AnnealingSchedule()
    memo = (
        evaluator
        if isinstance(evaluator, MemoizingEvaluator)
        else MemoizingEvaluator(config, evaluator)
    )
    rng = random.Random(rng_seed)
    if initial is None:
        current = random_valid(config, rng.getrandbits(64))
    else:
        report = validate(config, initial)
        if not report.is_valid:
            raise ValueError("initial architecture is not valid")
        current = initial
    entries: list[SearchTraceEntry] = []
    try:
        current_penalty = memo.evaluate(current)
    except EvaluationError as exc:
        raise SearchAbortedError(
            f"search aborted before the first round: {exc}", ()
        ) from exc
    best = prune(config, current)
    best_penalty = current_penalty
    if trace_sink is not None:
        trace_sink.write(TRACE_HEADER + "\n")
    for k in range(schedule.iterations):
        temp = temperature_at(schedule, k)
        try:
            candidate = neighbor(config, current, rng.getrandbits(64))
            candidate_penalty = memo.evaluate(candidate)
        except (NeighborExhaustedError, EvaluationError) as exc:
            raise SearchAbortedError(
                f"search aborted at round {k}: {exc}", tuple(entries)
            ) from exc
        delta = candidate_penalty - current_penalty
        accepted = accept_candidate(delta, temp, rng)
        if accepted:
            reason = "improvement" if delta < 0 else "metropolis"
        else:
            reason = "rejected"
        incumbent_before = current_penalty
        if accepted:
            current = candidate
            current_penalty = candidate_penalty
            if candidate_penalty < best_penalty:
                best = prune(config, candidate)
                best_penalty = candidate_penalty
        entry = SearchTraceEntry(
            iteration=k,
            temperature=temp,
            candidate_penalty=candidate_penalty,
            current_penalty=incumbent_before,
            best_penalty=best_penalty,
            accepted=accepted,
            reason=reason,
        )
        entries.append(entry)
        if trace_sink is not None:
            trace_sink.write(trace_line(entry) + "\n")
    return SearchResult(
        best_architecture=best,
        best_penalty=best_penalty,
        trace=tuple(entries),
        evaluations=memo.misses,
        cache_hits=memo.hits,
    )
