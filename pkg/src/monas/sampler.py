"""Strict-fairness batch sampling of supernet children.

Each batch holds ``batch_size`` valid children built so that, within the
batch, competing edge slots are exercised equally often:

* every node in layers 2..L receives exactly one present incoming edge in
  every child, so each stem fanout slot appears in all K children;
* for each interior target node the K source choices are K/D concatenated
  random permutations of the source scales, so each of the D*D slots in an
  interior connection layer is used exactly K/D times per batch;
* each child carries exactly one gather edge and the K gather choices cycle
  through the D scales the same way, K/D uses per slot;
* per edge slot, ops rotate through the alphabet from a random start, so op
  counts on one slot never differ by more than one.

K must be a positive multiple of D; per-layer uniform counts are impossible
otherwise.  Batches are a pure function of (config, batch_size, rng_seed).
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

from .search_space import (
    ChildArchitecture,
    SearchSpaceConfig,
    architecture_from_states,
    encode,
    validate,
)

CountMatrix = tuple[tuple[int, ...], ...]


class BatchSizeError(ValueError):
    """batch_size is not a positive multiple of the scale count."""


def _layer_shape(config: SearchSpaceConfig, layer: int) -> tuple[int, int]:
    # Rows are source scales, columns target scales; the stem row has one
    # source and the gather row one target (the output head).
    D = config.num_scales
    rows = 1 if layer == 1 else D
    cols = 1 if layer == config.num_layers else D
    return rows, cols


def present_counts(
    config: SearchSpaceConfig, children: Sequence[ChildArchitecture]
) -> dict[int, CountMatrix]:
    """Per connection layer, how often each edge slot is present in children."""
    grids: dict[int, list[list[int]]] = {}
    for layer in range(1, config.num_layers + 1):
        rows, cols = _layer_shape(config, layer)
        grids[layer] = [[0] * cols for _ in range(rows)]
    for child in children:
        for layer, source, target, _op in child.present_edges():
            grids[layer][source - 1][max(target - 1, 0)] += 1
    return {layer: tuple(tuple(row) for row in grid) for layer, grid in grids.items()}


@dataclass(frozen=True)
class BatchSample:
    """One batch of children plus its per-layer present-edge counts.

    ``fairness_counts`` is always derived from ``children`` on construction,
    so it cannot drift from the batch content.  Construction accepts unfair
    or invalid children on purpose; ``assert_fair`` is the judge.
    """

    children: tuple[ChildArchitecture, ...]
    seed: int
    fairness_counts: dict[int, CountMatrix] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("a batch needs at least one child")
        config = self.children[0].config
        for child in self.children[1:]:
            if child.config != config:
                raise ValueError("children of one batch must share a config")
        object.__setattr__(
            self, "fairness_counts", present_counts(config, self.children)
        )

    @property
    def config(self) -> SearchSpaceConfig:
        return self.children[0].config


@dataclass(frozen=True)
class FairnessReport:
    """Verdict of assert_fair: per-layer uniformity plus child validity."""

    fair: bool
    violation: str | None
    invalid_children: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return self.fair and not self.invalid_children


def _slot_name(config: SearchSpaceConfig, layer: int, row: int, col: int) -> str:
    target = "out" if layer == config.num_layers else str(col + 1)
    return f"{row + 1}->{target}"


def assert_fair(batch: BatchSample) -> FairnessReport:
    """Recount the batch and report the first unfair layer, if any.

    Fairness means every edge slot of a connection layer is present equally
    often across the batch.  Every child is also re-checked for validity;
    offenders land in the report by index.
    """
    config = batch.config
    counts = present_counts(config, batch.children)
    violation = None
    for layer in range(1, config.num_layers + 1):
        cells = [
            (row, col, count)
            for row, line in enumerate(counts[layer])
            for col, count in enumerate(line)
        ]
        row0, col0, reference = cells[0]
        for row, col, count in cells[1:]:
            if count != reference:
                violation = (
                    f"layer {layer}: edge {_slot_name(config, layer, row0, col0)} "
                    f"present {reference} times but edge "
                    f"{_slot_name(config, layer, row, col)} present {count} times"
                )
                break
        if violation is not None:
            break
    invalid = tuple(
        index
        for index, child in enumerate(batch.children)
        if not validate(config, child).is_valid
    )
    return FairnessReport(
        fair=violation is None, violation=violation, invalid_children=invalid
    )


def _permutation_schedule(rng: random.Random, scales: int, repeats: int) -> list[int]:
    # Concatenation of `repeats` independently shuffled permutations of 1..scales.
    schedule: list[int] = []
    for _ in range(repeats):
        block = list(range(1, scales + 1))
        rng.shuffle(block)
        schedule.extend(block)
    return schedule


def sample_batch(
    config: SearchSpaceConfig, batch_size: int, rng_seed: int
) -> BatchSample:
    """Draw one fair batch of valid children, deterministically per seed."""
    L, D = config.num_layers, config.num_scales
    if batch_size <= 0:
        raise BatchSizeError(f"batch_size must be positive, got {batch_size}")
    if batch_size % D != 0:
        raise BatchSizeError(
            f"unsatisfiable fairness: batch_size {batch_size} is not a multiple "
            f"of num_scales {D}, so edge slots in a connection layer cannot all "
            "be used equally often"
        )
    rng = random.Random(rng_seed)
    repeats = batch_size // D
    n_ops = len(config.op_alphabet)

    # Source schedules: interior connection layers first, then the gather row.
    sources: dict[tuple[int, int], list[int]] = {}
    for layer in range(2, L):
        for target in range(1, D + 1):
            sources[(layer, target)] = _permutation_schedule(rng, D, repeats)
    gather_schedule = _permutation_schedule(rng, D, repeats)

    # Each slot cycles ops from its own random phase.
    op_phase = {
        (1, 1, t): rng.randrange(n_ops) for t in range(1, D + 1)
    }
    for layer in range(2, L):
        for target in range(1, D + 1):
            for source in range(1, D + 1):
                op_phase[(layer, source, target)] = rng.randrange(n_ops)
    for source in range(1, D + 1):
        op_phase[(L, source, 0)] = rng.randrange(n_ops)
    op_uses = dict.fromkeys(op_phase, 0)

    children: list[ChildArchitecture] = []
    for child in range(batch_size):
        slots: list[tuple[int, int, int]] = [(1, 1, t) for t in range(1, D + 1)]
        for layer in range(2, L):
            for target in range(1, D + 1):
                slots.append((layer, sources[(layer, target)][child], target))
        slots.append((L, gather_schedule[child], 0))
        states = {}
        for slot in slots:
            states[slot] = (op_phase[slot] + op_uses[slot]) % n_ops
            op_uses[slot] += 1
        children.append(architecture_from_states(config, states))
    return BatchSample(children=tuple(children), seed=rng_seed)


def derive_seed(master_seed: int, batch_index: int) -> int:
    """Per-batch seed: first 8 bytes of sha256 over "master:index"."""
    digest = hashlib.sha256(f"{master_seed}:{batch_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class StreamSummary:
    """Totals for one emitted batch stream."""

    batches: int
    children: int
    edge_counts: dict[int, CountMatrix]


def batch_stream(
    config: SearchSpaceConfig,
    num_batches: int,
    batch_size: int,
    master_seed: int,
    sink: IO[str],
) -> StreamSummary:
    """Write one JSON line per batch to sink; returns aggregate totals.

    Each line holds ``{"batch_index": i, "seed": s, "children": [...]}`` with
    children in canonical encoded form.  Reruns with the same arguments
    produce byte-identical output.  The summary's edge_counts accumulate the
    per-batch fairness counts, so they are layer-uniform over the whole
    stream whenever each batch is fair.
    """
    totals = {
        layer: [
            [0] * _layer_shape(config, layer)[1]
            for _ in range(_layer_shape(config, layer)[0])
        ]
        for layer in range(1, config.num_layers + 1)
    }
    children_total = 0
    for index in range(num_batches):
        seed = derive_seed(master_seed, index)
        batch = sample_batch(config, batch_size, seed)
        record = {
            "batch_index": index,
            "seed": seed,
            "children": [encode(child) for child in batch.children],
        }
        sink.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        children_total += len(batch.children)
        for layer, matrix in batch.fairness_counts.items():
            for row, line in enumerate(matrix):
                for col, count in enumerate(line):
                    totals[layer][row][col] += count
    frozen = {
        layer: tuple(tuple(row) for row in grid) for layer, grid in totals.items()
    }
    return StreamSummary(
        batches=num_batches, children=children_total, edge_counts=frozen
    )


def read_batch_stream(lines: Iterable[str]) -> Iterable[dict]:
    """Parse a batch stream back into records with decoded fields intact."""
    for line in lines:
        line = line.strip()
        if line:
            yield json.loads(line)
