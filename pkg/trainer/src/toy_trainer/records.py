"""Architecture records and batch streams, as written by the search tooling.

The trainer talks to the search side only through files and pipes: a batch
stream is one JSON line per batch whose children are encoded architecture
records, and an evaluation request carries one record.  This module parses
and validates those records against the grid the trainer was built for.

A record describes one sub-network of a layered grid with ``layers`` node
layers and ``scales`` nodes per layer (layer 1 holds a single stem node at
scale 1).  Connection layer ``l`` runs between node layers ``l`` and
``l + 1``; edges with ``to_scale`` 0 feed the output head and may only
appear in the last connection layer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

HEAD = 0

_RECORD_KEYS = {"layers", "scales", "op_alphabet", "edges"}
_EDGE_KEYS = {"layer", "from_scale", "to_scale", "op"}


class RecordError(ValueError):
    """Raised when an architecture record or stream line cannot be used."""


@dataclass(frozen=True)
class GridSpec:
    """Dimensions of the grid a record must match."""

    layers: int
    scales: int
    op_alphabet: tuple[str, ...] = ("HPM", "identity")

    def __post_init__(self) -> None:
        if self.layers < 2:
            raise ValueError(f"layers must be at least 2, got {self.layers}")
        if self.scales < 1:
            raise ValueError(f"scales must be at least 1, got {self.scales}")
        if not self.op_alphabet:
            raise ValueError("op_alphabet must not be empty")
        if len(set(self.op_alphabet)) != len(self.op_alphabet):
            raise ValueError("op_alphabet holds a duplicate name")

    def edge_slots(self) -> Iterator[tuple[int, int, int]]:
        """Every (layer, from_scale, to_scale) connection the grid offers."""
        for target in range(1, self.scales + 1):
            yield 1, 1, target
        for layer in range(2, self.layers):
            for source in range(1, self.scales + 1):
                for target in range(1, self.scales + 1):
                    yield layer, source, target
        for source in range(1, self.scales + 1):
            yield self.layers, source, HEAD

    def describe(self) -> str:
        ops = ",".join(self.op_alphabet)
        return f"{self.layers} layers x {self.scales} scales, ops [{ops}]"


class Edge(NamedTuple):
    layer: int
    from_scale: int
    to_scale: int
    op: str


@dataclass(frozen=True)
class ChildRecord:
    """One parsed architecture: a grid plus its present edges."""

    grid: GridSpec
    edges: tuple[Edge, ...]


def _strict_int(value: object, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise RecordError(f"{what} must be an integer, got {value!r}")
    return value


def _parse_grid(record: dict) -> GridSpec:
    layers = _strict_int(record["layers"], "record field layers")
    scales = _strict_int(record["scales"], "record field scales")
    alphabet = record["op_alphabet"]
    if not isinstance(alphabet, list) or not all(
        isinstance(name, str) and name for name in alphabet
    ):
        raise RecordError("record field op_alphabet must be a list of names")
    try:
        return GridSpec(layers, scales, tuple(alphabet))
    except ValueError as exc:
        raise RecordError(str(exc)) from None


def _parse_edge(entry: object, grid: GridSpec, position: int) -> Edge:
    if not isinstance(entry, dict) or set(entry) != _EDGE_KEYS:
        raise RecordError(
            f"edge {position} must be an object with exactly the keys "
            f"layer, from_scale, to_scale, op"
        )
    layer = _strict_int(entry["layer"], f"edge {position} layer")
    source = _strict_int(entry["from_scale"], f"edge {position} from_scale")
    target = _strict_int(entry["to_scale"], f"edge {position} to_scale")
    op = entry["op"]
    if not 1 <= layer <= grid.layers:
        raise RecordError(f"edge {position} layer {layer} is outside 1..{grid.layers}")
    if layer == 1 and source != 1:
        raise RecordError(
            f"edge {position} leaves the stem layer from scale {source}; "
            f"only scale 1 exists there"
        )
    if not 1 <= source <= grid.scales:
        raise RecordError(
            f"edge {position} from_scale {source} is outside 1..{grid.scales}"
        )
    if layer == grid.layers:
        if target != HEAD:
            raise RecordError(
                f"edge {position} in the last connection layer must feed the "
                f"output head (to_scale 0), got to_scale {target}"
            )
    elif not 1 <= target <= grid.scales:
        raise RecordError(
            f"edge {position} to_scale {target} is outside 1..{grid.scales}"
        )
    if not isinstance(op, str) or op not in grid.op_alphabet:
        raise RecordError(f"edge {position} op {op!r} is not in the op alphabet")
    return Edge(layer, source, target, op)


def parse_record(record: "str | dict", grid: GridSpec | None = None) -> ChildRecord:
    """Parse one architecture record, optionally pinning the expected grid.

    Accepts either the decoded JSON object or its string encoding (batch
    streams carry children as encoded strings).  Raises RecordError on any
    structural problem, and on a grid mismatch when ``grid`` is given.
    """
    if isinstance(record, str):
        try:
            record = json.loads(record)
        except json.JSONDecodeError as exc:
            raise RecordError(f"record is not valid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise RecordError(f"record must be a JSON object, got {type(record).__name__}")
    if set(record) != _RECORD_KEYS:
        raise RecordError(
            "record must have exactly the keys layers, scales, op_alphabet, edges"
        )
    found = _parse_grid(record)
    if grid is not None and found != grid:
        raise RecordError(
            f"grid mismatch: record is for {found.describe()}, "
            f"expected {grid.describe()}"
        )
    raw_edges = record["edges"]
    if not isinstance(raw_edges, list):
        raise RecordError("record field edges must be a list")
    edges = []
    taken: set[tuple[int, int, int]] = set()
    for position, entry in enumerate(raw_edges):
        edge = _parse_edge(entry, found, position)
        slot = (edge.layer, edge.from_scale, edge.to_scale)
        if slot in taken:
            raise RecordError(
                f"edge {position} repeats the slot layer {edge.layer}, "
                f"scale {edge.from_scale} -> {edge.to_scale}"
            )
        taken.add(slot)
        edges.append(edge)
    return ChildRecord(grid=found, edges=tuple(edges))


def validity_problem(child: ChildRecord) -> "str | None":
    """Why the child cannot be run, or None when it is usable.

    A usable child chains every present edge back to the stem and feeds
    the output head: an edge whose source node receives nothing is
    dangling, and a head nothing reaches has no output to regress.
    """
    active = {(1, 1)}
    for edge in sorted(child.edges):
        if (edge.layer, edge.from_scale) not in active:
            return (
                f"dangling edge at layer {edge.layer}: source scale "
                f"{edge.from_scale} is never fed"
            )
        if edge.to_scale != HEAD:
            active.add((edge.layer + 1, edge.to_scale))
    if not any(edge.to_scale == HEAD for edge in child.edges):
        return "no edge feeds the output head"
    return None


@dataclass(frozen=True)
class StreamBatch:
    """One decoded batch stream line."""

    index: int
    seed: int
    children: tuple[ChildRecord, ...]


def parse_stream_line(line: str, grid: GridSpec | None = None) -> StreamBatch:
    """Decode one ``{"batch_index", "seed", "children"}`` stream line."""
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"stream line is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise RecordError("stream line must be a JSON object")
    index = _strict_int(payload.get("batch_index"), "stream field batch_index")
    seed = _strict_int(payload.get("seed"), "stream field seed")
    children = payload.get("children")
    if not isinstance(children, list) or not children:
        raise RecordError("stream field children must be a non-empty list")
    return StreamBatch(
        index=index,
        seed=seed,
        children=tuple(parse_record(child, grid) for child in children),
    )


def load_stream(path: "str | Path", grid: GridSpec | None = None) -> tuple[StreamBatch, ...]:
    """Read a whole batch stream file, validating every child against grid."""
    batches = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                batches.append(parse_stream_line(line, grid))
    return tuple(batches)
