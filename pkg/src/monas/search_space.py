"""Multi-path supernet grid: architecture encoding, validity, and enumeration.

The grid has a single stem node in layer 1 (scale 1), ``num_scales`` nodes in
each of layers 2..L, and an output head that gathers layer L.  Candidate edges
live in "connection layers": connection layer 1 fans the stem out to layer 2
(1 x D slots), connection layers 2..L-1 join consecutive full layers (D x D
slots each), and the gather edges feed layer-L nodes into the head (D slots).
That makes (L-2) * D^2 + 2 * D edge slots in total, each of which is either
absent or present with one operation from the config's alphabet.

Architectures serialize to a canonical single-line JSON record::

    {"edges": [{"layer": 1, "from_scale": 1, "to_scale": 1, "op": "HPM"}, ...],
     "layers": 3, "op_alphabet": ["HPM", "identity"], "scales": 2}

with edges sorted by (layer, to_scale, from_scale) and gather edges written as
``layer = L, to_scale = 0``.  Two equal architectures always encode to
byte-identical text.  See docs/architecture.schema.json for the full schema.
"""
from __future__ import annotations

import functools
import json
import random
from dataclasses import dataclass
from typing import Iterator, Mapping

# Edge state: None = absent, int = index into the config's op alphabet.
EdgeState = int | None

EdgeSlot = tuple[int, int, int]  # (connection layer, from_scale, to_scale)

DEFAULT_OP_ALPHABET = ("HPM", "identity")


class ShapeMismatchError(ValueError):
    """Architecture containers do not match the search-space dimensions."""


class DecodeError(ValueError):
    """Architecture text is malformed; the message names the offending field."""


class SpaceTooLargeError(ValueError):
    """Enumeration refused because the space exceeds the caller's limit."""

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"search space holds {size} assignments, above the enumeration limit {limit}"
        )
        self.size = size
        self.limit = limit


class InvalidArchitectureError(ValueError):
    """An operation that requires a valid architecture received an invalid one."""

    def __init__(self, message: str, report: "ValidityReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Grid dimensions and the per-edge operation alphabet."""

    num_layers: int = 10
    num_scales: int = 4
    op_alphabet: tuple[str, ...] = DEFAULT_OP_ALPHABET

    def __post_init__(self):
        object.__setattr__(self, "op_alphabet", tuple(self.op_alphabet))
        if self.num_layers < 2:
            raise ValueError(f"num_layers must be >= 2, got {self.num_layers}")
        if self.num_scales < 1:
            raise ValueError(f"num_scales must be >= 1, got {self.num_scales}")
        if not self.op_alphabet:
            raise ValueError("op_alphabet must not be empty")
        if len(set(self.op_alphabet)) != len(self.op_alphabet):
            raise ValueError(f"op_alphabet has duplicate names: {self.op_alphabet}")

    def op_index(self, name: str) -> int:
        try:
            return self.op_alphabet.index(name)
        except ValueError:
            raise KeyError(name) from None


@dataclass(frozen=True)
class NodeId:
    """A grid node; layer 1 holds only the scale-1 stem."""

    layer: int
    scale: int

    def __post_init__(self):
        if self.layer == 1 and self.scale != 1:
            raise ValueError("layer 1 holds only the stem at scale 1")


def grid_nodes(config: SearchSpaceConfig) -> Iterator[NodeId]:
    """All grid nodes in (layer, scale) order, stem first."""
    yield NodeId(1, 1)
    for layer in range(2, config.num_layers + 1):
        for scale in range(1, config.num_scales + 1):
            yield NodeId(layer, scale)


@functools.lru_cache(maxsize=None)
def edge_slots(config: SearchSpaceConfig) -> "tuple[EdgeSlot, ...]":
    """Every edge slot of the grid, sorted by (layer, to_scale, from_scale).

    Gather slots are reported as (L, from_scale, 0); to_scale 0 is the head.
    """
    L, D = config.num_layers, config.num_scales
    slots: list[tuple[int, int, int]] = [(1, 1, t) for t in range(1, D + 1)]
    for layer in range(2, L):
        for t in range(1, D + 1):
            for s in range(1, D + 1):
                slots.append((layer, s, t))
    slots.extend((L, s, 0) for s in range(1, D + 1))
    return tuple(slots)


def edge_count(config: SearchSpaceConfig) -> int:
    """Number of edge slots: (L-2) * D^2 + 2 * D."""
    L, D = config.num_layers, config.num_scales
    return (L - 2) * D * D + 2 * D


def space_size_unconstrained(config: SearchSpaceConfig) -> int:
    """Exact count of all edge-state assignments, valid or not.

    Each slot takes one of ``len(op_alphabet) + 1`` states, so the size is
    that base raised to edge_count(config); Python ints keep it exact.
    """
    return (len(config.op_alphabet) + 1) ** edge_count(config)


@dataclass(frozen=True)
class ChildArchitecture:
    """One concrete sub-network of the supernet grid.

    ``inter_edges[l-1][s-1][t-1]`` is the state of the edge from scale s in
    layer l to scale t in layer l+1 (connection layer 1 has a single source
    row, the stem).  ``gather[s-1]`` is the state of the edge from the layer-L
    node at scale s into the output head.  States are op indices or None.
    """

    config: SearchSpaceConfig
    inter_edges: tuple
    gather: tuple

    def __post_init__(self):
        L, D = self.config.num_layers, self.config.num_scales
        n_ops = len(self.config.op_alphabet)
        if len(self.inter_edges) != L - 1:
            raise ShapeMismatchError(
                f"expected {L - 1} connection layers, got {len(self.inter_edges)}"
            )
        for i, matrix in enumerate(self.inter_edges):
            rows = 1 if i == 0 else D
            if len(matrix) != rows or any(len(row) != D for row in matrix):
                raise ShapeMismatchError(
                    f"connection layer {i + 1} must be {rows}x{D}"
                )
            for row in matrix:
                for op in row:
                    if op is not None and not 0 <= op < n_ops:
                        raise ShapeMismatchError(
                            f"connection layer {i + 1} has op index {op}, "
                            f"alphabet size {n_ops}"
                        )
        if len(self.gather) != D:
            raise ShapeMismatchError(f"gather must have {D} entries, got {len(self.gather)}")
        for op in self.gather:
            if op is not None and not 0 <= op < n_ops:
                raise ShapeMismatchError(
                    f"gather has op index {op}, alphabet size {n_ops}"
                )

    def state_of(self, layer: int, from_scale: int, to_scale: int):
        """State of one edge slot; gather slots use to_scale 0."""
        if layer == self.config.num_layers:
            if to_scale != 0:
                raise ShapeMismatchError(f"layer {layer} holds gather slots only")
            return self.gather[from_scale - 1]
        return self.inter_edges[layer - 1][from_scale - 1][to_scale - 1]

    def present_edges(self) -> Iterator[tuple[int, int, int, int]]:
        """Present edges as (layer, from_scale, to_scale, op_index), canonical order."""
        L, D = self.config.num_layers, self.config.num_scales
        for t, op in enumerate(self.inter_edges[0][0], start=1):
            if op is not None:
                yield 1, 1, t, op
        for layer in range(2, L):
            matrix = self.inter_edges[layer - 1]
            for t in range(1, D + 1):
                for s in range(1, D + 1):
                    op = matrix[s - 1][t - 1]
                    if op is not None:
                        yield layer, s, t, op
        for s, op in enumerate(self.gather, start=1):
            if op is not None:
                yield L, s, 0, op

    def edge_total(self) -> int:
        return sum(1 for _ in self.present_edges())


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the activity check; dangling edges use canonical slot triples."""

    is_valid: bool
    dangling_edges: tuple
    dead_output: bool
    active_node_count: int


def architecture_from_states(
    config: SearchSpaceConfig, states: Mapping
) -> ChildArchitecture:
    """Build an architecture from a slot -> state mapping; missing slots are absent."""
    L, D = config.num_layers, config.num_scales
    inter = []
    for layer in range(1, L):
        rows = 1 if layer == 1 else D
        inter.append(
            tuple(
                tuple(states.get((layer, s, t)) for t in range(1, D + 1))
                for s in range(1, rows + 1)
            )
        )
    gather = tuple(states.get((L, s, 0)) for s in range(1, D + 1))
    return ChildArchitecture(config, tuple(inter), gather)


def full_architecture(config: SearchSpaceConfig, op: int = 0) -> ChildArchitecture:
    """Architecture with every slot present, all carrying the same op."""
    return architecture_from_states(config, {slot: op for slot in edge_slots(config)})


def active_scales(config: SearchSpaceConfig, arch: ChildArchitecture) -> tuple:
    """Per-layer frozensets of active scales, indexed [layer]; index 0 unused.

    The stem is active; a node is active iff some present incoming edge
    originates from an active node of the previous layer.
    """
    L, D = config.num_layers, config.num_scales
    layers: list[frozenset[int]] = [frozenset(), frozenset({1})]
    for layer in range(1, L):
        prev = layers[layer]
        matrix = arch.inter_edges[layer - 1]
        sources = {1} if layer == 1 else prev
        reached = {
            t
            for t in range(1, D + 1)
            for s in sources
            if matrix[s - 1 if layer > 1 else 0][t - 1] is not None
        }
        layers.append(frozenset(reached))
    return tuple(layers)


def validate(config: SearchSpaceConfig, arch: ChildArchitecture) -> ValidityReport:
    """Check that every present edge leaves an active node and the head is fed."""
    if arch.config != config:
        raise ShapeMismatchError("architecture was built for a different search space")
    L = config.num_layers
    active = active_scales(config, arch)
    dangling = []
    head_fed = False
    for layer, s, t, _op in arch.present_edges():
        source_active = s in active[layer] if layer > 1 else True
        if not source_active:
            dangling.append((layer, s, t))
        elif layer == L:
            head_fed = True
    count = sum(len(active[layer]) for layer in range(1, L + 1))
    return ValidityReport(
        is_valid=not dangling and head_fed,
        dangling_edges=tuple(dangling),
        dead_output=not head_fed,
        active_node_count=count,
    )


def _coactive_scales(config: SearchSpaceConfig, arch: ChildArchitecture) -> tuple:
    # Backward sweep: scales that still reach the output head through present edges.
    L, D = config.num_layers, config.num_scales
    layers = [frozenset()] * (L + 1)
    layers[L] = frozenset(s for s in range(1, D + 1) if arch.gather[s - 1] is not None)
    for layer in range(L - 1, 1, -1):
        matrix = arch.inter_edges[layer - 1]
        layers[layer] = frozenset(
            s
            for s in range(1, D + 1)
            if any(matrix[s - 1][t - 1] is not None for t in layers[layer + 1])
        )
    return tuple(layers)


def prune(config: SearchSpaceConfig, arch: ChildArchitecture) -> ChildArchitecture:
    """Drop every edge that lies on no stem-to-output path.

    The result is the canonical effective subgraph: idempotent, still valid,
    and with exactly the same stem-to-output paths as the input.
    """
    report = validate(config, arch)
    if not report.is_valid:
        raise InvalidArchitectureError("cannot prune an invalid architecture", report)
    L = config.num_layers
    forward = active_scales(config, arch)
    backward = _coactive_scales(config, arch)
    kept = {}
    for layer, s, t, op in arch.present_edges():
        if layer == L:
            if s in forward[L]:
                kept[(layer, s, t)] = op
        elif (layer == 1 or s in forward[layer]) and t in backward[layer + 1]:
            kept[(layer, s, t)] = op
    return architecture_from_states(config, kept)


def arch_to_record(arch: ChildArchitecture) -> dict:
    """Architecture as a plain JSON-ready record (the documented schema)."""
    config = arch.config
    return {
        "layers": config.num_layers,
        "scales": config.num_scales,
        "op_alphabet": list(config.op_alphabet),
        "edges": [
            {
                "layer": layer,
                "from_scale": s,
                "to_scale": t,
                "op": config.op_alphabet[op],
            }
            for layer, s, t, op in sorted(
                arch.present_edges(), key=lambda e: (e[0], e[2], e[1])
            )
        ],
    }


def encode(arch: ChildArchitecture) -> str:
    """Canonical single-line text form; equal architectures encode identically."""
    return json.dumps(arch_to_record(arch), sort_keys=True, separators=(",", ":"))


def _expect(record: Mapping, name: str, kind: type, where: str):
    if name not in record:
        raise DecodeError(f"{where}: missing field '{name}'")
    value = record[name]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise DecodeError(f"{where}.{name}: expected {kind.__name__}, got {value!r}")
    return value


def record_to_arch(
    record: Mapping, config: SearchSpaceConfig | None = None
) -> ChildArchitecture:
    """Build an architecture from a parsed record, verifying every field."""
    if not isinstance(record, Mapping):
        raise DecodeError(f"top level: expected an object, got {type(record).__name__}")
    layers = _expect(record, "layers", int, "top level")
    scales = _expect(record, "scales", int, "top level")
    alphabet = _expect(record, "op_alphabet", list, "top level")
    if not all(isinstance(name, str) for name in alphabet):
        raise DecodeError("top level.op_alphabet: entries must be strings")
    if config is None:
        try:
            config = SearchSpaceConfig(layers, scales, tuple(alphabet))
        except ValueError as exc:
            raise DecodeError(f"top level: {exc}") from exc
    else:
        if (layers, scales) != (config.num_layers, config.num_scales):
            raise DecodeError(
                f"top level: dimensions {layers}x{scales} do not match the "
                f"expected {config.num_layers}x{config.num_scales}"
            )
        if tuple(alphabet) != config.op_alphabet:
            raise DecodeError(
                f"top level.op_alphabet: {alphabet} does not match {list(config.op_alphabet)}"
            )
    L, D = config.num_layers, config.num_scales
    states: dict[tuple[int, int, int], int] = {}
    raw_edges = _expect(record, "edges", list, "top level")
    for i, edge in enumerate(raw_edges):
        where = f"edges[{i}]"
        if not isinstance(edge, Mapping):
            raise DecodeError(f"{where}: expected an object")
        layer = _expect(edge, "layer", int, where)
        s = _expect(edge, "from_scale", int, where)
        t = _expect(edge, "to_scale", int, where)
        op_name = _expect(edge, "op", str, where)
        if not 1 <= layer <= L:
            raise DecodeError(f"{where}.layer: {layer} outside [1, {L}]")
        if layer == L:
            if t != 0:
                raise DecodeError(f"{where}.to_scale: gather edges must target 0, got {t}")
        elif not 1 <= t <= D:
            raise DecodeError(f"{where}.to_scale: {t} outside [1, {D}]")
        if layer == 1:
            if s != 1:
                raise DecodeError(f"{where}.from_scale: layer 1 has the stem only, got {s}")
        elif not 1 <= s <= D:
            raise DecodeError(f"{where}.from_scale: {s} outside [1, {D}]")
        try:
            op = config.op_index(op_name)
        except KeyError:
            raise DecodeError(f"{where}.op: unknown operation '{op_name}'") from None
        if (layer, s, t) in states:
            raise DecodeError(f"{where}: duplicate edge ({layer},{s},{t})")
        states[(layer, s, t)] = op
    return architecture_from_states(config, states)


def decode(text: str, config: SearchSpaceConfig | None = None) -> ChildArchitecture:
    """Parse canonical architecture text; inverse of encode."""
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"malformed text: {exc}") from exc
    return record_to_arch(record, config)


def canonical_encoding(config: SearchSpaceConfig, arch: ChildArchitecture) -> str:
    """Identity key for memoization and equality: encode after prune."""
    return encode(prune(config, arch))


def enumerate_all(
    config: SearchSpaceConfig, limit: int = 10**6
) -> Iterator[ChildArchitecture]:
    """Yield every edge-state assignment exactly once, validity not filtered.

    Refuses up front (naming the exact size) when the space exceeds ``limit``.
    """
    size = space_size_unconstrained(config)
    if size > limit:
        raise SpaceTooLargeError(size, limit)
    L, D = config.num_layers, config.num_scales
    n_ops = len(config.op_alphabet)
    total_slots = edge_count(config)
    # Counter positions follow canonical slot order, which lists interior
    # slots target-major; container rows are source-major, hence the stride.
    states = (None, *range(n_ops))

    def generate() -> Iterator[ChildArchitecture]:
        # Mixed-radix counter over slot states: 0 = absent, k = op index k - 1.
        counter = [0] * total_slots
        while True:
            inter = [tuple([tuple(states[v] for v in counter[:D])])]
            for layer in range(2, L):
                base = D + (layer - 2) * D * D
                inter.append(
                    tuple(
                        tuple(states[v] for v in counter[base + s : base + D * D : D])
                        for s in range(D)
                    )
                )
            gather = tuple(states[v] for v in counter[total_slots - D :])
            yield ChildArchitecture(config, tuple(inter), gather)
            i = total_slots - 1
            while i >= 0 and counter[i] == n_ops:
                counter[i] = 0
                i -= 1
            if i < 0:
                return
            counter[i] += 1

    return generate()


def enumerate_valid(
    config: SearchSpaceConfig, limit: int = 10**6
) -> Iterator[ChildArchitecture]:
    """Yield exactly the assignments that pass validate()."""
    stream = enumerate_all(config, limit)
    return (arch for arch in stream if validate(config, arch).is_valid)


def random_valid(config: SearchSpaceConfig, rng_seed: int) -> ChildArchitecture:
    """Draw a valid architecture, deterministically for a fixed seed.

    Every node in layers 2..L receives exactly one present incoming edge with
    uniformly random source and op; each gather edge is present with
    probability 1/2 (one forced present if none came up); the result is pruned.
    """
    rng = random.Random(rng_seed)
    L, D = config.num_layers, config.num_scales
    n_ops = len(config.op_alphabet)
    states: dict[tuple[int, int, int], int] = {}
    for layer in range(2, L + 1):
        for t in range(1, D + 1):
            source = 1 if layer == 2 else rng.randrange(1, D + 1)
            states[(layer - 1, source, t)] = rng.randrange(n_ops)
    present = [rng.random() < 0.5 for _ in range(D)]
    if not any(present):
        present[rng.randrange(D)] = True
    for s in range(1, D + 1):
        if present[s - 1]:
            states[(L, s, 0)] = rng.randrange(n_ops)
    return prune(config, architecture_from_states(config, states))
