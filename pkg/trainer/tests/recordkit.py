"""Builders shared by the trainer tests: records, chains, stream files."""
from __future__ import annotations

import json

OPS = ("HPM", "identity")


def edge(layer: int, from_scale: int, to_scale: int, op: str = "HPM") -> dict:
    return {"layer": layer, "from_scale": from_scale, "to_scale": to_scale, "op": op}


def record(layers: int, scales: int, edges: list, ops=OPS) -> dict:
    return {
        "layers": layers,
        "scales": scales,
        "op_alphabet": list(ops),
        "edges": edges,
    }


def chain_record(
    layers: int, scales: int, scale: int = 1, op: str = "HPM", ops=OPS
) -> dict:
    """A single path stem -> scale -> ... -> scale -> head."""
    edges = [edge(1, 1, scale, op)]
    for layer in range(2, layers):
        edges.append(edge(layer, scale, scale, op))
    edges.append(edge(layers, scale, 0, op))
    return record(layers, scales, edges, ops)


def encode(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def stream_line(index: int, seed: int, records: list) -> str:
    return json.dumps(
        {"batch_index": index, "seed": seed, "children": [encode(r) for r in records]}
    )


def write_stream(path, batches: list, seed: int = 1) -> None:
    """One line per batch; each batch is a list of record dicts."""
    lines = [stream_line(i, seed + i, recs) for i, recs in enumerate(batches)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
