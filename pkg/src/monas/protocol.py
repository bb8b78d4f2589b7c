"""Line protocol between a search process and an external evaluator.

The evaluator is a child process.  On startup it prints one announcement
line, then answers one request per line until stdin closes:

    child -> parent   {"protocol": "monas-eval/1"}
    parent -> child   {"id": 1, "arch": {...architecture record...}}
    child -> parent   {"id": 1, "penalty": 0.25}
    child -> parent   {"id": 2, "error": "description"}     (on failure)

Every message is a single-line JSON object, flushed immediately.  Replies
carry the request's id; a request the child cannot attribute is answered
with "id": null.  Errors are per-request: the child stays alive and keeps
serving after reporting one.
"""
from __future__ import annotations

import json
from typing import IO

from .search_space import (
    ChildArchitecture,
    DecodeError,
    SearchSpaceConfig,
    arch_to_record,
    record_to_arch,
)

PROTOCOL_NAME = "monas-eval/1"


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def hello_line() -> str:
    return _dump({"protocol": PROTOCOL_NAME})


def request_line(request_id: int, arch: ChildArchitecture) -> str:
    return _dump({"id": request_id, "arch": arch_to_record(arch)})


def penalty_line(request_id: "int | None", penalty: float) -> str:
    return _dump({"id": request_id, "penalty": penalty})


def error_line(request_id: "int | None", message: str) -> str:
    return _dump({"id": request_id, "error": message})


def serve(
    evaluator,
    source: IO[str],
    sink: IO[str],
    config: SearchSpaceConfig | None = None,
) -> int:
    """Answer requests from source on sink until EOF; returns the reply count.

    Malformed lines and evaluator failures become error replies, never
    crashes, so one bad request cannot take the evaluator down.  When a
    config is given, incoming records must match its dimensions.
    """
    sink.write(hello_line() + "\n")
    sink.flush()
    answered = 0
    for line in source:
        line = line.strip()
        if not line:
            continue
        request_id: "int | None" = None
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise DecodeError("request must be a JSON object")
            raw_id = record.get("id")
            if isinstance(raw_id, int) and not isinstance(raw_id, bool):
                request_id = raw_id
            else:
                raise DecodeError(f"request id must be an integer, got {raw_id!r}")
            if "arch" not in record:
                raise DecodeError("request has no arch field")
            arch = record_to_arch(record["arch"], config)
            penalty = float(evaluator.evaluate(arch))
            reply = penalty_line(request_id, penalty)
        except Exception as exc:  # noqa: BLE001 - every failure must be reported in-band
            reply = error_line(request_id, str(exc) or type(exc).__name__)
        sink.write(reply + "\n")
        sink.flush()
        answered += 1
    return answered
