"""Serves penalties for architecture records over the monas-eval/1 line protocol.

The process announces ``{"protocol": "monas-eval/1"}`` on startup, then
answers one JSON request per line until stdin closes.  A reply echoes the
request id and carries either a penalty or an error string; a request
whose id cannot be read is answered with id null.  Every failure is
reported in-band and never stops the loop, so one bad request cannot
take the evaluator down.
"""
from __future__ import annotations

import json
from typing import IO

import torch
from torch.nn import functional as F

from .model import ToySupernet
from .records import ChildRecord, RecordError, parse_record, validity_problem
from .task import holdout_examples

PROTOCOL_NAME = "monas-eval/1"


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class PenaltyServer:
    """Scores children on a fixed held-out set under frozen shared weights.

    The held-out examples are drawn once per instance from a fixed seed
    and the model runs in evaluation mode, so identical requests within a
    session always produce identical penalties.
    """

    def __init__(self, model: ToySupernet):
        self._model = model.eval()
        self._images, self._targets = holdout_examples(model.base_size)

    def penalty(self, child: ChildRecord) -> float:
        """Mean regression error of one child on the held-out set."""
        problem = validity_problem(child)
        if problem is not None:
            raise RecordError(f"invalid architecture: {problem}")
        with torch.no_grad():
            output = self._model(child, self._images)
            return F.mse_loss(output, self._targets).item()


def serve(model: ToySupernet, source: IO[str], sink: IO[str]) -> int:
    """Answer requests from source on sink until EOF; returns the reply count."""
    server = PenaltyServer(model)
    sink.write(_dump({"protocol": PROTOCOL_NAME}) + "\n")
    sink.flush()
    answered = 0
    for line in source:
        line = line.strip()
        if not line:
            continue
        request_id: "int | None" = None
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise RecordError("request must be a JSON object")
            raw_id = request.get("id")
            if isinstance(raw_id, int) and not isinstance(raw_id, bool):
                request_id = raw_id
            else:
                raise RecordError(f"request id must be an integer, got {raw_id!r}")
            if "arch" not in request:
                raise RecordError("request has no arch field")
            child = parse_record(request["arch"], model.grid)
            reply = _dump({"id": request_id, "penalty": server.penalty(child)})
        except Exception as exc:  # noqa: BLE001 - failures must be reported in-band
            reply = _dump({"id": request_id, "error": str(exc) or type(exc).__name__})
        sink.write(reply + "\n")
        sink.flush()
        answered += 1
    return answered
