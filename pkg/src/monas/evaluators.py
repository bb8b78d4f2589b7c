"""Penalty evaluators: synthetic, table-backed, subprocess-backed, memoized.

An evaluator maps a valid architecture to a finite penalty >= 0 where lower
is better.  All evaluators here judge the pruned canonical form, so edges
that cannot influence the output never change a penalty.
"""
from __future__ import annotations

import json
import math
import os
import select
import shlex
import subprocess
from typing import IO, Iterable, Protocol, runtime_checkable

from .protocol import PROTOCOL_NAME, hello_line, request_line
from .search_space import (
    ChildArchitecture,
    SearchSpaceConfig,
    canonical_encoding,
    edge_count,
    edge_slots,
    prune,
    random_valid,
)


class EvaluationError(RuntimeError):
    """The evaluator could not produce a usable penalty."""


@runtime_checkable
class Evaluator(Protocol):
    def evaluate(self, arch: ChildArchitecture) -> float: ...


def _check_penalty(value: object, origin: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise EvaluationError(f"{origin}: penalty must be a number, got {value!r}")
    penalty = float(value)
    if not math.isfinite(penalty) or penalty < 0:
        raise EvaluationError(f"{origin}: penalty must be finite and >= 0, got {penalty}")
    return penalty


class PlantedEvaluator:
    """Distance to a hidden target architecture drawn from the same space.

    The penalty is the number of edge slots where the pruned candidate and
    the hidden target disagree (absent vs present, or present with different
    ops), divided by the total slot count.  Penalty 0 therefore identifies
    the target's canonical form exactly.
    """

    def __init__(self, config: SearchSpaceConfig, hidden_seed: int):
        self._config = config
        self._slots = edge_slots(config)
        self._scale = edge_count(config)
        self._target = random_valid(config, hidden_seed)

    @property
    def target(self) -> ChildArchitecture:
        return self._target

    def evaluate(self, arch: ChildArchitecture) -> float:
        pruned = prune(self._config, arch)
        differing = sum(
            1
            for slot in self._slots
            if pruned.state_of(*slot) != self._target.state_of(*slot)
        )
        return differing / self._scale


class TableEvaluator:
    """Penalties looked up from lines of "<canonical encoding>\\t<penalty>"."""

    def __init__(self, config: SearchSpaceConfig, lines: Iterable[str]):
        self._config = config
        self._table: dict[str, float] = {}
        for number, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, raw = line.partition("\t")
            if not sep:
                raise EvaluationError(f"table line {number}: missing tab separator")
            try:
                value = float(raw)
            except ValueError:
                raise EvaluationError(
                    f"table line {number}: unparseable penalty {raw!r}"
                ) from None
            self._table[key] = _check_penalty(value, f"table line {number}")

    @classmethod
    def from_path(cls, config: SearchSpaceConfig, path: str) -> "TableEvaluator":
        with open(path, encoding="utf-8") as handle:
            return cls(config, handle)

    def __len__(self) -> int:
        return len(self._table)

    def evaluate(self, arch: ChildArchitecture) -> float:
        key = canonical_encoding(self._config, arch)
        try:
            return self._table[key]
        except KeyError:
            raise EvaluationError(f"unevaluated architecture: {key}") from None


class ProcessEvaluator:
    """Penalties served by a child process speaking the line protocol.

    The child receives one JSON request per line on stdin and must reply
    with id-matched JSON on stdout, after announcing itself with a protocol
    line.  Its stderr is inherited so diagnostics stay visible and cannot
    stall either side.  Use as a context manager, or call close().
    """

    def __init__(
        self,
        config: SearchSpaceConfig,
        command: "str | list[str]",
        *,
        timeout: float = 30.0,
    ):
        self._config = config
        self._timeout = timeout
        self._next_id = 0
        self._buffer = bytearray()
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,
        )
        try:
            hello = self._read_record("handshake")
            if hello.get("protocol") != PROTOCOL_NAME:
                raise EvaluationError(
                    f"handshake: expected protocol {PROTOCOL_NAME!r}, got {hello!r}"
                )
        except BaseException:
            self.close()
            raise

    def _read_record(self, origin: str) -> dict:
        line = self._read_line(origin)
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EvaluationError(f"{origin}: unparseable line {line!r}: {exc}") from exc
        if not isinstance(record, dict):
            raise EvaluationError(f"{origin}: expected a JSON object, got {line!r}")
        return record

    def _read_line(self, origin: str) -> str:
        # Nonblocking fd reads with a deadline; buffered remainder is kept
        # for the next call.
        deadline = os.times().elapsed + self._timeout
        fd = self._proc.stdout.fileno()
        while True:
            newline = self._buffer.find(b"\n")
            if newline >= 0:
                line = bytes(self._buffer[:newline])
                del self._buffer[: newline + 1]
                return line.decode("utf-8", errors="replace")
            remaining = deadline - os.times().elapsed
            if remaining <= 0:
                raise EvaluationError(f"{origin}: no reply within {self._timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                try:
                    code = self._proc.wait(timeout=0.5)
                    detail = f"exit status {code}"
                except subprocess.TimeoutExpired:
                    detail = "process still running"
                raise EvaluationError(f"{origin}: evaluator closed stdout ({detail})")
            self._buffer.extend(chunk)

    def evaluate(self, arch: ChildArchitecture) -> float:
        if self._proc.poll() is not None:
            raise EvaluationError(
                f"evaluator exited with status {self._proc.returncode}"
            )
        self._next_id += 1
        request_id = self._next_id
        try:
            self._proc.stdin.write(request_line(request_id, arch).encode() + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EvaluationError(f"request {request_id}: evaluator pipe closed: {exc}") from exc
        origin = f"request {request_id}"
        record = self._read_record(origin)
        if record.get("id") != request_id:
            raise EvaluationError(
                f"{origin}: reply carries id {record.get('id')!r}"
            )
        if "error" in record:
            raise EvaluationError(f"{origin}: evaluator error: {record['error']}")
        if "penalty" not in record:
            raise EvaluationError(f"{origin}: reply has neither penalty nor error")
        return _check_penalty(record["penalty"], origin)

    def close(self) -> None:
        proc = self._proc
        if proc.stdin and not proc.stdin.closed:
            try:
                proc.stdin.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=0.5)
        except subprocess.TimeoutExpired:
            proc.terminate()
            try:
                proc.wait(timeout=0.5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        if proc.stdout and not proc.stdout.closed:
            proc.stdout.close()

    def __enter__(self) -> "ProcessEvaluator":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class MemoizingEvaluator:
    """Caches penalties by pruned canonical encoding; failures are retried."""

    def __init__(self, config: SearchSpaceConfig, inner: Evaluator):
        self._config = config
        self._inner = inner
        self._cache: dict[str, float] = {}
        self.hits = 0
        self.misses = 0

    def evaluate(self, arch: ChildArchitecture) -> float:
        key = canonical_encoding(self._config, arch)
        cached = self._cache.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        value = self._inner.evaluate(arch)
        self._cache[key] = value
        self.misses += 1
        return value
