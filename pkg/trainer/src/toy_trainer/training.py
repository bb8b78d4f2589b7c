"""Training loop over sampled child batches.

One stream line holds one batch of children.  Every child in the batch
runs forward and backward on the same minibatch of toy examples, the
per-child gradients accumulate in the shared parameter store, and the
optimizer then takes exactly one step.  Parameters of edges absent from
the whole batch receive no gradient that step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import torch
from torch.nn import functional as F

from .model import ToySupernet
from .records import GridSpec, RecordError, load_stream
from .task import make_examples

DEFAULT_LEARNING_RATE = 0.001
DEFAULT_EXAMPLES_PER_STEP = 4
CHECKPOINT_FORMAT = "toy-trainer/1"


class TrainingDivergedError(RuntimeError):
    """Raised when a step produces a loss that is not a finite number."""


@dataclass(frozen=True)
class TrainingResult:
    """A trained model plus the per-step loss curve."""

    model: ToySupernet
    losses: tuple[float, ...]

    @property
    def steps(self) -> int:
        return len(self.losses)


def train_on_stream(
    grid: GridSpec,
    stream_path: "str | Path",
    steps: "int | None" = None,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    *,
    seed: int = 0,
    channels: int = 8,
    examples_per_step: int = DEFAULT_EXAMPLES_PER_STEP,
    model: "ToySupernet | None" = None,
    log_sink: "IO[str] | None" = None,
) -> TrainingResult:
    """Adam-train shared weights, one optimizer step per consumed batch line.

    ``steps`` defaults to one pass over the stream; a larger value replays
    the stream from the start.  Each logged value is the mean of that
    step's per-child losses, written to ``log_sink`` as ``step,loss``
    lines when a sink is given.  Pass ``model`` to continue training an
    existing supernet instead of initializing a fresh one from ``seed``.

    Raises RecordError when the stream was sampled for a different grid
    and TrainingDivergedError the moment a loss stops being finite.
    """
    batches = load_stream(stream_path, grid)
    if not batches:
        raise RecordError(f"stream {stream_path} holds no batches")
    if steps is None:
        steps = len(batches)
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    torch.manual_seed(seed)
    if model is None:
        model = ToySupernet(grid, channels)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate)
    examples = torch.Generator().manual_seed(seed)
    losses = []
    for step in range(steps):
        batch = batches[step % len(batches)]
        images, targets = make_examples(examples_per_step, examples, model.base_size)
        optimizer.zero_grad(set_to_none=True)
        total = 0.0
        for child in batch.children:
            loss = F.mse_loss(model(child, images), targets)
            loss.backward()
            total += loss.item()
        mean_loss = total / len(batch.children)
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(
                f"loss became {mean_loss} at step {step} (batch {batch.index}, "
                f"{len(batch.children)} children, learning rate {learning_rate})"
            )
        optimizer.step()
        losses.append(mean_loss)
        if log_sink is not None:
            log_sink.write(f"{step},{mean_loss:.9g}\n")
    return TrainingResult(model=model, losses=tuple(losses))


def save_checkpoint(model: ToySupernet, path: "str | Path") -> None:
    """Write the model and its grid to a versioned checkpoint file."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "layers": model.grid.layers,
        "scales": model.grid.scales,
        "op_alphabet": list(model.grid.op_alphabet),
        "channels": model.channels,
        "base_size": model.base_size,
        "state": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path: "str | Path") -> ToySupernet:
    """Rebuild a supernet from a checkpoint written by save_checkpoint."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} checkpoint: {path}")
    grid = GridSpec(
        payload["layers"], payload["scales"], tuple(payload["op_alphabet"])
    )
    model = ToySupernet(grid, payload["channels"], payload["base_size"])
    model.load_state_dict(payload["state"])
    return model
