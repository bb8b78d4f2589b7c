"""Command line front end: train a checkpoint, then serve penalties from it.

Typical round trip, starting from a batch stream sampled by the search
tooling for a 3-layer, 2-scale grid:

    toy-trainer train --layers 3 --scales 2 --stream batches.jsonl \\
        --steps 200 --checkpoint toy.pt
    monas search --layers 3 --scales 2 --seed 9 \\
        --evaluator "exec:toy-trainer serve --checkpoint toy.pt"

Exit codes: 0 on success, 1 on a domain error (unreadable stream, grid
mismatch, diverged training, bad checkpoint), 2 on usage errors.
"""
from __future__ import annotations

import argparse
import contextlib
import sys

from .records import GridSpec, RecordError
from .server import serve
from .training import (
    DEFAULT_LEARNING_RATE,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    train_on_stream,
)


def _cmd_train(args: argparse.Namespace) -> int:
    grid = GridSpec(
        layers=args.layers,
        scales=args.scales,
        op_alphabet=tuple(name for name in args.ops.split(",") if name),
    )
    with contextlib.ExitStack() as stack:
        log_sink = None
        if args.loss_log is not None:
            log_sink = stack.enter_context(
                open(args.loss_log, "w", encoding="utf-8")
            )
        result = train_on_stream(
            grid,
            args.stream,
            steps=args.steps,
            learning_rate=args.lr,
            seed=args.seed,
            channels=args.channels,
            log_sink=log_sink,
        )
    save_checkpoint(result.model, args.checkpoint)
    print(f"steps={result.steps}")
    print(f"first_loss={result.losses[0]:.9g}")
    print(f"final_loss={result.losses[-1]:.9g}")
    print(f"checkpoint={args.checkpoint}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    serve(model, sys.stdin, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toy-trainer",
        description="Train a weight-shared toy supernet and serve its penalties",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser(
        "train", help="train shared weights from a sampled batch stream"
    )
    train.add_argument("--layers", type=int, default=10, help="node layers (default 10)")
    train.add_argument(
        "--scales", type=int, default=4, help="scales per layer (default 4)"
    )
    train.add_argument(
        "--ops",
        default="HPM,identity",
        help="comma-separated op alphabet (default %(default)s)",
    )
    train.add_argument("--stream", required=True, help="batch stream file to train on")
    train.add_argument(
        "--steps",
        type=int,
        default=None,
        help="optimizer steps (default: one per stream line)",
    )
    train.add_argument(
        "--lr", type=float, default=DEFAULT_LEARNING_RATE, help="Adam learning rate"
    )
    train.add_argument("--seed", type=int, default=0, help="initialization seed")
    train.add_argument(
        "--channels", type=int, default=8, help="feature channels (default 8)"
    )
    train.add_argument("--checkpoint", required=True, help="checkpoint file to write")
    train.add_argument(
        "--loss-log", default=None, help="write step,loss lines to this file"
    )
    train.set_defaults(handler=_cmd_train)

    serve_cmd = commands.add_parser(
        "serve", help="answer evaluation requests for a trained checkpoint"
    )
    serve_cmd.add_argument(
        "--checkpoint", required=True, help="checkpoint file to serve"
    )
    serve_cmd.set_defaults(handler=_cmd_serve)
    return parser


def entry(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (RecordError, TrainingDivergedError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
