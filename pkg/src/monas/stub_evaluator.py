"""Reference evaluator process: serves planted-target penalties over stdio.

Run as ``python3 -m monas.stub_evaluator --layers 3 --scales 2 --seed 7``.
Useful as an exec-evaluator for searches and as the conformance target for
protocol tests.
"""
from __future__ import annotations

import argparse
import sys

from .evaluators import PlantedEvaluator
from .protocol import serve
from .search_space import DEFAULT_OP_ALPHABET, SearchSpaceConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monas-stub-evaluator",
        description="Serve penalties against a hidden seeded target architecture.",
    )
    parser.add_argument("--layers", type=int, default=3, help="node layers in the grid")
    parser.add_argument("--scales", type=int, default=2, help="scales per layer")
    parser.add_argument(
        "--ops",
        default=",".join(DEFAULT_OP_ALPHABET),
        help="comma-separated op alphabet",
    )
    parser.add_argument(
        "--seed", type=int, required=True, help="seed of the hidden target"
    )
    return parser


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    config = SearchSpaceConfig(
        num_layers=args.layers,
        num_scales=args.scales,
        op_alphabet=tuple(name for name in args.ops.split(",") if name),
    )
    evaluator = PlantedEvaluator(config, args.seed)
    serve(evaluator, sys.stdin, sys.stdout, config)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
