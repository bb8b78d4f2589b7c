"""Command-line front end: size, sample, search, validate, export-dot.

Results that land in files are written atomically (temp file in the target
directory, then rename), so a crashed run never leaves a half-written
stream, trace, or best-architecture file behind.  Reports on stdout are
key=value lines, one fact per line.
"""
from __future__ import annotations

import argparse
import contextlib
import io
import os
import sys
import tempfile
from typing import Callable, IO

from .evaluators import (
    EvaluationError,
    Evaluator,
    PlantedEvaluator,
    ProcessEvaluator,
    TableEvaluator,
)
from .sampler import (
    BatchSample,
    BatchSizeError,
    assert_fair,
    batch_stream,
    read_batch_stream,
)
from .searcher import (
    AnnealingSchedule,
    DEFAULT_ITERATIONS,
    DEFAULT_T0,
    DEFAULT_XI,
    NeighborExhaustedError,
    SearchAbortedError,
    anneal,
)
from .search_space import (
    ChildArchitecture,
    DEFAULT_OP_ALPHABET,
    DecodeError,
    SearchSpaceConfig,
    SpaceTooLargeError,
    active_scales,
    decode,
    encode,
    enumerate_valid,
    space_size_unconstrained,
    edge_count,
    validate,
)


def _atomic_write(path: str, produce: Callable[[IO[str]], None]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".monas-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            produce(handle)
        os.replace(tmp_path, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_path)
        raise


def _write_lines(path: str, text: str) -> None:
    _atomic_write(path, lambda handle: handle.write(text))


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _config_from_args(args: argparse.Namespace) -> SearchSpaceConfig:
    alphabet = tuple(name for name in args.ops.split(",") if name)
    return SearchSpaceConfig(
        num_layers=args.layers, num_scales=args.scales, op_alphabet=alphabet
    )


def _add_space_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--layers", type=int, default=10, help="node layers (default 10)")
    parser.add_argument("--scales", type=int, default=4, help="scales per layer (default 4)")
    parser.add_argument(
        "--ops",
        default=",".join(DEFAULT_OP_ALPHABET),
        help="comma-separated op alphabet (default %(default)s)",
    )


def _open_evaluator(
    stack: contextlib.ExitStack, config: SearchSpaceConfig, spec: str
) -> Evaluator:
    kind, sep, detail = spec.partition(":")
    if not sep:
        raise ValueError(
            f"evaluator spec {spec!r} must look like synthetic:<seed>, "
            "table:<path>, or exec:<command>"
        )
    if kind == "synthetic":
        try:
            seed = int(detail)
        except ValueError:
            raise ValueError(f"synthetic evaluator needs an integer seed, got {detail!r}") from None
        return PlantedEvaluator(config, seed)
    if kind == "table":
        return TableEvaluator.from_path(config, detail)
    if kind == "exec":
        return stack.enter_context(ProcessEvaluator(config, detail))
    raise ValueError(f"unknown evaluator kind {kind!r} in {spec!r}")


def _cmd_size(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    print(f"layers={config.num_layers}")
    print(f"scales={config.num_scales}")
    print(f"edge_count={edge_count(config)}")
    print(f"states_per_edge={len(config.op_alphabet) + 1}")
    print(f"space_size={space_size_unconstrained(config)}")
    if args.exact_valid:
        try:
            valid = sum(1 for _ in enumerate_valid(config))
        except SpaceTooLargeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"valid_count={valid}")
    return 0


def _verify_stream(config: SearchSpaceConfig, text: str) -> str | None:
    # Recount fairness from the emitted bytes, exactly as a consumer would.
    for record in read_batch_stream(text.splitlines()):
        children = tuple(decode(line, config) for line in record["children"])
        report = assert_fair(BatchSample(children=children, seed=record["seed"]))
        if report.violation is not None:
            return f"batch {record['batch_index']}: {report.violation}"
        if report.invalid_children:
            return (
                f"batch {record['batch_index']}: invalid children at "
                f"indices {list(report.invalid_children)}"
            )
    return None


def _cmd_sample(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    batch_size = args.batch_size if args.batch_size is not None else config.num_scales
    sink = io.StringIO()
    summary = batch_stream(config, args.batches, batch_size, args.seed, sink)
    problem = _verify_stream(config, sink.getvalue())
    if args.output == "-":
        sys.stdout.write(sink.getvalue())
    else:
        _write_lines(args.output, sink.getvalue())
        print(f"batches={summary.batches}")
        print(f"batch_size={batch_size}")
        print(f"children={summary.children}")
        print(f"fair={'true' if problem is None else 'false'}")
        print(f"output={args.output}")
    if problem is not None:
        print(f"error: {problem}", file=sys.stderr)
        return 1
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    initial: ChildArchitecture | None = None
    if args.initial is not None:
        initial = decode(_read_text(args.initial).strip(), config)
    schedule = AnnealingSchedule(
        initial_temperature=args.t0,
        decay_factor=args.xi,
        iterations=args.iterations,
    )
    trace_sink = io.StringIO() if args.trace is not None else None
    with contextlib.ExitStack() as stack:
        evaluator = _open_evaluator(stack, config, args.evaluator)
        result = anneal(
            config,
            evaluator,
            schedule,
            rng_seed=args.seed,
            initial=initial,
            trace_sink=trace_sink,
        )
    if args.trace is not None:
        _write_lines(args.trace, trace_sink.getvalue())
    if args.best is not None:
        _write_lines(args.best, encode(result.best_architecture) + "\n")
    print(f"iterations={result.iterations}")
    print(f"initial_penalty={result.initial_penalty:.9g}")
    print(f"best_penalty={result.best_penalty:.9g}")
    print(f"accepted={result.accepted}")
    print(f"improvements={result.improvements}")
    print(f"evaluations={result.evaluations}")
    print(f"cache_hits={result.cache_hits}")
    if args.trace is not None:
        print(f"trace={args.trace}")
    if args.best is not None:
        print(f"best={args.best}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    arch = decode(_read_text(args.input).strip())
    report = validate(arch.config, arch)
    print(f"valid={'true' if report.is_valid else 'false'}")
    print(f"dangling_edges={len(report.dangling_edges)}")
    print(f"dead_output={'true' if report.dead_output else 'false'}")
    print(f"active_nodes={report.active_node_count}")
    return 0 if report.is_valid else 1


def _dot_text(arch: ChildArchitecture) -> str:
    config = arch.config
    active = active_scales(config, arch)
    lines = ["digraph architecture {", "  rankdir=LR;", '  node [shape=circle, fontsize=10];']
    nodes: set[tuple[int, int]] = {(1, 1)}
    edges = list(arch.present_edges())
    for layer, source, target, _op in edges:
        nodes.add((layer, 1 if layer == 1 else source))
        if target != 0:
            nodes.add((layer + 1, target))
    for layer, scale in sorted(nodes):
        shade = ', style=filled, fillcolor="lightblue"' if scale in active[layer] else ""
        lines.append(f'  "n{layer}.{scale}" [label="{layer}/{scale}"{shade}];')
    lines.append('  "out" [label="out", shape=doublecircle];')
    for layer, source, target, op in edges:
        head = '"out"' if target == 0 else f'"n{layer + 1}.{target}"'
        tail = f'"n{layer}.{1 if layer == 1 else source}"'
        lines.append(f'  {tail} -> {head} [label="{config.op_alphabet[op]}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _cmd_export_dot(args: argparse.Namespace) -> int:
    arch = decode(_read_text(args.input).strip())
    text = _dot_text(arch)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        _write_lines(args.output, text)
        print(f"output={args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monas",
        description="Multi-path one-shot architecture search toolkit.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    size = commands.add_parser("size", help="report edge and space counts")
    _add_space_options(size)
    size.add_argument(
        "--exact-valid",
        action="store_true",
        help="also count valid architectures by brute force (small spaces only)",
    )
    size.set_defaults(handler=_cmd_size)

    sample = commands.add_parser("sample", help="write a fair child batch stream")
    _add_space_options(sample)
    sample.add_argument("--batches", type=int, default=1, help="number of batches")
    sample.add_argument(
        "--batch-size",
        type=int,
        default=None,
        help="children per batch, a multiple of --scales (default: --scales)",
    )
    sample.add_argument("--seed", type=int, required=True, help="master seed")
    sample.add_argument(
        "--output", default="-", help="stream path, or - for stdout (default -)"
    )
    sample.set_defaults(handler=_cmd_sample)

    search = commands.add_parser("search", help="anneal toward a low-penalty architecture")
    _add_space_options(search)
    search.add_argument("--seed", type=int, required=True, help="search seed")
    search.add_argument(
        "--evaluator",
        required=True,
        help="synthetic:<seed>, table:<path>, or exec:<command>",
    )
    search.add_argument("--t0", type=float, default=DEFAULT_T0, help="initial temperature")
    search.add_argument("--xi", type=float, default=DEFAULT_XI, help="temperature decay per round")
    search.add_argument(
        "--iterations", type=int, default=DEFAULT_ITERATIONS, help="annealing rounds"
    )
    search.add_argument("--initial", default=None, help="path of a starting architecture")
    search.add_argument("--trace", default=None, help="write the round-by-round CSV here")
    search.add_argument("--best", default=None, help="write the best architecture here")
    search.set_defaults(handler=_cmd_search)

    check = commands.add_parser("validate", help="check one architecture file")
    check.add_argument("--input", default="-", help="architecture path, or - for stdin")
    check.set_defaults(handler=_cmd_validate)

    export = commands.add_parser("export-dot", help="render an architecture as DOT")
    export.add_argument("--input", default="-", help="architecture path, or - for stdin")
    export.add_argument("--output", default="-", help="DOT path, or - for stdout")
    export.set_defaults(handler=_cmd_export_dot)

    return parser


def entry(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BatchSizeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        EvaluationError,
        NeighborExhaustedError,
        SearchAbortedError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(entry())
