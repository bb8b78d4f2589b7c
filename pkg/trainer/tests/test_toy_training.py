"""Batch training semantics: accumulation, locality, logging, checkpoints."""
from __future__ import annotations

import io
import math

import pytest
import torch
from torch.nn import functional as F

from toy_trainer import (
    Edge,
    GridSpec,
    PenaltyServer,
    RecordError,
    ToySupernet,
    TrainingDivergedError,
    load_checkpoint,
    make_examples,
    parse_record,
    save_checkpoint,
    train_on_stream,
)

from recordkit import chain_record, write_stream

GRID = GridSpec(3, 2)
CHANNELS = 4
BASE = 16

CHAIN_A = chain_record(3, 2, scale=1)
CHAIN_B = chain_record(3, 2, scale=2)


def small_model(seed: int = 7) -> ToySupernet:
    torch.manual_seed(seed)
    return ToySupernet(GRID, channels=CHANNELS, base_size=BASE)


@pytest.fixture
def stream(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [[CHAIN_A, CHAIN_B], [CHAIN_B, CHAIN_A], [CHAIN_A, CHAIN_B]])
    return path


class TestGradientFlow:
    def test_per_child_accumulation_matches_the_summed_loss(self):
        first = small_model(3)
        second = small_model(3)
        children = [parse_record(CHAIN_A, GRID), parse_record(CHAIN_B, GRID)]
        generator = torch.Generator().manual_seed(17)
        images, targets = make_examples(4, generator, BASE)

        for child in children:
            F.mse_loss(first(child, images), targets).backward()
        summed = sum(F.mse_loss(second(child, images), targets) for child in children)
        summed.backward()

        names = dict(second.named_parameters())
        for name, parameter in first.named_parameters():
            twin = names[name]
            if parameter.grad is None:
                assert twin.grad is None
            else:
                assert torch.allclose(
                    parameter.grad, twin.grad, rtol=1e-5, atol=1e-8
                ), name

    def test_edges_absent_from_the_whole_batch_get_no_gradient(self, stream):
        model = small_model()
        result = train_on_stream(GRID, stream, steps=1, model=model)
        used = {
            Edge(**raw)
            for rec in (CHAIN_A, CHAIN_B)
            for raw in rec["edges"]
        }
        touched, untouched = 0, 0
        for slot in GRID.edge_slots():
            for op in GRID.op_alphabet:
                edge = Edge(*slot, op)
                transform = result.model.edge_transform(edge)
                for parameter in transform.parameters():
                    if edge in used:
                        assert parameter.grad is not None
                        touched += 1
                    else:
                        assert parameter.grad is None
                        untouched += 1
        assert touched and untouched

    def test_stem_and_head_always_learn(self, stream):
        result = train_on_stream(GRID, stream, steps=1, model=small_model())
        assert result.model.stem.weight.grad is not None
        assert result.model.head.weight.grad is not None
        assert result.model.stem.weight.grad.abs().sum() > 0


class TestTrainingLoop:
    def test_one_optimizer_step_per_batch_line(self, stream):
        model = small_model()
        forwards = 0

        def count(module, args, output):
            nonlocal forwards
            forwards += 1

        handle = model.register_forward_hook(count)
        try:
            result = train_on_stream(GRID, stream, steps=5, model=model)
        finally:
            handle.remove()
        assert result.steps == len(result.losses) == 5
        assert forwards == 5 * 2

    def test_steps_default_to_one_pass_over_the_stream(self, stream):
        result = train_on_stream(GRID, stream, model=small_model())
        assert result.steps == 3

    def test_losses_are_finite_and_logged(self, stream):
        sink = io.StringIO()
        result = train_on_stream(
            GRID, stream, steps=4, model=small_model(), log_sink=sink
        )
        lines = sink.getvalue().splitlines()
        assert len(lines) == 4
        for step, (line, loss) in enumerate(zip(lines, result.losses)):
            index, logged = line.split(",")
            assert int(index) == step
            assert math.isfinite(loss)
            assert float(logged) == pytest.approx(loss, rel=1e-8)

    def test_identical_seeds_reproduce_the_loss_curve(self, stream):
        first = train_on_stream(GRID, stream, steps=4, seed=5, channels=CHANNELS)
        second = train_on_stream(GRID, stream, steps=4, seed=5, channels=CHANNELS)
        assert first.losses == second.losses

    def test_training_moves_the_parameters(self, stream):
        model = small_model()
        frozen = {k: v.clone() for k, v in model.state_dict().items()}
        train_on_stream(GRID, stream, steps=2, model=model)
        changed = any(
            not torch.equal(frozen[name], tensor)
            for name, tensor in model.state_dict().items()
        )
        assert changed


class TestTrainingErrors:
    def test_stream_for_another_grid_is_rejected(self, tmp_path):
        path = tmp_path / "stream.jsonl"
        write_stream(path, [[chain_record(4, 2)]])
        with pytest.raises(RecordError, match="grid mismatch"):
            train_on_stream(GRID, path, steps=1)

    def test_empty_stream_is_rejected(self, tmp_path):
        path = tmp_path / "stream.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(RecordError, match="holds no batches"):
            train_on_stream(GRID, path)

    def test_nonpositive_steps_are_rejected(self, stream):
        with pytest.raises(ValueError, match="steps must be at least 1"):
            train_on_stream(GRID, stream, steps=0)

    def test_divergence_aborts_with_diagnostics(self, stream):
        model = small_model()
        with torch.no_grad():
            model.stem.weight.fill_(float("inf"))
        with pytest.raises(TrainingDivergedError, match="at step 0"):
            train_on_stream(GRID, stream, steps=3, model=model)


class TestCheckpoints:
    def test_round_trip_preserves_weights_and_grid(self, tmp_path, stream):
        result = train_on_stream(
            GRID, stream, steps=2, model=small_model(), seed=9
        )
        path = tmp_path / "toy.pt"
        save_checkpoint(result.model, path)
        loaded = load_checkpoint(path)
        assert loaded.grid == GRID
        assert loaded.channels == CHANNELS
        assert loaded.base_size == BASE
        for name, tensor in result.model.state_dict().items():
            assert torch.equal(tensor, loaded.state_dict()[name]), name

    def test_loaded_model_serves_the_same_penalty(self, tmp_path, stream):
        result = train_on_stream(GRID, stream, steps=2, model=small_model())
        path = tmp_path / "toy.pt"
        save_checkpoint(result.model, path)
        child = parse_record(CHAIN_A, GRID)
        original = PenaltyServer(result.model).penalty(child)
        reloaded = PenaltyServer(load_checkpoint(path)).penalty(child)
        assert original == reloaded

    def test_foreign_files_are_rejected(self, tmp_path):
        path = tmp_path / "other.pt"
        torch.save({"format": "other/9"}, path)
        with pytest.raises(ValueError, match="toy-trainer/1"):
            load_checkpoint(path)
