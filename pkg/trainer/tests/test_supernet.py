"""Shared-weight supernet: parameter store, masking, and node arithmetic."""
from __future__ import annotations

import pytest
import torch

from toy_trainer import Edge, GridSpec, ToySupernet, parse_record

from recordkit import chain_record, edge, record

GRID = GridSpec(3, 2)
CHANNELS = 4
BASE = 16


@pytest.fixture
def model():
    torch.manual_seed(7)
    return ToySupernet(GRID, channels=CHANNELS, base_size=BASE)


def chain(scale: int = 1, op: str = "HPM"):
    return parse_record(chain_record(3, 2, scale=scale, op=op), GRID)


def examples(count: int = 2):
    generator = torch.Generator().manual_seed(11)
    return torch.rand((count, 1, BASE, BASE), generator=generator)


class TestParameterStore:
    def test_parameter_count_matches_the_grid(self, model):
        conv3x3 = 9 * CHANNELS * CHANNELS + CHANNELS
        block = 2 * conv3x3
        stem = 9 * CHANNELS + CHANNELS
        head = 2 * CHANNELS + 2
        slots = len(list(GRID.edge_slots()))
        expected = stem + head + slots * block
        assert sum(p.numel() for p in model.parameters()) == expected

    def test_count_is_independent_of_the_child(self, model):
        before = sum(p.numel() for p in model.parameters())
        keys = set(model.state_dict())
        with torch.no_grad():
            model(chain(1), examples())
            model(chain(2, op="identity"), examples())
        assert sum(p.numel() for p in model.parameters()) == before
        assert set(model.state_dict()) == keys

    def test_identity_edges_own_no_parameters(self, model):
        free = model.edge_transform(Edge(2, 1, 2, "identity"))
        priced = model.edge_transform(Edge(2, 1, 2, "HPM"))
        assert sum(p.numel() for p in free.parameters()) == 0
        assert sum(p.numel() for p in priced.parameters()) > 0

    def test_every_slot_has_every_op(self, model):
        for slot in GRID.edge_slots():
            for op in GRID.op_alphabet:
                assert model.edge_transform(Edge(*slot, op)) is not None

    def test_too_many_scales_for_the_resolution(self):
        with pytest.raises(ValueError, match="cannot be halved"):
            ToySupernet(GridSpec(3, 6), channels=2, base_size=16)


class TestForward:
    def test_output_regresses_a_position_map(self, model):
        output = model(chain(1), examples(3))
        assert output.shape == (3, 2, BASE, BASE)
        assert torch.isfinite(output).all()

    def test_scales_halve_the_resolution(self, model):
        features = model.node_features(chain(2), examples())
        assert features[(1, 1)].shape[-2:] == (BASE, BASE)
        assert features[(2, 2)].shape[-2:] == (BASE // 2, BASE // 2)
        assert features[(3, 2)].shape[-2:] == (BASE // 2, BASE // 2)

    def test_node_feature_is_the_sum_of_incoming_edges(self, model):
        rec = record(
            3,
            2,
            [
                edge(1, 1, 1, "HPM"),
                edge(1, 1, 2, "identity"),
                edge(2, 1, 1, "HPM"),
                edge(2, 2, 1, "identity"),
                edge(3, 1, 0, "HPM"),
            ],
        )
        child = parse_record(rec, GRID)
        images = examples()
        with torch.no_grad():
            features = model.node_features(child, images)
            stem_out = model.stem(images)
            upper = model.edge_transform(Edge(2, 1, 1, "HPM"))(
                model.edge_transform(Edge(1, 1, 1, "HPM"))(stem_out)
            )
            lower = model.edge_transform(Edge(2, 2, 1, "identity"))(
                model.edge_transform(Edge(1, 1, 2, "identity"))(stem_out)
            )
        assert torch.equal(features[(3, 1)], upper + lower)

    def test_grid_mismatch_is_rejected(self, model):
        stranger = parse_record(chain_record(4, 2))
        with pytest.raises(ValueError, match="grid mismatch"):
            model(stranger, examples())

    def test_dangling_edge_is_rejected(self, model):
        rec = record(3, 2, [edge(2, 2, 1), edge(3, 1, 0)])
        with pytest.raises(ValueError, match="never fed"):
            model(parse_record(rec, GRID), examples())

    def test_unfed_head_is_rejected(self, model):
        rec = record(3, 2, [edge(1, 1, 1), edge(2, 1, 1)])
        with pytest.raises(ValueError, match="output head"):
            model(parse_record(rec, GRID), examples())


class TestForwardMasking:
    def test_absent_edge_parameters_cannot_change_the_output(self, model):
        model.eval()
        child = chain(1)
        images = examples()
        with torch.no_grad():
            before = model(child, images)
            for absent in (Edge(1, 1, 2, "HPM"), Edge(2, 2, 2, "HPM"),
                           Edge(2, 1, 2, "HPM"), Edge(3, 2, 0, "HPM")):
                for parameter in model.edge_transform(absent).parameters():
                    parameter.add_(torch.ones_like(parameter))
            after = model(child, images)
        assert torch.equal(before, after)

    def test_present_edge_parameters_do_change_the_output(self, model):
        model.eval()
        child = chain(1)
        images = examples()
        with torch.no_grad():
            before = model(child, images)
            for parameter in model.edge_transform(Edge(2, 1, 1, "HPM")).parameters():
                parameter.add_(torch.ones_like(parameter))
            after = model(child, images)
        assert not torch.equal(before, after)

    def test_unused_op_on_a_present_slot_is_still_masked(self, model):
        model.eval()
        child = chain(1, op="identity")
        images = examples()
        with torch.no_grad():
            before = model(child, images)
            for slot in GRID.edge_slots():
                for parameter in model.edge_transform(Edge(*slot, "HPM")).parameters():
                    parameter.add_(torch.ones_like(parameter))
            after = model(child, images)
        assert torch.equal(before, after)
