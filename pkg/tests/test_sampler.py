from __future__ import annotations

import hashlib
import io
import json
from collections import Counter

import pytest

from monas.sampler import (
    BatchSample,
    BatchSizeError,
    assert_fair,
    batch_stream,
    derive_seed,
    present_counts,
    read_batch_stream,
    sample_batch,
)
from monas.search_space import (
    SearchSpaceConfig,
    architecture_from_states,
    decode,
    edge_slots,
    encode,
    validate,
)

GRID = SearchSpaceConfig(num_layers=6, num_scales=4)


def slot_usage(config, children) -> Counter:
    counts: Counter = Counter()
    for child in children:
        for layer, s, t, _op in child.present_edges():
            counts[(layer, s, t)] += 1
    return counts


def chain_child(config):
    # One path straight through scale 1, the minimal valid architecture.
    states = {(1, 1, 1): 0, (config.num_layers, 1, 0): 0}
    for layer in range(2, config.num_layers):
        states[(layer, 1, 1)] = 0
    return architecture_from_states(config, states)


class TestSampleBatch:
    def test_children_are_all_valid(self):
        for seed in (0, 1, 99):
            for child in sample_batch(GRID, 8, seed).children:
                assert validate(GRID, child).is_valid

    def test_batch_size_must_be_positive(self):
        for bad in (0, -4):
            with pytest.raises(BatchSizeError, match="positive"):
                sample_batch(GRID, bad, 0)

    def test_indivisible_batch_size_is_unsatisfiable(self):
        for bad in (3, 5, 7):
            with pytest.raises(BatchSizeError, match="unsatisfiable fairness"):
                sample_batch(GRID, bad, 0)
        sample_batch(GRID, 4, 0)
        sample_batch(GRID, 12, 0)

    def test_every_node_has_exactly_one_incoming_edge(self):
        for child in sample_batch(GRID, 4, 5).children:
            incoming: Counter = Counter()
            gathers = 0
            for layer, _s, t, _op in child.present_edges():
                if t == 0:
                    gathers += 1
                else:
                    incoming[(layer + 1, t)] += 1
            assert gathers == 1
            for layer in range(2, 7):
                for scale in range(1, 5):
                    assert incoming[(layer, scale)] == 1

    def test_interior_slots_used_equally(self):
        for seed in range(30):
            counts = slot_usage(GRID, sample_batch(GRID, 8, seed).children)
            for layer in range(2, 6):
                for s in range(1, 5):
                    for t in range(1, 5):
                        assert counts[(layer, s, t)] == 2

    def test_stem_and_gather_slot_usage(self):
        counts = slot_usage(GRID, sample_batch(GRID, 8, 3).children)
        for t in range(1, 5):
            assert counts[(1, 1, t)] == 8
        for s in range(1, 5):
            assert counts[(6, s, 0)] == 2

    def test_op_counts_per_slot_differ_by_at_most_one(self):
        config = SearchSpaceConfig(4, 2, ("a", "b", "c"))
        per_slot_ops: dict = {slot: Counter() for slot in edge_slots(config)}
        for child in sample_batch(config, 10, 11).children:
            for layer, s, t, op in child.present_edges():
                per_slot_ops[(layer, s, t)][op] += 1
        for slot, ops in per_slot_ops.items():
            used = sum(ops.values())
            if used == 0:
                continue
            spread = [ops[i] for i in range(3)]
            assert max(spread) - min(spread) <= 1, (slot, spread)

    def test_deterministic_per_seed(self):
        first = [encode(c) for c in sample_batch(GRID, 4, 77).children]
        second = [encode(c) for c in sample_batch(GRID, 4, 77).children]
        other = [encode(c) for c in sample_batch(GRID, 4, 78).children]
        assert first == second
        assert first != other

    def test_single_scale_grid(self):
        config = SearchSpaceConfig(3, 1)
        batch = sample_batch(config, 3, 0)
        assert len(batch.children) == 3
        for child in batch.children:
            assert validate(config, child).is_valid

    def test_source_choice_is_uniform_across_seeds(self):
        # Which source feeds node (3, 1) in the first child varies by seed;
        # over many fresh seeds each source should appear half the time.
        config = SearchSpaceConfig(3, 2)
        picks: Counter = Counter()
        for index in range(10_000):
            batch = sample_batch(config, 2, derive_seed(424242, index))
            for layer, s, t, _op in batch.children[0].present_edges():
                if layer == 2 and t == 1:
                    picks[s] += 1
        assert picks[1] + picks[2] == 10_000
        # Three standard deviations of Binomial(10000, 1/2) around 5000.
        assert abs(picks[1] - 5_000) <= 150


class TestBatchSample:
    def test_counts_match_independent_recount(self):
        batch = sample_batch(GRID, 8, 21)
        usage = slot_usage(GRID, batch.children)
        for layer, matrix in batch.fairness_counts.items():
            for row, line in enumerate(matrix):
                for col, count in enumerate(line):
                    source = row + 1
                    target = 0 if layer == GRID.num_layers else col + 1
                    assert count == usage[(layer, source, target)]

    def test_counts_follow_arbitrary_children(self):
        config = SearchSpaceConfig(4, 2)
        batch = BatchSample(children=(chain_child(config),) * 3, seed=5)
        assert batch.fairness_counts[1] == ((3, 0),)
        assert batch.fairness_counts[2] == ((3, 0), (0, 0))
        assert batch.fairness_counts[4] == ((3,), (0,))

    def test_records_seed_and_config(self):
        batch = sample_batch(GRID, 4, 33)
        assert batch.seed == 33
        assert batch.config == GRID

    def test_rejects_empty_batch(self):
        with pytest.raises(ValueError, match="at least one"):
            BatchSample(children=(), seed=0)

    def test_rejects_mixed_configs(self):
        a = chain_child(SearchSpaceConfig(4, 2))
        b = chain_child(SearchSpaceConfig(5, 2))
        with pytest.raises(ValueError, match="config"):
            BatchSample(children=(a, b), seed=0)


class TestAssertFair:
    def test_sampled_batches_pass(self):
        for seed in range(10):
            report = assert_fair(sample_batch(GRID, 8, seed))
            assert report.ok
            assert report.fair
            assert report.violation is None
            assert report.invalid_children == ()

    def test_flipped_edge_named_with_its_layer(self):
        batch = sample_batch(GRID, 4, 2)
        first = batch.children[0]
        states = {
            (layer, s, t): op for layer, s, t, op in first.present_edges()
        }
        dropped = next(slot for slot in states if slot[0] == 2)
        del states[dropped]
        mutated = architecture_from_states(GRID, states)
        report = assert_fair(
            BatchSample(children=(mutated,) + batch.children[1:], seed=batch.seed)
        )
        assert not report.fair
        assert "layer 2" in report.violation
        assert not report.ok

    def test_invalid_children_reported_by_index(self):
        batch = sample_batch(GRID, 4, 2)
        first = batch.children[0]
        states = {
            (layer, s, t): op for layer, s, t, op in first.present_edges()
        }
        dropped = next(slot for slot in states if slot[0] == 2)
        del states[dropped]
        mutated = architecture_from_states(GRID, states)
        report = assert_fair(
            BatchSample(children=batch.children[:2] + (mutated,), seed=0)
        )
        assert report.invalid_children == (2,)

    def test_identical_chains_violate_fairness_for_two_scales(self):
        # Uniformity is about equal per-slot counts inside a layer, which K
        # copies of one chain cannot deliver once a layer has several slots.
        config = SearchSpaceConfig(4, 2)
        report = assert_fair(
            BatchSample(children=(chain_child(config),) * 4, seed=0)
        )
        assert not report.fair
        assert "layer 1" in report.violation
        assert report.invalid_children == ()

    def test_identical_chains_are_fair_with_one_scale(self):
        config = SearchSpaceConfig(4, 1)
        report = assert_fair(
            BatchSample(children=(chain_child(config),) * 4, seed=0)
        )
        assert report.ok


class TestSeedDerivation:
    def test_frozen_values(self):
        assert derive_seed(42, 0) == 6085284259181818738
        assert derive_seed(42, 1) == 278651779053087998
        assert derive_seed(7, 3) == 1232913860685451959

    def test_matches_direct_hash(self):
        for master, index in [(0, 0), (123, 45), (2**40, 9)]:
            digest = hashlib.sha256(f"{master}:{index}".encode()).digest()
            assert derive_seed(master, index) == int.from_bytes(digest[:8], "big")

    def test_distinct_across_indices(self):
        seeds = {derive_seed(5, i) for i in range(1000)}
        assert len(seeds) == 1000


class TestBatchStream:
    def test_line_shape_and_child_decoding(self):
        sink = io.StringIO()
        summary = batch_stream(GRID, 3, 4, 42, sink)
        assert summary.batches == 3
        assert summary.children == 12
        lines = sink.getvalue().splitlines()
        assert len(lines) == 3
        for index, line in enumerate(lines):
            record = json.loads(line)
            assert set(record) == {"batch_index", "seed", "children"}
            assert record["batch_index"] == index
            assert record["seed"] == derive_seed(42, index)
            assert len(record["children"]) == 4
            for text in record["children"]:
                child = decode(text, GRID)
                assert validate(GRID, child).is_valid

    def test_children_match_direct_sampling(self):
        sink = io.StringIO()
        batch_stream(GRID, 2, 4, 9, sink)
        records = list(read_batch_stream(io.StringIO(sink.getvalue())))
        for record in records:
            expected = [
                encode(c) for c in sample_batch(GRID, 4, record["seed"]).children
            ]
            assert record["children"] == expected

    def test_aggregate_counts_are_layer_uniform(self):
        sink = io.StringIO()
        summary = batch_stream(GRID, 10, 8, 7, sink)
        for layer, matrix in summary.edge_counts.items():
            flat = [count for line in matrix for count in line]
            assert len(set(flat)) == 1, (layer, matrix)
        assert summary.edge_counts[2][0][0] == 20
        assert summary.edge_counts[1][0][0] == 80
        assert summary.edge_counts[6][0][0] == 20

    def test_aggregate_counts_match_stream_recount(self):
        sink = io.StringIO()
        summary = batch_stream(GRID, 4, 8, 55, sink)
        children = [
            decode(text, GRID)
            for record in read_batch_stream(sink.getvalue().splitlines())
            for text in record["children"]
        ]
        assert summary.edge_counts == present_counts(GRID, children)

    def test_zero_batches_produce_empty_stream_and_zero_counts(self):
        sink = io.StringIO()
        summary = batch_stream(GRID, 0, 4, 1, sink)
        assert sink.getvalue() == ""
        assert summary.batches == 0
        assert summary.children == 0
        for matrix in summary.edge_counts.values():
            assert all(count == 0 for line in matrix for count in line)

    def test_byte_identical_reruns(self):
        first, second = io.StringIO(), io.StringIO()
        batch_stream(GRID, 5, 8, 1234, first)
        batch_stream(GRID, 5, 8, 1234, second)
        assert first.getvalue() == second.getvalue()

    def test_master_seed_changes_stream(self):
        first, second = io.StringIO(), io.StringIO()
        batch_stream(GRID, 2, 4, 1, first)
        batch_stream(GRID, 2, 4, 2, second)
        assert first.getvalue() != second.getvalue()
