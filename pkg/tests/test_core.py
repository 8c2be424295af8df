import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcshare.core import (
    ChannelSet,
    ConfigurationError,
    ModelViolationError,
    TrafficModel,
    resolve_slot,
    sample_arrivals,
    sample_backoff,
    sample_packet_size,
)


class TestChannelSet:
    def test_fully_available(self):
        cs = ChannelSet.fully_available(5)
        assert cs.total_channels == 5
        assert cs.available == (1, 2, 3, 4, 5)
        assert cs.num_available == 5

    def test_subset(self):
        cs = ChannelSet(total_channels=10, available=(2, 5, 9))
        assert cs.num_available == 3

    def test_empty_available_allowed(self):
        cs = ChannelSet(total_channels=3, available=())
        assert cs.num_available == 0

    @pytest.mark.parametrize("available", [(3, 2), (1, 1), (0, 1), (1, 11)])
    def test_bad_available(self, available):
        with pytest.raises(ConfigurationError):
            ChannelSet(total_channels=10, available=available)

    def test_zero_channels(self):
        with pytest.raises(ConfigurationError):
            ChannelSet(total_channels=0, available=())


class TestTrafficModel:
    def test_defaults(self):
        t = TrafficModel(mean_arrival_interval=50.0)
        assert t.mean_packet_size == 50.0
        assert t.sensing_window == 1

    def test_fractional_durations_round_up(self):
        t = TrafficModel(mean_arrival_interval=10, packet_size_min=2.3,
                         packet_size_max=4.1, sensing_slots=1.5)
        assert (t.packet_size_min, t.packet_size_max, t.sensing_slots) == (3, 5, 2)

    def test_transition_adds_to_window(self):
        t = TrafficModel(mean_arrival_interval=10, sensing_slots=2, transition_slots=3)
        assert t.sensing_window == 5

    @pytest.mark.parametrize("kwargs", [
        {"mean_arrival_interval": 0},
        {"mean_arrival_interval": 10, "packet_size_min": 5, "packet_size_max": 4},
        {"mean_arrival_interval": 10, "packet_size_min": 0, "packet_size_max": 4},
        {"mean_arrival_interval": 10, "backoff_mean": 0.5},
        {"mean_arrival_interval": 10, "sensing_slots": 0},
        {"mean_arrival_interval": 10, "defer_policy": "never"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrafficModel(**kwargs)


class TestResolveSlot:
    def test_singleton_vs_collision(self):
        out = resolve_slot({1: {"A"}, 2: {"B", "C"}}, slot_index=3)
        assert out.successes == frozenset({("A", 1)})
        assert out.collided_channels == frozenset({2})

    def test_empty_slot(self):
        out = resolve_slot({})
        assert out.successes == frozenset()

    def test_all_singletons(self):
        out = resolve_slot({1: {"A"}, 2: {"B"}, 3: {"C"}})
        assert len(out.successes) == 3

    def test_duplicate_su_rejected(self):
        with pytest.raises(ModelViolationError):
            resolve_slot({1: {"A"}, 2: {"A"}})

    @given(st.dictionaries(
        st.integers(min_value=1, max_value=8),
        st.sets(st.integers(min_value=1, max_value=30), max_size=4),
        max_size=8,
    ))
    @settings(max_examples=200, deadline=None)
    def test_conservation(self, raw):
        # keep each SU on at most one channel
        seen = set()
        transmissions = {}
        for ch, ids in raw.items():
            keep = {i for i in ids if i not in seen}
            seen |= keep
            transmissions[ch] = keep
        out = resolve_slot(transmissions)
        assert len(out.successes) <= len(transmissions)
        assert len(out.successes) <= len(seen)
        for su, ch in out.successes:
            assert transmissions[ch] == {su}


class TestSampleArrivals:
    def test_mean_gap(self):
        rng = np.random.default_rng(123)
        arrivals = sample_arrivals(rng, 50.0, 1_000_000)
        gaps = np.diff(arrivals)
        assert abs(np.mean(gaps) - 50.0) / 50.0 < 0.01

    def test_rate_to_zero_limit(self):
        rng = np.random.default_rng(5)
        arrivals = sample_arrivals(rng, 1e9, 100)
        assert len(arrivals) <= 1

    def test_deterministic(self):
        a = sample_arrivals(np.random.default_rng(99), 7.5, 10_000)
        b = sample_arrivals(np.random.default_rng(99), 7.5, 10_000)
        assert a == b

    def test_sorted_within_horizon(self):
        arrivals = sample_arrivals(np.random.default_rng(1), 3.0, 5000)
        assert arrivals == sorted(arrivals)
        assert all(0 <= t < 5000 for t in arrivals)

    def test_invalid_interval(self):
        with pytest.raises(ConfigurationError):
            sample_arrivals(np.random.default_rng(0), 0.0, 100)


class TestSamplePacketSize:
    def test_fixed_size(self):
        rng = np.random.default_rng(0)
        assert all(sample_packet_size(rng, 50, 50) == 50 for _ in range(100))

    def test_uniform_mean(self):
        rng = np.random.default_rng(7)
        samples = [sample_packet_size(rng, 30, 70) for _ in range(1_000_000)]
        assert abs(np.mean(samples) - 50.0) < 0.5
        assert min(samples) == 30 and max(samples) == 70

    def test_degenerate(self):
        assert sample_packet_size(np.random.default_rng(0), 1, 1) == 1

    def test_invalid_range(self):
        with pytest.raises(ConfigurationError):
            sample_packet_size(np.random.default_rng(0), 10, 5)


class TestSampleBackoff:
    def test_mean(self):
        rng = np.random.default_rng(11)
        samples = [sample_backoff(rng, 10.0) for _ in range(1_000_000)]
        assert abs(np.mean(samples) - 10.0) / 10.0 < 0.02

    def test_mean_one_is_always_one(self):
        rng = np.random.default_rng(0)
        assert all(sample_backoff(rng, 1.0) == 1 for _ in range(100))

    def test_support_starts_at_one(self):
        rng = np.random.default_rng(3)
        assert min(sample_backoff(rng, 2.0) for _ in range(10_000)) == 1

    def test_deterministic(self):
        a = [sample_backoff(np.random.default_rng(42), 10.0) for _ in range(50)]
        b = [sample_backoff(np.random.default_rng(42), 10.0) for _ in range(50)]
        assert a == b

    def test_invalid_mean(self):
        with pytest.raises(ConfigurationError):
            sample_backoff(np.random.default_rng(0), 0.9)
