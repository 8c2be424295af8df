"""Core domain types and stochastic primitives for the slotted multichannel model.

Time is measured in integer slots throughout.  Channels are numbered from 1.
Every random operation takes an explicit numpy Generator so that trajectories
are reproducible and replications can own independent streams.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Set

import numpy as np


class ConfigurationError(ValueError):
    """Invalid parameter or inconsistent scenario configuration."""


class ModelViolationError(RuntimeError):
    """An operation was asked to do something the channel model forbids."""


class TractabilityError(RuntimeError):
    """An exact computation would exceed its size guard."""


@dataclass(frozen=True)
class ChannelSet:
    """The channel universe: ``total_channels`` in the band, of which the
    ordered subset ``available`` is free of primary users and open to
    opportunistic access."""

    total_channels: int
    available: tuple[int, ...]

    def __post_init__(self):
        if self.total_channels < 1:
            raise ConfigurationError("total_channels must be positive")
        object.__setattr__(self, "available", tuple(int(c) for c in self.available))
        prev = 0
        for c in self.available:
            if c <= prev:
                raise ConfigurationError(
                    "available channels must be strictly increasing without duplicates"
                )
            prev = c
        if self.available and (self.available[0] < 1 or self.available[-1] > self.total_channels):
            raise ConfigurationError("available channels must lie in 1..total_channels")

    @classmethod
    def fully_available(cls, n: int) -> "ChannelSet":
        """A band of ``n`` channels, all open to secondary access."""
        return cls(total_channels=n, available=tuple(range(1, n + 1)))

    @property
    def num_available(self) -> int:
        return len(self.available)


@dataclass(frozen=True)
class TrafficModel:
    """Traffic and timing parameters, all in slots.

    Arrivals are Poisson with mean inter-arrival ``mean_arrival_interval``.
    Packet sizes are integer uniform on [packet_size_min, packet_size_max].
    Backoffs are geometric on {1, 2, ...} with the given mean.  A transmitter
    senses for ``sensing_slots`` (plus ``transition_slots`` of radio turnaround,
    folded into the sensing window) before every access attempt.  Fractional
    durations in configs are rounded up to whole slots.
    """

    mean_arrival_interval: float
    packet_size_min: int = 50
    packet_size_max: int = 50
    backoff_mean: float = 10.0
    sensing_slots: int = 1
    transition_slots: int = 0
    defer_policy: str = "one_slot"

    def __post_init__(self):
        for name in ("packet_size_min", "packet_size_max", "sensing_slots", "transition_slots"):
            value = getattr(self, name)
            object.__setattr__(self, name, int(math.ceil(value)))
        if self.mean_arrival_interval <= 0:
            raise ConfigurationError("mean_arrival_interval must be positive")
        if self.packet_size_min < 1 or self.packet_size_min > self.packet_size_max:
            raise ConfigurationError("need 1 <= packet_size_min <= packet_size_max")
        if self.backoff_mean < 1:
            raise ConfigurationError("backoff_mean must be at least 1 slot")
        if self.sensing_slots < 1:
            raise ConfigurationError("sensing_slots must be at least 1")
        if self.transition_slots < 0:
            raise ConfigurationError("transition_slots must be nonnegative")
        if self.defer_policy not in ("one_slot", "backoff"):
            raise ConfigurationError("defer_policy must be 'one_slot' or 'backoff'")

    @property
    def mean_packet_size(self) -> float:
        return (self.packet_size_min + self.packet_size_max) / 2.0

    @property
    def sensing_window(self) -> int:
        """Slots consumed per sensing round, including turnaround."""
        return self.sensing_slots + self.transition_slots


class SuState(Enum):
    INACTIVE = "inactive"
    MONITORING = "monitoring"
    INITIAL = "initial"
    TRANSMITTING = "transmitting"
    RERENDEZVOUS = "rerendezvous"


@dataclass
class SuTransmitter:
    """One secondary-user transmitter.

    ``previous_channel`` is the channel of the last packet that was delivered
    without collision; it is what a re-rendezvous attempt targets.  The queue
    holds pending packet sizes in slots, head-of-line first.
    """

    id: int
    state: SuState = SuState.MONITORING
    previous_channel: Optional[int] = None
    packet_queue: deque = field(default_factory=deque)
    remaining_tx_slots: int = 0
    backoff_remaining: int = 0
    sensing_remaining: int = 0
    defer_remaining: int = 0
    rate_weight: float = 1.0
    tx_channel: Optional[int] = None
    tx_total: int = 0
    tx_clean: bool = True

    def check_invariants(self) -> None:
        if (self.remaining_tx_slots > 0) != (self.state is SuState.TRANSMITTING):
            raise ModelViolationError(
                f"SU {self.id}: remaining_tx_slots={self.remaining_tx_slots} "
                f"inconsistent with state {self.state}"
            )
        if self.state is SuState.TRANSMITTING and self.tx_channel is None:
            raise ModelViolationError(f"SU {self.id}: transmitting without a channel")


@dataclass(frozen=True)
class SlotOutcome:
    """What happened on the air in one slot: who transmitted where, and which
    transmissions were the sole occupant of their channel."""

    slot_index: int
    transmissions: Mapping[int, frozenset]
    successes: frozenset

    @property
    def collided_channels(self) -> frozenset:
        return frozenset(ch for ch, ids in self.transmissions.items() if len(ids) > 1)


def resolve_slot(transmissions: Mapping[int, Set[int]], slot_index: int = 0) -> SlotOutcome:
    """Apply the collision rule to one slot of transmissions.

    A transmission succeeds if and only if it is the only one on its channel.
    Raises ModelViolationError if one SU id appears on more than one channel.
    """
    seen: set[int] = set()
    frozen: dict[int, frozenset] = {}
    for ch, ids in transmissions.items():
        idset = frozenset(ids)
        dup = seen & idset
        if dup:
            raise ModelViolationError(
                f"SU(s) {sorted(dup)} transmit on more than one channel in slot {slot_index}"
            )
        seen |= idset
        frozen[ch] = idset
    successes = frozenset(
        (next(iter(ids)), ch) for ch, ids in frozen.items() if len(ids) == 1
    )
    return SlotOutcome(slot_index=slot_index, transmissions=frozen, successes=successes)


def sample_arrivals(rng: np.random.Generator, mean_interval: float, horizon: int) -> list[int]:
    """Poisson arrival slot indices over [0, horizon).

    Inter-arrival gaps are exponential with the given mean in continuous slot
    time; arrival instants are floored to slot indices.  Several arrivals may
    share a slot.
    """
    if mean_interval <= 0:
        raise ConfigurationError("mean arrival interval must be positive")
    if horizon < 0:
        raise ConfigurationError("horizon must be nonnegative")
    arrivals: list[int] = []
    t = 0.0
    chunk = max(16, int(horizon / mean_interval * 1.2) + 16)
    while t < horizon:
        gaps = rng.exponential(mean_interval, size=chunk)
        times = t + np.cumsum(gaps)
        inside = times[times < horizon]
        arrivals.extend(int(x) for x in inside)
        t = float(times[-1])
        chunk = 16
    return arrivals


def sample_packet_size(rng: np.random.Generator, size_min: int, size_max: int) -> int:
    """Integer packet size, uniform on {size_min, ..., size_max} inclusive."""
    if size_min < 1 or size_min > size_max:
        raise ConfigurationError("need 1 <= size_min <= size_max")
    return int(rng.integers(size_min, size_max + 1))


def sample_backoff(rng: np.random.Generator, mean: float) -> int:
    """Geometric backoff on {1, 2, ...} with success probability 1/mean."""
    if mean < 1:
        raise ConfigurationError("backoff mean must be at least 1 slot")
    return int(rng.geometric(1.0 / mean))
