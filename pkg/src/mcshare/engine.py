"""Slotted simulation of distributed multichannel spectrum sharing.

The simulator advances in integer slots.  Each secondary user cycles through
monitoring, a channel hunt (sensing windows separated by backoffs/defers), and
packet transmission; transmissions on the same channel in the same slot
collide and spoil the whole packets involved, although the transmitters hold
their channels for the full packet duration because there is no slot-level
feedback.  The loop is event-driven: nothing is recomputed for slots in which
no user changes phase, which makes long horizons cheap while remaining
slot-exact (the test suite checks it against a literal slot-by-slot
reference implementation).

Randomness is split into per-user streams keyed by (seed, replication, user,
purpose).  Traffic streams do not depend on the MAC algorithm, so sweeps over
algorithms see identical packet sizes and arrival times (common random
numbers).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import count
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .core import (
    ChannelSet,
    ConfigurationError,
    SuState,
    SuTransmitter,
    TrafficModel,
    sample_arrivals,
    sample_backoff,
    sample_packet_size,
)
from .mac import ALGORITHM_INFO_MODE, ALGORITHMS, SuInfoMode, make_decision, su_information_oracle
from .sensing import BernoulliSensing, PerfectSensing, SensingModel, sense

_STREAM_TRAFFIC = 0
_STREAM_MAC = 1
_STREAM_SENSE = 2

INFO_FOR_ALGORITHM = {"csma_f": "full", "csma_p": "partial", "csma": "none"}

COUNTER_KEYS = (
    "sensing_slots", "backoff_slots", "defer_slots", "transmit_slots", "idle_slots",
    "collision_channel_slots", "idle_available_channel_slots",
    "false_alarms", "miss_detections",
    "delivered_packets", "collided_packets", "arrivals",
)


@dataclass(frozen=True)
class PuWindow:
    """Channels occupied by primary users during [start, stop)."""

    start: int
    stop: int
    channels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.start < 0 or self.stop <= self.start:
            raise ConfigurationError("primary-user window needs 0 <= start < stop")


@dataclass(frozen=True)
class ScenarioConfig:
    """Full declarative description of one experiment."""

    channels: ChannelSet
    num_sus: int
    mac_algorithm: str
    su_info: str
    traffic: TrafficModel
    sensing: SensingModel = field(default_factory=PerfectSensing)
    horizon: int = 100_000
    seed: int = 1
    replications: int = 20
    warmup: Optional[int] = None
    rate_weights: Optional[tuple[float, ...]] = None
    pu_schedule: tuple[PuWindow, ...] = ()

    def validate(self) -> None:
        if self.num_sus < 1:
            raise ConfigurationError("num_sus must be at least 1")
        if self.mac_algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"mac_algorithm must be one of {ALGORITHMS}, got {self.mac_algorithm!r}"
            )
        expected_info = INFO_FOR_ALGORITHM[self.mac_algorithm]
        if self.su_info != expected_info:
            raise ConfigurationError(
                f"mac_algorithm {self.mac_algorithm!r} requires su_info "
                f"{expected_info!r}, got {self.su_info!r}"
            )
        if self.horizon < 10 * self.traffic.mean_packet_size:
            raise ConfigurationError("horizon must be at least 10 mean packet durations")
        if self.replications < 1:
            raise ConfigurationError("replications must be at least 1")
        if self.warmup is not None and not (0 <= self.warmup < self.horizon):
            raise ConfigurationError("warmup must lie in [0, horizon)")
        if self.rate_weights is not None:
            if len(self.rate_weights) != self.num_sus:
                raise ConfigurationError("rate_weights must have one entry per SU")
            if any(w < 0 for w in self.rate_weights) or sum(self.rate_weights) <= 0:
                raise ConfigurationError("rate_weights must be nonnegative with positive sum")
        available = set(self.channels.available)
        for window in self.pu_schedule:
            for c in window.channels:
                if not 1 <= c <= self.channels.total_channels:
                    raise ConfigurationError(f"PU window channel {c} outside the band")
        del available

    @property
    def warmup_slots(self) -> int:
        if self.warmup is not None:
            return self.warmup
        auto = int(math.ceil(5 * (self.traffic.sensing_window + self.traffic.mean_packet_size)))
        return min(auto, self.horizon // 2)

    @property
    def effective_horizon(self) -> int:
        return self.horizon - self.warmup_slots

    @property
    def weights(self) -> tuple[float, ...]:
        if self.rate_weights is not None:
            return self.rate_weights
        return (1.0,) * self.num_sus

    @property
    def e_upper(self) -> float:
        return upper_bound(
            self.num_sus, self.channels.num_available,
            self.traffic.sensing_window, self.traffic.mean_packet_size,
        )


def upper_bound(num_users: int, num_channels: int, sensing_slots: float,
                mean_packet_slots: float) -> float:
    """Collision-free, backoff-free efficiency ceiling:
    min(1, N/M) * E[Td] / (Ts + E[Td])."""
    if num_users < 1:
        raise ConfigurationError("need at least one user")
    if mean_packet_slots <= 0:
        raise ConfigurationError("mean packet duration must be positive")
    if sensing_slots < 0:
        raise ConfigurationError("sensing duration must be nonnegative")
    share = min(1.0, num_channels / num_users)
    return share * mean_packet_slots / (sensing_slots + mean_packet_slots)


def compute_efficiency(delivered_slots: Sequence[float], rate_weights: Sequence[float],
                       horizon: int) -> float:
    """Spectrum sharing efficiency: achieved rate-weighted payload over the
    contention-free aggregate, sum_m R_m D_m / (horizon * sum_m R_m)."""
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    total_rate = float(sum(rate_weights))
    if total_rate <= 0:
        raise ConfigurationError("total rate weight must be positive")
    weighted = sum(r * d for r, d in zip(rate_weights, delivered_slots))
    return weighted / (horizon * total_rate)


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for a (replication, user, purpose) tuple."""
    masked = seed & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence(entropy=(masked, *key)))


def pregenerate_traffic(config: ScenarioConfig, rep_index: int,
                        su_index: int) -> tuple[list[int], list[int]]:
    """Arrival slots and packet sizes for one SU of one replication.

    Depends only on (seed, replication, SU), never on the MAC algorithm or
    sensing model, which is what makes cross-algorithm sweeps paired.
    """
    rng = derive_rng(config.seed, rep_index, su_index, _STREAM_TRAFFIC)
    arrivals = sample_arrivals(rng, config.traffic.mean_arrival_interval, config.horizon)
    sizes = [
        sample_packet_size(rng, config.traffic.packet_size_min, config.traffic.packet_size_max)
        for _ in arrivals
    ]
    return arrivals, sizes


@dataclass(frozen=True)
class ReplicationResult:
    delivered_slots: tuple[int, ...]
    counters: Mapping[str, int]
    efficiency: float


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated outcome of all replications of one scenario."""

    config: ScenarioConfig
    efficiency: float
    efficiency_se: float
    efficiency_ci95: float
    efficiencies: tuple[float, ...]
    e_upper: float
    per_su_delivered: tuple[float, ...]
    per_su_rate: tuple[float, ...]
    total_rate: float
    counts: Mapping[str, int]
    effective_horizon: int


_ARRIVAL, _CHECK, _WAKE, _COMPLETE = 0, 1, 2, 3


def _pu_busy_at(schedule: Sequence[PuWindow], slot: int) -> frozenset:
    busy = set()
    for w in schedule:
        if w.start <= slot < w.stop:
            busy.update(w.channels)
    return frozenset(busy)


def run_replication(config: ScenarioConfig, rep_index: int,
                    trace: Optional[Callable[[int, int, str, str], None]] = None,
                    ) -> ReplicationResult:
    """Simulate one replication and return its raw accumulators.

    Event-driven: users are advanced between their phase changes analytically,
    with per-phase slot spans clipped to the measurement window
    [warmup, horizon).  Occupancy-derived counters (collided channels, idle
    available channels) are integrated piecewise between events.
    """
    traffic = config.traffic
    horizon = config.horizon
    warmup = config.warmup_slots
    n_sus = config.num_sus
    avail_tuple = config.channels.available
    avail_set = frozenset(avail_tuple)
    n_avail = len(avail_tuple)
    ts_window = traffic.sensing_window
    algorithm = config.mac_algorithm
    info_mode = SuInfoMode(config.su_info)
    model = config.sensing
    backoff_mean = traffic.backoff_mean
    one_slot_defer = traffic.defer_policy == "one_slot"
    sensing_is_perfect = isinstance(model, PerfectSensing)
    pu_schedule = config.pu_schedule
    pu_breakpoints = sorted({w.start for w in pu_schedule} | {w.stop for w in pu_schedule})

    sus = [SuTransmitter(id=m + 1) for m in range(n_sus)]
    mac_rngs = [derive_rng(config.seed, rep_index, m + 1, _STREAM_MAC) for m in range(n_sus)]
    sense_rngs = [derive_rng(config.seed, rep_index, m + 1, _STREAM_SENSE) for m in range(n_sus)]

    counters = {key: 0 for key in COUNTER_KEYS}
    delivered_slots = [0] * n_sus
    idle_since = [0] * n_sus

    def window_overlap(a: int, b: int) -> int:
        lo = max(a, warmup)
        hi = min(b, horizon)
        return hi - lo if hi > lo else 0

    def add_span(key: str, a: int, b: int) -> None:
        counters[key] += window_overlap(a, b)

    seq = count()
    heap: list[tuple[int, int, int, int, int]] = []
    for m in range(n_sus):
        arrivals, sizes = pregenerate_traffic(config, rep_index, m)
        for slot, size in zip(arrivals, sizes):
            heap.append((slot, _ARRIVAL, next(seq), m, size))
    heapq.heapify(heap)

    channel_members: dict[int, set[int]] = {c: set() for c in avail_tuple}
    occupied: set[int] = set()
    num_collided = 0
    accessing = 0
    integr_from = 0

    def integrate(upto: int) -> None:
        nonlocal integr_from
        a = integr_from
        if upto <= a:
            return
        pieces = []
        if pu_breakpoints:
            cuts = [a] + [c for c in pu_breakpoints if a < c < upto] + [upto]
            pieces = list(zip(cuts[:-1], cuts[1:]))
        else:
            pieces = [(a, upto)]
        for p0, p1 in pieces:
            ov = window_overlap(p0, p1)
            if not ov:
                continue
            counters["collision_channel_slots"] += ov * num_collided
            if pu_schedule:
                candidates = avail_set - _pu_busy_at(pu_schedule, p0)
                counters["idle_available_channel_slots"] += ov * len(candidates - occupied)
            else:
                counters["idle_available_channel_slots"] += ov * (n_avail - len(occupied))
        integr_from = upto

    def promote(m: int, slot: int) -> None:
        nonlocal accessing
        su = sus[m]
        su.state = (SuState.RERENDEZVOUS if su.previous_channel is not None
                    else SuState.INITIAL)
        accessing += 1
        add_span("idle_slots", idle_since[m], slot)
        add_span("sensing_slots", slot, slot + ts_window)
        heapq.heappush(heap, (slot + ts_window, _WAKE, next(seq), m, 0))
        if trace:
            trace(slot, m + 1, "hunt", su.state.value)

    def join_channel(m: int, ch: int) -> None:
        nonlocal num_collided
        members = channel_members[ch]
        members.add(m)
        if len(members) == 1:
            occupied.add(ch)
        elif len(members) == 2:
            num_collided += 1
            for peer in members:
                sus[peer].tx_clean = False
        else:
            sus[m].tx_clean = False

    def decide(m: int, slot: int, info, candidates: tuple[int, ...],
               busy: frozenset, shared_sensed: Optional[tuple[int, ...]]) -> None:
        nonlocal accessing
        su = sus[m]
        if shared_sensed is not None:
            sensed_sorted = shared_sensed
        else:
            observed = sense(model, busy, candidates, sense_rngs[m])
            if slot >= warmup:
                missed = len(observed & busy)
                counters["miss_detections"] += missed
                counters["false_alarms"] += (len(candidates) - len(busy)) - (len(observed) - missed)
            sensed_sorted = tuple(sorted(observed))
        decision = make_decision(algorithm, su, sensed_sorted, info, mac_rngs[m], backoff_mean)
        if trace:
            trace(slot, m + 1, "decision",
                  f"{decision.kind.value}"
                  + (f" ch={decision.channel}" if decision.channel else "")
                  + (f" dur={decision.duration}" if decision.duration else ""))
        if decision.kind.value == "transmit":
            size = su.packet_queue.popleft()
            su.state = SuState.TRANSMITTING
            su.remaining_tx_slots = size
            su.tx_channel = decision.channel
            su.tx_total = size
            su.tx_clean = True
            accessing -= 1
            add_span("transmit_slots", slot, slot + size)
            join_channel(m, decision.channel)
            heapq.heappush(heap, (slot + size - 1, _COMPLETE, next(seq), m, 0))
        elif decision.kind.value == "backoff":
            d = decision.duration
            add_span("backoff_slots", slot, slot + d)
            add_span("sensing_slots", slot + d, slot + d + ts_window)
            heapq.heappush(heap, (slot + d + ts_window, _WAKE, next(seq), m, 0))
        else:  # defer
            d = 1 if one_slot_defer else sample_backoff(mac_rngs[m], backoff_mean)
            add_span("defer_slots", slot, slot + d)
            add_span("sensing_slots", slot + d, slot + d + ts_window)
            heapq.heappush(heap, (slot + d + ts_window, _WAKE, next(seq), m, 0))

    def complete(m: int, slot: int) -> None:
        nonlocal num_collided
        su = sus[m]
        ch = su.tx_channel
        members = channel_members[ch]
        members.discard(m)
        if len(members) == 1:
            num_collided -= 1
        elif not members:
            occupied.discard(ch)
        delivered = su.tx_clean
        if delivered:
            start = slot - su.tx_total + 1
            credited = slot - max(start, warmup) + 1
            if credited > 0:
                delivered_slots[m] += credited
        if slot >= warmup:
            counters["delivered_packets" if delivered else "collided_packets"] += 1
        su.previous_channel = ch if delivered else None
        su.state = SuState.MONITORING
        su.remaining_tx_slots = 0
        su.tx_channel = None
        su.tx_total = 0
        su.tx_clean = True
        idle_since[m] = slot + 1
        heapq.heappush(heap, (slot + 1, _CHECK, next(seq), m, 0))
        if trace:
            trace(slot, m + 1, "complete", "delivered" if delivered else "collided")

    while heap and heap[0][0] < horizon:
        slot = heap[0][0]
        integrate(slot)
        arrivals_now: list[tuple[int, int]] = []
        checks: list[int] = []
        wakes: list[int] = []
        completes: list[int] = []
        while heap and heap[0][0] == slot:
            _, phase, _, m, extra = heapq.heappop(heap)
            if phase == _ARRIVAL:
                arrivals_now.append((m, extra))
            elif phase == _CHECK:
                checks.append(m)
            elif phase == _WAKE:
                wakes.append(m)
            else:
                completes.append(m)

        # stable sort by SU id only: same-slot arrivals of one SU must keep
        # their chronological order in the FIFO queue
        for m, size in sorted(arrivals_now, key=lambda pair: pair[0]):
            sus[m].packet_queue.append(size)
            if slot >= warmup:
                counters["arrivals"] += 1
            if sus[m].state is SuState.MONITORING:
                promote(m, slot)
        for m in sorted(checks):
            if sus[m].state is SuState.MONITORING and sus[m].packet_queue:
                promote(m, slot)

        if wakes:
            m_k = accessing
            if pu_schedule:
                pu_busy = _pu_busy_at(pu_schedule, slot)
                candidates = tuple(c for c in avail_tuple if c not in pu_busy)
                busy = frozenset(c for c in candidates if channel_members[c])
            else:
                candidates = avail_tuple
                busy = frozenset(occupied)
            n_k_true = len(candidates) - len(busy)
            info = su_information_oracle(info_mode, m_k, n_k_true)
            # Perfect sensing sees the same set for every user deciding in
            # this slot and consumes no randomness, so compute it once.
            shared_sensed = (tuple(c for c in candidates if c not in busy)
                             if sensing_is_perfect else None)
            for m in sorted(wakes):
                decide(m, slot, info, candidates, busy, shared_sensed)

        integrate(slot + 1)
        for m in sorted(completes):
            complete(m, slot)

    integrate(horizon)
    for m, su in enumerate(sus):
        if su.state in (SuState.MONITORING, SuState.INACTIVE):
            add_span("idle_slots", idle_since[m], horizon)

    effective = horizon - warmup
    efficiency = compute_efficiency(delivered_slots, config.weights, effective)
    return ReplicationResult(
        delivered_slots=tuple(delivered_slots),
        counters=counters,
        efficiency=efficiency,
    )


def _replication_task(args: tuple[ScenarioConfig, int]) -> ReplicationResult:
    config, rep_index = args
    return run_replication(config, rep_index)


def run(config: ScenarioConfig, jobs: Optional[int] = None) -> MetricsReport:
    """Run every replication of the scenario and aggregate the metrics.

    Deterministic for a fixed (config, seed) regardless of ``jobs``: each
    replication owns streams keyed by its index, and results merge in index
    order.
    """
    config.validate()
    tasks = [(config, i) for i in range(config.replications)]
    if jobs and jobs > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replication_task, tasks))
    else:
        results = [_replication_task(t) for t in tasks]
    return _aggregate(config, results)


def _aggregate(config: ScenarioConfig, results: Sequence[ReplicationResult]) -> MetricsReport:
    reps = len(results)
    effs = np.array([r.efficiency for r in results], dtype=float)
    mean = float(np.mean(effs))
    if reps > 1:
        se = float(np.std(effs, ddof=1) / math.sqrt(reps))
        ci = float(stats.t.ppf(0.975, reps - 1) * se)
    else:
        se = 0.0
        ci = 0.0
    weights = config.weights
    effective = config.effective_horizon
    mean_delivered = np.mean(
        np.array([r.delivered_slots for r in results], dtype=float), axis=0)
    per_su_payload = tuple(float(w * d) for w, d in zip(weights, mean_delivered))
    per_su_rate = tuple(p / effective for p in per_su_payload)
    counts = {key: int(sum(r.counters[key] for r in results)) for key in COUNTER_KEYS}
    return MetricsReport(
        config=config,
        efficiency=mean,
        efficiency_se=se,
        efficiency_ci95=ci,
        efficiencies=tuple(float(e) for e in effs),
        e_upper=config.e_upper,
        per_su_delivered=per_su_payload,
        per_su_rate=per_su_rate,
        total_rate=float(sum(per_su_rate)),
        counts=counts,
        effective_horizon=effective,
    )


SWEEPABLE = ("num_sus", "mean_arrival_interval", "packet_size", "mac_algorithm",
             "p_false_alarm", "p_miss", "sensing_slots")


def apply_parameter(config: ScenarioConfig, parameter: str, value) -> ScenarioConfig:
    """A copy of ``config`` with one sweep parameter changed."""
    if parameter == "num_sus":
        return replace(config, num_sus=int(value))
    if parameter == "mean_arrival_interval":
        return replace(config, traffic=replace(config.traffic, mean_arrival_interval=float(value)))
    if parameter == "packet_size":
        lo, hi = value
        return replace(config, traffic=replace(
            config.traffic, packet_size_min=int(lo), packet_size_max=int(hi)))
    if parameter == "mac_algorithm":
        algorithm = str(value)
        if algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown MAC algorithm {algorithm!r}")
        return replace(config, mac_algorithm=algorithm, su_info=INFO_FOR_ALGORITHM[algorithm])
    if parameter in ("p_false_alarm", "p_miss"):
        if not isinstance(config.sensing, BernoulliSensing):
            raise ConfigurationError(f"sweeping {parameter} requires the bernoulli sensing model")
        return replace(config, sensing=replace(config.sensing, **{parameter: float(value)}))
    if parameter == "sensing_slots":
        return replace(config, traffic=replace(config.traffic, sensing_slots=int(value)))
    raise ConfigurationError(
        f"unknown sweep parameter {parameter!r}; choose one of {SWEEPABLE}"
    )


def sweep(base: ScenarioConfig, parameter: str, values: Sequence,
          jobs: Optional[int] = None) -> list[MetricsReport]:
    """One full run per value of the swept parameter.

    Traffic streams are derived independently of the algorithm choice, so a
    sweep over ``mac_algorithm`` compares the policies on identical packet
    arrival times and sizes.
    """
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    reports = []
    for value in values:
        point = apply_parameter(base, parameter, value)
        reports.append(run(point, jobs=jobs))
    return reports
