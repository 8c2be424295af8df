"""Literal slot-by-slot simulator used as an oracle for the event-driven engine.

Advances every SU through every slot with the state-machine operations and
resolves each slot with resolve_slot.  Slow but direct: the production engine
must reproduce its per-SU delivered counts and every accumulator exactly,
because both draw from identical per-(seed, replication, SU, purpose) random
streams and make the same draws in the same per-SU order.
"""

from collections import defaultdict

from mcshare.core import SuState, SuTransmitter, resolve_slot, sample_backoff
from mcshare.engine import (
    COUNTER_KEYS,
    ReplicationResult,
    ScenarioConfig,
    _STREAM_MAC,
    _STREAM_SENSE,
    _pu_busy_at,
    compute_efficiency,
    derive_rng,
    pregenerate_traffic,
)
from mcshare.mac import (
    SlotContext,
    SuInfoMode,
    advance_transmission,
    make_decision,
    step_state_machine,
    su_information_oracle,
)
from mcshare.sensing import sense

_KIND_TO_COUNTER = {
    "sensing": "sensing_slots",
    "backoff": "backoff_slots",
    "defer": "defer_slots",
    "transmitting": "transmit_slots",
    "idle": "idle_slots",
    "inactive": "idle_slots",
}


def run_reference(config: ScenarioConfig, rep_index: int) -> ReplicationResult:
    traffic = config.traffic
    horizon = config.horizon
    warmup = config.warmup_slots
    n_sus = config.num_sus
    avail = config.channels.available
    ts_window = traffic.sensing_window
    model = config.sensing
    algorithm = config.mac_algorithm
    info_mode = SuInfoMode(config.su_info)
    backoff_mean = traffic.backoff_mean
    one_slot_defer = traffic.defer_policy == "one_slot"

    sus = [SuTransmitter(id=m + 1) for m in range(n_sus)]
    mac_rngs = [derive_rng(config.seed, rep_index, m + 1, _STREAM_MAC) for m in range(n_sus)]
    sense_rngs = [derive_rng(config.seed, rep_index, m + 1, _STREAM_SENSE) for m in range(n_sus)]

    arrivals_by_slot: list[dict[int, list[int]]] = []
    for m in range(n_sus):
        slots, sizes = pregenerate_traffic(config, rep_index, m)
        per_slot: dict[int, list[int]] = defaultdict(list)
        for s, size in zip(slots, sizes):
            per_slot[s].append(size)
        arrivals_by_slot.append(per_slot)

    counters = {key: 0 for key in COUNTER_KEYS}
    delivered = [0] * n_sus

    for slot in range(horizon):
        in_window = slot >= warmup
        arrivals = [arrivals_by_slot[m].get(slot, []) for m in range(n_sus)]
        if in_window:
            counters["arrivals"] += sum(len(a) for a in arrivals)

        # contender count after this boundary's promotions
        m_k = 0
        for m, su in enumerate(sus):
            if su.state in (SuState.INITIAL, SuState.RERENDEZVOUS):
                m_k += 1
            elif su.state is SuState.MONITORING and (su.packet_queue or arrivals[m]):
                m_k += 1

        pu_busy = _pu_busy_at(config.pu_schedule, slot)
        candidates = tuple(c for c in avail if c not in pu_busy)
        busy = frozenset(
            su.tx_channel for su in sus
            if su.state is SuState.TRANSMITTING and su.tx_channel in candidates
        )
        n_k_true = len(candidates) - len(busy)
        info = su_information_oracle(info_mode, m_k, n_k_true)

        def make_ctx(m: int, su: SuTransmitter) -> SlotContext:
            def decide(target: SuTransmitter):
                observed = sense(model, busy, candidates, sense_rngs[m])
                if in_window:
                    missed = len(observed & busy)
                    counters["miss_detections"] += missed
                    counters["false_alarms"] += (
                        (len(candidates) - len(busy)) - (len(observed) - missed))
                return make_decision(algorithm, target, tuple(sorted(observed)),
                                     info, mac_rngs[m], backoff_mean)

            def defer_slots() -> int:
                return 1 if one_slot_defer else sample_backoff(mac_rngs[m], backoff_mean)

            return SlotContext(
                slot=slot, sensing_slots=ts_window, arrivals=arrivals[m],
                decide=decide, defer_slots=defer_slots,
            )

        for m, su in enumerate(sus):
            result = step_state_machine(su, make_ctx(m, su))
            if in_window:
                counters[_KIND_TO_COUNTER[result.slot_kind]] += 1

        transmissions: dict[int, set[int]] = {}
        for su in sus:
            if su.state is SuState.TRANSMITTING:
                transmissions.setdefault(su.tx_channel, set()).add(su.id)
        outcome = resolve_slot(transmissions, slot)
        collided = outcome.collided_channels
        if in_window:
            counters["collision_channel_slots"] += len(collided)
            counters["idle_available_channel_slots"] += len(
                set(candidates) - set(transmissions))

        for m, su in enumerate(sus):
            if su.state is SuState.TRANSMITTING:
                done = advance_transmission(su, su.tx_channel in collided)
                if done is not None:
                    if done.delivered:
                        start = slot - done.size + 1
                        credited = slot - max(start, warmup) + 1
                        if credited > 0:
                            delivered[m] += credited
                    if in_window:
                        key = "delivered_packets" if done.delivered else "collided_packets"
                        counters[key] += 1

    efficiency = compute_efficiency(delivered, config.weights, horizon - warmup)
    return ReplicationResult(
        delivered_slots=tuple(delivered), counters=counters, efficiency=efficiency,
    )
