"""Transmitter state machine and the multichannel CSMA decision policies.

Three policies differ only in what they know about contention:

* ``csma_f`` knows the number of users currently hunting for a channel and
  throttles its access probability accordingly (full information).
* ``csma_p`` knows one bit, whether hunters outnumber free channels, and uses
  it only to gate the return to its previous channel (partial information).
* ``csma`` knows nothing and always grabs a uniformly random free channel.

A policy is consulted once per completed sensing window and returns a
MacDecision; the state machine turns decisions and timers into per-slot state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    ConfigurationError,
    ModelViolationError,
    SuState,
    SuTransmitter,
    sample_backoff,
)


class SuInfoMode(Enum):
    FULL = "full"
    PARTIAL = "partial"
    NONE = "none"


@dataclass(frozen=True)
class SuInformation:
    """What the information oracle told one SU at a decision boundary."""

    mode: SuInfoMode
    num_contenders: Optional[int] = None
    contenders_ge_channels: Optional[bool] = None


def su_information_oracle(mode: SuInfoMode, true_contenders: int,
                          num_free_channels: int) -> SuInformation:
    """Distill ground truth into the configured information mode."""
    if mode is SuInfoMode.FULL:
        return SuInformation(mode=mode, num_contenders=true_contenders)
    if mode is SuInfoMode.PARTIAL:
        return SuInformation(
            mode=mode, contenders_ge_channels=true_contenders >= num_free_channels
        )
    return SuInformation(mode=mode)


class DecisionKind(Enum):
    SENSE = "sense"
    BACKOFF = "backoff"
    TRANSMIT = "transmit"
    DEFER = "defer"


@dataclass(frozen=True)
class MacDecision:
    kind: DecisionKind
    channel: Optional[int] = None
    duration: Optional[int] = None

    @classmethod
    def transmit(cls, channel: int) -> "MacDecision":
        return cls(kind=DecisionKind.TRANSMIT, channel=channel)

    @classmethod
    def backoff(cls, duration: int) -> "MacDecision":
        return cls(kind=DecisionKind.BACKOFF, duration=duration)

    @classmethod
    def defer(cls) -> "MacDecision":
        return cls(kind=DecisionKind.DEFER)

    @classmethod
    def sense(cls) -> "MacDecision":
        return cls(kind=DecisionKind.SENSE)


def decide_csma_f(su: SuTransmitter, available: Sequence[int], num_contenders: int,
                  rng: np.random.Generator, backoff_mean: float = 10.0) -> MacDecision:
    """Full-information access: re-rendezvous whenever contenders fit into the
    free channels, otherwise transmit with probability min(1, N/M) on a
    uniformly random free channel, landing on each with min{1/M, 1/N}."""
    if num_contenders < 1:
        raise ModelViolationError("contender count from the oracle must be at least 1")
    if not available:
        return MacDecision.backoff(sample_backoff(rng, backoff_mean))
    n_free = len(available)
    if num_contenders <= n_free and su.previous_channel in available:
        return MacDecision.transmit(su.previous_channel)
    if num_contenders > n_free and rng.random() >= n_free / num_contenders:
        return MacDecision.defer()
    return MacDecision.transmit(available[int(rng.integers(n_free))])


def decide_csma_p(su: SuTransmitter, available: Sequence[int], contenders_ge_channels: bool,
                  rng: np.random.Generator, backoff_mean: float = 10.0) -> MacDecision:
    """One-bit access: return to the previous channel only when the bit says
    contenders are fewer than free channels; otherwise a uniform free channel."""
    if not available:
        return MacDecision.backoff(sample_backoff(rng, backoff_mean))
    if not contenders_ge_channels and su.previous_channel in available:
        return MacDecision.transmit(su.previous_channel)
    return MacDecision.transmit(available[int(rng.integers(len(available)))])


def decide_csma(su: SuTransmitter, available: Sequence[int],
                rng: np.random.Generator, backoff_mean: float = 10.0) -> MacDecision:
    """Information-free access: always transmit on a uniform free channel."""
    if not available:
        return MacDecision.backoff(sample_backoff(rng, backoff_mean))
    return MacDecision.transmit(available[int(rng.integers(len(available)))])


ALGORITHMS = ("csma_f", "csma_p", "csma")

ALGORITHM_INFO_MODE = {
    "csma_f": SuInfoMode.FULL,
    "csma_p": SuInfoMode.PARTIAL,
    "csma": SuInfoMode.NONE,
}


def make_decision(algorithm: str, su: SuTransmitter, available: Sequence[int],
                  info: SuInformation, rng: np.random.Generator,
                  backoff_mean: float = 10.0) -> MacDecision:
    """Dispatch to the policy matching ``algorithm``, feeding it only the
    slice of information its mode is entitled to."""
    if algorithm == "csma_f":
        if info.num_contenders is None:
            raise ConfigurationError("csma_f needs full SU information")
        return decide_csma_f(su, available, info.num_contenders, rng, backoff_mean)
    if algorithm == "csma_p":
        if info.contenders_ge_channels is None:
            raise ConfigurationError("csma_p needs the partial-information bit")
        return decide_csma_p(su, available, info.contenders_ge_channels, rng, backoff_mean)
    if algorithm == "csma":
        return decide_csma(su, available, rng, backoff_mean)
    raise ConfigurationError(f"unknown MAC algorithm {algorithm!r}")


@dataclass
class SlotContext:
    """Everything one SU needs to advance one slot at a boundary.

    ``decide`` is invoked only when the SU has just finished a sensing window;
    it is expected to sense, consult the information oracle, and run the
    policy.  ``defer_slots`` supplies the duration of an elective defer.
    """

    slot: int
    sensing_slots: int
    arrivals: Sequence[int] = ()
    decide: Optional[Callable[[SuTransmitter], MacDecision]] = None
    defer_slots: Callable[[], int] = lambda: 1
    activate: bool = False
    deactivate: bool = False


@dataclass(frozen=True)
class StepResult:
    slot_kind: str                      # idle | sensing | backoff | defer | transmitting | inactive
    started_channel: Optional[int] = None


@dataclass(frozen=True)
class CompletedPacket:
    su_id: int
    channel: int
    size: int
    delivered: bool


def step_state_machine(su: SuTransmitter, ctx: SlotContext) -> StepResult:
    """Advance one SU through the boundary of one slot.

    Arrivals join the queue first; a monitoring SU with pending data enters
    the hunt (re-rendezvous if it remembers a delivered channel, initial
    otherwise) and starts its sensing window in this same slot.  A hunting SU
    whose timers have all elapsed consults the policy: a transmit decision
    starts occupying the channel this slot, while backoff and defer arm their
    timers and lead back into a fresh sensing window.  Transmission slots are
    accounted by advance_transmission once the slot's collisions are known.
    """
    for size in ctx.arrivals:
        su.packet_queue.append(size)

    if su.state is SuState.INACTIVE:
        if ctx.activate:
            su.state = SuState.MONITORING
            return StepResult(slot_kind="idle")
        return StepResult(slot_kind="inactive")
    if ctx.deactivate:
        if su.state is not SuState.MONITORING:
            raise ModelViolationError(
                f"SU {su.id} may only leave the system while monitoring"
            )
        su.state = SuState.INACTIVE
        return StepResult(slot_kind="inactive")

    if su.state is SuState.MONITORING:
        if not su.packet_queue:
            return StepResult(slot_kind="idle")
        su.state = (SuState.RERENDEZVOUS if su.previous_channel is not None
                    else SuState.INITIAL)
        su.sensing_remaining = ctx.sensing_slots

    if su.state is SuState.TRANSMITTING:
        return StepResult(slot_kind="transmitting")

    # hunting: INITIAL or RERENDEZVOUS
    if (su.sensing_remaining == 0 and su.backoff_remaining == 0
            and su.defer_remaining == 0):
        if ctx.decide is None:
            raise ModelViolationError(f"SU {su.id} is ready to decide but has no policy")
        decision = ctx.decide(su)
        if decision.kind is DecisionKind.TRANSMIT:
            size = su.packet_queue.popleft()
            su.state = SuState.TRANSMITTING
            su.remaining_tx_slots = size
            su.tx_channel = decision.channel
            su.tx_total = size
            su.tx_clean = True
            return StepResult(slot_kind="transmitting", started_channel=decision.channel)
        if decision.kind is DecisionKind.BACKOFF:
            su.backoff_remaining = int(decision.duration)
        elif decision.kind is DecisionKind.DEFER:
            su.defer_remaining = int(ctx.defer_slots())
        else:
            raise ModelViolationError(f"policy returned unexpected decision {decision.kind}")

    if su.sensing_remaining > 0:
        su.sensing_remaining -= 1
        return StepResult(slot_kind="sensing")
    if su.backoff_remaining > 0:
        su.backoff_remaining -= 1
        if su.backoff_remaining == 0:
            su.sensing_remaining = ctx.sensing_slots
        return StepResult(slot_kind="backoff")
    if su.defer_remaining > 0:
        su.defer_remaining -= 1
        if su.defer_remaining == 0:
            su.sensing_remaining = ctx.sensing_slots
        return StepResult(slot_kind="defer")
    raise ModelViolationError(f"SU {su.id} reached an impossible hunting state")


def advance_transmission(su: SuTransmitter, collided: bool) -> Optional[CompletedPacket]:
    """Account one airtime slot for a transmitting SU.

    A collision anywhere in the packet spoils the whole packet, but the
    transmitter keeps the channel for its full duration (there is no slot
    feedback).  On the last slot the SU returns to monitoring; the channel is
    remembered for re-rendezvous only if the packet got through, because
    packet feedback tells the transmitter whether its rendezvous worked.
    """
    if su.state is not SuState.TRANSMITTING or su.remaining_tx_slots <= 0:
        raise ModelViolationError(f"SU {su.id} is not transmitting")
    if collided:
        su.tx_clean = False
    su.remaining_tx_slots -= 1
    if su.remaining_tx_slots > 0:
        return None
    completed = CompletedPacket(
        su_id=su.id, channel=su.tx_channel, size=su.tx_total, delivered=su.tx_clean,
    )
    su.previous_channel = su.tx_channel if su.tx_clean else None
    su.state = SuState.MONITORING
    su.tx_channel = None
    su.tx_total = 0
    su.tx_clean = True
    return completed
