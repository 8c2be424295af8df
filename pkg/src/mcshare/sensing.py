"""Spectrum observation models.

Three models of what a transmitter sees when it senses the band:

* ``PerfectSensing`` reports ground truth.
* ``BernoulliSensing`` flips each channel independently: an idle channel is
  reported busy with the false-alarm probability, a busy one idle with the
  miss probability.  This is the fast model meant for MAC simulations.
* ``EnergyDetectorSensing`` computes a per-channel averaged power statistic
  against a threshold, including leakage from adjacent channels (side lobes)
  and from the mirror channel (IQ-imbalance image).  It is meant for
  detection-curve studies and for deriving (p_fa, p_miss) pairs to feed the
  Bernoulli model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import AbstractSet, Mapping, Optional, Sequence, Union

import numpy as np

from .core import ConfigurationError


@dataclass(frozen=True)
class PerfectSensing:
    pass


@dataclass(frozen=True)
class BernoulliSensing:
    p_false_alarm: float = 0.0
    p_miss: float = 0.0
    per_channel: Optional[Mapping[int, tuple[float, float]]] = None

    def __post_init__(self):
        for p in (self.p_false_alarm, self.p_miss):
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError("sensing error probabilities must be in [0, 1]")
        if self.per_channel:
            for ch, (pf, pm) in self.per_channel.items():
                if not (0.0 <= pf <= 1.0 and 0.0 <= pm <= 1.0):
                    raise ConfigurationError(
                        f"per-channel sensing overrides for channel {ch} outside [0, 1]"
                    )

    def error_probs(self, channel: int) -> tuple[float, float]:
        if self.per_channel and channel in self.per_channel:
            return self.per_channel[channel]
        return self.p_false_alarm, self.p_miss


@dataclass(frozen=True)
class EnergyDetectorSensing:
    """Averaged-power detector over ``samples_per_channel`` complex samples,
    repeated ``averaging_depth`` times (K) before thresholding.

    ``threshold_tnr_db`` places the decision threshold relative to the
    per-channel noise floor (samples_per_channel * noise_power).  Leakage
    levels are attenuations relative to the leaking signal's own in-channel
    power; with the defaults and a 42 dB SNR source, the first side lobe sits
    12 dB and the IQ image 22.5 dB above the noise floor.  The mirror channel
    of n in an N-channel band is N+1-n.
    """

    noise_power: float = 1.0
    signal_snr_db: float = 42.0
    threshold_tnr_db: float = 25.0
    averaging_depth: int = 10
    samples_per_channel: int = 120
    sidelobe_rel_db: float = 30.0
    iq_image_rel_db: float = 19.5
    num_channels: int = 10
    per_channel_snr_db: Optional[Mapping[int, float]] = None

    def __post_init__(self):
        if self.noise_power <= 0:
            raise ConfigurationError("noise_power must be positive")
        if self.averaging_depth < 1 or self.samples_per_channel < 1:
            raise ConfigurationError("averaging depth and samples per channel must be >= 1")
        if self.num_channels < 1:
            raise ConfigurationError("num_channels must be positive")

    def snr_db(self, channel: int) -> float:
        if self.per_channel_snr_db and channel in self.per_channel_snr_db:
            return self.per_channel_snr_db[channel]
        return self.signal_snr_db

    def mirror_channel(self, channel: int) -> int:
        return self.num_channels + 1 - channel

    @property
    def threshold(self) -> float:
        """Decision threshold in the units of the statistic."""
        return 10.0 ** (self.threshold_tnr_db / 10.0) * self.samples_per_channel * self.noise_power

    def received_power(self, channel: int, occupied: bool,
                       interference: AbstractSet[int]) -> float:
        """Per-sample power on ``channel``: noise, own signal when occupied,
        plus side-lobe and image leakage from other occupied channels."""
        power = self.noise_power
        if occupied:
            power += self.noise_power * 10.0 ** (self.snr_db(channel) / 10.0)
        for adj in (channel - 1, channel + 1):
            if adj in interference and adj != channel and 1 <= adj <= self.num_channels:
                leak_db = self.snr_db(adj) - self.sidelobe_rel_db
                power += self.noise_power * 10.0 ** (leak_db / 10.0)
        mirror = self.mirror_channel(channel)
        if mirror != channel and mirror in interference:
            leak_db = self.snr_db(mirror) - self.iq_image_rel_db
            power += self.noise_power * 10.0 ** (leak_db / 10.0)
        return power


SensingModel = Union[PerfectSensing, BernoulliSensing, EnergyDetectorSensing]


def energy_statistic(model: EnergyDetectorSensing, channel: int, occupied: bool,
                     interference: AbstractSet[int], rng: np.random.Generator) -> float:
    """One draw of the detector statistic for ``channel``.

    Sums |sample|^2 over the channel's samples for each of K repeats and
    averages over K; samples are circular complex Gaussian with the combined
    signal, leakage, and noise power.
    """
    power = model.received_power(channel, occupied, interference)
    k, s = model.averaging_depth, model.samples_per_channel
    parts = rng.standard_normal((k * s, 2)) * math.sqrt(power / 2.0)
    return float(np.sum(parts * parts) / k)


def sense(model: SensingModel, true_busy: AbstractSet[int], channels: Sequence[int],
          rng: np.random.Generator) -> frozenset:
    """Observe the given channels and return the set reported available.

    ``true_busy`` is the subset of ``channels`` actually carrying energy.
    Perfect sensing returns the exact complement; the error models may
    misreport each channel independently.
    """
    if isinstance(model, PerfectSensing):
        return frozenset(c for c in channels if c not in true_busy)
    if isinstance(model, BernoulliSensing):
        draws = rng.random(len(channels))
        observed = []
        for c, u in zip(channels, draws):
            pf, pm = model.error_probs(c)
            if c in true_busy:
                if u < pm:
                    observed.append(c)
            elif u >= pf:
                observed.append(c)
        return frozenset(observed)
    if isinstance(model, EnergyDetectorSensing):
        thr = model.threshold
        observed = []
        for c in channels:
            y = energy_statistic(model, c, c in true_busy, true_busy - {c}, rng)
            if y <= thr:
                observed.append(c)
        return frozenset(observed)
    raise ConfigurationError(f"unknown sensing model {model!r}")


@dataclass(frozen=True)
class DetectionCurvePoint:
    tnr_db: float
    scenario: str
    trials: int
    p_false_alarm: Optional[float]
    p_miss: Optional[float]
    averaging_depth: int


DETECTION_SCENARIOS = ("noise", "sidelobe", "iq_image", "signal")


def _scenario_geometry(model: EnergyDetectorSensing, scenario: str):
    """(measured channel, occupied flag, interferer set) for a named scenario."""
    if scenario == "noise":
        return 1, False, frozenset()
    if scenario == "sidelobe":
        if model.num_channels < 2:
            raise ConfigurationError("side-lobe scenario needs at least two channels")
        return 2, False, frozenset({1})
    if scenario == "iq_image":
        if model.num_channels < 2:
            raise ConfigurationError("image scenario needs at least two channels")
        return model.num_channels, False, frozenset({1})
    if scenario == "signal":
        return 1, True, frozenset()
    raise ConfigurationError(f"unknown detection scenario {scenario!r}")


def detection_curves(model: EnergyDetectorSensing, tnr_sweep_db: Sequence[float],
                     trials: int, rng: np.random.Generator,
                     scenarios: Sequence[str] = DETECTION_SCENARIOS,
                     ) -> list[DetectionCurvePoint]:
    """Empirical false-alarm / miss rates across a threshold sweep.

    For each scenario the statistic is sampled ``trials`` times once and then
    compared against every threshold in the sweep, so the reported rates are
    exactly monotone in the threshold.
    """
    if not tnr_sweep_db:
        raise ConfigurationError("threshold sweep must not be empty")
    if trials < 1:
        raise ConfigurationError("trials must be positive")
    points: list[DetectionCurvePoint] = []
    s = model.samples_per_channel
    for scenario in scenarios:
        channel, occupied, interference = _scenario_geometry(model, scenario)
        y = np.array([
            energy_statistic(model, channel, occupied, interference, rng)
            for _ in range(trials)
        ])
        for tnr in tnr_sweep_db:
            thr = 10.0 ** (tnr / 10.0) * s * model.noise_power
            busy_rate = float(np.mean(y > thr))
            if scenario == "signal":
                points.append(DetectionCurvePoint(
                    tnr_db=float(tnr), scenario=scenario, trials=trials,
                    p_false_alarm=None, p_miss=1.0 - busy_rate,
                    averaging_depth=model.averaging_depth,
                ))
            else:
                points.append(DetectionCurvePoint(
                    tnr_db=float(tnr), scenario=scenario, trials=trials,
                    p_false_alarm=busy_rate, p_miss=None,
                    averaging_depth=model.averaging_depth,
                ))
    return points
