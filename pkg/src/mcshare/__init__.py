"""mcshare: slotted multichannel spectrum sharing simulator and analysis toolkit."""

from .core import (
    ChannelSet,
    ConfigurationError,
    ModelViolationError,
    SlotOutcome,
    SuState,
    SuTransmitter,
    TractabilityError,
    TrafficModel,
    resolve_slot,
    sample_arrivals,
    sample_backoff,
    sample_packet_size,
)
from .engine import (
    MetricsReport,
    PuWindow,
    ScenarioConfig,
    compute_efficiency,
    run,
    run_replication,
    sweep,
    upper_bound,
)
from .sensing import BernoulliSensing, EnergyDetectorSensing, PerfectSensing

__version__ = "0.1.0"

__all__ = [
    "BernoulliSensing",
    "ChannelSet",
    "ConfigurationError",
    "EnergyDetectorSensing",
    "MetricsReport",
    "ModelViolationError",
    "PerfectSensing",
    "PuWindow",
    "ScenarioConfig",
    "SlotOutcome",
    "SuState",
    "SuTransmitter",
    "TractabilityError",
    "TrafficModel",
    "compute_efficiency",
    "resolve_slot",
    "run",
    "run_replication",
    "sample_arrivals",
    "sample_backoff",
    "sample_packet_size",
    "sweep",
    "upper_bound",
    "__version__",
]
