"""Command-line front end.

Four subcommands: ``simulate`` (one scenario), ``sweep`` (a parameter sweep,
optionally from a figure preset), ``analyze`` (numeric verification of the
slot-level optimality and dominance results), and ``sense-curves`` (detector
operating curves).  Configuration is a YAML document whose keys mirror the
scenario fields; ``--override section.key=value`` patches individual entries.
All outputs are deterministic CSV for a fixed config and seed.

Exit codes: 0 success, 1 runtime failure (including failed analyze checks),
2 configuration/validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import analysis, engine, sensing
from .core import ChannelSet, ConfigurationError, TrafficModel
from .engine import INFO_FOR_ALGORITHM, MetricsReport, PuWindow, ScenarioConfig
from .mac import ALGORITHMS

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

SWEEP_CSV_HEADER = (
    "config_hash,algorithm,M,N,lambda,td_min,td_max,ts,efficiency_mean,"
    "efficiency_ci95,e_upper,collisions,false_alarms,miss_detections,seed"
)
ANALYZE_CSV_HEADER = "check,m,n,l,observed,expected,delta,passed,note"
SENSE_CSV_HEADER = "tnr_db,scenario,trials,p_f,p_m,k"

_TOP_KEYS = {
    "channels", "num_sus", "mac_algorithm", "su_info", "traffic", "sensing",
    "horizon", "seed", "replications", "warmup", "rate_weights", "pu_schedule",
    "sweep", "analyze", "sense_curves",
}
_TRAFFIC_KEYS = {
    "mean_arrival_interval", "packet_size_min", "packet_size_max",
    "backoff_mean", "sensing_slots", "transition_slots", "defer_policy",
}
_SENSING_KEYS = {
    "model", "p_false_alarm", "p_miss", "per_channel", "noise_power",
    "signal_snr_db", "threshold_tnr_db", "averaging_depth",
    "samples_per_channel", "sidelobe_rel_db", "iq_image_rel_db", "num_channels",
}
_SWEEP_KEYS = {"parameter", "values", "algorithms"}
_ANALYZE_KEYS = {"m_range", "n_range", "grid_step"}
_SENSE_KEYS = {"tnr_db", "k_values", "trials"}

_SECTION_KEYS = {
    "traffic": _TRAFFIC_KEYS,
    "sensing": _SENSING_KEYS,
    "sweep": _SWEEP_KEYS,
    "analyze": _ANALYZE_KEYS,
    "sense_curves": _SENSE_KEYS,
}


@dataclass(frozen=True)
class RunManifest:
    """What one CLI invocation asked for."""

    subcommand: str
    config_path: Optional[str]
    out_dir: str
    overrides: tuple[str, ...] = ()
    preset: Optional[str] = None
    jobs: int = 1
    event_log: Optional[str] = None


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}"
        )


def load_document(manifest: RunManifest) -> dict:
    """Resolve preset and/or config file, then apply overrides."""
    doc: dict = {}
    if manifest.preset:
        doc = preset_document(manifest.preset)
    if manifest.config_path:
        path = Path(manifest.config_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config {path} must be a mapping at top level")
        doc.update(loaded)
    if not doc:
        raise ConfigurationError("no configuration given: pass --config and/or --preset")
    for item in manifest.overrides:
        _apply_override(doc, item)
    _check_keys(doc, _TOP_KEYS, "configuration")
    return doc


def _apply_override(doc: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigurationError(f"override {item!r} must look like key=value or a.b=value")
    raw_key, raw_value = item.split("=", 1)
    path = raw_key.strip().split(".")
    if not path or not path[0]:
        raise ConfigurationError(f"override {item!r} has an empty key")
    if path[0] not in _TOP_KEYS:
        raise ConfigurationError(f"override names unknown field {path[0]!r}")
    if len(path) > 1:
        allowed = _SECTION_KEYS.get(path[0])
        if allowed is None:
            raise ConfigurationError(f"field {path[0]!r} has no nested keys to override")
        if path[1] not in allowed:
            raise ConfigurationError(f"override names unknown field {raw_key!r}")
    try:
        value = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse override value {raw_value!r}: {exc}") from exc
    node = doc
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"override path {raw_key!r} crosses a non-mapping")
    node[path[-1]] = value


def build_channels(spec) -> ChannelSet:
    if isinstance(spec, int):
        return ChannelSet.fully_available(spec)
    if isinstance(spec, dict):
        _check_keys(spec, {"total", "available"}, "channels")
        total = int(spec.get("total", 0))
        avail = spec.get("available", "all")
        if avail == "all":
            return ChannelSet.fully_available(total)
        return ChannelSet(total_channels=total, available=tuple(int(c) for c in avail))
    raise ConfigurationError("channels must be an integer or a {total, available} mapping")


def build_traffic(section: dict) -> TrafficModel:
    _check_keys(section, _TRAFFIC_KEYS, "traffic")
    if "mean_arrival_interval" not in section:
        raise ConfigurationError("traffic.mean_arrival_interval is required")
    return TrafficModel(**section)


def build_sensing(section: Optional[dict]) -> sensing.SensingModel:
    if section is None:
        return sensing.PerfectSensing()
    _check_keys(section, _SENSING_KEYS, "sensing")
    section = dict(section)
    kind = section.pop("model", "perfect")
    if kind == "perfect":
        if section:
            raise ConfigurationError("perfect sensing takes no parameters")
        return sensing.PerfectSensing()
    if kind == "bernoulli":
        per_channel = section.pop("per_channel", None)
        if per_channel is not None:
            per_channel = {int(k): (float(v[0]), float(v[1])) for k, v in per_channel.items()}
        return sensing.BernoulliSensing(per_channel=per_channel, **section)
    if kind == "energy":
        return sensing.EnergyDetectorSensing(**section)
    raise ConfigurationError(f"unknown sensing model {kind!r}")


def build_scenario(doc: dict) -> ScenarioConfig:
    for key in ("channels", "num_sus", "mac_algorithm", "traffic"):
        if key not in doc:
            raise ConfigurationError(f"configuration key {key!r} is required")
    algorithm = str(doc["mac_algorithm"])
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"mac_algorithm must be one of {ALGORITHMS}")
    su_info = doc.get("su_info", INFO_FOR_ALGORITHM[algorithm])
    warmup = doc.get("warmup")
    if warmup in ("auto", "none"):
        warmup = None
    rate_weights = doc.get("rate_weights")
    if rate_weights is not None:
        rate_weights = tuple(float(w) for w in rate_weights)
    pu_schedule = tuple(
        PuWindow(start=int(w["start"]), stop=int(w["stop"]),
                 channels=tuple(int(c) for c in w["channels"]))
        for w in doc.get("pu_schedule", ())
    )
    config = ScenarioConfig(
        channels=build_channels(doc["channels"]),
        num_sus=int(doc["num_sus"]),
        mac_algorithm=algorithm,
        su_info=str(su_info),
        traffic=build_traffic(dict(doc["traffic"])),
        sensing=build_sensing(doc.get("sensing")),
        horizon=int(doc.get("horizon", 100_000)),
        seed=int(doc.get("seed", 1)),
        replications=int(doc.get("replications", 20)),
        warmup=None if warmup is None else int(warmup),
        rate_weights=rate_weights,
        pu_schedule=pu_schedule,
    )
    config.validate()
    return config


PRESET_GRID_M = [2, 5, 10, 15, 20, 25, 30, 35, 40]
_PRESET_LAMBDA = {"a": 70.0, "b": 50.0, "c": 20.0}


def preset_document(name: str) -> dict:
    """Reproduction presets: N=20 channels, the M grid, all three algorithms;
    fig6* uses fixed 50-slot packets, fig7* packet sizes uniform on 30..70;
    the trailing letter picks the mean arrival interval 70/50/20."""
    if len(name) == 5 and name.startswith("fig") and name[3] in "67" and name[4] in "abc":
        td = (50, 50) if name[3] == "6" else (30, 70)
        lam = _PRESET_LAMBDA[name[4]]
        return {
            "channels": 20,
            "num_sus": 20,
            "mac_algorithm": "csma",
            "su_info": "none",
            "traffic": {
                "mean_arrival_interval": lam,
                "packet_size_min": td[0],
                "packet_size_max": td[1],
                "backoff_mean": 10.0,
                "sensing_slots": 1,
            },
            "sensing": {"model": "perfect"},
            "horizon": 100_000,
            "seed": 20201107,
            "replications": 20,
            "sweep": {
                "parameter": "num_sus",
                "values": list(PRESET_GRID_M),
                "algorithms": ["csma", "csma_p", "csma_f"],
            },
        }
    raise ConfigurationError(
        f"unknown preset {name!r}; available: fig6a fig6b fig6c fig7a fig7b fig7c"
    )


def config_hash(config: ScenarioConfig) -> str:
    return hashlib.sha256(repr(config).encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _report_row(report: MetricsReport) -> str:
    cfg = report.config
    fields = (
        config_hash(cfg), cfg.mac_algorithm, cfg.num_sus, cfg.channels.num_available,
        cfg.traffic.mean_arrival_interval, cfg.traffic.packet_size_min,
        cfg.traffic.packet_size_max, cfg.traffic.sensing_window,
        report.efficiency, report.efficiency_ci95, report.e_upper,
        report.counts["collision_channel_slots"], report.counts["false_alarms"],
        report.counts["miss_detections"], cfg.seed,
    )
    return ",".join(_fmt(f) for f in fields)


def _write(out_dir: str, name: str, lines: Sequence[str]) -> Path:
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_simulate(manifest: RunManifest) -> int:
    doc = load_document(manifest)
    config = build_scenario(doc)
    if manifest.event_log:
        _write_event_log(config, manifest.event_log)
    report = engine.run(config, jobs=manifest.jobs)
    path = _write(manifest.out_dir, "simulate.csv", [SWEEP_CSV_HEADER, _report_row(report)])
    print(f"algorithm={config.mac_algorithm} M={config.num_sus} "
          f"N={config.channels.num_available} lambda={config.traffic.mean_arrival_interval}")
    print(f"efficiency = {report.efficiency:.6f} +- {report.efficiency_ci95:.6f} (95% CI, "
          f"{config.replications} replications); upper bound {report.e_upper:.6f}")
    print(f"collision channel-slots = {report.counts['collision_channel_slots']}, "
          f"delivered packets = {report.counts['delivered_packets']}, "
          f"collided packets = {report.counts['collided_packets']}")
    print(f"wrote {path}")
    return EXIT_OK


def _write_event_log(config: ScenarioConfig, path: str) -> None:
    lines = ["slot,su,event,detail"]
    engine.run_replication(
        config, 0,
        trace=lambda slot, su, event, detail: lines.append(f"{slot},{su},{event},{detail}"),
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"wrote event log for replication 0 to {path}")


def cmd_sweep(manifest: RunManifest) -> int:
    doc = load_document(manifest)
    section = doc.get("sweep")
    if not section:
        raise ConfigurationError("sweep requires a 'sweep' section (or a --preset)")
    _check_keys(section, _SWEEP_KEYS, "sweep")
    parameter = section.get("parameter")
    values = section.get("values")
    if not parameter or not values:
        raise ConfigurationError("sweep section needs 'parameter' and 'values'")
    base = build_scenario(doc)
    algorithms = section.get("algorithms") or [base.mac_algorithm]
    if parameter == "mac_algorithm":
        algorithms = [base.mac_algorithm]

    reports: list[MetricsReport] = []
    for algorithm in algorithms:
        start = engine.apply_parameter(base, "mac_algorithm", algorithm)
        reports.extend(engine.sweep(start, parameter, values, jobs=manifest.jobs))

    def sort_key(report: MetricsReport):
        cfg = report.config
        value = getattr(cfg, parameter, None)
        if value is None:
            value = getattr(cfg.traffic, parameter, 0)
        return (str(type(value)), value, cfg.mac_algorithm)

    reports.sort(key=sort_key)
    lines = [SWEEP_CSV_HEADER] + [_report_row(r) for r in reports]
    path = _write(manifest.out_dir, "sweep.csv", lines)
    print(f"swept {parameter} over {len(values)} value(s) x {len(algorithms)} algorithm(s)")
    print(f"wrote {path}")
    return EXIT_OK


def _analyze_rows(m_range: tuple[int, int], n_range: tuple[int, int],
                  grid_step: float) -> tuple[list[str], int]:
    rows: list[str] = []
    failures = 0

    def row(check, m, n, l, observed, expected, delta, passed, note="") -> None:
        nonlocal failures
        if passed is False:
            failures += 1
        rows.append(",".join(_fmt(v) for v in (check, m, n, l, observed, expected, delta, passed, note)))

    for m in range(m_range[0], m_range[1] + 1):
        for n in range(n_range[0], n_range[1] + 1):
            rep = analysis.verify_theorem1(m, n, grid_step)
            row("theorem1_argmax", m, n, None, rep.argmax_p, rep.expected_p,
                rep.argmax_p - rep.expected_p, abs(rep.argmax_p - rep.expected_p) <= grid_step)
            row("theorem1_value", m, n, None, rep.max_value, rep.expected_value,
                rep.max_value - rep.expected_value,
                abs(rep.max_value - rep.expected_value) <= 1e-9)

    for m in range(max(2, m_range[0]), m_range[1] + 1):
        for n in range(n_range[0], n_range[1] + 1):
            if m > n:
                row("theorem2", m, n, None, None, None, None, None,
                    "skipped: requires users <= channels")
                continue
            rep2 = analysis.verify_theorem2(m, n)
            for gap in rep2.gaps:
                ok = gap.gap >= -analysis.EQUALITY_TOL and (
                    abs(gap.gap) < analysis.EQUALITY_TOL if gap.holders <= 1
                    else gap.gap > analysis.EQUALITY_TOL)
                row("theorem2", m, n, gap.holders, gap.with_rerendezvous,
                    gap.all_random, gap.gap, ok)
            for gap in rep2.gaps:
                printed = analysis.rerendezvous_expected_successes_printed(m, n, gap.holders)
                corrected = analysis.rerendezvous_expected_successes(m, n, gap.holders)
                row("gap_formula_printed_vs_corrected", m, n, gap.holders,
                    printed, corrected, printed - corrected, None, "informational")
            if n >= 2:
                z0 = analysis.appendix_f(m, n, 0.0)
                z1 = analysis.appendix_f(m, n, 1.0)
                row("gap_function_zeros", m, n, None, max(abs(z0), abs(z1)), 0.0,
                    max(abs(z0), abs(z1)), max(abs(z0), abs(z1)) < 1e-12)
                worst_fd = 0.0
                min_curvature = math.inf
                step = 1e-6
                for l_times_4 in range(0, 4 * m + 1):
                    l = l_times_4 / 4.0
                    fd1 = (analysis.appendix_f(m, n, l + step)
                           - analysis.appendix_f(m, n, l - step)) / (2 * step)
                    # second derivative checked against the difference of the
                    # exact first derivative: a double difference of f itself
                    # at this step size is dominated by rounding noise
                    fd2 = (analysis.appendix_f_prime(m, n, l + step)
                           - analysis.appendix_f_prime(m, n, l - step)) / (2 * step)
                    worst_fd = max(worst_fd,
                                   abs(fd1 - analysis.appendix_f_prime(m, n, l)),
                                   abs(fd2 - analysis.appendix_f_double_prime(m, n, l)))
                    if l >= 1.0:
                        min_curvature = min(
                            min_curvature, analysis.appendix_f_double_prime(m, n, l))
                row("gap_function_derivatives", m, n, None, worst_fd, 0.0, worst_fd,
                    worst_fd < 1e-4)
                row("gap_function_convexity", m, n, None, min_curvature, 0.0,
                    min_curvature, min_curvature > 0.0)
    return rows, failures


def cmd_analyze(manifest: RunManifest) -> int:
    doc: dict = {}
    if manifest.config_path or manifest.preset:
        doc = load_document(manifest)
    section = doc.get("analyze") or {}
    _check_keys(section, _ANALYZE_KEYS, "analyze")
    m_range = tuple(section.get("m_range", (2, 6)))
    n_range = tuple(section.get("n_range", (1, 6)))
    grid_step = float(section.get("grid_step", 1e-3))
    if len(m_range) != 2 or len(n_range) != 2 or m_range[0] > m_range[1] or n_range[0] > n_range[1]:
        raise ConfigurationError("m_range and n_range must be [lo, hi] with lo <= hi")
    rows, failures = _analyze_rows((int(m_range[0]), int(m_range[1])),
                                   (int(n_range[0]), int(n_range[1])), grid_step)
    path = _write(manifest.out_dir, "analysis.csv", [ANALYZE_CSV_HEADER] + rows)
    checked = sum(1 for r in rows if r.split(",")[7] in ("true", "false"))
    print(f"analyze: M in {list(m_range)}, N in {list(n_range)}: "
          f"{checked} checks, {failures} failure(s)")
    print(f"wrote {path}")
    if failures:
        print("FAILED", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sense_curves(manifest: RunManifest) -> int:
    doc: dict = {}
    if manifest.config_path or manifest.preset:
        doc = load_document(manifest)
    section = doc.get("sense_curves") or {}
    _check_keys(section, _SENSE_KEYS, "sense_curves")
    model = build_sensing(doc.get("sensing") or {"model": "energy"})
    if not isinstance(model, sensing.EnergyDetectorSensing):
        raise ConfigurationError("sense-curves requires the energy sensing model")
    tnr = section.get("tnr_db")
    if tnr is None:
        tnr = [float(x) for x in range(-2, 42)]
    if not isinstance(tnr, (list, tuple)) or not tnr:
        raise ConfigurationError("sense_curves.tnr_db must be a non-empty list")
    k_values = section.get("k_values", [1, 2, 5, 10])
    trials = int(section.get("trials", 10_000))
    if trials < 1_000:
        print(f"warning: {trials} trials is below the recommended minimum of 1000",
              file=sys.stderr)
    seed = int(doc.get("seed", 1))
    lines = [SENSE_CSV_HEADER]
    for k in k_values:
        model_k = replace(model, averaging_depth=int(k))
        rng = engine.derive_rng(seed, 9001, int(k))
        for point in sensing.detection_curves(model_k, tuple(float(t) for t in tnr),
                                              trials, rng):
            lines.append(",".join(_fmt(v) for v in (
                point.tnr_db, point.scenario, point.trials,
                point.p_false_alarm, point.p_miss, point.averaging_depth)))
    path = _write(manifest.out_dir, "sense_curves.csv", lines)
    print(f"sense-curves: {len(k_values)} averaging depth(s) x {len(tnr)} thresholds "
          f"x {len(sensing.DETECTION_SCENARIOS)} scenarios, {trials} trials each")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcshare",
        description="Slotted multichannel spectrum sharing simulator",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, helptext in (
        ("simulate", "run one scenario and report its efficiency"),
        ("sweep", "run a parameter sweep (optionally from a figure preset)"),
        ("analyze", "verify the slot-level optimality and dominance results"),
        ("sense-curves", "tabulate energy-detector operating curves"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry; repeatable; dotted keys allowed")
        p.add_argument("--preset", help="named preset (fig6a..fig6c, fig7a..fig7c)")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for replications (default: 1)")
        if name == "simulate":
            p.add_argument("--event-log", help="write a per-event debug log for replication 0")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
    "sense-curves": cmd_sense_curves,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    manifest = RunManifest(
        subcommand=args.subcommand,
        config_path=args.config,
        out_dir=args.out,
        overrides=tuple(args.override),
        preset=args.preset,
        jobs=args.jobs,
        event_log=getattr(args, "event_log", None),
    )
    try:
        return _COMMANDS[manifest.subcommand](manifest)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
