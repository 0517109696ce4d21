"""Experiment presets: configuration matrices, campaign execution and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import ADAPTIVE, UDP_FAST, UDP_SLOW, MetricsReport, Scenario, aggregate, run, version
from .scheduler import DIRECTIONS

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_CDF_POINTS = 2000


@dataclass(frozen=True)
class PresetConfig:
    name: str
    scenario: Scenario


def _cfg(name, **kw) -> PresetConfig:
    return PresetConfig(name, Scenario(**kw))


def _bf_comparison():
    # one-layer references run on the single-layer scheduler; MMSE needs more than one layer to matter
    out = [_cfg(f"1L-{bf}", scheduler="TMRS", n_layers=1, bf_scheme=bf, traffic=UDP_SLOW) for bf in ("GBF", "CBF")]
    out += [_cfg(f"4L-{bf}", scheduler="PMRS", n_layers=4, bf_scheme=bf, traffic=UDP_SLOW)
            for bf in ("GBF", "CBF", "FMBF", "SMBF")]
    return out


_SCHEDULERS = (
    ("TMRS-1", dict(scheduler="TMRS", n_layers=1, bf_scheme="CBF")),
    ("PMRS-4", dict(scheduler="PMRS", n_layers=4, bf_scheme="SMBF")),
    ("AMRS-4", dict(scheduler="AMRS", n_layers=4, bf_scheme="SMBF")),
)
_RETX = {"none": dict(rlc_mode="UM", harq=False), "full": dict(rlc_mode="AM", harq=True)}


def _sched_comparison():
    return [
        _cfg("TMRS-1", scheduler="TMRS", n_layers=1, bf_scheme="CBF", traffic=UDP_FAST),
        _cfg("PMRS-1", scheduler="PMRS", n_layers=1, bf_scheme="CBF", traffic=UDP_FAST),
        _cfg("PMRS-4", scheduler="PMRS", n_layers=4, bf_scheme="SMBF", traffic=UDP_FAST),
        _cfg("AMRS-4", scheduler="AMRS", n_layers=4, bf_scheme="SMBF", traffic=UDP_FAST),
    ]


def _delay_retx():
    out = []
    for sname, s in _SCHEDULERS[:2]:
        for mode in ("UM", "AM"):
            for harq in (False, True):
                name = f"{sname}-{mode}-{'HARQ' if harq else 'noHARQ'}"
                out.append(_cfg(name, traffic=UDP_FAST, rlc_mode=mode, harq=harq, **s))
    return out


def _throughput_delay():
    return [_cfg(f"{sname}-{rname}", traffic=UDP_FAST, **s, **r) for sname, s in _SCHEDULERS for rname, r in _RETX.items()]


def _apps():
    apps = (("udp-slow", UDP_SLOW), ("udp-fast", UDP_FAST), ("adaptive", ADAPTIVE))
    return [_cfg(f"{aname}-{sname}", traffic=t, **s, **_RETX["full"]) for aname, t in apps for sname, s in _SCHEDULERS]


PRESETS = {
    "bf-comparison": _bf_comparison,
    "sched-comparison": _sched_comparison,
    "delay-retx": _delay_retx,
    "throughput-delay": _throughput_delay,
    "apps": _apps,
}


def preset_configs(name: str, duration_s: float | None = None, warmup_s: float | None = None) -> list[PresetConfig]:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    out = PRESETS[name]()
    over = {}
    if duration_s is not None:
        over["duration_s"] = duration_s
    if warmup_s is not None:
        over["warmup_s"] = warmup_s
    if over:
        out = [PresetConfig(c.name, dataclasses.replace(c.scenario, **over)) for c in out]
    return out


def seeds(base_seed: int, runs: int) -> list[int]:
    return [base_seed + r for r in range(runs)]


def _run_one(scenario: Scenario) -> MetricsReport:
    return run(scenario)


def run_campaign(scenarios: list[Scenario], workers: int | None = None) -> list[MetricsReport]:
    """Run independent scenarios, returning reports in input order."""
    workers = workers or 1
    if workers <= 1 or len(scenarios) <= 1:
        return [run(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, scenarios, chunksize=1))


# -- output --------------------------------------------------------------------


def fmt(x) -> str:
    """Decimal text with 9 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def cdf_rows(samples, max_points: int | None = None) -> list[tuple[float, float]]:
    """(value, (i+1)/N) pairs of the sorted sample, optionally thinned to ``max_points`` rows.

    Thinning keeps exact rows of the full empirical CDF, evenly spaced in rank and
    always including the last one.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        return []
    idx = np.arange(n)
    if max_points and n > max_points:
        idx = np.unique(np.round(np.linspace(0, n - 1, max_points)).astype(int))
    return [(float(x[i]), (i + 1) / n) for i in idx]


def emit_cdf(samples, path, max_points: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "cdf"])
        for v, c in cdf_rows(samples, max_points):
            w.writerow([fmt(v), fmt(c)])
    return path


def _pct(x, q):
    return float(np.percentile(x, q)) if len(x) else float("nan")


METRIC_COLUMNS = ["config", "run", "seed", "config_hash"] + [
    f"{m}_{d}" for d in DIRECTIONS for m in (
        "throughput_mbps", "offered_mbps", "delay_mean_ms", "delay_p80_ms", "delivered", "sinr_p50_db", "bler_mean",
        "outage_fraction", "tb_error_rate")
] + ["padding_ratio", "harq_retx", "generated", "dropped", "in_system", "fallback_allocations"]


def metrics_row(name: str, run_index: int, r: MetricsReport) -> list:
    row = [name, run_index, r.seed, r.config_hash]
    for d in DIRECTIONS:
        delay = r.delay[d]
        bler = r.bler[d]
        row += [
            r.throughput[d] / 1e6,
            r.offered[d] / 1e6,
            float(delay.mean()) * 1e3 if len(delay) else float("nan"),
            _pct(delay, 80) * 1e3,
            len(delay),
            _pct(r.sinr_db[d], 50),
            float(bler.mean()) if len(bler) else float("nan"),
            float(np.mean(bler >= 0.9)) if len(bler) else float("nan"),
            float(1.0 - r.tb_ok[d].mean()) if len(r.tb_ok[d]) else float("nan"),
        ]
    c = r.counters
    row += [r.padding_ratio, c.get("harq_retx", 0), c.get("generated", 0), c.get("dropped", 0), c.get("in_system", 0),
            c.get("fallback_allocations", 0)]
    return row


SUMMARY_COLUMNS = ["config", "runs", "config_hash"] + [
    f"{m}_{d}" for d in DIRECTIONS for m in (
        "throughput_mbps", "throughput_se_mbps", "offered_mbps", "delay_mean_ms", "delay_se_ms", "delay_p50_ms",
        "delay_p80_ms", "sinr_p10_db", "sinr_p50_db", "sinr_p90_db", "bler_mean", "outage_fraction")
] + ["padding_ratio", "harq_retx"] + [f"violations_{k}" for k in (
    "layer_overlap", "pmrs_unaligned", "pmrs_fallback", "amrs_padding", "amrs_gap", "rr_fairness", "harq_latency")]


def summary_row(name: str, reports: list[MetricsReport]) -> list:
    s = aggregate(reports)
    row = [name, s.runs, s.config_hash]
    for d in DIRECTIONS:
        delay = s.delay[d]
        sinr = s.sinr_db[d]
        bler = s.bler[d]
        row += [
            s.throughput_mean[d] / 1e6, s.throughput_se[d] / 1e6, s.offered_mean[d] / 1e6,
            s.delay_mean[d] * 1e3, s.delay_se[d] * 1e3, _pct(delay, 50) * 1e3, _pct(delay, 80) * 1e3,
            _pct(sinr, 10), _pct(sinr, 50), _pct(sinr, 90),
            float(bler.mean()) if len(bler) else float("nan"),
            float(np.mean(bler >= 0.9)) if len(bler) else float("nan"),
        ]
    row += [s.padding_ratio, s.counters.get("harq_retx", 0)]
    row += [s.violations.get(k, 0) for k in (
        "layer_overlap", "pmrs_unaligned", "pmrs_fallback", "amrs_padding", "amrs_gap", "rr_fairness", "harq_latency")]
    return row


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in r])


CDF_METRICS = (("sinr", "sinr_db"), ("bler", "bler"), ("delay", "delay"))


@dataclass
class OutputBundle:
    directory: Path
    metrics: Path
    summary: Path
    manifest: Path
    cdfs: list[Path] = field(default_factory=list)


@dataclass
class PresetResult:
    name: str
    configs: list[PresetConfig]
    reports: dict  # config name -> list of MetricsReport
    bundle: OutputBundle | None = None


def write_bundle(out, preset: str, configs, reports: dict, runs: int, base_seed: int,
                 cdf_points: int | None = DEFAULT_CDF_POINTS, duration_s=None, warmup_s=None) -> OutputBundle:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    metrics = out / "metrics.csv"
    _write_csv(metrics, METRIC_COLUMNS,
               [metrics_row(c.name, i, r) for c in configs for i, r in enumerate(reports[c.name])])
    summary = out / "summary.csv"
    _write_csv(summary, SUMMARY_COLUMNS, [summary_row(c.name, reports[c.name]) for c in configs])
    cdfs = []
    for c in configs:
        s = aggregate(reports[c.name])
        for metric, attr in CDF_METRICS:
            for d in DIRECTIONS:
                cdfs.append(emit_cdf(getattr(s, attr)[d], out / c.name / f"cdf_{metric}_{d}.csv", cdf_points))
    manifest = out / "manifest.json"
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": version(),
        "preset": preset,
        "runs": runs,
        "base_seed": base_seed,
        "duration_s": duration_s,
        "warmup_s": warmup_s,
        "cdf_points": cdf_points,
        "configs": [
            {"name": c.name, "config_hash": c.scenario.config_hash(), "seeds": seeds(base_seed, runs),
             "scenario": c.scenario.to_dict()}
            for c in configs
        ],
    }
    manifest.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return OutputBundle(out, metrics, summary, manifest, cdfs)


def run_preset(name: str, runs: int | None = None, out=None, base_seed: int = 1, duration_s: float | None = None,
               warmup_s: float | None = None, workers: int | None = None,
               cdf_points: int | None = DEFAULT_CDF_POINTS) -> PresetResult:
    configs = preset_configs(name, duration_s, warmup_s)
    n_runs = runs if runs is not None else configs[0].scenario.runs
    if n_runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [c.scenario.with_seed(s) for c in configs for s in seeds(base_seed, n_runs)]
    log.info("preset %s: %d configs x %d runs", name, len(configs), n_runs)
    flat = run_campaign(jobs, workers if workers is not None else os.cpu_count())
    reports = {c.name: flat[i * n_runs : (i + 1) * n_runs] for i, c in enumerate(configs)}
    result = PresetResult(name, configs, reports)
    if out is not None:
        result.bundle = write_bundle(out, name, configs, reports, n_runs, base_seed, cdf_points, duration_s, warmup_s)
    return result


def replay(manifest_path, out, workers: int | None = None) -> PresetResult:
    """Re-run the preset recorded in a manifest; refuses if a config hash no longer matches."""
    doc = json.loads(Path(manifest_path).read_text())
    result = run_preset(doc["preset"], doc["runs"], out, doc["base_seed"], doc.get("duration_s"),
                        doc.get("warmup_s"), workers, doc.get("cdf_points"))
    recorded = {c["name"]: c["config_hash"] for c in doc["configs"]}
    current = {c.name: c.scenario.config_hash() for c in result.configs}
    if recorded != current:
        raise RuntimeError("configuration hashes differ from the manifest; the preset definitions have changed")
    return result
