"""Command line: ``simulate``, ``preset``, ``replay`` and ``validate``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import yaml

from .channel import ChannelParams
from .engine import ADAPTIVE, UDP_FAST, UDP_SLOW, ConfigError, RadioConfig, Scenario, TrafficProfile, run
from .presets import DEFAULT_CDF_POINTS, PRESETS, replay, run_preset, write_bundle
from .presets import PresetConfig

log = logging.getLogger("hbfsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

TRAFFIC_NAMES = {"udp-slow": UDP_SLOW, "udp-fast": UDP_FAST, "adaptive": ADAPTIVE}
# keys of the scenario document that are not scenario fields
DOCUMENT_KEYS = {"out", "preset", "name"}


class ParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _build(cls, data, prefix: str):
    """Dataclass from a mapping, rejecting unknown keys; lists become tuples."""
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'document'} must be a mapping", [prefix])
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        keys = [f"{prefix}{k}" for k in unknown]
        raise ConfigError(f"unknown key(s): {', '.join(keys)}", keys)
    kw = {}
    for k, v in data.items():
        kw[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'document'}: {exc}", [prefix.rstrip(".")]) from exc


def scenario_from_mapping(doc: dict | None) -> tuple[Scenario, dict]:
    """Validated :class:`Scenario` plus the document-level extras (out, preset, name)."""
    doc = dict(doc or {})
    extras = {k: doc.pop(k) for k in list(doc) if k in DOCUMENT_KEYS}
    nested = {}
    t = doc.pop("traffic", None)
    if isinstance(t, str):
        if t not in TRAFFIC_NAMES:
            raise ConfigError(f"traffic must be one of {', '.join(TRAFFIC_NAMES)} or a mapping (got {t!r})", ["traffic"])
        nested["traffic"] = TRAFFIC_NAMES[t]
    elif t is not None:
        nested["traffic"] = _build(TrafficProfile, t, "traffic.")
    if "radio" in doc:
        nested["radio"] = _build(RadioConfig, doc.pop("radio"), "radio.")
    if "channel" in doc:
        nested["channel"] = _build(ChannelParams, doc.pop("channel"), "channel.")
    sc = _build(Scenario, doc, "")
    sc = dataclasses.replace(sc, **nested)
    return sc.validate(), extras


def parse_scenario_text(text: str) -> tuple[Scenario, dict]:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"cannot parse scenario: {problem}", line) from exc
    if doc is not None and not isinstance(doc, dict):
        raise ParseError("scenario document must be a mapping of keys to values", 1)
    return scenario_from_mapping(doc)


def parse_scenario(path) -> Scenario:
    return parse_scenario_text(Path(path).read_text())[0]


def _cmd_validate(args) -> int:
    sc, _ = parse_scenario_text(Path(args.file).read_text())
    print(f"ok {sc.config_hash()}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    sc, extras = parse_scenario_text(Path(args.file).read_text())
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    out = args.out or extras.get("out")
    name = str(extras.get("name", "scenario"))
    report = run(sc)
    tp = ", ".join(f"{d} {report.throughput[d] / 1e6:.1f} Mbps" for d in report.throughput)
    print(f"seed {sc.seed} hash {sc.config_hash()}: {tp}")
    if out:
        cfg = PresetConfig(name, sc)
        bundle = write_bundle(out, "simulate", [cfg], {name: [report]}, 1, sc.seed, args.cdf_points)
        print(f"wrote {bundle.directory}")
    return EXIT_OK


def _cmd_preset(args) -> int:
    res = run_preset(args.name, args.runs, args.out, args.seed, args.duration, None, args.workers, args.cdf_points)
    for c in res.configs:
        reps = res.reports[c.name]
        tp = {d: sum(r.throughput[d] for r in reps) / len(reps) / 1e6 for d in ("DL", "UL")}
        print(f"{c.name:24s} DL {tp['DL']:8.1f} Mbps  UL {tp['UL']:8.1f} Mbps")
    if res.bundle:
        print(f"wrote {res.bundle.directory}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    res = replay(args.manifest, args.out, args.workers)
    print(f"replayed {res.name} into {res.bundle.directory}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hbfsim", description="Single-cell mmWave hybrid beamforming simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario file")
    s.add_argument("file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--cdf-points", type=int, default=DEFAULT_CDF_POINTS, help="max rows per CDF file (0 = all)")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("preset", help="run an experiment preset")
    s.add_argument("name", choices=sorted(PRESETS))
    s.add_argument("--runs", type=int)
    s.add_argument("--out")
    s.add_argument("--seed", type=int, default=1, help="seed of the first run; run r uses seed + r")
    s.add_argument("--duration", type=float, help="simulated seconds per run")
    s.add_argument("--workers", type=int, help="parallel processes (default: CPU count)")
    s.add_argument("--cdf-points", type=int, default=DEFAULT_CDF_POINTS, help="max rows per CDF file (0 = all)")
    s.set_defaults(func=_cmd_preset)

    s = sub.add_parser("replay", help="re-run a preset from its manifest")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=_cmd_replay)

    s = sub.add_parser("validate", help="check a scenario file")
    s.add_argument("file")
    s.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        fields = f" [{', '.join(exc.fields)}]" if exc.fields and not isinstance(exc, ParseError) else ""
        print(f"config error: {exc}{fields}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        if isinstance(exc, FileNotFoundError) and getattr(args, "file", None) == exc.filename:
            print(f"config error: cannot read {exc.filename}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any failure inside a run is a runtime error
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
