"""Acceptance suite: one test per criterion, each at its stated tolerance.

Campaign scale defaults to 20 drops of 2 s per configuration. For a quicker
look set ``HBFSIM_ACCEPT_RUNS`` and/or ``HBFSIM_ACCEPT_DURATION`` (seconds);
``HBFSIM_ACCEPT_WORKERS`` sets the number of worker processes. Runs shared
between presets are simulated once per session.
"""

import filecmp
import os

import numpy as np
import pytest

from conftest import record_criterion
from hbfsim.beamforming import FeedbackBudget, feedback_bits, mmse_precoder
from hbfsim.presets import preset_configs, replay, run_campaign, run_preset, seeds
from hbfsim.scheduler import DIRECTIONS

RUNS = int(os.environ.get("HBFSIM_ACCEPT_RUNS", "20"))
DURATION = float(os.environ.get("HBFSIM_ACCEPT_DURATION", "2.0"))
WORKERS = int(os.environ.get("HBFSIM_ACCEPT_WORKERS", str(os.cpu_count() or 1)))
BASE_SEED = 1
SLOT = 250e-6

_cache: dict = {}


def campaign(preset: str) -> dict:
    """config name -> list of MetricsReport for ``preset`` at the acceptance scale."""
    configs = preset_configs(preset, duration_s=DURATION)
    todo = []
    for c in configs:
        for s in seeds(BASE_SEED, RUNS):
            key = (c.scenario.config_hash(), s)
            if key not in _cache and key not in {k for k, _ in todo}:
                todo.append((key, c.scenario.with_seed(s)))
    for (key, _), rep in zip(todo, run_campaign([sc for _, sc in todo], WORKERS)):
        _cache[key] = rep
    return {c.name: [_cache[(c.scenario.config_hash(), s)] for s in seeds(BASE_SEED, RUNS)] for c in configs}


def pooled(reports, attr, direction=None):
    dirs = DIRECTIONS if direction is None else (direction,)
    return np.concatenate([getattr(r, attr)[d] for r in reports for d in dirs])


def mean_throughput(reports, direction):
    return float(np.mean([r.throughput[d] for r in reports for d in (direction,)]))


def check(number, parts):
    """``parts`` is a list of (ok, text); records the criterion line and asserts."""
    ok = all(p for p, _ in parts)
    record_criterion(number, ok, "; ".join(f"{'ok' if p else 'NOT'} {t}" for p, t in parts))
    assert ok, "; ".join(t for p, t in parts if not p)


# 1 ---------------------------------------------------------------------------


def test_criterion_01_mmse_limits():
    rng = np.random.default_rng(2024)
    worst_zf = worst_angle = 0.0
    for _ in range(200):
        H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        V = mmse_precoder(H, 0.0).matrix
        worst_zf = max(worst_zf, np.abs(H @ V - np.eye(4)).sum(axis=1).max())
        sigma = 1e6 * np.linalg.norm(H, 2) ** 2
        V = mmse_precoder(H, sigma).matrix
        Hh = H.conj().T
        for u in range(4):
            c = abs(np.vdot(V[:, u], Hh[:, u])) / (np.linalg.norm(V[:, u]) * np.linalg.norm(Hh[:, u]))
            worst_angle = max(worst_angle, float(np.arccos(min(c, 1.0))))
    check(1, [(worst_zf < 1e-9, f"max ||HV-I||_inf = {worst_zf:.2e} < 1e-9"),
              (worst_angle < 1e-3, f"max matched-filter angle = {worst_angle:.2e} rad < 1e-3")])


# 2-4 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def bf():
    return campaign("bf-comparison")


def test_criterion_02_smbf_matches_single_layer(bf):
    parts = []
    for d in DIRECTIONS:
        ref = pooled(bf["1L-CBF"], "sinr_db", d)
        smbf = pooled(bf["4L-SMBF"], "sinr_db", d)
        for q in (10, 50, 90):
            a, b = np.percentile(smbf, q), np.percentile(ref, q)
            parts.append((abs(a - b) <= 1.0, f"{d} p{q} SMBF-4 {a:.1f} vs 1-layer {b:.1f} dB"))
    check(2, parts)


def test_criterion_03_bf_ordering(bf):
    parts = []
    order = ("4L-GBF", "4L-CBF", "4L-FMBF", "4L-SMBF")
    for d in DIRECTIONS:
        med = {k: float(np.median(pooled(bf[k], "sinr_db", d))) for k in order}
        ok = all(med[a] <= med[b] for a, b in zip(order, order[1:]))
        parts.append((ok, f"{d} medians " + " <= ".join(f"{med[k]:.1f}" for k in order)))
        if d == "UL":
            gap = med["4L-SMBF"] - med["4L-CBF"]
            parts.append((gap >= 5.0, f"UL SMBF-CBF {gap:.1f} dB >= 5"))
    cbf_low = float(np.mean(pooled(bf["4L-CBF"], "sinr_db", "UL") < -10))
    smbf_low = float(np.mean(pooled(bf["4L-SMBF"], "sinr_db", "UL") < -10))
    parts.append((cbf_low >= 0.05, f"CBF-4 UL below -10 dB {cbf_low:.3f} >= 0.05"))
    parts.append((smbf_low < 0.01, f"SMBF-4 UL below -10 dB {smbf_low:.3f} < 0.01"))
    check(3, parts)


def test_criterion_04_bler_step_shape(bf):
    parts = []
    for name, reps in bf.items():
        b = pooled(reps, "bler")
        frac = float(np.mean((b <= 1e-2) | (b >= 0.9)))
        parts.append((frac >= 0.9, f"{name} step fraction {frac:.3f}"))
    order = ("4L-GBF", "4L-CBF", "4L-FMBF", "4L-SMBF")
    out = {k: float(np.mean(pooled(bf[k], "bler") >= 0.9)) for k in order}
    ok = all(out[a] > out[b] for a, b in zip(order, order[1:]))
    parts.append((ok, "outage " + " > ".join(f"{out[k]:.4f}" for k in order)))
    check(4, parts)


# 5-7 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sched():
    return campaign("sched-comparison")


def test_criterion_05_scheduler_throughput(sched):
    tot = {k: sum(mean_throughput(v, d) for d in DIRECTIONS) for k, v in sched.items()}
    ratio = tot["PMRS-4"] / tot["TMRS-1"]
    parts = [(ratio >= 1.5, f"PMRS-4/TMRS-1 = {ratio:.2f} >= 1.5")]
    for d in DIRECTIONS:
        thr = mean_throughput(sched["TMRS-1"], d)
        off = float(np.mean([r.offered[d] for r in sched["TMRS-1"]]))
        parts.append((thr < off, f"TMRS-1 {d} {thr / 1e6:.0f} < offered {off / 1e6:.0f} Mbps"))
    a, p = mean_throughput(sched["AMRS-4"], "UL"), mean_throughput(sched["PMRS-4"], "UL")
    parts.append((a < p, f"AMRS-4 UL {a / 1e6:.0f} < PMRS-4 UL {p / 1e6:.0f} Mbps"))
    check(5, parts)


def test_criterion_06_structural_invariants(bf, sched):
    keys = ("layer_overlap", "pmrs_unaligned", "pmrs_fallback", "amrs_padding", "amrs_gap", "rr_fairness")
    extra = {**campaign("delay-retx"), **campaign("apps")}
    totals = dict.fromkeys(keys, 0)
    n_runs = 0
    for group in (bf, sched, extra):
        for reps in group.values():
            for r in reps:
                n_runs += 1
                for k in keys:
                    totals[k] += r.violations[k]
    check(6, [(v == 0, f"{k} {v}") for k, v in totals.items()] + [(n_runs > 0, f"{n_runs} runs")])


def _cdf_at(x, t):
    return float(np.mean(x <= t)) if len(x) else 0.0


def test_criterion_07_delay_shape(sched):
    parts = []
    for d in DIRECTIONS:
        x = pooled(sched["PMRS-4"], "delay", d)
        c20, c100 = _cdf_at(x, 20e-3), _cdf_at(x, 100e-3)
        parts.append((c20 >= 0.75, f"PMRS-4 {d} F(20ms) {c20:.2f} >= 0.75"))
        parts.append((c100 >= 0.90, f"PMRS-4 {d} F(100ms) {c100:.2f} >= 0.90"))
        for one in ("TMRS-1", "PMRS-1"):
            c = _cdf_at(pooled(sched[one], "delay", d), 20e-3)
            parts.append((c < 0.5, f"{one} {d} F(20ms) {c:.2f} < 0.5"))
    check(7, parts)


# 8 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def retx():
    return campaign("delay-retx")


def test_criterion_08_retransmissions(retx):
    parts = []
    four = ("PMRS-4-UM-noHARQ", "PMRS-4-UM-HARQ", "PMRS-4-AM-noHARQ", "PMRS-4-AM-HARQ")
    for d in DIRECTIONS:
        p80 = {k: float(np.percentile(pooled(retx[k], "delay", d), 80)) for k in four}
        best = min(p80, key=p80.get)
        parts.append((best == "PMRS-4-UM-HARQ",
                      f"{d} p80 lowest {best} (" + ", ".join(f"{k[7:]} {v * 1e3:.1f}" for k, v in p80.items()) + " ms)"))
    am = pooled(retx["PMRS-4-AM-noHARQ"], "delay")
    um = pooled(retx["PMRS-4-UM-HARQ"], "delay")
    levels = np.linspace(0.5, 0.99, 50)
    shift = float(np.max(np.quantile(am, levels) - np.quantile(um, levels)))
    parts.append((shift >= 10e-3, f"AM-noHARQ quantile shift over UM+HARQ {shift * 1e3:.1f} ms >= 10"))
    lat = np.concatenate([r.harq_latency for k, v in retx.items() if "-HARQ" in k for r in v]
                         + [r.harq_latency for v in campaign("apps").values() for r in v])
    late = sum(r.violations["harq_latency"] for v in retx.values() for r in v)
    parts.append((len(lat) > 0 and float(lat.max()) <= SLOT + 1e-12 and late == 0,
                  f"{len(lat)} HARQ retransmissions, max latency {lat.max() * 1e6 if len(lat) else 0:.0f} us, "
                  f"{late} missed the next slot"))
    check(8, parts)


# 9 ---------------------------------------------------------------------------


def test_criterion_09_adaptive_and_slow_traffic():
    apps = campaign("apps")
    thr = {(k, d): mean_throughput(v, d) for k, v in apps.items() for d in DIRECTIONS}
    a = lambda s, d: thr[(f"adaptive-{s}", d)]  # noqa: E731
    parts = [
        (a("PMRS-4", "UL") > a("TMRS-1", "UL") > a("AMRS-4", "UL"),
         f"adaptive UL PMRS-4 {a('PMRS-4', 'UL') / 1e6:.0f} > TMRS-1 {a('TMRS-1', 'UL') / 1e6:.0f} "
         f"> AMRS-4 {a('AMRS-4', 'UL') / 1e6:.0f} Mbps"),
        (min(a("PMRS-4", "DL"), a("AMRS-4", "DL")) > a("TMRS-1", "DL"),
         f"adaptive DL PMRS-4 {a('PMRS-4', 'DL') / 1e6:.0f}, AMRS-4 {a('AMRS-4', 'DL') / 1e6:.0f} "
         f"> TMRS-1 {a('TMRS-1', 'DL') / 1e6:.0f} Mbps"),
    ]
    for s in ("TMRS-1", "PMRS-4", "AMRS-4"):
        for d in DIRECTIONS:
            m = float(np.mean(pooled(apps[f"adaptive-{s}"], "delay", d)))
            parts.append((m < 50e-3, f"adaptive {s} {d} mean delay {m * 1e3:.1f} ms < 50"))
            t = thr[(f"udp-slow-{s}", d)]
            parts.append((t >= 0.99 * 56e6, f"udp-slow {s} {d} {t / 1e6:.2f} >= 55.44 Mbps"))
    check(9, parts)


# 10-11 -----------------------------------------------------------------------


def test_criterion_10_feedback_bits():
    got = (feedback_bits(FeedbackBudget(32, 4, 3300), "FMBF"), feedback_bits(FeedbackBudget(3, 4, 3300), "FMBF"),
           feedback_bits(FeedbackBudget(3, 4, 100), "SMBF"))
    check(10, [(got == (1024, 96, 9600), f"feedback bits {got} == (1024, 96, 9600)")])


def test_criterion_11_manifest_replay(tmp_path):
    # a short sched-comparison keeps the replay cheap; every preset shares the same writer
    first = run_preset("sched-comparison", runs=2, out=tmp_path / "a", base_seed=7, duration_s=0.15,
                       warmup_s=0.05, workers=WORKERS)
    replay(first.bundle.manifest, tmp_path / "b", workers=WORKERS)
    names = [p.relative_to(tmp_path / "a") for p in sorted((tmp_path / "a").rglob("*.csv"))]
    same = [filecmp.cmp(tmp_path / "a" / n, tmp_path / "b" / n, shallow=False) for n in names]
    check(11, [(len(names) > 0 and all(same), f"{sum(same)}/{len(names)} CSV files byte-identical on replay")])
