"""Slot-synchronous simulation core: scenario, drops, the slot loop and metrics."""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .array_geometry import ArrayConfig, build_codebook, ue_codebook
from .beamforming import Scheme, cbf_select_projected, gbf_pair, mmse_precoder, normalized_weights
from .channel import ChannelParams, drop_link, evolve
from .phy import SLOT, BlerCurve, McsTable, PhyConfig, gap_threshold_db, select_mcs, transport_block_bits
from .rlc import RlcConfig, RlcEntity, RlcMode
from .scheduler import (
    DIRECTIONS,
    DL,
    UL,
    Demand,
    HarqAction,
    HarqProcess,
    HarqState,
    Scheduler,
    SchedulerKind,
    harq_on_feedback,
    overlap_components,
    requested_symbols,
)
from .traffic import AdaptiveSource, CbrSource, PacketFactory

# spawn-key tags of the named random substreams
STREAM_DROP = 0
STREAM_CHANNEL = 1
STREAM_TRAFFIC = 2
STREAM_TB = 3


class ConfigError(ValueError):
    """Invalid scenario; ``fields`` names the offending keys."""

    def __init__(self, message: str, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


@dataclass(frozen=True)
class TrafficProfile:
    type: str = "cbr"
    interval_us: float = 1500.0
    packet_bytes: int = 1500
    direction: str = "both"
    initial_window: float = 10.0
    max_window: float = 64.0

    @property
    def directions(self) -> tuple[str, ...]:
        return DIRECTIONS if self.direction == "both" else (self.direction,)


UDP_SLOW = TrafficProfile("cbr", 1500.0)
UDP_FAST = TrafficProfile("cbr", 150.0)
ADAPTIVE = TrafficProfile("adaptive")


@dataclass(frozen=True)
class RadioConfig:
    carrier_ghz: float = 28.0
    bandwidth_mhz: float = 198.0
    numerology: int = 2
    n_rb: int = 275
    bs_power_dbm: float = 30.0
    ue_power_dbm: float = 30.0
    noise_figure_db: float = 5.0
    bs_array: tuple[int, int] = (8, 8)
    ue_array: tuple[int, int] = (4, 4)
    phase_constant: float = math.pi / 2
    bs_codebook: tuple[int, int] = (16, 4)
    ue_codebook: tuple[int, int] = (8, 2)
    subcarrier_stride: int = 12
    gap_db: float = 3.0
    bler_transition_db: float = 2.0


@dataclass(frozen=True)
class Scenario:
    seed: int = 1
    ue_count: int = 7
    radius_m: float = 100.0
    min_distance_m: float = 10.0
    bs_height_m: float = 25.0
    ue_height_m: float = 1.6
    n_layers: int = 1
    bf_scheme: str = "CBF"
    scheduler: str = "TMRS"
    rlc_mode: str = "UM"
    harq: bool = False
    harq_max_attempts: int = 3
    reordering_ms: float = 10.0
    am_max_retx: int = 8
    traffic: TrafficProfile = UDP_SLOW
    duration_s: float = 2.0
    warmup_s: float = 0.1
    runs: int = 20
    cqi_delay_slots: int = 1
    radio: RadioConfig = RadioConfig()
    channel: ChannelParams = ChannelParams()

    def validate(self) -> "Scenario":
        problems = []

        def bad(msg, *names):
            problems.append((msg, names))

        if self.bf_scheme not in {s.value for s in Scheme}:
            bad(f"bf_scheme must be one of GBF, CBF, FMBF, SMBF (got {self.bf_scheme!r})", "bf_scheme")
        if self.scheduler not in {s.value for s in SchedulerKind}:
            bad(f"scheduler must be one of TMRS, PMRS, AMRS (got {self.scheduler!r})", "scheduler")
        if self.rlc_mode not in {m.value for m in RlcMode}:
            bad(f"rlc_mode must be UM or AM (got {self.rlc_mode!r})", "rlc_mode")
        if self.n_layers < 1:
            bad("n_layers must be >= 1", "n_layers")
        if self.scheduler == "TMRS" and self.n_layers != 1:
            bad("scheduler TMRS requires n_layers = 1", "scheduler", "n_layers")
        if self.ue_count < 0:
            bad("ue_count must be >= 0", "ue_count")
        if self.radius_m <= 0:
            bad("radius_m must be > 0", "radius_m")
        if not 0 <= self.min_distance_m < self.radius_m:
            bad("min_distance_m must lie in [0, radius_m)", "min_distance_m", "radius_m")
        if self.duration_s < 0 or self.warmup_s < 0:
            bad("duration_s and warmup_s must be >= 0", "duration_s", "warmup_s")
        if self.duration_s > 0 and self.warmup_s >= self.duration_s:
            bad("warmup_s must be shorter than duration_s", "warmup_s", "duration_s")
        if self.runs < 1:
            bad("runs must be >= 1", "runs")
        if self.harq_max_attempts < 1:
            bad("harq_max_attempts must be >= 1", "harq_max_attempts")
        if self.reordering_ms <= 0:
            bad("reordering_ms must be > 0", "reordering_ms")
        if self.cqi_delay_slots < 0:
            bad("cqi_delay_slots must be >= 0", "cqi_delay_slots")
        t = self.traffic
        if t.type not in ("cbr", "adaptive"):
            bad(f"traffic.type must be cbr or adaptive (got {t.type!r})", "traffic.type")
        if t.interval_us <= 0 or t.packet_bytes <= 0:
            bad("traffic.interval_us and traffic.packet_bytes must be > 0", "traffic.interval_us", "traffic.packet_bytes")
        if t.direction not in ("both", DL, UL):
            bad(f"traffic.direction must be both, DL or UL (got {t.direction!r})", "traffic.direction")
        if t.type == "adaptive" and not 1 <= t.initial_window <= t.max_window:
            bad("need 1 <= traffic.initial_window <= traffic.max_window", "traffic.initial_window")
        r = self.radio
        if r.subcarrier_stride < 1:
            bad("radio.subcarrier_stride must be >= 1", "radio.subcarrier_stride")
        if min(*r.bs_array, *r.ue_array, *r.bs_codebook, *r.ue_codebook) < 1:
            bad("array and codebook dimensions must be >= 1", "radio")
        if r.numerology < 0 or r.n_rb < 1:
            bad("radio.numerology must be >= 0 and radio.n_rb >= 1", "radio.numerology", "radio.n_rb")
        if 12 * r.n_rb * 15e3 * 2**r.numerology > r.bandwidth_mhz * 1e6 + 1e-6:
            bad("subcarriers do not fit in radio.bandwidth_mhz", "radio.bandwidth_mhz", "radio.n_rb")
        if problems:
            msg = "; ".join(m for m, _ in problems)
            names = [n for _, ns in problems for n in ns]
            raise ConfigError(msg, names)
        return self

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Digest of everything except seed and run count."""
        d = self.to_dict()
        d.pop("seed")
        d.pop("runs")
        text = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def phy(self) -> PhyConfig:
        r = self.radio
        return PhyConfig(
            carrier_hz=r.carrier_ghz * 1e9,
            bandwidth_hz=r.bandwidth_mhz * 1e6,
            numerology=r.numerology,
            n_rb=r.n_rb,
            bs_power_dbm=r.bs_power_dbm,
            ue_power_dbm=r.ue_power_dbm,
            noise_figure_db=r.noise_figure_db,
            n_layers=self.n_layers,
            bs_array=ArrayConfig(*r.bs_array, r.phase_constant),
            ue_array=ArrayConfig(*r.ue_array, r.phase_constant),
            subcarrier_stride=r.subcarrier_stride,
        )


def substream(seed: int, tag: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag, *key)))


def drop_ues(seed: int, count: int, radius: float, min_distance: float = 10.0, height: float = 1.6) -> np.ndarray:
    """UE positions uniform over the disc area around the origin, shape (count, 3)."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    rng = substream(seed, STREAM_DROP)
    out = np.empty((count, 3))
    for i in range(count):
        while True:
            r = radius * math.sqrt(rng.uniform())
            if r >= min_distance:
                break
        a = rng.uniform(0.0, 2.0 * math.pi)
        out[i] = (r * math.cos(a), r * math.sin(a), height)
    return out


class EventQueue:
    """Time-ordered events; equal times pop in insertion order."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = -math.inf

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, kind: str, payload=None) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} scheduled in the past (now {self.now})")
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def peek_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def pop(self):
        time, _, kind, payload = heapq.heappop(self._heap)
        if time < self.now:
            raise RuntimeError("event causality violated")
        self.now = time
        return time, kind, payload

    def pop_until(self, time: float, inclusive: bool = True):
        while self._heap and (self._heap[0][0] <= time if inclusive else self._heap[0][0] < time):
            yield self.pop()


@dataclass
class TransportBlock:
    tid: int
    flow: tuple[int, str]
    packets: list
    bits: int
    length: int
    mcs: int
    threshold_db: float
    first_slot: int
    last_slot: int


def _empty_dir():
    return {DL: [], UL: []}


@dataclass
class MetricsReport:
    seed: int
    config_hash: str
    duration: float
    warmup: float
    throughput: dict  # direction -> bit/s over the measurement window
    offered: dict  # direction -> bit/s generated in the window
    delay: dict  # direction -> seconds, delivered packets only
    sinr_db: dict  # direction -> wideband SINR of every allocation
    bler: dict  # direction -> instantaneous BLER of every data-carrying TB
    tb_ok: dict  # direction -> TB outcome (True = decoded)
    padding_symbols: int = 0
    allocated_symbols: int = 0
    harq_latency: np.ndarray = field(default_factory=lambda: np.zeros(0))
    counters: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)

    @property
    def padding_ratio(self) -> float:
        total = self.padding_symbols + self.allocated_symbols
        return self.padding_symbols / total if total else 0.0

    @classmethod
    def empty(cls, scenario: Scenario) -> "MetricsReport":
        z = lambda: {DL: np.zeros(0), UL: np.zeros(0)}  # noqa: E731
        return cls(scenario.seed, scenario.config_hash(), scenario.duration_s, scenario.warmup_s,
                   {DL: 0.0, UL: 0.0}, {DL: 0.0, UL: 0.0}, z(), z(), z(), {DL: np.zeros(0, bool), UL: np.zeros(0, bool)})


VIOLATION_KEYS = ("layer_overlap", "pmrs_unaligned", "pmrs_fallback", "amrs_padding", "amrs_gap", "rr_fairness",
                  "harq_latency")


class Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario.validate()
        sc = self.sc
        self.phy = phy = sc.phy()
        self.scheme = Scheme(sc.bf_scheme)
        self.table = McsTable(gap_db=sc.radio.gap_db)
        self.curve = BlerCurve(transition_db=sc.radio.bler_transition_db)
        self.K = phy.n_subcarriers
        self.slot_time = phy.slot_duration
        self.sym_time = phy.symbol_duration
        self.tb1 = [transport_block_bits(m, 1, self.K, self.table) for m in range(len(self.table))]
        n = self.n = sc.ue_count
        self.bs_pos = np.array([0.0, 0.0, sc.bs_height_m])
        self.ue_pos = drop_ues(sc.seed, n, sc.radius_m, sc.min_distance_m, sc.ue_height_m)

        bs_cb = build_codebook(phy.bs_array, *sc.radio.bs_codebook)
        ue_cb = ue_codebook(phy.ue_array, *sc.radio.ue_codebook)
        self.n_bs_cb = len(bs_cb)
        self.n_ue_cb = len(ue_cb)
        gbf = [gbf_pair(self.bs_pos, self.ue_pos[u], phy.bs_array, phy.ue_array) for u in range(n)]
        # BS beam table: codebook beams followed by one geometric beam per UE
        self.bs_table = np.hstack([bs_cb.matrix] + [g[0][:, None] for g in gbf]) if n else bs_cb.matrix
        self.bs_gram = self.bs_table.conj().T @ self.bs_table

        eval_k = phy.evaluation_subcarriers()
        f_eval = phy.subcarrier_frequencies(eval_k)
        f_ref = phy.subcarrier_frequencies([phy.reference_subcarrier])
        self.links, self.pathloss, self.fr_eval, self.fr_ref, self.tx_proj, self.rx_proj = [], [], [], [], [], []
        for u in range(n):
            link_seed = int(np.random.SeedSequence(sc.seed, spawn_key=(STREAM_CHANNEL, u)).generate_state(1)[0])
            _, pl, ch = drop_link(link_seed, self.bs_pos, self.ue_pos[u], sc.channel, phy.bs_array, phy.ue_array)
            self.links.append(ch)
            self.pathloss.append(pl.linear)
            self.fr_eval.append(ch.frequency_response(f_eval))
            self.fr_ref.append(ch.frequency_response(f_ref)[0])
            self.tx_proj.append(ch.a_tx @ self.bs_table)
            rx_table = np.hstack([ue_cb.matrix, gbf[u][1][:, None]])
            self.rx_proj.append(ch.a_rx @ rx_table * ch.array_gain)
        self.L = np.array(self.pathloss)
        self.sqrtL = np.sqrt(self.L)
        self.power = {d: phy.power_per_subcarrier(d) for d in DIRECTIONS}
        self.noise = phy.noise_power
        self.sigma = {d: phy.noise_over_power(d) for d in DIRECTIONS}

        self.scheduler = Scheduler(sc.scheduler, sc.n_layers, max(n, 1))
        rlc_cfg = RlcConfig(RlcMode(sc.rlc_mode), sc.reordering_ms * 1e-3, sc.am_max_retx)
        self.flows = [(u, d) for u in range(n) for d in DIRECTIONS]
        self.rlc = {f: RlcEntity(f, rlc_cfg) for f in self.flows}
        attempts = sc.harq_max_attempts if sc.harq else 1
        self.harq = {f: HarqProcess(i, attempts) for i, f in enumerate(self.flows)}
        self.tb_rng = {f: substream(sc.seed, STREAM_TB, f[0], DIRECTIONS.index(f[1])) for f in self.flows}
        self.factory = PacketFactory()
        t = sc.traffic
        self.cbr, self.adaptive = {}, {}
        for f in self.flows:
            if f[1] not in t.directions:
                continue
            if t.type == "cbr":
                self.cbr[f] = CbrSource(f, t.interval_us * 1e-6, t.packet_bytes)
            else:
                self.adaptive[f] = AdaptiveSource(f, t.packet_bytes, t.initial_window, max_window=t.max_window)
        self.events = EventQueue()
        self.cqi = {}
        self.cqi_pending = []
        self._beam_cache_slot = -1
        self._beam_cache = {}
        self._tid = 0
        self._all_adaptive = []

    # -- beams and channel rows ---------------------------------------------------
    def _gains(self, u: int, t: float) -> np.ndarray:
        return self.links[u].gains_at(t)

    def beams(self, u: int, slot: int) -> tuple[int, int]:
        """(BS beam index, UE beam index) of user ``u`` for this slot."""
        if slot != self._beam_cache_slot:
            self._beam_cache = {}
            self._beam_cache_slot = slot
        b = self._beam_cache.get(u)
        if b is None:
            if self.scheme is Scheme.GBF:
                b = (self.n_bs_cb + u, self.n_ue_cb)
            else:
                w = self._gains(u, slot * self.slot_time) * self.fr_ref[u]
                b = cbf_select_projected(
                    self.tx_proj[u][:, : self.n_bs_cb], self.rx_proj[u][:, : self.n_ue_cb], w
                )
            self._beam_cache[u] = b
        return b

    def rows(self, users, ports, rx_beams, t: float, ref: bool = False) -> np.ndarray:
        """Raw port gains ``w_a^T H_a[k] v_p``: shape (K_eval, m, P), or (m, P) at k_ref."""
        out = []
        for a, r in zip(users, rx_beams):
            g = self._gains(a, t) * self.rx_proj[a][:, r]
            txp = self.tx_proj[a][:, ports] * g[:, None]
            out.append(self.fr_ref[a] @ txp if ref else self.fr_eval[a] @ txp)
        return np.array(out) if ref else np.stack(out, axis=1)

    def snr_db(self, u: int, direction: str, t: float, slot: int = 0) -> float:
        d, r = self.beams(u, slot)
        g = self.rows([u], [d], [r], t)[:, 0, 0]
        snr = self.L[u] * np.abs(g) ** 2 * self.power[direction] / self.noise
        return float(10 * np.log10(np.mean(snr)))

    def _mmse_weights(self, users, ports, rx, t, direction, raw):
        """Column-normalised layer-to-port mapping of a synchronous group."""
        sigma = self.sigma[direction]
        gram = self.bs_gram[np.ix_(ports, ports)]
        scale = self.sqrtL[users]
        if self.scheme is Scheme.FMBF:
            href = scale[:, None] * self.rows(users, ports, rx, t, ref=True)
        else:
            href = scale[None, :, None] * raw
        return normalized_weights(mmse_precoder(href, sigma).matrix, gram)

    # -- SINR of one overlap component ----------------------------------------
    def component_sinr(self, comp, slot: int) -> np.ndarray:
        """Wideband SINR (linear) of every allocation of ``comp``, in member order.

        Each allocation is split into segments with a constant set of co-active
        allocations; the channel is taken at the allocation's first symbol.
        """
        allocs = comp.allocations
        direction = allocs[0].direction
        m = len(allocs)
        users = [a.user for a in allocs]
        beams = [self.beams(u, slot) for u in users]
        ports = [b[0] for b in beams]
        rx = [b[1] for b in beams]
        t0 = slot * self.slot_time
        L = self.L[users]
        P = self.power[direction]
        starts = [a.start for a in allocs]
        ends = [a.end for a in allocs]
        edges = sorted(set(starts) | set(ends))
        uniq = sorted(set(starts))
        # act[s, b]: allocation b transmits during segment s
        seg_len = np.diff(edges).astype(float)
        lo = np.array(edges[:-1])[:, None]
        hi = np.array(edges[1:])[:, None]
        st = np.array(starts)
        act = ((st[None, :] < hi) & (np.array(ends)[None, :] > lo)).astype(float)
        W = None
        total = np.zeros(m)
        noise = self.noise / P
        for i, s in enumerate(uniq):
            X = self.rows(users, ports, rx, t0 + s * self.sym_time)
            if i == 0 and comp.mmse and m > 1 and self.scheme.is_mmse:
                W = self._mmse_weights(users, ports, rx, t0 + s * self.sym_time, direction, X)
            C = X if W is None else X @ W  # C[k, a, b]: a's channel and beam, b's BS vector
            g2 = C.real**2 + C.imag**2
            diag = np.diagonal(g2, axis1=1, axis2=2)  # (K, m)
            if direction == DL:
                # interference at receiver a from every active BS vector b != a
                interf = L * (g2 @ act.T).transpose(0, 2, 1) - L * diag[:, None, :] * act[None]
            else:
                # interference on combiner b from every active user a != b
                interf = np.einsum("sa,kab->ksb", act * L, g2) - L * diag[:, None, :] * act[None]
            sig = L * diag  # (K, m)
            val = (sig[:, None, :] / (np.maximum(interf, 0.0) + noise)).mean(axis=0)  # (S, m)
            tgt = act * (st == s)[None, :]
            total += (seg_len[:, None] * tgt * val).sum(axis=0)
        return total / (np.array(ends) - st)

    # -- main loop ------------------------------------------------------------
    def run(self) -> MetricsReport:
        sc = self.sc
        report = MetricsReport.empty(sc)
        n_slots = int(round(sc.duration_s / self.slot_time))
        if n_slots == 0 or self.n == 0:
            return report
        T = n_slots * self.slot_time
        warm = sc.warmup_s
        for u in range(self.n):
            for d in DIRECTIONS:
                self.cqi[(u, d)] = self.snr_db(u, d, 0.0)
        for f, src in self.adaptive.items():
            for p in src.release(0.0, self.factory):
                self._all_adaptive.append(p)
                self.rlc[f].enqueue(p)

        sinr = _empty_dir()
        blers = _empty_dir()
        oks = _empty_dir()
        harq_lat = []
        viol = dict.fromkeys(VIOLATION_KEYS, 0)
        counters = dict(harq_retx=0, am_retx=0, fallback_allocations=0, allocations=0, tbs=0, empty_tbs=0,
                        timeouts=0)
        pad = alloc_sym = 0
        packets = []
        fair = {d: [] for d in DIRECTIONS}

        for slot in range(n_slots):
            t0 = slot * self.slot_time
            t_end = t0 + self.slot_time
            measured = t0 >= warm - 1e-12
            for t, kind, payload in self.events.pop_until(t0):
                self._on_event(t, kind, payload)
            self._advance_channels(t0)
            for f, src in self.cbr.items():
                for p in src.tick(t0, self.factory):
                    packets.append(p)
                    self.rlc[f].enqueue(p)
            for f, src in self.adaptive.items():
                for p in src.check_timeout(t0, self.factory):
                    self._all_adaptive.append(p)
                    self.rlc[f].enqueue(p)
            # CQI reports whose delay has elapsed
            keep = []
            for item in self.cqi_pending:
                if item[0] <= slot:
                    self.cqi[item[1]] = item[2]
                else:
                    keep.append(item)
            self.cqi_pending = keep

            demands, mcs_of = [], {}
            for f in self.flows:
                h = self.harq[f]
                if h.state is HarqState.PENDING:
                    demands.append(Demand(f[0], f[1], h.tb.length, retx=True))
                    continue
                q = self.rlc[f].queued_bits
                if q > 0:
                    m = select_mcs(self.cqi[f], self.table)
                    mcs_of[f] = m
                    demands.append(Demand(f[0], f[1], math.ceil(q / self.tb1[m])))
            if not demands:
                for t, kind, payload in self.events.pop_until(t_end, inclusive=False):
                    self._on_event(t, kind, payload)
                continue
            plan = self.scheduler.plan(slot, demands)
            self._check_plan(plan, demands, viol, fair)
            served = {(a.user, a.direction) for a in plan.allocations if a.is_retx}
            viol["harq_latency"] += sum(1 for d in demands if d.retx and (d.user, d.direction) not in served)
            comps = overlap_components(plan.allocations)
            outcomes = []
            for comp in comps:
                values = self.component_sinr(comp, slot)
                for a, s_lin in zip(comp.allocations, values):
                    a.fallback = not comp.mmse
                    f = (a.user, a.direction)
                    s_db = 10.0 * math.log10(s_lin) if s_lin > 0 else -math.inf
                    self.cqi_pending.append((slot + 1 + sc.cqi_delay_slots, f, s_db))
                    tb = self._build_tb(a, f, mcs_of, slot, t0, harq_lat, measured)
                    if measured:
                        sinr[a.direction].append(s_db)
                        counters["allocations"] += 1
                        counters["fallback_allocations"] += int(a.fallback)
                    if tb is None:
                        counters["empty_tbs"] += int(measured)
                        continue
                    p_err = float(self.curve(s_db, tb.threshold_db))
                    ok = bool(self.tb_rng[f].random() >= p_err)
                    if measured:
                        blers[a.direction].append(p_err)
                        oks[a.direction].append(ok)
                        counters["tbs"] += 1
                    outcomes.append((f, tb, ok))
            if measured:
                pad += plan.padding_symbols
                alloc_sym += plan.allocated_symbols
            for t, kind, payload in self.events.pop_until(t_end, inclusive=False):
                self._on_event(t, kind, payload)
            for f, tb, ok in outcomes:
                self._slot_end(f, tb, ok, slot, t_end, counters)

        for t, kind, payload in self.events.pop_until(T):
            self._on_event(t, kind, payload)

        window = T - warm
        for d in DIRECTIONS:
            created = [p for p in packets if p.flow[1] == d and p.created >= warm - 1e-12]
            if self.adaptive:
                created = [p for p in self._all_adaptive if p.flow[1] == d and p.created >= warm - 1e-12]
            good = [p for p in created if p.delivered is not None and p.delivered <= T + 1e-12]
            report.throughput[d] = sum(p.bits for p in good) / window
            report.offered[d] = sum(p.bits for p in created) / window
            report.delay[d] = np.array([p.delivered - p.created for p in good])
            report.sinr_db[d] = np.array(sinr[d])
            report.bler[d] = np.array(blers[d])
            report.tb_ok[d] = np.array(oks[d], dtype=bool)
        report.padding_symbols = pad
        report.allocated_symbols = alloc_sym
        report.harq_latency = np.array(harq_lat)
        allp = self._all_adaptive if self.adaptive else packets
        counters["generated"] = len(allp)
        counters["am_retx"] = sum(p.am_retx for p in allp)
        counters["delivered"] = sum(e.n_delivered for e in self.rlc.values())
        counters["dropped"] = sum(e.n_dropped for e in self.rlc.values())
        counters["in_system"] = sum(e.in_system for e in self.rlc.values())
        counters["conserved"] = int(all(e.conserved() for e in self.rlc.values()))
        counters["timeouts"] = sum(s.timeouts for s in self.adaptive.values())
        report.counters = counters
        report.violations = viol
        return report

    def _advance_channels(self, t: float) -> None:
        period = self.sc.channel.regen_period_s
        if period <= 0:
            return
        epoch = int(math.floor(t / period + 1e-12))
        for u, ch in enumerate(self.links):
            if ch.epoch != epoch:
                self.links[u] = evolve(ch, t - ch.time)

    def _build_tb(self, a, f, mcs_of, slot, t0, harq_lat, measured):
        h = self.harq[f]
        if a.is_retx:
            tb = h.tb
            if measured:
                harq_lat.append((slot - tb.last_slot) * self.slot_time)
            if a.length < tb.length:
                # shorter grant than the original: same bits at the efficiency that fits
                eff = tb.bits / (self.K * a.length)
                tb.threshold_db = float(gap_threshold_db(eff, self.table.gap_db))
                tb.length = a.length
            tb.last_slot = slot
            h.transmit()
            for p in tb.packets:
                p.harq_attempts += 1
            a.mcs = tb.mcs
            return tb
        m = mcs_of[f]
        a.mcs = m
        bits = transport_block_bits(m, a.length, self.K, self.table)
        pk = self.rlc[f].dequeue(bits, t0)
        if not pk:
            return None
        for p in pk:
            p.harq_attempts += 1
        tb = TransportBlock(self._tid, f, pk, bits, a.length, m, self.table.threshold(m), slot, slot)
        self._tid += 1
        h.transmit(tb)
        return tb

    def _slot_end(self, f, tb, ok, slot, t_end, counters):
        h = self.harq[f]
        action = harq_on_feedback(h, ok, slot)
        if action is HarqAction.RETRANSMIT:
            counters["harq_retx"] += 1
            return
        res = self.rlc[f].on_tb_outcome(tb.packets, action is HarqAction.RELEASE, t_end)
        self._apply_rlc(f, res, t_end, counters)

    def _apply_rlc(self, f, res, now, counters=None):
        if res.timer is not None:
            self.events.push(res.timer, "rlc_timer", (f, self.rlc[f].timer_token))
        src = self.adaptive.get(f)
        if src is not None:
            for p in res.delivered:
                for q in src.on_ack(p.pid, now, self.factory):
                    self._all_adaptive.append(q)
                    self.rlc[f].enqueue(q)
            for p in res.lost:
                for q in src.on_loss(p.pid, now, self.factory, repaired=True):
                    self._all_adaptive.append(q)
                    self.rlc[f].enqueue(q)
            for p in res.dropped:
                for q in src.on_loss(p.pid, now, self.factory):
                    self._all_adaptive.append(q)
                    self.rlc[f].enqueue(q)

    def _on_event(self, t, kind, payload):
        if kind == "rlc_timer":
            f, token = payload
            res = self.rlc[f].on_timer(token, t)
            self._apply_rlc(f, res, t)

    def _check_plan(self, plan, demands, viol, fair):
        by_layer = {}
        for a in plan.allocations:
            by_layer.setdefault((a.direction, a.layer), []).append(a)
        for (d, _), allocs in by_layer.items():
            allocs.sort(key=lambda x: x.start)
            for x, y in zip(allocs, allocs[1:]):
                if x.end + x.padding > y.start:
                    viol["layer_overlap"] += 1
            if self.scheduler.kind is SchedulerKind.AMRS:
                first = min(b.start for b in plan.allocations if b.direction == d)
                pos = first
                for x in allocs:
                    if x.start != pos:
                        viol["amrs_gap"] += 1
                    pos = x.end
        if self.scheduler.kind is SchedulerKind.AMRS:
            viol["amrs_padding"] += plan.padding_symbols
        if self.scheduler.kind is SchedulerKind.PMRS:
            bundles = {}
            for a in plan.allocations:
                bundles.setdefault((a.direction, a.bundle), set()).add(a.start)
            viol["pmrs_unaligned"] += sum(len(s) > 1 for s in bundles.values())
            viol["pmrs_fallback"] += sum(len(c.allocations) for c in overlap_components(plan.allocations) if not c.mmse)
        # RR fairness over windows of saturated, retransmission-free slots
        for d in DIRECTIONS:
            dem = {x.user: x for x in demands if x.direction == d}
            got = {}
            for a in plan.allocations:
                if a.direction == d:
                    got[a.user] = got.get(a.user, 0) + a.length
            saturated = (
                len(dem) == self.n
                and not any(x.retx for x in dem.values())
                and all(dem[u].symbols > got.get(u, 0) for u in range(self.n))
            )
            w = fair[d]
            if not saturated:
                w.clear()
                continue
            w.append([int(u in got) for u in range(self.n)])
            if len(w) > 20:
                w.pop(0)
            if len(w) == 20:
                counts = np.sum(w, axis=0)
                if counts.max() - counts.min() > 1:
                    viol["rr_fairness"] += 1


def run(scenario: Scenario) -> MetricsReport:
    return Simulation(scenario).run()


@dataclass
class CampaignSummary:
    config_hash: str
    runs: int
    throughput_mean: dict
    throughput_se: dict
    delay_mean: dict
    delay_se: dict
    delay: dict  # pooled
    sinr_db: dict
    bler: dict
    tb_ok: dict
    offered_mean: dict
    padding_ratio: float
    harq_latency: np.ndarray
    counters: dict
    violations: dict


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return 0.0, 0.0
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


def aggregate(reports: list[MetricsReport]) -> CampaignSummary:
    if not reports:
        raise ValueError("aggregate needs at least one report")
    tm, ts, dm, ds, om = {}, {}, {}, {}, {}
    for d in DIRECTIONS:
        tm[d], ts[d] = _mean_se([r.throughput[d] for r in reports])
        om[d], _ = _mean_se([r.offered[d] for r in reports])
        per_run = [float(np.mean(r.delay[d])) for r in reports if len(r.delay[d])]
        dm[d], ds[d] = _mean_se(per_run)
    pool = lambda attr: {d: np.concatenate([getattr(r, attr)[d] for r in reports]) for d in DIRECTIONS}  # noqa: E731
    counters, violations = {}, {}
    for r in reports:
        for k, v in r.counters.items():
            counters[k] = counters.get(k, 0) + v
        for k, v in r.violations.items():
            violations[k] = violations.get(k, 0) + v
    pad = sum(r.padding_symbols for r in reports)
    alloc = sum(r.allocated_symbols for r in reports)
    return CampaignSummary(
        reports[0].config_hash, len(reports), tm, ts, dm, ds, pool("delay"), pool("sinr_db"), pool("bler"),
        pool("tb_ok"), om, pad / (pad + alloc) if pad + alloc else 0.0,
        np.concatenate([r.harq_latency for r in reports]), counters, violations,
    )


def version() -> str:
    return __version__
