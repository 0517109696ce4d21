"""Slot scheduling on the (symbol, layer) grid: TMRS, PMRS, AMRS, MMSE grouping and HARQ."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

from .phy import MCS_TABLE, SLOT, McsTable, transport_block_bits

log = logging.getLogger(__name__)

DL = "DL"
UL = "UL"
DIRECTIONS = (DL, UL)


class SchedulerKind(str, enum.Enum):
    TMRS = "TMRS"
    PMRS = "PMRS"
    AMRS = "AMRS"


@dataclass
class Demand:
    user: int
    direction: str
    symbols: int  # requested symbols at the current MCS
    retx: bool = False


@dataclass
class Allocation:
    user: int
    layer: int
    start: int
    length: int
    direction: str
    padding: int = 0
    bundle: int | None = None
    harq_id: int | None = None
    mcs: int = 0
    fallback: bool = False
    is_retx: bool = False

    @property
    def end(self) -> int:
        """One past the last symbol."""
        return self.start + self.length

    def overlaps(self, other: "Allocation") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass
class SlotPlan:
    slot: int
    allocations: list[Allocation] = field(default_factory=list)
    bundles: list[tuple[str, int, int]] = field(default_factory=list)  # (direction, start, length)

    @property
    def padding_symbols(self) -> int:
        return sum(a.padding for a in self.allocations)

    @property
    def allocated_symbols(self) -> int:
        return sum(a.length for a in self.allocations)


def requested_symbols(queued_bits: int, mcs: int, n_subcarriers: int, table: McsTable = MCS_TABLE) -> int:
    if queued_bits <= 0:
        return 0
    return max(1, math.ceil(queued_bits / transport_block_bits(mcs, 1, n_subcarriers, table)))


def split_region(dl_demand: int, ul_demand: int, n_symbols: int = SLOT.n_data_symbols) -> tuple[int, int]:
    """Symbols given to DL (first) and UL (second), proportional to demand."""
    if dl_demand <= 0 and ul_demand <= 0:
        return 0, 0
    if ul_demand <= 0:
        return n_symbols, 0
    if dl_demand <= 0:
        return 0, n_symbols
    n_dl = math.floor(n_symbols * dl_demand / (dl_demand + ul_demand) + 0.5)
    n_dl = min(max(n_dl, 1), n_symbols - 1)
    return n_dl, n_symbols - n_dl


def tmrs_schedule(demands: list[Demand], n_symbols: int = SLOT.n_data_symbols, first_symbol: int = 1) -> list[Allocation]:
    """Single-layer TDMA round robin over ``demands`` taken in the given order."""
    out = []
    pos = first_symbol
    remaining = n_symbols
    retx_left = sum(1 for d in demands if d.retx and d.symbols > 0)
    for d in demands:
        if remaining == 0:
            break
        if d.symbols <= 0:
            continue
        if d.retx:
            retx_left -= 1
            n = min(d.symbols, max(remaining - retx_left, 1))  # leave a symbol for every later retransmission
        else:
            n = min(d.symbols, remaining)
        out.append(Allocation(d.user, 0, pos, n, d.direction, is_retx=d.retx))
        pos += n
        remaining -= n
    return out


def pmrs_schedule(
    demands: list[Demand], n_layers: int, n_symbols: int = SLOT.n_data_symbols, first_symbol: int = 1
) -> tuple[list[Allocation], list[tuple[str, int, int]]]:
    """Equal-size SDMA bundles; every allocation of a bundle starts on its first symbol."""
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    active = [d for d in demands if d.symbols > 0]
    if not active or n_symbols <= 0:
        return [], []
    n_bundles = min(math.ceil(len(active) / n_layers), n_symbols)
    size = n_symbols // n_bundles
    out, bundles = [], []
    for b in range(n_bundles):
        members = active[b * n_layers : (b + 1) * n_layers]
        if not members:
            break
        start = first_symbol + b * size
        bundles.append((members[0].direction, start, size))
        for layer, d in enumerate(members):
            n = min(d.symbols, size)
            out.append(Allocation(d.user, layer, start, n, d.direction, padding=size - n, bundle=b, is_retx=d.retx))
    return out, bundles


def amrs_groups(n_users: int, n_layers: int) -> list[int]:
    """Group sizes of the contiguous user partition (differ by at most one)."""
    base, extra = divmod(n_users, n_layers)
    return [base + (1 if g < extra else 0) for g in range(n_layers)]


def amrs_schedule(
    demands: list[Demand], n_layers: int, n_symbols: int = SLOT.n_data_symbols, first_symbol: int = 1
) -> list[Allocation]:
    """Per-layer TDMA over user groups, no padding, saturated users capped at the fair share.

    With one layer the cap is not applied, so the result matches :func:`tmrs_schedule`.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    active = [d for d in demands if d.symbols > 0]
    if not active or n_symbols <= 0:
        return []
    cap = n_symbols * n_layers // len(active) if n_layers > 1 else n_symbols
    cap = max(cap, 1)
    out = []
    i = 0
    for layer, size in enumerate(amrs_groups(len(active), n_layers)):
        pos = first_symbol
        remaining = n_symbols
        group = active[i : i + size]
        retx_left = sum(1 for d in group if d.retx)
        for d in group:
            if remaining == 0:
                break
            if d.retx:
                retx_left -= 1
                n = min(d.symbols, max(remaining - retx_left, 1))
            else:
                n = min(d.symbols, cap, remaining)
            out.append(Allocation(d.user, layer, pos, n, d.direction, is_retx=d.retx))
            pos += n
            remaining -= n
        i += size
    return out


@dataclass
class Component:
    """Allocations linked by time overlap; ``mmse`` is False when their starts differ."""

    allocations: list[Allocation]
    mmse: bool


def overlap_components(allocations: list[Allocation]) -> list[Component]:
    """Connected components of the same-direction time-overlap graph."""
    n = len(allocations)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        a = allocations[i]
        for j in range(i + 1, n):
            b = allocations[j]
            if a.direction == b.direction and a.overlaps(b):
                parent[find(i)] = find(j)
    comps: dict[int, list[Allocation]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(allocations[i])
    out = []
    for members in comps.values():
        members.sort(key=lambda a: (a.start, a.layer))
        mmse = len({a.start for a in members}) == 1
        out.append(Component(members, mmse))
    out.sort(key=lambda c: (c.allocations[0].direction != DL, c.allocations[0].start, c.allocations[0].layer))
    return out


def mmse_groups(plan) -> tuple[list[list[Allocation]], list[Allocation]]:
    """Synchronous MMSE groups and the CBF fallback set of a plan.

    Overlap with a different start poisons the whole chain of overlapping
    allocations. Sets ``Allocation.fallback`` as a side effect.
    """
    allocations = plan.allocations if isinstance(plan, SlotPlan) else plan
    groups, fallback = [], []
    for comp in overlap_components(allocations):
        for a in comp.allocations:
            a.fallback = not comp.mmse
        if comp.mmse:
            groups.append(sorted(comp.allocations, key=lambda a: a.layer))
        else:
            fallback.extend(comp.allocations)
    return groups, fallback


class Scheduler:
    """Round-robin state (one cursor per direction) around the three scheduling rules."""

    def __init__(self, kind, n_layers: int, n_users: int, n_symbols: int = SLOT.n_data_symbols):
        self.kind = SchedulerKind(kind)
        if self.kind is SchedulerKind.TMRS and n_layers != 1:
            raise ValueError("TMRS requires n_layers = 1")
        self.n_layers = n_layers
        self.n_users = n_users
        self.n_symbols = n_symbols
        self.cursor = {DL: 0, UL: 0}

    def _order(self, demands: list[Demand], direction: str) -> tuple[list[Demand], list[Demand]]:
        by_user = {d.user: d for d in demands if d.direction == direction and d.symbols > 0}
        c = self.cursor[direction]
        rr = [by_user[u] for u in ((c + i) % self.n_users for i in range(self.n_users)) if u in by_user]
        # pending HARQ retransmissions jump the queue
        return [d for d in rr if d.retx] + [d for d in rr if not d.retx], rr

    def _run(self, ordered: list[Demand], n_symbols: int, first: int):
        if self.kind is SchedulerKind.TMRS:
            return tmrs_schedule(ordered, n_symbols, first), []
        if self.kind is SchedulerKind.PMRS:
            return pmrs_schedule(ordered, self.n_layers, n_symbols, first)
        return amrs_schedule(ordered, self.n_layers, n_symbols, first), []

    def retx_symbols(self, demands: list[Demand], direction: str) -> int:
        """Smallest region that still fits every pending retransmission of ``direction``."""
        ordered, _ = self._order(demands, direction)
        n_retx = sum(1 for d in ordered if d.retx)
        if n_retx == 0:
            return 0
        if self.kind is SchedulerKind.PMRS:
            return math.ceil(n_retx / self.n_layers)
        if self.kind is SchedulerKind.AMRS:
            need, i = 0, 0
            for size in amrs_groups(len(ordered), self.n_layers):
                need = max(need, sum(1 for d in ordered[i : i + size] if d.retx))
                i += size
            return need
        return n_retx

    def plan(self, slot: int, demands: list[Demand]) -> SlotPlan:
        totals = {d: sum(x.symbols for x in demands if x.direction == d) for d in DIRECTIONS}
        n_dl, n_ul = split_region(totals[DL], totals[UL], self.n_symbols)
        need_dl, need_ul = self.retx_symbols(demands, DL), self.retx_symbols(demands, UL)
        if need_dl + need_ul > self.n_symbols:
            log.warning("slot %d: pending retransmissions need %d symbols", slot, need_dl + need_ul)
        elif n_dl < need_dl:
            n_dl, n_ul = need_dl, self.n_symbols - need_dl
        elif n_ul < need_ul:
            n_dl, n_ul = self.n_symbols - need_ul, need_ul
        first = SLOT.first_data_symbol
        regions = {DL: (first, n_dl), UL: (first + n_dl, n_ul)}
        plan = SlotPlan(slot)
        for direction in DIRECTIONS:
            start, n = regions[direction]
            if n == 0:
                continue
            ordered, rr = self._order(demands, direction)
            allocs, bundles = self._run(ordered, n, start)
            plan.allocations.extend(allocs)
            plan.bundles.extend(bundles)
            served = {a.user for a in allocs}
            unserved = [d.user for d in rr if d.user not in served]
            if unserved:
                self.cursor[direction] = unserved[0]
            elif rr:
                last = [d.user for d in rr if d.user in served][-1]
                self.cursor[direction] = (last + 1) % self.n_users
        return plan


class HarqState(str, enum.Enum):
    IDLE = "idle"
    AWAITING = "awaiting"  # transmitted, waiting for ACK/NACK
    PENDING = "pending"  # NACKed, retransmission not yet scheduled


class HarqAction(str, enum.Enum):
    RELEASE = "release"
    RETRANSMIT = "retransmit"
    DROP = "drop"


@dataclass
class HarqProcess:
    pid: int
    max_attempts: int = 3
    tb: object = None
    attempts: int = 0
    state: HarqState = HarqState.IDLE
    nack_slot: int | None = None

    def transmit(self, tb=None) -> None:
        """Record a (re)transmission of the held TB, or start a new one."""
        if tb is not None:
            self.tb = tb
            self.attempts = 0
        if self.attempts >= self.max_attempts:
            raise RuntimeError(f"HARQ process {self.pid} exceeded {self.max_attempts} attempts")
        self.attempts += 1
        self.state = HarqState.AWAITING


def harq_on_feedback(process: HarqProcess, ack: bool, slot: int) -> HarqAction | None:
    """Advance ``process`` on ACK/NACK received at the end of ``slot``."""
    if process.state is not HarqState.AWAITING:
        log.error("protocol error: feedback for HARQ process %d in state %s", process.pid, process.state.value)
        return None
    if ack:
        process.state = HarqState.IDLE
        process.tb = None
        return HarqAction.RELEASE
    if process.attempts < process.max_attempts:
        process.state = HarqState.PENDING
        process.nack_slot = slot
        return HarqAction.RETRANSMIT
    process.state = HarqState.IDLE
    return HarqAction.DROP
