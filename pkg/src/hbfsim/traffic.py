"""Application sources: jitter-free CBR and a window-limited adaptive (AIMD) source."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)


class PacketState(str, enum.Enum):
    QUEUED = "queued"
    IN_FLIGHT = "in_flight"
    LOST = "lost"  # HARQ gave up, AM may still resend it
    RECEIVED = "received"  # at the RLC receiver, possibly waiting for reordering
    DELIVERED = "delivered"
    DROPPED = "dropped"


@dataclass(eq=False)
class PacketRecord:
    pid: int
    flow: tuple[int, str]  # (user, direction)
    size_bytes: int
    created: float
    sn: int = -1
    state: PacketState = PacketState.QUEUED
    first_tx: float | None = None
    delivered: float | None = None
    dropped: float | None = None
    harq_attempts: int = 0
    am_retx: int = 0

    @property
    def bits(self) -> int:
        return 8 * self.size_bytes

    @property
    def delay(self) -> float | None:
        return None if self.delivered is None else self.delivered - self.created


class PacketFactory:
    """Hands out run-unique packet ids."""

    def __init__(self):
        self._next = 0

    def make(self, flow, size_bytes: int, created: float) -> PacketRecord:
        p = PacketRecord(self._next, flow, size_bytes, created)
        self._next += 1
        return p


@dataclass
class CbrSource:
    flow: tuple[int, str]
    interval: float = 1500e-6
    packet_bytes: int = 1500
    start: float = 0.0
    emitted: int = 0

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("interval must be > 0")

    @property
    def rate_bps(self) -> float:
        return 8 * self.packet_bytes / self.interval

    def next_time(self) -> float:
        return self.start + self.emitted * self.interval

    def tick(self, now: float, factory: PacketFactory | None = None) -> list[PacketRecord]:
        """Packets with creation time in (last emission, now]."""
        factory = factory or PacketFactory()
        out = []
        # small slack so that exact multiples are not lost to rounding
        due = math.floor((now - self.start) / self.interval + 1e-9) + 1 if now >= self.start else 0
        while self.emitted < due:
            out.append(factory.make(self.flow, self.packet_bytes, self.next_time()))
            self.emitted += 1
        return out


def cbr_tick(source: CbrSource, now: float, factory: PacketFactory | None = None) -> list[PacketRecord]:
    return source.tick(now, factory)


@dataclass
class AdaptiveSource:
    """Full-buffer source with NewReno-style AIMD on a packet window.

    ``max_window`` plays the part of the receiver window and bounds the queue a
    loss-free path can build up.
    """

    flow: tuple[int, str]
    packet_bytes: int = 1500
    initial_window: float = 10.0
    ssthresh: float = math.inf
    min_rto: float = 0.2
    max_window: float = 64.0
    window: float = field(init=False)
    srtt: float | None = None
    in_flight: dict = field(default_factory=dict)  # pid -> send time
    recover: int = -1  # losses of packets sent before this id belong to a handled event
    sent: int = 0
    losses: int = 0
    timeouts: int = 0

    def __post_init__(self):
        self.window = float(self.initial_window)
        self._order: list[int] = []  # pids in send order

    @property
    def rto(self) -> float:
        return max(self.min_rto, 2.0 * self.srtt) if self.srtt is not None else self.min_rto

    def release(self, now: float, factory: PacketFactory) -> list[PacketRecord]:
        limit = int(min(self.window, self.max_window))
        out = []
        while len(self.in_flight) < limit:
            p = factory.make(self.flow, self.packet_bytes, now)
            self.in_flight[p.pid] = now
            self._order.append(p.pid)
            self.sent += 1
            out.append(p)
        return out

    def on_ack(self, pid: int, now: float, factory: PacketFactory) -> list[PacketRecord]:
        sent_at = self.in_flight.pop(pid, None)
        if sent_at is None:
            log.debug("ack for unknown packet %d ignored", pid)
            return []
        rtt = now - sent_at
        self.srtt = rtt if self.srtt is None else 0.875 * self.srtt + 0.125 * rtt
        if self.window < self.ssthresh:
            self.window += 1.0  # doubles per RTT
        else:
            self.window += 1.0 / self.window
        self.window = min(self.window, self.max_window)
        return self.release(now, factory)

    def on_loss(self, pid: int, now: float, factory: PacketFactory, repaired: bool = False) -> list[PacketRecord]:
        """Multiplicative decrease, at most once per window of data.

        ``repaired`` marks a loss that a lower layer will resend: the packet stays
        in flight and its eventual delivery is acknowledged as usual.
        """
        if pid not in self.in_flight:
            return []
        if not repaired:
            del self.in_flight[pid]
        if pid >= self.recover:
            self.losses += 1
            self.ssthresh = max(self.window / 2.0, 2.0)
            self.window = self.ssthresh
            self.recover = self._next_pid_hint()
        return self.release(now, factory)

    def on_timeout(self, now: float, factory: PacketFactory) -> list[PacketRecord]:
        self.timeouts += 1
        self.ssthresh = max(self.window / 2.0, 2.0)
        self.window = 1.0
        self.in_flight.clear()
        self.recover = self._next_pid_hint()
        return self.release(now, factory)

    def check_timeout(self, now: float, factory: PacketFactory) -> list[PacketRecord]:
        """Fire the retransmission timeout when the oldest outstanding packet is overdue."""
        if not self.in_flight:
            return []
        oldest = min(self.in_flight.values())
        if now - oldest > self.rto:
            return self.on_timeout(now, factory)
        return []

    def _next_pid_hint(self) -> int:
        return (self._order[-1] + 1) if self._order else 0


def adaptive_on_ack(source: AdaptiveSource, pid: int, now: float, factory: PacketFactory):
    released = source.on_ack(pid, now, factory)
    return source.window, released


def adaptive_on_loss(source: AdaptiveSource, pid: int | None, now: float, factory: PacketFactory):
    """``pid=None`` signals a retransmission timeout."""
    if pid is None:
        released = source.on_timeout(now, factory)
    else:
        released = source.on_loss(pid, now, factory)
    return source.window, released
