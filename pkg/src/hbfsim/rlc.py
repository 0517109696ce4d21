"""RLC entities (UM and AM) without segmentation, sitting above HARQ.

One entity models both ends of a flow: the transmit queue and the receiver's
in-order delivery with a reordering timer. Status reporting is ideal.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field

from .traffic import PacketRecord, PacketState

log = logging.getLogger(__name__)


class RlcMode(str, enum.Enum):
    UM = "UM"
    AM = "AM"


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class RlcConfig:
    mode: RlcMode = RlcMode.UM
    reordering_timeout: float = 10e-3
    max_am_retx: int = 8

    def __post_init__(self):
        object.__setattr__(self, "mode", RlcMode(self.mode))
        if self.reordering_timeout <= 0:
            raise ValueError("reordering timeout must be > 0")
        if self.max_am_retx < 0:
            raise ValueError("max_am_retx must be >= 0")


@dataclass
class RlcResult:
    delivered: list[PacketRecord] = field(default_factory=list)
    dropped: list[PacketRecord] = field(default_factory=list)
    lost: list[PacketRecord] = field(default_factory=list)  # AM: failed over the air, awaiting resend
    timer: float | None = None  # expiry time of a newly started reordering timer


class RlcEntity:
    def __init__(self, flow, config: RlcConfig = RlcConfig()):
        self.flow = flow
        self.config = config
        self.queue: deque[PacketRecord] = deque()
        self.retx_queue: deque[PacketRecord] = deque()
        self._queued_bits = 0
        self._next_sn = 0
        self.outstanding: dict[int, PacketRecord] = {}  # sn -> in flight / lost
        # receiver
        self.rx_next = 0
        self.rx_highest = -1
        self.rx_buffer: dict[int, PacketRecord] = {}
        self.rx_skip: set[int] = set()
        self.lost_sns: set[int] = set()  # AM: failed over the air, not yet resent
        self.timer_expiry: float | None = None
        self.timer_sn = 0
        self.timer_token = 0
        self.enqueued = 0
        self.n_delivered = 0
        self.n_dropped = 0

    # transmitter -------------------------------------------------------
    @property
    def queued_bits(self) -> int:
        return self._queued_bits

    def enqueue(self, packet: PacketRecord) -> int:
        if packet.size_bytes <= 0:
            raise ValueError("packet size must be > 0")
        packet.sn = self._next_sn
        self._next_sn += 1
        packet.state = PacketState.QUEUED
        self.queue.append(packet)
        self._queued_bits += packet.bits
        self.enqueued += 1
        return self._queued_bits

    def dequeue(self, max_bits: int, now: float) -> list[PacketRecord]:
        """Greedy FIFO of whole packets (AM resends first) fitting in ``max_bits``."""
        out = []
        budget = max_bits
        for q in (self.retx_queue, self.queue):
            while q and q[0].bits <= budget:
                p = q.popleft()
                budget -= p.bits
                self._queued_bits -= p.bits
                p.state = PacketState.IN_FLIGHT
                if p.first_tx is None:
                    p.first_tx = now
                self.outstanding[p.sn] = p
                out.append(p)
            if q:
                break  # preserve FIFO: never overtake a packet that did not fit
        return out

    def on_tb_outcome(self, packets: list[PacketRecord], delivered: bool, now: float) -> RlcResult:
        """Final outcome of a TB (after HARQ) at time ``now``."""
        res = RlcResult()
        for p in packets:
            if self.outstanding.get(p.sn) is not p or p.state is not PacketState.IN_FLIGHT:
                raise ProtocolError(f"packet {p.pid} (sn {p.sn}) is not in flight on flow {self.flow}")
        if delivered:
            for p in packets:
                del self.outstanding[p.sn]
                self._receive(p, now, res)
        else:
            for p in packets:
                if self.config.mode is RlcMode.UM:
                    del self.outstanding[p.sn]
                    self._drop(p, now, res)
                else:
                    p.state = PacketState.LOST
                    self.lost_sns.add(p.sn)
                    res.lost.append(p)
        self._check_timer(now, res)
        return res

    # receiver ----------------------------------------------------------
    def _receive(self, p: PacketRecord, now: float, res: RlcResult) -> None:
        if p.sn < self.rx_next or p.sn in self.rx_buffer or p.sn in self.rx_skip:
            # arrived after the receiver moved past it
            self._drop(p, now, res)
            return
        p.state = PacketState.RECEIVED
        self.rx_buffer[p.sn] = p
        self.rx_highest = max(self.rx_highest, p.sn)
        self._advance(now, res)

    def _advance(self, now: float, res: RlcResult) -> None:
        while True:
            if self.rx_next in self.rx_buffer:
                p = self.rx_buffer.pop(self.rx_next)
                p.state = PacketState.DELIVERED
                p.delivered = now
                self.n_delivered += 1
                res.delivered.append(p)
            elif self.rx_next in self.rx_skip:
                self.rx_skip.discard(self.rx_next)
            else:
                break
            self.rx_next += 1

    def _drop(self, p: PacketRecord, now: float, res: RlcResult) -> None:
        p.state = PacketState.DROPPED
        p.dropped = now
        self.n_dropped += 1
        res.dropped.append(p)

    def _check_timer(self, now: float, res: RlcResult) -> None:
        if self.timer_expiry is not None and self.rx_next >= self.timer_sn:
            self.timer_expiry = None
        if self.timer_expiry is None and (self.rx_buffer or self.lost_sns):
            # a gap seen by the receiver or a loss reported by the ideal AM status both start the timer
            self.timer_sn = max(self.rx_highest, max(self.lost_sns, default=-1)) + 1
            self.timer_expiry = now + self.config.reordering_timeout
            self.timer_token += 1
            res.timer = self.timer_expiry

    def on_timer(self, token: int, now: float) -> RlcResult:
        """Reordering timer expiry; stale tokens are ignored."""
        res = RlcResult()
        if token != self.timer_token or self.timer_expiry is None:
            return res
        self.timer_expiry = None
        if self.config.mode is RlcMode.UM:
            # give up on the gap: skip every missing SN below the timer mark
            for sn in range(self.rx_next, self.timer_sn):
                if sn not in self.rx_buffer:
                    self.rx_skip.add(sn)
            self._advance(now, res)
        else:
            for sn in range(self.rx_next, self.timer_sn):
                p = self.outstanding.get(sn)
                if p is None or p.state is not PacketState.LOST:
                    continue
                del self.outstanding[sn]
                self.lost_sns.discard(sn)
                if p.am_retx >= self.config.max_am_retx:
                    log.info("AM drop of packet %d after %d retransmissions", p.pid, p.am_retx)
                    self._drop(p, now, res)
                    self.rx_skip.add(sn)
                else:
                    p.am_retx += 1
                    p.state = PacketState.QUEUED
                    self.retx_queue.append(p)
                    self._queued_bits += p.bits
            self.retx_queue = deque(sorted(self.retx_queue, key=lambda q: q.sn))
            self._advance(now, res)
        self._check_timer(now, res)
        return res

    # bookkeeping -------------------------------------------------------
    @property
    def in_system(self) -> int:
        """Packets queued, in flight, lost-awaiting-resend or buffered at the receiver."""
        return len(self.queue) + len(self.retx_queue) + len(self.outstanding) + len(self.rx_buffer)

    def conserved(self) -> bool:
        return self.enqueued == self.n_delivered + self.n_dropped + self.in_system


def rlc_enqueue(entity: RlcEntity, packet: PacketRecord) -> int:
    return entity.enqueue(packet)


def rlc_on_tb_outcome(entity: RlcEntity, packets, delivered: bool, now: float) -> RlcResult:
    return entity.on_tb_outcome(list(packets), delivered, now)
