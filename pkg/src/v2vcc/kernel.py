"""Deterministic discrete-event engine, broadcast medium and mobility.

All simulation times are milliseconds (fractional). The kernel is
single-threaded; equal-time events fire in insertion order, so a given
scenario and seed always replay bit-identically.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

MPH_TO_MPS = 0.44704
ARENA_M = (1000.0, 1000.0)


@dataclass
class ChannelConfig:
    """Broadcast-medium parameters. Links are assumed to never fill, so a
    transmission costs serialization plus propagation delay only; MAC
    contention is subsumed by ``loss_rate``."""

    bandwidth_bps: float = 24_000_000.0
    loss_rate: float = 0.0
    propagation_speed: float = 3.0e8
    comm_range_m: float = 300.0
    header_overhead_bytes: int = 0
    packet_bytes: int = 256

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be positive")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError("loss rate must be within [0, 1]")


@dataclass
class MobilityState:
    """Constant-velocity motion reflecting at the arena boundary."""

    origin: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    speed_mph: float = 0.0

    @classmethod
    def moving(cls, origin, speed_mph, heading_rad):
        mps = speed_mph * MPH_TO_MPS
        return cls(origin=origin, speed_mph=speed_mph,
                   velocity=(mps * math.cos(heading_rad), mps * math.sin(heading_rad)))

    @property
    def stationary(self) -> bool:
        return self.velocity == (0.0, 0.0)


def _reflect(x: float, limit: float) -> float:
    period = 2.0 * limit
    p = x % period
    return p if p <= limit else period - p


def position_at(m: MobilityState, t_ms: float, arena=ARENA_M) -> tuple[float, float]:
    """Position at time ``t_ms``, folding at the arena walls."""
    if t_ms < 0:
        raise ValueError("time must be non-negative")
    t_s = t_ms / 1000.0
    return (_reflect(m.origin[0] + m.velocity[0] * t_s, arena[0]),
            _reflect(m.origin[1] + m.velocity[1] * t_s, arena[1]))


class EventLog:
    """Append-only audit trail of forwarding-plane actions.

    Line format: ``time_ms,node_id,event,name,nonce`` with events in
    {SEND, RECV, DROP, CACHE_HIT, AGGREGATE, TIMEOUT}.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: list[tuple[float, str, str, str, str]] = []

    def add(self, t: float, node: str, event: str, name: str, nonce) -> None:
        if self.enabled:
            self.records.append((t, node, event, name, str(nonce)))

    def lines(self):
        return [f"{repr(t)},{node},{event},{name},{nonce}"
                for t, node, event, name, nonce in self.records]


class _Handle:
    """Cancellation handle for a scheduled event."""

    __slots__ = ("cell",)

    def __init__(self, cell):
        self.cell = cell

    def cancel(self):
        self.cell[0] = None


class Kernel:
    """Event heap ordered by (time, insertion sequence).

    Heap entries are plain tuples ``(fire_at, seq, [action])`` so ordering
    compares in C; the unique ``seq`` means the action cell never gets
    compared."""

    def __init__(self, log: EventLog | None = None):
        self.now = 0.0
        self._seq = 0
        self._heap: list = []
        self.log = log if log is not None else EventLog()

    def schedule(self, delay: float, action) -> _Handle:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        cell = [action]
        heapq.heappush(self._heap, (self.now + delay, self._seq, cell))
        self._seq += 1
        return _Handle(cell)

    def run(self, until: float | None = None) -> None:
        heap = self._heap
        pop = heapq.heappop
        while heap:
            if until is not None and heap[0][0] > until:
                break
            fire_at, _, cell = pop(heap)
            action = cell[0]
            if action is None:
                continue
            self.now = fire_at
            # Packet deliveries are stored as (handler, packet) pairs to
            # avoid a closure allocation per delivery.
            if type(action) is tuple:
                action[0](action[1])
            else:
                action()
        if until is not None and self.now < until:
            self.now = until


@dataclass
class _Station:
    mobility: MobilityState
    receive: "callable"


class Medium:
    """Single shared broadcast channel between all stations.

    Every in-range receiver gets its own delivery event, independently
    dropped with the configured loss probability from the channel RNG
    stream (drawn in sorted node-id order for determinism).
    """

    def __init__(self, kernel: Kernel, config: ChannelConfig, rng: random.Random):
        self.kernel = kernel
        self.config = config
        self.rng = rng
        self.stations: dict[str, _Station] = {}
        self.dropped = 0
        self.transmissions = 0
        self._all_static = True
        self._static_links: dict[str, list[tuple[float, "callable"]]] | None = None

    def add_station(self, node_id: str, mobility: MobilityState, receive) -> None:
        self.stations[node_id] = _Station(mobility, receive)
        if not mobility.stationary:
            self._all_static = False
        self._static_links = None

    def _serialization_ms(self, size_bytes: int) -> float:
        bits = (size_bytes + self.config.header_overhead_bytes) * 8
        return bits / self.config.bandwidth_bps * 1000.0

    def _links_from(self, sender: str):
        # With only stationary nodes the in-range sets and delays never
        # change, so compute them once.
        all_static = self._all_static
        if all_static:
            if self._static_links is None:
                self._static_links = {}
            cached = self._static_links.get(sender)
            if cached is not None:
                return cached
        now = self.kernel.now
        src = position_at(self.stations[sender].mobility, now)
        links = []
        for nid in sorted(self.stations):
            if nid == sender:
                continue
            st = self.stations[nid]
            dst = position_at(st.mobility, now)
            d = math.hypot(src[0] - dst[0], src[1] - dst[1])
            if d > self.config.comm_range_m:
                continue
            prop_ms = d / self.config.propagation_speed * 1000.0
            links.append((prop_ms, st.receive))
        if all_static:
            self._static_links[sender] = links
        return links

    def broadcast(self, sender: str, packet, size_bytes: int | None = None) -> int:
        """Schedule delivery of ``packet`` to every in-range station.

        Returns the number of deliveries actually scheduled (losses
        excluded)."""
        if sender not in self.stations:
            raise KeyError(f"unknown sender {sender!r}")
        size = self.config.packet_bytes if size_bytes is None else size_bytes
        ser_ms = self._serialization_ms(size)
        loss = self.config.loss_rate
        self.transmissions += 1
        delivered = 0
        kernel = self.kernel
        base = kernel.now + ser_ms
        heap, seq, push = kernel._heap, kernel._seq, heapq.heappush
        rand = self.rng.random
        for prop_ms, receive in self._links_from(sender):
            if loss > 0.0 and rand() < loss:
                self.dropped += 1
                continue
            push(heap, (base + prop_ms, seq, [(receive, packet)]))
            seq += 1
            delivered += 1
        kernel._seq = seq
        return delivered
