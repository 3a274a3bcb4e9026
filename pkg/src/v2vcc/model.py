"""Domain types shared by the naming, forwarding and protocol layers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Euclidean distance between two planar points, in meters."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class Offer:
    """A price/amount proposal exchanged during negotiation.

    ``hard`` marks a final take-it-or-leave-it counter.
    """

    price_per_kwh: float
    amount_kwh: float
    hard: bool = False

    def __post_init__(self):
        if self.price_per_kwh <= 0:
            raise ValueError("offer price must be positive")
        if self.amount_kwh <= 0:
            raise ValueError("offer amount must be positive")


@dataclass(frozen=True)
class MeetingProposal:
    """A charging rendezvous: a minutes-of-day window plus an optional place."""

    window_start: int
    window_end: int
    location: tuple[float, float] | None = None

    def __post_init__(self):
        if self.window_start > self.window_end:
            raise ValueError("meeting window start exceeds end")


@dataclass
class SupplierProfile:
    """A selling EV's advertised state.

    ``free_slots`` are non-overlapping (start, end) minutes-of-day pairs.
    ``soc`` and ``consumption_rate`` feed the reachability check for meetings.
    """

    pid: str
    location: tuple[float, float]
    price_per_kwh: float
    available_energy: float
    reputation: float
    free_slots: tuple[tuple[int, int], ...] = ((0, 1439),)
    soc: float = 10.0
    consumption_rate: float = 0.15
    reserved_until: float | None = None

    def __post_init__(self):
        if self.available_energy < 0:
            raise ValueError("available energy must be non-negative")
        if self.soc < 0:
            raise ValueError("soc must be non-negative")
        if not 0 <= self.reputation <= 10:
            raise ValueError("reputation must be within 0..10")
        slots = sorted(self.free_slots)
        for start, end in slots:
            if start > end:
                raise ValueError("slot start exceeds end")
        for (_, e1), (s2, _) in zip(slots, slots[1:]):
            if s2 <= e1:
                raise ValueError("slots overlap")

    def to_payload(self) -> bytes:
        d = asdict(self)
        d["location"] = list(self.location)
        d["free_slots"] = [list(s) for s in self.free_slots]
        return json.dumps(d, sort_keys=True).encode()

    @classmethod
    def from_payload(cls, payload: bytes) -> "SupplierProfile":
        d = json.loads(payload.decode())
        d["location"] = tuple(d["location"])
        d["free_slots"] = tuple(tuple(s) for s in d["free_slots"])
        return cls(**d)


@dataclass(frozen=True)
class TransactionRecord:
    """The confirmed outcome of one coordination session.

    Constructed independently at the consumer and the supplier; the two
    copies must serialize identically.
    """

    cid: str
    pid: str
    price: float
    amount: float
    meeting: MeetingProposal
    confirmed_at: int

    def serialize(self) -> bytes:
        d = {
            "cid": self.cid,
            "pid": self.pid,
            "price": self.price,
            "amount": self.amount,
            "window_start": self.meeting.window_start,
            "window_end": self.meeting.window_end,
            "location": list(self.meeting.location) if self.meeting.location else None,
            "confirmed_at": self.confirmed_at,
        }
        return json.dumps(d, sort_keys=True).encode()
