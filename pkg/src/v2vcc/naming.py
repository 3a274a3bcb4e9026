"""Hierarchical name grammar for the charging coordination protocol.

Every message rides on a textual name under the ``/FastCharging`` prefix.
Broadcast discovery interests put the phase keyword second; every other
phase is addressed point-to-point and carries the producer id second:

    /FastCharging/Discovery/<loc>/<price>/<energy>/<rep>/<ws>/<we>/<ts>
    /FastCharging/<pid>/Verification/<ts>
    /FastCharging/<pid>/Negotiation/<price>/<amount>/<ts>
    /FastCharging/<pid>/Coordination/<ws>/<we>/<loc>/<ts>
    /FastCharging/<pid>/Coordination/<digest>/<ts>        (confirmation)

Absent optional fields encode as the literal component "-" so positions
stay fixed. Confirmation reuses the "Coordination" keyword and is told
apart by component count. Point-to-point interests may carry a trailing
requester id, which producers use to key per-consumer session state.
Discovery data names append the responder's pid to the interest name.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .model import Offer, MeetingProposal, SupplierProfile, distance

ROOT = "FastCharging"
ABSENT = "-"

_FLOAT = r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?"
_LOCATION_RE = re.compile(
    rf"(?P<x>{_FLOAT}),(?P<y>{_FLOAT})(?:\+(?P<r>{_FLOAT})(?P<unit>km|m))?$"
)


class MalformedName(Exception):
    """A name that does not follow any phase template."""


class Phase(str, enum.Enum):
    DISCOVERY = "Discovery"
    VERIFICATION = "Verification"
    NEGOTIATION = "Negotiation"
    COORDINATION = "Coordination"
    CONFIRMATION = "Confirmation"


@dataclass(frozen=True)
class Name:
    """An ordered component path, rendered with "/" separators."""

    components: tuple[str, ...]

    def __post_init__(self):
        if not self.components:
            raise MalformedName("name must have at least one component")
        for c in self.components:
            if not c or "/" in c:
                raise MalformedName(f"bad name component: {c!r}")

    def __str__(self) -> str:
        return "/" + "/".join(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def append(self, component: str) -> "Name":
        return Name(self.components + (component,))

    def starts_with(self, other: "Name") -> bool:
        n = len(other.components)
        return self.components[:n] == other.components

    @classmethod
    def from_string(cls, text: str) -> "Name":
        parts = text.strip("/").split("/")
        return cls(tuple(parts))


@dataclass(frozen=True)
class DiscoveryFilter:
    """Optional bounds a consumer attaches to a discovery interest.

    All-absent means "match every supplier". ``radius_m`` requires
    ``center``. Windows are minutes of day.
    """

    center: tuple[float, float] | None = None
    radius_m: float | None = None
    max_price_per_kwh: float | None = None
    min_energy: float | None = None
    min_reputation: float | None = None
    window_start: int | None = None
    window_end: int | None = None

    def __post_init__(self):
        if self.radius_m is not None and self.center is None:
            raise ValueError("radius requires a center")
        for bound in (self.radius_m, self.max_price_per_kwh, self.min_energy,
                      self.min_reputation, self.window_start, self.window_end):
            if bound is not None and bound < 0:
                raise ValueError("filter bounds must be non-negative")
        if (self.window_start is not None and self.window_end is not None
                and self.window_start > self.window_end):
            raise ValueError("window start exceeds end")


EMPTY_FILTER = DiscoveryFilter()


@dataclass(frozen=True)
class ParsedMessage:
    """The decoded meaning of a protocol name.

    Exactly one phase-specific field is populated, matching ``phase``.
    ``pid`` is absent only for broadcast discovery interests. ``requester``
    is the optional consumer id suffix on point-to-point interests; offers
    carried in names are consumer offers and are never hard.
    """

    phase: Phase
    timestamp: int
    pid: str | None = None
    filter: DiscoveryFilter | None = None
    offer: Offer | None = None
    meeting: MeetingProposal | None = None
    agreement_digest: str | None = None
    requester: str | None = None

    def __post_init__(self):
        expected = {
            Phase.DISCOVERY: self.filter is not None,
            Phase.VERIFICATION: True,
            Phase.NEGOTIATION: self.offer is not None,
            Phase.COORDINATION: self.meeting is not None,
            Phase.CONFIRMATION: self.agreement_digest is not None,
        }
        if not expected[self.phase]:
            raise ValueError(f"missing payload field for phase {self.phase.value}")
        others = [self.filter, self.offer, self.meeting, self.agreement_digest]
        keep = {Phase.DISCOVERY: 0, Phase.NEGOTIATION: 1,
                Phase.COORDINATION: 2, Phase.CONFIRMATION: 3}.get(self.phase)
        for i, f in enumerate(others):
            if i != keep and f is not None:
                raise ValueError("phase-specific field set for the wrong phase")
        if self.phase is not Phase.DISCOVERY and self.pid is None:
            raise ValueError(f"{self.phase.value} requires a pid")
        if self.offer is not None and self.offer.hard:
            raise ValueError("name-borne offers are never hard")


def _fmt_num(v: float) -> str:
    """Render a number compactly: integers bare, cents as two decimals."""
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    two = f"{v:.2f}"
    if float(two) == v:
        return two
    return repr(v)


def _parse_num(s: str, what: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise MalformedName(f"bad numeric component for {what}: {s!r}") from None


def _fmt_opt(v: float | None) -> str:
    return ABSENT if v is None else _fmt_num(v)


def _parse_opt(s: str, what: str) -> float | None:
    return None if s == ABSENT else _parse_num(s, what)


def _fmt_location(center, radius_m) -> str:
    if center is None:
        return ABSENT
    base = f"{_fmt_num(center[0])},{_fmt_num(center[1])}"
    if radius_m is None:
        return base
    km = radius_m / 1000.0
    if km * 1000.0 == radius_m:
        return f"{base}+{_fmt_num(km)}km"
    return f"{base}+{_fmt_num(radius_m)}m"


def _parse_location(s: str):
    if s == ABSENT:
        return None, None
    m = _LOCATION_RE.fullmatch(s)
    if m is None:
        raise MalformedName(f"bad location component: {s!r}")
    center = (float(m.group("x")), float(m.group("y")))
    if m.group("r") is None:
        return center, None
    radius = float(m.group("r"))
    if m.group("unit") == "km":
        radius *= 1000.0
    return center, radius


def _fmt_point(p: tuple[float, float] | None) -> str:
    if p is None:
        return ABSENT
    return f"{_fmt_num(p[0])},{_fmt_num(p[1])}"


def _parse_point(s: str) -> tuple[float, float] | None:
    if s == ABSENT:
        return None
    center, radius = _parse_location(s)
    if radius is not None:
        raise MalformedName(f"unexpected radius in point: {s!r}")
    return center


def _parse_minutes(s: str, what: str) -> int | None:
    if s == ABSENT:
        return None
    try:
        return int(s)
    except ValueError:
        raise MalformedName(f"bad minutes component for {what}: {s!r}") from None


def encode_name(msg: ParsedMessage) -> Name:
    """Render a message as its canonical name."""
    ts = str(msg.timestamp)
    if msg.phase is Phase.DISCOVERY:
        f = msg.filter
        comps = [ROOT, Phase.DISCOVERY.value,
                 _fmt_location(f.center, f.radius_m),
                 _fmt_opt(f.max_price_per_kwh),
                 _fmt_opt(f.min_energy),
                 _fmt_opt(f.min_reputation),
                 ABSENT if f.window_start is None else str(f.window_start),
                 ABSENT if f.window_end is None else str(f.window_end),
                 ts]
        if msg.pid is not None:
            comps.append(msg.pid)
        return Name(tuple(comps))
    comps = [ROOT, msg.pid]
    if msg.phase is Phase.VERIFICATION:
        comps += [Phase.VERIFICATION.value, ts]
    elif msg.phase is Phase.NEGOTIATION:
        comps += [Phase.NEGOTIATION.value,
                  _fmt_num(msg.offer.price_per_kwh),
                  _fmt_num(msg.offer.amount_kwh), ts]
    elif msg.phase is Phase.COORDINATION:
        m = msg.meeting
        comps += [Phase.COORDINATION.value, str(m.window_start),
                  str(m.window_end), _fmt_point(m.location), ts]
    else:
        # Confirmation reuses the Coordination keyword; the shorter
        # template disambiguates.
        comps += [Phase.COORDINATION.value, msg.agreement_digest, ts]
    if msg.requester is not None:
        comps.append(msg.requester)
    return Name(tuple(comps))


def _parse_ts(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise MalformedName(f"bad timestamp: {s!r}") from None


def parse_name(name: Name) -> ParsedMessage:
    """Inverse of :func:`encode_name`.

    Raises :class:`MalformedName` when the phase keyword is missing, a
    numeric field fails to parse, or the component count matches no
    template.
    """
    c = name.components
    if not c or c[0] != ROOT:
        raise MalformedName(f"name must start with /{ROOT}: {name}")
    if len(c) >= 2 and c[1] == Phase.DISCOVERY.value:
        if len(c) not in (9, 10):
            raise MalformedName(f"discovery template needs 9 or 10 components: {name}")
        center, radius = _parse_location(c[2])
        filt = DiscoveryFilter(
            center=center,
            radius_m=radius,
            max_price_per_kwh=_parse_opt(c[3], "max price"),
            min_energy=_parse_opt(c[4], "min energy"),
            min_reputation=_parse_opt(c[5], "min reputation"),
            window_start=_parse_minutes(c[6], "window start"),
            window_end=_parse_minutes(c[7], "window end"),
        )
        pid = c[9] if len(c) == 10 else None
        return ParsedMessage(phase=Phase.DISCOVERY, timestamp=_parse_ts(c[8]),
                             pid=pid, filter=filt)
    if len(c) < 4:
        raise MalformedName(f"name matches no phase template: {name}")
    pid, keyword = c[1], c[2]
    rest = c[3:]
    if keyword == Phase.VERIFICATION.value and len(rest) in (1, 2):
        return ParsedMessage(phase=Phase.VERIFICATION, pid=pid,
                             timestamp=_parse_ts(rest[0]),
                             requester=rest[1] if len(rest) == 2 else None)
    if keyword == Phase.NEGOTIATION.value and len(rest) in (3, 4):
        offer = Offer(price_per_kwh=_parse_num(rest[0], "price"),
                      amount_kwh=_parse_num(rest[1], "amount"))
        return ParsedMessage(phase=Phase.NEGOTIATION, pid=pid, offer=offer,
                             timestamp=_parse_ts(rest[2]),
                             requester=rest[3] if len(rest) == 4 else None)
    if keyword == Phase.COORDINATION.value and len(rest) in (4, 5):
        ws = _parse_minutes(rest[0], "window start")
        we = _parse_minutes(rest[1], "window end")
        if ws is None or we is None:
            raise MalformedName(f"coordination window is mandatory: {name}")
        meeting = MeetingProposal(window_start=ws, window_end=we,
                                  location=_parse_point(rest[2]))
        return ParsedMessage(phase=Phase.COORDINATION, pid=pid, meeting=meeting,
                             timestamp=_parse_ts(rest[3]),
                             requester=rest[4] if len(rest) == 5 else None)
    if keyword == Phase.COORDINATION.value and len(rest) in (2, 3):
        return ParsedMessage(phase=Phase.CONFIRMATION, pid=pid,
                             agreement_digest=rest[0],
                             timestamp=_parse_ts(rest[1]),
                             requester=rest[2] if len(rest) == 3 else None)
    raise MalformedName(f"name matches no phase template: {name}")


def is_discovery_name(name: Name) -> bool:
    return len(name.components) >= 2 and name.components[1] == Phase.DISCOVERY.value


def matches_filter(profile: SupplierProfile, filt: DiscoveryFilter) -> bool:
    """True iff every present bound in ``filt`` is satisfied by ``profile``."""
    if filt.center is not None and filt.radius_m is not None:
        if distance(profile.location, filt.center) > filt.radius_m:
            return False
    if filt.max_price_per_kwh is not None and profile.price_per_kwh > filt.max_price_per_kwh:
        return False
    if filt.min_energy is not None and profile.available_energy < filt.min_energy:
        return False
    if filt.min_reputation is not None and profile.reputation < filt.min_reputation:
        return False
    if filt.window_start is not None or filt.window_end is not None:
        ws = filt.window_start if filt.window_start is not None else 0
        we = filt.window_end if filt.window_end is not None else 1439
        if not any(s <= we and e >= ws for s, e in profile.free_slots):
            return False
    return True


def data_name_for(interest_name: Name, pid: str) -> Name:
    """The data name a producer uses when answering ``interest_name``.

    Broadcast discovery answers get the responder's pid appended so each
    supplier produces a distinct data name; point-to-point names already
    embed the pid and are reused verbatim.
    """
    msg = parse_name(interest_name)
    if msg.phase is Phase.DISCOVERY and msg.pid is None:
        return interest_name.append(pid)
    if msg.pid != pid:
        raise MalformedName(
            f"producer {pid} cannot answer a name addressed to {msg.pid}")
    return interest_name
