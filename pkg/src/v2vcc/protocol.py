"""Consumer and supplier state machines for the five coordination phases.

A session walks discovery -> verification -> negotiation -> coordination
-> confirmation, strictly in order. All networking goes through the
owning node's interest/data primitives; sessions never share state except
via packets. Supplier-side per-consumer state is keyed by the requester
id carried as the trailing component of point-to-point interest names.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Callable

from .kernel import Kernel, MobilityState, position_at
from .model import Offer, MeetingProposal, SupplierProfile, TransactionRecord, distance
from .naming import (DiscoveryFilter, ParsedMessage, Phase, Name, MalformedName,
                     encode_name, parse_name, matches_filter, data_name_for)
from .ndn import (NdnNode, Interest, Data, make_data, verify_signature,
                  DISCOVERY_FRESHNESS_MS, SESSION_FRESHNESS_MS, DEFAULT_MAX_RETX)
import json

DEFAULT_RESERVE_MARGIN_KWH = 0.5
RESERVATION_WINDOW_MS = 5 * 60 * 1000.0
LOCATION_DRIFT_TOLERANCE_M = 500.0
DEFAULT_WEIGHTS = ("price", "distance", "reputation")


class ProtocolError(Exception):
    pass


class DiscoveryFailed(ProtocolError):
    pass


class VerificationFailed(ProtocolError):
    pass


class AllCandidatesRejected(ProtocolError):
    pass


class NegotiationFailed(ProtocolError):
    pass


class CoordinationFailed(ProtocolError):
    pass


class ConfirmationMismatch(ProtocolError):
    pass


# ---------------------------------------------------------------------------
# Pure decision logic
# ---------------------------------------------------------------------------

def feasible_meeting(soc_kwh: float, consumption_rate: float,
                     frm: tuple[float, float], to: tuple[float, float],
                     reserve_kwh: float = DEFAULT_RESERVE_MARGIN_KWH) -> bool:
    """True iff the trip to the meeting point leaves the safety margin."""
    if consumption_rate <= 0:
        raise ValueError("consumption rate must be positive")
    needed = distance(frm, to) / 1000.0 * consumption_rate
    return needed <= soc_kwh - reserve_kwh


def select_supplier(candidates: list[SupplierProfile],
                    consumer_pos: tuple[float, float],
                    weights: tuple[str, ...] = DEFAULT_WEIGHTS) -> str:
    """Pick the best candidate under lexicographic criteria.

    Default order: lowest price, then shortest distance, then highest
    reputation; any remaining tie breaks on pid. ``weights`` may reorder
    the three criteria.
    """
    if not candidates:
        raise ValueError("no candidates")

    def key(p: SupplierProfile):
        parts = []
        for w in weights:
            if w == "price":
                parts.append(p.price_per_kwh)
            elif w == "distance":
                parts.append(distance(p.location, consumer_pos))
            elif w == "reputation":
                parts.append(-p.reputation)
            else:
                raise ValueError(f"unknown criterion {w!r}")
        parts.append(p.pid)
        return tuple(parts)

    return min(candidates, key=key).pid


def rank_suppliers(candidates, consumer_pos, weights=DEFAULT_WEIGHTS):
    """Candidates ordered best-first under :func:`select_supplier`."""
    remaining = list(candidates)
    ranked = []
    while remaining:
        pid = select_supplier(remaining, consumer_pos, weights)
        idx = next(i for i, p in enumerate(remaining) if p.pid == pid)
        ranked.append(remaining.pop(idx))
    return ranked


def agreement_digest(price: float, amount: float, meeting: MeetingProposal) -> str:
    loc = "-" if meeting.location is None else f"{meeting.location[0]!r},{meeting.location[1]!r}"
    text = f"{price!r}|{amount!r}|{meeting.window_start}|{meeting.window_end}|{loc}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class NegotiationPolicy:
    """Consumer/supplier bargaining parameters.

    Defaults terminate in at most ``max_rounds`` counter-offers: the
    supplier flags its final counter as hard.
    """

    opening_discount: float = 0.10
    concession_step: float = 0.5
    max_rounds: int = 4
    floor_ratio: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.opening_discount < 1.0:
            raise ValueError("opening discount must be in [0, 1)")
        if not 0.0 < self.concession_step <= 1.0:
            raise ValueError("concession step must be in (0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max rounds must be at least 1")
        if not 0.0 < self.floor_ratio <= 1.0:
            raise ValueError("floor ratio must be in (0, 1]")


class SupplierNegotiator:
    """Per-consumer bargaining state on the selling side.

    Counters at the midpoint of the incoming offer and its own previous
    counter, clamped to its floor; once ``max_rounds`` counters are out,
    the next one is hard.
    """

    def __init__(self, list_price: float, floor: float, max_rounds: int):
        if floor > list_price:
            raise ValueError("floor above list price")
        self.list_price = list_price
        self.floor = floor
        self.max_rounds = max_rounds
        self.last_counter = list_price
        self.counter_rounds = 0
        self.agreed_price: float | None = None

    def on_offer(self, price: float, requested_kwh: float, remaining_kwh: float):
        """Returns a response dict: price, amount, hard, agreed."""
        amount = round(min(requested_kwh, max(remaining_kwh, 0.0)), 4)
        if amount <= 0:
            return {"price": self.last_counter, "amount": 0.0,
                    "hard": True, "agreed": False}
        if price >= self.last_counter:
            self.agreed_price = self.last_counter
            return {"price": self.last_counter, "amount": amount,
                    "hard": False, "agreed": True}
        counter = max(self.floor, round((price + self.last_counter) / 2.0, 4))
        if counter <= price:
            self.agreed_price = price
            return {"price": price, "amount": amount,
                    "hard": False, "agreed": True}
        self.counter_rounds += 1
        self.last_counter = counter
        hard = self.counter_rounds >= self.max_rounds
        return {"price": counter, "amount": amount, "hard": hard, "agreed": False}


class ConsumerNegotiator:
    """Bargaining state on the buying side.

    Opens below list price, concedes toward each counter by a fixed
    fraction of the gap, and accepts a hard counter iff it is within the
    budget ceiling.
    """

    def __init__(self, list_price: float, desired_kwh: float,
                 policy: NegotiationPolicy, ceiling: float):
        self.policy = policy
        self.ceiling = ceiling
        self.desired_kwh = desired_kwh
        self.last_offer = round(list_price * (1.0 - policy.opening_discount), 4)
        self.exchanges = 0

    def opening_offer(self) -> Offer:
        self.exchanges = 1
        return Offer(price_per_kwh=self.last_offer, amount_kwh=self.desired_kwh)

    def on_counter(self, response: dict):
        """Returns ("done", price, amount), ("offer", Offer) or ("fail", why)."""
        price, amount = response["price"], response["amount"]
        if amount <= 0:
            return ("fail", "supplier has no energy left")
        if response["agreed"]:
            return ("done", price, amount)
        if response["hard"]:
            if price <= self.ceiling:
                return self._echo(price, amount)
            return ("fail", "hard offer above budget ceiling")
        nxt = round(self.last_offer
                    + self.policy.concession_step * (price - self.last_offer), 4)
        if nxt >= price:
            return self._echo(price, amount)
        self.last_offer = nxt
        self.exchanges += 1
        return ("offer", Offer(price_per_kwh=nxt, amount_kwh=amount))

    def _echo(self, price, amount):
        # Accept by repeating the supplier's counter back verbatim.
        self.last_offer = price
        self.exchanges += 1
        return ("offer", Offer(price_per_kwh=price, amount_kwh=amount))


# ---------------------------------------------------------------------------
# Supplier application
# ---------------------------------------------------------------------------

@dataclass
class _Reservation:
    amount: float
    until: float
    active: bool = True


@dataclass
class _SupplierSession:
    negotiator: SupplierNegotiator
    agreement: tuple[float, float] | None = None  # (price, amount)
    meeting: MeetingProposal | None = None
    reservation: _Reservation | None = None


class SupplierApp:
    """Producer side: answers discovery and drives the per-consumer
    verification/negotiation/coordination/confirmation exchanges."""

    def __init__(self, profile: SupplierProfile, node: NdnNode, kernel: Kernel,
                 rng: random.Random, mobility: MobilityState | None = None,
                 policy: NegotiationPolicy | None = None,
                 reserve_margin_kwh: float = DEFAULT_RESERVE_MARGIN_KWH):
        self.profile = profile
        self.node = node
        self.kernel = kernel
        self.rng = rng
        self.mobility = mobility or MobilityState(origin=profile.location)
        self.policy = policy or NegotiationPolicy()
        self.reserve_margin_kwh = reserve_margin_kwh
        self.sessions: dict[str, _SupplierSession] = {}
        self.reservations: list[_Reservation] = []
        self.transactions: list[TransactionRecord] = []
        node.register_producer(self._claims, self._handle_interest)

    @property
    def pid(self) -> str:
        return self.profile.pid

    def position(self) -> tuple[float, float]:
        return position_at(self.mobility, self.kernel.now)

    def snapshot(self) -> SupplierProfile:
        p = self.profile
        return SupplierProfile(pid=p.pid, location=self.position(),
                               price_per_kwh=p.price_per_kwh,
                               available_energy=p.available_energy,
                               reputation=p.reputation, free_slots=p.free_slots,
                               soc=p.soc, consumption_rate=p.consumption_rate)

    def reserved_kwh(self, now: float) -> float:
        return sum(r.amount for r in self.reservations
                   if r.active and r.until > now)

    def remaining_kwh(self, now: float) -> float:
        return self.profile.available_energy - self.reserved_kwh(now)

    # -- forwarding-plane hooks -------------------------------------------

    def _claims(self, name: Name) -> bool:
        c = name.components
        return len(c) >= 2 and (c[1] == Phase.DISCOVERY.value or c[1] == self.pid)

    def _handle_interest(self, interest: Interest) -> None:
        try:
            msg = parse_name(interest.name)
        except MalformedName:
            self.node.malformed_dropped += 1
            return
        delay = self.rng.uniform(0.01, 0.05)  # local processing time
        self.kernel.schedule(delay, lambda: self._respond(interest, msg))

    def _respond(self, interest: Interest, msg: ParsedMessage) -> None:
        now = self.kernel.now
        if msg.phase is Phase.DISCOVERY:
            payload = self._discovery_payload(interest, msg, now)
            freshness = DISCOVERY_FRESHNESS_MS
        else:
            payload = self._session_payload(msg, now)
            freshness = SESSION_FRESHNESS_MS
        if payload is None:
            return
        name = data_name_for(interest.name, self.pid)
        self.node.put_data(make_data(name, payload, self.pid, freshness))

    def _discovery_payload(self, interest, msg, now):
        if self.pid in interest.exclude_pids:
            return None
        if self.remaining_kwh(now) <= 0:
            return None
        if not matches_filter(self.snapshot(), msg.filter):
            return None
        return self.snapshot().to_payload()

    def _session_payload(self, msg: ParsedMessage, now: float):
        if msg.phase is Phase.VERIFICATION:
            return self.snapshot().to_payload()
        if msg.requester is None:
            return None  # session phases need a requester id
        if msg.phase is Phase.NEGOTIATION:
            return self._negotiate(msg.requester, msg.offer, now)
        if msg.phase is Phase.COORDINATION:
            return self._coordinate(msg.requester, msg.meeting, now)
        return self._confirm(msg.requester, msg.agreement_digest, msg.timestamp)

    # -- phase logic -------------------------------------------------------

    def _session(self, cid: str) -> _SupplierSession:
        if cid not in self.sessions:
            p = self.profile
            floor = round(p.price_per_kwh * self.policy.floor_ratio, 4)
            self.sessions[cid] = _SupplierSession(
                negotiator=SupplierNegotiator(p.price_per_kwh, floor,
                                              self.policy.max_rounds))
        return self.sessions[cid]

    def _negotiate(self, cid: str, offer: Offer, now: float) -> bytes:
        session = self._session(cid)
        if session.agreement is not None:
            # Retransmitted acceptance of an already closed deal.
            price, amount = session.agreement
            resp = {"price": price, "amount": amount, "hard": False, "agreed": True}
            return json.dumps(resp, sort_keys=True).encode()
        resp = session.negotiator.on_offer(offer.price_per_kwh, offer.amount_kwh,
                                           self.remaining_kwh(now))
        if resp["agreed"]:
            session.agreement = (resp["price"], resp["amount"])
            session.reservation = _Reservation(amount=resp["amount"],
                                               until=now + RESERVATION_WINDOW_MS)
            self.reservations.append(session.reservation)
        return json.dumps(resp, sort_keys=True).encode()

    def _free_slot_overlap(self, ws: int, we: int):
        for s, e in sorted(self.profile.free_slots):
            if s <= we and e >= ws:
                return (max(s, ws), min(e, we))
        return None

    def _coordinate(self, cid: str, proposal: MeetingProposal, now: float) -> bytes:
        session = self.sessions.get(cid)
        if session is None or session.agreement is None:
            return json.dumps({"slot_ok": False}, sort_keys=True).encode()
        overlap = self._free_slot_overlap(proposal.window_start, proposal.window_end)
        if overlap is None:
            return json.dumps({"slot_ok": False}, sort_keys=True).encode()
        pos = self.position()
        if proposal.location is None:
            # Nothing suggested: choose selfishly, i.e. stay put.
            place, accepted = pos, True
        elif feasible_meeting(self.profile.soc, self.profile.consumption_rate,
                              pos, proposal.location, self.reserve_margin_kwh):
            place, accepted = proposal.location, True
        else:
            place, accepted = pos, False  # counter with own position
        meeting = MeetingProposal(window_start=overlap[0], window_end=overlap[1],
                                  location=place)
        session.meeting = meeting
        resp = {"slot_ok": True, "accepted": accepted,
                "ws": meeting.window_start, "we": meeting.window_end,
                "x": place[0], "y": place[1]}
        return json.dumps(resp, sort_keys=True).encode()

    def _confirm(self, cid: str, digest: str, ts: int) -> bytes:
        session = self.sessions.get(cid)
        ok = False
        if session is not None and session.agreement and session.meeting:
            price, amount = session.agreement
            ok = agreement_digest(price, amount, session.meeting) == digest
            if ok:
                self.transactions.append(TransactionRecord(
                    cid=cid, pid=self.pid, price=price, amount=amount,
                    meeting=session.meeting, confirmed_at=ts))
            elif session.reservation is not None:
                session.reservation.active = False
        return json.dumps({"ok": ok}, sort_keys=True).encode()


# ---------------------------------------------------------------------------
# Consumer application
# ---------------------------------------------------------------------------

PHASES = ("discovery", "verification", "negotiation", "coordination",
          "confirmation")


@dataclass
class SessionResult:
    cid: str
    outcome: str = "pending"
    pid: str | None = None
    price: float | None = None
    amount: float | None = None
    meeting: MeetingProposal | None = None
    rounds: int = 0
    timings: dict = field(default_factory=dict)  # phase -> [start, end]
    transaction: TransactionRecord | None = None

    @property
    def done(self) -> bool:
        return self.outcome != "pending"

    def phase_ms(self, phase: str) -> float | None:
        t = self.timings.get(phase)
        if t is None or t[1] is None:
            return None
        return t[1] - t[0]

    @property
    def total_ms(self) -> float | None:
        if self.outcome != "done":
            return None
        return self.timings["confirmation"][1] - self.timings["discovery"][0]


class ConsumerSession:
    """One consumer's walk through the five phases."""

    def __init__(self, cid: str, node: NdnNode, kernel: Kernel,
                 mobility: MobilityState, desired_energy: float,
                 discovery_filter: DiscoveryFilter,
                 *, target_count: int = 1, timeout_ms: float = 30.0,
                 max_retx: int = DEFAULT_MAX_RETX,
                 weights: tuple[str, ...] = DEFAULT_WEIGHTS,
                 policy: NegotiationPolicy | None = None,
                 soc_kwh: float = 20.0, consumption_rate: float = 0.15,
                 reserve_margin_kwh: float = DEFAULT_RESERVE_MARGIN_KWH,
                 suggest_own_location: bool = False,
                 combine_discovery_verification: bool = False,
                 on_finished: Callable | None = None):
        self.cid = cid
        self.node = node
        self.kernel = kernel
        self.mobility = mobility
        self.desired_energy = desired_energy
        self.filter = discovery_filter
        self.target_count = target_count
        self.timeout_ms = timeout_ms
        self.max_retx = max_retx
        self.weights = weights
        self.policy = policy or NegotiationPolicy()
        self.soc = soc_kwh
        self.consumption_rate = consumption_rate
        self.reserve_margin_kwh = reserve_margin_kwh
        self.suggest_own_location = suggest_own_location
        self.combine_discovery_verification = combine_discovery_verification
        self.on_finished = on_finished
        self.result = SessionResult(cid=cid)
        self.candidates: dict[str, SupplierProfile] = {}
        self._ranked: list[SupplierProfile] = []
        self._rank_pos = 0
        self._retried_discovery = False
        self._verified: SupplierProfile | None = None
        self._negotiator: ConsumerNegotiator | None = None
        self._spatial_rounds = 0

    # -- helpers -----------------------------------------------------------

    def position(self) -> tuple[float, float]:
        return position_at(self.mobility, self.kernel.now)

    def _mark_start(self, phase: str) -> None:
        self.result.timings.setdefault(phase, [self.kernel.now, None])

    def _mark_end(self, phase: str) -> None:
        self.result.timings[phase][1] = self.kernel.now

    def _fail(self, outcome: str) -> None:
        self.result.outcome = outcome
        if self.on_finished:
            self.on_finished(self)

    def _express(self, name: Name, on_result, exclude=frozenset()) -> None:
        self.node.express_interest(name, on_result, timeout_ms=self.timeout_ms,
                                   max_retx=self.max_retx,
                                   exclude_pids=frozenset(exclude))

    def _checked_payload(self, data: Data | None):
        """Signature gate every phase shares; None means unusable."""
        if data is None or not verify_signature(data):
            return None
        return data.payload

    # -- discovery ---------------------------------------------------------

    def start(self) -> None:
        self._mark_start("discovery")
        self._discover()

    def _discover(self) -> None:
        msg = ParsedMessage(phase=Phase.DISCOVERY, filter=self.filter,
                            timestamp=int(self.kernel.now))
        self._express(encode_name(msg), self._on_discovery_data,
                      exclude=frozenset(self.candidates))

    def _on_discovery_data(self, data: Data | None) -> None:
        payload = self._checked_payload(data)
        if payload is None:
            # Timed out (or tampered): stop collecting.
            if self.candidates:
                self._finish_discovery()
            else:
                self._fail("discovery_failed")
            return
        try:
            profile = SupplierProfile.from_payload(payload)
        except (ValueError, KeyError):
            self.node.malformed_dropped += 1
            self._fail("discovery_failed")
            return
        self.candidates[profile.pid] = profile
        if len(self.candidates) < self.target_count:
            self._discover()
        else:
            self._finish_discovery()

    def _finish_discovery(self) -> None:
        self._mark_end("discovery")
        self._ranked = rank_suppliers(list(self.candidates.values()),
                                      self.position(), self.weights)
        self._rank_pos = 0
        self._mark_start("verification")
        if self.combine_discovery_verification:
            # Discovery data is already signature-checked; trust it.
            self._verified = self._ranked[0]
            self.result.pid = self._verified.pid
            self._mark_end("verification")
            self._begin_negotiation()
        else:
            self._verify_next()

    # -- verification ------------------------------------------------------

    def _verify_next(self) -> None:
        if self._rank_pos >= len(self._ranked):
            if not self._retried_discovery:
                self._retried_discovery = True
                self.candidates.clear()
                self._discover()
                return
            self._fail("verification_failed")
            return
        candidate = self._ranked[self._rank_pos]
        msg = ParsedMessage(phase=Phase.VERIFICATION, pid=candidate.pid,
                            timestamp=int(self.kernel.now))
        self._express(encode_name(msg),
                      lambda data: self._on_verification_data(candidate, data))

    def _on_verification_data(self, candidate: SupplierProfile,
                              data: Data | None) -> None:
        payload = self._checked_payload(data)
        if payload is None:
            self._rank_pos += 1
            self._verify_next()
            return
        fresh = SupplierProfile.from_payload(payload)
        consistent = (fresh.price_per_kwh == candidate.price_per_kwh
                      and fresh.available_energy == candidate.available_energy
                      and distance(fresh.location, candidate.location)
                      <= LOCATION_DRIFT_TOLERANCE_M)
        if not consistent:
            self._rank_pos += 1
            self._verify_next()
            return
        self._verified = fresh
        self.result.pid = fresh.pid
        self._mark_end("verification")
        self._begin_negotiation()

    # -- negotiation -------------------------------------------------------

    def _ceiling(self) -> float:
        if self.filter.max_price_per_kwh is not None:
            return self.filter.max_price_per_kwh
        return self._verified.price_per_kwh

    def _begin_negotiation(self) -> None:
        self._mark_start("negotiation")
        self._negotiator = ConsumerNegotiator(self._verified.price_per_kwh,
                                              self.desired_energy, self.policy,
                                              self._ceiling())
        self._send_offer(self._negotiator.opening_offer())

    def _send_offer(self, offer: Offer) -> None:
        msg = ParsedMessage(phase=Phase.NEGOTIATION, pid=self._verified.pid,
                            offer=offer, timestamp=int(self.kernel.now),
                            requester=self.cid)
        self._express(encode_name(msg), self._on_counter)

    def _on_counter(self, data: Data | None) -> None:
        payload = self._checked_payload(data)
        if payload is None:
            self._fail("negotiation_timeout")
            return
        response = json.loads(payload.decode())
        action = self._negotiator.on_counter(response)
        if action[0] == "done":
            _, price, amount = action
            self.result.price = price
            self.result.amount = amount
            self.result.rounds = self._negotiator.exchanges
            self._mark_end("negotiation")
            self._begin_coordination()
        elif action[0] == "offer":
            self._send_offer(action[1])
        else:
            self._fail("negotiation_failed")

    # -- coordination ------------------------------------------------------

    def _window(self) -> tuple[int, int]:
        ws = self.filter.window_start if self.filter.window_start is not None else 0
        we = self.filter.window_end if self.filter.window_end is not None else 1439
        return ws, we

    def _begin_coordination(self) -> None:
        self._mark_start("coordination")
        self._spatial_rounds = 1
        suggested = self.position() if self.suggest_own_location else None
        self._send_meeting_proposal(suggested)

    def _send_meeting_proposal(self, location) -> None:
        ws, we = self._window()
        msg = ParsedMessage(phase=Phase.COORDINATION, pid=self._verified.pid,
                            meeting=MeetingProposal(ws, we, location),
                            timestamp=int(self.kernel.now), requester=self.cid)
        self._express(encode_name(msg), self._on_meeting_response)

    def _feasible_for_me(self, place) -> bool:
        return feasible_meeting(self.soc, self.consumption_rate,
                                self.position(), place, self.reserve_margin_kwh)

    def _on_meeting_response(self, data: Data | None) -> None:
        payload = self._checked_payload(data)
        if payload is None:
            self._fail("coordination_timeout")
            return
        response = json.loads(payload.decode())
        if not response.get("slot_ok"):
            self._fail("coordination_failed")
            return
        place = (response["x"], response["y"])
        meeting = MeetingProposal(response["ws"], response["we"], place)
        if response["accepted"] and self._feasible_for_me(place):
            self.result.meeting = meeting
            self._mark_end("coordination")
            self._begin_confirmation()
            return
        if not response["accepted"] and self._feasible_for_me(place):
            # The supplier countered with a place we can reach: take it.
            self.result.meeting = meeting
            self._mark_end("coordination")
            self._begin_confirmation()
            return
        if self._spatial_rounds >= 2:
            self._fail("coordination_failed")
            return
        self._spatial_rounds += 1
        mine, theirs = self.position(), self._verified.location
        midpoint = ((mine[0] + theirs[0]) / 2.0, (mine[1] + theirs[1]) / 2.0)
        if not self._feasible_for_me(midpoint):
            self._fail("coordination_failed")
            return
        self._send_meeting_proposal(midpoint)

    # -- confirmation ------------------------------------------------------

    def _begin_confirmation(self) -> None:
        self._mark_start("confirmation")
        digest = agreement_digest(self.result.price, self.result.amount,
                                  self.result.meeting)
        ts = int(self.kernel.now)
        msg = ParsedMessage(phase=Phase.CONFIRMATION, pid=self._verified.pid,
                            agreement_digest=digest, timestamp=ts,
                            requester=self.cid)
        self._confirm_ts = ts
        self._express(encode_name(msg), self._on_confirmation)

    def _on_confirmation(self, data: Data | None) -> None:
        payload = self._checked_payload(data)
        if payload is None:
            self._fail("confirmation_timeout")
            return
        response = json.loads(payload.decode())
        if not response.get("ok"):
            self._fail("confirmation_mismatch")
            return
        self.result.transaction = TransactionRecord(
            cid=self.cid, pid=self.result.pid, price=self.result.price,
            amount=self.result.amount, meeting=self.result.meeting,
            confirmed_at=self._confirm_ts)
        self._mark_end("confirmation")
        self.result.outcome = "done"
        if self.on_finished:
            self.on_finished(self)
