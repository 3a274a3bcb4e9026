"""Named-data node: PIT, content store, faces and interest lifecycle.

Each node owns one broadcast face (id 0) plus locally registered
application faces. State is only ever touched from kernel callbacks.

Forwarding rules, in order, for an arriving interest:
  1. duplicate nonce -> drop (loop suppression);
  2. fresh content-store match -> answer on the arrival face;
  3. live PIT entry with the same name -> aggregate, no forward;
  4. a local producer claims the name -> hand it the interest;
  5. otherwise create a PIT entry and forward on the broadcast face.

Arriving data satisfies a PIT entry matched exactly or, for discovery,
by the data name extending the pending interest name; it is re-emitted
on every downstream face except the one it arrived on, then cached.
"""

from __future__ import annotations

import hashlib
import random
from collections import OrderedDict, deque
from dataclasses import dataclass, field

from .kernel import Kernel
from .naming import Name, is_discovery_name

BROADCAST_FACE = 0

DISCOVERY_FRESHNESS_MS = 1000.0
SESSION_FRESHNESS_MS = 100.0
DEFAULT_CS_CAPACITY = 64
DEFAULT_MAX_RETX = 3
NONCE_MEMORY = 1000


@dataclass
class Interest:
    name: Name
    nonce: int
    lifetime_ms: float
    exclude_pids: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.lifetime_ms <= 0:
            raise ValueError("interest lifetime must be positive")


@dataclass
class Data:
    name: Name
    payload: bytes
    signer_pid: str
    signature_digest: str
    freshness_ms: float

    def __post_init__(self):
        if self.freshness_ms <= 0:
            raise ValueError("data freshness must be positive")


def _digest(name: Name, payload: bytes, signer_pid: str) -> str:
    h = hashlib.sha256()
    h.update(str(name).encode())
    h.update(b"|")
    h.update(payload)
    h.update(b"|")
    h.update(signer_pid.encode())
    return h.hexdigest()[:16]


def make_data(name: Name, payload: bytes, signer_pid: str,
              freshness_ms: float) -> Data:
    return Data(name=name, payload=payload, signer_pid=signer_pid,
                signature_digest=_digest(name, payload, signer_pid),
                freshness_ms=freshness_ms)


def verify_signature(data: Data) -> bool:
    """Recompute the stub digest; False on any tampering."""
    return data.signature_digest == _digest(data.name, data.payload, data.signer_pid)


@dataclass
class PitEntry:
    name: Name
    downstream_faces: set[int]
    nonces: set[int]
    expiry: float


@dataclass
class CsEntry:
    data: Data
    inserted_at: float

    def fresh(self, now: float) -> bool:
        return now - self.inserted_at < self.data.freshness_ms


# Forwarding actions returned by on_interest/on_data.
@dataclass(frozen=True)
class SendAction:
    packet: object


@dataclass(frozen=True)
class DeliverAction:
    face: int
    data: Data


@dataclass(frozen=True)
class ProduceAction:
    handler: object
    interest: Interest


class _Pending:
    __slots__ = ("name", "timeout_ms", "retx_left", "exclude", "on_result",
                 "timer", "done")

    def __init__(self, name, timeout_ms, retx_left, exclude, on_result):
        self.name = name
        self.timeout_ms = timeout_ms
        self.retx_left = retx_left
        self.exclude = exclude
        self.on_result = on_result
        self.timer = None
        self.done = False


class NdnNode:
    """One EV's forwarding state plus its application attachment points."""

    def __init__(self, node_id: str, kernel: Kernel, rng: random.Random,
                 send_broadcast=None, cs_capacity: int = DEFAULT_CS_CAPACITY):
        self.node_id = node_id
        self.kernel = kernel
        self.rng = rng
        self.send_broadcast = send_broadcast or (lambda packet: None)
        self.cs_capacity = cs_capacity
        self.pit: dict[tuple, PitEntry] = {}
        self.cs: OrderedDict[tuple, CsEntry] = OrderedDict()
        self._cs_children: dict[tuple, set[tuple]] = {}
        self._seen_nonces: set[int] = set()
        self._nonce_order: deque[int] = deque()
        self._issued_nonces: set[int] = set()
        self._producers: list[tuple[object, object]] = []
        self._app_faces: dict[int, object] = {}
        self._next_face = 1
        self._pending: dict[tuple, _Pending] = {}
        self.delivered: list[Data] = []
        self.malformed_dropped = 0

    # -- faces ------------------------------------------------------------

    def add_app_face(self, on_data) -> int:
        face = self._next_face
        self._next_face += 1
        self._app_faces[face] = on_data
        return face

    def register_producer(self, claims, handler) -> None:
        """``claims(name) -> bool`` decides ownership; ``handler(interest)``
        is invoked from a kernel event when an owned interest arrives."""
        self._producers.append((claims, handler))

    # -- bookkeeping ------------------------------------------------------

    def _remember_nonce(self, nonce: int) -> None:
        if nonce in self._seen_nonces:
            return
        self._seen_nonces.add(nonce)
        self._nonce_order.append(nonce)
        if len(self._nonce_order) > NONCE_MEMORY:
            self._seen_nonces.discard(self._nonce_order.popleft())

    def new_nonce(self) -> int:
        while True:
            nonce = self.rng.getrandbits(64)
            if nonce not in self._issued_nonces:
                self._issued_nonces.add(nonce)
                return nonce

    def _pit_get_live(self, key: tuple, now: float) -> PitEntry | None:
        entry = self.pit.get(key)
        if entry is None:
            return None
        if entry.expiry <= now:
            del self.pit[key]
            return None
        return entry

    def _cs_lookup(self, interest: Interest, now: float) -> Data | None:
        key = interest.name.components
        entry = self.cs.get(key)
        if entry is not None and entry.fresh(now):
            self.cs.move_to_end(key)
            return entry.data
        if is_discovery_name(interest.name):
            for child in self._cs_children.get(key, ()):
                ce = self.cs.get(child)
                if ce is None or not ce.fresh(now):
                    continue
                pid = child[-1]
                if pid not in interest.exclude_pids:
                    self.cs.move_to_end(child)
                    return ce.data
        return None

    def cs_insert(self, data: Data, now: float) -> None:
        key = data.name.components
        self.cs[key] = CsEntry(data=data, inserted_at=now)
        self.cs.move_to_end(key)
        if is_discovery_name(data.name) and len(key) > 1:
            self._cs_children.setdefault(key[:-1], set()).add(key)
        while len(self.cs) > self.cs_capacity:
            old_key, _ = self.cs.popitem(last=False)
            parent = self._cs_children.get(old_key[:-1])
            if parent is not None:
                parent.discard(old_key)

    # -- core forwarding -------------------------------------------------

    def on_interest(self, interest: Interest, arrival_face: int, now: float):
        """Process one arriving interest and return forwarding actions."""
        log = self.kernel.log if self.kernel.log.enabled else None
        if interest.nonce in self._seen_nonces:
            if log:
                log.add(now, self.node_id, "DROP", str(interest.name),
                        interest.nonce)
            return []
        self._remember_nonce(interest.nonce)

        cached = self._cs_lookup(interest, now)
        if cached is not None:
            if log:
                log.add(now, self.node_id, "CACHE_HIT", str(interest.name),
                        interest.nonce)
            if arrival_face == BROADCAST_FACE:
                if log:
                    log.add(now, self.node_id, "SEND", str(cached.name),
                            interest.nonce)
                return [SendAction(cached)]
            return [DeliverAction(arrival_face, cached)]

        key = interest.name.components
        entry = self._pit_get_live(key, now)
        if entry is not None:
            entry.downstream_faces.add(arrival_face)
            entry.nonces.add(interest.nonce)
            entry.expiry = max(entry.expiry, now + interest.lifetime_ms)
            if log:
                log.add(now, self.node_id, "AGGREGATE", str(interest.name),
                        interest.nonce)
            return []

        for claims, handler in self._producers:
            if claims(interest.name):
                self.pit[key] = PitEntry(name=interest.name,
                                         downstream_faces={arrival_face},
                                         nonces={interest.nonce},
                                         expiry=now + interest.lifetime_ms)
                if log:
                    log.add(now, self.node_id, "RECV", str(interest.name),
                            interest.nonce)
                return [ProduceAction(handler, interest)]

        self.pit[key] = PitEntry(name=interest.name,
                                 downstream_faces={arrival_face},
                                 nonces={interest.nonce},
                                 expiry=now + interest.lifetime_ms)
        if log:
            log.add(now, self.node_id, "SEND", str(interest.name), interest.nonce)
        return [SendAction(interest)]

    def _pit_match_for_data(self, data: Data, now: float) -> tuple | None:
        key = data.name.components
        if self._pit_get_live(key, now) is not None:
            return key
        if is_discovery_name(data.name) and len(key) > 1:
            parent = key[:-1]
            if self._pit_get_live(parent, now) is not None:
                return parent
        return None

    def on_data(self, data: Data, arrival_face: int, now: float):
        """Process arriving data: satisfy pending interests, then cache."""
        log = self.kernel.log if self.kernel.log.enabled else None
        key = self._pit_match_for_data(data, now)
        if key is None:
            if log:
                log.add(now, self.node_id, "DROP", str(data.name), "-")
            return []
        entry = self.pit.pop(key)
        actions = []
        for face in sorted(entry.downstream_faces):
            if face == arrival_face:
                continue  # never send data back where it came from
            if face == BROADCAST_FACE:
                if log:
                    log.add(now, self.node_id, "SEND", str(data.name), "-")
                actions.append(SendAction(data))
            else:
                if log:
                    log.add(now, self.node_id, "RECV", str(data.name), "-")
                actions.append(DeliverAction(face, data))
        self.cs_insert(data, now)
        return actions

    # -- driver ------------------------------------------------------------

    def _execute(self, actions) -> None:
        for action in actions:
            if isinstance(action, SendAction):
                self.send_broadcast(action.packet)
            elif isinstance(action, DeliverAction):
                self.delivered.append(action.data)
                self._app_faces[action.face](action.data)
            else:
                self.kernel.schedule(0.0, lambda a=action: a.handler(a.interest))

    def receive(self, packet) -> None:
        """Entry point for packets arriving from the medium."""
        now = self.kernel.now
        if isinstance(packet, Interest):
            self._execute(self.on_interest(packet, BROADCAST_FACE, now))
        else:
            self._execute(self.on_data(packet, BROADCAST_FACE, now))

    def put_data(self, data: Data, face: int | None = None) -> None:
        """Inject locally produced data (producer applications)."""
        app_face = face if face is not None else self._next_face + 1000
        self._execute(self.on_data(data, app_face, self.kernel.now))

    # -- consumer-side interest lifecycle ---------------------------------

    def express_interest(self, name: Name, on_result, *,
                         timeout_ms: float, max_retx: int = DEFAULT_MAX_RETX,
                         exclude_pids: frozenset[str] = frozenset(),
                         app_face: int | None = None) -> None:
        """Express ``name`` and deliver the first matching data to
        ``on_result``; re-express with a fresh nonce on timeout, up to
        ``max_retx`` times, then report ``on_result(None)``."""
        if max_retx < 0:
            raise ValueError("max_retx must be non-negative")
        if app_face is None:
            app_face = self.add_app_face(self._on_pending_data)
        pending = _Pending(name, timeout_ms, max_retx, exclude_pids, on_result)
        self._pending[name.components] = pending
        self._transmit(pending, app_face)

    def _transmit(self, pending: _Pending, app_face: int) -> None:
        interest = Interest(name=pending.name, nonce=self.new_nonce(),
                            lifetime_ms=pending.timeout_ms,
                            exclude_pids=pending.exclude)
        pending.timer = self.kernel.schedule(
            pending.timeout_ms, lambda: self._on_timeout(pending, app_face))
        self._execute(self.on_interest(interest, app_face, self.kernel.now))

    def _on_timeout(self, pending: _Pending, app_face: int) -> None:
        if pending.done:
            return
        if pending.retx_left > 0:
            pending.retx_left -= 1
            self._transmit(pending, app_face)
            return
        pending.done = True
        self._pending.pop(pending.name.components, None)
        self.kernel.log.add(self.kernel.now, self.node_id, "TIMEOUT",
                            str(pending.name), "-")
        pending.on_result(None)

    def _find_pending(self, data_name: Name) -> _Pending | None:
        pending = self._pending.get(data_name.components)
        if pending is None and is_discovery_name(data_name):
            pending = self._pending.get(data_name.components[:-1])
        return pending

    def _on_pending_data(self, data: Data) -> None:
        pending = self._find_pending(data.name)
        if pending is None or pending.done:
            return
        pending.done = True
        self._pending.pop(pending.name.components, None)
        if pending.timer is not None:
            pending.timer.cancel()
        pending.on_result(data)
