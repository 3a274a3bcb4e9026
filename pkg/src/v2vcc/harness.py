"""Scenario configuration, experiment execution and CSV emission.

Configs are flat ``key = value`` files. Each experiment runs ``runs``
independent simulations with per-run seeds ``seed + index``; identical
config and seed always produce byte-identical CSV output.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baseline import CloudConfig, run_baseline_experiment
from .kernel import Kernel, EventLog, ChannelConfig, Medium, MobilityState
from .naming import DiscoveryFilter
from .ndn import NdnNode
from .protocol import (ConsumerSession, SupplierApp, SupplierProfile,
                       NegotiationPolicy, PHASES)

SESSIONS_HEADER = ("scenario_id,seed,cid,pid,outcome,discovery_ms,"
                   "verification_ms,negotiation_ms,coordination_ms,"
                   "confirmation_ms,total_ms,price,amount_kwh,meet_x,meet_y,rounds")
SUMMARY_HEADER = "phase,mean,min,q1,median,q3,max"

PLACEMENT_BLOCK = (400.0, 600.0)  # nodes spawn here: everyone is in radio range
MAX_SIM_MS = 20_000.0

_DOMAINS = {
    "discovery_target": {1, 3},
    "timeout_ms": {30.0, 50.0},
    "loss": {0.0, 0.2},
    "speed_mph": {0.0, 10.0, 30.0, 50.0, 70.0},
    "ip_delay_ms": {25.0, 50.0, 100.0},
    "ip_error_rate": {0.0, 0.0005},
}


class ConfigError(Exception):
    def __init__(self, message, line=None, key=None):
        detail = message
        if key is not None:
            detail = f"{key}: {message}"
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.line = line
        self.key = key


class ExperimentError(Exception):
    def __init__(self, message, run_index=None):
        super().__init__(f"run {run_index}: {message}" if run_index is not None
                         else message)
        self.run_index = run_index


@dataclass
class ScenarioConfig:
    mode: str = "v2vcc"
    scenario_id: str = ""
    seed: int | None = None
    runs: int = 10
    consumers: int = 3
    suppliers: int | None = None
    ratio_check: bool = False
    discovery_target: int = 1
    timeout_ms: float = 30.0
    loss: float = 0.0
    speed_mph: float = 0.0
    clients: int = 1
    ip_delay_ms: float = 25.0
    ip_error_rate: float = 0.0005
    log_events: bool = True

    def __post_init__(self):
        if self.mode not in ("v2vcc", "ip"):
            raise ConfigError("mode must be v2vcc or ip", key="mode")
        if self.seed is None:
            raise ConfigError("seed is required", key="seed")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1", key="runs")
        if self.mode == "v2vcc":
            if not 1 <= self.consumers <= 21:
                raise ConfigError("consumers must be within 1..21", key="consumers")
            if self.suppliers is None:
                self.suppliers = max(1, math.ceil(self.consumers / 3))
            if not 1 <= self.suppliers <= 10:
                raise ConfigError("suppliers must be within 1..10", key="suppliers")
            if self.ratio_check and self.suppliers != max(1, math.ceil(self.consumers / 3)):
                raise ConfigError("3:1 consumer:supplier ratio violated",
                                  key="suppliers")
            for key in ("discovery_target", "timeout_ms", "loss", "speed_mph"):
                if getattr(self, key) not in _DOMAINS[key]:
                    raise ConfigError(f"value outside the supported grid: "
                                      f"{getattr(self, key)}", key=key)
        else:
            if not 1 <= self.clients <= 30:
                raise ConfigError("clients must be within 1..30", key="clients")
            for key in ("ip_delay_ms", "ip_error_rate"):
                if getattr(self, key) not in _DOMAINS[key]:
                    raise ConfigError(f"value outside the supported grid: "
                                      f"{getattr(self, key)}", key=key)
        if not self.scenario_id:
            if self.mode == "ip":
                self.scenario_id = f"ip-{self.ip_delay_ms:g}ms"
            else:
                self.scenario_id = (f"v2vcc-c{self.consumers}-s{self.suppliers}"
                                    f"-t{self.discovery_target}"
                                    f"-loss{self.loss:g}")
        if self.mode == "ip" and not self.scenario_id.startswith("ip-"):
            self.scenario_id = "ip-" + self.scenario_id


_KEY_TYPES = {
    "mode": str, "id": str, "seed": int, "runs": int,
    "consumers": int, "suppliers": int, "clients": int,
    "ratio_check": bool, "discovery_target": int,
    "timeout_ms": float, "loss": float, "speed_mph": float,
    "ip_delay_ms": float, "ip_error_rate": float, "log_events": bool,
}
_KEY_RENAMES = {"id": "scenario_id"}


def _parse_value(raw: str, typ, line_no: int, key: str):
    try:
        if typ is bool:
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r}", line=line_no,
                          key=key) from None


def load_scenario(path) -> ScenarioConfig:
    """Parse a ``key = value`` scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    values = {}
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=line_no)
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _KEY_TYPES:
            raise ConfigError("unknown key", line=line_no, key=key)
        values[_KEY_RENAMES.get(key, key)] = _parse_value(
            raw, _KEY_TYPES[key], line_no, key)
    return ScenarioConfig(**values)


# ---------------------------------------------------------------------------
# World generation and single-run execution
# ---------------------------------------------------------------------------

def _spawn_position(rng: random.Random) -> tuple[float, float]:
    lo, hi = PLACEMENT_BLOCK
    return (rng.uniform(lo, hi), rng.uniform(lo, hi))


def _mobility(rng: random.Random, origin, speed_mph: float) -> MobilityState:
    if speed_mph == 0:
        return MobilityState(origin=origin)
    return MobilityState.moving(origin, speed_mph, rng.uniform(0, 2 * math.pi))


@dataclass
class SimResult:
    sessions: list[ConsumerSession]
    suppliers: list[SupplierApp]
    nodes: list[NdnNode]
    log: EventLog
    kernel: Kernel


def run_single(cfg: ScenarioConfig, run_seed: int,
               log_events: bool | None = None) -> SimResult:
    """Build and run one coordination-protocol simulation."""
    log = EventLog(enabled=cfg.log_events if log_events is None else log_events)
    kernel = Kernel(log=log)
    world_rng = random.Random(f"{run_seed}:world")
    chan = ChannelConfig(loss_rate=cfg.loss)
    medium = Medium(kernel, chan, random.Random(f"{run_seed}:chan"))

    nodes, suppliers, sessions = [], [], []

    def attach(node_id, mobility):
        node = NdnNode(node_id, kernel, random.Random(f"{run_seed}:{node_id}"))
        node.send_broadcast = lambda packet, nid=node_id: medium.broadcast(nid, packet)
        medium.add_station(node_id, mobility, node.receive)
        nodes.append(node)
        return node

    for i in range(cfg.suppliers):
        pid = f"EV{i + 1}"
        origin = _spawn_position(world_rng)
        profile = SupplierProfile(
            pid=pid, location=origin,
            price_per_kwh=round(world_rng.uniform(0.08, 0.12), 2),
            available_energy=round(world_rng.uniform(40.0, 60.0), 1),
            reputation=world_rng.randint(5, 10),
            soc=round(world_rng.uniform(10.0, 30.0), 2))
        mobility = _mobility(world_rng, origin, cfg.speed_mph)
        node = attach(pid, mobility)
        suppliers.append(SupplierApp(profile, node, kernel,
                                     random.Random(f"{run_seed}:{pid}:app"),
                                     mobility=mobility))

    for i in range(cfg.consumers):
        cid = f"C{i + 1}"
        origin = _spawn_position(world_rng)
        mobility = _mobility(world_rng, origin, cfg.speed_mph)
        node = attach(cid, mobility)
        desired = round(world_rng.uniform(1.0, 4.0), 2)
        session = ConsumerSession(
            cid, node, kernel, mobility, desired,
            DiscoveryFilter(min_energy=desired),
            target_count=cfg.discovery_target, timeout_ms=cfg.timeout_ms,
            soc_kwh=round(world_rng.uniform(10.0, 30.0), 2))
        sessions.append(session)
        kernel.schedule(0.0, session.start)

    kernel.run(until=MAX_SIM_MS)
    for session in sessions:
        if not session.result.done:
            session.result.outcome = "unfinished"
    return SimResult(sessions=sessions, suppliers=suppliers, nodes=nodes,
                     log=log, kernel=kernel)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class MetricsTable:
    rows: list[dict] = field(default_factory=list)
    summary: dict[str, dict[str, float]] = field(default_factory=dict)

    def session_lines(self) -> list[str]:
        lines = [SESSIONS_HEADER]
        for r in self.rows:
            lines.append(",".join(_fmt(r[k]) for k in SESSIONS_HEADER.split(",")))
        return lines

    def summary_lines(self) -> list[str]:
        lines = [SUMMARY_HEADER]
        for phase in (*PHASES, "total"):
            stats = self.summary.get(phase)
            if stats is None:
                continue
            lines.append(",".join([phase] + [repr(stats[s]) for s in
                                             ("mean", "min", "q1", "median",
                                              "q3", "max")]))
        return lines


def summarize(rows: list[dict]) -> dict:
    summary = {}
    for phase in (*PHASES, "total"):
        col = "total_ms" if phase == "total" else f"{phase}_ms"
        values = [r[col] for r in rows if r[col] is not None and r[col] != ""]
        if not values:
            continue
        arr = np.asarray(values, dtype=float)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        summary[phase] = {"mean": statistics.fmean(values), "min": float(arr.min()),
                          "q1": float(q1), "median": float(med),
                          "q3": float(q3), "max": float(arr.max())}
    return summary


def _session_row(cfg, run_seed, session) -> dict:
    r = session.result
    meeting = r.meeting
    return {
        "scenario_id": cfg.scenario_id, "seed": run_seed, "cid": r.cid,
        "pid": r.pid, "outcome": r.outcome,
        **{f"{p}_ms": r.phase_ms(p) for p in PHASES},
        "total_ms": r.total_ms, "price": r.price, "amount_kwh": r.amount,
        "meet_x": meeting.location[0] if meeting and meeting.location else None,
        "meet_y": meeting.location[1] if meeting and meeting.location else None,
        "rounds": r.rounds,
    }


def _ip_row(cfg, run_seed, client, total) -> dict:
    row = {"scenario_id": cfg.scenario_id, "seed": run_seed, "cid": client,
           "pid": None, "outcome": "done",
           **{f"{p}_ms": None for p in PHASES},
           "total_ms": total, "price": None, "amount_kwh": None,
           "meet_x": None, "meet_y": None, "rounds": 0}
    return row


def run_experiment(cfg: ScenarioConfig, keep_log_run: int = 0):
    """Execute all runs of a scenario and aggregate per-session metrics.

    Returns ``(MetricsTable, EventLog)``; the log is taken from run
    ``keep_log_run`` (event logging for other runs is skipped)."""
    rows, kept_log = [], EventLog(enabled=False)
    for run in range(cfg.runs):
        run_seed = cfg.seed + run
        try:
            if cfg.mode == "ip":
                cloud = CloudConfig(one_way_delay_ms=cfg.ip_delay_ms,
                                    error_rate=cfg.ip_error_rate,
                                    n_clients=cfg.clients)
                for _, client, total in run_baseline_experiment(cloud, 1, run_seed):
                    rows.append(_ip_row(cfg, run_seed, client, total))
            else:
                want_log = cfg.log_events and run == keep_log_run
                result = run_single(cfg, run_seed, log_events=want_log)
                if want_log:
                    kept_log = result.log
                for session in result.sessions:
                    rows.append(_session_row(cfg, run_seed, session))
        except Exception as exc:  # pragma: no cover - defensive
            if isinstance(exc, (ConfigError, ExperimentError)):
                raise
            raise ExperimentError(str(exc), run_index=run) from exc
    rows.sort(key=lambda r: (r["seed"], r["cid"]))
    return MetricsTable(rows=rows, summary=summarize(rows)), kept_log


def write_outputs(table: MetricsTable, log: EventLog, out_dir) -> list[Path]:
    """Emit sessions.csv, summary.csv and events.log into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fname, lines in (("sessions.csv", table.session_lines()),
                         ("summary.csv", table.summary_lines()),
                         ("events.log", log.lines())):
        p = out / fname
        try:
            p.write_text("\n".join(lines) + ("\n" if lines else ""))
        except OSError as exc:
            raise ExperimentError(f"cannot write {p}: {exc}") from exc
        paths.append(p)
    return paths
