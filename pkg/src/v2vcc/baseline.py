"""Analytical model of the centralized cloud-coordinator alternative.

A client pays one and a half round trips to open the connection and one
more round trip for the request itself: 2.5 RTT = 5 one-way delays, plus
the (tiny) serialization of the response. Coordinator processing time is
deliberately excluded. Each of the five segments can be lost, costing a
retransmission timeout of two RTTs per loss.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

HANDSHAKE_AND_REQUEST_SEGMENTS = 5
PROVIDER_UPDATE_PERIOD_MS = 1000.0


@dataclass
class CloudConfig:
    one_way_delay_ms: float = 25.0
    bandwidth_bps: float = 24_000_000.0
    error_rate: float = 0.0005
    n_providers: int = 1
    n_clients: int = 1
    message_bytes: int = 256

    def __post_init__(self):
        if self.one_way_delay_ms <= 0:
            raise ValueError("one-way delay must be positive")
        if not 0.0 <= self.error_rate < 1.0:
            raise ValueError("error rate must be in [0, 1)")

    @property
    def serialization_ms(self) -> float:
        return self.message_bytes * 8 / self.bandwidth_bps * 1000.0

    def background_utilization(self) -> float:
        """Fraction of the link the periodic provider updates consume."""
        bits_per_s = self.n_providers * self.message_bytes * 8 / (
            PROVIDER_UPDATE_PERIOD_MS / 1000.0)
        return bits_per_s / self.bandwidth_bps


def client_completion_time(cfg: CloudConfig, rng: random.Random | None = None) -> float:
    """Milliseconds for one client to connect and fetch provider data."""
    rtt = 2.0 * cfg.one_way_delay_ms
    total = 2.5 * rtt + cfg.serialization_ms
    if cfg.error_rate > 0.0:
        if rng is None:
            raise ValueError("an RNG is required when the error rate is nonzero")
        for _ in range(HANDSHAKE_AND_REQUEST_SEGMENTS):
            while rng.random() < cfg.error_rate:
                total += 2.0 * rtt  # retransmission timeout
    return total


def run_baseline_experiment(cfg: CloudConfig, n_runs: int, seed: int):
    """Completion times for every (run, client) pair.

    Returns a list of (run_index, client_id, completion_ms) with one
    independent RNG stream per run. The periodic provider updates never
    fill the link, so they influence nothing but utilization.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    assert cfg.background_utilization() < 1.0
    rows = []
    for run in range(n_runs):
        rng = random.Random(f"{seed + run}:ip")
        for i in range(cfg.n_clients):
            rows.append((run, f"client{i + 1}", client_completion_time(cfg, rng)))
    return rows
