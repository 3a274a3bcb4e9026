"""Scenario parsing, experiment aggregation, CSV emission and the CLI."""

import re
import statistics

import pytest

from v2vcc.cli import main
from v2vcc.harness import (ScenarioConfig, ConfigError, load_scenario,
                           run_experiment, run_single, write_outputs,
                           summarize, MetricsTable, SESSIONS_HEADER,
                           SUMMARY_HEADER)
from v2vcc.kernel import EventLog
from v2vcc.protocol import PHASES


# ---------------------------------------------------------------------------
# Config parsing and validation
# ---------------------------------------------------------------------------

def _write(tmp_path, text, name="scenario.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_minimal_config_fills_defaults(tmp_path):
    cfg = load_scenario(_write(tmp_path, "mode = v2vcc\nconsumers = 21\nseed = 7\n"))
    assert cfg.mode == "v2vcc"
    assert cfg.consumers == 21
    assert cfg.seed == 7
    assert cfg.suppliers == 7  # ceil(21 / 3)
    assert cfg.timeout_ms == 30.0
    assert cfg.loss == 0.0
    assert cfg.discovery_target == 1


def test_loss_outside_grid_rejected(tmp_path):
    with pytest.raises(ConfigError, match="loss"):
        load_scenario(_write(tmp_path, "seed = 1\nloss = 0.3\n"))


def test_empty_file_missing_seed(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_scenario(_write(tmp_path, ""))


def test_unknown_key_reports_line_number(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_scenario(_write(tmp_path, "seed = 1\nbogus = 2\n"))
    assert exc.value.line == 2
    assert "bogus" in str(exc.value)


def test_unparseable_value_rejected(tmp_path):
    with pytest.raises(ConfigError, match="consumers"):
        load_scenario(_write(tmp_path, "seed = 1\nconsumers = many\n"))


def test_line_without_equals_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(_write(tmp_path, "seed 1\n"))


def test_comments_and_blanks_ignored(tmp_path):
    cfg = load_scenario(_write(tmp_path, "# comment\n\nseed = 1\n"))
    assert cfg.seed == 1


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "nope.cfg")


def test_ratio_check_enforced():
    with pytest.raises(ConfigError, match="ratio"):
        ScenarioConfig(seed=1, consumers=21, suppliers=5, ratio_check=True)
    ScenarioConfig(seed=1, consumers=21, suppliers=7, ratio_check=True)


def test_domain_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=1, timeout_ms=40.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=1, speed_mph=55.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(seed=1, consumers=22)
    with pytest.raises(ConfigError):
        ScenarioConfig(mode="ip", seed=1, ip_delay_ms=75.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(mode="walrus", seed=1)


def test_ip_scenario_id_prefixed():
    cfg = ScenarioConfig(mode="ip", seed=1, ip_delay_ms=25.0)
    assert cfg.scenario_id.startswith("ip-")
    named = ScenarioConfig(mode="ip", seed=1, scenario_id="base")
    assert named.scenario_id == "ip-base"


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _small_cfg(**kw):
    base = dict(mode="v2vcc", seed=42, runs=2, consumers=3, log_events=True)
    base.update(kw)
    return ScenarioConfig(**base)


def test_ip_experiment_error_free_constant():
    cfg = ScenarioConfig(mode="ip", seed=1, runs=10, ip_delay_ms=25.0,
                         ip_error_rate=0.0)
    table, _ = run_experiment(cfg)
    assert len(table.rows) == 10
    for row in table.rows:
        assert abs(row["total_ms"] - 125.0) < 0.1
        assert row["outcome"] == "done"
        assert row["discovery_ms"] is None


def test_v2vcc_experiment_all_sessions_complete():
    table, log = run_experiment(_small_cfg())
    assert len(table.rows) == 6  # 3 consumers x 2 runs
    assert all(r["outcome"] == "done" for r in table.rows)
    assert all(r["total_ms"] > 0 for r in table.rows)
    assert log.records  # run 0 keeps its event log


def test_same_config_and_seed_byte_identical():
    t1, _ = run_experiment(_small_cfg())
    t2, _ = run_experiment(_small_cfg())
    assert t1.session_lines() == t2.session_lines()
    assert t1.summary_lines() == t2.summary_lines()


def test_per_run_seeds_differ():
    table, _ = run_experiment(_small_cfg())
    seeds = {r["seed"] for r in table.rows}
    assert seeds == {42, 43}


def test_summary_matches_independent_recomputation():
    table, _ = run_experiment(_small_cfg())
    for phase in (*PHASES, "total"):
        col = "total_ms" if phase == "total" else f"{phase}_ms"
        values = [r[col] for r in table.rows if r[col] is not None]
        stats = table.summary[phase]
        assert stats["mean"] == pytest.approx(statistics.fmean(values), abs=0)
        assert stats["min"] == min(values)
        assert stats["max"] == max(values)
        q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
        assert stats["q1"] == pytest.approx(q1, abs=1e-12)
        assert stats["median"] == pytest.approx(med, abs=1e-12)
        assert stats["q3"] == pytest.approx(q3, abs=1e-12)


def test_reservation_conservation_per_supplier():
    cfg = ScenarioConfig(mode="v2vcc", seed=7, runs=1, consumers=9, suppliers=3)
    result = run_single(cfg, run_seed=7)
    for app in result.suppliers:
        assert app.reserved_kwh(result.kernel.now) <= app.profile.available_energy
        total_reserved = sum(r.amount for r in app.reservations if r.active)
        assert total_reserved <= app.profile.available_energy


def test_phase_ordering_in_every_session():
    result = run_single(_small_cfg(), run_seed=42)
    for session in result.sessions:
        starts = [session.result.timings[p][0] for p in PHASES
                  if p in session.result.timings]
        assert starts == sorted(starts)


def test_event_log_line_format():
    result = run_single(_small_cfg(), run_seed=42, log_events=True)
    pattern = re.compile(
        r"^[0-9.e+-]+,[A-Za-z0-9]+,(SEND|RECV|DROP|CACHE_HIT|AGGREGATE|TIMEOUT),"
        r"/FastCharging/\S+,(\d+|-)$")
    lines = result.log.lines()
    assert lines
    for line in lines:
        assert pattern.match(line), line


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def test_write_outputs_headers_exact(tmp_path):
    table, log = run_experiment(_small_cfg())
    paths = write_outputs(table, log, tmp_path / "out")
    assert [p.name for p in paths] == ["sessions.csv", "summary.csv",
                                       "events.log"]
    sessions = paths[0].read_text().splitlines()
    summary = paths[1].read_text().splitlines()
    assert sessions[0] == SESSIONS_HEADER
    assert summary[0] == SUMMARY_HEADER
    assert len(sessions) == 1 + len(table.rows)
    assert {line.split(",")[0] for line in summary[1:]} == {*PHASES, "total"}


def test_write_outputs_empty_table(tmp_path):
    paths = write_outputs(MetricsTable(), EventLog(enabled=False),
                          tmp_path / "empty")
    assert paths[0].read_text().splitlines() == [SESSIONS_HEADER]
    assert paths[1].read_text().splitlines() == [SUMMARY_HEADER]


def test_write_outputs_idempotent(tmp_path):
    table, log = run_experiment(_small_cfg())
    first = write_outputs(table, log, tmp_path / "out")
    blobs = [p.read_bytes() for p in first]
    second = write_outputs(table, log, tmp_path / "out")
    assert [p.read_bytes() for p in second] == blobs


def test_summary_recompute_from_csv_file(tmp_path):
    """Independent tool pass: re-derive summary.csv from sessions.csv."""
    table, log = run_experiment(_small_cfg())
    paths = write_outputs(table, log, tmp_path / "out")
    header = paths[0].read_text().splitlines()[0].split(",")
    rows = [dict(zip(header, line.split(",")))
            for line in paths[0].read_text().splitlines()[1:]]
    written = {line.split(",")[0]: line.split(",")[1:]
               for line in paths[1].read_text().splitlines()[1:]}
    for phase in (*PHASES, "total"):
        col = "total_ms" if phase == "total" else f"{phase}_ms"
        values = [float(r[col]) for r in rows if r[col]]
        mean, mn, mx = statistics.fmean(values), min(values), max(values)
        q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
        got = [float(x) for x in written[phase]]
        assert got == pytest.approx([mean, mn, q1, med, q3, mx], abs=1e-12)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_simulate(tmp_path, capsys):
    cfg = _write(tmp_path, "mode = v2vcc\nconsumers = 3\nseed = 5\nruns = 1\n")
    out = tmp_path / "results"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "sessions.csv").exists()
    assert (out / "summary.csv").exists()
    assert (out / "events.log").exists()
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == 3


def test_cli_simulate_overrides(tmp_path):
    cfg = _write(tmp_path, "mode = v2vcc\nconsumers = 3\nseed = 5\nruns = 4\n")
    out = tmp_path / "results"
    assert main(["simulate", "--config", str(cfg), "--out", str(out),
                 "--runs", "1", "--seed", "9"]) == 0
    lines = (out / "sessions.csv").read_text().splitlines()
    assert len(lines) == 1 + 3  # one run of three consumers
    assert all(line.split(",")[1] == "9" for line in lines[1:])


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "seed = 1\nloss = 0.3\n")
    assert main(["simulate", "--config", str(cfg), "--out",
                 str(tmp_path / "o")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_sweep(tmp_path):
    a = _write(tmp_path, "mode = v2vcc\nconsumers = 3\nseed = 5\nruns = 1\n"
                         "id = alpha\n", name="a.cfg")
    _write(tmp_path, "mode = ip\nseed = 5\nruns = 2\nip_error_rate = 0\n"
                     "id = beta\n", name="b.cfg")
    grid = _write(tmp_path, "a.cfg\n# skip me\nb.cfg\n", name="grid.txt")
    out = tmp_path / "sweep"
    assert main(["sweep", "--grid", str(grid), "--out", str(out)]) == 0
    assert (out / "alpha" / "sessions.csv").exists()
    assert (out / "ip-beta" / "sessions.csv").exists()


def test_cli_sweep_missing_grid(tmp_path):
    assert main(["sweep", "--grid", str(tmp_path / "none.txt"), "--out",
                 str(tmp_path)]) == 2
