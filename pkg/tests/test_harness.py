import csv

import numpy as np
import pytest

from ccbargain import cli
from ccbargain.harness import (ClosedLoopError, ScenarioError, TrajectoryLog, TransportError, compute_metrics,
                               export_csv, load_scenario, parse_scenario, read_csv, run_closed_loop)
from ccbargain.harness.log import COLUMNS, first_sustained

MINIMAL = """
[scenario]
T = 0.1
steps = 5
Np = 4
Nu = 2
v_ref = 0:1.0

[agent 0]
a1 = -0.25
a2 = -0.5
b = 1
x0 = 2, 1

[agent 1]
a1 = -1.25
a2 = 1
b = 0.5
x0 = 1, 2.1
"""


def test_bundled_scenarios_match_the_tables():
    t1 = load_scenario("table1.scenario")
    a5 = t1.agents[5]
    assert (a5.params.a1, a5.params.a2, a5.params.b, a5.x0) == (-1.0, 2.0, 1.0, (2.0, -0.5))
    assert t1.topology.n_agents == 7 and t1.discretization == "zoh"
    t2 = load_scenario("table2.scenario")
    a3 = t2.agents[3]
    assert (a3.params.a1, a3.params.a2, a3.params.b, a3.x0) == (-0.75, 2.0, 1.5, (1.0, 4.0))
    assert t2.discretization == "tustin" and t2.agents[0].u_max == 20.0
    sym = load_scenario("symmetric.scenario")
    assert {(a.params.a1, a.params.a2, a.params.b) for a in sym.agents} == {(1.0, -1.0, -1.0)}


def test_minimal_scenario_defaults_to_a_chain():
    cfg = parse_scenario(MINIMAL)
    assert cfg.topology.edges == ((0, 1), (1, 0))
    assert cfg.horizon.Np == 4 and cfg.ref.v_ref(3) == 1.0
    assert cfg.game.fallback == "best-response"


def test_text_round_trip():
    cfg = load_scenario("table2.scenario").replace(mode="centralized", delay_rounds=1)
    again = parse_scenario(cfg.to_text())
    assert again == cfg


@pytest.mark.parametrize("text, line", [
    (MINIMAL.replace("[agent 1]", "[agent 7]"), None),
    (MINIMAL.replace("x0 = 1, 2.1", "x0 = 1"), 19),
    (MINIMAL.replace("Nu = 2", "Nu = 9"), None),
    (MINIMAL.replace("steps = 5", "steps = five"), 4),
    (MINIMAL.replace("T = 0.1", "colour = red"), 3),
    (MINIMAL.replace("b = 0.5", "b = 0"), None),
])
def test_scenario_errors(text, line):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    if line is not None:
        assert err.value.line == line


def test_missing_agent_block_is_reported():
    three = MINIMAL + "\n[topology]\nagent 0\nagent 1\nagent 2\nedge 0 1\nedge 1 2\n"
    with pytest.raises(ScenarioError, match=r"missing \[agent 2\]"):
        parse_scenario(three)
    with pytest.raises(ScenarioError, match="duplicate"):
        parse_scenario(MINIMAL.replace("[agent 1]", "[agent 0]"))


def hand_log(vs, T=0.1):
    log = TrajectoryLog(n_agents=2, T=T)
    for k, (v0, v1) in enumerate(vs):
        log.add_step(k, {0: (0.0, v0, v0, 0.0, 1.0, 2.0, 3.0, True),
                         1: (0.0, v1, v1, 0.0, 1.0, 2.0, 3.0, k > 0)})
    return log


def test_csv_round_trip(tmp_path):
    empty = export_csv(TrajectoryLog(n_agents=2, T=0.1), tmp_path / "empty.csv")
    assert empty.read_text() == ",".join(COLUMNS) + "\n"
    log = hand_log([(0.1, 1 / 3), (np.pi, 2.0)])
    back = read_csv(export_csv(log, tmp_path / "log.csv"), T=0.1)
    assert back.rows == log.rows


def test_metrics_examples():
    cfg = parse_scenario(MINIMAL)
    log = hand_log([(33.0, 1.0)] + [(1.0, 1.0)] * 12)
    m = compute_metrics(log, cfg)
    assert m.max_speed_violation == pytest.approx(0.4)
    assert m.sync_time_steps == 1
    assert m.rounds_to_agreement == 1
    assert m.total_cost == (26.0, 26.0)
    assert first_sustained([1, 0, 0, 1] + [0] * 10, 0.5) == 4
    assert first_sustained([0] * 9, 0.5) is None


def test_short_closed_loop_runs_every_mode():
    cfg = parse_scenario(MINIMAL)
    for mode in ("bargaining", "centralized", "decentralized"):
        log = run_closed_loop(cfg.replace(mode=mode))
        assert log.n_steps == 5
        assert np.all(np.isfinite(log.column("v")))


def test_cli_run_writes_outputs(tmp_path, capsys):
    scen = tmp_path / "mini.scenario"
    scen.write_text(MINIMAL)
    assert cli.main(["run", "--scenario", str(scen), "--mode", "decentralized", "--no-plots",
                     "--out", str(tmp_path / "out")]) == cli.EXIT_OK
    with open(tmp_path / "out" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["mode"] == "decentralized" and rows[0]["steps_run"] == "5"
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert "sync_time_steps=" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    out = str(tmp_path / "o")
    assert cli.main(["run", "--scenario", str(tmp_path / "nope.scenario"), "--out", out]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--scenario", "table1.scenario", "--nu", "50", "--out", out]) == cli.EXIT_CONFIG

    def solver_down(cfg):
        raise ClosedLoopError(3, RuntimeError("diverged"))

    def link_down(cfg):
        raise TransportError("agent 2 silent")

    monkeypatch.setattr(cli, "run_closed_loop", solver_down)
    assert cli.main(["run", "--scenario", "table1.scenario", "--out", out]) == cli.EXIT_SOLVER
    monkeypatch.setattr(cli, "run_closed_loop", link_down)
    assert cli.main(["run", "--scenario", "table1.scenario", "--out", out]) == cli.EXIT_TRANSPORT
    err = capsys.readouterr().err
    assert "solver failure" in err and "transport failure" in err
