"""Closed-loop drivers for the in-process and TCP runtimes."""

from __future__ import annotations

import subprocess
import sys
import tempfile
from pathlib import Path

from ..bargaining import sync_error
from ..network.tcp import Coordinator
from ..network.transport import InProcessTransport, RoundFailure, exchange_round
from .log import SYNC_WINDOW, TrajectoryLog
from .runtime import AgentRuntime, build_contexts
from .scenario import ScenarioConfig


class ClosedLoopError(RuntimeError):
    def __init__(self, k: int, cause: Exception):
        super().__init__(f"step {k}: {cause}")
        self.k = k
        self.cause = cause


class TransportError(RuntimeError):
    pass


class _Recorder:
    """Appends committed rows and decides early exit."""

    def __init__(self, cfg: ScenarioConfig, log: TrajectoryLog):
        self.cfg = cfg
        self.log = log
        self.run = 0

    def __call__(self, k: int, commits) -> bool:
        values = {i: commits[i].payload for i in range(self.cfg.topology.n_agents)}
        self.log.add_step(k, values)
        ys = [values[i][2] for i in range(self.cfg.topology.n_agents)]
        topo = self.cfg.topology
        e = sync_error(ys, topo.edges, topo.leader, self.cfg.ref.v_ref(k))
        self.run = self.run + 1 if e < self.cfg.game.delta_sync else 0
        return self.cfg.early_exit and self.run >= SYNC_WINDOW


def _new_log(cfg: ScenarioConfig) -> TrajectoryLog:
    return TrajectoryLog(n_agents=cfg.topology.n_agents, T=cfg.T,
                         meta={"mode": cfg.mode, "runtime": cfg.runtime, "scenario": cfg.name})


def run_inproc(cfg: ScenarioConfig) -> TrajectoryLog:
    contexts = build_contexts(cfg)
    coupling = cfg.topology.coupling()
    cache: dict = {}
    runtimes = [AgentRuntime(cfg, i, contexts, coupling, cache) for i in range(cfg.topology.n_agents)]
    transport = InProcessTransport(cfg.topology, cfg.delay_rounds, broadcast_all=cfg.mode == "centralized")
    log = _new_log(cfg)
    record = _Recorder(cfg, log)
    for k in range(cfg.steps):
        try:
            inboxes = exchange_round(transport, {rt.agent_id: rt.outbox(k) for rt in runtimes}, k)
            commits = {rt.agent_id: rt.step(k, inboxes[rt.agent_id]) for rt in runtimes}
        except RoundFailure:
            raise
        except Exception as exc:  # solver/numeric failure, reported with the step index
            raise ClosedLoopError(k, exc) from exc
        if record(k, commits):
            break
    return log


def run_tcp(cfg: ScenarioConfig, host: str = "127.0.0.1") -> TrajectoryLog:
    """Coordinator in this process, one subprocess per agent."""
    log = _new_log(cfg)
    record = _Recorder(cfg, log)
    coord = Coordinator(cfg.topology, host=host, port=0, timeout=cfg.timeout, delay_rounds=cfg.delay_rounds,
                        broadcast_all=cfg.mode == "centralized")
    addr = f"{coord.address[0]}:{coord.address[1]}"
    with tempfile.TemporaryDirectory() as tmp:
        scen = Path(tmp) / "run.scenario"
        scen.write_text(cfg.replace(runtime="tcp").to_text())
        procs = [subprocess.Popen([sys.executable, "-m", "ccbargain.cli", "agent", "--connect", addr,
                                   "--id", str(i), "--scenario", str(scen)],
                                  stdout=subprocess.DEVNULL, stderr=subprocess.PIPE)
                 for i in range(cfg.topology.n_agents)]
        try:
            coord.accept_agents()
            coord.run(cfg.steps, record)
        except RoundFailure as exc:
            raise TransportError(str(exc)) from exc
        finally:
            coord.close()
            errors = []
            for i, p in enumerate(procs):
                try:
                    _, err = p.communicate(timeout=30)
                except subprocess.TimeoutExpired:
                    p.kill()
                    _, err = p.communicate()
                if p.returncode != 0:
                    errors.append(f"agent {i} exited {p.returncode}: {err.decode(errors='replace')[-400:]}")
        if errors:
            raise TransportError("; ".join(errors))
    return log


def run_closed_loop(cfg: ScenarioConfig) -> TrajectoryLog:
    if cfg.runtime == "tcp":
        return run_tcp(cfg)
    return run_inproc(cfg)
