"""Command line entry point: ``ccbargain run|compare|agent|coordinator``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .harness.log import compute_metrics, export_csv, export_plots
from .harness.loop import ClosedLoopError, TransportError, run_closed_loop
from .harness.runtime import AgentRuntime
from .harness.scenario import MODES, ScenarioError, load_scenario
from .network.tcp import Coordinator, parse_address, run_agent
from .network.topology import TopologyError
from .network.transport import RoundFailure
from .prediction import HorizonSpec
from .bargaining import GameConfig

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TRANSPORT = 0, 2, 3, 4
METRIC_FIELDS = ("mode", "sync_time_steps", "sync_time_s", "total_cost", "max_speed_violation",
                 "rounds_to_agreement", "steps_run")


def _configure(args):
    cfg = load_scenario(args.scenario)
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "runtime", None):
        changes["runtime"] = args.runtime
    if getattr(args, "steps", None) is not None:
        changes["steps"] = args.steps
    if getattr(args, "discretization", None):
        changes["discretization"] = args.discretization
    if getattr(args, "early_exit", False):
        changes["early_exit"] = True
    if getattr(args, "np", None) is not None or getattr(args, "nu", None) is not None:
        Np = args.np if args.np is not None else cfg.horizon.Np
        Nu = args.nu if args.nu is not None else cfg.horizon.Nu
        try:
            changes["horizon"] = HorizonSpec(Np, Nu)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    if getattr(args, "mu", None) is not None or getattr(args, "delta", None) is not None:
        g = cfg.game
        try:
            changes["game"] = GameConfig(mu=g.mu if args.mu is None else args.mu, lambda_i=g.lambda_i,
                                         delta_sync=g.delta_sync if args.delta is None else args.delta,
                                         beta_init_margin=g.beta_init_margin, fallback=g.fallback)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    return cfg.replace(**changes) if changes else cfg


def _metrics_row(mode, log, cfg) -> dict:
    m = compute_metrics(log, cfg)
    return {
        "mode": mode,
        "sync_time_steps": "" if m.sync_time_steps is None else m.sync_time_steps,
        "sync_time_s": "" if m.sync_time_steps is None else repr(m.sync_time_steps * cfg.T),
        "total_cost": repr(float(sum(m.total_cost))),
        "max_speed_violation": repr(m.max_speed_violation),
        "rounds_to_agreement": "" if m.rounds_to_agreement is None else m.rounds_to_agreement,
        "steps_run": log.n_steps,
    }


def _write_metrics(rows, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_FIELDS)
        w.writeheader()
        w.writerows(rows)


def _write_run(log, cfg, out: Path, plots: bool) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    export_csv(log, out / "trajectory.csv")
    if plots:
        export_plots(log, out)
    row = _metrics_row(cfg.mode, log, cfg)
    _write_metrics([row], out / "metrics.csv")
    return row


def cmd_run(args) -> int:
    cfg = _configure(args)
    log = run_closed_loop(cfg)
    row = _write_run(log, cfg, Path(args.out), not args.no_plots)
    print(", ".join(f"{k}={row[k]}" for k in METRIC_FIELDS))
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _configure(args)
    out = Path(args.out)
    rows = []
    for mode in MODES:
        cfg = base.replace(mode=mode)
        log = run_closed_loop(cfg)
        rows.append(_write_run(log, cfg, out / mode, not args.no_plots))
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(rows, out / "metrics.csv")
    for row in rows:
        print(", ".join(f"{k}={row[k]}" for k in METRIC_FIELDS))
    return EXIT_OK


def cmd_agent(args) -> int:
    cfg = load_scenario(args.scenario)
    if not 0 <= args.id < cfg.topology.n_agents:
        raise ScenarioError(f"agent id {args.id} outside 0..{cfg.topology.n_agents - 1}")
    runtime = AgentRuntime(cfg, args.id)
    run_agent(parse_address(args.connect), runtime, timeout=max(60.0, cfg.timeout))
    return EXIT_OK


def cmd_coordinator(args) -> int:
    from .harness.loop import _new_log, _Recorder

    cfg = _configure(args)
    host, port = parse_address(args.listen)
    coord = Coordinator(cfg.topology, host=host, port=port, timeout=cfg.timeout,
                        delay_rounds=cfg.delay_rounds, broadcast_all=cfg.mode == "centralized")
    print(f"listening on {coord.address[0]}:{coord.address[1]}", flush=True)
    log = _new_log(cfg)
    coord.accept_agents()
    coord.run(cfg.steps, _Recorder(cfg, log))
    if args.out:
        _write_run(log, cfg, Path(args.out), not args.no_plots)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccbargain", description="Bargaining-based cruise control simulations.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_out=True):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled name (e.g. table1.scenario)")
        sp.add_argument("--steps", type=int)
        sp.add_argument("--np", type=int, help="prediction horizon")
        sp.add_argument("--nu", type=int, help="control horizon")
        sp.add_argument("--mu", type=float, help="disagreement step size")
        sp.add_argument("--delta", type=float, help="synchronization threshold")
        sp.add_argument("--discretization", choices=("zoh", "tustin"))
        sp.add_argument("--early-exit", action="store_true", help="stop once synchronized")
        sp.add_argument("--no-plots", action="store_true")
        if with_out:
            sp.add_argument("--out", required=True, help="output directory")

    r = sub.add_parser("run", help="simulate one controller")
    common(r)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--runtime", choices=("inproc", "tcp"))
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="simulate all three controllers")
    common(c)
    c.add_argument("--runtime", choices=("inproc", "tcp"))
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("agent", help="serve one agent over TCP")
    a.add_argument("--connect", required=True, help="coordinator host:port")
    a.add_argument("--id", type=int, required=True)
    a.add_argument("--scenario", required=True)
    a.set_defaults(func=cmd_agent)

    co = sub.add_parser("coordinator", help="run the TCP round coordinator")
    common(co, with_out=False)
    co.add_argument("--listen", required=True, help="host:port to bind")
    co.add_argument("--mode", choices=MODES)
    co.add_argument("--out")
    co.set_defaults(func=cmd_coordinator)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, TopologyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClosedLoopError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (TransportError, RoundFailure, ConnectionError, TimeoutError) as exc:
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
