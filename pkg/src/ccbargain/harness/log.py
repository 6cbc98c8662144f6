"""Trajectory records, CSV/SVG export and summary metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bargaining import sync_error
from ..costs import SPEED_LIMIT

COLUMNS = ("k", "t", "agent", "d", "v", "y", "u", "psi", "kappa", "beta", "coop")
SYNC_WINDOW = 10


@dataclass
class TrajectoryLog:
    n_agents: int
    T: float
    rows: list = field(default_factory=list)  # tuples in COLUMNS order
    meta: dict = field(default_factory=dict)

    def add_step(self, k: int, values: dict) -> None:
        """``values[i]`` is the (d, v, y, u, psi, kappa, beta, coop) tuple of agent i."""
        t = k * self.T
        for i in range(self.n_agents):
            d, v, y, u, psi, kappa, beta, coop = values[i]
            self.rows.append((k, t, i, d, v, y, u, psi, kappa, beta, int(coop)))

    @property
    def n_steps(self) -> int:
        return len(self.rows) // self.n_agents if self.n_agents else 0

    def column(self, name: str) -> np.ndarray:
        """Values of one column as a (steps, agents) array."""
        j = COLUMNS.index(name)
        return np.array([r[j] for r in self.rows], dtype=float).reshape(self.n_steps, self.n_agents)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    return "nan" if math.isnan(value) else repr(value)


def export_csv(log: TrajectoryLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in log.rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path, T: float | None = None) -> TrajectoryLog:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for r in reader:
            rows.append((int(r[0]), float(r[1]), int(r[2]), *(float(v) for v in r[3:10]), int(r[10])))
    n_agents = max((r[2] for r in rows), default=-1) + 1
    if T is None:
        T = rows[n_agents][1] if len(rows) > n_agents > 0 else 0.1
    return TrajectoryLog(n_agents=n_agents, T=T, rows=rows)


def export_plots(log: TrajectoryLog, out_dir) -> list[Path]:
    """One SVG per quantity (output speed, disagreement value, cost, control)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    matplotlib.rcParams["svg.hashsalt"] = "ccbargain"
    t = log.column("t")[:, 0] if log.n_steps else np.zeros(0)
    written = []
    for name, label in (("y", "output speed [m/s]"), ("beta", "disagreement value"),
                        ("kappa", "game cost"), ("u", "control [m/s^2]")):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        data = log.column(name) if log.n_steps else np.zeros((0, log.n_agents))
        for i in range(log.n_agents):
            ax.plot(t, data[:, i], label=f"agent {i}", linewidth=1.0)
        ax.set_xlabel("t [s]")
        ax.set_ylabel(label)
        if log.n_agents:
            ax.legend(fontsize="small", ncol=2)
        fig.tight_layout()
        path = out_dir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


@dataclass
class Metrics:
    sync_time_steps: int | None
    total_cost: tuple
    max_speed_violation: float
    rounds_to_agreement: int | None


def sync_errors(log: TrajectoryLog, topology, ref) -> np.ndarray:
    ys = log.column("y")
    return np.array([sync_error(ys[k], topology.edges, topology.leader, ref.v_ref(k))
                     for k in range(log.n_steps)])


def first_sustained(errors, delta: float, window: int = SYNC_WINDOW) -> int | None:
    run = 0
    for k, e in enumerate(errors):
        run = run + 1 if e < delta else 0
        if run >= window:
            return k - window + 1
    return None


def compute_metrics(log: TrajectoryLog, cfg) -> Metrics:
    errors = sync_errors(log, cfg.topology, cfg.ref)
    v = log.column("v") if log.n_steps else np.zeros((0, log.n_agents))
    coop = log.column("coop") if log.n_steps else np.zeros((0, log.n_agents))
    kappa = log.column("kappa") if log.n_steps else np.zeros((0, log.n_agents))
    agreed = [k for k in range(log.n_steps) if coop[k].all()]
    return Metrics(
        sync_time_steps=first_sustained(errors, cfg.game.delta_sync),
        total_cost=tuple(float(c) for c in kappa.sum(axis=0)),
        max_speed_violation=float(max(0.0, (v.max() - SPEED_LIMIT) if v.size else 0.0)),
        rounds_to_agreement=agreed[0] if agreed else None,
    )
