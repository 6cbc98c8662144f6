from .log import Metrics, TrajectoryLog, compute_metrics, export_csv, export_plots, read_csv
from .loop import ClosedLoopError, TransportError, run_closed_loop
from .scenario import AgentConfig, ScenarioConfig, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "Metrics", "TrajectoryLog", "compute_metrics", "export_csv", "export_plots", "read_csv",
    "ClosedLoopError", "TransportError", "run_closed_loop",
    "AgentConfig", "ScenarioConfig", "ScenarioError", "load_scenario", "parse_scenario",
]
