"""Scenario files: a flat ``key = value`` format with one section per agent.

::

    [scenario]
    T = 0.1
    steps = 600
    topology = fig3.topology      # path relative to this file, or a bundled name
    v_ref = 0:0.0, 200:0.5        # piecewise-constant k:speed table

    [defaults]                    # optional, applies to every agent
    u_max = 5

    [agent 0]
    a1 = -0.25
    a2 = -0.5
    b = 1
    x0 = 2, 1
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..bargaining import GameConfig
from ..costs import CostWeights, ReferenceProfile
from ..dynamics import InvalidParameterError, VehicleParams
from ..network.topology import Topology, TopologyError, chain, parse_topology
from ..prediction import HorizonSpec
from ..solver import DEFAULT_U_MAX

MODES = ("bargaining", "centralized", "decentralized")
RUNTIMES = ("inproc", "tcp")
DISCRETIZATIONS = ("zoh", "tustin")


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = "" if line is None else f"line {line}: "
        prefix = "" if path is None else f"{path}: "
        super().__init__(f"{prefix}{where}{message}")
        self.line = line


@dataclass(frozen=True)
class AgentConfig:
    params: VehicleParams
    x0: tuple
    u_max: float = DEFAULT_U_MAX
    q_uu: float = 0.1
    q_xx: tuple = (1.0, 1.0)
    lambda_v: float = 1.0
    rho_speed: float = 10.0
    C: tuple = (0.0, 1.0)
    d: float = 0.0

    def weights(self, Nu: int) -> CostWeights:
        return CostWeights.default(Nu, q_uu=self.q_uu, q_xx=self.q_xx, lambda_v=self.lambda_v,
                                   rho_speed=self.rho_speed)


@dataclass(frozen=True)
class ScenarioConfig:
    agents: tuple
    topology: Topology
    horizon: HorizonSpec = HorizonSpec(20, 3)
    T: float = 0.1
    steps: int = 600
    mode: str = "bargaining"
    runtime: str = "inproc"
    game: GameConfig = GameConfig()
    ref: ReferenceProfile = ReferenceProfile()
    discretization: str = "zoh"
    seed: int = 0
    early_exit: bool = False
    delay_rounds: int = 0
    timeout: float = 2.0
    name: str = "scenario"
    topology_name: str = field(default="", compare=False)

    def __post_init__(self):
        if len(self.agents) != self.topology.n_agents:
            raise ScenarioError(f"{len(self.agents)} agent blocks for a {self.topology.n_agents}-agent topology")
        if self.steps < 1:
            raise ScenarioError("steps must be >= 1")
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}")
        if self.runtime not in RUNTIMES:
            raise ScenarioError(f"runtime must be one of {RUNTIMES}")
        if self.discretization not in DISCRETIZATIONS:
            raise ScenarioError(f"discretization must be one of {DISCRETIZATIONS}")
        if not self.T > 0:
            raise ScenarioError("T must be positive")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Serialize exactly (floats via repr) so another process can reload it."""
        g, h = self.game, self.horizon
        lines = [
            "[scenario]",
            f"name = {self.name}",
            f"T = {self.T!r}",
            f"steps = {self.steps}",
            f"Np = {h.Np}",
            f"Nu = {h.Nu}",
            f"mode = {self.mode}",
            f"runtime = {self.runtime}",
            f"discretization = {self.discretization}",
            f"mu = {g.mu!r}",
            f"delta = {g.delta_sync!r}",
            f"beta_init_margin = {g.beta_init_margin!r}",
            f"fallback = {g.fallback}",
            "v_ref = " + ", ".join(f"{k}:{v!r}" for k, v in self.ref.table),
            f"d_ref = {self.ref.d_ref!r}",
            f"seed = {self.seed}",
            f"early_exit = {str(self.early_exit).lower()}",
            f"delay_rounds = {self.delay_rounds}",
            f"timeout = {self.timeout!r}",
        ]
        if g.lambda_i is not None:
            lines.append("lambda_i = " + ", ".join(repr(x) for x in g.lambda_i))
        lines += ["", "[topology]"] + self.topology.to_text().splitlines()
        for i, a in enumerate(self.agents):
            p = a.params
            lines += ["", f"[agent {i}]", f"a1 = {p.a1!r}", f"a2 = {p.a2!r}", f"b = {p.b!r}",
                      "x0 = " + ", ".join(repr(v) for v in a.x0), f"u_max = {a.u_max!r}",
                      f"q_uu = {a.q_uu!r}", "q_xx = " + ", ".join(repr(v) for v in a.q_xx),
                      f"lambda_v = {a.lambda_v!r}", f"rho_speed = {a.rho_speed!r}",
                      "C = " + ", ".join(repr(v) for v in a.C), f"d = {a.d!r}"]
        return "\n".join(lines) + "\n"


_SCENARIO_KEYS = {"name", "T", "steps", "Np", "Nu", "mode", "runtime", "discretization", "mu", "delta",
                  "beta_init_margin", "fallback", "v_ref", "d_ref", "seed", "early_exit", "delay_rounds",
                  "timeout", "topology", "lambda_i"}
_AGENT_KEYS = {"a1", "a2", "b", "x0", "u_max", "q_uu", "q_xx", "lambda_v", "rho_speed", "C", "d"}
_REQUIRED_AGENT = ("a1", "a2", "b", "x0")


def bundled_path(name: str) -> Path | None:
    ref = resources.files("ccbargain") / "scenarios" / name
    return Path(str(ref)) if ref.is_file() else None


def _floats(text: str, n: int | None, line: int, key: str) -> tuple:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ScenarioError(f"{key}: expected numbers, got {text!r}", line) from None
    if n is not None and len(vals) != n:
        raise ScenarioError(f"{key}: expected {n} values, got {len(vals)}", line)
    return vals


def _number(text: str, line: int, key: str, cast=float):
    try:
        return cast(text)
    except ValueError:
        raise ScenarioError(f"{key}: expected {cast.__name__}, got {text!r}", line) from None


def _parse_sections(text: str):
    sections: list[tuple[str, int, dict]] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = (line[1:-1].strip(), lineno, {})
            sections.append(current)
            continue
        if current is None:
            raise ScenarioError("content before the first [section]", lineno)
        if current[0] == "topology":
            current[2].setdefault("__lines__", []).append((lineno, line))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"expected key = value, got {raw.strip()!r}", lineno)
        key = key.strip()
        if key in current[2]:
            raise ScenarioError(f"duplicate key {key!r}", lineno)
        current[2][key] = (value.strip(), lineno)
    return sections


def _agent(entries: dict, defaults: dict, header_line: int) -> AgentConfig:
    merged = {**defaults, **entries}
    for key, (_, line) in merged.items():
        if key not in _AGENT_KEYS:
            raise ScenarioError(f"unknown agent key {key!r}", line)
    for key in _REQUIRED_AGENT:
        if key not in merged:
            raise ScenarioError(f"agent block is missing {key!r}", header_line)
    kw = {}
    for key in ("u_max", "q_uu", "lambda_v", "rho_speed", "d"):
        if key in merged:
            kw[key] = _number(merged[key][0], merged[key][1], key)
    for key, n in (("q_xx", 2), ("C", 2)):
        if key in merged:
            kw[key] = _floats(merged[key][0], n, merged[key][1], key)
    try:
        params = VehicleParams(*(_number(merged[k][0], merged[k][1], k) for k in ("a1", "a2", "b")))
    except InvalidParameterError as exc:
        raise ScenarioError(str(exc), merged["a1"][1]) from None
    x0 = _floats(merged["x0"][0], 2, merged["x0"][1], "x0")
    return AgentConfig(params=params, x0=x0, **kw)


def _reference(text: str, line: int, d_ref: float) -> ReferenceProfile:
    rows = []
    for item in text.split(","):
        item = item.strip()
        if ":" in item:
            k, v = item.split(":", 1)
            rows.append((_number(k, line, "v_ref", int), _number(v, line, "v_ref")))
        else:
            rows.append((0, _number(item, line, "v_ref")))
    return ReferenceProfile(table=tuple(rows), d_ref=d_ref)


def parse_scenario(text: str, base_dir: Path | None = None, path: str | None = None) -> ScenarioConfig:
    try:
        return _parse_scenario(text, base_dir)
    except ScenarioError as exc:
        if path is not None:
            raise ScenarioError(str(exc), None, path) from None
        raise


def _parse_scenario(text: str, base_dir: Path | None) -> ScenarioConfig:
    sections = _parse_sections(text)
    scen, defaults, agent_blocks, topo_lines = None, {}, {}, None
    for name, line, entries in sections:
        if name == "scenario":
            scen = entries
        elif name == "defaults":
            defaults = entries
        elif name == "topology":
            topo_lines = entries.get("__lines__", [])
        elif name.startswith("agent"):
            idx = _number(name[5:].strip(), line, "agent id", int)
            if idx in agent_blocks:
                raise ScenarioError(f"duplicate block for agent {idx}", line)
            agent_blocks[idx] = (entries, line)
        else:
            raise ScenarioError(f"unknown section [{name}]", line)
    if scen is None:
        raise ScenarioError("missing [scenario] section")
    for key, (_, line) in scen.items():
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"unknown scenario key {key!r}", line)

    def get(key, default, cast=float):
        if key not in scen:
            return default
        return _number(scen[key][0], scen[key][1], key, cast)

    # topology
    topo_name = ""
    if topo_lines is not None:
        try:
            topology = parse_topology("\n".join(l for _, l in topo_lines))
        except TopologyError as exc:
            raise ScenarioError(str(exc), topo_lines[0][0] if topo_lines else None) from None
    elif "topology" in scen:
        ref_name, line = scen["topology"]
        candidate = (base_dir / ref_name) if base_dir is not None else Path(ref_name)
        topo_path = candidate if candidate.is_file() else bundled_path(ref_name)
        if topo_path is None:
            raise ScenarioError(f"topology file {ref_name!r} not found", line)
        try:
            topology = parse_topology(topo_path.read_text())
        except TopologyError as exc:
            raise ScenarioError(f"{ref_name}: {exc}", line) from None
        topo_name = ref_name
    else:
        n = max(agent_blocks) + 1 if agent_blocks else 0
        topology = chain(n)

    for i in range(topology.n_agents):
        if i not in agent_blocks:
            raise ScenarioError(f"missing [agent {i}] block")
    extra = sorted(set(agent_blocks) - set(range(topology.n_agents)))
    if extra:
        raise ScenarioError(f"agent {extra[0]} is not in the topology", agent_blocks[extra[0]][1])
    agents = tuple(_agent(agent_blocks[i][0], defaults, agent_blocks[i][1]) for i in range(topology.n_agents))

    Np, Nu = get("Np", 20, int), get("Nu", 3, int)
    try:
        horizon = HorizonSpec(Np, Nu)
    except ValueError as exc:
        raise ScenarioError(str(exc), scen.get("Nu", scen.get("Np", (None, None)))[1]) from None
    lambda_i = None
    if "lambda_i" in scen:
        lambda_i = _floats(scen["lambda_i"][0], topology.n_agents, scen["lambda_i"][1], "lambda_i")
    try:
        game = GameConfig(mu=get("mu", 0.3), lambda_i=lambda_i, delta_sync=get("delta", 0.01),
                          beta_init_margin=get("beta_init_margin", 1.0),
                          fallback=scen.get("fallback", ("best-response",))[0])
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    d_ref = get("d_ref", 5.0)
    ref = (_reference(*scen["v_ref"], d_ref) if "v_ref" in scen else ReferenceProfile(d_ref=d_ref))
    early = scen.get("early_exit", ("false", 0))
    if early[0].lower() not in ("true", "false"):
        raise ScenarioError("early_exit must be true or false", early[1])
    return ScenarioConfig(
        agents=agents, topology=topology, horizon=horizon, T=get("T", 0.1), steps=get("steps", 600, int),
        mode=scen.get("mode", ("bargaining",))[0], runtime=scen.get("runtime", ("inproc",))[0],
        game=game, ref=ref, discretization=scen.get("discretization", ("zoh",))[0],
        seed=get("seed", 0, int), early_exit=early[0].lower() == "true",
        delay_rounds=get("delay_rounds", 0, int), timeout=get("timeout", 2.0),
        name=scen.get("name", ("scenario",))[0], topology_name=topo_name,
    )


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario file; a bare name falls back to the bundled scenarios."""
    p = Path(path)
    if not p.is_file():
        bundled = bundled_path(str(path))
        if bundled is None:
            raise ScenarioError(f"scenario file {str(path)!r} not found")
        p = bundled
    return parse_scenario(p.read_text(), base_dir=p.parent, path=str(p))


def agent_x0(cfg: ScenarioConfig, i: int) -> np.ndarray:
    return np.array(cfg.agents[i].x0, dtype=float)
