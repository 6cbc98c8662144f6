"""Communication graphs.

Text format, one directive per line (``#`` starts a comment)::

    agent 0
    edge 0 1      # 0 sends to 1
    leader 0
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

from ..bargaining import Coupling


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    n_agents: int
    edges: tuple  # (sender, receiver)
    leader: int = 0

    def in_neighbors(self, i: int) -> tuple:
        return tuple(sorted({a for a, b in self.edges if b == i}))

    def sources(self) -> dict:
        """Tracking source of each agent: its parent in a BFS tree rooted at the leader."""
        parent = {self.leader: None}
        queue = deque([self.leader])
        while queue:
            a = queue.popleft()
            for b in sorted(b for s, b in self.edges if s == a):
                if b not in parent:
                    parent[b] = a
                    queue.append(b)
        return parent

    def coupling(self) -> Coupling:
        return Coupling(source=self.sources(),
                        in_neighbors={i: self.in_neighbors(i) for i in range(self.n_agents)},
                        leader=self.leader)

    def to_text(self) -> str:
        lines = [f"agent {i}" for i in range(self.n_agents)]
        lines += [f"edge {a} {b}" for a, b in self.edges]
        lines.append(f"leader {self.leader}")
        return "\n".join(lines) + "\n"


def _validate(n: int, edges, leader: int) -> None:
    reach = Topology(n, tuple(edges), leader).sources()
    missing = sorted(set(range(n)) - set(reach))
    if missing:
        raise TopologyError(f"agents {missing} are not reachable from leader {leader}")


def parse_topology(text: str) -> Topology:
    agents, edges, leader = set(), [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "agent" and len(parts) == 2:
                agents.add(int(parts[1]))
            elif parts[0] == "edge" and len(parts) == 3:
                a, b = int(parts[1]), int(parts[2])
                if a == b:
                    raise TopologyError(f"line {lineno}: self-loop on agent {a}")
                edges.append((a, b))
            elif parts[0] == "leader" and len(parts) == 2:
                leader = int(parts[1])
            else:
                raise TopologyError(f"line {lineno}: cannot parse {raw.strip()!r}")
        except ValueError as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"line {lineno}: expected integer ids in {raw.strip()!r}") from None
    if not agents:
        raise TopologyError("no agents declared")
    n = max(agents) + 1
    if agents != set(range(n)):
        raise TopologyError(f"agent ids must be 0..{n - 1}")
    if leader is None:
        leader = 0
    for a, b in edges:
        if a not in agents or b not in agents:
            raise TopologyError(f"edge {a}->{b} names an undeclared agent")
    if leader not in agents:
        raise TopologyError(f"leader {leader} is not a declared agent")
    edges = list(dict.fromkeys(edges))
    _validate(n, edges, leader)
    return Topology(n, tuple(edges), leader)


def load_topology(source) -> Topology:
    """Accepts a Topology, a path, or topology text."""
    if isinstance(source, Topology):
        _validate(source.n_agents, source.edges, source.leader)
        return source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        return parse_topology(Path(source).read_text())
    return parse_topology(str(source))


def chain(n: int, bidirectional: bool = True) -> Topology:
    edges = []
    for i in range(n - 1):
        edges.append((i, i + 1))
        if bidirectional:
            edges.append((i + 1, i))
    return Topology(n, tuple(edges), 0)
