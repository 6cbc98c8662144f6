"""Round-barrier exchange semantics shared by the in-process and TCP transports."""

from __future__ import annotations

from typing import Mapping, Sequence

from .topology import Topology
from .wire import PLAN, STATE, RoundMessage


class RoundFailure(RuntimeError):
    def __init__(self, k: int, missing: Sequence[int], reason: str = "no message"):
        self.k = k
        self.missing = sorted(missing)
        super().__init__(f"round {k} failed: {reason} from agents {self.missing}")


class Router:
    """Edge-filtered delivery with optional whole-round delay.

    ``delay_rounds=1`` hands out the messages sent one round earlier (the
    first round is delivered undelayed). ``broadcast_all`` ignores the graph
    and delivers every other agent's messages.
    """

    def __init__(self, topology: Topology, delay_rounds: int = 0, broadcast_all: bool = False):
        if delay_rounds < 0:
            raise ValueError("delay_rounds must be >= 0")
        self.topology = topology
        self.delay_rounds = delay_rounds
        self.broadcast_all = broadcast_all
        self._history: dict[int, dict[int, list[RoundMessage]]] = {}
        self._senders = {
            i: (tuple(j for j in range(topology.n_agents) if j != i) if broadcast_all
                else topology.in_neighbors(i))
            for i in range(topology.n_agents)
        }

    def check_complete(self, outboxes: Mapping[int, Sequence[RoundMessage]], k: int) -> None:
        missing = []
        for i in range(self.topology.n_agents):
            kinds = {(m.kind, m.k) for m in outboxes.get(i, ())}
            if (STATE, k) not in kinds or (PLAN, k) not in kinds:
                missing.append(i)
        if missing:
            raise RoundFailure(k, missing)

    def route(self, outboxes: Mapping[int, Sequence[RoundMessage]], k: int) -> dict[int, list[RoundMessage]]:
        self.check_complete(outboxes, k)
        self._history[k] = {i: [m for m in outboxes[i] if m.kind in (STATE, PLAN)]
                            for i in range(self.topology.n_agents)}
        source_round = max(k - self.delay_rounds, min(self._history))
        self._history = {r: v for r, v in self._history.items() if r >= k - self.delay_rounds}
        sent = self._history[source_round]
        order = {STATE: 0, PLAN: 1}
        return {i: [m for j in self._senders[i] for m in sorted(sent[j], key=lambda m: order[m.kind])]
                for i in range(self.topology.n_agents)}


class InProcessTransport:
    def __init__(self, topology: Topology, delay_rounds: int = 0, broadcast_all: bool = False):
        self.router = Router(topology, delay_rounds, broadcast_all)

    def exchange(self, outboxes, k: int):
        return self.router.route(outboxes, k)


def exchange_round(transport, outboxes, k: int):
    """Deliver step-k outboxes once every agent has sent; returns per-agent inboxes."""
    return transport.exchange(outboxes, k)
