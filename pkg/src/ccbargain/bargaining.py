"""Disagreement-point dynamics and the per-step bargaining game.

Each agent's game cost is its global cost ``kappa``: l1 tracking of its
source's predicted speeds (the reference for the leader) plus its lifted
local cost. The disagreement value ``beta`` follows the realized game cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .costs import (CostWeights, GlobalCost, LiftedCost, ReferenceProfile, lift_local_cost,
                    local_cost, utopia_point)
from .dynamics import DiscreteModel, VehicleParams
from .prediction import PredictionOperator, shift_plan
from .solver import (BoxConstraint, CostTerm, FEAS_EPS, find_feasible, maximize_nash_product)


@dataclass(frozen=True, eq=False)
class AgentContext:
    """Static description of one vehicle, shared by every agent that models it."""

    id: int
    params: VehicleParams
    model: DiscreteModel
    po: PredictionOperator
    weights: CostWeights
    box: BoxConstraint


@dataclass(frozen=True, eq=False)
class AgentView:
    """What an agent knows about another agent at step k."""

    x: np.ndarray
    beta: float
    plan: np.ndarray  # aligned so plan[0] is the move for step k


@dataclass(frozen=True, eq=False)
class BargainState:
    beta: float
    zeta: float
    cooperated: bool
    plan: np.ndarray
    psi_last: float
    kappa_last: float = math.nan


FALLBACKS = ("best-response", "hold")


@dataclass(frozen=True)
class GameConfig:
    mu: float = 0.3
    lambda_i: tuple | None = None  # centralized weights; None means 1/N each
    delta_sync: float = 0.01
    beta_init_margin: float = 1.0
    fallback: str = "best-response"  # or "hold"

    def __post_init__(self):
        if self.fallback not in FALLBACKS:
            raise ValueError(f"fallback must be one of {FALLBACKS}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.delta_sync <= 0:
            raise ValueError("delta_sync must be positive")
        if self.lambda_i is not None:
            lam = np.asarray(self.lambda_i, dtype=float)
            if np.any(lam <= 0) or abs(lam.sum() - 1.0) > 1e-9:
                raise ValueError("bargaining weights must be positive and sum to 1")


@dataclass(frozen=True)
class GameOutcome:
    xi: tuple
    cooperation_mask: tuple


@dataclass
class StepResult:
    plan: np.ndarray
    cooperated: bool
    kappa: float
    psi: float


@dataclass(frozen=True)
class Coupling:
    """Who tracks whom, and who hears from whom.

    ``source[i]`` is the agent whose predicted speed ``i`` tracks (None for
    the leader, which tracks the reference). ``in_neighbors[i]`` lists the
    agents whose messages reach ``i``.
    """

    source: Mapping[int, int | None]
    in_neighbors: Mapping[int, tuple]
    leader: int = 0

    def followers(self, i: int) -> list[int]:
        return sorted(r for r, s in self.source.items() if s == i)

    def constraint_set(self, i: int) -> list[int]:
        """Agents whose game cost depends on ``i``'s plan and are visible to ``i``."""
        return [i] + [r for r in self.followers(i) if r in self.in_neighbors[i]]


def update_disagreement(beta: float, psi_new: float, mu: float) -> float:
    if beta >= psi_new:
        return beta - mu * (beta - psi_new)
    return psi_new


def init_bargain(lc: LiftedCost, box: BoxConstraint, margin: float = 1.0, offset: float = 0.0) -> BargainState:
    """Zero plan; ``beta`` sits ``margin`` above the game cost of that plan.

    ``offset`` is the non-quadratic part of the game cost at the zero plan
    (tracking and speed penalty); it is 0 for a pure local-cost game.
    """
    plan = np.zeros(len(box.lower))
    psi0 = local_cost(lc, plan)
    return BargainState(beta=psi0 + offset + margin, zeta=utopia_point(lc, box.lower, box.upper),
                        cooperated=True, plan=plan, psi_last=psi0, kappa_last=psi0 + offset)


def game_cost(r: int, contexts: Sequence[AgentContext], views: Mapping[int, AgentView],
              coupling: Coupling, ref: ReferenceProfile, k: int) -> GlobalCost:
    ctx = contexts[r]
    lc = lift_local_cost(ctx.weights, ctx.po, views[r].x)
    src = coupling.source[r]
    if src is None:
        target0, target_u = ref.horizon(k, ctx.po.horizon.Np), None
    else:
        po_s = contexts[src].po
        target0, target_u = po_s.Y_x @ views[src].x, po_s.Y_u
    return GlobalCost.build(lc, ctx.po, views[r].x, target0, target_u,
                            lambda_v=ctx.weights.lambda_v, rho_speed=ctx.weights.rho_speed)


def _own_term(gc: GlobalCost, u_src) -> CostTerm:
    return CostTerm(value=lambda u, smooth=False: gc.value(u, u_src, smooth=smooth),
                    grad=lambda u: gc.grad_own(u, u_src),
                    hess=lambda u: gc.hessian_blocks(u, u_src)[0])


def _source_term(gc: GlobalCost, u_own) -> CostTerm:
    return CostTerm(value=lambda u, smooth=False: gc.value(u_own, u, smooth=smooth),
                    grad=lambda u: gc.grad_src(u_own, u),
                    hess=lambda u: gc.hessian_blocks(u_own, u)[2])


def _no_agreement_plan(i, contexts, views, coupling, ref, k, fallback: str) -> np.ndarray:
    if fallback == "hold":
        return contexts[i].box.project(views[i].plan)
    from .baselines import decentralized_mpc_step  # late import: baselines builds on this module

    return decentralized_mpc_step(i, contexts, views, coupling, ref, k)


def distributed_step(i: int, contexts: Sequence[AgentContext], views: Mapping[int, AgentView],
                     coupling: Coupling, ref: ReferenceProfile, k: int,
                     fallback: str = "best-response") -> StepResult:
    """One agent's bargaining solve with every other plan frozen at ``views``.

    Without a feasible agreement the agent does not cooperate and plays
    ``fallback``: its own best response (minimum of its game cost) or, with
    ``"hold"``, the previously agreed plan.
    """
    src = coupling.source[i]
    u_src = None if src is None else views[src].plan
    own = game_cost(i, contexts, views, coupling, ref, k)
    terms = [_own_term(own, u_src)]
    betas = [views[i].beta]
    for r in coupling.constraint_set(i)[1:]:
        gc_r = game_cost(r, contexts, views, coupling, ref, k)
        terms.append(_source_term(gc_r, views[r].plan))
        betas.append(views[r].beta)
    box = contexts[i].box
    previous = box.project(views[i].plan)
    start = find_feasible(betas, terms, box, init=previous)
    if start is None:
        plan, cooperated = _no_agreement_plan(i, contexts, views, coupling, ref, k, fallback), False
    else:
        report = maximize_nash_product(betas, terms, np.ones(len(terms)), box, start)
        plan, cooperated = report.plan, True
    return StepResult(plan=plan, cooperated=cooperated, kappa=own.value(plan, u_src),
                      psi=local_cost(own.lc, plan))


def snapshot(states: Sequence[BargainState], xs: Sequence[np.ndarray]) -> dict[int, AgentView]:
    """Views at step k built from the plans agreed at step k-1."""
    return {i: AgentView(x=np.asarray(xs[i], dtype=float), beta=s.beta, plan=shift_plan(s.plan, 1))
            for i, s in enumerate(states)}


def commit(state: BargainState, result: StepResult, mu: float) -> BargainState:
    beta = update_disagreement(state.beta, result.kappa, mu)
    return replace(state, beta=beta, cooperated=result.cooperated, plan=result.plan,
                   psi_last=result.psi, kappa_last=result.kappa)


def outcome_of(states: Sequence[BargainState], betas_used: Sequence[float]) -> GameOutcome:
    xi = tuple(s.kappa_last if s.cooperated else b for s, b in zip(states, betas_used))
    return GameOutcome(xi=xi, cooperation_mask=tuple(s.cooperated for s in states))


def sync_error(ys: Sequence[float], edges, leader: int | None = None, v_ref: float | None = None) -> float:
    e = 0.0
    for a, b in edges:
        e = max(e, abs(ys[a] - ys[b]))
    if leader is not None and v_ref is not None:
        e = max(e, abs(ys[leader] - v_ref))
    return e


def bargaining_round(contexts: Sequence[AgentContext], states: Sequence[BargainState], xs,
                     coupling: Coupling, config: GameConfig, ref: ReferenceProfile, k: int,
                     ys: Sequence[float] | None = None, edges=None):
    """One Jacobi round: snapshot, simultaneous solves, then commit.

    When ``ys`` and ``edges`` are given and the platoon is already inside
    ``delta_sync``, the round is skipped and ``states`` are returned as is.
    Returns ``(plans, new_states, outcome, results)``.
    """
    if ys is not None and edges is not None:
        if sync_error(ys, edges, coupling.leader, ref.v_ref(k)) < config.delta_sync:
            plans = [shift_plan(s.plan, 1) for s in states]
            return plans, list(states), outcome_of(states, [s.beta for s in states]), None
    views = snapshot(states, xs)
    results = [distributed_step(i, contexts, views, coupling, ref, k, config.fallback) for i in range(len(states))]
    new_states = [commit(s, r, config.mu) for s, r in zip(states, results)]
    return [r.plan for r in results], new_states, outcome_of(new_states, [s.beta for s in states]), results


def centralized_bargain_step(contexts: Sequence[AgentContext], views: Mapping[int, AgentView],
                             coupling: Coupling, ref: ReferenceProfile, k: int,
                             weights: Sequence[float] | None = None):
    """Joint weighted-log maximization over the stacked plan of all agents.

    Returns ``(plans, cooperated)``; on infeasibility the plans minimize the
    summed game cost instead and ``cooperated`` is False.
    """
    n = len(contexts)
    sizes = [ctx.po.horizon.Nu for ctx in contexts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    sl = [slice(offsets[i], offsets[i + 1]) for i in range(n)]
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    terms, betas = [], []
    for r in range(n):
        gc = game_cost(r, contexts, views, coupling, ref, k)
        s = coupling.source[r]

        def value(u, smooth=False, gc=gc, r=r, s=s):
            return gc.value(u[sl[r]], None if s is None else u[sl[s]], smooth=smooth)

        def grad(u, gc=gc, r=r, s=s):
            g = np.zeros_like(u)
            u_src = None if s is None else u[sl[s]]
            g[sl[r]] += gc.grad_own(u[sl[r]], u_src)
            if s is not None:
                g[sl[s]] += gc.grad_src(u[sl[r]], u_src)
            return g

        def hess(u, gc=gc, r=r, s=s):
            m = np.zeros((len(u), len(u)))
            u_src = None if s is None else u[sl[s]]
            h_oo, h_os, h_ss = gc.hessian_blocks(u[sl[r]], u_src)
            m[sl[r], sl[r]] += h_oo
            if s is not None:
                m[sl[r], sl[s]] += h_os
                m[sl[s], sl[r]] += h_os.T
                m[sl[s], sl[s]] += h_ss
            return m

        terms.append(CostTerm(value=value, grad=grad, hess=hess))
        betas.append(views[r].beta)
    box = contexts[0].box.stack([c.box for c in contexts[1:]])
    previous = np.concatenate([views[i].plan for i in range(n)])
    start = find_feasible(betas, terms, box, init=previous)
    if start is None:
        from .baselines import centralized_mpc_step

        return centralized_mpc_step(contexts, views, coupling, ref, k), False
    report = maximize_nash_product(betas, terms, weights, box, start)
    return [report.plan[sl[i]] for i in range(n)], True
