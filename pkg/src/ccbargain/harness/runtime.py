"""Per-agent round logic shared by the in-process loop and TCP agent processes."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..bargaining import (AgentContext, AgentView, Coupling, distributed_step, game_cost, init_bargain,
                          update_disagreement)
from ..baselines import centralized_mpc_step, decentralized_mpc_step
from ..costs import local_cost
from ..dynamics import discretize, make_continuous_model, output, step
from ..network.wire import COMMIT, PLAN, STATE, RoundMessage
from ..prediction import build_prediction, shift_plan
from ..solver import BoxConstraint
from .scenario import ScenarioConfig


def build_contexts(cfg: ScenarioConfig) -> list[AgentContext]:
    contexts = []
    for i, a in enumerate(cfg.agents):
        dm = discretize(make_continuous_model(a.params, C=a.C, d=a.d), cfg.T, cfg.discretization)
        contexts.append(AgentContext(
            id=i, params=a.params, model=dm, po=build_prediction(dm, cfg.horizon),
            weights=a.weights(cfg.horizon.Nu), box=BoxConstraint.symmetric(cfg.horizon.Nu, a.u_max)))
    return contexts


def initial_views(cfg: ScenarioConfig, beta=None) -> dict[int, AgentView]:
    nu = cfg.horizon.Nu
    return {i: AgentView(x=np.array(a.x0, dtype=float), beta=math.nan if beta is None else beta[i],
                         plan=np.zeros(nu)) for i, a in enumerate(cfg.agents)}


class AgentRuntime:
    """Owns one vehicle: its state, last plan and disagreement value."""

    def __init__(self, cfg: ScenarioConfig, agent_id: int, contexts=None, coupling: Coupling | None = None,
                 joint_cache: dict | None = None):
        self.cfg = cfg
        self.agent_id = agent_id
        self.contexts = contexts if contexts is not None else build_contexts(cfg)
        self.coupling = coupling if coupling is not None else cfg.topology.coupling()
        self.joint_cache = joint_cache if joint_cache is not None and cfg.delay_rounds == 0 else None
        ctx = self.contexts[agent_id]
        self.x = np.array(cfg.agents[agent_id].x0, dtype=float)
        views0 = initial_views(cfg)
        gc0 = game_cost(agent_id, self.contexts, views0, self.coupling, cfg.ref, 0)
        zero = np.zeros(cfg.horizon.Nu)
        src = self.coupling.source[agent_id]
        kappa0 = gc0.value(zero, None if src is None else zero)
        self.bargain = init_bargain(gc0.lc, ctx.box, cfg.game.beta_init_margin,
                                    offset=kappa0 - local_cost(gc0.lc, zero))
        self.plan = self.bargain.plan

    def outbox(self, k: int) -> list[RoundMessage]:
        i = self.agent_id
        return [RoundMessage(STATE, i, k, (float(self.x[0]), float(self.x[1]), float(self.bargain.beta))),
                RoundMessage(PLAN, i, k, tuple(float(u) for u in self.plan))]

    def _views(self, k: int, inbox) -> dict[int, AgentView]:
        i = self.agent_id
        views = {i: AgentView(x=self.x.copy(), beta=self.bargain.beta, plan=shift_plan(self.plan, 1))}
        states = {m.agent_id: m for m in inbox if m.kind == STATE}
        plans = {m.agent_id: m for m in inbox if m.kind == PLAN}
        for j, sm in states.items():
            lag = k - sm.k
            plan = shift_plan(np.array(plans[j].payload), 1)
            x = np.array(sm.payload[:2])
            # a delayed view is rolled forward along the sender's own plan
            for t in range(lag):
                x = step(self.contexts[j].model, x, plan[min(t, len(plan) - 1)])
            views[j] = AgentView(x=x, beta=sm.payload[2], plan=shift_plan(plan, lag))
        return views

    def _joint(self, k: int, views):
        if self.joint_cache is not None and k in self.joint_cache:
            return self.joint_cache[k]
        plans = centralized_mpc_step(self.contexts, views, self.coupling, self.cfg.ref, k)
        if self.joint_cache is not None:
            self.joint_cache.clear()
            self.joint_cache[k] = plans
        return plans

    def step(self, k: int, inbox) -> RoundMessage:
        i, cfg = self.agent_id, self.cfg
        views = self._views(k, inbox)
        mode = cfg.mode
        beta_used = self.bargain.beta
        if mode == "bargaining":
            res = distributed_step(i, self.contexts, views, self.coupling, cfg.ref, k, cfg.game.fallback)
            plan, coop, kappa, psi = res.plan, res.cooperated, res.kappa, res.psi
            self.bargain = replace(self.bargain, beta=update_disagreement(self.bargain.beta, kappa, cfg.game.mu),
                                   cooperated=coop, plan=plan, psi_last=psi, kappa_last=kappa)
        else:
            if mode == "centralized":
                plan = self._joint(k, views)[i]
            else:
                plan = decentralized_mpc_step(i, self.contexts, views, self.coupling, cfg.ref, k)
            gc = game_cost(i, self.contexts, views, self.coupling, cfg.ref, k)
            src = self.coupling.source[i]
            kappa = gc.value(plan, None if src is None else views[src].plan)
            psi = local_cost(gc.lc, plan)
            coop, beta_used = False, math.nan
        plan = np.asarray(plan, dtype=float)
        u = float(plan[0])
        dm = self.contexts[i].model
        y = output(dm, self.x, u)
        row = (float(self.x[0]), float(self.x[1]), y, u, float(psi), float(kappa), float(beta_used),
               1.0 if coop else 0.0)
        self.x = step(dm, self.x, u, k=k)
        self.plan = plan
        return RoundMessage(COMMIT, i, k, row)
