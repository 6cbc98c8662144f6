import dataclasses

import numpy as np
import pytest

from ccbargain.bargaining import AgentView, Coupling, game_cost
from ccbargain.baselines import centralized_mpc_step, decentralized_mpc_step
from ccbargain.costs import ReferenceProfile
from ccbargain.harness.runtime import build_contexts
from ccbargain.harness.scenario import load_scenario
from ccbargain.network.topology import chain
from ccbargain.prediction import HorizonSpec


@pytest.fixture(scope="module")
def table1():
    cfg = load_scenario("table1.scenario")
    return cfg, build_contexts(cfg), cfg.topology.coupling()


def views_at(cfg, xs):
    nu = cfg.horizon.Nu
    return {i: AgentView(x=np.asarray(x, float), beta=np.nan, plan=np.zeros(nu)) for i, x in enumerate(xs)}


def test_zero_state_on_zero_reference_gives_zero_action(table1):
    cfg, contexts, coupling = table1
    views = views_at(cfg, [[0.0, 0.0]] * len(contexts))
    ref = ReferenceProfile.constant(0.0)
    for i in range(len(contexts)):
        np.testing.assert_allclose(decentralized_mpc_step(i, contexts, views, coupling, ref, 0), 0.0, atol=1e-6)
    for plan in centralized_mpc_step(contexts, views, coupling, ref, 0):
        np.testing.assert_allclose(plan, 0.0, atol=1e-6)


def test_slow_vehicle_is_pushed_toward_reference(table1):
    cfg, contexts, _ = table1
    solo = Coupling(source={4: None}, in_neighbors={4: ()}, leader=4)
    views = {4: AgentView(x=np.array([3.0, 0.6]), beta=np.nan, plan=np.zeros(cfg.horizon.Nu))}
    ctx = {4: contexts[4]}
    ref = ReferenceProfile.constant(1.0)
    gc = game_cost(4, ctx, views, solo, ref, 0)
    # steepest descent from the zero plan accelerates on every move
    assert np.all(-gc.grad_own(np.zeros(cfg.horizon.Nu)) > 0)
    plan = decentralized_mpc_step(4, ctx, views, solo, ref, 0)
    assert plan[-1] > 0
    assert gc.value(plan) < gc.value(np.zeros(cfg.horizon.Nu))


def test_decoupled_agents_match_between_baselines(table1):
    cfg, contexts, _ = table1
    # with no tracking links every agent's problem is independent
    n = len(contexts)
    alone = Coupling(source={i: None for i in range(n)}, in_neighbors={i: () for i in range(n)}, leader=0)
    rng = np.random.default_rng(1)
    views = views_at(cfg, [rng.normal([0, 1.0], [1.0, 0.5]) for _ in range(n)])
    ref = ReferenceProfile.constant(1.0)
    joint = centralized_mpc_step(contexts, views, alone, ref, 0)
    for i in range(n):
        single = decentralized_mpc_step(i, contexts, views, alone, ref, 0)
        np.testing.assert_allclose(joint[i], single, atol=1e-6)


def test_plans_stay_in_the_box(table1):
    cfg, contexts, coupling = table1
    views = views_at(cfg, [[0.0, 30.0]] * len(contexts))
    for i, plan in enumerate(centralized_mpc_step(contexts, views, coupling, ReferenceProfile.constant(0.0), 0)):
        assert np.all(np.abs(plan) <= contexts[i].box.upper + 1e-12)


def test_one_step_tracking_hits_the_reference():
    cfg = load_scenario("table1.scenario")
    a = cfg.agents[0]
    agent = dataclasses.replace(a, q_uu=1e-6, q_xx=(0.0, 0.0))
    one = cfg.replace(agents=(agent,), topology=chain(1), horizon=HorizonSpec(1, 1))
    ctx = build_contexts(one)
    solo = one.topology.coupling()
    views = {0: AgentView(x=np.array([0.0, 1.0]), beta=np.nan, plan=np.zeros(1))}
    ref = ReferenceProfile.constant(1.2)
    u = decentralized_mpc_step(0, ctx, views, solo, ref, 0)
    y = ctx[0].po.Y_x @ views[0].x + ctx[0].po.Y_u @ u
    assert abs(y[0] - 1.2) < 1e-3
    joint = centralized_mpc_step(ctx, views, solo, ref, 0)
    np.testing.assert_allclose(joint[0], u, atol=1e-9)
