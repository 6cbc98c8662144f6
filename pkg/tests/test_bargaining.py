import math

import numpy as np
import pytest

from ccbargain.bargaining import (AgentView, BargainState, GameConfig, bargaining_round, centralized_bargain_step,
                                  distributed_step, game_cost, init_bargain, outcome_of, sync_error,
                                  update_disagreement)
from ccbargain.baselines import centralized_mpc_step, decentralized_mpc_step
from ccbargain.costs import LiftedCost
from ccbargain.harness.runtime import AgentRuntime, build_contexts
from ccbargain.harness.scenario import load_scenario
from ccbargain.solver import BoxConstraint


@pytest.fixture(scope="module")
def chain():
    cfg = load_scenario("table2.scenario")
    contexts = build_contexts(cfg)
    coupling = cfg.topology.coupling()
    runtimes = [AgentRuntime(cfg, i, contexts, coupling) for i in range(len(contexts))]
    states = [rt.bargain for rt in runtimes]
    xs = [rt.x for rt in runtimes]
    return cfg, contexts, coupling, states, xs


def views_of(states, xs, beta=None):
    return {i: AgentView(x=np.asarray(x, float), beta=s.beta if beta is None else beta, plan=s.plan)
            for i, (s, x) in enumerate(zip(states, xs))}


def test_update_disagreement_examples():
    assert update_disagreement(10.0, 4.0, 0.1) == pytest.approx(9.4)
    assert update_disagreement(3.0, 5.0, 0.1) == 5.0
    assert update_disagreement(7.0, 7.0, 0.1) == 7.0
    assert update_disagreement(10.0, 4.0, 0.0) == 10.0
    assert update_disagreement(10.0, 4.0, 1.0) == 4.0


def test_disagreement_never_below_cost():
    rng = np.random.default_rng(0)
    beta = 5.0
    for _ in range(200):
        kappa = rng.uniform(0, 10)
        beta = update_disagreement(beta, kappa, 0.3)
        assert beta >= kappa


def test_init_bargain():
    lc = LiftedCost(H_bar=np.eye(2), F_bar=np.array([1.0, 0.0]), c0=3.0)
    s = init_bargain(lc, BoxConstraint.symmetric(2, 1.0), margin=0.5, offset=2.0)
    assert s.beta == 5.5 and s.kappa_last == 5.0 and s.psi_last == 3.0
    assert s.zeta == 7.0  # vertex (1, +-1)
    assert s.cooperated and not s.plan.any()


def test_game_config_validation():
    for bad in (dict(mu=1.5), dict(delta_sync=0.0), dict(lambda_i=(0.7, 0.7)), dict(fallback="wait")):
        with pytest.raises(ValueError):
            GameConfig(**bad)
    assert GameConfig(lambda_i=(0.25, 0.75)).lambda_i == (0.25, 0.75)


def test_sync_error_examples():
    edges = [(0, 1), (1, 2)]
    assert sync_error([1.0, 1.5, 2.0], edges) == 0.5
    assert sync_error([1.0, 1.5, 2.0], edges, leader=0, v_ref=2.0) == 1.0
    assert sync_error([3.0, 3.0], [(0, 1)]) == 0.0


def test_outcome_uses_beta_for_non_cooperators():
    a = BargainState(beta=4.0, zeta=9.0, cooperated=True, plan=np.zeros(1), psi_last=1.0, kappa_last=2.0)
    b = BargainState(beta=6.0, zeta=9.0, cooperated=False, plan=np.zeros(1), psi_last=1.0, kappa_last=3.0)
    out = outcome_of([a, b], [4.5, 6.5])
    assert out.xi == (2.0, 6.5)
    assert out.cooperation_mask == (True, False)


def test_constraint_sets_follow_the_tree():
    cfg = load_scenario("table1.scenario")
    c = cfg.topology.coupling()
    assert c.source[0] is None and c.source[1] == 0 and c.source[6] == 4
    assert c.constraint_set(0) == [0, 1, 2]
    assert c.constraint_set(5) == [5]


def test_distributed_step_keeps_every_surplus(chain):
    cfg, contexts, coupling, states, xs = chain
    views = views_of(states, xs)
    for i in range(len(contexts)):
        res = distributed_step(i, contexts, views, coupling, cfg.ref, 0)
        assert res.cooperated
        plans = {r: v.plan for r, v in views.items()}
        plans[i] = res.plan
        for r in coupling.constraint_set(i):
            gc = game_cost(r, contexts, views, coupling, cfg.ref, 0)
            s = coupling.source[r]
            kappa = gc.value(plans[r], None if s is None else plans[s])
            assert views[r].beta - kappa > 0
        assert np.all(np.abs(res.plan) <= contexts[i].box.upper + 1e-12)


def test_fallbacks_without_agreement(chain):
    cfg, contexts, coupling, states, xs = chain
    views = views_of(states, xs, beta=-1.0)  # no plan can push a cost below zero
    held = distributed_step(1, contexts, views, coupling, cfg.ref, 0, fallback="hold")
    assert not held.cooperated
    np.testing.assert_array_equal(held.plan, views[1].plan)
    best = distributed_step(1, contexts, views, coupling, cfg.ref, 0)
    assert not best.cooperated
    np.testing.assert_allclose(best.plan, decentralized_mpc_step(1, contexts, views, coupling, cfg.ref, 0))


def test_round_is_skipped_when_synchronized(chain):
    cfg, contexts, coupling, states, xs = chain
    v = cfg.ref.v_ref(0)
    edges = cfg.topology.edges
    plans, new_states, outcome, results = bargaining_round(contexts, states, xs, coupling, cfg.game, cfg.ref, 0,
                                                           ys=[v] * len(states), edges=edges)
    assert results is None and new_states == list(states)
    assert outcome.cooperation_mask == tuple(s.cooperated for s in states)


def test_round_updates_disagreement(chain):
    cfg, contexts, coupling, states, xs = chain
    _, new_states, outcome, results = bargaining_round(contexts, states, xs, coupling, cfg.game, cfg.ref, 0)
    for old, new, res in zip(states, new_states, results):
        assert new.beta == pytest.approx(update_disagreement(old.beta, res.kappa, cfg.game.mu))
        assert new.beta >= res.kappa
    assert all(outcome.cooperation_mask)
    assert all(math.isfinite(x) for x in outcome.xi)


def test_centralized_bargain(chain):
    cfg, contexts, coupling, states, xs = chain
    views = views_of(states, xs)
    plans, ok = centralized_bargain_step(contexts, views, coupling, cfg.ref, 0)
    assert ok and len(plans) == len(contexts)
    for r, ctx in enumerate(contexts):
        gc = game_cost(r, contexts, views, coupling, cfg.ref, 0)
        s = coupling.source[r]
        assert views[r].beta - gc.value(plans[r], None if s is None else plans[s]) > 0
    stuck = views_of(states, xs, beta=-1.0)
    plans, ok = centralized_bargain_step(contexts, stuck, coupling, cfg.ref, 0)
    assert not ok
    for p, q in zip(plans, centralized_mpc_step(contexts, stuck, coupling, cfg.ref, 0)):
        np.testing.assert_allclose(p, q)
