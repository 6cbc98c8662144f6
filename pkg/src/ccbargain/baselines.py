"""Centralized and decentralized MPC comparison controllers.

Both minimize the sum of game costs (no barrier, no disagreement values).
The l1 tracking term is handled by iteratively reweighted quadratic
majorizers of its smoothed form, each majorizer solved as a box QP.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .bargaining import AgentContext, AgentView, Coupling, game_cost
from .costs import SMOOTHING_EPS, GlobalCost, ReferenceProfile
from .solver import BoxConstraint, minimize_box_qp

REWEIGHT_PASSES = 5


def _majorizer(terms, n_vars: int, u: np.ndarray):
    """Quadratic majorizer ``0.5 u'Hu + f'u`` of sum of kappa at ``u``.

    ``terms`` holds ``(gc, own_slice, src_slice_or_None, frozen_src)``.
    """
    H = np.zeros((n_vars, n_vars))
    f = np.zeros(n_vars)
    for gc, own, src, frozen in terms:
        H[own, own] += 2.0 * gc.lc.H_bar
        f[own] += 2.0 * gc.lc.F_bar
        Np = len(gc.y0)
        M = np.zeros((Np, n_vars))
        M[:, own] = -gc.Yu
        c = gc.t0 - gc.y0
        if gc.Tu is not None:
            if src is None:
                c = c + gc.Tu @ frozen
            else:
                M[:, src] += gc.Tu
        e = c + M @ u
        w = np.sqrt(e * e + SMOOTHING_EPS ** 2)
        scale = gc.lambda_v / w
        H += M.T @ (scale[:, None] * M)
        f += M.T @ (scale * c)
        if gc.rho_speed > 0:
            y = gc.y0 + gc.Yu @ u[own]
            active = y > gc.v_max
            if active.any():
                Ya = gc.Yu[active]
                H[own, own] += 2.0 * gc.rho_speed * Ya.T @ Ya
                f[own] += 2.0 * gc.rho_speed * Ya.T @ (gc.y0[active] - gc.v_max)
    return H, f


def _reweighted_solve(terms, box: BoxConstraint, init: np.ndarray) -> np.ndarray:
    u = box.project(init)
    for _ in range(REWEIGHT_PASSES):
        H, f = _majorizer(terms, len(u), u)
        u = minimize_box_qp(H, f, box, init=u).plan
    return u


def centralized_mpc_step(contexts: Sequence[AgentContext], views: Mapping[int, AgentView],
                         coupling: Coupling, ref: ReferenceProfile, k: int) -> list[np.ndarray]:
    """One joint problem over all agents' plans; returns each agent's plan (first move first)."""
    n = len(contexts)
    sizes = [c.po.horizon.Nu for c in contexts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    sl = [slice(int(offsets[i]), int(offsets[i + 1])) for i in range(n)]
    terms = []
    for r in range(n):
        gc = game_cost(r, contexts, views, coupling, ref, k)
        s = coupling.source[r]
        terms.append((gc, sl[r], None if s is None else sl[s], None))
    box = contexts[0].box.stack([c.box for c in contexts[1:]])
    init = np.concatenate([views[i].plan for i in range(n)])
    u = _reweighted_solve(terms, box, init)
    return [u[sl[i]] for i in range(n)]


def decentralized_mpc_step(i: int, contexts: Sequence[AgentContext], views: Mapping[int, AgentView],
                           coupling: Coupling, ref: ReferenceProfile, k: int) -> np.ndarray:
    """Agent ``i`` minimizes its own game cost with its source's plan frozen."""
    gc: GlobalCost = game_cost(i, contexts, views, coupling, ref, k)
    s = coupling.source[i]
    nu = contexts[i].po.horizon.Nu
    frozen = None if s is None else views[s].plan
    terms = [(gc, slice(0, nu), None, frozen)]
    return _reweighted_solve(terms, contexts[i].box, views[i].plan)
