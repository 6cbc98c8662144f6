"""Horizon-lifted quadratic costs, the tracking (global) cost and the utopia point."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .prediction import PredictionOperator, predict_outputs

SPEED_LIMIT = 32.6  # m/s, comfort bound on the output speed
SMOOTHING_EPS = 1e-4
MAX_UTOPIA_NU = 12


@dataclass(frozen=True, eq=False)
class CostWeights:
    Q_uu: np.ndarray
    Q_xu: np.ndarray
    Q_xx: np.ndarray
    lambda_v: float = 1.0
    rho_speed: float = 10.0

    def __post_init__(self):
        Q_uu = np.atleast_2d(np.asarray(self.Q_uu, dtype=float))
        Q_xx = np.asarray(self.Q_xx, dtype=float)
        Q_xu = np.asarray(self.Q_xu, dtype=float).reshape(2, Q_uu.shape[0])
        object.__setattr__(self, "Q_uu", Q_uu)
        object.__setattr__(self, "Q_xx", Q_xx)
        object.__setattr__(self, "Q_xu", Q_xu)
        if not np.allclose(Q_uu, Q_uu.T) or np.linalg.eigvalsh(Q_uu).min() <= 0:
            raise ValueError("Q_uu must be symmetric positive definite")
        if Q_xx.shape != (2, 2) or not np.allclose(Q_xx, Q_xx.T) or np.linalg.eigvalsh(Q_xx).min() < -1e-12:
            raise ValueError("Q_xx must be a symmetric positive semidefinite 2x2 matrix")
        if self.lambda_v < 0 or self.rho_speed < 0:
            raise ValueError("lambda_v and rho_speed must be non-negative")

    @classmethod
    def default(cls, Nu: int, q_uu: float = 0.1, q_xx=(1.0, 1.0), lambda_v: float = 1.0,
                rho_speed: float = 10.0) -> "CostWeights":
        return cls(Q_uu=q_uu * np.eye(Nu), Q_xu=np.zeros((2, Nu)), Q_xx=np.diag(q_xx),
                   lambda_v=lambda_v, rho_speed=rho_speed)


@dataclass(frozen=True, eq=False)
class LiftedCost:
    """``psi(u) = u' H_bar u + 2 F_bar u + c0``."""

    H_bar: np.ndarray
    F_bar: np.ndarray
    c0: float


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-constant leader speed ``v_ref(k)`` plus the predefined spacing.

    ``table`` holds ``(k_start, speed)`` pairs; speeds are clamped into
    ``[0, SPEED_LIMIT]``.
    """

    table: tuple = ((0, 0.0),)
    d_ref: float = 5.0
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = sorted((int(k), float(v)) for k, v in self.table)
        if not rows:
            rows = [(0, 0.0)]
        starts = np.array([k for k, _ in rows])
        values = np.clip([v for _, v in rows], 0.0, SPEED_LIMIT)
        object.__setattr__(self, "table", tuple(zip(starts.tolist(), values.tolist())))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_values", values)

    @classmethod
    def constant(cls, v: float, d_ref: float = 5.0) -> "ReferenceProfile":
        return cls(table=((0, v),), d_ref=d_ref)

    def v_ref(self, k: int) -> float:
        i = np.searchsorted(self._starts, k, side="right") - 1
        return float(self._values[max(i, 0)])

    def horizon(self, k: int, Np: int) -> np.ndarray:
        """Reference speeds for steps ``k+1 .. k+Np``."""
        ks = np.arange(k + 1, k + Np + 1)
        i = np.maximum(np.searchsorted(self._starts, ks, side="right") - 1, 0)
        return self._values[i].astype(float)


def lift_local_cost(w: CostWeights, po: PredictionOperator, x) -> LiftedCost:
    Nu = po.horizon.Nu
    if w.Q_uu.shape != (Nu, Nu):
        raise ValueError(f"Q_uu is {w.Q_uu.shape}, expected {(Nu, Nu)}")
    x = np.asarray(x, dtype=float)
    H = w.Q_uu.copy()
    F = np.zeros(Nu)
    c0 = 0.0
    free = po.A_bar @ x
    for t in range(po.horizon.Np):
        a_t = free[2 * t:2 * t + 2]
        B_t = po.B_bar[2 * t:2 * t + 2]
        cross = B_t.T @ w.Q_xu
        H += B_t.T @ w.Q_xx @ B_t + cross + cross.T
        F += a_t @ w.Q_xx @ B_t + a_t @ w.Q_xu
        c0 += a_t @ w.Q_xx @ a_t
    H = 0.5 * (H + H.T)
    return LiftedCost(H_bar=H, F_bar=F, c0=float(c0))


def local_cost(lc: LiftedCost, plan) -> float:
    u = np.asarray(plan, dtype=float)
    return float(u @ lc.H_bar @ u + 2.0 * lc.F_bar @ u + lc.c0)


def local_cost_grad(lc: LiftedCost, plan) -> np.ndarray:
    u = np.asarray(plan, dtype=float)
    return 2.0 * (lc.H_bar @ u + lc.F_bar)


def tracking_terms(y, target, lambda_v: float, rho_speed: float, v_max: float = SPEED_LIMIT) -> float:
    excess = np.maximum(np.asarray(y) - v_max, 0.0)
    return float(lambda_v * np.abs(np.asarray(target) - y).sum() + rho_speed * (excess @ excess))


def global_cost(lc_r: LiftedCost, po_r: PredictionOperator, x_r, plan_r, target, lambda_v: float,
                rho_speed: float = 0.0, v_max: float = SPEED_LIMIT) -> float:
    """kappa: l1 speed tracking over the horizon + local quadratic + soft speed-limit penalty.

    ``target`` is the horizon of speeds to track (the leader's reference or
    the source agent's predicted outputs).
    """
    y = predict_outputs(po_r, x_r, plan_r)
    return tracking_terms(y, target, lambda_v, rho_speed, v_max) + local_cost(lc_r, plan_r)


def utopia_point(lc: LiftedCost, lower, upper) -> float:
    """Maximum of the convex quadratic ``psi`` over a box, by vertex enumeration."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(lower)
    if n > MAX_UTOPIA_NU:
        raise ValueError(f"vertex enumeration refused for Nu={n} > {MAX_UTOPIA_NU}")
    best = -np.inf
    for choice in itertools.product((0, 1), repeat=n):
        vertex = np.where(np.array(choice, dtype=bool), upper, lower)
        best = max(best, local_cost(lc, vertex))
    return float(best)


@dataclass(frozen=True, eq=False)
class GlobalCost:
    """kappa_r as an affine-in-plans evaluator.

    Own outputs are ``y0 + Yu @ u_own``; the tracked speeds are
    ``t0 + Tu @ u_src`` (``Tu`` is None when the target is fixed, as for the
    leader). ``smooth=True`` replaces ``|e|`` by ``sqrt(e^2 + eps^2) - eps``,
    which never exceeds ``|e|``, so the smoothed value is a lower bound.
    """

    lc: LiftedCost
    y0: np.ndarray
    Yu: np.ndarray
    t0: np.ndarray
    Tu: np.ndarray | None
    lambda_v: float
    rho_speed: float
    v_max: float = SPEED_LIMIT

    @classmethod
    def build(cls, lc: LiftedCost, po: PredictionOperator, x, target0, target_u=None,
              lambda_v: float = 1.0, rho_speed: float = 10.0) -> "GlobalCost":
        return cls(lc=lc, y0=po.Y_x @ np.asarray(x, dtype=float), Yu=po.Y_u,
                   t0=np.asarray(target0, dtype=float), Tu=target_u,
                   lambda_v=lambda_v, rho_speed=rho_speed)

    def outputs(self, u_own) -> np.ndarray:
        return self.y0 + self.Yu @ u_own

    def target(self, u_src=None) -> np.ndarray:
        if self.Tu is None or u_src is None:
            return self.t0
        return self.t0 + self.Tu @ u_src

    def value(self, u_own, u_src=None, smooth: bool = False) -> float:
        u_own = np.asarray(u_own, dtype=float)
        y = self.outputs(u_own)
        e = self.target(u_src) - y
        absval = np.sqrt(e * e + SMOOTHING_EPS ** 2) - SMOOTHING_EPS if smooth else np.abs(e)
        excess = np.maximum(y - self.v_max, 0.0)
        return float(self.lambda_v * absval.sum() + self.rho_speed * (excess @ excess)
                     + local_cost(self.lc, u_own))

    def _slopes(self, u_own, u_src):
        y = self.outputs(u_own)
        e = self.target(u_src) - y
        s = self.lambda_v * e / np.sqrt(e * e + SMOOTHING_EPS ** 2)
        excess = np.maximum(y - self.v_max, 0.0)
        return s, excess

    def grad_own(self, u_own, u_src=None) -> np.ndarray:
        u_own = np.asarray(u_own, dtype=float)
        s, excess = self._slopes(u_own, u_src)
        return -self.Yu.T @ s + 2.0 * self.rho_speed * (self.Yu.T @ excess) + local_cost_grad(self.lc, u_own)

    def grad_src(self, u_own, u_src) -> np.ndarray:
        if self.Tu is None:
            return np.zeros(0)
        s, _ = self._slopes(np.asarray(u_own, dtype=float), u_src)
        return self.Tu.T @ s

    def _curvature(self, u_own, u_src) -> np.ndarray:
        e = self.target(u_src) - self.outputs(np.asarray(u_own, dtype=float))
        return self.lambda_v * SMOOTHING_EPS ** 2 / (e * e + SMOOTHING_EPS ** 2) ** 1.5

    def hessian_blocks(self, u_own, u_src=None):
        """Second derivatives of the smoothed value: ``(own-own, own-src, src-src)``.

        The source blocks are None when the target is fixed.
        """
        u_own = np.asarray(u_own, dtype=float)
        c = self._curvature(u_own, u_src)
        active = self.outputs(u_own) > self.v_max
        Ya = self.Yu[active]
        h_oo = self.Yu.T @ (c[:, None] * self.Yu) + 2.0 * self.rho_speed * Ya.T @ Ya + 2.0 * self.lc.H_bar
        if self.Tu is None:
            return h_oo, None, None
        return h_oo, -self.Yu.T @ (c[:, None] * self.Tu), self.Tu.T @ (c[:, None] * self.Tu)
