"""Stacked horizon prediction with move blocking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DiscreteModel


@dataclass(frozen=True)
class HorizonSpec:
    Np: int
    Nu: int

    def __post_init__(self):
        if not (1 <= self.Nu <= self.Np):
            raise ValueError(f"need 1 <= Nu <= Np, got Np={self.Np}, Nu={self.Nu}")

    def block(self, j: int) -> int:
        """Index into the compressed plan of the move applied at horizon step j."""
        return min(j, self.Nu - 1)


@dataclass(frozen=True, eq=False)
class PredictionOperator:
    """Maps ``(x0, plan)`` to the predicted states ``x_1..x_Np``.

    ``states = A_bar @ x0 + B_bar @ plan`` stacked as ``[d_1, v_1, d_2, ...]``;
    outputs are ``Cv_bar @ states + D_bar @ plan``.
    """

    A_bar: np.ndarray
    B_bar: np.ndarray
    Cv_bar: np.ndarray
    D_bar: np.ndarray
    horizon: HorizonSpec
    model: DiscreteModel

    @property
    def blocking(self) -> list[int]:
        return [self.horizon.block(j) for j in range(self.horizon.Np)]

    @property
    def Y_x(self) -> np.ndarray:
        """Output response to the initial state (Np x 2)."""
        return self.Cv_bar @ self.A_bar

    @property
    def Y_u(self) -> np.ndarray:
        """Output response to the plan (Np x Nu)."""
        return self.Cv_bar @ self.B_bar + self.D_bar


def expand_plan(plan, h: HorizonSpec) -> np.ndarray:
    plan = np.asarray(plan, dtype=float)
    return plan[[h.block(j) for j in range(h.Np)]]


def shift_plan(plan, n: int = 1) -> np.ndarray:
    """Advance a compressed plan by ``n`` steps, holding the last move."""
    plan = np.asarray(plan, dtype=float)
    if n <= 0:
        return plan.copy()
    idx = np.minimum(np.arange(len(plan)) + n, len(plan) - 1)
    return plan[idx]


def build_prediction(dm: DiscreteModel, h: HorizonSpec) -> PredictionOperator:
    Np, Nu = h.Np, h.Nu
    A_bar = np.zeros((2 * Np, 2))
    B_bar = np.zeros((2 * Np, Nu))
    power = np.eye(2)
    # impulse[t] = A^t b
    impulse = []
    for t in range(Np):
        impulse.append(power @ dm.b_k)
        power = dm.A_k @ power
        A_bar[2 * t:2 * t + 2] = power
    for t in range(Np):
        for s in range(t + 1):
            B_bar[2 * t:2 * t + 2, h.block(s)] += impulse[t - s]
    Cv_bar = np.kron(np.eye(Np), dm.C.reshape(1, 2))
    D_bar = np.zeros((Np, Nu))
    for t in range(Np):
        D_bar[t, h.block(t + 1)] = dm.d
    return PredictionOperator(A_bar=A_bar, B_bar=B_bar, Cv_bar=Cv_bar, D_bar=D_bar, horizon=h, model=dm)


def predict_states(po: PredictionOperator, x0, plan) -> np.ndarray:
    """Predicted states as an (Np, 2) array."""
    flat = po.A_bar @ np.asarray(x0, dtype=float) + po.B_bar @ np.asarray(plan, dtype=float)
    return flat.reshape(-1, 2)


def predict_outputs(po: PredictionOperator, x0, plan) -> np.ndarray:
    plan = np.asarray(plan, dtype=float)
    flat = po.A_bar @ np.asarray(x0, dtype=float) + po.B_bar @ plan
    return po.Cv_bar @ flat + po.D_bar @ plan
