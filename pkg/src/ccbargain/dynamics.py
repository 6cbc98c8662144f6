"""Longitudinal vehicle model and its discretizations.

State is ``x = [d, v]``: spacing coordinate (position minus the predefined
distance, m) and speed (m/s). Input is the commanded acceleration (m/s^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm


class InvalidParameterError(ValueError):
    pass


class DiscretizationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    a1: float
    a2: float
    b: float

    def __post_init__(self):
        for name in ("a1", "a2", "b"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.b == 0:
            raise InvalidParameterError("b must be non-zero")


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    A: np.ndarray
    b_vec: np.ndarray
    C: np.ndarray
    d: float = 0.0


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    A_k: np.ndarray
    b_k: np.ndarray
    C: np.ndarray
    d: float
    T: float
    method: str


@dataclass(frozen=True)
class DisturbanceModel:
    """Matched input uncertainty ``f(x, k)``.

    ``kind`` is one of ``zero``, ``sinusoid`` (bounded, ``amplitude *
    sin(2 pi frequency k T + phase)``) or ``table`` (piecewise constant in
    ``k`` from ``table`` pairs ``(k_start, value)``).
    """

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    table: tuple = field(default_factory=tuple)

    def __call__(self, x: np.ndarray, k: int, T: float = 0.1) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "sinusoid":
            return self.amplitude * math.sin(2.0 * math.pi * self.frequency * k * T + self.phase)
        if self.kind == "table":
            value = 0.0
            for start, val in self.table:
                if k >= start:
                    value = val
            return value
        raise InvalidParameterError(f"unknown disturbance kind {self.kind!r}")


ZERO_DISTURBANCE = DisturbanceModel()


def make_continuous_model(params: VehicleParams, C: Sequence[float] = (0.0, 1.0), d: float = 0.0) -> ContinuousModel:
    if not (math.isfinite(d) and all(math.isfinite(c) for c in C)):
        raise InvalidParameterError("output map must be finite")
    A = np.array([[0.0, 1.0], [params.a1, params.a2]])
    b_vec = np.array([0.0, params.b])
    return ContinuousModel(A=A, b_vec=b_vec, C=np.asarray(C, dtype=float), d=float(d))


def discretize_zoh(model: ContinuousModel, T: float) -> DiscreteModel:
    """Exact zero-order-hold discretization.

    The input vector comes from the exponential of the augmented matrix
    ``[[A, b], [0, 0]]``, which does not require ``A`` to be invertible.
    """
    if not T > 0:
        raise InvalidParameterError("sample time must be positive")
    n = model.A.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = model.A
    M[:n, n] = model.b_vec
    E = expm(M * T)
    A_k, b_k = E[:n, :n], E[:n, n]
    if not (np.all(np.isfinite(A_k)) and np.all(np.isfinite(b_k))):
        raise DiscretizationError("matrix exponential overflowed")
    return DiscreteModel(A_k=A_k, b_k=b_k, C=model.C.copy(), d=model.d, T=float(T), method="zoh")


def discretize_tustin(model: ContinuousModel, T: float) -> DiscreteModel:
    if not T > 0:
        raise InvalidParameterError("sample time must be positive")
    n = model.A.shape[0]
    I = np.eye(n)
    left = I - model.A * (T / 2.0)
    if abs(np.linalg.det(left)) < 1e-14:
        raise DiscretizationError("I - A T/2 is singular")
    A_k = np.linalg.solve(left, I + model.A * (T / 2.0))
    b_k = np.linalg.solve(left, model.b_vec * T)
    return DiscreteModel(A_k=A_k, b_k=b_k, C=model.C.copy(), d=model.d, T=float(T), method="tustin")


def discretize(model: ContinuousModel, T: float, method: str = "zoh") -> DiscreteModel:
    if method == "zoh":
        return discretize_zoh(model, T)
    if method == "tustin":
        return discretize_tustin(model, T)
    raise InvalidParameterError(f"unknown discretization {method!r}")


def step(dm: DiscreteModel, x, u: float, f: DisturbanceModel = ZERO_DISTURBANCE, k: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return dm.A_k @ x + dm.b_k * (u + f(x, k, dm.T))


def output(dm: DiscreteModel, x, u: float) -> float:
    return float(dm.C @ np.asarray(x, dtype=float) + dm.d * u)
