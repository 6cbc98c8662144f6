"""Projected-gradient engines over a box.

* ``find_feasible`` - push every cost below its disagreement value.
* ``maximize_nash_product`` - weighted log-surplus ascent by projected Newton steps.
* ``minimize_box_qp`` - convex box QP (projected gradient + free-face Newton steps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

FEAS_EPS = 1e-6
TOL = 1e-6
MAX_ITER = 2000
DEFAULT_U_MAX = 5.0


class InfeasibleStartError(ValueError):
    """maximize_nash_product was given a start outside the barrier domain."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BoxConstraint:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lower <= upper with matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, n: int, u_max: float = DEFAULT_U_MAX) -> "BoxConstraint":
        return cls(-u_max * np.ones(n), u_max * np.ones(n))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def project(self, u) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def stack(self, others: Sequence["BoxConstraint"]) -> "BoxConstraint":
        return BoxConstraint(np.concatenate([self.lower] + [o.lower for o in others]),
                             np.concatenate([self.upper] + [o.upper for o in others]))


@dataclass(frozen=True, eq=False)
class CostTerm:
    """A convex cost ``kappa(u)`` with ``value(u, smooth=False)`` and ``grad(u)``.

    With ``smooth=True`` the value must be the differentiable lower bound
    that ``grad`` differentiates.
    """

    value: Callable[..., float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray] | None = None

    def hessian(self, u) -> np.ndarray:
        if self.hess is not None:
            return self.hess(u)
        # central differences of the gradient
        n = len(u)
        h = 1e-7 * max(1.0, float(np.linalg.norm(u)))
        cols = []
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            cols.append((self.grad(u + e) - self.grad(u - e)) / (2 * h))
        m = np.array(cols).T
        return 0.5 * (m + m.T)


@dataclass
class SolveReport:
    plan: np.ndarray
    status: str  # converged | max-iter | infeasible
    iterations: int
    objective: float
    kkt_residual: float


def _pg_residual(u, g, box: BoxConstraint, ascent: bool) -> float:
    target = box.project(u + g) if ascent else box.project(u - g)
    return float(np.linalg.norm(target - u))


def _projected_newton(phi, grad, hess, box: BoxConstraint, u, tol: float, max_iter: int,
                      admissible=None, done=None):
    """Minimize a smooth convex ``phi`` over the box.

    Variables held at a bound by the gradient take a plain gradient step, the
    free ones a Newton step, and the step along the projection arc is halved
    until it is ``admissible`` and satisfies Armijo. ``done(u)`` may end the
    search early. Returns ``(u, iterations, residual)``.
    """
    lo, hi = box.lower, box.upper
    f = phi(u)
    g = grad(u)
    residual = _pg_residual(u, g, box, ascent=False)
    it = 0
    while it < max_iter and residual >= tol:
        if done is not None and done(u):
            break
        it += 1
        near = np.minimum(u - lo, hi - u) <= min(1e-8, residual)
        bound = near & ((((u - lo) <= (hi - u)) & (g > 0)) | (((u - lo) > (hi - u)) & (g < 0)))
        free = ~bound
        d = -g
        if free.any():
            Hm = hess(u)[np.ix_(free, free)]
            try:
                d[free] = -np.linalg.solve(Hm + 1e-12 * np.eye(int(free.sum())), g[free])
            except np.linalg.LinAlgError:
                pass
            if float(d[free] @ g[free]) >= 0:
                d[free] = -g[free]
        alpha = 1.0
        accepted = False
        for _ in range(60):
            cand = box.project(u + alpha * d)
            if admissible is None or admissible(cand):
                fc = phi(cand)
                if fc <= f + 1e-4 * float(g @ (cand - u)):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted or np.array_equal(cand, u):
            break  # no representable descent step left
        u, f = cand, fc
        g = grad(u)
        residual = _pg_residual(u, g, box, ascent=False)
    return u, it, residual


# -- feasibility -------------------------------------------------------------

def _is_feasible(u, betas, terms, eps) -> bool:
    return all(b - t.value(u) >= eps for b, t in zip(betas, terms))


def find_feasible(betas, terms: Sequence[CostTerm], box: BoxConstraint, init=None,
                  eps: float = FEAS_EPS, max_iter: int = 200) -> np.ndarray | None:
    """Return a plan with ``beta_r - kappa_r >= eps`` for all r, or None.

    Minimizes the convex penalty ``sum_r max(0, kappa_r - beta_r + m)^2``
    (smoothed costs, margin ``m`` a little above ``eps``) from ``init`` and
    from the box centre, stopping at the first plan passing the exact test.
    A stationary point with positive penalty certifies infeasibility.
    """
    starts = []
    if init is not None:
        starts.append(box.project(np.asarray(init, dtype=float)))
    starts.append(box.center)
    for u in starts:
        if _is_feasible(u, betas, terms, eps):
            return u
    margin = max(100.0 * eps, 1e-4)

    def excess(u):
        return np.array([max(0.0, t.value(u, smooth=True) - b + margin) for b, t in zip(betas, terms)])

    def phi(u):
        v = excess(u)
        return float(v @ v)

    def grad(u):
        v = excess(u)
        return sum((2.0 * vi * t.grad(u) for vi, t in zip(v, terms) if vi > 0), np.zeros_like(u))

    def hess(u):
        v = excess(u)
        out = np.zeros((len(u), len(u)))
        for vi, t in zip(v, terms):
            if vi > 0:
                gi = t.grad(u)
                out += 2.0 * (np.outer(gi, gi) + vi * t.hessian(u))
        return out

    def done(u):
        return _is_feasible(u, betas, terms, eps)

    for u0 in starts:
        u, _, _ = _projected_newton(phi, grad, hess, box, u0.copy(), 1e-12, max_iter, done=done)
        if _is_feasible(u, betas, terms, eps):
            return u
    return None


# -- Nash product ------------------------------------------------------------

def nash_objective(u, betas, terms, weights, smooth: bool = False) -> float:
    total = 0.0
    for b, t, w in zip(betas, terms, weights):
        surplus = b - t.value(u, smooth=smooth)
        if surplus <= 0:
            return -math.inf
        total += w * math.log(surplus)
    return total


def nash_gradient(u, betas, terms, weights) -> np.ndarray:
    g = np.zeros_like(u)
    for b, t, w in zip(betas, terms, weights):
        g -= (w / (b - t.value(u, smooth=True))) * t.grad(u)
    return g


def _in_domain(u, betas, terms) -> bool:
    return all(b - t.value(u) > 0 for b, t in zip(betas, terms))


def _neg_log_hessian(u, betas, terms, weights) -> np.ndarray:
    n = len(u)
    out = np.zeros((n, n))
    for b, t, w in zip(betas, terms, weights):
        s = b - t.value(u, smooth=True)
        g = t.grad(u)
        out += (w / s) * t.hessian(u) + (w / (s * s)) * np.outer(g, g)
    return out


def maximize_nash_product(betas, terms: Sequence[CostTerm], weights, box: BoxConstraint, init,
                          tol: float = TOL, max_iter: int = MAX_ITER) -> SolveReport:
    """Maximize ``sum_r w_r log(beta_r - kappa_r(u))`` over the box.

    Projected Newton on the negated objective; every accepted step keeps the
    exact surpluses positive, so the iterates never leave the barrier domain
    and the objective never drops.
    """
    u = box.project(np.asarray(init, dtype=float))
    weights = np.ones(len(terms)) if weights is None else np.asarray(weights, dtype=float)
    if not _in_domain(u, betas, terms):
        raise InfeasibleStartError("initial plan violates beta_r > kappa_r")
    u, it, residual = _projected_newton(
        lambda v: -nash_objective(v, betas, terms, weights, smooth=True),
        lambda v: -nash_gradient(v, betas, terms, weights),
        lambda v: _neg_log_hessian(v, betas, terms, weights),
        box, u, tol, max_iter, admissible=lambda v: _in_domain(v, betas, terms))
    return SolveReport(plan=u, status="converged" if residual < tol else "max-iter", iterations=it,
                       objective=nash_objective(u, betas, terms, weights), kkt_residual=residual)


# -- box QP ------------------------------------------------------------------

def _qp_value(H, f, u) -> float:
    return float(0.5 * u @ H @ u + f @ u)


def minimize_box_qp(H, f_lin, box: BoxConstraint, init=None, tol: float = TOL,
                    max_iter: int = MAX_ITER) -> SolveReport:
    """Minimize ``0.5 u'Hu + f'u`` over the box.

    Each iteration takes a projected-gradient step with exact line search
    along the projected direction, then a Newton step restricted to the free
    variables (truncated at the first bound it hits).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    f_lin = np.asarray(f_lin, dtype=float)
    H = 0.5 * (H + H.T)
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise ValueError("H must be positive definite") from None
    lo, hi = box.lower, box.upper
    u = box.project(box.center if init is None else np.asarray(init, dtype=float))
    it = 0
    status = "max-iter"
    residual = _pg_residual(u, H @ u + f_lin, box, ascent=False)
    while it < max_iter:
        if residual < tol:
            status = "converged"
            break
        it += 1
        g = H @ u + f_lin
        # projected gradient step
        free_dir = np.where(((u <= lo) & (g > 0)) | ((u >= hi) & (g < 0)), 0.0, g)
        curv = float(free_dir @ H @ free_dir)
        alpha = float(free_dir @ free_dir) / curv if curv > 0 else 1.0
        d = box.project(u - alpha * g) - u
        dHd = float(d @ H @ d)
        t = 1.0 if dHd <= 0 else min(1.0, max(0.0, -float(g @ d) / dHd))
        u = box.project(u + t * d)
        # Newton step on the free face
        g = H @ u + f_lin
        free = (u > lo) & (u < hi)
        if free.any():
            step = np.zeros_like(u)
            step[free] = -np.linalg.solve(H[np.ix_(free, free)], g[free])
            with np.errstate(divide="ignore", invalid="ignore"):
                room = np.where(step > 0, (hi - u) / step, np.where(step < 0, (lo - u) / step, np.inf))
            tmax = min(1.0, float(room.min()))
            cand = box.project(u + tmax * step)
            if _qp_value(H, f_lin, cand) <= _qp_value(H, f_lin, u):
                u = cand
        residual = _pg_residual(u, H @ u + f_lin, box, ascent=False)
    if residual < tol:
        status = "converged"
    return SolveReport(plan=u, status=status, iterations=it, objective=_qp_value(H, f_lin, u),
                       kkt_residual=residual)
