"""Reference computations that share no code with the package."""

from __future__ import annotations

import itertools

import numpy as np


def rk4_zoh(a1, a2, b, T, h=1e-6):
    """One-sample transition of x' = Ax + bu (u held) by fine-step RK4.

    The input is carried as a constant third state, so the RK4 step is a
    3x3 matrix that is raised to the number of sub-steps.
    """
    M = np.array([[0.0, 1.0, 0.0], [a1, a2, b], [0.0, 0.0, 0.0]])
    hM = h * M
    I = np.eye(3)
    R = I + hM + hM @ hM / 2 + hM @ hM @ hM / 6 + hM @ hM @ hM @ hM / 24
    n = int(round(T / h))
    P = np.linalg.matrix_power(R, n)
    return P[:2, :2], P[:2, 2]


def tustin_by_hand(a1, a2, b, T):
    """Bilinear transform with the 2x2 inverse written out."""
    h = T / 2.0
    # L = I - A h = [[1, -h], [-a1 h, 1 - a2 h]]
    l11, l12, l21, l22 = 1.0, -h, -a1 * h, 1.0 - a2 * h
    det = l11 * l22 - l12 * l21
    inv = np.array([[l22, -l12], [-l21, l11]]) / det
    R = np.array([[1.0, h], [a1 * h, 1.0 + a2 * h]])
    return inv @ R, inv @ np.array([0.0, b * T])


def iterate_outputs(A_k, b_k, C, d, x0, plan, Np, Nu):
    """Predicted states x_1..x_Np and outputs by stepping the model one sample at a time."""
    x = np.asarray(x0, dtype=float)
    states, outputs = [], []
    for j in range(Np):
        u = plan[min(j, Nu - 1)]
        x = A_k @ x + b_k * u
        states.append(x.copy())
        outputs.append(float(np.dot(C, x) + d * plan[min(j + 1, Nu - 1)]))
    return np.array(states), np.array(outputs)


def grid_argmax(f, lo, hi, step):
    """Brute-force argmax of f over a 1-D or 2-D box grid (f may return -inf)."""
    axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
    if len(axes) == 1:
        vals = np.array([f(np.array([u])) for u in axes[0]])
        i = int(np.argmax(vals))
        return np.array([axes[0][i]]), vals[i]
    best, arg = -np.inf, None
    for u in axes[0]:
        for v in axes[1]:
            val = f(np.array([u, v]))
            if val > best:
                best, arg = val, np.array([u, v])
    return arg, best


def box_qp_by_faces(H, f, lo, hi):
    """Minimize 0.5 u'Hu + f'u over a box by checking all 3^n faces."""
    n = len(f)
    best, arg = np.inf, None
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        u = np.zeros(n)
        fixed = np.array([p != 0 for p in pattern])
        for j, p in enumerate(pattern):
            if p < 0:
                u[j] = lo[j]
            elif p > 0:
                u[j] = hi[j]
        free = ~fixed
        if free.any():
            rhs = -(f[free] + H[np.ix_(free, fixed)] @ u[fixed])
            u[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
            if np.any(u[free] < lo[free] - 1e-12) or np.any(u[free] > hi[free] + 1e-12):
                continue
        val = 0.5 * u @ H @ u + f @ u
        if val < best:
            best, arg = val, u
    return arg, best


def quadratic_nash_grid(centers, Hs, betas, lo, hi, step):
    """Argmax of sum log(beta_r - (u - c_r)'H_r(u - c_r)) on a box grid, evaluated in one vectorized pass.

    The grid is clipped to the smallest ball bounding box among the sublevel
    sets, outside of which the objective is -inf anyway.
    """
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    for c, H, b in zip(centers, Hs, betas):
        r = np.sqrt(b / np.linalg.eigvalsh(H).min())
        lo, hi = np.maximum(lo, np.asarray(c) - r), np.minimum(hi, np.asarray(c) + r)
    axes = [np.arange(l, h + step / 2, step) for l, h in zip(lo, hi)]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    total = np.zeros(len(pts))
    for c, H, b in zip(centers, Hs, betas):
        e = pts - np.asarray(c)
        s = b - np.einsum("ni,ij,nj->n", e, np.asarray(H), e)
        with np.errstate(invalid="ignore", divide="ignore"):
            total += np.where(s > 0, np.log(np.where(s > 0, s, 1.0)), -np.inf)
    i = int(np.argmax(total))
    return pts[i], total[i]
