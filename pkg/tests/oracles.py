"""Independent reference implementations used to verify the vectorized code.

Everything here is deliberately written as plain Python loops over scalars,
mirroring the mathematical definitions rather than the package's vectorized
paths.
"""

from __future__ import annotations

import numpy as np


def serial_scatter(node_ids: np.ndarray, values: np.ndarray, n_out: int) -> np.ndarray:
    """Double-loop accumulation in row-major contribution order."""
    squeeze = values.ndim == 2
    if squeeze:
        values = values[..., None]
    out = np.zeros((n_out, values.shape[-1]))
    rows, k, n_ch = values.shape
    for r in range(rows):
        for s in range(k):
            i = node_ids[r, s]
            for c in range(n_ch):
                out[i, c] += values[r, s, c]
    return out[:, 0] if squeeze else out


def bspline_weight_1d(dist: float) -> float:
    """Quadratic B-spline value at a node |dist| cells away."""
    a = abs(dist)
    if a < 0.5:
        return 0.75 - a * a
    if a < 1.5:
        return 0.5 * (1.5 - a) ** 2
    return 0.0


def serial_p2g(x, v, f, c, mass, volume0, tau, h, dt, node_coord_to_id):
    """Scalar MLS-MPM P2G: returns dicts node_id -> (mass, mom_apic, mom_force).

    node_coord_to_id maps an (i, j, k) tuple to a linear node id.
    """
    n = x.shape[0]
    d_inv = 4.0 / (h * h)
    out_mass = {}
    out_apic = {}
    out_force = {}
    for p in range(n):
        base = np.floor(x[p] / h - 0.5).astype(int)
        s_p = -dt * d_inv * volume0[p] * tau[p]
        for di in range(3):
            for dj in range(3):
                for dk in range(3):
                    node = (base[0] + di, base[1] + dj, base[2] + dk)
                    npos = np.array(node) * h
                    w = 1.0
                    for ax, o in zip(range(3), (di, dj, dk)):
                        w *= bspline_weight_1d(x[p, ax] / h - (base[ax] + o))
                    dpos = npos - x[p]
                    i = node_coord_to_id[node]
                    out_mass[i] = out_mass.get(i, 0.0) + w * mass[p]
                    mom = w * (mass[p] * v[p] + mass[p] * (c[p] @ dpos))
                    out_apic[i] = out_apic.get(i, np.zeros(3)) + mom
                    out_force[i] = out_force.get(i, np.zeros(3)) + w * (s_p @ dpos)
    return out_mass, out_apic, out_force


def fd_gradient(fun, x: np.ndarray, eps: float) -> np.ndarray:
    """Central finite differences of a scalar function of a flat array."""
    x = x.astype(float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += eps
        xm.flat[i] -= eps
        g.flat[i] = (fun(xp) - fun(xm)) / (2.0 * eps)
    return g


def fd_jacobian(fun, x: np.ndarray, eps: float) -> np.ndarray:
    """Central finite differences of a vector function; returns (m, n)."""
    f0 = np.asarray(fun(x))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += eps
        xm.flat[i] -= eps
        jac[:, i] = (np.asarray(fun(xp)).ravel() - np.asarray(fun(xm)).ravel()) / (2.0 * eps)
    return jac


def mass_norm(v: np.ndarray, m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(m[:, None] * v * v)))
