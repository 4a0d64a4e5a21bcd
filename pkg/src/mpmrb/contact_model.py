"""Lagged convex contact model in the contact frame.

Per contact, with v_c = (v_t1, v_t2, v_n) the relative velocity in the
contact frame (z = normal, positive separating):

* normal: gamma_n = max(0, -K (v_n - vhat)) with gain K = dt (dt + tau_d) k
  and stabilization target vhat = -phi / (dt + tau_d); potential
  l_n = gamma_n^2 / (2K), a one-sided quadratic that is active whenever the
  contact approaches faster than the target.
* friction: l_t = mu gamma_lag huber_eps(||v_t||), quadratic inside the
  stiction threshold eps_v and linear outside, so the impulse magnitude never
  exceeds mu gamma_lag (the lagged Coulomb cone).

gamma_lag is refreshed once per substep from substep-start velocities, which
decouples friction from the simultaneous normal solve and keeps the per-solve
problem strongly convex.  The contact impulse is gamma = -dl_c/dv_c.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 1e5       # contact spring k [N/m]
    tau_d: float = 1e-3          # dissipation time scale [s]; default = coupling dt
    eps_v: float = 1e-4          # stiction velocity threshold [m/s]
    margin: float | None = None  # detection margin [m]; None = one grid spacing

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("contact stiffness must be positive")
        if self.tau_d < 0:
            raise ValueError("tau_d must be non-negative")
        if not self.eps_v > 0:
            raise ValueError("eps_v must be positive")


def impulse_gain(params: ContactParams, dt: float) -> float:
    return dt * (dt + params.tau_d) * params.stiffness


def stabilization_velocity(phi: np.ndarray, params: ContactParams, dt: float) -> np.ndarray:
    return -np.asarray(phi) / (dt + params.tau_d)


def normal_impulse(v_n: np.ndarray, phi: np.ndarray, params: ContactParams,
                   dt: float) -> np.ndarray:
    """gamma_n = max(0, -K (v_n - vhat)); zero once separating fast enough."""
    k_gain = impulse_gain(params, dt)
    vhat = stabilization_velocity(phi, params, dt)
    return k_gain * np.maximum(0.0, vhat - np.asarray(v_n))


def _tangential_speed(v_c: np.ndarray) -> np.ndarray:
    return np.sqrt(v_c[:, 0] * v_c[:, 0] + v_c[:, 1] * v_c[:, 1])


def contact_energy(v_c: np.ndarray, phi: np.ndarray, gamma_lag: np.ndarray,
                   mu: np.ndarray, params: ContactParams, dt: float) -> np.ndarray:
    """Per-contact potential l_c(v_c); sum over contacts joins the objective."""
    k_gain = impulse_gain(params, dt)
    vhat = stabilization_velocity(phi, params, dt)
    gap = np.maximum(0.0, vhat - v_c[:, 2])
    l_n = 0.5 * k_gain * gap * gap
    s = _tangential_speed(v_c)
    eps = params.eps_v
    huber = np.where(s <= eps, s * s / (2.0 * eps), s - 0.5 * eps)
    return l_n + mu * gamma_lag * huber


def contact_gradient(v_c: np.ndarray, phi: np.ndarray, gamma_lag: np.ndarray,
                     mu: np.ndarray, params: ContactParams, dt: float) -> np.ndarray:
    """dl_c/dv_c per contact, (n, 3) in the contact frame."""
    n = v_c.shape[0]
    g = np.empty((n, 3))
    g[:, 2] = -normal_impulse(v_c[:, 2], phi, params, dt)
    s = _tangential_speed(v_c)
    # coef/max(s, eps) is coef/eps inside the stiction ball, coef/s outside
    scale = mu * gamma_lag / np.maximum(s, params.eps_v)
    g[:, 0] = scale * v_c[:, 0]
    g[:, 1] = scale * v_c[:, 1]
    return g


def contact_hessian(v_c: np.ndarray, phi: np.ndarray, gamma_lag: np.ndarray,
                    mu: np.ndarray, params: ContactParams, dt: float) -> np.ndarray:
    """d2l_c/dv_c2 per contact, (n, 3, 3) PSD blocks in the contact frame.

    The normal branch takes the active side at the boundary v_n = vhat.
    """
    n = v_c.shape[0]
    big_g = np.zeros((n, 3, 3))
    vhat = stabilization_velocity(phi, params, dt)
    active = v_c[:, 2] <= vhat
    big_g[:, 2, 2] = np.where(active, impulse_gain(params, dt), 0.0)

    s = _tangential_speed(v_c)
    eps = params.eps_v
    a = mu * gamma_lag / np.maximum(s, eps)
    # sliding: (coef/s)(I - t t^T) = a I - b v_t v_t^T with b = a/s^2
    b = np.where(s > eps, a / np.maximum(s * s, eps * eps), 0.0)
    big_g[:, 0, 0] = a - b * v_c[:, 0] * v_c[:, 0]
    big_g[:, 1, 1] = a - b * v_c[:, 1] * v_c[:, 1]
    off = -b * v_c[:, 0] * v_c[:, 1]
    big_g[:, 0, 1] = off
    big_g[:, 1, 0] = off
    return big_g


def contact_grad_hess(v_c: np.ndarray, phi: np.ndarray, gamma_lag: np.ndarray,
                      mu: np.ndarray, params: ContactParams,
                      dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(gradient, Hessian) in one pass, sharing the friction intermediates."""
    n = v_c.shape[0]
    g = np.empty((n, 3))
    big_g = np.zeros((n, 3, 3))
    k_gain = impulse_gain(params, dt)
    vhat = stabilization_velocity(phi, params, dt)
    gap = vhat - v_c[:, 2]
    active = gap >= 0.0
    g[:, 2] = -k_gain * np.maximum(0.0, gap)
    big_g[:, 2, 2] = np.where(active, k_gain, 0.0)
    s = _tangential_speed(v_c)
    eps = params.eps_v
    a = mu * gamma_lag / np.maximum(s, eps)
    g[:, 0] = a * v_c[:, 0]
    g[:, 1] = a * v_c[:, 1]
    b = np.where(s > eps, a / np.maximum(s * s, eps * eps), 0.0)
    big_g[:, 0, 0] = a - b * v_c[:, 0] * v_c[:, 0]
    big_g[:, 1, 1] = a - b * v_c[:, 1] * v_c[:, 1]
    off = -b * v_c[:, 0] * v_c[:, 1]
    big_g[:, 0, 1] = off
    big_g[:, 1, 0] = off
    return g, big_g


def contact_impulses(v_c: np.ndarray, phi: np.ndarray, gamma_lag: np.ndarray,
                     mu: np.ndarray, params: ContactParams, dt: float) -> np.ndarray:
    """Contact-frame impulses gamma = -dl_c/dv_c."""
    return -contact_gradient(v_c, phi, gamma_lag, mu, params, dt)
