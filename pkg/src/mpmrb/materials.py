"""Elastic constitutive model: fixed corotated hyperelasticity.

Energy density psi(F) = mu * sum_i (sigma_i - 1)^2 + lambda/2 * (J - 1)^2
with sigma_i the singular values of F and J = det(F).  The Kirchhoff stress
tau = dpsi/dF F^T = 2 mu (F - R) F^T + lambda (J - 1) J I feeds the fused
MLS-MPM force term, so only the rotation R from the polar decomposition is
needed in the hot path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# Singular values of F are clamped at this floor when an explicit substep
# momentarily inverts an element (det F <= 0); the run continues.
SIGMA_MIN = 0.05


@dataclass(frozen=True)
class Material:
    """Elastic material parameters (SI units)."""

    youngs_modulus: float
    poisson_ratio: float
    density: float

    def __post_init__(self):
        if not (self.youngs_modulus > 0.0):
            raise ValueError(f"youngs_modulus must be > 0, got {self.youngs_modulus}")
        if not (0.0 <= self.poisson_ratio < 0.5):
            raise ValueError(f"poisson_ratio must be in [0, 0.5), got {self.poisson_ratio}")
        if not (self.density > 0.0):
            raise ValueError(f"density must be > 0, got {self.density}")

    @property
    def lame(self) -> tuple[float, float]:
        """(mu, lambda) from (E, nu)."""
        e, nu = self.youngs_modulus, self.poisson_ratio
        mu = e / (2.0 * (1.0 + nu))
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return mu, lam


def det3(m: np.ndarray) -> np.ndarray:
    """Determinants of a (..., 3, 3) stack without LAPACK overhead."""
    a0 = m[..., :, 0]
    a1 = m[..., :, 1]
    a2 = m[..., :, 2]
    return np.einsum("...i,...i->...", a0, np.cross(a1, a2))


def inverse_transpose3(m: np.ndarray) -> np.ndarray:
    """Batched inverse-transpose of (..., 3, 3) via the adjugate."""
    a0 = m[..., :, 0]
    a1 = m[..., :, 1]
    a2 = m[..., :, 2]
    c0 = np.cross(a1, a2)
    c1 = np.cross(a2, a0)
    c2 = np.cross(a0, a1)
    det = np.einsum("...i,...i->...", a0, c0)
    out = np.stack([c0, c1, c2], axis=-1)
    return out / det[..., None, None]


def polar_rotation(f: np.ndarray, max_iters: int = 30, tol: float = 1e-13) -> np.ndarray:
    """Rotation factor of the polar decomposition of (..., 3, 3) matrices.

    Higham's Newton iteration R <- (R + R^{-T}) / 2; quadratically convergent
    for nonsingular input.  Inputs must have det > 0 (callers clamp first).
    """
    r = np.asarray(f, dtype=float).copy()
    for _ in range(max_iters):
        r_next = 0.5 * (r + inverse_transpose3(r))
        delta = np.max(np.abs(r_next - r))
        r = r_next
        if delta <= tol:
            break
    return r


def clamp_degenerate(f: np.ndarray) -> tuple[np.ndarray, int]:
    """Clamp singular values at SIGMA_MIN wherever det(F) <= 0 or non-finite.

    Returns the repaired stack and the number of repaired matrices.  Uses the
    signed SVD (det-corrected U, V) so the repaired F has det > 0.
    """
    f = np.asarray(f, dtype=float)
    bad = ~(det3(f) > 0.0) | ~np.isfinite(f).all(axis=(-2, -1))
    n_bad = int(np.count_nonzero(bad))
    if n_bad == 0:
        return f, 0
    f = f.copy()
    fb = np.nan_to_num(f[bad], nan=0.0, posinf=0.0, neginf=0.0)
    u, s, vt = np.linalg.svd(fb)
    # flip the last column/value so U, V are proper rotations
    neg_u = np.linalg.det(u) < 0
    u[neg_u, :, 2] *= -1.0
    s[neg_u, 2] *= -1.0
    neg_v = np.linalg.det(vt) < 0
    vt[neg_v, 2, :] *= -1.0
    s[neg_v, 2] *= -1.0
    s = np.maximum(s, SIGMA_MIN)
    f[bad] = u @ (s[..., None] * vt)
    log.warning("clamped %d inverted deformation gradients (singular value floor %.2f)", n_bad, SIGMA_MIN)
    return f, n_bad


def kirchhoff_stress_batch(f: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Kirchhoff stress tau(F) for a (..., 3, 3) stack of one material."""
    r = polar_rotation(f)
    j = det3(f)
    tau = 2.0 * mu * ((f - r) @ np.swapaxes(f, -1, -2))
    iso = lam * (j - 1.0) * j
    tau[..., 0, 0] += iso
    tau[..., 1, 1] += iso
    tau[..., 2, 2] += iso
    return tau


def compute_stress(f: np.ndarray, material: Material) -> np.ndarray:
    """Kirchhoff stress of a single deformation gradient."""
    f = np.asarray(f, dtype=float)
    if f.shape != (3, 3):
        raise ValueError(f"expected a (3, 3) deformation gradient, got {f.shape}")
    if not np.isfinite(f).all():
        raise ValueError("deformation gradient has non-finite entries")
    if not det3(f) > 0.0:
        raise ValueError("deformation gradient must have positive determinant")
    mu, lam = material.lame
    return kirchhoff_stress_batch(f[None], mu, lam)[0]


def energy_density(f: np.ndarray, material: Material) -> float:
    """psi(F); used by verification oracles, not the runtime force path."""
    f = np.asarray(f, dtype=float)
    if not np.isfinite(f).all():
        raise ValueError("deformation gradient has non-finite entries")
    mu, lam = material.lame
    u, s, vt = np.linalg.svd(f)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s = s.copy()
        s[2] *= -1.0
    j = det3(f)
    return float(mu * np.sum((s - 1.0) ** 2) + 0.5 * lam * (j - 1.0) ** 2)
