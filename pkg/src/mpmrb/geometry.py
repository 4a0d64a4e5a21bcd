"""Collision geometry: signed distance queries in the shape's local frame.

Each query returns (phi, normal, witness): signed distance (negative inside),
outward unit normal, and the closest surface point.  Conventions are
deterministic, including tie-breaking (box interior nearest-face rule breaks
ties in x, y, z axis order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HalfSpace:
    """Solid half-space phi <= 0 below the plane n . p = offset."""

    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    offset: float = 0.0

    def __post_init__(self):
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("half-space normal must be unit length")

    def query(self, p: np.ndarray):
        n = np.asarray(self.normal)
        phi = p @ n - self.offset
        normal = np.broadcast_to(n, p.shape).copy()
        witness = p - phi[:, None] * normal
        return phi, normal, witness

    @property
    def volume(self) -> float:
        raise ValueError("half-spaces have no finite volume (kinematic only)")


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def query(self, p: np.ndarray):
        d = np.linalg.norm(p, axis=1)
        safe = np.maximum(d, 1e-30)
        normal = p / safe[:, None]
        degenerate = d < 1e-15
        if degenerate.any():
            normal[degenerate] = (0.0, 0.0, 1.0)
        phi = d - self.radius
        witness = self.radius * normal
        return phi, normal, witness

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.radius**3

    def unit_inertia(self) -> np.ndarray:
        return np.eye(3) * (2.0 / 5.0 * self.radius**2)


@dataclass(frozen=True)
class Box:
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        if not all(e > 0 for e in self.half_extents):
            raise ValueError("box half_extents must be positive")

    def query(self, p: np.ndarray):
        he = np.asarray(self.half_extents)
        q = np.abs(p) - he
        outside = (q > 0.0).any(axis=1)
        phi = np.empty(p.shape[0])
        normal = np.zeros_like(p)
        witness = np.clip(p, -he, he)

        if outside.any():
            qo = np.maximum(q[outside], 0.0)
            d = np.linalg.norm(qo, axis=1)
            phi[outside] = d
            normal[outside] = (p[outside] - witness[outside]) / d[:, None]

        inside = ~outside
        if inside.any():
            qi = q[inside]
            # nearest face; argmax breaks ties in x, y, z order
            ax = np.argmax(qi, axis=1)
            rows = np.arange(qi.shape[0])
            phi[inside] = qi[rows, ax]
            sgn = np.where(p[inside][rows, ax] >= 0.0, 1.0, -1.0)
            nrm = np.zeros_like(qi)
            nrm[rows, ax] = sgn
            normal[inside] = nrm
            w = p[inside].copy()
            w[rows, ax] = sgn * he[ax]
            witness[inside] = w
        return phi, normal, witness

    @property
    def volume(self) -> float:
        a, b, c = self.half_extents
        return 8.0 * a * b * c

    def unit_inertia(self) -> np.ndarray:
        a, b, c = (2.0 * np.asarray(self.half_extents)) ** 2
        return np.diag([(b + c) / 12.0, (a + c) / 12.0, (a + b) / 12.0])


@dataclass(frozen=True)
class Capsule:
    """Capsule along the local z axis."""

    radius: float
    half_length: float

    def __post_init__(self):
        if not (self.radius > 0 and self.half_length > 0):
            raise ValueError("capsule radius and half_length must be positive")

    def query(self, p: np.ndarray):
        t = np.clip(p[:, 2], -self.half_length, self.half_length)
        core = np.zeros_like(p)
        core[:, 2] = t
        rel = p - core
        d = np.linalg.norm(rel, axis=1)
        safe = np.maximum(d, 1e-30)
        normal = rel / safe[:, None]
        degenerate = d < 1e-15
        if degenerate.any():
            normal[degenerate] = (1.0, 0.0, 0.0)
        phi = d - self.radius
        witness = core + self.radius * normal
        return phi, normal, witness

    @property
    def volume(self) -> float:
        return np.pi * self.radius**2 * (2.0 * self.half_length) + 4.0 / 3.0 * np.pi * self.radius**3

    def unit_inertia(self) -> np.ndarray:
        # cylinder plus two hemispherical caps, unit total mass
        r, hl = self.radius, self.half_length
        l = 2.0 * hl
        v_cyl = np.pi * r * r * l
        v_sph = 4.0 / 3.0 * np.pi * r**3
        m_cyl = v_cyl / (v_cyl + v_sph)
        m_sph = v_sph / (v_cyl + v_sph)
        izz = 0.5 * m_cyl * r * r + m_sph * (2.0 / 5.0) * r * r
        ixx = (m_cyl * (l * l / 12.0 + r * r / 4.0)
               + m_sph * (2.0 / 5.0 * r * r + hl * hl + 3.0 / 8.0 * r * l))
        return np.diag([ixx, ixx, izz])


Shape = HalfSpace | Sphere | Box | Capsule


def query_signed_distance(shape: Shape, points: np.ndarray):
    """phi, outward normal, closest surface point for (n, 3) local points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if points.size and not np.isfinite(points).all():
        raise ValueError("query points must be finite")
    return shape.query(points)


def tangent_basis(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal tangents: seed with the world axis least
    aligned with the normal (first index on ties), Gram-Schmidt, then
    t2 = n x t1 so rows [t1; t2; n] form a proper rotation."""
    n = np.asarray(normals, dtype=float)
    seed_axis = np.argmin(np.abs(n), axis=1)
    e = np.zeros_like(n)
    e[np.arange(n.shape[0]), seed_axis] = 1.0
    t1 = e - (np.sum(e * n, axis=1))[:, None] * n
    t1 = t1 / np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n, t1)
    return t1, t2


def contact_frames(normals: np.ndarray) -> np.ndarray:
    """World-to-contact rotations, rows (t1, t2, n); z is the normal."""
    t1, t2 = tangent_basis(normals)
    return np.stack([t1, t2, normals], axis=1)
