"""Rigid bodies: state, kinematic keyframe trajectories, impulse integration.

Free bodies integrate accumulated contact impulses once per coupling step
(weak coupling).  Rotation is advanced through angular momentum: omega is
derived from L before and after the orientation update, which keeps ||I w||
conserved to roundoff over long torque-free spins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import HalfSpace, Shape
from .rotations import (quat_exp_increment, quat_identity, quat_log_angular_velocity,
                        quat_normalize, quat_slerp, quat_to_matrix)


@dataclass
class GeomAttachment:
    shape: Shape
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=quat_identity)
    mu: float = 0.5  # friction against particles

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.quat = quat_normalize(np.asarray(self.quat, dtype=float))
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")


@dataclass
class Trajectory:
    """Piecewise-linear keyframes; held constant outside the keyframe range.

    Velocities are the per-segment finite differences (right-continuous at
    knots), so a bias velocity sampled at step start stays consistent with the
    pose the body will actually reach.
    """

    times: np.ndarray
    positions: np.ndarray
    quats: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.quats = np.asarray(self.quats, dtype=float)
        k = self.times.shape[0]
        if k == 0:
            raise ValueError("trajectory needs at least one keyframe")
        if self.positions.shape != (k, 3) or self.quats.shape != (k, 4):
            raise ValueError("trajectory keyframe arrays disagree on length")
        if k > 1 and not (np.diff(self.times) > 0).all():
            raise ValueError("trajectory times must be strictly increasing")
        self.quats = np.stack([quat_normalize(q) for q in self.quats])

    def sample(self, t: float):
        """(position, quat, linear velocity, angular velocity) at time t."""
        times = self.times
        if t <= times[0]:
            return self.positions[0].copy(), self.quats[0].copy(), np.zeros(3), np.zeros(3)
        if t >= times[-1]:
            return self.positions[-1].copy(), self.quats[-1].copy(), np.zeros(3), np.zeros(3)
        i = int(np.searchsorted(times, t, side="right") - 1)
        dt_seg = times[i + 1] - times[i]
        s = (t - times[i]) / dt_seg
        pos = self.positions[i] + s * (self.positions[i + 1] - self.positions[i])
        quat = quat_slerp(self.quats[i], self.quats[i + 1], s)
        v = (self.positions[i + 1] - self.positions[i]) / dt_seg
        omega = quat_log_angular_velocity(self.quats[i], self.quats[i + 1], dt_seg)
        return pos, quat, v, omega


@dataclass
class RigidBody:
    name: str
    kinematic: bool
    geoms: list[GeomAttachment]
    mass: float = 0.0                 # free bodies only
    inertia_body: np.ndarray = field(default_factory=lambda: np.eye(3))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quat: np.ndarray = field(default_factory=quat_identity)
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    trajectory: Trajectory | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.quat = quat_normalize(np.asarray(self.quat, dtype=float))
        self.v = np.asarray(self.v, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.inertia_body = np.asarray(self.inertia_body, dtype=float)
        if not self.kinematic:
            if not self.mass > 0:
                raise ValueError(f"free body {self.name!r} needs positive mass")
            if np.linalg.eigvalsh(self.inertia_body).min() <= 0:
                raise ValueError(f"free body {self.name!r} needs positive-definite inertia")
            for g in self.geoms:
                if isinstance(g.shape, HalfSpace):
                    raise ValueError("half-space geometry requires a kinematic body")

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def world_inertia(self) -> np.ndarray:
        r = self.rotation()
        return r @ self.inertia_body @ r.T

    def angular_momentum(self) -> np.ndarray:
        return self.world_inertia() @ self.omega


def integrate_free_body(body: RigidBody, lin_impulse: np.ndarray,
                        ang_impulse: np.ndarray, gravity: np.ndarray, dt: float) -> None:
    """Apply one step's accumulated impulses plus gravity, then advance pose."""
    body.v = body.v + lin_impulse / body.mass + dt * np.asarray(gravity, dtype=float)
    ell = body.angular_momentum() + ang_impulse
    omega_half = np.linalg.solve(body.world_inertia(), ell)
    body.quat = quat_exp_increment(body.quat, omega_half, dt)
    body.omega = np.linalg.solve(body.world_inertia(), ell)
    body.position = body.position + dt * body.v


def advance_kinematic_body(body: RigidBody, t: float) -> None:
    """Snap a kinematic body to its trajectory at time t (exact tracking)."""
    if body.trajectory is None:
        body.v = np.zeros(3)
        body.omega = np.zeros(3)
        return
    pos, quat, v, omega = body.trajectory.sample(t)
    body.position = pos
    body.quat = quat
    body.v = v
    body.omega = omega


def compose_geoms(geoms: list[tuple[Shape, np.ndarray, np.ndarray, float]]):
    """Mass properties of a rigid union of geoms: (mass, com, inertia about com).

    Each entry is (shape, local position, local quat, density).  Uniform
    density per geom; parallel-axis composition.
    """
    masses, coms, inertias = [], [], []
    for shape, pos, quat, rho in geoms:
        m = rho * shape.volume
        r = quat_to_matrix(np.asarray(quat, dtype=float))
        i_g = m * (r @ shape.unit_inertia() @ r.T)
        masses.append(m)
        coms.append(np.asarray(pos, dtype=float))
        inertias.append(i_g)
    m_tot = float(sum(masses))
    com = sum(m * c for m, c in zip(masses, coms)) / m_tot
    i_tot = np.zeros((3, 3))
    for m, c, i_g in zip(masses, coms, inertias):
        d = c - com
        i_tot += i_g + m * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    return m_tot, com, i_tot
