"""Particle state (structure of arrays) and volume seeding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .materials import Material, det3


@dataclass
class ParticleSet:
    """Material point state.  All arrays share leading dimension n."""

    x: np.ndarray          # (n, 3) positions
    v: np.ndarray          # (n, 3) velocities
    f: np.ndarray          # (n, 3, 3) deformation gradients
    c: np.ndarray          # (n, 3, 3) APIC affine velocity fields
    mass: np.ndarray       # (n,)
    volume0: np.ndarray    # (n,) rest volumes
    material_id: np.ndarray = field(default=None)  # (n,) index into the material table

    def __post_init__(self):
        n = self.x.shape[0]
        if self.material_id is None:
            self.material_id = np.zeros(n, dtype=np.int64)
        shapes = {
            "x": (self.x, (n, 3)),
            "v": (self.v, (n, 3)),
            "f": (self.f, (n, 3, 3)),
            "c": (self.c, (n, 3, 3)),
            "mass": (self.mass, (n,)),
            "volume0": (self.volume0, (n,)),
            "material_id": (self.material_id, (n,)),
        }
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
        if n and not (self.mass > 0).all():
            raise ValueError("particle masses must be positive")
        if n and not (self.volume0 > 0).all():
            raise ValueError("particle rest volumes must be positive")
        if n and not (det3(self.f) > 0).all():
            raise ValueError("deformation gradients must have positive determinant")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def copy(self) -> "ParticleSet":
        return ParticleSet(
            x=self.x.copy(), v=self.v.copy(), f=self.f.copy(), c=self.c.copy(),
            mass=self.mass.copy(), volume0=self.volume0.copy(),
            material_id=self.material_id.copy(),
        )

    @classmethod
    def empty(cls) -> "ParticleSet":
        return cls(
            x=np.zeros((0, 3)), v=np.zeros((0, 3)), f=np.zeros((0, 3, 3)),
            c=np.zeros((0, 3, 3)), mass=np.zeros(0), volume0=np.zeros(0),
            material_id=np.zeros(0, dtype=np.int64),
        )


def concatenate(sets: list[ParticleSet]) -> ParticleSet:
    if not sets:
        return ParticleSet.empty()
    return ParticleSet(
        x=np.concatenate([s.x for s in sets]),
        v=np.concatenate([s.v for s in sets]),
        f=np.concatenate([s.f for s in sets]),
        c=np.concatenate([s.c for s in sets]),
        mass=np.concatenate([s.mass for s in sets]),
        volume0=np.concatenate([s.volume0 for s in sets]),
        material_id=np.concatenate([s.material_id for s in sets]),
    )


def _lattice_in_cells(lo_cell: np.ndarray, hi_cell: np.ndarray, h: float,
                      per_axis: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """Candidate positions: per_axis^3 points per cell, lattice + jitter."""
    axes = [np.arange(lo_cell[d], hi_cell[d]) for d in range(3)]
    ci, cj, ck = np.meshgrid(*axes, indexing="ij")
    cells = np.stack([ci, cj, ck], axis=-1).reshape(-1, 3).astype(float)
    step = 1.0 / per_axis
    offs = (np.arange(per_axis) + 0.5) * step
    oi, oj, ok = np.meshgrid(offs, offs, offs, indexing="ij")
    offsets = np.stack([oi, oj, ok], axis=-1).reshape(-1, 3)
    pts = (cells[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
    if jitter > 0.0:
        pts = pts + rng.uniform(-0.5 * step * jitter, 0.5 * step * jitter, size=pts.shape)
    return pts * h


def _make_set(pts: np.ndarray, velocity: np.ndarray, material: Material,
              material_id: int, volume_per_particle: float) -> ParticleSet:
    n = pts.shape[0]
    vol = np.full(n, volume_per_particle)
    eye = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    return ParticleSet(
        x=pts.astype(float),
        v=np.broadcast_to(np.asarray(velocity, dtype=float), (n, 3)).copy(),
        f=eye,
        c=np.zeros((n, 3, 3)),
        mass=material.density * vol,
        volume0=vol,
        material_id=np.full(n, material_id, dtype=np.int64),
    )


def seed_box(center: np.ndarray, half_extents: np.ndarray, h: float, material: Material,
             material_id: int = 0, particles_per_cell: int = 8, jitter: float = 1.0,
             velocity=(0.0, 0.0, 0.0), seed: int = 0) -> ParticleSet:
    """Fill an axis-aligned box with a jittered particle lattice.

    particles_per_cell is rounded to the nearest perfect cube (8 -> 2x2x2).
    """
    if particles_per_cell < 1:
        raise ValueError("particles_per_cell must be >= 1")
    center = np.asarray(center, dtype=float)
    half = np.asarray(half_extents, dtype=float)
    if not (half > 0).all():
        raise ValueError("box half_extents must be positive")
    per_axis = max(1, round(particles_per_cell ** (1.0 / 3.0)))
    rng = np.random.default_rng(seed)
    lo = np.floor((center - half) / h).astype(np.int64)
    hi = np.ceil((center + half) / h).astype(np.int64)
    pts = _lattice_in_cells(lo, hi, h, per_axis, jitter, rng)
    inside = np.all(np.abs(pts - center) <= half, axis=1)
    pts = pts[inside]
    if pts.shape[0] == 0:
        raise ValueError("box too small to seed any particles at this grid spacing")
    vol = 8.0 * half.prod() / pts.shape[0]
    return _make_set(pts, velocity, material, material_id, vol)


def seed_sphere(center: np.ndarray, radius: float, h: float, material: Material,
                material_id: int = 0, particles_per_cell: int = 8, jitter: float = 1.0,
                velocity=(0.0, 0.0, 0.0), seed: int = 0) -> ParticleSet:
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    center = np.asarray(center, dtype=float)
    per_axis = max(1, round(particles_per_cell ** (1.0 / 3.0)))
    rng = np.random.default_rng(seed)
    lo = np.floor((center - radius) / h).astype(np.int64)
    hi = np.ceil((center + radius) / h).astype(np.int64)
    pts = _lattice_in_cells(lo, hi, h, per_axis, jitter, rng)
    inside = np.sum((pts - center) ** 2, axis=1) <= radius * radius
    pts = pts[inside]
    if pts.shape[0] == 0:
        raise ValueError("sphere too small to seed any particles at this grid spacing")
    vol = (4.0 / 3.0) * np.pi * radius**3 / pts.shape[0]
    return _make_set(pts, velocity, material, material_id, vol)
