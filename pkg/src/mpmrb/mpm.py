"""MLS-MPM free-motion pipeline on quadratic B-splines.

Per substep: build the 3x3x3 stencil, scatter mass / APIC momentum /
internal-force impulse to the grid (fused MLS-MPM force term, no separate
force scatter), form the free-motion velocity v*, and after the contact solve
gather velocities back, updating APIC affine state and deformation gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import product

import numpy as np

from .grid import MASS_EPS, SparseGrid, base_cells
from .materials import Material, clamp_degenerate, kirchhoff_stress_batch
from .particles import ParticleSet
from .transfer import ScatterStats, SortPlan, scatter_reduce

log = logging.getLogger(__name__)

# canonical stencil slot order: x-major offsets (0,0,0), (0,0,1), ... (2,2,2)
OFFSETS = np.array(list(product(range(3), repeat=3)), dtype=np.int64)


@dataclass
class Stencil:
    """Per-particle interpolation data, valid while positions are unchanged."""

    base: np.ndarray     # (n, 3) stencil corner cells
    weights: np.ndarray  # (n, 27) B-spline weights, rows sum to 1
    nodes: np.ndarray    # (n, 27) linear node ids
    dpos: np.ndarray     # (n, 27, 3) node position minus particle position
    h: float


def build_stencil(positions: np.ndarray, grid: SparseGrid) -> Stencil:
    positions = np.asarray(positions, dtype=float)
    h = grid.h
    base = base_cells(positions, h)
    fx = positions / h - base  # in [0.5, 1.5) per axis
    wax = np.stack([
        0.5 * (1.5 - fx) ** 2,
        0.75 - (fx - 1.0) ** 2,
        0.5 * (fx - 0.5) ** 2,
    ], axis=1)  # (n, 3 offsets, 3 axes)
    w = (wax[:, :, None, None, 0] * wax[:, None, :, None, 1] * wax[:, None, None, :, 2])
    weights = w.reshape(-1, 27)
    nodes = grid.node_ids(base[:, None, :] + OFFSETS[None, :, :])
    dpos = (OFFSETS[None, :, :] - fx[:, None, :]) * h
    return Stencil(base=base, weights=weights, nodes=nodes, dpos=dpos, h=h)


def compute_stresses(particles: ParticleSet, materials: list[Material]) -> np.ndarray:
    """Kirchhoff stress per particle, grouped by material."""
    tau = np.zeros((particles.n, 3, 3))
    for mid in np.unique(particles.material_id):
        mu, lam = materials[int(mid)].lame
        sel = particles.material_id == mid
        tau[sel] = kirchhoff_stress_batch(particles.f[sel], mu, lam)
    return tau


def particle_to_grid(particles: ParticleSet, grid: SparseGrid, stencil: Stencil,
                     materials: list[Material], dt: float, plan: SortPlan, epoch: int,
                     mode: str = "deterministic", workers: int | None = None,
                     stats: ScatterStats | None = None) -> None:
    """Scatter mass, APIC momentum, and the fused internal-force impulse.

    Fills grid.mass, grid.mom_apic (m v + m C (x_i - x_p) summed), and
    grid.mom_force (-dt 4/h^2 V0 tau (x_i - x_p) summed) so both the
    substep-start velocity and the free-motion velocity can be formed.
    """
    n = particles.n
    if n == 0:
        grid.mass[:] = 0.0
        grid.mom_apic[:] = 0.0
        grid.mom_force[:] = 0.0
        return
    tau = compute_stresses(particles, materials)
    w = stencil.weights
    mv = particles.mass[:, None] * particles.v
    mc = particles.mass[:, None, None] * particles.c
    d_inv = 4.0 / (grid.h * grid.h)
    s = (-dt * d_inv) * particles.volume0[:, None, None] * tau

    vals = np.empty((n, 27, 7))
    vals[:, :, 0] = w * particles.mass[:, None]
    vals[:, :, 1:4] = w[:, :, None] * (mv[:, None, :] +
                                       stencil.dpos @ mc.transpose(0, 2, 1))
    vals[:, :, 4:7] = w[:, :, None] * (stencil.dpos @ s.transpose(0, 2, 1))

    out = scatter_reduce(stencil.nodes, vals, grid.n_nodes, plan, epoch,
                         mode=mode, workers=workers, stats=stats)
    grid.mass[:] = out[:, 0]
    grid.mom_apic[:] = out[:, 1:4]
    grid.mom_force[:] = out[:, 4:7]


def grid_update(grid: SparseGrid, gravity: np.ndarray, dt: float) -> None:
    """Form substep-start velocity v_k and free-motion velocity v*.

    Nodes with mass <= MASS_EPS stay inactive with zero velocity and are
    excluded from contact solving.
    """
    gravity = np.asarray(gravity, dtype=float)
    grid.active = grid.mass > MASS_EPS
    inv_m = np.zeros_like(grid.mass)
    np.divide(1.0, grid.mass, out=inv_m, where=grid.active)
    grid.v_k = grid.mom_apic * inv_m[:, None]
    grid.v_star = (grid.mom_apic + grid.mom_force) * inv_m[:, None] + dt * gravity
    grid.v_star[~grid.active] = 0.0
    grid.v_k[~grid.active] = 0.0


def grid_to_particle(particles: ParticleSet, grid: SparseGrid, stencil: Stencil,
                     dt: float) -> int:
    """Gather post-contact velocities; advect and update F (clamped if inverted).

    Returns the number of clamped deformation gradients.
    """
    if particles.n == 0:
        return 0
    vg = grid.v_next[stencil.nodes]  # (n, 27, 3)
    w = stencil.weights
    wvg = w[:, :, None] * vg
    v_new = wvg.sum(axis=1)
    d_inv = 4.0 / (grid.h * grid.h)
    c_new = d_inv * (wvg.transpose(0, 2, 1) @ stencil.dpos)
    particles.v = v_new
    particles.c = c_new
    particles.x = particles.x + dt * v_new
    f_new = (np.eye(3)[None] + dt * c_new) @ particles.f
    f_new, n_clamped = clamp_degenerate(f_new)
    particles.f = f_new
    return n_clamped
