"""Shared scene and contact-problem builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from mpmrb.bodies import GeomAttachment, RigidBody
from mpmrb.collision import contact_velocities, detect_contacts
from mpmrb.contact_model import ContactParams, normal_impulse
from mpmrb.coupling import SimState, StepConfig
from mpmrb.geometry import Box, HalfSpace, Sphere
from mpmrb.grid import SparseGrid
from mpmrb.materials import Material
from mpmrb.mpm import build_stencil, grid_update, particle_to_grid
from mpmrb.particles import ParticleSet
from mpmrb.solver import build_contact_problem
from mpmrb.transfer import build_sort_plan

SOFT = Material(youngs_modulus=1e5, poisson_ratio=0.4, density=1000.0)


def random_particles(rng: np.random.Generator, n: int, lo, hi,
                     v_scale: float = 1.0) -> ParticleSet:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x = rng.uniform(lo, hi, size=(n, 3))
    v = rng.normal(0.0, v_scale, size=(n, 3))
    f = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    f += 0.05 * rng.normal(size=(n, 3, 3))
    c = 0.1 * rng.normal(size=(n, 3, 3))
    vol = np.full(n, (0.5 * 0.05) ** 3)
    return ParticleSet(x=x, v=v, f=f, c=c, mass=1000.0 * vol, volume0=vol)


def random_drop_state(rng: np.random.Generator, dt: float = 1e-4) -> SimState:
    """A small elastic blob landing on a floor, optionally pressed by a moving
    kinematic ball or block.  States visited by this scene are physically
    plausible (shallow penetrations, moderate impulses)."""
    from mpmrb.bodies import Trajectory
    from mpmrb.particles import seed_box
    from mpmrb.rotations import quat_identity
    h = 0.015
    half = float(rng.uniform(0.018, 0.028))
    e = float(rng.uniform(3e4, 3e5))
    mat = Material(youngs_modulus=e, poisson_ratio=float(rng.uniform(0.3, 0.45)),
                   density=1000.0)
    v0 = rng.normal(0.0, 0.15, size=3)
    v0[2] = -abs(v0[2]) - 0.1
    particles = seed_box(np.array([0.0, 0.0, half + 2e-4]), np.array([half] * 3),
                         h, mat, velocity=v0, seed=int(rng.integers(1 << 31)))
    bodies = [RigidBody(
        name="floor", kinematic=True,
        geoms=[GeomAttachment(shape=HalfSpace(normal=(0.0, 0.0, 1.0), offset=0.0),
                              mu=float(rng.uniform(0.3, 1.2)))])]
    if rng.uniform() < 0.7:
        # presser descending onto the blob through the whole warmup window
        start = np.array([rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                          2 * half + 0.03])
        v_press = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                            -rng.uniform(0.15, 0.35)])
        traj = Trajectory(times=np.array([0.0, 1.0]),
                          positions=np.stack([start, start + v_press]),
                          quats=np.stack([quat_identity()] * 2))
        shape = (Sphere(radius=0.03) if rng.uniform() < 0.5
                 else Box(half_extents=(0.025, 0.025, 0.01)))
        bodies.append(RigidBody(
            name="presser", kinematic=True, position=start, trajectory=traj,
            geoms=[GeomAttachment(shape=shape, mu=float(rng.uniform(0.2, 1.0)))]))
    # softer-than-default contact: the block preconditioner's condition number
    # scales with (contact curvature / node mass), and tight-tolerance rate
    # checks presume the well-conditioned regime
    return SimState(particles=particles, materials=[mat], bodies=bodies, h=h,
                    step=StepConfig(dt=dt, substeps=1),
                    contact_params=ContactParams(stiffness=1e4, tau_d=dt, eps_v=1e-3))


def make_random_problem(seed: int, dt: float = 1e-4, mode: str = "deterministic"):
    """A realistic contact problem captured from a briefly evolved scene.

    The scene runs through the actual coupling loop for a random number of
    steps (so some captures are mid-impact, others settled), then the
    substep-start solve is rebuilt exactly as the coupling scheduler would.
    Bounded: <= ~200 contacts, <= 3000 grid DoFs.
    """
    from mpmrb.coupling import advance_step
    rng = np.random.default_rng(seed)
    state = random_drop_state(rng, dt)
    n_warm = int(rng.integers(20, 90))
    for _ in range(n_warm):
        advance_step(state)
    particles = state.particles
    h = state.h
    grid = SparseGrid.allocate(particles.x, h)
    stencil = build_stencil(particles.x, grid)
    plan = build_sort_plan(particles.x, h, epoch=0)
    particle_to_grid(particles, grid, stencil, state.materials, dt, plan, 0, mode=mode)
    grid_update(grid, np.array([0.0, 0.0, -9.81]), dt)
    params = state.contact_params
    contacts = detect_contacts(particles, state.bodies, margin=h)
    v_c_start = contact_velocities(contacts, stencil, grid.v_k)
    contacts.gamma_lag = normal_impulse(v_c_start[:, 2], contacts.phi, params, dt)
    problem, act = build_contact_problem(grid, stencil, contacts, params, dt,
                                         plan, 0, mode=mode)
    return problem, contacts, grid, act


def resting_box_state(h: float = 0.01, half: float = 0.02, dt: float = 4e-4,
                      substeps: int = 4, e: float = 5e4, floor_mu: float = 0.8,
                      drop: float = 0.0, jitter: float = 1.0,
                      seed: int = 0) -> SimState:
    """An elastic box resting on (or dropped onto) a static floor half-space."""
    from mpmrb.particles import seed_box
    mat = Material(youngs_modulus=e, poisson_ratio=0.3, density=1000.0)
    particles = seed_box(np.array([0.0, 0.0, half + drop]), np.array([half] * 3),
                         h, mat, jitter=jitter, seed=seed)
    floor = RigidBody(name="floor", kinematic=True,
                      geoms=[GeomAttachment(shape=HalfSpace(), mu=floor_mu)])
    return SimState(particles=particles, materials=[mat], bodies=[floor], h=h,
                    step=StepConfig(dt=dt, substeps=substeps),
                    contact_params=ContactParams(stiffness=1e5, tau_d=dt, eps_v=1e-4))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
