"""Asynchronous MPM / rigid-body coupling.

One coupling step of size dt advances the MPM state through N substeps of
size dt/N against rigid poses and velocities frozen at the step start; contact
impulses on each body accumulate across the substeps and apply to free bodies
once per step (kinematic bodies follow their trajectories exactly and only
log the wrench).  One sort plan per step services all substep scatters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .bodies import RigidBody, advance_kinematic_body, integrate_free_body
from .collision import BiasCache, contact_velocities, detect_contacts
from .contact_model import ContactParams, normal_impulse
from .grid import SparseGrid
from .materials import Material
from .mpm import build_stencil, grid_to_particle, grid_update, particle_to_grid
from .particles import ParticleSet
from .solver import SolveReport, SolverParams, build_contact_problem, quasi_newton_solve
from .transfer import build_sort_plan, plan_staleness

log = logging.getLogger(__name__)


class SimulationDiverged(RuntimeError):
    """Non-finite state was produced; the previous step is the last good one."""


@dataclass(frozen=True)
class StepConfig:
    dt: float
    substeps: int = 1
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("coupling dt must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


class ImpulseAccumulator:
    """Per-body world-frame impulse totals for the current coupling step."""

    def __init__(self, n_bodies: int):
        self.linear = np.zeros((n_bodies, 3))
        self.angular = np.zeros((n_bodies, 3))

    def reset(self):
        self.linear[:] = 0.0
        self.angular[:] = 0.0

    def add_reactions(self, body_ids: np.ndarray, gamma_world: np.ndarray,
                      arms: np.ndarray):
        """Accumulate -gamma (and its moment) onto bodies, in contact order."""
        n_b = self.linear.shape[0]
        moments = np.cross(arms, gamma_world)
        for c in range(3):
            self.linear[:, c] -= np.bincount(body_ids, weights=gamma_world[:, c],
                                             minlength=n_b)
            self.angular[:, c] -= np.bincount(body_ids, weights=moments[:, c],
                                              minlength=n_b)


@dataclass
class StepSummary:
    step_index: int
    time: float
    n_particles: int
    n_active_nodes: float = 0.0     # mean over substeps
    n_contacts_mean: float = 0.0
    n_contacts_max: int = 0
    iterations_mean: float = 0.0
    iterations_max: int = 0
    all_converged: bool = True
    staleness: float = 0.0          # plan staleness after the last substep
    clamped_gradients: int = 0
    wrench: np.ndarray = None       # (n_bodies, 6) force/torque over this step
    wall_ms: float | None = None


@dataclass
class SimState:
    particles: ParticleSet
    materials: list[Material]
    bodies: list[RigidBody]
    h: float
    step: StepConfig
    contact_params: ContactParams = field(default_factory=ContactParams)
    solver_params: SolverParams = field(default_factory=SolverParams)
    mode: str = "deterministic"
    workers: int | None = None
    time: float = 0.0
    step_index: int = 0
    plan_builds: int = 0
    last_report: SolveReport | None = None

    def __post_init__(self):
        self._bias_cache = BiasCache()
        self._accum = ImpulseAccumulator(len(self.bodies))
        if not self.h > 0:
            raise ValueError("grid spacing h must be positive")

    @property
    def margin(self) -> float:
        m = self.contact_params.margin
        return self.h if m is None else m


def _advance_substep(state: SimState, dt_s: float, plan, epoch: int) -> dict:
    p = state.particles
    grid = SparseGrid.allocate(p.x, state.h)
    stencil = build_stencil(p.x, grid)
    particle_to_grid(p, grid, stencil, state.materials, dt_s, plan, epoch,
                     mode=state.mode, workers=state.workers)
    grid_update(grid, state.step.gravity, dt_s)

    contacts = detect_contacts(p, state.bodies, state.margin, state._bias_cache)
    gamma_world = np.zeros((0, 3))
    if contacts.n == 0:
        # plain explicit MPM substep; bitwise v* passthrough
        grid.v_next = grid.v_star
        report = SolveReport(converged=True, n_contacts=0,
                             n_dofs=3 * int(np.count_nonzero(grid.active)))
    else:
        v_c_start = contact_velocities(contacts, stencil, grid.v_k)
        contacts.gamma_lag = normal_impulse(v_c_start[:, 2], contacts.phi,
                                            state.contact_params, dt_s)
        problem, act = build_contact_problem(grid, stencil, contacts,
                                             state.contact_params, dt_s, plan,
                                             epoch, mode=state.mode,
                                             workers=state.workers)
        v_sol, gamma, report = quasi_newton_solve(problem, state.solver_params)
        grid.v_next = np.zeros((grid.n_nodes, 3))
        grid.v_next[act] = v_sol
        gamma_world = (gamma[:, None, :] @ contacts.frames)[:, 0]
        arms = contacts.witness - np.stack([state.bodies[b].position
                                            for b in contacts.body])
        state._accum.add_reactions(contacts.body, gamma_world, arms)

    clamped = grid_to_particle(p, grid, stencil, dt_s)
    state.last_report = report
    return dict(n_contacts=contacts.n, report=report, clamped=clamped,
                n_active=int(np.count_nonzero(grid.active)),
                contacts=contacts, gamma_world=gamma_world)


def _check_particle_health(state: SimState) -> None:
    p = state.particles
    if not p.n:
        return
    if not (np.isfinite(p.x).all() and np.isfinite(p.v).all()):
        raise SimulationDiverged(
            f"non-finite particle state after step {state.step_index}")
    # blow-ups can stay finite while racing past the Morton-representable
    # cell range; abort cleanly before key encoding would fail
    if np.abs(p.x).max() >= state.h * float(2 ** 20 - 2):
        raise SimulationDiverged(
            f"particle positions left the representable grid region "
            f"after step {state.step_index}")


def advance_step(state: SimState) -> StepSummary:
    """Advance one coupling step of size dt (N substeps + rigid update)."""
    p = state.particles
    _check_particle_health(state)
    epoch = state.step_index
    plan = build_sort_plan(p.x, state.h, epoch)
    state.plan_builds += 1
    state._bias_cache.clear()
    state._accum.reset()
    n = state.step.substeps
    dt_s = state.step.dt / n

    contacts_trace, iters_trace, active_trace = [], [], []
    all_conv = True
    clamped = 0
    for _ in range(n):
        info = _advance_substep(state, dt_s, plan, epoch)
        contacts_trace.append(info["n_contacts"])
        iters_trace.append(info["report"].iterations)
        active_trace.append(info["n_active"])
        all_conv &= info["report"].converged
        clamped += info["clamped"]
        _check_particle_health(state)

    dt = state.step.dt
    new_time = state.time + dt
    wrench = np.concatenate([state._accum.linear / dt, state._accum.angular / dt], axis=1)
    for b_idx, body in enumerate(state.bodies):
        if body.kinematic:
            advance_kinematic_body(body, new_time)
        else:
            integrate_free_body(body, state._accum.linear[b_idx],
                                state._accum.angular[b_idx], state.step.gravity, dt)
            if not (np.isfinite(body.position).all() and np.isfinite(body.v).all()):
                raise SimulationDiverged(
                    f"non-finite rigid state for {body.name!r} after step {state.step_index}")

    summary = StepSummary(
        step_index=state.step_index, time=new_time, n_particles=p.n,
        n_active_nodes=float(np.mean(active_trace)) if active_trace else 0.0,
        n_contacts_mean=float(np.mean(contacts_trace)) if contacts_trace else 0.0,
        n_contacts_max=int(np.max(contacts_trace)) if contacts_trace else 0,
        iterations_mean=float(np.mean(iters_trace)) if iters_trace else 0.0,
        iterations_max=int(np.max(iters_trace)) if iters_trace else 0,
        all_converged=all_conv,
        staleness=plan_staleness(plan, p.x, state.h) if p.n else 0.0,
        clamped_gradients=clamped,
        wrench=wrench,
    )
    state.time = new_time
    state.step_index += 1
    return summary
