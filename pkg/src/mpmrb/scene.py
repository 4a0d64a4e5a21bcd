"""Scene configuration: YAML schema, validation, and state construction.

Scenes are declarative: grid spacing, step/substep layout, materials, seeded
particle volumes, rigid bodies with geometry and optional keyframe
trajectories, contact/solver parameter overrides, and output selection.
Validation reports every violation with its field path before rejecting.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bodies import GeomAttachment, RigidBody, Trajectory, compose_geoms
from .contact_model import ContactParams
from .coupling import SimState, StepConfig
from .geometry import Box, Capsule, HalfSpace, Sphere
from .materials import Material
from .particles import ParticleSet, concatenate, seed_box, seed_sphere
from .solver import SolverParams


class SceneError(ValueError):
    """Scene file rejected; message lists every violation with its path."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Model):
    spacing: float = Field(gt=0, description="grid cell size h [m]")


class StepModel(_Model):
    dt: float = Field(gt=0, description="coupling step [s]")
    substeps: int = Field(default=1, ge=1, description="MPM substeps per step")
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)


class MaterialConfig(_Model):
    name: str
    youngs_modulus: float = Field(gt=0)
    poisson_ratio: float = Field(ge=0, lt=0.5)
    density: float = Field(gt=0)


class VolumeConfig(_Model):
    type: Literal["box", "sphere"]
    material: str
    center: tuple[float, float, float]
    half_extents: Optional[tuple[float, float, float]] = None
    radius: Optional[float] = Field(default=None, gt=0)
    particles_per_cell: int = Field(default=8, ge=1)
    jitter: float = Field(default=1.0, ge=0, le=1)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _shape_fields(self):
        if self.type == "box":
            if self.half_extents is None:
                raise ValueError("box volume requires half_extents")
            if not all(e > 0 for e in self.half_extents):
                raise ValueError("half_extents must be positive")
        if self.type == "sphere" and self.radius is None:
            raise ValueError("sphere volume requires radius")
        return self


class GeomConfig(_Model):
    shape: Literal["box", "sphere", "capsule", "halfspace"]
    half_extents: Optional[tuple[float, float, float]] = None
    radius: Optional[float] = Field(default=None, gt=0)
    half_length: Optional[float] = Field(default=None, gt=0)
    normal: Optional[tuple[float, float, float]] = None
    offset: float = 0.0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    quat: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    mu: float = Field(default=0.5, ge=0, description="friction vs particles")

    @model_validator(mode="after")
    def _shape_fields(self):
        need = {"box": ["half_extents"], "sphere": ["radius"],
                "capsule": ["radius", "half_length"], "halfspace": []}
        for f in need[self.shape]:
            if getattr(self, f) is None:
                raise ValueError(f"{self.shape} geom requires {f}")
        if self.shape == "box" and not all(e > 0 for e in self.half_extents):
            raise ValueError("half_extents must be positive")
        return self

    def build_shape(self):
        if self.shape == "box":
            return Box(half_extents=tuple(self.half_extents))
        if self.shape == "sphere":
            return Sphere(radius=self.radius)
        if self.shape == "capsule":
            return Capsule(radius=self.radius, half_length=self.half_length)
        n = self.normal if self.normal is not None else (0.0, 0.0, 1.0)
        n = tuple(np.asarray(n, dtype=float) / np.linalg.norm(n))
        return HalfSpace(normal=n, offset=self.offset)


class TrajectoryConfig(_Model):
    times: list[float]
    positions: list[tuple[float, float, float]]
    quats: Optional[list[tuple[float, float, float, float]]] = None

    @model_validator(mode="after")
    def _lengths(self):
        k = len(self.times)
        if k == 0:
            raise ValueError("trajectory needs at least one keyframe")
        if len(self.positions) != k:
            raise ValueError("trajectory positions length must match times")
        if self.quats is not None and len(self.quats) != k:
            raise ValueError("trajectory quats length must match times")
        if k > 1 and not all(b > a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        return self


class BodyConfig(_Model):
    name: str
    kinematic: bool = False
    density: float = Field(default=1000.0, gt=0)
    mass: Optional[float] = Field(default=None, gt=0)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    quat: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angular_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    geoms: list[GeomConfig] = Field(min_length=1)
    trajectory: Optional[TrajectoryConfig] = None

    @model_validator(mode="after")
    def _rules(self):
        if not self.kinematic:
            if any(g.shape == "halfspace" for g in self.geoms):
                raise ValueError("half-space geometry requires a kinematic body")
            if self.trajectory is not None:
                raise ValueError("trajectories apply to kinematic bodies only")
        return self


class ContactConfig(_Model):
    stiffness: float = Field(default=1e5, gt=0)
    tau_d: Optional[float] = Field(default=None, ge=0,
                                   description="dissipation time [s]; null = dt")
    eps_v: float = Field(default=1e-4, gt=0)
    margin: Optional[float] = Field(default=None, gt=0,
                                    description="detection margin [m]; null = h")


class SolverConfig(_Model):
    eps_a: Optional[float] = Field(default=None, ge=0,
                                   description="absolute tolerance; null = machine eps")
    eps_r: float = Field(default=5e-2, ge=0)
    max_iters: int = Field(default=500, ge=1)
    ls_max_iters: int = Field(default=50, ge=1)
    ls_tol: float = Field(default=1e-8, gt=0)


class OutputConfig(_Model):
    frame_interval: Optional[float] = Field(default=None, gt=0,
                                            description="seconds between frames")
    log_bodies: list[str] = Field(default_factory=list)
    write_velocities: bool = False


class SceneConfig(_Model):
    name: str = "scene"
    grid: GridConfig
    step: StepModel
    duration: float = Field(gt=0)
    seed: int = 0
    deterministic: bool = True
    workers: Optional[int] = Field(default=None, ge=1)
    contact: ContactConfig = Field(default_factory=ContactConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    materials: list[MaterialConfig] = Field(default_factory=list)
    volumes: list[VolumeConfig] = Field(default_factory=list)
    bodies: list[BodyConfig] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def _cross_refs(self):
        problems = []
        names = [m.name for m in self.materials]
        if len(set(names)) != len(names):
            problems.append("materials: duplicate material names")
        for i, v in enumerate(self.volumes):
            if v.material not in names:
                problems.append(f"volumes[{i}].material: unknown material {v.material!r}")
        body_names = [b.name for b in self.bodies]
        if len(set(body_names)) != len(body_names):
            problems.append("bodies: duplicate body names")
        for i, b in enumerate(self.output.log_bodies):
            if b not in body_names:
                problems.append(f"output.log_bodies[{i}]: unknown body {b!r}")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def _format_validation_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "\n".join(lines)


def load_scene(path: str | Path) -> SceneConfig:
    """Parse and validate a scene YAML file.

    Raises SceneError listing every violation (with field paths), or the YAML
    parse location on syntax errors.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SceneError(f"{path}: YAML parse error{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise SceneError(f"{path}: scene file must contain a mapping")
    try:
        return SceneConfig.model_validate(raw)
    except ValidationError as exc:
        raise SceneError(f"{path}: invalid scene\n{_format_validation_error(exc)}") from exc


def dump_scene(config: SceneConfig, path: str | Path | None = None) -> str:
    """Canonical YAML serialization; load(dump(x)) == x."""
    text = yaml.safe_dump(config.model_dump(exclude_none=True), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def config_hash(config: SceneConfig) -> str:
    return hashlib.sha256(dump_scene(config).encode()).hexdigest()


def _seed_volume(v: VolumeConfig, h: float, material: Material, mat_id: int,
                 seed: int) -> ParticleSet:
    kwargs = dict(h=h, material=material, material_id=mat_id,
                  particles_per_cell=v.particles_per_cell, jitter=v.jitter,
                  velocity=v.velocity, seed=seed)
    if v.type == "box":
        return seed_box(np.asarray(v.center), np.asarray(v.half_extents), **kwargs)
    return seed_sphere(np.asarray(v.center), v.radius, **kwargs)


def _build_body(cfg: BodyConfig) -> RigidBody:
    geoms = [GeomAttachment(shape=g.build_shape(), position=np.asarray(g.position),
                            quat=np.asarray(g.quat), mu=g.mu) for g in cfg.geoms]
    traj = None
    if cfg.trajectory is not None:
        k = len(cfg.trajectory.times)
        quats = (np.asarray(cfg.trajectory.quats)
                 if cfg.trajectory.quats is not None
                 else np.tile([1.0, 0.0, 0.0, 0.0], (k, 1)))
        traj = Trajectory(times=np.asarray(cfg.trajectory.times),
                          positions=np.asarray(cfg.trajectory.positions),
                          quats=quats)
    if cfg.kinematic:
        body = RigidBody(name=cfg.name, kinematic=True, geoms=geoms,
                         position=np.asarray(cfg.position), quat=np.asarray(cfg.quat),
                         v=np.asarray(cfg.velocity),
                         omega=np.asarray(cfg.angular_velocity), trajectory=traj)
        if traj is not None:
            pos, quat, v, om = traj.sample(0.0)
            body.position, body.quat, body.v, body.omega = pos, quat, v, om
        return body
    # free body: mass properties from geometry, recentered on the COM
    mass, com, inertia = compose_geoms(
        [(g.shape, g.position, g.quat, cfg.density) for g in geoms])
    if cfg.mass is not None:
        inertia = inertia * (cfg.mass / mass)
        mass = cfg.mass
    if np.linalg.norm(com) > 0:
        for g in geoms:
            g.position = g.position - com
    body = RigidBody(name=cfg.name, kinematic=False, geoms=geoms, mass=mass,
                     inertia_body=inertia,
                     position=np.asarray(cfg.position) + com,
                     quat=np.asarray(cfg.quat), v=np.asarray(cfg.velocity),
                     omega=np.asarray(cfg.angular_velocity))
    return body


def build_state(config: SceneConfig) -> SimState:
    """Instantiate the runtime state a scene describes."""
    h = config.grid.spacing
    materials = [Material(youngs_modulus=m.youngs_modulus, poisson_ratio=m.poisson_ratio,
                          density=m.density) for m in config.materials]
    mat_ids = {m.name: i for i, m in enumerate(config.materials)}
    sets = [
        _seed_volume(v, h, materials[mat_ids[v.material]], mat_ids[v.material],
                     seed=config.seed + i)
        for i, v in enumerate(config.volumes)
    ]
    particles = concatenate(sets) if sets else ParticleSet.empty()
    bodies = [_build_body(b) for b in config.bodies]

    contact = ContactParams(
        stiffness=config.contact.stiffness,
        tau_d=config.step.dt if config.contact.tau_d is None else config.contact.tau_d,
        eps_v=config.contact.eps_v,
        margin=config.contact.margin,
    )
    solver = SolverParams(
        eps_a=(float(np.finfo(np.float64).eps) if config.solver.eps_a is None
               else config.solver.eps_a),
        eps_r=config.solver.eps_r,
        max_iters=config.solver.max_iters,
        ls_max_iters=config.solver.ls_max_iters,
        ls_tol=config.solver.ls_tol,
    )
    return SimState(
        particles=particles, materials=materials, bodies=bodies, h=h,
        step=StepConfig(dt=config.step.dt, substeps=config.step.substeps,
                        gravity=tuple(config.step.gravity)),
        contact_params=contact, solver_params=solver,
        mode="deterministic" if config.deterministic else "fast",
        workers=config.workers,
    )
