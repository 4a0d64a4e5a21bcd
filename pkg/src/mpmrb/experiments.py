"""Reference experiments: panel-grip statics, stress-shake stability, roll.

Each builder returns a complete SceneConfig; run_experiment executes it and
computes the experiment's summary quantities (grip forces, drift, wrenches).
Scenes are desk-scale but keep the regimes that matter: prescribed-force
panel grasping with friction supporting the weight, a pathological
rigid-to-particle mass ratio under shaking, and a kinematic tool dragged
through a soft slab on a floor.
"""

from __future__ import annotations

import numpy as np

from .outputs import read_contact_log
from .scene import SceneConfig
from .simulate import RunResult, run_simulation

GRAVITY = 9.81

# Panel travel past the nominal box face needed to develop the 10 N grip
# (covers the lattice surface offset, 1% elastic compression and the contact
# compliance); calibrated against the measured steady-state normal force.
PANEL_GRIP_TRAVEL = 5.573e-3

# Same idea for the shake rig's pads, which must close the panel-to-pad and
# pad-to-cube lattice gaps; only needs to hold firmly, not hit a target.
SHAKE_GRIP_TRAVEL = 10.5e-3
SHAKE_HOLD_T = 0.3


def panel_grip_config(duration: float = 2.0) -> SceneConfig:
    """Two kinematic panels squeeze a 10 cm elastic cube to ~10 N each and
    hold it against gravity through friction (mu = 1)."""
    h = 0.02
    half = 0.05
    panel_thick = 0.01
    face0 = half + panel_thick          # panel center x when faces touch the cube
    travel = PANEL_GRIP_TRAVEL
    press_t = 0.1

    def panel(name, sign):
        x0 = sign * face0
        return dict(
            name=name, kinematic=True, position=[x0, 0.0, 0.0],
            geoms=[dict(shape="box", half_extents=[panel_thick, 0.08, 0.08], mu=1.0)],
            trajectory=dict(
                times=[0.0, press_t],
                positions=[[x0, 0.0, 0.0], [x0 - sign * travel, 0.0, 0.0]],
            ),
        )

    return SceneConfig.model_validate(dict(
        name="panel-grip",
        grid=dict(spacing=h),
        step=dict(dt=1e-4, substeps=1, gravity=[0.0, 0.0, -GRAVITY]),
        duration=duration,
        seed=11,
        deterministic=True,
        contact=dict(stiffness=2e3, tau_d=0.02, eps_v=1e-3, margin=6e-3),
        solver=dict(eps_r=5e-2),
        materials=[dict(name="soft", youngs_modulus=1e5, poisson_ratio=0.4,
                        density=1000.0)],
        volumes=[dict(type="box", material="soft", center=[0.0, 0.0, 0.0],
                      half_extents=[half, half, half], particles_per_cell=8,
                      jitter=0.0)],
        bodies=[panel("panel_left", -1), panel("panel_right", +1)],
        output=dict(frame_interval=0.1, log_bodies=["panel_left", "panel_right"]),
    ))


def panel_grip_analysis(out_dir, window: float = 1.0) -> dict:
    """Steady-window force statistics per panel from the contact log.

    Normal force is the x component (grip axis); friction components are y
    and z; the weight-supporting mean is f_z.
    """
    times, names, wrench = read_contact_log(f"{out_dir}/contacts.csv")
    t_lo = times.max() - window
    out = {}
    for name in sorted(set(names)):
        sel = np.array([n == name for n in names]) & (times > t_lo)
        f = wrench[sel, :3]
        out[name] = dict(
            normal_mean=float(np.abs(f[:, 0]).mean()),
            normal_std=float(f[:, 0].std()),
            friction_y_mean=float(f[:, 1].mean()),
            friction_y_std=float(f[:, 1].std()),
            friction_z_mean=float(f[:, 2].mean()),
            friction_z_std=float(f[:, 2].std()),
            rows=int(sel.sum()),
        )
    return out


def stress_shake_config(duration: float = 0.8) -> SceneConfig:
    """Two feather-light elastic pads grip a 150x denser free cube between
    kinematic panels that then shake vertically; weak coupling at N = 10."""
    h = 0.015
    pad_half = 0.03
    cube_half = 0.0225
    pad_center = cube_half + pad_half
    panel_thick = 0.0075
    face0 = cube_half + 2 * pad_half + panel_thick
    travel = SHAKE_GRIP_TRAVEL
    press_t = 0.04                      # fast: the free cube falls until gripped
    hold_t = SHAKE_HOLD_T               # lets the press transient ring down
    amp = 0.004
    freq = 2.0

    def panel_traj(sign):
        x0 = sign * face0
        times = [0.0, press_t, hold_t]
        xs = [x0, x0 - sign * travel, x0 - sign * travel]
        zs = [0.0, 0.0, 0.0]
        t = hold_t
        while t < duration - 1e-9:
            t = min(t + 0.005, duration)
            times.append(round(t, 9))
            xs.append(x0 - sign * travel)
            zs.append(amp * np.sin(2 * np.pi * freq * (t - hold_t)))
        return dict(times=times, positions=[[x, 0.0, z] for x, z in zip(xs, zs)])

    def panel(name, sign):
        return dict(
            name=name, kinematic=True, position=[sign * face0, 0.0, 0.0],
            geoms=[dict(shape="box", half_extents=[panel_thick, 0.06, 0.06], mu=1.0)],
            trajectory=panel_traj(sign),
        )

    def pad(name, sign):
        return dict(type="box", material="pad", particles_per_cell=8, jitter=0.0,
                    center=[sign * pad_center, 0.0, 0.0],
                    half_extents=[pad_half, pad_half, pad_half])

    return SceneConfig.model_validate(dict(
        name="stress-shake",
        grid=dict(spacing=h),
        step=dict(dt=1e-3, substeps=10, gravity=[0.0, 0.0, -GRAVITY]),
        duration=duration,
        seed=7,
        deterministic=True,
        contact=dict(stiffness=500.0, tau_d=5e-3, eps_v=1e-2, margin=6e-3),
        solver=dict(eps_r=1e-2),
        materials=[dict(name="pad", youngs_modulus=5e5, poisson_ratio=0.4,
                        density=100.0)],
        volumes=[pad("pad_left", -1), pad("pad_right", +1)],
        bodies=[
            dict(name="cube", kinematic=False, density=15000.0,
                 position=[0.0, 0.0, 0.0],
                 geoms=[dict(shape="box",
                             half_extents=[cube_half, cube_half, cube_half],
                             mu=1.0)]),
            panel("panel_left", -1),
            panel("panel_right", +1),
        ],
        output=dict(frame_interval=0.06,
                    log_bodies=["cube", "panel_left", "panel_right"]),
    ))


def stack_height(state) -> float:
    """Mass-weighted z centroid of the grasped stack (pads plus free cube)."""
    m_p = state.particles.mass
    z = float(np.dot(m_p, state.particles.x[:, 2]))
    m = float(m_p.sum())
    for b in state.bodies:
        if not b.kinematic:
            z += b.mass * float(b.position[2])
            m += b.mass
    return z / m


def shake_tracker(rows: list) -> object:
    """Step callback logging (time, stack height relative to the panels)."""
    def cb(state, summary):
        panel = next(b for b in state.bodies if b.kinematic)
        rows.append((summary.time, stack_height(state) - float(panel.position[2])))
    return cb


def stress_shake_analysis(result: RunResult, trace: list | None = None) -> dict:
    """Finiteness plus how far the grasped stack strays from the panels."""
    state = result.state
    finite = bool(np.isfinite(state.particles.x).all()
                  and np.isfinite(state.particles.v).all())
    for b in state.bodies:
        finite &= bool(np.isfinite(b.position).all() and np.isfinite(b.v).all())
    panel = next(b for b in state.bodies if b.kinematic)
    cube = next(b for b in state.bodies if not b.kinematic)
    out = dict(finite=finite,
               centroid_rel_panels=stack_height(state) - float(panel.position[2]),
               cube_z=float(cube.position[2]),
               diverged=result.diverged_at is not None)
    if trace:
        arr = np.asarray(trace)
        shake = arr[arr[:, 0] >= SHAKE_HOLD_T - 1e-9]
        if shake.size:
            # drift, relative to where the stack sat when the shake began
            out["tracking_drift"] = float(np.abs(shake[:, 1] - shake[0, 1]).max())
    return out


def roll_config(duration: float = 1.2) -> SceneConfig:
    """A kinematic capsule pin presses into a dough slab on the floor and
    drags across it (translation prescribed; the pin does not spin)."""
    h = 0.01
    slab_half = [0.08, 0.05, 0.02]
    slab_top = 2 * slab_half[2]
    r = 0.025
    z0 = slab_top + r + 0.004
    z_press = slab_top + r - 0.014
    traj = dict(
        times=[0.0, 0.25, 1.05, duration],
        positions=[[-0.05, 0.0, z0], [-0.05, 0.0, z_press],
                   [0.05, 0.0, z_press], [0.05, 0.0, z0]],
    )
    return SceneConfig.model_validate(dict(
        name="roll",
        grid=dict(spacing=h),
        step=dict(dt=5e-3, substeps=10, gravity=[0.0, 0.0, -GRAVITY]),
        duration=duration,
        seed=3,
        deterministic=True,
        contact=dict(stiffness=2e4, tau_d=5e-3, eps_v=1e-4),
        solver=dict(eps_r=5e-2),
        materials=[dict(name="dough", youngs_modulus=5e3, poisson_ratio=0.3,
                        density=1000.0)],
        volumes=[dict(type="box", material="dough",
                      center=[0.0, 0.0, slab_half[2]], half_extents=slab_half,
                      particles_per_cell=8, jitter=1.0)],
        bodies=[
            dict(name="floor", kinematic=True,
                 geoms=[dict(shape="halfspace", normal=[0, 0, 1], offset=0.0,
                             mu=0.5)]),
            dict(name="pin", kinematic=True, position=[-0.05, 0.0, z0],
                 quat=[np.cos(np.pi / 4), np.sin(np.pi / 4), 0.0, 0.0],
                 geoms=[dict(shape="capsule", radius=r, half_length=0.08,
                             mu=0.8)],
                 trajectory=traj),
        ],
        output=dict(frame_interval=0.05, log_bodies=["pin", "floor"]),
    ))


EXPERIMENTS = {
    "panel-grip": panel_grip_config,
    "stress-shake": stress_shake_config,
    "roll": roll_config,
}


def build_experiment(name: str, duration: float | None = None) -> SceneConfig:
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    return EXPERIMENTS[name]() if duration is None else EXPERIMENTS[name](duration)


def run_experiment(name: str, out_dir, duration: float | None = None,
                   deterministic: bool | None = None) -> tuple[RunResult, dict]:
    config = build_experiment(name, duration)
    trace: list = []
    callback = shake_tracker(trace) if name == "stress-shake" else None
    result = run_simulation(config, out_dir=out_dir, deterministic=deterministic,
                            step_callback=callback)
    if name == "panel-grip" and result.out_dir is not None:
        window = min(1.0, 0.6 * (duration or config.duration))
        analysis = panel_grip_analysis(result.out_dir, window=window)
    elif name == "stress-shake":
        analysis = stress_shake_analysis(result, trace)
    else:
        analysis = {"exit_code": result.exit_code}
    return result, analysis
