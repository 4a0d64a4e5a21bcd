"""End-to-end run loop: step the coupled system, emit frames/logs/stats."""

from __future__ import annotations

import logging
import time as time_mod
from dataclasses import dataclass, field
from pathlib import Path

from .coupling import SimState, SimulationDiverged, StepSummary, advance_step
from .outputs import (ContactLogWriter, StatsCollector, write_frame,
                      write_frame_csv, write_manifest, write_stats)
from .scene import SceneConfig, build_state, config_hash

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    state: SimState
    summaries: list[StepSummary] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    out_dir: Path | None = None
    exit_code: int = 0
    diverged_at: int | None = None


def run_simulation(config: SceneConfig, duration: float | None = None,
                   out_dir: str | Path | None = None,
                   deterministic: bool | None = None,
                   workers: int | None = None,
                   step_callback=None) -> RunResult:
    """Run the scene for duration seconds (defaults to the scene's own).

    Writes frames/<idx>.bin (+ .csv mirrors), contacts.csv, stats.json and
    manifest.json under out_dir when given.  On divergence the run aborts with
    a nonzero exit code and the manifest references the last good frame.
    """
    if deterministic is not None:
        config = config.model_copy(update={"deterministic": deterministic})
    if workers is not None:
        config = config.model_copy(update={"workers": workers})
    state = build_state(config)
    duration = config.duration if duration is None else duration
    dt = config.step.dt
    n_steps = max(1, round(duration / dt))

    frames_every = None
    if config.output.frame_interval is not None:
        frames_every = max(1, round(config.output.frame_interval / dt))

    result = RunResult(state=state)
    contact_writer = None
    frame_dir = None
    frames_written: list[str] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.out_dir = out_dir
        if config.output.log_bodies:
            contact_writer = ContactLogWriter(out_dir / "contacts.csv",
                                              config.output.log_bodies)
        if frames_every is not None:
            frame_dir = out_dir / "frames"
            frame_dir.mkdir(exist_ok=True)

    def emit_frame(idx: int):
        if frame_dir is None:
            return
        vel = state.particles.v if config.output.write_velocities else None
        stem = f"frame_{idx:06d}"
        write_frame(frame_dir / f"{stem}.bin", state.time, state.particles.x, vel)
        write_frame_csv(frame_dir / f"{stem}.csv", state.time, state.particles.x, vel)
        frames_written.append(stem)

    stats = StatsCollector(deterministic=config.deterministic)
    emit_frame(0)
    try:
        for i in range(n_steps):
            t0 = time_mod.perf_counter()
            summary = advance_step(state)
            wall_ms = (time_mod.perf_counter() - t0) * 1e3
            stats.add(summary, wall_ms)
            result.summaries.append(summary)
            if contact_writer is not None:
                rows = {name: summary.wrench[_body_index(state, name)]
                        for name in config.output.log_bodies}
                contact_writer.log_step(summary.time, rows)
            if frames_every is not None and (i + 1) % frames_every == 0:
                emit_frame(i + 1)
            if step_callback is not None:
                step_callback(state, summary)
    except SimulationDiverged as exc:
        log.error("simulation diverged: %s", exc)
        result.exit_code = 3
        result.diverged_at = state.step_index
    finally:
        if contact_writer is not None:
            contact_writer.close()

    if frames_every is not None and result.exit_code == 0 and n_steps % frames_every != 0:
        emit_frame(n_steps)

    report = stats.report(config)
    report["particles"] = state.particles.n
    report["completed_steps"] = stats.steps
    report["requested_steps"] = n_steps
    report["diverged"] = result.diverged_at is not None
    result.stats = report
    if out_dir is not None:
        write_stats(out_dir / "stats.json", report)
        manifest = {
            "scene": config.name,
            "config_sha256": config_hash(config),
            "frames": frames_written,
            "last_good_frame": frames_written[-1] if frames_written else None,
            "contact_log": "contacts.csv" if contact_writer is not None else None,
            "exit_code": result.exit_code,
        }
        write_manifest(out_dir / "manifest.json", manifest)
        dump_path = out_dir / "scene.yaml"
        from .scene import dump_scene
        dump_scene(config, dump_path)
    return result


def _body_index(state: SimState, name: str) -> int:
    for i, b in enumerate(state.bodies):
        if b.name == name:
            return i
    raise KeyError(name)
