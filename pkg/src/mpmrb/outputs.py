"""Run artifacts: binary/CSV particle frames, contact wrench log, run stats.

Binary frame layout (little endian):

    bytes 0..3   magic b"MPRB"
    u32          version (1)
    u32          flags (bit 0: velocities present)
    u64          particle count
    f64          simulation time
    f64[n, 3]    positions
    f64[n, 3]    velocities (if flagged)

Every text artifact formats floats with repr-exact precision so that
deterministic runs produce bitwise-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

FRAME_MAGIC = b"MPRB"
FRAME_VERSION = 1


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_frame(path: str | Path, time: float, positions: np.ndarray,
                velocities: np.ndarray | None = None) -> None:
    positions = np.ascontiguousarray(positions, dtype="<f8")
    flags = 1 if velocities is not None else 0
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC)
        fh.write(struct.pack("<IIQd", FRAME_VERSION, flags, positions.shape[0], time))
        fh.write(positions.tobytes())
        if velocities is not None:
            fh.write(np.ascontiguousarray(velocities, dtype="<f8").tobytes())


def read_frame(path: str | Path):
    """Returns (time, positions, velocities or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FRAME_MAGIC:
            raise ValueError(f"{path}: not a frame file (magic {magic!r})")
        version, flags, count, time = struct.unpack("<IIQd", fh.read(24))
        if version != FRAME_VERSION:
            raise ValueError(f"{path}: unsupported frame version {version}")
        pos = np.frombuffer(fh.read(count * 24), dtype="<f8").reshape(count, 3)
        vel = None
        if flags & 1:
            vel = np.frombuffer(fh.read(count * 24), dtype="<f8").reshape(count, 3)
    return time, pos.copy(), vel.copy() if vel is not None else None


def write_frame_csv(path: str | Path, time: float, positions: np.ndarray,
                    velocities: np.ndarray | None = None) -> None:
    cols = ["x", "y", "z"] + (["vx", "vy", "vz"] if velocities is not None else [])
    with open(path, "w") as fh:
        fh.write(f"# time={_fmt(time)}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(positions.shape[0]):
            row = [_fmt(v) for v in positions[i]]
            if velocities is not None:
                row += [_fmt(v) for v in velocities[i]]
            fh.write(",".join(row) + "\n")


def read_frame_csv(path: str | Path):
    with open(path) as fh:
        header = fh.readline().strip()
        time = float(header.split("=", 1)[1])
        cols = fh.readline().strip().split(",")
        data = np.array([[float(v) for v in line.strip().split(",")]
                         for line in fh if line.strip()])
    data = data.reshape(-1, len(cols))
    pos = data[:, :3]
    vel = data[:, 3:6] if len(cols) >= 6 else None
    return time, pos, vel


class ContactLogWriter:
    """CSV wrench log: one row per (step, logged body)."""

    COLUMNS = ["time", "body", "fx", "fy", "fz", "tx", "ty", "tz"]

    def __init__(self, path: str | Path, body_names: list[str]):
        self.path = Path(path)
        self.body_names = body_names
        self._fh = open(self.path, "w")
        self._fh.write(",".join(self.COLUMNS) + "\n")

    def log_step(self, time: float, wrench_rows: dict[str, np.ndarray]) -> None:
        for name in self.body_names:
            w = wrench_rows[name]
            vals = ",".join(_fmt(v) for v in w)
            self._fh.write(f"{_fmt(time)},{name},{vals}\n")

    def close(self):
        self._fh.close()


def read_contact_log(path: str | Path):
    """Returns (times (r,), names list, wrench (r, 6))."""
    times, names, rows = [], [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != ContactLogWriter.COLUMNS:
            raise ValueError(f"{path}: unexpected contact log columns {header}")
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            times.append(float(parts[0]))
            names.append(parts[1])
            rows.append([float(v) for v in parts[2:]])
    return np.array(times), names, np.array(rows).reshape(-1, 6)


class StatsCollector:
    """Per-step aggregates and the end-of-run summary row."""

    def __init__(self, deterministic: bool):
        self.deterministic = deterministic
        self.steps = 0
        self.active_nodes = []
        self.contacts_mean = []
        self.contacts_max = 0
        self.iters_mean = []
        self.iters_max = 0
        self.staleness = []
        self.clamped = 0
        self.wall_ms = []
        self.all_converged = True

    def add(self, summary, wall_ms: float) -> None:
        self.steps += 1
        self.active_nodes.append(summary.n_active_nodes)
        self.contacts_mean.append(summary.n_contacts_mean)
        self.contacts_max = max(self.contacts_max, summary.n_contacts_max)
        self.iters_mean.append(summary.iterations_mean)
        self.iters_max = max(self.iters_max, summary.iterations_max)
        self.staleness.append(summary.staleness)
        self.clamped += summary.clamped_gradients
        self.wall_ms.append(wall_ms)
        self.all_converged &= summary.all_converged

    def report(self, config) -> dict:
        det = self.deterministic
        mean = lambda xs: float(np.mean(xs)) if xs else 0.0
        return {
            "scene": config.name,
            "h": config.grid.spacing,
            "dt": config.step.dt,
            "substeps": config.step.substeps,
            "steps": self.steps,
            "particles": None,  # filled by the runner
            "mean_active_nodes": mean(self.active_nodes),
            "mean_contacts": mean(self.contacts_mean),
            "max_contacts": self.contacts_max,
            "mean_solver_iterations": mean(self.iters_mean),
            "max_solver_iterations": self.iters_max,
            "mean_plan_staleness": mean(self.staleness),
            "clamped_gradients": self.clamped,
            "all_converged": self.all_converged,
            # wall time is non-reproducible; deterministic artifacts null it
            "mean_step_ms": None if det else mean(self.wall_ms),
            "total_wall_s": None if det else float(np.sum(self.wall_ms)) / 1e3,
        }

    @staticmethod
    def table_row(report: dict) -> str:
        cols = [
            ("scene", "{}"), ("particles", "{}"), ("h", "{:.4g}"), ("dt", "{:.3g}"),
            ("substeps", "{}"), ("steps", "{}"), ("mean_active_nodes", "{:.1f}"),
            ("mean_contacts", "{:.1f}"), ("mean_solver_iterations", "{:.2f}"),
            ("mean_step_ms", "{}"),
        ]
        parts = []
        for key, fmt in cols:
            val = report.get(key)
            if val is None:
                parts.append(f"{key}=n/a")
            else:
                parts.append(f"{key}=" + fmt.format(val))
        return "  ".join(parts)


def write_stats(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
