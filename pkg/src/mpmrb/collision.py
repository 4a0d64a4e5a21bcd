"""Particle vs rigid-geometry contact detection.

Contacts are particle-geometry pairs whose signed distance falls below the
detection margin.  Sets are re-detected every substep against body poses
frozen at the step start; the contact-frame bias velocity of each (particle,
body, geom) pair is computed once at first sight within a step and reused
bitwise for the remaining substeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodies import RigidBody
from .geometry import contact_frames, query_signed_distance
from .mpm import Stencil
from .particles import ParticleSet
from .rotations import quat_to_matrix


@dataclass
class ContactSet:
    """SoA contact data, ordered by (particle, body, geom)."""

    particle: np.ndarray              # (n,) particle ids
    body: np.ndarray                  # (n,) body indices
    geom: np.ndarray                  # (n,) geom indices within the body
    phi: np.ndarray                   # (n,) signed distances
    normal: np.ndarray                # (n, 3) world outward normals
    witness: np.ndarray               # (n, 3) world witness points
    frames: np.ndarray                # (n, 3, 3) world-to-contact rotations
    bias: np.ndarray                  # (n, 3) contact-frame bias velocities
    mu: np.ndarray                    # (n,) friction coefficients
    gamma_lag: np.ndarray = field(default=None)  # (n,) lagged normal impulses

    def __post_init__(self):
        if self.gamma_lag is None:
            self.gamma_lag = np.zeros(self.phi.shape[0])

    @property
    def n(self) -> int:
        return int(self.phi.shape[0])

    @classmethod
    def empty(cls) -> "ContactSet":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return cls(particle=zi, body=zi.copy(), geom=zi.copy(), phi=z,
                   normal=np.zeros((0, 3)), witness=np.zeros((0, 3)),
                   frames=np.zeros((0, 3, 3)), bias=np.zeros((0, 3)), mu=z.copy())


class BiasCache:
    """Per-step memo of contact-frame bias vectors keyed by (body, geom, pid)."""

    def __init__(self):
        self._store: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def clear(self):
        self._store.clear()

    def lookup_or_fill(self, body_idx: int, geom_idx: int, pids: np.ndarray,
                       fresh_bias: np.ndarray) -> np.ndarray:
        """Return cached bias rows for pids, adopting fresh values for new pids.

        pids must be sorted ascending (detection order guarantees this).
        """
        key = (body_idx, geom_idx)
        if key not in self._store:
            self._store[key] = (pids.copy(), fresh_bias.copy())
            return fresh_bias
        known_pids, known_bias = self._store[key]
        pos = np.searchsorted(known_pids, pids)
        pos_safe = np.minimum(pos, known_pids.shape[0] - 1)
        hit = known_pids[pos_safe] == pids
        out = fresh_bias.copy()
        out[hit] = known_bias[pos_safe[hit]]
        if (~hit).any():
            merged_pids = np.concatenate([known_pids, pids[~hit]])
            merged_bias = np.concatenate([known_bias, fresh_bias[~hit]])
            order = np.argsort(merged_pids, kind="stable")
            self._store[key] = (merged_pids[order], merged_bias[order])
        return out


def detect_contacts(particles: ParticleSet, bodies: list[RigidBody], margin: float,
                    bias_cache: BiasCache | None = None) -> ContactSet:
    """Detect particle-geometry contacts with phi < margin.

    Body states are read as-is (the coupling loop keeps them frozen at step
    start).  Output is ordered by (particle, body, geom).
    """
    if particles.n == 0 or not bodies:
        return ContactSet.empty()
    parts = []
    for b_idx, body in enumerate(bodies):
        r_body = body.rotation()
        for g_idx, geom in enumerate(body.geoms):
            r_geom = r_body @ quat_to_matrix(geom.quat)
            p_geom = body.position + r_body @ geom.position
            local = (particles.x - p_geom) @ r_geom
            phi, n_local, w_local = query_signed_distance(geom.shape, local)
            sel = np.flatnonzero(phi < margin)
            if sel.shape[0] == 0:
                continue
            normal = n_local[sel] @ r_geom.T
            witness = w_local[sel] @ r_geom.T + p_geom
            frames = contact_frames(normal)
            # rigid-point velocity at the witness, in the contact frame
            arm = witness - body.position
            point_v = body.v + np.cross(body.omega, arm)
            fresh_bias = -(frames @ point_v[:, :, None])[:, :, 0]
            if bias_cache is not None:
                bias = bias_cache.lookup_or_fill(b_idx, g_idx, sel, fresh_bias)
            else:
                bias = fresh_bias
            parts.append(dict(
                particle=sel.astype(np.int64),
                body=np.full(sel.shape[0], b_idx, dtype=np.int64),
                geom=np.full(sel.shape[0], g_idx, dtype=np.int64),
                phi=phi[sel], normal=normal, witness=witness,
                frames=frames, bias=bias,
                mu=np.full(sel.shape[0], geom.mu),
            ))
    if not parts:
        return ContactSet.empty()
    merged = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    order = np.lexsort((merged["geom"], merged["body"], merged["particle"]))
    merged = {k: v[order] for k, v in merged.items()}
    return ContactSet(**merged)


def contact_velocities(contacts: ContactSet, stencil: Stencil,
                       v_grid: np.ndarray) -> np.ndarray:
    """Contact-frame relative velocities v_c = R (sum_i w_i v_i) + b."""
    if contacts.n == 0:
        return np.zeros((0, 3))
    nodes = stencil.nodes[contacts.particle]
    w = stencil.weights[contacts.particle]
    v_p = (w[:, None, :] @ v_grid[nodes])[:, 0]
    return (contacts.frames @ v_p[:, :, None])[:, :, 0] + contacts.bias
