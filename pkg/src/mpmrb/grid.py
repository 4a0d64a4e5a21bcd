"""Block-sparse background grid.

Nodes live in 4x4x4 blocks keyed by packed block coordinates.  A grid is
rebuilt for each substep from the current particle positions, so the block set
always covers every particle's full 3x3x3 B-spline stencil; looking up a node
outside the allocated blocks is a contract violation and raises
AllocationError rather than silently growing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BLOCK = 4            # nodes per block edge
BLOCK_NODES = BLOCK**3
COORD_BIAS = 1 << 20  # shifts signed block coords into packing range
MASS_EPS = 1e-12      # node activation threshold [kg]


class AllocationError(RuntimeError):
    """A grid node outside the allocated block set was addressed."""


def pack_block_keys(bcoords: np.ndarray) -> np.ndarray:
    """Pack (n, 3) int block coordinates into sortable int64 keys."""
    b = bcoords.astype(np.int64) + COORD_BIAS
    if b.size and (int(b.min()) < 0 or int(b.max()) >= (1 << 21)):
        raise AllocationError("block coordinate outside packable range (|coord| < 2^20)")
    return (b[:, 0] << 42) | (b[:, 1] << 21) | b[:, 2]


def base_cells(positions: np.ndarray, h: float) -> np.ndarray:
    """Lower corner cell of each particle's quadratic B-spline stencil."""
    return np.floor(positions / h - 0.5).astype(np.int64)


@dataclass
class SparseGrid:
    h: float
    block_keys: np.ndarray           # (nb,) sorted unique packed keys
    block_coords: np.ndarray         # (nb, 3) int64
    mass: np.ndarray = field(default=None)       # (n_nodes,)
    mom_apic: np.ndarray = field(default=None)   # (n_nodes, 3) mass-weighted APIC momentum
    mom_force: np.ndarray = field(default=None)  # (n_nodes, 3) internal-force impulse
    v_star: np.ndarray = field(default=None)     # (n_nodes, 3) free-motion velocity
    v_k: np.ndarray = field(default=None)        # (n_nodes, 3) substep-start velocity
    v_next: np.ndarray = field(default=None)     # (n_nodes, 3) post-contact velocity
    active: np.ndarray = field(default=None)     # (n_nodes,) mass > MASS_EPS

    def __post_init__(self):
        n = self.n_nodes
        if self.mass is None:
            self.mass = np.zeros(n)
            self.mom_apic = np.zeros((n, 3))
            self.mom_force = np.zeros((n, 3))
            self.v_star = np.zeros((n, 3))
            self.v_k = np.zeros((n, 3))
            self.v_next = np.zeros((n, 3))
            self.active = np.zeros(n, dtype=bool)

    @property
    def n_blocks(self) -> int:
        return int(self.block_keys.shape[0])

    @property
    def n_nodes(self) -> int:
        return self.n_blocks * BLOCK_NODES

    @classmethod
    def allocate(cls, positions: np.ndarray, h: float) -> "SparseGrid":
        """Allocate blocks covering the 3-wide stencils of all positions."""
        if not (h > 0.0):
            raise ValueError("grid spacing h must be positive")
        positions = np.asarray(positions, dtype=float)
        if positions.size and not np.isfinite(positions).all():
            raise AllocationError("non-finite particle positions")
        if positions.shape[0] == 0:
            empty = np.zeros((0,), dtype=np.int64)
            return cls(h=h, block_keys=empty, block_coords=np.zeros((0, 3), dtype=np.int64))
        base = base_cells(positions, h)
        b_lo = base >> 2
        b_hi = (base + 2) >> 2
        # stencil spans at most two blocks per axis
        cands = []
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    pick = np.stack([
                        np.where(dx, b_hi[:, 0], b_lo[:, 0]),
                        np.where(dy, b_hi[:, 1], b_lo[:, 1]),
                        np.where(dz, b_hi[:, 2], b_lo[:, 2]),
                    ], axis=1)
                    cands.append(pick)
        keys = pack_block_keys(np.concatenate(cands))
        uniq = np.unique(keys)
        coords = np.stack([
            (uniq >> 42) - COORD_BIAS,
            ((uniq >> 21) & ((1 << 21) - 1)) - COORD_BIAS,
            (uniq & ((1 << 21) - 1)) - COORD_BIAS,
        ], axis=1)
        return cls(h=h, block_keys=uniq, block_coords=coords)

    def node_ids(self, node_coords: np.ndarray) -> np.ndarray:
        """Linear node ids of (..., 3) integer node coordinates.

        Raises AllocationError if any node falls outside allocated blocks.
        """
        nc = node_coords.reshape(-1, 3)
        bc = nc >> 2
        local = nc & 3
        keys = pack_block_keys(bc)
        idx = np.searchsorted(self.block_keys, keys)
        bad = (idx >= self.n_blocks)
        idx_safe = np.where(bad, 0, idx)
        bad |= self.block_keys[idx_safe] != keys
        if bad.any():
            raise AllocationError(
                f"{int(bad.sum())} stencil nodes outside allocated blocks")
        lin = idx_safe * BLOCK_NODES + (local[:, 0] * BLOCK + local[:, 1]) * BLOCK + local[:, 2]
        return lin.reshape(node_coords.shape[:-1])

    def node_coords(self, node_ids: np.ndarray) -> np.ndarray:
        """Integer grid coordinates of linear node ids."""
        block = node_ids // BLOCK_NODES
        rem = node_ids % BLOCK_NODES
        local = np.stack([rem // (BLOCK * BLOCK), (rem // BLOCK) % BLOCK, rem % BLOCK], axis=-1)
        return self.block_coords[block] * BLOCK + local

    def node_positions(self, node_ids: np.ndarray) -> np.ndarray:
        return self.node_coords(node_ids) * self.h
