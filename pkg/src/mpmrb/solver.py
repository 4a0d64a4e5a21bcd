"""Contact solve: unconstrained convex minimization over grid velocities.

Objective: l_p(v) = 1/2 ||v - v*||_M^2 + sum_c l_c(R_c J_c v + b_c), strongly
convex through the mass term.  The quasi-Newton method preconditions with the
3x3 block diagonal of the true Hessian,

    H_ii = m_i I + sum_c w_ic^2 R_c^T G_c R_c,

takes d = -H^{-1} grad, and runs an exact line search (1D Newton on phi'(a)
with bracketing bisection fallback).  Convergence uses the mass-scaled
residual ||D grad|| < eps_a + eps_r max(||M^0.5 v||, ||D J^T gamma||) with
D = diag(M)^{-1/2}.

A dense Newton oracle (full Hessian, same line search and criterion) backs
the solver's correctness tests; it is O(n^3) per iteration and test-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .collision import ContactSet
from .contact_model import (ContactParams, contact_energy, contact_grad_hess,
                            contact_gradient, contact_hessian)
from .grid import SparseGrid
from .mpm import Stencil
from .transfer import SortPlan, scatter_reduce

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    eps_a: float = float(np.finfo(np.float64).eps)
    eps_r: float = 5e-2
    max_iters: int = 500
    ls_max_iters: int = 50
    ls_tol: float = 1e-8

    def __post_init__(self):
        if self.eps_a < 0 or self.eps_r < 0 or (self.eps_a == 0 and self.eps_r == 0):
            raise ValueError("need eps_a >= 0, eps_r >= 0, not both zero")
        if self.max_iters < 1 or self.ls_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if not self.ls_tol > 0:
            raise ValueError("ls_tol must be positive")


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    n_contacts: int = 0
    n_dofs: int = 0
    objective_trace: list[float] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)
    threshold_trace: list[float] = field(default_factory=list)
    alpha_trace: list[float] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        lines = [f"contact solve: {self.n_contacts} contacts, {self.n_dofs} dofs, "
                 f"converged={self.converged} in {self.iterations} iterations"]
        for i, (obj, res, thr) in enumerate(zip(self.objective_trace,
                                                self.residual_trace,
                                                self.threshold_trace)):
            alpha = self.alpha_trace[i - 1] if 0 < i <= len(self.alpha_trace) else float("nan")
            lines.append(f"  iter {i}: objective={obj:.12e} residual={res:.6e} "
                         f"threshold={thr:.6e} alpha={alpha:.6e}")
        return lines


@dataclass
class ContactProblem:
    """One substep's contact solve restricted to active grid nodes."""

    m: np.ndarray          # (nd,) node masses
    v_star: np.ndarray     # (nd, 3) free-motion velocities
    v_init: np.ndarray     # (nd, 3) substep-start velocities (warm start)
    nodes: np.ndarray      # (nc, 27) restricted node indices per contact
    w: np.ndarray          # (nc, 27) interpolation weights (0 on dead slots)
    frames: np.ndarray     # (nc, 3, 3) world-to-contact rotations
    bias: np.ndarray       # (nc, 3)
    phi: np.ndarray        # (nc,)
    mu: np.ndarray         # (nc,)
    gamma_lag: np.ndarray  # (nc,)
    contact_params: ContactParams
    dt: float
    plan: SortPlan
    epoch: int
    particle_ids: np.ndarray  # (nc,) particle id per contact, for binned scatter
    mode: str = "deterministic"
    workers: int | None = None

    @property
    def n_dofs(self) -> int:
        return 3 * self.m.shape[0]

    @property
    def n_contacts(self) -> int:
        return int(self.phi.shape[0])

    def contact_velocities(self, v: np.ndarray) -> np.ndarray:
        if self.n_contacts == 0:
            return np.zeros((0, 3))
        v_p = (self.w[:, None, :] @ v[self.nodes])[:, 0]
        return (self.frames @ v_p[:, :, None])[:, :, 0] + self.bias

    def energy(self, v: np.ndarray, vc: np.ndarray | None = None) -> float:
        dv = v - self.v_star
        e = 0.5 * np.sum(self.m[:, None] * dv * dv)
        if self.n_contacts:
            if vc is None:
                vc = self.contact_velocities(v)
            e += np.sum(contact_energy(vc, self.phi, self.gamma_lag, self.mu,
                                       self.contact_params, self.dt))
        return float(e)

    def _scatter_contact(self, vals: np.ndarray) -> np.ndarray:
        """Scatter per-contact per-slot values (nc, 27, C) onto nodes."""
        return scatter_reduce(self.nodes, vals, self.m.shape[0], self.plan,
                              self.epoch, mode=self.mode, workers=self.workers,
                              particle_ids=self.particle_ids)

    def gradient(self, v: np.ndarray,
                 vc: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(total gradient, contact part J^T dl/dv_c), both (nd, 3)."""
        g = self.m[:, None] * (v - self.v_star)
        if self.n_contacts == 0:
            return g, np.zeros_like(g)
        if vc is None:
            vc = self.contact_velocities(v)
        g_c = contact_gradient(vc, self.phi, self.gamma_lag, self.mu,
                               self.contact_params, self.dt)
        g_world = (g_c[:, None, :] @ self.frames)[:, 0]    # R^T g_c per contact
        vals = self.w[:, :, None] * g_world[:, None, :]
        jt = self._scatter_contact(vals)
        return g + jt, jt

    def impulses(self, v: np.ndarray, vc: np.ndarray | None = None) -> np.ndarray:
        """Contact-frame impulses gamma = -dl_c/dv_c at v."""
        if self.n_contacts == 0:
            return np.zeros((0, 3))
        if vc is None:
            vc = self.contact_velocities(v)
        return -contact_gradient(vc, self.phi, self.gamma_lag, self.mu,
                                 self.contact_params, self.dt)

    def hessian_blocks(self, v: np.ndarray,
                       vc: np.ndarray | None = None) -> np.ndarray:
        """Block-diagonal Hessian (nd, 3, 3): m_i I + sum_c w_ic^2 R^T G R."""
        h = np.zeros((self.m.shape[0], 3, 3))
        h[:, 0, 0] = self.m
        h[:, 1, 1] = self.m
        h[:, 2, 2] = self.m
        if self.n_contacts == 0:
            return h
        if vc is None:
            vc = self.contact_velocities(v)
        big_g = contact_hessian(vc, self.phi, self.gamma_lag, self.mu,
                                self.contact_params, self.dt)
        rgr = np.swapaxes(self.frames, 1, 2) @ big_g @ self.frames
        vals = (self.w * self.w)[:, :, None] * rgr.reshape(-1, 1, 9)
        h += self._scatter_contact(vals).reshape(-1, 3, 3)
        return h

    def dense_hessian(self, v: np.ndarray) -> np.ndarray:
        """Full (3nd, 3nd) Hessian including cross-node coupling (oracle use)."""
        nd = self.m.shape[0]
        h = np.zeros((3 * nd, 3 * nd))
        idx = np.arange(3 * nd)
        h[idx, idx] = np.repeat(self.m, 3)
        if self.n_contacts == 0:
            return h
        big_g = contact_hessian(self.contact_velocities(v), self.phi,
                                self.gamma_lag, self.mu, self.contact_params, self.dt)
        rgr = np.einsum("cki,ckl,clj->cij", self.frames, big_g, self.frames)
        for c in range(self.n_contacts):
            ww = np.outer(self.w[c], self.w[c])  # (27, 27)
            blocks = ww[:, :, None, None] * rgr[c]
            rows = (3 * self.nodes[c][:, None] + np.arange(3)[None, :]).ravel()
            np.add.at(h, (rows[:, None], rows[None, :]),
                      blocks.transpose(0, 2, 1, 3).reshape(81, 81))
        return h

    def residual_threshold(self, v: np.ndarray, g: np.ndarray,
                           g_contact: np.ndarray, params: SolverParams) -> tuple[float, float]:
        inv_m = 1.0 / self.m
        residual = float(np.sqrt(np.sum(g * g * inv_m[:, None])))
        p_norm = float(np.sqrt(np.sum(self.m[:, None] * v * v)))
        j_norm = float(np.sqrt(np.sum(g_contact * g_contact * inv_m[:, None])))
        return residual, params.eps_a + params.eps_r * max(p_norm, j_norm)


def build_contact_problem(grid: SparseGrid, stencil: Stencil, contacts: ContactSet,
                          contact_params: ContactParams, dt: float, plan: SortPlan,
                          epoch: int, mode: str = "deterministic",
                          workers: int | None = None) -> tuple[ContactProblem, np.ndarray]:
    """Restrict the grid to active nodes; returns (problem, active node ids)."""
    act = np.flatnonzero(grid.active)
    remap = np.full(grid.n_nodes, -1, dtype=np.int64)
    remap[act] = np.arange(act.shape[0])
    if contacts.n:
        nodes = remap[stencil.nodes[contacts.particle]]
        w = stencil.weights[contacts.particle].copy()
        dead = nodes < 0
        w[dead] = 0.0
        nodes[dead] = 0
    else:
        nodes = np.zeros((0, 27), dtype=np.int64)
        w = np.zeros((0, 27))
    problem = ContactProblem(
        m=grid.mass[act], v_star=grid.v_star[act], v_init=grid.v_k[act],
        nodes=nodes, w=w, frames=contacts.frames, bias=contacts.bias,
        phi=contacts.phi, mu=contacts.mu, gamma_lag=contacts.gamma_lag,
        contact_params=contact_params, dt=dt, plan=plan, epoch=epoch,
        particle_ids=contacts.particle, mode=mode, workers=workers,
    )
    return problem, act


def solve_search_direction(h_blocks: np.ndarray, g: np.ndarray) -> np.ndarray:
    """d = -H^{-1} g for SPD 3x3 blocks (vectorized Cholesky).

    Nearly singular blocks are regularized by adding 1e-12 trace(H) I.
    """
    h = h_blocks
    for attempt in range(4):
        with np.errstate(invalid="ignore", divide="ignore"):
            l11 = np.sqrt(h[:, 0, 0])
            l21 = h[:, 1, 0] / l11
            l31 = h[:, 2, 0] / l11
            l22 = np.sqrt(h[:, 1, 1] - l21 * l21)
            l32 = (h[:, 2, 1] - l31 * l21) / l22
            l33 = np.sqrt(h[:, 2, 2] - l31 * l31 - l32 * l32)
            bad = ~(np.isfinite(l11) & np.isfinite(l22) & np.isfinite(l33)
                    & (l11 > 0) & (l22 > 0) & (l33 > 0))
        if not bad.any():
            break
        if attempt == 3:
            raise FloatingPointError("Hessian block not SPD after regularization")
        log.warning("regularizing %d near-singular Hessian blocks", int(bad.sum()))
        h = h.copy()
        tr = h[bad, 0, 0] + h[bad, 1, 1] + h[bad, 2, 2]
        scale = 1e-12 * np.maximum(tr, 1.0) * (10.0 ** attempt)
        for k in range(3):
            h[bad, k, k] += scale
    y1 = -g[:, 0] / l11
    y2 = (-g[:, 1] - l21 * y1) / l22
    y3 = (-g[:, 2] - l31 * y1 - l32 * y2) / l33
    x3 = y3 / l33
    x2 = (y2 - l32 * x3) / l22
    x1 = (y1 - l21 * x2 - l31 * x3) / l11
    return np.stack([x1, x2, x3], axis=1)


@dataclass
class LineSearchResult:
    alpha: float
    evals: int
    derivative: float


def line_search(deriv, max_iters: int = 50, tol: float = 1e-8) -> LineSearchResult:
    """Exact line search: 1D Newton on phi'(alpha) with bracketed bisection.

    deriv(alpha) -> (phi'(alpha), phi''(alpha)).  Requires phi'(0) < 0; the
    returned alpha satisfies |phi'| <= tol |phi'(0)| or is the largest point
    still on the descent side (convexity then guarantees phi(alpha) < phi(0)).
    """
    d0, _ = deriv(0.0)
    if not np.isfinite(d0) or d0 >= 0.0:
        raise ValueError(f"line search needs a descent direction, phi'(0) = {d0:.6e}")
    lo, hi = 0.0, np.inf
    alpha = 1.0
    d = d0
    for it in range(1, max_iters + 1):
        d, dd = deriv(alpha)
        if abs(d) <= tol * abs(d0):
            return LineSearchResult(alpha=alpha, evals=it, derivative=d)
        if d > 0.0:
            hi = alpha
        else:
            lo = alpha
        cand = alpha - d / dd if (np.isfinite(dd) and dd > 0.0) else np.nan
        if np.isfinite(hi):
            if not (lo < cand < hi) or not np.isfinite(cand):
                cand = 0.5 * (lo + hi)
        else:
            if not np.isfinite(cand) or cand <= lo:
                cand = 2.0 * max(alpha, 1e-8)
        alpha = cand
    # max evals exhausted: fall back to the best bracketed descent point
    if lo > 0.0:
        return LineSearchResult(alpha=lo, evals=max_iters, derivative=d)
    return LineSearchResult(alpha=alpha, evals=max_iters, derivative=d)


def _directional_derivatives(problem: ContactProblem, v: np.ndarray, dv: np.ndarray,
                             vc0: np.ndarray | None):
    """phi'(a), phi''(a) evaluator along dv with no grid-sized work per call."""
    mdv = problem.m[:, None] * dv
    a1 = float(np.sum((v - problem.v_star) * mdv))
    a2 = float(np.sum(dv * mdv))  # = dv^T M dv
    if problem.n_contacts:
        dv_p = (problem.w[:, None, :] @ dv[problem.nodes])[:, 0]
        dvc = (problem.frames @ dv_p[:, :, None])[:, :, 0]
    else:
        vc0 = dvc = None

    def deriv(alpha: float):
        d = a1 + a2 * alpha
        dd = a2
        if vc0 is not None:
            vca = vc0 + alpha * dvc
            g_c, big_g = contact_grad_hess(vca, problem.phi, problem.gamma_lag,
                                           problem.mu, problem.contact_params,
                                           problem.dt)
            d += float(np.sum(g_c * dvc))
            dd += float(np.sum(dvc * (big_g @ dvc[:, :, None])[:, :, 0]))
        return d, dd

    return deriv


def _minimize(problem: ContactProblem, params: SolverParams, v0: np.ndarray | None,
              direction_fn) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    v = (problem.v_init if v0 is None else v0).copy()
    report = SolveReport(n_contacts=problem.n_contacts, n_dofs=problem.n_dofs)
    vc = problem.contact_velocities(v) if problem.n_contacts else None
    g, g_c = problem.gradient(v, vc)
    residual, threshold = problem.residual_threshold(v, g, g_c, params)
    report.objective_trace.append(problem.energy(v, vc))
    report.residual_trace.append(residual)
    report.threshold_trace.append(threshold)
    for it in range(params.max_iters):
        # test-last loop: at the initial iterate only the absolute floor
        # applies, because the relative scale max(||p||, ||jc||) can exceed
        # the entire free-motion increment and a premature stop would drop
        # gravity and elastic forces from the step
        if residual < (threshold if it > 0 else params.eps_a):
            report.converged = True
            break
        dv = direction_fn(problem, v, g, vc)
        ls = line_search(_directional_derivatives(problem, v, dv, vc),
                         max_iters=params.ls_max_iters, tol=params.ls_tol)
        v = v + ls.alpha * dv
        report.iterations += 1
        report.alpha_trace.append(ls.alpha)
        vc = problem.contact_velocities(v) if problem.n_contacts else None
        g, g_c = problem.gradient(v, vc)
        residual, threshold = problem.residual_threshold(v, g, g_c, params)
        report.objective_trace.append(problem.energy(v, vc))
        report.residual_trace.append(residual)
        report.threshold_trace.append(threshold)
    else:
        report.converged = residual < threshold
        if not report.converged:
            log.warning("contact solve hit max_iters=%d (residual %.3e, threshold %.3e)",
                        params.max_iters, residual, threshold)
    if not np.isfinite(v).all():
        raise FloatingPointError("contact solve produced non-finite velocities")
    return v, problem.impulses(v, vc), report


def _block_direction(problem: ContactProblem, v: np.ndarray, g: np.ndarray,
                     vc: np.ndarray | None = None) -> np.ndarray:
    return solve_search_direction(problem.hessian_blocks(v, vc), g)


def _dense_direction(problem: ContactProblem, v: np.ndarray, g: np.ndarray,
                     vc: np.ndarray | None = None) -> np.ndarray:
    h = problem.dense_hessian(v)
    return np.linalg.solve(h, -g.ravel()).reshape(-1, 3)


def quasi_newton_solve(problem: ContactProblem, params: SolverParams,
                       v0: np.ndarray | None = None):
    """Block-preconditioned solve; returns (v, contact impulses, report)."""
    return _minimize(problem, params, v0, _block_direction)


def dense_newton_oracle(problem: ContactProblem, params: SolverParams,
                        v0: np.ndarray | None = None):
    """Full-Hessian Newton reference; O((3nd)^3) per iteration, test use only."""
    return _minimize(problem, params, v0, _dense_direction)
