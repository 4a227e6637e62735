"""Damped Newton solver for the discrete second boundary value problem.

Unknowns are the nodal values of u plus the scalar c.  Rows of the square
augmented system are

    G(Du, D^2u) - t f(x, Du) - c     at non-boundary nodes,
    h(Du)                            at boundary nodes,
    (1/|Omega|) sum_i w_i u_i         (mean-zero normalization),

where h is the defining function of the target domain.  The system is
linearized exactly and solved by sparse LU; the outer loop continues in t
from the solvable problem t = 0 to t = 1.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from .errors import (
    ContinuationStalled,
    LinearSolveFailed,
    NewtonDiverged,
    NoAdmissibleSeed,
    NonFinite,
    NotConvex,
    NotSpacelike,
)
from .grid import Grid, GridFunction
from .problem import ProblemSpec, Variant, admissibility_report, lambda_bounds

log = logging.getLogger(__name__)

ROUNDOFF_FACTOR = 32.0


class AdmissibilityWarning(UserWarning):
    """The right-hand side fails the oscillation smallness test."""


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 50
    damping: float = 0.5
    min_step: float = 2.0**-20
    t_step_init: float = 0.25
    t_step_min: float = 2.0**-10
    spacelike_margin: float = 1e-6
    convexity_margin: float = 1e-8
    armijo: float = 1e-4

    def __post_init__(self):
        for name in ("newton_tol", "max_newton", "damping", "min_step", "t_step_init",
                     "t_step_min", "spacelike_margin", "convexity_margin", "armijo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"solver setting {name} must be positive")
        if self.newton_tol >= 1 or self.damping >= 1:
            raise ValueError("newton_tol and damping must be below 1")


@dataclass(frozen=True, eq=False)
class SolveState:
    u: GridFunction
    c: float
    t: float
    residual_norm: float = math.nan
    newton_iters: int = 0

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass(frozen=True)
class TraceEntry:
    t: float
    c: float
    newton_iters: int
    residual_norm: float
    min_obliqueness: float
    min_eig_hess: float
    c_bound: float


@dataclass
class ContinuationTrace:
    entries: list = field(default_factory=list)
    admissibility: object = None
    rejected_steps: int = 0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def t_values(self) -> np.ndarray:
        return np.array([e.t for e in self.entries])

    def log_lines(self) -> list[str]:
        lines = ["t\tc\titers\tresid\tmin_obliq\tmin_eig"]
        for e in self.entries:
            lines.append("\t".join([
                f"{e.t:.17g}", f"{e.c:.17g}", str(e.newton_iters), f"{e.residual_norm:.6e}",
                f"{e.min_obliqueness:.17g}", f"{e.min_eig_hess:.17g}",
            ]))
        return lines


class Discretization:
    """Residual and Jacobian of the augmented system on a fixed grid."""

    def __init__(self, problem: ProblemSpec, grid: Grid, cfg: SolverConfig | None = None):
        self.problem = problem
        self.grid = grid
        self.cfg = cfg or SolverConfig()
        N = grid.size
        self.N = N
        self.is_bdry = np.zeros(N, dtype=bool)
        self.is_bdry[grid.boundary] = True
        self.mean_row = grid.weights / grid.volume
        self._int_mask = (~self.is_bdry).astype(float)
        self._bdry_mask = self.is_bdry.astype(float)
        self._c_col = sp.csc_matrix(-self._int_mask[:, None])
        self._m_row = sp.csr_matrix(self.mean_row[None, :])

    def derivatives(self, u):
        return self.grid.gradient_of(u), self.grid.hessian_of(u)

    def check_margins(self, u):
        """Raise NotSpacelike / NotConvex if ``u`` violates the configured margins."""
        grad, hess = self.derivatives(u)
        if self.problem.variant is Variant.MINKOWSKI:
            geometry.lorentz_factor(grad, Variant.MINKOWSKI, self.cfg.spacelike_margin)
        lam = np.linalg.eigvalsh(hess[~self.is_bdry])[:, 0]
        worst = float(lam.min())
        if not worst > self.cfg.convexity_margin:
            raise NotConvex(f"min Hessian eigenvalue {worst:.3e} at or below "
                            f"{self.cfg.convexity_margin:g}")
        return grad, hess

    def residual(self, u, c, t):
        grad, hess = self.derivatives(u)
        return self._residual(u, c, t, grad, hess)

    def _residual(self, u, c, t, grad, hess):
        prob = self.problem
        x = self.grid.nodes
        G = geometry.operator_value(grad, hess, prob.variant, self.cfg.spacelike_margin)
        F = np.empty(self.N + 1)
        pde = G - t * prob.rhs.value(x, grad) - c
        bc = prob.target.defining.value(grad)
        F[:-1] = np.where(self.is_bdry, bc, pde)
        F[-1] = self.mean_row @ u
        if not np.all(np.isfinite(F)):
            raise NonFinite("non-finite residual")
        return F

    def jacobian(self, u, c, t):
        prob = self.problem
        g = self.grid
        grad, hess = self.derivatives(u)
        G_r, G_p = geometry.linearization(grad, hess, prob.variant, self.cfg.spacelike_margin)
        fp = prob.rhs.grad_p(g.nodes, grad)
        beta = prob.target.defining.gradient(grad)
        im, bm = self._int_mask, self._bdry_mask
        drift = G_p - t * fp
        J = (sp.diags(im * G_r[:, 0, 0]) @ g.H[0, 0]
             + sp.diags(2.0 * im * G_r[:, 0, 1]) @ g.H[0, 1]
             + sp.diags(im * G_r[:, 1, 1]) @ g.H[1, 1]
             + sp.diags(im * drift[:, 0] + bm * beta[:, 0]) @ g.D[0]
             + sp.diags(im * drift[:, 1] + bm * beta[:, 1]) @ g.D[1])
        return sp.bmat([[J, self._c_col], [self._m_row, None]], format="csc")

    def roundoff_floor(self, u, c, t) -> np.ndarray:
        """Per-row rounding bound of the residual evaluation.

        The pole-ring Hessian stencils carry weights of order 1/(s dtheta)^2,
        so near the pole rounding alone can exceed newton_tol on fine grids.
        The bound is ROUNDOFF_FACTOR * eps * sum_k |coef_k| (|A_k| |w|) with w the
        pole-shifted field and A_k ranging over the derivative operators.
        """
        g = self.grid
        prob = self.problem
        w = np.abs(u - u[0])
        grad, hess = self.derivatives(u)
        G_r, G_p = geometry.linearization(grad, hess, prob.variant, 0.0)
        drift = np.abs(G_p - t * prob.rhs.grad_p(g.nodes, grad))
        beta = np.abs(prob.target.defining.gradient(grad))
        im, bm = self._int_mask, self._bdry_mask
        acc = (np.abs(G_r[:, 0, 0]) * (abs(g.H[0, 0]) @ w)
               + 2.0 * np.abs(G_r[:, 0, 1]) * (abs(g.H[0, 1]) @ w)
               + np.abs(G_r[:, 1, 1]) * (abs(g.H[1, 1]) @ w))
        lin = (im * drift[:, 0] + bm * beta[:, 0]) * (abs(g.D[0]) @ w) \
            + (im * drift[:, 1] + bm * beta[:, 1]) * (abs(g.D[1]) @ w)
        out = np.zeros(self.N + 1)
        out[:-1] = ROUNDOFF_FACTOR * np.finfo(float).eps * (im * acc + lin + im * abs(c))
        return out

    def state(self, u, c, t, iters=0, residual_norm=None) -> SolveState:
        if residual_norm is None:
            residual_norm = float(np.max(np.abs(self.residual(u, c, t))))
        return SolveState(self.grid.function(u), float(c), float(t), residual_norm, iters)


def residual(state: SolveState, prob: ProblemSpec, cfg: SolverConfig | None = None):
    """Residual vector of length N + 1 for ``state``."""
    return Discretization(prob, state.grid, cfg).residual(state.u.values, state.c, state.t)


def jacobian(state: SolveState, prob: ProblemSpec, cfg: SolverConfig | None = None):
    """Sparse (N + 1) x (N + 1) Jacobian of the residual at ``state``."""
    return Discretization(prob, state.grid, cfg).jacobian(state.u.values, state.c, state.t)


def _factorize(J):
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise LinearSolveFailed(f"sparse LU failed: {exc}", smallest_pivot=0.0) from exc
    piv = np.abs(lu.U.diagonal())
    smallest = float(piv.min())
    if not smallest > 1e-14 * float(piv.max()):
        raise LinearSolveFailed(f"augmented matrix numerically singular "
                                f"(smallest pivot {smallest:.3e})", smallest_pivot=smallest)
    return lu


def newton_solve(state0: SolveState, prob: ProblemSpec, cfg: SolverConfig | None = None,
                 disc: Discretization | None = None) -> SolveState:
    """Damped Newton iteration from ``state0`` at fixed t.

    Step lengths 1, 1/2, 1/4, ... are tried; the first one keeping the
    spacelike and convexity margins and reducing the residual max-norm by
    the factor (1 - armijo * step) is accepted.
    """
    cfg = cfg or SolverConfig()
    disc = disc or Discretization(prob, state0.grid, cfg)
    t = state0.t
    u = state0.u.values.copy()
    c = float(state0.c)
    disc.check_margins(u)
    F = disc.residual(u, c, t)
    norm = float(np.max(np.abs(F)))
    for it in range(cfg.max_newton + 1):
        log.debug("t=%.6g newton %d residual %.3e", t, it, norm)
        if norm <= cfg.newton_tol:
            return disc.state(u, c, t, it, norm)
        if it == cfg.max_newton:
            break
        lu = _factorize(disc.jacobian(u, c, t))
        delta = -lu.solve(F)
        du, dc = delta[:-1], delta[-1]
        step = 1.0
        while step >= cfg.min_step:
            u_new = u + step * du
            c_new = c + step * dc
            try:
                disc.check_margins(u_new)
                F_new = disc.residual(u_new, c_new, t)
            except (NotSpacelike, NotConvex, NonFinite):
                step *= cfg.damping
                continue
            norm_new = float(np.max(np.abs(F_new)))
            if norm_new <= (1.0 - cfg.armijo * step) * norm:
                break
            step *= cfg.damping
        else:
            floor = disc.roundoff_floor(u, c, t)
            if np.all(np.abs(F) <= cfg.newton_tol + floor):
                log.debug("t=%.6g accepted at the rounding floor (residual %.3e)", t, norm)
                return disc.state(u, c, t, it, norm)
            raise NewtonDiverged(f"line search underflow at t={t:g} after {it} iterations "
                                 f"(residual {norm:.3e})")
        u, c, F, norm = u_new, c_new, F_new, norm_new
    raise NewtonDiverged(f"no convergence in {cfg.max_newton} iterations at t={t:g} "
                         f"(residual {norm:.3e})")


# ----------------------------------------------------------------------------
# seeds


def domain_moments(domain, m: int = 4096):
    """(volume, centroid, covariance) of a star-shaped planar domain."""
    theta = 2.0 * np.pi * np.arange(m) / m
    dt = 2.0 * np.pi / m
    rho = domain.radius(theta)
    omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    vol = float(np.sum(rho**2 / 2) * dt)
    first = np.sum((rho**3 / 3)[:, None] * omega, axis=0) * dt
    second = np.einsum("k,ki,kj->ij", rho**4 / 4, omega, omega) * dt
    mean = first / vol
    cov = second / vol - np.outer(mean, mean)
    return vol, domain.center + mean, cov


def _sqrtm_spd(M):
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(w)) @ V.T


def affine_fit(source, target):
    """(x0, p0, A): centroids and the symmetric positive definite A with
    A cov(source) A = cov(target) (the Gaussian transport map)."""
    if source.kind == "ball" and target.kind == "ball":
        A = target.params["radius"] / source.params["radius"] * np.eye(2)
        return source.center, target.center, A
    _, x0, S = domain_moments(source)
    _, p0, T = domain_moments(target)
    Sh = _sqrtm_spd(S)
    Shi = np.linalg.inv(Sh)
    A = Shi @ _sqrtm_spd(Sh @ T @ Sh) @ Shi
    return x0, p0, 0.5 * (A + A.T)


def initial_guess(prob: ProblemSpec, grid: Grid, perturbation: float = 0.0,
                  shrink: float = 0.9, t: float = 0.0) -> SolveState:
    """Convex quadratic seed whose gradient maps the source strictly into the target.

    u0 = p0.(x - x0) + (shrink/2) (x - x0)^T A (x - x0)
         + perturbation * (rho_t / R_s^3) |x - x0|^4 / 4

    where rho_t is the smallest target radius about p0 and R_s the largest
    source radius about x0, so the quartic term moves the gradient by at most
    perturbation * rho_t.
    """
    x0, p0, A = affine_fit(prob.source, prob.target)
    A = shrink * A
    theta = 2.0 * np.pi * np.arange(1024) / 1024
    R_s = float(np.max(np.linalg.norm(prob.source.boundary_param(theta) - x0, axis=-1)))
    rho_t = float(np.min(np.linalg.norm(prob.target.boundary_param(theta) - p0, axis=-1)))
    k4 = perturbation * rho_t / R_s**3

    def seed(x):
        d = x - x0
        r2 = np.sum(d * d, axis=-1)
        return d @ p0 + 0.5 * np.einsum("...i,ij,...j->...", d, A, d) + 0.25 * k4 * r2 * r2

    def seed_grad(x):
        d = x - x0
        r2 = np.sum(d * d, axis=-1)
        return p0 + d @ A + k4 * r2[..., None] * d

    xb = grid.nodes[grid.boundary]
    hb = prob.target.defining.value(seed_grad(xb))
    if not np.all(hb > 0.0):
        raise NoAdmissibleSeed(f"seed gradient leaves the target on the boundary "
                               f"(min h(Du0) = {float(hb.min()):.3e})")
    u0 = grid.mean_zero(seed(grid.nodes))
    grad, hess = grid.gradient_of(u0), grid.hessian_of(u0)
    G = geometry.operator_value(grad, hess, prob.variant)
    interior = grid.interior
    rhs = prob.rhs.value(grid.nodes, grad)
    c0 = float(np.mean((G - t * rhs)[interior]))
    return SolveState(grid.function(u0), c0, float(t))


# ----------------------------------------------------------------------------
# probes used by the continuation trace and the verification suite


def boundary_obliqueness(state: SolveState, prob: ProblemSpec) -> np.ndarray:
    """<Dh(Du(x)), nu(x)> at boundary nodes, nu the inward unit normal of the source."""
    g = state.grid
    grad = g.gradient_of(state.u.values)[g.boundary]
    beta = prob.target.defining.gradient(grad)
    return np.sum(beta * g.normals, axis=-1)


def interior_min_eig(state: SolveState) -> float:
    g = state.grid
    hess = g.hessian_of(state.u.values)[g.interior]
    return float(np.linalg.eigvalsh(hess)[:, 0].min())


def c_from_divergence(state: SolveState, prob: ProblemSpec) -> float:
    """c = (1/|Omega|) * boundary integral of Du.nu_out / v  -  (1/|Omega|) * integral of t f.

    The grid stores the inward normal; the outward one is its negative.
    """
    g = state.grid
    u = state.u.values
    grad = g.gradient_of(u)
    gb = grad[g.boundary]
    v = geometry.lorentz_factor(gb, prob.variant, margin=0.0)
    nu_out = -g.normals
    flux = float(np.sum(np.sum(gb * nu_out, axis=-1) / v * g.ds))
    source = state.t * g.integrate_values(prob.rhs.value(g.nodes, grad))
    return (flux - source) / g.volume


# ----------------------------------------------------------------------------
# continuation


def _probe(state, prob, fmax, lam2_geom):
    obl = boundary_obliqueness(state, prob)
    bound = lam2_geom + 3.0 * abs(state.t) * fmax
    return TraceEntry(state.t, state.c, state.newton_iters, state.residual_norm,
                      float(obl.min()), interior_min_eig(state), bound)


def continuation_solve(prob: ProblemSpec, grid: Grid, cfg: SolverConfig | None = None,
                       seed: SolveState | None = None, admissibility_samples: int = 256):
    """Solve t = 0, then march t to 1 with adaptive steps, warm-starting each stage.

    Returns ``(state, trace)``.  The step is halved whenever a stage fails
    and doubled (up to ``t_step_init``) after two consecutive stages that
    succeeded at their first attempt.  When f vanishes identically t is
    irrelevant and a single stage at t = 1 is solved.
    """
    cfg = cfg or SolverConfig()
    adm = admissibility_report(prob, max_samples=admissibility_samples)
    if not adm.osc_pass:
        warnings.warn(f"osc(f) = {adm.osc:.4g} exceeds the smallness threshold "
                      f"{adm.osc_threshold:.4g}; continuing", AdmissibilityWarning, stacklevel=2)
    fmax = adm.f_absmax
    lam2_geom = lambda_bounds(prob, 0.0)[1]
    trace = ContinuationTrace(admissibility=adm)
    disc = Discretization(prob, grid, cfg)

    state = seed or initial_guess(prob, grid)
    if prob.rhs.is_zero:
        state = newton_solve(replace(state, t=1.0), prob, cfg, disc)
        trace.entries.append(_probe(state, prob, fmax, lam2_geom))
        return state, trace

    state = newton_solve(replace(state, t=0.0), prob, cfg, disc)
    trace.entries.append(_probe(state, prob, fmax, lam2_geom))
    step = cfg.t_step_init
    clean = 0
    first_try = True
    while state.t < 1.0:
        t_next = min(1.0, state.t + step)
        try:
            new = newton_solve(replace(state, t=t_next), prob, cfg, disc)
        except (NewtonDiverged, LinearSolveFailed, NotSpacelike, NotConvex, NonFinite) as exc:
            trace.rejected_steps += 1
            step *= 0.5
            clean = 0
            first_try = False
            log.info("stage t=%.6g failed (%s); step -> %.3g", t_next, exc, step)
            if step < cfg.t_step_min:
                raise ContinuationStalled(f"t-step underflow at t={state.t:.6g}",
                                          last_state=state, trace=trace) from exc
            continue
        state = new
        trace.entries.append(_probe(state, prob, fmax, lam2_geom))
        clean = clean + 1 if first_try else 0
        first_try = True
        if clean >= 2:
            step = min(2.0 * step, cfg.t_step_init)
            clean = 0
    return state, trace
