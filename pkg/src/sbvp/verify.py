"""Invariant and estimate suite for converged solutions.

Every check yields a ReportEntry.  Quantities with an explicit formula
(the two mean-curvature bounds, the oscillation threshold, identities of the
pointwise geometry) get hard verdicts; constants that are only known to exist
are reported as measured values with verdict ``heuristic``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dual, geometry
from .errors import NotConvex, NotSpacelike, ObliquenessFailure
from .grid import Grid
from .problem import ProblemSpec, Variant, admissibility_report, lambda_bounds
from .solver import (
    SolveState,
    SolverConfig,
    boundary_obliqueness,
    c_from_divergence,
    continuation_solve,
    initial_guess,
)

PASS, FAIL, HEURISTIC = "pass", "fail", "heuristic"


@dataclass(frozen=True)
class ReportEntry:
    name: str
    measured: float
    bound: float
    tol: float
    verdict: str

    def to_dict(self) -> dict:
        return {"name": self.name, "measured": _num(self.measured), "bound": _num(self.bound),
                "tol": _num(self.tol), "verdict": self.verdict}


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class Report:
    entries: list = field(default_factory=list)
    fingerprint: str = ""
    grid: dict = field(default_factory=dict)

    def add(self, entry: ReportEntry) -> None:
        self.entries.append(entry)

    @property
    def passed(self) -> bool:
        return all(e.verdict != FAIL for e in self.entries)

    def failures(self) -> list[ReportEntry]:
        return [e for e in self.entries if e.verdict == FAIL]

    def __getitem__(self, name) -> ReportEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries],
                "fingerprint": self.fingerprint, "grid": dict(self.grid)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def _entry(name, measured, bound, tol, ok, heuristic=False) -> ReportEntry:
    if heuristic:
        verdict = HEURISTIC
    else:
        verdict = PASS if bool(ok) else FAIL
    return ReportEntry(name, float(measured), float(bound), float(tol), verdict)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in np.asarray(obj, dtype=float).ravel().tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def problem_fingerprint(prob: ProblemSpec, grid: Grid | None = None) -> str:
    desc = {
        "variant": prob.variant.value,
        "source": {"kind": prob.source.kind, "params": _jsonable(prob.source.params)},
        "target": {"kind": prob.target.kind, "params": _jsonable(prob.target.params)},
        "rhs": {"name": prob.rhs.name, "params": _jsonable(prob.rhs.params)},
    }
    if grid is not None:
        desc["grid"] = grid_info(grid)
    blob = json.dumps(desc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def grid_info(grid: Grid) -> dict:
    return {"n_r": grid.n_r, "n_t": grid.n_t, "stretch": grid.stretch,
            "theta_order": grid.theta_order, "h": grid.h}


# ----------------------------------------------------------------------------
# state recovery


def state_from_field(grid: Grid, u, prob: ProblemSpec, t: float = 1.0) -> SolveState:
    """Rebuild a SolveState from nodal values alone.

    c is the quadrature-weighted mean over non-boundary nodes of G - t f,
    which is the least-squares choice for the PDE rows.
    """
    u = np.asarray(u, dtype=float)
    grad, hess = grid.gradient_of(u), grid.hessian_of(u)
    mask = np.ones(grid.size, dtype=bool)
    mask[grid.boundary] = False
    if prob.variant is Variant.MINKOWSKI and np.max(np.sum(grad * grad, axis=-1)) >= 1.0:
        c = math.nan
    else:
        G = geometry.operator_value(grad, hess, prob.variant, margin=0.0)
        w = grid.weights[mask]
        c = float(np.dot(w, (G - t * prob.rhs.value(grid.nodes, grad))[mask]) / w.sum())
    return SolveState(grid.function(u), c, float(t))


# ----------------------------------------------------------------------------
# individual checks


def _t_fmax(prob: ProblemSpec, t: float, fmax: float | None = None) -> float:
    if fmax is None:
        fmax = admissibility_report(prob, max_samples=256).f_absmax
    return abs(t) * fmax


def bounds_lambda(prob: ProblemSpec, state: SolveState, fmax: float | None = None):
    """(Lambda_1, Lambda_2, min H, max H) over all nodes, the bounds from measures only."""
    g = state.grid
    u = state.u.values
    H = geometry.operator_value(g.gradient_of(u), g.hessian_of(u), prob.variant, margin=0.0)
    lam1, lam2 = lambda_bounds(prob, _t_fmax(prob, state.t, fmax))
    return lam1, lam2, float(H.min()), float(H.max())


def obliqueness_min(state: SolveState, prob: ProblemSpec) -> float:
    """min over boundary nodes of <Dh(Du), nu> (inward nu); raises ObliquenessFailure if <= 0."""
    val = float(boundary_obliqueness(state, prob).min())
    if not val > 0.0:
        raise ObliquenessFailure(f"boundary operator not oblique: min <beta, nu> = {val:.3e}")
    return val


def hessian_spectrum(state: SolveState):
    """(min eigenvalue, max eigenvalue, per-node spectra) of D^2u over all nodes."""
    g = state.grid
    spectra = np.linalg.eigvalsh(g.hessian_of(state.u.values))
    return float(spectra[:, 0].min()), float(spectra[:, -1].max()), spectra


def interior_to_boundary_check(samples: dual.DualSample) -> ReportEntry:
    """sup over interior samples of |D^2u~| against twice its boundary maximum (heuristic)."""
    norms = np.linalg.norm(samples.hess_dual, ord=2, axis=(-2, -1))
    inner = float(norms[~samples.boundary].max())
    outer = float(norms[samples.boundary].max())
    return _entry("interior_to_boundary_dual_hessian", inner, 2.0 * outer,
                  max(0.0, inner - 2.0 * outer), True, heuristic=True)


def gradient_image_area(state: SolveState, prob: ProblemSpec, rel_tol: float = 0.02) -> ReportEntry:
    """Integral of det D^2u over the source against the target volume."""
    g = state.grid
    H = g.hessian_of(state.u.values)
    integral = g.integrate_values(np.linalg.det(H))
    vol = prob.target.volume
    rel = abs(integral - vol) / vol
    return _entry("gradient_image_area", integral, vol, rel_tol, rel <= rel_tol)


def uniqueness_check(prob: ProblemSpec, grid: Grid, cfg: SolverConfig | None = None,
                     perturbation: float = 0.05):
    """Solve from the quadratic seed and from a perturbed one; returns (entries, s1, s2)."""
    s1, _ = continuation_solve(prob, grid, cfg, seed=initial_guess(prob, grid))
    s2, _ = continuation_solve(prob, grid, cfg,
                               seed=initial_guess(prob, grid, perturbation=perturbation))
    du = float(np.max(np.abs(grid.mean_zero(s1.u.values) - grid.mean_zero(s2.u.values))))
    dc = abs(s1.c - s2.c)
    entries = [
        _entry("uniqueness_u", du, 1e-6, 1e-6, du <= 1e-6),
        _entry("uniqueness_c", dc, 1e-8, 1e-8, dc <= 1e-8),
    ]
    return entries, s1, s2


def _linearization_fd(grad, hess, variant, step=1e-5):
    """Worst relative error of (G_r, G_p) against centered differences of operator_value."""
    G_r, G_p = geometry.linearization(grad, hess, variant, margin=0.0)
    n = grad.shape[-1]
    worst = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fd = (geometry.operator_value(grad + e, hess, variant, 0.0)
              - geometry.operator_value(grad - e, hess, variant, 0.0)) / (2 * step)
        scale = np.maximum(np.linalg.norm(G_p, axis=-1), 1.0)
        worst = max(worst, float(np.max(np.abs(fd - G_p[:, i]) / scale)))
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = step
            fd = (geometry.operator_value(grad, hess + E, variant, 0.0)
                  - geometry.operator_value(grad, hess - E, variant, 0.0)) / (2 * step)
            exact = G_r[:, i, j] * (2.0 if i != j else 1.0)
            scale = np.maximum(np.linalg.norm(G_r, axis=(-2, -1)), 1.0)
            worst = max(worst, float(np.max(np.abs(fd - exact) / scale)))
    return worst


def _node_subset(N: int, m: int = 256) -> np.ndarray:
    return np.unique(np.linspace(0, N - 1, min(N, m)).astype(int))


# ----------------------------------------------------------------------------
# the suite


def full_suite(state: SolveState, prob: ProblemSpec, cfg: SolverConfig | None = None,
               fmax: float | None = None) -> Report:
    """All checks on ``state``; overall pass iff no hard entry fails."""
    cfg = cfg or SolverConfig()
    g = state.grid
    u = state.u.values
    t = state.t
    n = prob.dimension
    report = Report(fingerprint=problem_fingerprint(prob, g), grid=grid_info(g))
    add = report.add
    tol10 = 10.0 * cfg.newton_tol
    adm = admissibility_report(prob, max_samples=256)
    if fmax is None:
        fmax = adm.f_absmax
    tf = abs(t) * fmax

    grad = g.gradient_of(u)
    hess = g.hessian_of(u)
    bmask = np.zeros(g.size, dtype=bool)
    bmask[g.boundary] = True
    imask = ~bmask

    # boundary condition and normalization do not need the geometry
    hb = prob.target.defining.value(grad[g.boundary])
    add(_entry("boundary_condition", np.max(np.abs(hb)), 0.0, tol10, np.max(np.abs(hb)) <= tol10))
    mean = g.integrate_values(u) / g.volume
    add(_entry("mean_zero", abs(mean), 0.0, 1e-10, abs(mean) <= 1e-10))

    speed = float(np.sqrt(np.max(np.sum(grad * grad, axis=-1))))
    if prob.variant is Variant.MINKOWSKI:
        bound = 1.0 - cfg.spacelike_margin
        add(_entry("spacelike", speed, bound, 0.0, speed <= bound))
        if not speed < 1.0:
            return report
    else:
        add(_entry("spacelike", speed, math.inf, 0.0, True, heuristic=True))

    gp = geometry.geom_at(grad, hess, prob.variant, margin=0.0)
    H = gp.G_val

    lam1, lam2 = lambda_bounds(prob, tf)
    slack = 10.0 * g.h**2
    add(_entry("lambda1_lower", H.min(), lam1, 0.0, H.min() >= lam1))
    add(_entry("lambda2_upper", H.max(), lam2, slack, H.max() <= lam2 + slack))
    c_bound = lambda_bounds(prob, 0.0)[1] + 3.0 * tf
    # balls in the equality case (hyperboloid, sphere) sit exactly on this bound
    add(_entry("c_bound", abs(state.c), c_bound, slack, abs(state.c) <= c_bound + slack))

    add(_entry("osc_smallness", adm.osc, adm.osc_threshold, 0.0, adm.osc_pass))

    obl = boundary_obliqueness(state, prob)
    add(_entry("obliqueness_min", obl.min(), 0.0, 0.0, obl.min() > 0.0))
    beta_n = prob.target.defining.gradient(grad[g.boundary])
    beta_n /= np.linalg.norm(beta_n, axis=-1, keepdims=True)
    obl_n = np.sum(beta_n * g.normals, axis=-1)
    add(_entry("obliqueness_normalized_min", obl_n.min(), 0.0, 0.0, obl_n.min() > 0.0,
               heuristic=True))

    lam_int = np.linalg.eigvalsh(hess[imask])
    add(_entry("hessian_min_eig", lam_int[:, 0].min(), 0.0, 0.0, lam_int[:, 0].min() > 0.0))
    lo, hi, _ = hessian_spectrum(state)
    add(_entry("hessian_c36", max(hi, 1.0 / lo) if lo > 0 else math.inf, math.inf, 0.0, True,
               heuristic=True))

    pde = H - t * prob.rhs.value(g.nodes, grad) - state.c
    add(_entry("pde_residual", np.max(np.abs(pde[imask])), 0.0, tol10,
               np.max(np.abs(pde[imask])) <= tol10))

    c_div = c_from_divergence(state, prob)
    add(_entry("c_divergence", c_div, state.c, 1e-2, abs(c_div - state.c) <= 1e-2))
    add(gradient_image_area(state, prob))

    # pointwise algebra
    T_G, T, cauchy = geometry.trace_bounds(gp)
    v = gp.v[:, None, None]
    F = v * (gp.b @ gp.G_r @ gp.b)
    tr_err = float(np.max(np.abs(np.trace(F, axis1=-2, axis2=-1) - n)))
    add(_entry("trace_identity", tr_err, 0.0, 1e-12, tr_err <= 1e-12))
    ksum_err = float(np.max(np.abs(gp.kappa.sum(-1) - H) / np.maximum(1.0, np.abs(H))))
    add(_entry("curvature_sum", ksum_err, 0.0, 1e-12, ksum_err <= 1e-12))
    prod = np.prod(gp.kappa, axis=-1)
    ref = geometry.curvature_product(gp)
    det_err = float(np.max(np.abs(prod - ref) / np.maximum(1.0, np.abs(ref))))
    add(_entry("determinant_identity", det_err, 0.0, 1e-10, det_err <= 1e-10))
    eye = np.eye(n)
    b_err = float(max(np.max(np.abs(gp.b @ gp.b_inv - eye)),
                      np.max(np.abs(gp.b_inv @ gp.b_inv - gp.g_inv) / np.maximum(1.0, np.abs(gp.g_inv)))))
    add(_entry("b_identities", b_err, 0.0, 1e-12, b_err <= 1e-12))
    s = geometry.s_matrix(grad, prob.variant, margin=0.0)
    eig_s = np.linalg.eigvalsh(s)
    vv = gp.v
    lo_s = np.minimum(1.0 / vv, 1.0 / vv**3)
    hi_s = np.maximum(1.0 / vv, 1.0 / vv**3)
    s_viol = float(max(np.max(lo_s - eig_s[:, 0]), np.max(eig_s[:, -1] - hi_s), 0.0)
                   / max(1.0, float(hi_s.max())))
    add(_entry("s_bracket", s_viol, 0.0, 1e-12, s_viol <= 1e-12))
    add(_entry("cauchy_bracket", float(np.sum(~cauchy)), 0.0, 0.0, bool(np.all(cauchy))))
    add(_entry("trace_ratio_max", float(np.max(T_G / T)), float(np.min(T_G / T)), 0.0, True,
               heuristic=True))
    sub = _node_subset(g.size)
    lin_err = _linearization_fd(grad[sub], hess[sub], prob.variant)
    add(_entry("linearization_fd", lin_err, 0.0, 1e-6, lin_err <= 1e-6))

    # dual side
    label = dual.dual_label(prob.variant)
    try:
        samples = dual.legendre_samples(state)
    except NotConvex:
        add(_entry(f"legendre_involution[{label}]", math.nan, 0.0, 1e-10, False))
        return report
    inv_err = max(samples.involution_error(), samples.inverse_error())
    add(_entry(f"legendre_involution[{label}]", inv_err, 0.0, 1e-10, inv_err <= 1e-10))
    try:
        Gt = dual.dual_operator(samples.y, samples.hess_dual, prob.variant)
        Gs = dual.dual_operator_s(samples.y, samples.hess_dual, prob.variant)
        r_dual = dual.dual_residual(samples, prob, state.c, t)
    except NotSpacelike:
        add(_entry(f"dual_identity[{label}]", math.nan, 0.0, 1e-12, False))
        return report
    scale = np.maximum(1.0, np.abs(H))
    id_err = float(max(np.max(np.abs(Gt + H) / scale), np.max(np.abs(Gs + H) / scale)))
    add(_entry(f"dual_identity[{label}]", id_err, 0.0, 1e-12, id_err <= 1e-12))
    rd_int = float(np.max(np.abs(r_dual[imask])))
    add(_entry(f"dual_residual[{label}]", rd_int, 0.0, tol10, rd_int <= tol10))
    rd_bdry = float(np.max(np.abs(r_dual[bmask])))
    add(_entry(f"dual_residual_boundary[{label}]", rd_bdry, rd_bdry / g.h**2, 0.0, True,
               heuristic=True))
    img = dual.dual_gradient_image_check(samples, prob)
    add(_entry(f"dual_boundary_image[{label}]", img.boundary_h_max, 0.0, 1e-8,
               img.boundary_h_max <= 1e-8))
    add(_entry(f"dual_interior_image[{label}]", img.interior_h_min, 0.0, 0.0,
               img.interior_h_min > 0.0))
    add(_entry(f"dual_hull_area[{label}]", img.x_hull_area, img.source_volume, 0.02,
               img.x_area_rel <= 0.02))
    add(_entry("gradient_hull_area", img.y_hull_area, img.target_volume, 0.02,
               img.y_area_rel <= 0.02))
    add(_entry("monotone_map", img.min_monotone, 0.0, 0.0, img.min_monotone >= 0.0))
    add(interior_to_boundary_check(samples))

    # smallness tests that involve an existence constant, with a measured proxy
    lam6 = float(np.min(T_G))
    adm6 = admissibility_report(prob, max_samples=256, lambda6=lam6, lambda6_source="solved-grid")
    add(_entry("dxf_smallness", adm6.sup_dxf, adm6.dxf_bound, 0.0, adm6.dxf_pass, heuristic=True))
    add(_entry("dxpf_smallness", adm6.sup_dxpf, adm6.dxpf_bound, 0.0, adm6.dxpf_pass,
               heuristic=True))
    return report
