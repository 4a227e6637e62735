"""Source/target domains, right-hand sides and admissibility measurements.

Domains are described by analytic defining functions ``h`` with ``h > 0``
inside, ``h = 0`` on the boundary and a uniformly negative definite Hessian.
All callables are vectorized over leading axes: points have shape ``(..., n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DegenerateGradient, InvalidProblem, NonConcave

__all__ = [
    "Variant",
    "DefiningFunction",
    "DomainSpec",
    "RhsFunction",
    "ProblemSpec",
    "AdmissibilityReport",
    "ball_domain",
    "ellipse_domain",
    "superellipse_domain",
    "zero_rhs",
    "constant_rhs",
    "affine_rhs",
    "quadratic_product_rhs",
    "sample_domain",
    "theta_estimate",
    "theta_from_points",
    "normalize_defining",
    "measures",
    "lambda_bounds",
    "admissibility_report",
]


class Variant(str, Enum):
    MINKOWSKI = "minkowski"
    EUCLIDEAN = "euclidean"

    @property
    def sign(self) -> int:
        """+1 for the Lorentzian metric, -1 for the Euclidean one."""
        return 1 if self is Variant.MINKOWSKI else -1


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class DefiningFunction:
    """A scaled analytic defining function ``scale * h_raw``."""

    raw_value: Callable[[np.ndarray], np.ndarray]
    raw_gradient: Callable[[np.ndarray], np.ndarray]
    raw_hessian: Callable[[np.ndarray], np.ndarray]
    interior_point: np.ndarray
    scale: float = 1.0
    normalization_residual: float | None = None

    def value(self, p):
        return self.scale * self.raw_value(np.asarray(p, dtype=float))

    def gradient(self, p):
        return self.scale * self.raw_gradient(np.asarray(p, dtype=float))

    def hessian(self, p):
        return self.scale * self.raw_hessian(np.asarray(p, dtype=float))

    def scaled(self, factor: float) -> "DefiningFunction":
        return replace(self, scale=self.scale * factor)

    def rotated(self, angle: float) -> "DefiningFunction":
        """The defining function of the domain rotated by ``angle`` about the origin (n=2)."""
        rot = _rotation(angle)

        def val(p):
            return self.raw_value(p @ rot)

        def grad(p):
            return self.raw_gradient(p @ rot) @ rot.T

        def hess(p):
            return rot @ self.raw_hessian(p @ rot) @ rot.T

        return replace(
            self,
            raw_value=val,
            raw_gradient=grad,
            raw_hessian=hess,
            interior_point=rot @ np.asarray(self.interior_point),
        )


@dataclass(frozen=True)
class DomainSpec:
    """A bounded uniformly convex domain, star-shaped about ``center``.

    ``radius`` maps an angle to the boundary distance along the ray from
    ``center`` (two-dimensional domains only; ``None`` for n > 2 balls).
    """

    dimension: int
    defining: DefiningFunction
    kind: str
    params: dict = field(default_factory=dict)
    radius: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.defining.interior_point, dtype=float)

    def boundary_param(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        rho = self.radius(theta)
        return self.center + rho[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def radius_derivative(self, theta) -> np.ndarray:
        """d rho / d theta from implicit differentiation of h(center + rho*omega) = 0."""
        theta = np.asarray(theta, dtype=float)
        rho = self.radius(theta)
        omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        omega_perp = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        g = self.defining.gradient(self.center + rho[..., None] * omega)
        return -rho * np.sum(g * omega_perp, axis=-1) / np.sum(g * omega, axis=-1)

    @cached_property
    def measures(self) -> tuple[float, float]:
        return measures(self)

    @property
    def volume(self) -> float:
        return self.measures[0]

    @property
    def boundary_measure(self) -> float:
        return self.measures[1]

    def boundary_samples(self, m: int = 4096) -> np.ndarray:
        if self.dimension == 2:
            return self.boundary_param(2.0 * np.pi * np.arange(m) / m)
        if self.kind != "ball":
            raise NotImplementedError("boundary sampling for n > 2 is limited to balls")
        dirs = _sphere_directions(self.dimension, m)
        return self.center + self.params["radius"] * dirs


def _sphere_directions(n: int, m: int) -> np.ndarray:
    k = max(2, int(round(m ** (1.0 / n))) + 1)
    axes = np.linspace(-1.0, 1.0, k)
    pts = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    norms = np.linalg.norm(pts, axis=-1)
    pts = pts[norms > 1e-12]
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


# ----------------------------------------------------------------------------
# domain families


def ball_domain(radius: float = 1.0, center=None, n: int = 2) -> DomainSpec:
    """Ball with h(p) = (R^2 - |p - p0|^2) / (2R); |Dh| = 1 on the boundary exactly."""
    if radius <= 0:
        raise InvalidProblem(f"ball radius must be positive, got {radius}")
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if c.shape != (n,):
        raise InvalidProblem(f"ball center must have {n} components")
    R = float(radius)

    def val(p):
        d = p - c
        return (R * R - np.sum(d * d, axis=-1)) / (2.0 * R)

    def grad(p):
        return -(p - c) / R

    def hess(p):
        return np.broadcast_to(-np.eye(n) / R, p.shape[:-1] + (n, n)).copy()

    d = DefiningFunction(val, grad, hess, c)
    rad = (lambda theta: np.full(np.shape(theta), R)) if n == 2 else None
    return DomainSpec(n, d, "ball", {"radius": R, "center": c.tolist()}, rad)


def _quartic_family(a, b, eps, center, angle):
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    rot = _rotation(angle)
    inv2 = np.array([1.0 / a**2, 1.0 / b**2])
    inv4 = inv2**2

    def local(p):
        return (p - c) @ rot

    def val(p):
        q = local(p)
        return 1.0 - np.sum(inv2 * q * q, axis=-1) - eps * np.sum(inv4 * q**4, axis=-1)

    def grad(p):
        q = local(p)
        gq = -2.0 * inv2 * q - 4.0 * eps * inv4 * q**3
        return gq @ rot.T

    def hess(p):
        q = local(p)
        diag = -2.0 * inv2 - 12.0 * eps * inv4 * q * q
        hq = np.zeros(q.shape[:-1] + (2, 2))
        hq[..., 0, 0] = diag[..., 0]
        hq[..., 1, 1] = diag[..., 1]
        return rot @ hq @ rot.T

    def radius(theta):
        psi = np.asarray(theta, dtype=float) - angle
        cs, sn = np.cos(psi), np.sin(psi)
        A = cs**2 * inv2[0] + sn**2 * inv2[1]
        B = cs**4 * inv4[0] + sn**4 * inv4[1]
        return np.sqrt(2.0 / (A + np.sqrt(A * A + 4.0 * eps * B)))

    return DefiningFunction(val, grad, hess, c), radius


def ellipse_domain(a: float, b: float, center=None, angle: float = 0.0) -> DomainSpec:
    """Ellipse with semi-axes a (along ``angle``) and b.

    h = s (1 - q1^2/a^2 - q2^2/b^2) with s = ab/(a+b), which balances the
    boundary gradient so that min|Dh| + max|Dh| = 2.
    """
    if a <= 0 or b <= 0:
        raise InvalidProblem("ellipse semi-axes must be positive")
    d, rad = _quartic_family(a, b, 0.0, center, angle)
    d = d.scaled(a * b / (a + b))
    d = replace(d, normalization_residual=abs(a - b) / (a + b))
    c = d.interior_point
    params = {"a": float(a), "b": float(b), "center": list(map(float, c)), "angle": float(angle)}
    return DomainSpec(2, d, "ellipse", params, rad)


def superellipse_domain(
    a: float, b: float, eps: float = 0.5, center=None, angle: float = 0.0
) -> DomainSpec:
    """Rounded-rectangle domain 1 - q1^2/a^2 - q2^2/b^2 - eps (q1^4/a^4 + q2^4/b^4) > 0.

    The quartic term flattens the sides while the quadratic term keeps the
    Hessian uniformly negative definite.
    """
    if a <= 0 or b <= 0 or eps < 0:
        raise InvalidProblem("superellipse needs a, b > 0 and eps >= 0")
    d, rad = _quartic_family(a, b, eps, center, angle)
    c = d.interior_point
    params = {"a": float(a), "b": float(b), "eps": float(eps), "center": list(map(float, c)),
              "angle": float(angle)}
    dom = DomainSpec(2, d, "superellipse", params, rad)
    psi = angle + 2.0 * np.pi * np.arange(4096) / 4096
    d = normalize_defining(d, dom.boundary_param(psi))
    return replace(dom, defining=d)


# ----------------------------------------------------------------------------
# right-hand sides


@dataclass(frozen=True)
class RhsFunction:
    """f(x, p) with analytic first and second derivatives."""

    value: Callable
    grad_x: Callable
    grad_p: Callable
    hess_xx: Callable
    hess_xp: Callable
    hess_pp: Callable
    name: str
    params: dict = field(default_factory=dict)
    concave_in_x: bool = True
    is_zero: bool = False


def _shape(x, p):
    return np.broadcast_shapes(np.shape(x), np.shape(p))


def constant_rhs(value: float, n: int = 2) -> RhsFunction:
    value = float(value)

    def val(x, p):
        return np.full(_shape(x, p)[:-1], value)

    def zero_vec(x, p):
        return np.zeros(_shape(x, p))

    def zero_mat(x, p):
        return np.zeros(_shape(x, p) + (n,))

    return RhsFunction(val, zero_vec, zero_vec, zero_mat, zero_mat, zero_mat,
                       "constant", {"value": value}, True, value == 0.0)


def zero_rhs(n: int = 2) -> RhsFunction:
    return replace(constant_rhs(0.0, n), name="zero", params={})


def affine_rhs(kappa, offset: float = 0.0, iota=None) -> RhsFunction:
    """f = kappa.x + iota.p + offset."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.size
    iota_a = np.zeros(n) if iota is None else np.asarray(iota, dtype=float)
    offset = float(offset)

    def val(x, p):
        x, p = np.broadcast_arrays(x, p)
        return x @ kappa + p @ iota_a + offset

    def gx(x, p):
        return np.broadcast_to(kappa, _shape(x, p)).copy()

    def gp(x, p):
        return np.broadcast_to(iota_a, _shape(x, p)).copy()

    def zero_mat(x, p):
        return np.zeros(_shape(x, p) + (n,))

    params = {"kappa": kappa.tolist(), "offset": offset}
    if iota is not None:
        params["iota"] = iota_a.tolist()
    is_zero = not kappa.any() and not iota_a.any() and offset == 0.0
    return RhsFunction(val, gx, gp, zero_mat, zero_mat, zero_mat, "affine", params, True, is_zero)


def quadratic_product_rhs(eps: float, alpha: float = -0.25, beta: float = 0.25,
                          center=None, n: int = 2) -> RhsFunction:
    """f = eps * alpha |x - x0|^2 * (1 + beta |p|^2); concave in x iff eps*alpha <= 0."""
    eps, alpha, beta = float(eps), float(alpha), float(beta)
    x0 = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    k = eps * alpha
    eye = np.eye(n)

    def val(x, p):
        d = x - x0
        return k * np.sum(d * d, axis=-1) * (1.0 + beta * np.sum(p * p, axis=-1))

    def gx(x, p):
        d = x - x0
        w = 1.0 + beta * np.sum(p * p, axis=-1)
        return np.broadcast_to(2.0 * k * d * w[..., None], _shape(x, p)).copy()

    def gp(x, p):
        d = x - x0
        r2 = np.sum(d * d, axis=-1)
        return np.broadcast_to(2.0 * k * beta * r2[..., None] * p, _shape(x, p)).copy()

    def hxx(x, p):
        w = 1.0 + beta * np.sum(np.broadcast_to(p, _shape(x, p)) ** 2, axis=-1)
        return 2.0 * k * w[..., None, None] * eye

    def hxp(x, p):
        d, pp = np.broadcast_arrays(x - x0, p)
        return 4.0 * k * beta * d[..., :, None] * pp[..., None, :]

    def hpp(x, p):
        d = np.broadcast_to(x - x0, _shape(x, p))
        return 2.0 * k * beta * np.sum(d * d, axis=-1)[..., None, None] * eye

    params = {"eps": eps, "alpha": alpha, "beta": beta, "center": x0.tolist()}
    return RhsFunction(val, gx, gp, hxx, hxp, hpp, "quadratic_product", params,
                       k <= 0.0, k == 0.0)


# ----------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class ProblemSpec:
    source: DomainSpec
    target: DomainSpec
    rhs: RhsFunction
    variant: Variant = Variant.MINKOWSKI
    margin: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.source.dimension != self.target.dimension:
            raise InvalidProblem("source and target dimensions differ")
        if self.variant is Variant.MINKOWSKI:
            reach = target_reach(self.target)
            if reach > 1.0 - self.margin:
                raise InvalidProblem(
                    "Minkowski variant requires the target to lie compactly inside the unit "
                    f"ball (Ω̃ ⊂⊂ B₁(0)); max |y| over the target closure is {reach:.6g}, "
                    f"margin {self.margin:g}"
                )

    @property
    def dimension(self) -> int:
        return self.source.dimension


def target_reach(target: DomainSpec) -> float:
    """max |y| over the closure of the target."""
    if target.kind == "ball":
        return float(np.linalg.norm(target.center) + target.params["radius"])
    return float(np.max(np.linalg.norm(target.boundary_samples(8192), axis=-1)))


# ----------------------------------------------------------------------------
# operations


def sample_domain(domain: DomainSpec, n_samples: int = 10_000) -> np.ndarray:
    """Deterministic samples of the closed domain, including the boundary and center."""
    n = domain.dimension
    if n == 2:
        m_r = max(2, int(math.sqrt(n_samples / math.pi)))
        m_t = max(4, n_samples // m_r)
        r = np.sqrt(np.linspace(0.0, 1.0, m_r))
        theta = 2.0 * np.pi * np.arange(m_t) / m_t
        rho = domain.radius(theta)
        omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = domain.center + (r[:, None, None] * rho[None, :, None]) * omega[None, :, :]
        return pts.reshape(-1, 2)
    if domain.kind != "ball":
        raise NotImplementedError("sampling for n > 2 is limited to balls")
    R = domain.params["radius"]
    k = max(3, int(round(n_samples ** (1.0 / n))))
    axes = np.linspace(-R, R, k)
    pts = np.stack(np.meshgrid(*([axes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = pts[np.linalg.norm(pts, axis=-1) <= R]
    return np.concatenate([domain.center + pts, domain.boundary_samples(n_samples // 4)])


def theta_from_points(d: DefiningFunction, points: np.ndarray) -> float:
    lam = np.linalg.eigvalsh(d.hessian(points))[..., -1]
    worst = float(np.max(lam))
    if worst >= 0.0:
        raise NonConcave(f"defining function Hessian has eigenvalue {worst:.3e} >= 0")
    return -worst


def theta_estimate(domain: DomainSpec, n_samples: int = 10_000) -> float:
    """Uniform concavity modulus: -max over sampled closed-domain points of lambda_max(D^2 h)."""
    return theta_from_points(domain.defining, sample_domain(domain, n_samples))


def normalize_defining(d: DefiningFunction, boundary_samples: np.ndarray,
                       floor: float = 1e-8) -> DefiningFunction:
    """Globally rescale ``d`` so |Dh| straddles 1 on the boundary.

    The factor 2 / (min|Dh| + max|Dh|) makes |Dh| = 1 exactly when the
    boundary gradient norm is constant; otherwise the remaining deviation is
    stored in ``normalization_residual``.
    """
    norms = np.linalg.norm(d.gradient(boundary_samples), axis=-1)
    lo, hi = float(norms.min()), float(norms.max())
    if lo < floor:
        raise DegenerateGradient(f"|Dh| = {lo:.3e} below floor {floor:.1e} on the boundary")
    factor = 2.0 / (lo + hi)
    if abs(factor - 1.0) <= 1e-14:
        factor = 1.0
    residual = float(np.max(np.abs(factor * norms - 1.0)))
    return replace(d.scaled(factor), normalization_residual=residual)


def measures(domain: DomainSpec, n_nodes: int = 4096) -> tuple[float, float]:
    """(volume, boundary measure); periodic trapezoid rule for 2-D star-shaped domains."""
    n = domain.dimension
    if n == 2:
        theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
        dt = 2.0 * np.pi / n_nodes
        rho = domain.radius(theta)
        drho = domain.radius_derivative(theta)
        volume = float(np.sum(0.5 * rho * rho) * dt)
        perimeter = float(np.sum(np.sqrt(rho * rho + drho * drho)) * dt)
        return volume, perimeter
    if domain.kind != "ball":
        raise NotImplementedError("measures for n > 2 are limited to balls")
    R = domain.params["radius"]
    volume = math.pi ** (n / 2) / math.gamma(n / 2 + 1) * R**n
    return volume, n * volume / R


def _boundary_slope_max(problem: ProblemSpec) -> float:
    """max over the target boundary of |y| / sqrt(1 -/+ |y|^2)."""
    e = problem.variant.sign
    if problem.target.kind == "ball":
        r = np.array([target_reach(problem.target)])
    else:
        r = np.linalg.norm(problem.target.boundary_samples(8192), axis=-1)
    return float(np.max(r / np.sqrt(1.0 - e * r * r)))


def lambda_bounds(problem: ProblemSpec, fmax: float) -> tuple[float, float]:
    """Lower and upper bounds for the mean curvature of a solution.

    lower = (n/2) (|target| / |source|)^(1/n)
    upper = (|d source| / |source|) * max_{y in d target} |y|/sqrt(1-|y|^2) + 2 max|f|
    """
    n = problem.dimension
    vol_s, per_s = problem.source.measures
    vol_t, _ = problem.target.measures
    lower = 0.5 * n * (vol_t / vol_s) ** (1.0 / n)
    upper = per_s / vol_s * _boundary_slope_max(problem) + 2.0 * fmax
    return lower, upper


@dataclass(frozen=True)
class AdmissibilityReport:
    osc: float
    f_min: float
    f_max: float
    f_absmax: float
    sup_dxf: float
    sup_dxpf: float
    sup_dppf: float
    max_eig_hxx: float
    concave_in_x: bool
    osc_threshold: float
    osc_pass: bool
    theta: float
    max_grad_h: float
    max_h: float
    lambda6: float
    lambda6_source: str
    dxf_bound: float
    dxpf_bound: float
    dxf_pass: bool
    dxpf_pass: bool
    resolution: tuple[int, int]

    @property
    def dxf_ratio(self) -> float:
        return self.sup_dxf / self.dxf_bound

    @property
    def dxpf_ratio(self) -> float:
        return self.sup_dxpf / self.dxpf_bound


def lambda6_target_proxy(problem: ProblemSpec, points: np.ndarray) -> float:
    """min over target points of trace(D_r G) = (n + e|p|^2/v^2) / v, which only depends on p."""
    e = problem.variant.sign
    n = problem.dimension
    r2 = np.sum(points * points, axis=-1)
    v2 = 1.0 - e * r2
    return float(np.min((n + e * r2 / v2) / np.sqrt(v2)))


def admissibility_report(problem: ProblemSpec, max_samples: int = 1024,
                         lambda6: float | None = None,
                         lambda6_source: str = "supplied") -> AdmissibilityReport:
    """Measure the smallness quantities of f over sampled source x target pairs.

    The oscillation test has a closed-form threshold; the two tests involving
    the existence constant Lambda_6 use ``lambda6`` when given, otherwise the
    target-only proxy min trace(D_r G), and are heuristic.
    """
    n = problem.dimension
    m = min(64**n, max_samples)
    xs = sample_domain(problem.source, m)
    ps = sample_domain(problem.target, m)
    X = xs[:, None, :]
    P = ps[None, :, :]
    rhs = problem.rhs
    fv = rhs.value(X, P)
    f_min, f_max = float(fv.min()), float(fv.max())
    sup_dxf = float(np.max(np.linalg.norm(rhs.grad_x(X, P), axis=-1)))

    def sup_opnorm(mats):
        return float(np.sqrt(np.max(np.linalg.eigvalsh(np.swapaxes(mats, -1, -2) @ mats))))

    sup_dxpf = sup_opnorm(rhs.hess_xp(X, P))
    sup_dppf = sup_opnorm(rhs.hess_pp(X, P))
    max_eig_hxx = float(np.max(np.linalg.eigvalsh(rhs.hess_xx(X, P))))
    vol_s, _ = problem.source.measures
    vol_t, _ = problem.target.measures
    threshold = 0.5 * n * (vol_t / vol_s) ** (1.0 / n)
    osc = f_max - f_min

    theta = theta_from_points(problem.target.defining, ps)
    max_grad_h = float(np.max(np.linalg.norm(problem.target.defining.gradient(ps), axis=-1)))
    max_h = float(np.max(problem.target.defining.value(ps)))
    if lambda6 is None:
        lambda6 = lambda6_target_proxy(problem, ps)
        lambda6_source = "target-proxy"
    dxf_bound = theta * lambda6 / (2.0 * max_grad_h)
    dxpf_bound = lambda6 * theta / (8.0 * max_h)
    return AdmissibilityReport(
        osc=osc,
        f_min=f_min,
        f_max=f_max,
        f_absmax=max(abs(f_min), abs(f_max)),
        sup_dxf=sup_dxf,
        sup_dxpf=sup_dxpf,
        sup_dppf=sup_dppf,
        max_eig_hxx=max_eig_hxx,
        concave_in_x=max_eig_hxx <= 1e-12,
        osc_threshold=threshold,
        osc_pass=osc <= threshold,
        theta=theta,
        max_grad_h=max_grad_h,
        max_h=max_h,
        lambda6=float(lambda6),
        lambda6_source=lambda6_source,
        dxf_bound=dxf_bound,
        dxpf_bound=dxpf_bound,
        dxf_pass=sup_dxf <= dxf_bound,
        dxpf_pass=sup_dxpf <= dxpf_bound,
        resolution=(len(xs), len(ps)),
    )
