"""Radially symmetric ball-to-ball problems in any dimension.

For Omega = B_R and target B_rho (both centered at 0) the equation reduces to

    r^{1-n} (r^{n-1} phi)' = f(r) + c,     phi = u' / sqrt(1 -/+ u'^2),

with u'(R) = rho.  Hence phi(r) = r^{1-n} int_0^r s^{n-1} (f + c) ds and
u' = phi / sqrt(1 +/- phi^2) (upper signs Minkowski).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.interpolate import CubicSpline

from .errors import InvalidProblem, NoRoot, SpacelikeViolation
from .problem import Variant

N_INTERVALS = 20_000


@dataclass(frozen=True)
class RadialProblem:
    n: int
    R: float
    rho: float
    f_r: float | Callable = 0.0
    variant: Variant = Variant.MINKOWSKI

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n < 1:
            raise InvalidProblem("dimension must be positive")
        if not self.R > 0:
            raise InvalidProblem("source radius must be positive")
        if self.rho < 0:
            raise InvalidProblem("target radius must be non-negative")
        if self.variant is Variant.MINKOWSKI and not self.rho < 1:
            raise InvalidProblem("Minkowski target radius must be below 1 (Ω̃ ⊂⊂ B₁(0))")

    @property
    def constant_f(self) -> bool:
        return not callable(self.f_r)

    def f(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.constant_f:
            return np.full(r.shape, float(self.f_r))
        return np.broadcast_to(np.asarray(self.f_r(r), dtype=float), r.shape)

    def boundary_flux(self) -> float:
        """phi(R) corresponding to u'(R) = rho."""
        e = self.variant.sign
        return self.rho / math.sqrt(1.0 - e * self.rho**2)


def _nodes(p: RadialProblem, m: int = N_INTERVALS):
    return np.linspace(0.0, p.R, m + 1)


def radial_c_closed(p: RadialProblem) -> float:
    """n rho / (R sqrt(1 -/+ rho^2)) - f  for constant f."""
    if not p.constant_f:
        raise ValueError("closed form needs a constant right-hand side")
    return p.n * p.boundary_flux() / p.R - float(p.f_r)


def radial_c_bisect(p: RadialProblem, tol: float = 1e-12, m: int = N_INTERVALS) -> float:
    """Bisection on c for phi(R; c) = phi(R), the flux integral by composite Simpson."""
    r = _nodes(p, m)
    w = r ** (p.n - 1)
    fr = p.f(r)
    ff = simpson(w * fr, x=r)
    vol = simpson(w, x=r)
    target = p.boundary_flux() * p.R ** (p.n - 1)
    if not (np.isfinite(ff) and np.all(np.isfinite(fr))):
        raise NoRoot("the flux integral of f is not finite")

    def mismatch(c):
        return ff + c * vol - target

    fmax = float(np.max(np.abs(fr)))
    lo = -fmax - 10.0
    hi = p.n * p.boundary_flux() / p.R + fmax + 10.0
    g_lo, g_hi = mismatch(lo), mismatch(hi)
    if g_lo * g_hi > 0:
        raise NoRoot(f"bracket [{lo:g}, {hi:g}] does not enclose the constant c")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        g_mid = mismatch(mid)
        if g_mid == 0.0:
            return mid
        if (g_mid < 0) == (g_lo < 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def radial_c(p: RadialProblem) -> float:
    """The constant c of the radial problem (closed form when f is constant)."""
    if p.constant_f:
        return radial_c_closed(p)
    return radial_c_bisect(p)


def _slope(p: RadialProblem, phi):
    e = p.variant.sign
    q = 1.0 + e * phi * phi
    if np.any(q <= 0.0):
        raise SpacelikeViolation("flux |phi| >= 1: no finite slope gives this Euclidean flux")
    return phi / np.sqrt(q)


def flux(p: RadialProblem, c: float, r) -> np.ndarray:
    """phi(r) = r^{1-n} int_0^r s^{n-1} (f(s) + c) ds."""
    r = np.asarray(r, dtype=float)
    if p.constant_f:
        return (float(p.f_r) + c) * r / p.n
    grid = _nodes(p)
    w = grid ** (p.n - 1)
    integral = cumulative_simpson(w * (p.f(grid) + c), x=grid, initial=0.0)
    phi = np.zeros_like(grid)
    phi[1:] = integral[1:] / w[1:]
    return CubicSpline(grid, phi)(r)


def radial_profile(p: RadialProblem, c: float, r_samples) -> tuple[np.ndarray, np.ndarray]:
    """(u'(r), u(r)) at ``r_samples``; u is mean-zero over B_R with weight r^{n-1}."""
    r_samples = np.asarray(r_samples, dtype=float)
    grid = _nodes(p)
    up_grid = _slope(p, flux(p, c, grid))
    u_grid = cumulative_simpson(up_grid, x=grid, initial=0.0)
    w = grid ** (p.n - 1)
    u_grid -= simpson(w * u_grid, x=grid) / simpson(w, x=grid)
    uprime = _slope(p, flux(p, c, r_samples))
    u = CubicSpline(grid, u_grid)(r_samples)
    return uprime, u


@dataclass(frozen=True)
class CrossCheck:
    u_error: float
    c_error: float
    c_solved: float
    c_radial: float


def crosscheck_2d(p: RadialProblem, solved) -> CrossCheck:
    """Compare a 2-D solve on the matching ball-to-ball problem with the radial profile.

    The radial profile is re-centered with the grid quadrature so both fields
    carry the same discrete normalization.
    """
    if p.n != 2:
        raise ValueError("cross-check needs n = 2")
    g = solved.grid
    c_rad = radial_c(p)
    r = np.linalg.norm(g.nodes - g.domain.center, axis=-1)
    _, u_rad = radial_profile(p, c_rad, r)
    u_rad = g.mean_zero(u_rad)
    return CrossCheck(
        u_error=float(np.max(np.abs(solved.u.values - u_rad))),
        c_error=abs(solved.c - c_rad),
        c_solved=float(solved.c),
        c_radial=c_rad,
    )
