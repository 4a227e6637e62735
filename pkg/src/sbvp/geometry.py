"""Pointwise geometry of graphs x_{n+1} = u(x) in Minkowski or Euclidean space.

Every function is vectorized: ``grad`` has shape ``(..., n)`` and ``hess``
shape ``(..., n, n)``.  With ``e = +1`` (Minkowski) or ``e = -1``
(Euclidean) the quantities are

    v      = sqrt(1 - e|p|^2)
    g^{ij} = delta_ij + e p_i p_j / v^2
    b_ij   = delta_ij - e p_i p_j / (1 + v)          (square root of g_ij)
    b^{ij} = delta_ij + e p_i p_j / (v (1 + v))      (square root of g^{ij})
    a      = b^{-1} D^2u b^{-1} / v                  (shape matrix)

and the operator is G = trace(a) = s_ij u_ij with s = g^{-1} / v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NotSpacelike
from .problem import Variant

DEFAULT_MARGIN = 1e-6


@dataclass(frozen=True)
class GeomPoint:
    grad: np.ndarray
    hess: np.ndarray
    v: np.ndarray
    b: np.ndarray
    b_inv: np.ndarray
    g_inv: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    G_val: np.ndarray
    G_r: np.ndarray
    G_p: np.ndarray
    variant: Variant

    @property
    def second_fundamental_form(self) -> np.ndarray:
        return self.hess / self.v[..., None, None]

    @property
    def dimension(self) -> int:
        return self.grad.shape[-1]


def _outer(p):
    return p[..., :, None] * p[..., None, :]


def lorentz_factor(grad, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN):
    """v = sqrt(1 - e|p|^2); raises NotSpacelike if |p| > 1 - margin (Minkowski)."""
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    r2 = np.sum(grad * grad, axis=-1)
    if not np.all(np.isfinite(r2)):
        raise NonFinite("non-finite gradient")
    if variant is Variant.MINKOWSKI:
        worst = float(np.sqrt(np.max(r2))) if r2.size else 0.0
        if worst > 1.0 - margin:
            raise NotSpacelike(f"|Du| = {worst:.12g} exceeds 1 - {margin:g}")
        return np.sqrt(1.0 - r2)
    return np.sqrt(1.0 + r2)


def s_matrix(grad, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN):
    """s_ij(p) = (delta_ij + e p_i p_j / v^2) / v, so that G = s_ij u_ij."""
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    v = lorentz_factor(grad, variant, margin)
    n = grad.shape[-1]
    e = variant.sign
    return (np.eye(n) + e * _outer(grad) / (v * v)[..., None, None]) / v[..., None, None]


def metric_roots(grad, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN):
    """Closed forms (v, b, b_inv, g_inv)."""
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    v = lorentz_factor(grad, variant, margin)
    n = grad.shape[-1]
    e = variant.sign
    P = _outer(grad)
    eye = np.eye(n)
    vv = v[..., None, None]
    b = eye - e * P / (1.0 + vv)
    b_inv = eye + e * P / (vv * (1.0 + vv))
    g_inv = eye + e * P / (vv * vv)
    return v, b, b_inv, g_inv


def operator_value(grad, hess, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN):
    """G = s_ij(Du) u_ij, the nondivergence form of div(Du / sqrt(1 -/+ |Du|^2))."""
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    v = lorentz_factor(grad, variant, margin)
    e = variant.sign
    tr = np.trace(hess, axis1=-2, axis2=-1)
    quad = np.einsum("...i,...ij,...j->...", grad, hess, grad)
    out = (tr + e * quad / (v * v)) / v
    if not np.all(np.isfinite(out)):
        raise NonFinite("operator value overflow")
    return out


def linearization(grad, hess, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN):
    """(G_r, G_p): derivatives of G with respect to D^2u and Du.

    G_r = b^{-1} F b^{-1} / v with F = I, i.e. g^{-1} / v, and
    G_p = e (p / v^2) F_kl a_kl + (2e / v) F_kl a_ml b^{ik} p_m.
    """
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    v, _, b_inv, g_inv = metric_roots(grad, variant, margin)
    e = variant.sign
    vv = v[..., None, None]
    a = b_inv @ hess @ b_inv / vv
    tr_a = np.trace(a, axis1=-2, axis2=-1)
    G_r = g_inv / vv
    G_p = e * grad * (tr_a / (v * v))[..., None] + (2.0 * e / v)[..., None] * np.einsum(
        "...ik,...kl,...l->...i", b_inv, a, grad
    )
    return G_r, G_p


def geom_at(grad, hess, variant=Variant.MINKOWSKI, margin: float = DEFAULT_MARGIN) -> GeomPoint:
    """All pointwise quantities at (Du, D^2u)."""
    variant = Variant(variant)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    v, b, b_inv, g_inv = metric_roots(grad, variant, margin)
    vv = v[..., None, None]
    a = b_inv @ hess @ b_inv / vv
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    kappa = np.linalg.eigvalsh(a)
    G_r, G_p = linearization(grad, hess, variant, margin)
    G_val = np.trace(a, axis1=-2, axis2=-1)
    if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(G_p))):
        raise NonFinite("geometry overflow")
    return GeomPoint(grad, hess, v, b, b_inv, g_inv, a, kappa, G_val, G_r, G_p, variant)


def trace_bounds(gp: GeomPoint):
    """(T_G, T, cauchy_ok): trace of G_r, trace of F_ij (= n) and the bracket
    (1/n)(sum k)^2 <= sum k^2 <= (sum k)^2 (valid for positive curvatures)."""
    n = gp.dimension
    T_G = np.trace(gp.G_r, axis1=-2, axis2=-1)
    T = np.full(T_G.shape, float(n))
    s1 = np.sum(gp.kappa, axis=-1)
    s2 = np.sum(gp.kappa**2, axis=-1)
    slack = 1e-12 * np.maximum(1.0, s1 * s1)
    ok = (s1 * s1 / n <= s2 + slack) & (s2 <= s1 * s1 + slack)
    return T_G, T, ok


def curvature_product(gp: GeomPoint) -> np.ndarray:
    """det D^2u / v^(n+2), which equals the product of principal curvatures."""
    n = gp.dimension
    return np.linalg.det(gp.hess) / gp.v ** (n + 2)
