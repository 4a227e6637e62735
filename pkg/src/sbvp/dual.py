"""Legendre transform of a discrete solution and the dual-problem check.

With y = Du(x) the transform is u~(y) = x.y - u(x), Du~(y) = x and
D^2u~(y) = (D^2u(x))^{-1}.  Everything is evaluated on the pushed-forward
node cloud; there is no y-space grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from . import geometry
from .errors import NotConvex, NotSpacelikeDual
from .problem import ProblemSpec, Variant


@dataclass(frozen=True)
class DualSample:
    """Batched dual samples; row k belongs to grid node k."""

    y: np.ndarray
    x: np.ndarray
    u_val: np.ndarray
    utilde_val: np.ndarray
    hess_dual: np.ndarray
    hess: np.ndarray
    boundary: np.ndarray

    def __len__(self):
        return len(self.y)

    def involution_error(self) -> float:
        """max |x.y - u~ - u|, the transform applied twice against the original."""
        back = np.sum(self.x * self.y, axis=-1) - self.utilde_val
        return float(np.max(np.abs(back - self.u_val)))

    def inverse_error(self) -> float:
        n = self.y.shape[-1]
        return float(np.max(np.abs(self.hess_dual @ self.hess - np.eye(n))))


def legendre_samples(state, grid=None, margin: float = 0.0) -> DualSample:
    """One sample per node of ``state``; raises NotConvex unless D^2u > margin everywhere."""
    grid = grid or state.grid
    u = state.u.values
    grad = grid.gradient_of(u)
    hess = grid.hessian_of(u)
    lam = np.linalg.eigvalsh(hess)[:, 0]
    worst = float(lam.min())
    if not worst > margin:
        raise NotConvex(f"Legendre transform needs a convex field; min eigenvalue {worst:.3e}")
    x = grid.nodes
    utilde = np.sum(x * grad, axis=-1) - u
    boundary = np.zeros(len(u), dtype=bool)
    boundary[grid.boundary] = True
    return DualSample(grad, x.copy(), u.copy(), utilde, np.linalg.inv(hess), hess, boundary)


def dual_label(variant) -> str:
    """The dual problem is stated for the Minkowski case; Euclidean use is an extension."""
    return "dual" if Variant(variant) is Variant.MINKOWSKI else "extension"


def _check_dual_points(y, variant):
    if Variant(variant) is Variant.MINKOWSKI:
        r = float(np.max(np.linalg.norm(y, axis=-1)))
        if r >= 1.0:
            raise NotSpacelikeDual(f"dual sample with |y| = {r:.12g} >= 1")


def dual_operator(y, hess_dual, variant=Variant.MINKOWSKI) -> np.ndarray:
    """G~(y, D^2u~) = -sum 1/eta_i with eta the eigenvalues of v b(y) D^2u~ b(y)."""
    _check_dual_points(y, variant)
    v, b, _, _ = geometry.metric_roots(y, variant, margin=0.0)
    at = v[..., None, None] * (b @ hess_dual @ b)
    at = 0.5 * (at + np.swapaxes(at, -1, -2))
    eta = np.linalg.eigvalsh(at)
    return -np.sum(1.0 / eta, axis=-1)


def dual_operator_s(y, hess_dual, variant=Variant.MINKOWSKI) -> np.ndarray:
    """The same operator written as -s_ij(y) (D^2u~)^{-1}_ij."""
    _check_dual_points(y, variant)
    s = geometry.s_matrix(y, variant, margin=0.0)
    return -np.einsum("...ij,...ij->...", s, np.linalg.inv(hess_dual))


def dual_residual(samples: DualSample, prob: ProblemSpec, c: float, t: float = 1.0) -> np.ndarray:
    """r~ = G~(y, D^2u~) + t f(Du~(y), y) + c per sample."""
    G = dual_operator_s(samples.y, samples.hess_dual, prob.variant)
    return G + t * prob.rhs.value(samples.x, samples.y) + c


@dataclass(frozen=True)
class DualImageReport:
    boundary_h_max: float
    interior_h_min: float
    x_hull_area: float
    source_volume: float
    y_hull_area: float
    target_volume: float
    min_monotone: float
    label: str

    @property
    def x_area_rel(self) -> float:
        return abs(self.x_hull_area - self.source_volume) / self.source_volume

    @property
    def y_area_rel(self) -> float:
        return abs(self.y_hull_area - self.target_volume) / self.target_volume


def monotonicity_min(samples: DualSample, n_pairs: int = 200_000, seed: int = 0) -> float:
    """min over sampled pairs of (y1-y2).(x1-x2) / |x1-x2|^2.

    Pairs are all neighbouring node pairs plus a fixed pseudo-random set.
    """
    N = len(samples)
    rng = np.random.default_rng(seed)
    i = np.concatenate([np.arange(N - 1), rng.integers(0, N, n_pairs)])
    j = np.concatenate([np.arange(1, N), rng.integers(0, N, n_pairs)])
    keep = i != j
    dx = samples.x[i[keep]] - samples.x[j[keep]]
    dy = samples.y[i[keep]] - samples.y[j[keep]]
    return float(np.min(np.sum(dx * dy, axis=-1) / np.sum(dx * dx, axis=-1)))


def dual_gradient_image_check(samples: DualSample, prob: ProblemSpec) -> DualImageReport:
    """Where the dual gradient x = Du~(y) lands, measured against the source defining function."""
    h_src = prob.source.defining.value(samples.x)
    bmask = samples.boundary
    x_hull = ConvexHull(samples.x).volume
    y_hull = ConvexHull(samples.y).volume
    return DualImageReport(
        boundary_h_max=float(np.max(np.abs(h_src[bmask]))),
        interior_h_min=float(np.min(h_src[~bmask])),
        x_hull_area=float(x_hull),
        source_volume=prob.source.volume,
        y_hull_area=float(y_hull),
        target_volume=prob.target.volume,
        min_monotone=monotonicity_min(samples),
        label=dual_label(prob.variant),
    )
