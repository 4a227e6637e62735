"""Logically polar, boundary-fitted grid on a star-shaped planar domain.

Nodes sit at ``center + S(xi_i) rho(theta_j) omega(theta_j)`` with xi uniform
on [0, 1] and theta uniform on [0, 2 pi).  Index 0 is the shared pole node;
ring ``i >= 1`` holds nodes ``1 + (i - 1) n_t + j``.  The last ring lies on
the boundary.

Derivatives are taken in the computational coordinates (xi, theta) and mapped
to physical ones through metric terms obtained by differentiating the node
coordinates with the same stencils, which makes the operators exact on
affine fields.  Radial stencils are second order (one-sided on the boundary
ring); angular stencils are periodic centered differences of configurable
even order.  At the pole a cubic least-squares fit over the first two rings
supplies the gradient and Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BadResolution
from .problem import DomainSpec


def fd_weights(offsets, order: int) -> np.ndarray:
    """Weights w with sum_k w_k f(k) ~ f^{(order)}(0) on unit spacing."""
    offsets = np.asarray(offsets, dtype=float)
    m = offsets.size
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(V, rhs)


@dataclass(eq=False)
class Grid:
    domain: DomainSpec
    n_r: int
    n_t: int
    xi: np.ndarray
    s: np.ndarray
    theta: np.ndarray
    nodes: np.ndarray
    ring: np.ndarray
    col: np.ndarray
    weights: np.ndarray
    D: tuple
    H: dict
    boundary: np.ndarray
    interior: np.ndarray
    normals: np.ndarray
    ds: np.ndarray
    h: float
    stretch: float
    theta_order: int

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def volume(self) -> float:
        return float(self.weights.sum())

    def index(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j) % self.n_t
        return np.where(i == 0, 0, 1 + (i - 1) * self.n_t + j)

    def function(self, values) -> "GridFunction":
        return GridFunction(np.asarray(values, dtype=float), self)

    def sample(self, fn) -> "GridFunction":
        """Evaluate a callable of points (N, 2) -> (N,) at the nodes."""
        return self.function(fn(self.nodes))

    def gradient_of(self, values) -> np.ndarray:
        # stencils annihilate constants; subtracting the pole value keeps the
        # roundoff proportional to the local variation instead of the offset
        values = np.asarray(values, dtype=float)
        values = values - values[0]
        return np.stack([self.D[0] @ values, self.D[1] @ values], axis=-1)

    def hessian_of(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        values = values - values[0]
        h11 = self.H[0, 0] @ values
        h12 = self.H[0, 1] @ values
        h22 = self.H[1, 1] @ values
        return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)

    def integrate_values(self, values) -> float:
        return float(np.dot(self.weights, values))

    def mean_zero(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return values - self.integrate_values(values) / self.volume


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    def gradient(self) -> np.ndarray:
        return gradient(self)

    def hessian(self) -> np.ndarray:
        return hessian(self)

    def integrate(self) -> float:
        return integrate(self)


def gradient(f: GridFunction) -> np.ndarray:
    """Per-node gradient, shape (N, 2)."""
    return f.grid.gradient_of(f.values)


def hessian(f: GridFunction) -> np.ndarray:
    """Per-node symmetric Hessian, shape (N, 2, 2)."""
    return f.grid.hessian_of(f.values)


def integrate(f: GridFunction) -> float:
    return f.grid.integrate_values(f.values)


def boundary_trace(f: GridFunction):
    """(points, values, inward unit normals) on the boundary ring."""
    g = f.grid
    return g.nodes[g.boundary], f.values[g.boundary], g.normals


def _stretch_map(xi, gamma):
    S = (1.0 - gamma) * xi + gamma * np.sin(0.5 * np.pi * xi)
    dS = (1.0 - gamma) + gamma * 0.5 * np.pi * np.cos(0.5 * np.pi * xi)
    return S, dS


def build_grid(domain: DomainSpec, n_r: int, n_t: int, stretch: float = 0.0,
               theta_order: int = 8) -> Grid:
    """Boundary-fitted grid with (n_r - 1) rings of n_t nodes plus the pole.

    ``stretch`` in [0, 1) blends in the map sin(pi xi / 2), clustering rings
    toward the boundary; 0 gives uniform radial spacing.
    """
    if domain.dimension != 2:
        raise BadResolution("the boundary-fitted grid is two-dimensional")
    if n_r < 8 or n_t < 16 or n_t % 2:
        raise BadResolution(f"need n_r >= 8, n_t >= 16 and even (got {n_r}, {n_t})")
    if not 0.0 <= stretch < 1.0:
        raise BadResolution("stretch must lie in [0, 1)")
    if theta_order % 2 or theta_order < 2 or theta_order > n_t // 2:
        raise BadResolution("theta_order must be even and at most n_t/2")

    N = 1 + (n_r - 1) * n_t
    xi = np.linspace(0.0, 1.0, n_r)
    dxi = xi[1]
    S, dS = _stretch_map(xi, stretch)
    theta = 2.0 * np.pi * np.arange(n_t) / n_t
    dth = 2.0 * np.pi / n_t
    rho = domain.radius(theta)
    omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    center = domain.center

    ring = np.concatenate([[0], np.repeat(np.arange(1, n_r), n_t)])
    col = np.concatenate([[0], np.tile(np.arange(n_t), n_r - 1)])
    nodes = np.empty((N, 2))
    nodes[0] = center
    nodes[1:] = center + (S[ring[1:], None] * rho[col[1:], None]) * omega[col[1:]]

    def idx(i, j):
        j = j % n_t
        return np.where(i == 0, 0, 1 + (i - 1) * n_t + j)

    q = theta_order // 2
    t_off = np.arange(-q, q + 1)
    t1 = fd_weights(t_off, 1) / dth
    t2 = fd_weights(t_off, 2) / dth**2
    t1 = 0.5 * (t1 - t1[::-1])  # exact antisymmetry
    t2 = 0.5 * (t2 + t2[::-1])

    def radial_stencils(i):
        if i < n_r - 1:
            return (np.array([-1, 1]), np.array([-0.5, 0.5]) / dxi,
                    np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0]) / dxi**2)
        return (np.array([-2, -1, 0]), np.array([0.5, -2.0, 1.5]) / dxi,
                np.array([-3, -2, -1, 0]), np.array([-1.0, 4.0, -5.0, 2.0]) / dxi**2)

    entries = {k: ([], [], []) for k in ("x", "t", "xx", "tt", "xt")}

    def add(key, rows, cols, vals):
        r, c, v = entries[key]
        r.append(rows)
        c.append(cols)
        v.append(np.broadcast_to(vals, rows.shape).astype(float))

    jj = np.arange(n_t)
    for i in range(1, n_r):
        rows = idx(i, jj)
        off1, w1, off2, w2 = radial_stencils(i)
        for o, w in zip(off1, w1):
            add("x", rows, idx(i + o, jj), w)
        for o, w in zip(off2, w2):
            add("xx", rows, idx(i + o, jj), w)
        for m, w in zip(t_off, t1):
            if w != 0.0:
                add("t", rows, idx(i, jj + m), w)
        for m, w in zip(t_off, t2):
            add("tt", rows, idx(i, jj + m), w)
        for o, wr in zip(off1, w1):
            if i + o == 0:
                continue  # the pole value carries no angular variation
            for m, wt in zip(t_off, t1):
                if wt != 0.0:
                    add("xt", rows, idx(i + o, jj + m), wr * wt)

    def assemble(key):
        r, c, v = entries[key]
        return sp.coo_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                             shape=(N, N)).tocsr()

    Dx, Dt, Dxx, Dtt, Dxt = (assemble(k) for k in ("x", "t", "xx", "tt", "xt"))

    # discrete metric terms
    X = nodes
    x_xi, x_th = Dx @ X, Dt @ X
    x2 = {(0, 0): Dxx @ X, (1, 1): Dtt @ X, (0, 1): Dxt @ X}
    J = np.stack([x_xi, x_th], axis=-1)  # J[node, k, a] = d x_k / d a
    J[0] = np.eye(2)
    K = np.linalg.inv(J)  # K[node, a, k] = d a / d x_k
    G = [sp.diags(K[:, 0, k]) @ Dx + sp.diags(K[:, 1, k]) @ Dt for k in range(2)]
    Q = {}
    for (a, b), D2 in (((0, 0), Dxx), ((1, 1), Dtt), ((0, 1), Dxt)):
        Q[a, b] = D2 - sp.diags(x2[a, b][:, 0]) @ G[0] - sp.diags(x2[a, b][:, 1]) @ G[1]
    Q[1, 0] = Q[0, 1]
    Hm = {}
    for k, l in ((0, 0), (0, 1), (1, 1)):
        acc = None
        for a in range(2):
            for b in range(2):
                term = sp.diags(K[:, a, k] * K[:, b, l]) @ Q[a, b]
                acc = term if acc is None else acc + term
        Hm[k, l] = acc

    # pole: cubic least-squares fit over rings 1 and 2 (pole value held fixed)
    fit_nodes = np.concatenate([idx(1, jj), idx(2, jj)])
    d = nodes[fit_nodes] - center
    d1, d2 = d[:, 0], d[:, 1]
    A = np.stack([d1, d2, 0.5 * d1 * d1, d1 * d2, 0.5 * d2 * d2,
                  d1**3, d1 * d1 * d2, d1 * d2 * d2, d2**3], axis=-1)
    P = np.linalg.pinv(A)

    def pole_row(weights):
        cols = np.concatenate([[0], fit_nodes])
        vals = np.concatenate([[-weights.sum()], weights])
        return sp.csr_matrix((vals, (np.zeros(cols.size, dtype=int), cols)), shape=(N, N))

    keep = sp.diags(np.concatenate([[0.0], np.ones(N - 1)]))
    Dphys = tuple((keep @ G[k] + pole_row(P[k])).tocsr() for k in range(2))
    Hphys = {
        (0, 0): (keep @ Hm[0, 0] + pole_row(P[2])).tocsr(),
        (0, 1): (keep @ Hm[0, 1] + pole_row(P[3])).tocsr(),
        (1, 1): (keep @ Hm[1, 1] + pole_row(P[4])).tocsr(),
    }
    Hphys[1, 0] = Hphys[0, 1]

    # quadrature: trapezoid in xi, periodic trapezoid in theta, Jacobian S S' rho^2
    wxi = np.full(n_r, dxi)
    wxi[0] *= 0.5
    wxi[-1] *= 0.5
    weights = np.zeros(N)
    weights[1:] = (wxi * S * dS)[ring[1:]] * (rho**2)[col[1:]] * dth

    boundary = idx(n_r - 1, jj)
    interior = np.setdiff1d(np.arange(N), boundary)
    gb = domain.defining.gradient(nodes[boundary])
    normals = gb / np.linalg.norm(gb, axis=-1, keepdims=True)
    drho = domain.radius_derivative(theta)
    omega_perp = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    x_theta = drho[:, None] * omega + rho[:, None] * omega_perp
    ds = np.linalg.norm(x_theta, axis=-1) * dth

    return Grid(
        domain=domain, n_r=n_r, n_t=n_t, xi=xi, s=S, theta=theta, nodes=nodes,
        ring=ring, col=col, weights=weights, D=Dphys, H=Hphys, boundary=boundary,
        interior=interior, normals=normals, ds=ds,
        h=float(np.max(np.diff(S)) * np.max(rho)), stretch=float(stretch),
        theta_order=int(theta_order),
    )
