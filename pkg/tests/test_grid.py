import numpy as np
import pytest

from sbvp import geometry
from sbvp.errors import BadResolution
from sbvp.grid import boundary_trace, build_grid, gradient, hessian, integrate
from sbvp.problem import ball_domain, ellipse_domain, superellipse_domain

from oracles import hyperboloid, hyperboloid_grad, hyperboloid_hess


@pytest.fixture(scope="module")
def disk():
    return build_grid(ball_domain(1.0), 33, 64)


@pytest.fixture(scope="module")
def ellipse():
    return build_grid(ellipse_domain(1.0, 0.5), 33, 64)


def test_ball_boundary_nodes(disk):
    r = np.linalg.norm(disk.nodes[disk.boundary], axis=-1)
    assert np.max(np.abs(r - 1.0)) <= 1e-12
    assert disk.size == 1 + 32 * 64


def test_ellipse_boundary_nodes(ellipse):
    x = ellipse.nodes[ellipse.boundary]
    assert np.max(np.abs(x[:, 0] ** 2 + 4 * x[:, 1] ** 2 - 1.0)) <= 1e-10
    assert np.max(np.abs(ellipse.domain.defining.value(x))) <= 1e-10


@pytest.mark.parametrize("dom", [ball_domain(1.0), ellipse_domain(1.0, 0.5),
                                 superellipse_domain(0.5, 0.4, eps=0.5)], ids=lambda d: d.kind)
def test_weights_sum_to_volume(dom):
    coarse = build_grid(dom, 17, 32)
    fine = build_grid(dom, 33, 64)
    assert abs(fine.volume - dom.volume) <= abs(coarse.volume - dom.volume) + 1e-12
    assert fine.volume == pytest.approx(dom.volume, rel=1e-3)


def test_disk_area_exact(disk):
    assert disk.volume == pytest.approx(np.pi, rel=1e-12)


@pytest.mark.parametrize("dom", [ball_domain(1.0), ellipse_domain(0.8, 0.5, center=[0.1, 0], angle=0.4)],
                         ids=lambda d: d.kind)
def test_exact_on_affine(dom):
    g = build_grid(dom, 33, 64)
    f = g.function(2.0 + 0.7 * g.nodes[:, 0] - 1.3 * g.nodes[:, 1])
    assert np.max(np.abs(gradient(f) - [0.7, -1.3])) <= 1e-10
    assert np.max(np.abs(hessian(f))) <= 1e-8
    f1 = g.function(g.nodes[:, 0])
    assert np.max(np.abs(gradient(f1) - [1.0, 0.0])) <= 1e-10


def test_radial_quadratic(disk):
    f = disk.sample(lambda x: 0.5 * np.sum(x * x, -1))
    assert np.max(np.abs(gradient(f) - disk.nodes)) <= 1e-10
    assert np.max(np.abs(hessian(f) - np.eye(2))) <= 1e-8


def test_mixed_quadratic(disk):
    f = disk.sample(lambda x: x[:, 0] * x[:, 1])
    assert np.max(np.abs(hessian(f) - np.array([[0, 1], [1, 0]]))) <= 1e-8
    H = hessian(f)
    assert np.array_equal(H[:, 0, 1], H[:, 1, 0])


def test_hyperboloid_second_order_convergence():
    errs_g, errs_h = [], []
    for n_r, n_t in [(17, 32), (33, 64), (65, 128)]:
        g = build_grid(ball_domain(1.0), n_r, n_t)
        f = g.sample(hyperboloid)
        errs_g.append(np.max(np.abs(gradient(f) - hyperboloid_grad(g.nodes))))
        errs_h.append(np.max(np.abs(hessian(f) - hyperboloid_hess(g.nodes))))
    for errs in (errs_g, errs_h):
        for a, b in zip(errs, errs[1:]):
            assert 3.2 <= a / b <= 4.8


def test_integrals(disk):
    assert integrate(disk.function(np.ones(disk.size))) == pytest.approx(np.pi, rel=1e-12)
    r2 = np.sum(disk.nodes**2, -1)
    assert integrate(disk.function(r2)) == pytest.approx(np.pi / 2, abs=5e-3)
    det = np.linalg.det(hyperboloid_hess(disk.nodes))
    assert integrate(disk.function(det)) == pytest.approx(np.pi / 2, abs=5e-3)


def test_integral_converges_second_order():
    errs = []
    for n_r, n_t in [(17, 32), (33, 64), (65, 128)]:
        g = build_grid(ball_domain(1.0), n_r, n_t)
        errs.append(abs(g.integrate_values(np.sum(g.nodes**2, -1)) - np.pi / 2))
    assert 3.2 <= errs[0] / errs[1] <= 4.8
    assert 3.2 <= errs[1] / errs[2] <= 4.8


def test_boundary_trace_ball(disk):
    pts, vals, nu = boundary_trace(disk.sample(lambda x: x[:, 0]))
    k = np.argmin(np.linalg.norm(pts - [1.0, 0.0], axis=-1))
    assert np.allclose(pts[k], [1, 0]) and np.allclose(nu[k], [-1, 0])
    assert np.allclose(vals, pts[:, 0])
    assert np.max(np.abs(np.linalg.norm(nu, axis=-1) - 1)) <= 1e-12


def test_boundary_trace_ellipse(ellipse):
    pts, _, nu = boundary_trace(ellipse.function(np.zeros(ellipse.size)))
    k = np.argmin(np.linalg.norm(pts - [1.0, 0.0], axis=-1))
    assert np.allclose(pts[k], [1, 0], atol=1e-12)
    assert np.allclose(nu[k], [-1, 0], atol=1e-12)
    assert np.max(np.abs(np.linalg.norm(nu, axis=-1) - 1)) <= 1e-12


def test_discrete_divergence_theorem():
    # int div(Du/v) - boundary integral of (Du/v).nu_out -> 0 at second order
    errs = []
    for n_r, n_t in [(17, 32), (33, 64), (65, 128)]:
        g = build_grid(ball_domain(1.0), n_r, n_t)
        f = g.sample(lambda x: hyperboloid(x) + 0.02 * x[:, 0] ** 3)
        grad, hess = gradient(f), hessian(f)
        div = geometry.operator_value(grad, hess)
        gb = grad[g.boundary]
        v = geometry.lorentz_factor(gb)
        flux = np.sum(np.sum(gb * -g.normals, -1) / v * g.ds)
        errs.append(abs(g.integrate_values(div) - flux))
    assert errs[2] < errs[1] < errs[0]
    assert errs[1] / errs[2] >= 3.2


def test_jacobian_positive_off_pole(disk):
    # the quadrature weights are the Jacobian determinant times cell sizes
    assert np.all(disk.weights[1:] > 0)


def test_stretch_clusters_rings():
    g = build_grid(ball_domain(1.0), 33, 64, stretch=0.5)
    steps = np.diff(g.s)
    assert steps[-1] < steps[0]
    assert g.volume == pytest.approx(np.pi, rel=1e-3)
    # on stretched rings the radial stencil is only second order, even for quadratics
    errs = []
    for n_r, n_t in [(33, 64), (65, 128)]:
        g = build_grid(ball_domain(1.0), n_r, n_t, stretch=0.5)
        f = g.sample(lambda x: x[:, 0] * x[:, 1])
        errs.append(np.max(np.abs(hessian(f) - np.array([[0, 1], [1, 0]]))))
    assert errs[0] <= 1e-2
    assert errs[0] / errs[1] >= 3.2


@pytest.mark.parametrize("n_r,n_t", [(7, 64), (33, 15), (33, 33)])
def test_bad_resolution(n_r, n_t):
    with pytest.raises(BadResolution):
        build_grid(ball_domain(1.0), n_r, n_t)


def test_grid_function_rejects_nonfinite(disk):
    with pytest.raises(ValueError):
        disk.function(np.full(disk.size, np.nan))
    with pytest.raises(ValueError):
        disk.function(np.zeros(3))


def test_mean_zero(disk):
    u = disk.mean_zero(np.sum(disk.nodes, -1) + 5.0)
    assert abs(disk.integrate_values(u)) <= 1e-12
