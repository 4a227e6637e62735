import json
import math

import numpy as np
import pytest

from sbvp.dual import legendre_samples
from sbvp.errors import ObliquenessFailure
from sbvp.grid import build_grid
from sbvp.problem import ProblemSpec, ball_domain, zero_rhs
from sbvp.solver import SolveState, boundary_obliqueness, continuation_solve, initial_guess
from sbvp.verify import (
    FAIL,
    HEURISTIC,
    PASS,
    Report,
    ReportEntry,
    bounds_lambda,
    full_suite,
    gradient_image_area,
    hessian_spectrum,
    interior_to_boundary_check,
    obliqueness_min,
    problem_fingerprint,
    state_from_field,
    uniqueness_check,
)

from conftest import constant_problem, hyperboloid_problem
from oracles import (
    AREA_HYP_TARGET,
    HESS_MAX_HYP,
    HESS_MIN_HYP,
    LAMBDA1_HYP,
    LAMBDA2_HYP,
    LAMBDA2_HYP_F01,
    RHO_HYP,
    hyperboloid,
)


def test_bounds_hyperboloid(solves):
    prob, _, state, _ = solves.get("hyperboloid")
    lam1, lam2, hmin, hmax = bounds_lambda(prob, state)
    assert lam1 == pytest.approx(LAMBDA1_HYP, rel=1e-12)
    assert lam2 == pytest.approx(LAMBDA2_HYP, rel=1e-12)
    assert hmin == pytest.approx(2.0, abs=5e-3) and hmax == pytest.approx(2.0, abs=5e-3)
    assert lam1 <= hmin


def test_bounds_constant_rhs(solves):
    prob, _, state, _ = solves.get("constant", f=0.1)
    lam1, lam2, hmin, hmax = bounds_lambda(prob, state)
    assert lam2 == pytest.approx(LAMBDA2_HYP_F01, rel=1e-12)
    assert hmin == pytest.approx(2.0, abs=5e-3) and hmax == pytest.approx(2.0, abs=5e-3)


def test_lambda1_equal_areas(solves):
    prob, _, state, _ = solves.get("sphere")
    assert bounds_lambda(prob, state)[0] == pytest.approx(1.0, rel=1e-12)


def test_obliqueness_hyperboloid(solves):
    prob, grid, state, _ = solves.get("hyperboloid")
    obl = boundary_obliqueness(state, prob)
    k = int(np.argmin(np.linalg.norm(grid.nodes[grid.boundary] - [1.0, 0.0], axis=-1)))
    assert obl[k] == pytest.approx(1.0, abs=1e-8)
    assert np.ptp(obl) <= 1e-8
    assert obliqueness_min(state, prob) == pytest.approx(1.0, abs=1e-8)


def test_obliqueness_tangential(solves):
    prob, grid, state, _ = solves.get("hyperboloid")
    gb = grid.gradient_of(state.u.values)[grid.boundary]
    beta = prob.target.defining.gradient(gb)
    nu_perp = grid.normals @ np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert np.max(np.abs(np.sum(beta * nu_perp, -1))) <= grid.h**2


def test_obliqueness_failure():
    prob = hyperboloid_problem()
    g = build_grid(prob.source, 17, 32)
    # gradient pointing inward on the boundary: Du = -x/2
    st = SolveState(g.function(-0.25 * np.sum(g.nodes**2, -1)), 0.0, 1.0)
    with pytest.raises(ObliquenessFailure):
        obliqueness_min(st, prob)


def test_hessian_spectrum_hyperboloid():
    g = build_grid(ball_domain(1.0), 65, 128)
    lo, hi, spectra = hessian_spectrum(SolveState(g.function(hyperboloid(g.nodes)), 2.0, 1.0))
    assert lo == pytest.approx(HESS_MIN_HYP, abs=1e-3)
    assert hi == pytest.approx(HESS_MAX_HYP, abs=1e-3)
    assert spectra.shape == (g.size, 2)


def test_hessian_spectrum_quadratic():
    g = build_grid(ball_domain(1.0), 33, 64)
    lo, hi, _ = hessian_spectrum(SolveState(g.function(0.35 * np.sum(g.nodes**2, -1)), 0.0, 1.0))
    assert lo == pytest.approx(0.7, abs=1e-8) and hi == pytest.approx(0.7, abs=1e-8)


def test_hessian_spectrum_ellipse(solves):
    _, _, state, _ = solves.get("ellipse")
    lo, hi, _ = hessian_spectrum(state)
    assert 0 < lo <= hi < math.inf


def test_interior_to_boundary_heuristic(solves):
    _, _, state, _ = solves.get("hyperboloid")
    entry = interior_to_boundary_check(legendre_samples(state))
    assert entry.verdict == HEURISTIC
    # |D^2 u~| grows toward the target boundary, so the slack is zero
    assert entry.measured <= entry.bound and entry.tol == 0.0
    g = build_grid(ball_domain(1.0), 17, 32)
    quad = legendre_samples(SolveState(g.function(0.5 * np.sum(g.nodes**2, -1)), 0.0, 1.0))
    assert interior_to_boundary_check(quad).measured == pytest.approx(0.5 * interior_to_boundary_check(quad).bound)


def test_gradient_image_area_hyperboloid(solves):
    prob, _, state, _ = solves.get("hyperboloid")
    e = gradient_image_area(state, prob)
    assert e.verdict == PASS
    assert e.measured == pytest.approx(AREA_HYP_TARGET, rel=0.02)


@pytest.mark.parametrize("s", [0.3, RHO_HYP])
def test_gradient_image_area_scaled_quadratic(s):
    g = build_grid(ball_domain(1.0), 33, 64)
    prob = ProblemSpec(ball_domain(1.0), ball_domain(s), zero_rhs())
    e = gradient_image_area(SolveState(g.function(0.5 * s * np.sum(g.nodes**2, -1)), 0.0, 1.0), prob)
    assert e.measured == pytest.approx(s * s * math.pi, rel=1e-10)
    assert e.verdict == PASS


def test_gradient_image_area_constant(solves):
    prob, _, state, _ = solves.get("constant", f=0.1)
    assert gradient_image_area(state, prob).verdict == PASS


def test_uniqueness_hyperboloid():
    prob = hyperboloid_problem()
    g = build_grid(prob.source, 33, 64)
    entries, s1, s2 = uniqueness_check(prob, g)
    assert all(e.verdict == PASS for e in entries)
    assert [e.name for e in entries] == ["uniqueness_u", "uniqueness_c"]
    assert np.max(np.abs(s1.u.values - s2.u.values)) > 0 or s1.newton_iters != s2.newton_iters


def test_uniqueness_constant_rhs():
    prob = constant_problem(0.1)
    entries, _, _ = uniqueness_check(prob, build_grid(prob.source, 33, 64))
    assert all(e.verdict == PASS for e in entries)


def test_identical_seeds_are_bitwise_equal():
    prob = hyperboloid_problem()
    g = build_grid(prob.source, 17, 32)
    a, _ = continuation_solve(prob, g, seed=initial_guess(prob, g))
    b, _ = continuation_solve(prob, g, seed=initial_guess(prob, g))
    assert np.array_equal(a.u.values, b.u.values) and a.c == b.c


@pytest.mark.parametrize("name", ["hyperboloid", "sphere", "product", "ellipse"])
def test_full_suite_passes(solves, name):
    prob, _, state, _ = solves.get(name)
    rep = full_suite(state, prob)
    assert len(rep.entries) >= 12
    assert rep.passed, [e for e in rep.failures()]
    assert {e.verdict for e in rep.entries} <= {PASS, HEURISTIC}


def test_full_suite_dual_residual(solves):
    prob, _, state, _ = solves.get("hyperboloid")
    rep = full_suite(state, prob)
    assert rep["dual_residual[dual]"].measured <= 10 * 1e-10


def test_corrupted_state_fails(solves):
    prob, grid, state, _ = solves.get("hyperboloid")
    bad = state_from_field(grid, 1.1 * state.u.values, prob)
    rep = full_suite(bad, prob)
    assert not rep.passed
    failed = {e.name for e in rep.failures()}
    assert "boundary_condition" in failed
    assert "lambda2_upper" in failed or "lambda1_lower" in failed


def test_non_spacelike_state_short_circuits(solves):
    prob, grid, state, _ = solves.get("hyperboloid")
    bad = state_from_field(grid, 2.0 * state.u.values, prob)
    rep = full_suite(bad, prob)
    assert rep["spacelike"].verdict == FAIL
    assert rep.names()[-1] == "spacelike"


def test_state_from_field_recovers_c(solves):
    prob, grid, state, _ = solves.get("product")
    again = state_from_field(grid, state.u.values, prob)
    assert again.c == pytest.approx(state.c, abs=1e-10)


def test_report_determinism(solves):
    prob, grid, state, _ = solves.get("product")
    a = full_suite(state_from_field(grid, state.u.values, prob), prob).to_json()
    b = full_suite(state_from_field(grid, state.u.values.copy(), prob), prob).to_json()
    assert a == b
    assert full_suite(state, prob).to_json() == full_suite(state, prob).to_json()
    data = json.loads(a)
    assert set(data) == {"entries", "fingerprint", "grid"}
    assert set(data["entries"][0]) == {"name", "measured", "bound", "tol", "verdict"}


def test_report_serializes_nonfinite_as_null():
    rep = Report(fingerprint="x")
    rep.add(ReportEntry("a", math.nan, math.inf, 0.0, HEURISTIC))
    data = json.loads(rep.to_json())
    assert data["entries"][0]["measured"] is None and data["entries"][0]["bound"] is None
    assert rep.passed
    rep.add(ReportEntry("b", 1.0, 0.0, 0.0, FAIL))
    assert not rep.passed and rep.failures()[0].name == "b"
    with pytest.raises(KeyError):
        rep["missing"]


def test_fingerprint_sensitivity():
    a = hyperboloid_problem()
    b = ProblemSpec(ball_domain(1.0), ball_domain(0.7), zero_rhs())
    assert problem_fingerprint(a) == problem_fingerprint(hyperboloid_problem())
    assert problem_fingerprint(a) != problem_fingerprint(b)
    g1 = build_grid(a.source, 17, 32)
    g2 = build_grid(a.source, 33, 64)
    assert problem_fingerprint(a, g1) != problem_fingerprint(a, g2)
