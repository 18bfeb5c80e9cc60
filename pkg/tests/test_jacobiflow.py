import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maslovindex import jacobiflow as jf
from maslovindex import lagrangian as lg
from maslovindex.errors import DomainError, InvalidInputError, NumericalFailure
from maslovindex.presets import random_trigonometric_profile

seeds = st.integers(0, 2**32 - 1)


def trig_profile(seed, n=2, degree=2, length=3.0):
    return random_trigonometric_profile(np.random.default_rng(seed), n, degree, length)


# profiles -----------------------------------------------------------------------

def test_profile_kinds_evaluate():
    c = jf.CurvatureProfile.constant([[1.0, 2.0], [2.0, 3.0]], 0.0, 1.0)
    np.testing.assert_array_equal(c(0.5), [[1.0, 2.0], [2.0, 3.0]])
    d = jf.CurvatureProfile.diagonal([-1.0, -4.0], 0.0, 4.0)
    np.testing.assert_array_equal(d(1.0), np.diag([-1.0, -4.0]))
    p = jf.CurvatureProfile.piecewise_constant([2.0], [[[-4.0]], [[-1.0]]], 0.0, 5.0)
    assert p(1.0)[0, 0] == -4.0 and p(3.0)[0, 0] == -1.0
    poly = jf.CurvatureProfile.polynomial([[[1.0]], [[0.0]], [[2.0]]], 0.0, 2.0)
    assert poly(1.5)[0, 0] == pytest.approx(1.0 + 2.0 * 2.25)
    s = jf.CurvatureProfile.sampled([0.0, 1.0, 3.0], [[[0.0]], [[2.0]], [[-2.0]]])
    assert (s.a, s.b) == (0.0, 3.0)
    assert s(2.0)[0, 0] == pytest.approx(0.0)
    t = jf.CurvatureProfile.trigonometric([[1.0]], [[[2.0]]], [[[3.0]]], 2.0, 0.0, 1.0)
    assert t(0.3)[0, 0] == pytest.approx(1.0 + 2.0 * math.cos(0.6) + 3.0 * math.sin(0.6))


def test_profile_validation():
    with pytest.raises(InvalidInputError):
        jf.CurvatureProfile.constant([[0.0, 1.0], [0.0, 0.0]], 0.0, 1.0)
    with pytest.raises(InvalidInputError):
        jf.CurvatureProfile.constant([[0.0]], 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        jf.CurvatureProfile.piecewise_constant([3.0], [[[0.0]], [[1.0]]], 0.0, 2.0)
    with pytest.raises(DomainError):
        jf.CurvatureProfile.constant([[0.0]], 0.0, 1.0)(1.5)


def test_profile_to_dict_and_interval():
    p = jf.CurvatureProfile.piecewise_constant([1.0, 2.0], [[[0.0]], [[1.0]], [[2.0]]], 0.0, 3.0)
    d = p.to_dict()
    assert d["kind"] == "piecewise-constant" and d["breakpoints"] == [1.0, 2.0]
    q = p.with_interval(1.5, 3.0)
    assert q.payload["breakpoints"].tolist() == [2.0]
    assert q(1.6)[0, 0] == 1.0 and q(2.5)[0, 0] == 2.0


def test_time_grid_hits_breakpoints():
    p = jf.CurvatureProfile.piecewise_constant([0.3333], [[[0.0]], [[1.0]]], 0.0, 1.0)
    nodes = jf.time_grid(p, 64)
    assert 0.3333 in nodes.tolist()
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert np.all(np.diff(nodes) > 0) and np.max(np.diff(nodes)) <= 1 / 64 + 1e-12


def test_flow_settings_validation():
    with pytest.raises(InvalidInputError):
        jf.FlowSettings(steps=-4)
    with pytest.raises(InvalidInputError):
        jf.FlowSettings(drift_tol=0.0)


# coefficient ---------------------------------------------------------------------

def test_coefficient_examples():
    flat = jf.CurvatureProfile.constant(np.zeros((2, 2)), 0.0, 1.0)
    A = jf.coefficient(flat, 0.5, 0.0)
    expect = np.zeros((4, 4))
    expect[:2, 2:] = np.eye(2)
    np.testing.assert_array_equal(A, expect)
    one = jf.CurvatureProfile.constant([[0.0]], 0.0, 1.0)
    np.testing.assert_array_equal(jf.coefficient(one, 0.5, -1.0), [[0.0, 1.0], [1.0, 0.0]])


@given(seeds, st.floats(0.0, 3.0), st.floats(-5.0, 5.0))
def test_coefficient_is_hamiltonian(seed, t, lam):
    A = jf.coefficient(trig_profile(seed), t, lam)
    JA = lg.symplectic_matrix(2) @ A
    assert np.max(np.abs(JA - JA.T)) == 0.0


# closed-form flows ------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.3, 1.0, 2.7])
def test_flat_flow(t):
    p = jf.CurvatureProfile.constant(np.zeros((2, 2)), 0.0, 3.0)
    F = jf.sigma_lambda(p, 0.0, t)
    assert F.same_subspace(np.vstack([t * np.eye(2), np.eye(2)]))


@pytest.mark.parametrize("t", [0.5, 2.0, math.pi, 5.0])
def test_sphere_flow(t):
    p = jf.CurvatureProfile.constant([[-1.0]], 0.0, 6.0)
    F = jf.sigma_lambda(p, 0.0, t)
    assert F.gap(np.array([[math.sin(t)], [math.cos(t)]])) < 1e-9


@pytest.mark.parametrize("t", [0.25, 1.0, 3.0])
def test_hyperbolic_flow(t):
    p = jf.CurvatureProfile.constant([[1.0]], 0.0, 3.0)
    F = jf.sigma_lambda(p, 0.0, t)
    assert F.gap(np.array([[math.sinh(t)], [math.cosh(t)]])) < 1e-9
    assert lg.intersection_dim(F) == 0


def test_sigma_at_start_and_first_zero():
    p = jf.CurvatureProfile.constant([[-1.0]], 0.0, 6.0)
    assert jf.sigma_lambda(p, 0.0, 0.0).same_subspace(lg.canonical_sigma(1))
    assert lg.intersection_dim(jf.sigma_lambda(p, 0.0, math.pi)) == 1


def test_piecewise_flow_matches_closed_form():
    # X = sin(2t)/2 on [0, 2], then continued with R = -1
    p = jf.CurvatureProfile.piecewise_constant([2.0], [[[-4.0]], [[-1.0]]], 0.0, 5.0)
    for t in [1.0, 2.0, 3.5]:
        if t <= 2.0:
            X, V = math.sin(2 * t) / 2, math.cos(2 * t)
        else:
            x0, v0 = math.sin(4.0) / 2, math.cos(4.0)
            X = x0 * math.cos(t - 2) + v0 * math.sin(t - 2)
            V = -x0 * math.sin(t - 2) + v0 * math.cos(t - 2)
        assert jf.sigma_lambda(p, 0.0, t).gap(np.array([[X], [V]])) < 1e-9


def test_time_outside_interval():
    p = jf.CurvatureProfile.constant([[0.0]], 0.0, 1.0)
    with pytest.raises(DomainError):
        jf.sigma_lambda(p, 0.0, 1.5)


@given(seeds, st.integers(1, 3))
def test_below_lower_bound_never_meets_sigma(seed, n):
    p = trig_profile(seed, n, 2, 4.0)
    lam = jf.lambda_lower_bound(p, 0.5)
    ctx = jf.FlowContext(p)
    for t in np.linspace(p.a, p.b, 9)[1:]:
        F = ctx.sigma(lam, t)
        assert lg.intersection_dim(F) == 0
        assert lg.q_singular_values(F)[-1] > 1e-4


# symplecticity ---------------------------------------------------------------------

def test_symplectic_residual_examples():
    assert jf.symplectic_residual(np.eye(4)) == 0.0
    c, s = math.cos(0.7), math.sin(0.7)
    assert jf.symplectic_residual(np.array([[c, -s], [s, c]])) < 1e-15


@given(seeds)
def test_rk4_residual_small(seed):
    p = trig_profile(seed, 3, 3, 2.0)
    fs = jf.fundamental_solution(p, 0.0, p.a, p.b, jf.FlowSettings(steps=10_000))
    assert jf.symplectic_residual(fs) < 1e-6


def test_drift_is_monitored():
    # a stiff coupled profile with far too few steps loses isotropy; the
    # start frame is generic (from sigma the iterates stay polynomials in
    # one symmetric matrix and remain exactly isotropic)
    p = jf.CurvatureProfile.constant([[-400.0, 100.0], [100.0, -300.0]], 0.0, 2.0)
    F = lg.graph_frame([[0.3, 0.1], [0.1, -0.2]])
    with pytest.raises(NumericalFailure) as info:
        jf.integrate_frame(p, 0.0, F, 0.0, 2.0, jf.FlowSettings(steps=16))
    assert 0.0 < info.value.at <= 2.0


@given(seeds)
def test_drift_below_tolerance(seed):
    p = trig_profile(seed, 3, 2, 3.0)
    ctx = jf.FlowContext(p)
    ctx.sigma_batch(np.linspace(-5.0, 0.0, 6), p.b)
    assert ctx.max_drift <= ctx.settings.drift_tol


def test_step_halving_is_fourth_order():
    p = trig_profile(11, 2, 2, 3.0)
    S = []
    for steps in (32, 64, 128):
        F = jf.integrate_frame(p, 0.0, lg.horizontal(2), p.a, p.b, jf.FlowSettings(steps=steps))
        S.append(lg.to_chart(F, lg.select_chart(F, k=0)).S)
    ratio = np.linalg.norm(S[0] - S[1]) / np.linalg.norm(S[1] - S[2])
    assert 12.0 < ratio < 20.0


@pytest.mark.parametrize("R", [[[-1.0]], [[2.0, 0.5], [0.5, -3.0]]])
def test_time_symmetry(R):
    p = jf.CurvatureProfile.constant(R, 0.0, 3.0)
    n = p.n
    F = jf.integrate_frame(p, 0.0, lg.canonical_sigma(n), 0.0, 3.0)
    G = jf.integrate_frame(p, 0.0, F, 3.0, 0.0)
    assert G.gap(lg.canonical_sigma(n)) < 1e-8


@given(seeds)
def test_omega_is_constant_along_the_flow(seed):
    rng = np.random.default_rng(seed)
    p = trig_profile(seed, 2, 2, 2.0)
    y, z = rng.normal(size=4), rng.normal(size=4)
    w0 = lg.omega(y, z)
    for t in [0.5, 1.3, 2.0]:
        Phi = jf.fundamental_solution(p, -1.0, 0.0, t).Phi
        assert abs(lg.omega(Phi @ y, Phi @ z) - w0) < 1e-6 * max(1.0, abs(w0))


# lower bound -------------------------------------------------------------------------

def test_lower_bound_examples():
    assert jf.lambda_lower_bound(jf.CurvatureProfile.constant([[0.0]], 0, 1), 1.0) == -1.0
    assert jf.lambda_lower_bound(jf.CurvatureProfile.constant(-np.eye(3), 0, 1), 0.5) == pytest.approx(-1.5)
    assert jf.lambda_lower_bound(jf.CurvatureProfile.diagonal([-1.0, -4.0], 0, 4), 1.0) == -5.0
    with pytest.raises(InvalidInputError):
        jf.lambda_lower_bound(jf.CurvatureProfile.constant([[0.0]], 0, 1), 0.0)


def test_lower_bound_for_smooth_profile():
    p = jf.CurvatureProfile.polynomial([[[0.0]], [[-1.0]]], 0.0, 6.0)
    assert jf.lambda_lower_bound(p, 1.0) == pytest.approx(-7.0, abs=1e-9)
