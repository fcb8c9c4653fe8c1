import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kleinriesz.analysis import (FunctionField, GridField, ManifoldInterpolant, alpha_grid,
                                 bubble_fit, chart_radius, clearance,
                                 continue_alpha, endpoint_change, householder_to,
                                 kernel_limit_gap, moving_plane_scan, reflect, rescale,
                                 unfolded_field)
from kleinriesz.geometry import SolutionField, build_chart, stereographic
from kleinriesz.mobius import INF, dilation_group, trivial_group
from kleinriesz.riesz import ProblemSpec, bubble
from oracles import sphere_constant_solution

SPEC = ProblemSpec(3, 2.0)
vecs = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


def bubble_field(x0, t=1.0, spec=SPEC):
    return FunctionField(bubble(spec, t, x0), spec.n)


# -------------------------------------------------------------- reflect

def test_reflect_example():
    assert np.array_equal(reflect([1.0, 2, 3], 1.0), [1, 2, -1])
    assert np.array_equal(reflect([1.0, 2, 3], 1.0, axis=0), [1, 2, 3])


@given(vecs, st.floats(-5, 5), st.integers(0, 2))
def test_reflect_involution_fixes_plane(x, lam, axis):
    assert np.allclose(reflect(reflect(x, lam, axis), lam, axis), x, atol=1e-12)
    y = x.copy()
    y[axis] = lam
    assert np.array_equal(reflect(y, lam, axis), y)


# ---------------------------------------------------------- moving plane

def test_clearance():
    assert clearance(1.0, [np.array([0, 0, 0.5])]) == 0.5
    assert clearance(1.0, [INF]) == -np.inf
    assert clearance(1.0, []) == np.inf


def test_centered_bubble_is_symmetric():
    rep = moving_plane_scan(bubble_field(np.zeros(3)), [0.0])
    assert not rep.skipped[0]
    assert abs(rep.min_gap[0]) < 1e-12
    assert rep.sigma_minus_measure[0] == 0 and rep.sigma_minus_raw[0] == 0


def test_off_center_bubble():
    v = bubble_field(np.array([0.2, -0.1, -1.0]))
    rep = moving_plane_scan(v, [1.0, 0.5, 0.0])
    assert rep.lambdas == sorted(rep.lambdas, reverse=True)
    assert all(g > 0 for g in rep.min_gap)
    assert all(m == 0 for m in rep.sigma_minus_measure) and rep.ok()
    assert rep.boundary_derivative < 0
    # oracle: d/dx3 of the bubble at the plane, largest at the foot of the centre
    b = bubble(SPEC, 1.0, [0.2, -0.1, -1.0])
    x = np.array([0.2, -0.1, 0.0])
    h = 1e-6
    exact = (b(x + [0, 0, h]) - b(x - [0, 0, h])) / (2 * h)
    assert exact < rep.boundary_derivative < 0


def test_bubble_above_plane_is_detected():
    rep = moving_plane_scan(bubble_field(np.array([0, 0, 1.0])), [0.0])
    assert rep.min_gap[0] < -1e-3 and rep.sigma_minus_measure[0] > 0 and not rep.ok()


def test_scan_invariant_under_axis_relabel():
    b = bubble(SPEC, 0.8, [0.3, -0.2, -0.7])
    perm = [2, 0, 1]
    v1 = FunctionField(b, 3)
    v2 = FunctionField(lambda z: b(z[:, np.argsort(perm)]), 3)
    lams = [0.5, 0.0, -0.25]
    r1 = moving_plane_scan(v1, lams, axis=2)
    r2 = moving_plane_scan(v2, lams, axis=0)
    assert np.allclose(r1.min_gap, r2.min_gap, atol=1e-9)
    assert r1.sigma_minus_measure == r2.sigma_minus_measure
    assert abs(r1.boundary_derivative - r2.boundary_derivative) < 1e-9


def test_scan_skips_without_clearance():
    v = bubble_field(np.zeros(3))
    rep = moving_plane_scan(v, [1.0, 0.0], limit_points=[INF])
    assert all(rep.skipped) and np.isnan(rep.boundary_derivative)
    rep = moving_plane_scan(v, [1.0, 0.0], limit_points=[np.array([0, 0, 0.5])])
    assert rep.skipped == [False, True]
    assert rep.limit_set_clearance == 0.5


def test_grid_field_scan_matches_function():
    b = bubble(SPEC, 1.0, [0, 0, -0.5])
    G = GridField.sample(FunctionField(b, 3), -3, 3, 41)
    rep = moving_plane_scan(G, [0.5, 0.0])
    assert all(g > -1e-3 for g in rep.min_gap) and rep.ok()
    assert rep.boundary_derivative < 0
    x = np.random.default_rng(0).uniform(-2, 2, (50, 3))
    assert np.abs(G(x) - b(x)).max() < 1e-3


def test_householder():
    b = stereographic(np.array([1.0, 0, 0]))
    Q = householder_to(b)
    e = np.zeros(4)
    e[-1] = 1
    assert np.allclose(Q @ e, b) and np.allclose(Q @ Q.T, np.eye(4))


def test_unfolded_round_constant_is_conformal_factor():
    # u = 1 on the sphere in any chart: v_hat = (2/(1 + |z|^2))^s
    ch = build_chart(trivial_group(3), 8)
    base = stereographic(np.array([0.3, 0, 0]))
    f, lim = unfolded_field(ch, np.ones(ch.size), 2.0, base=base)
    z = np.random.default_rng(1).normal(size=(20, 3))
    assert np.allclose(f(z), np.sqrt(2 / (1 + np.sum(z * z, axis=1))), rtol=1e-6)
    assert lim == []


def test_hopf_moving_plane(hopf_fine_t):
    ch, K, sol, rep = hopf_fine_t
    base = stereographic(np.array([1.0, 0, 0]))
    v, lim = unfolded_field(ch, sol.values, 2.0, base=base)
    assert len(lim) == 2
    assert all(abs(abs(p[0]) - 1) < 1e-12 and np.allclose(p[1:], 0) for p in lim)
    lams = [2.0, 1.0, 0.5, 0.1, 0.0]
    r = moving_plane_scan(v, lams, lim, axis=2)
    # lambda = 0 contains the limit points: skipped, everything above passes
    assert r.skipped == [False] * 4 + [True] and r.ok()
    assert all(g >= -1e-3 for g in r.min_gap[:4])
    assert r.limit_set_clearance == pytest.approx(0.1)
    # along x1 the planes at or below the limit point x1 = 1 are skipped
    r1 = moving_plane_scan(v, lams, lim, axis=0)
    assert r1.skipped == [False, True, True, True, True]


# --------------------------------------------------------------- rescale

def test_rescale_identity_and_normalization(hopf):
    ch, K, sol, _ = hopf
    interp = ManifoldInterpolant(ch, sol.values)
    i = int(np.argmax(sol.values))
    R = rescale(sol, ch, i, 1.0, 0.3, m=9, interp=interp)
    assert R.radius == 0.3 < chart_radius(ch, i)
    assert not R.clipped and R.center_value == sol.values[i]
    pts = R.field.points().reshape(-1, 3)
    direct = interp(ch.nodes[i] + pts / ch.eta_hat[i])
    ctr = len(pts) // 2
    mask = np.arange(len(pts)) != ctr
    assert np.allclose(R.field.values.reshape(-1)[mask], direct[mask], rtol=1e-12)
    R2 = rescale(sol, ch, i, 2.0, 0.3, m=9, interp=interp)
    assert R2.center_value == sol.values[i] / 2


def test_rescale_synthetic_scaled_field():
    # u scaled by a factor lam: v_lam(0) = 1 at the argmax
    ch = build_chart(trivial_group(3), 8)
    X = stereographic(ch.nodes)
    u = 5.0 * (1 + 0.3 * X[:, 0])
    sol = SolutionField(u, 2.0)
    i = int(np.argmax(u))
    R = rescale(sol, ch, i, float(u[i]), 1.0, m=5)
    assert R.center_value == 1.0
    assert R.field.values[2, 2, 2] == 1.0
    with pytest.raises(ValueError):
        rescale(sol, ch, i, 0.5, 1.0)


def test_rescale_clipping_warns(hopf):
    ch, K, sol, _ = hopf
    r = chart_radius(ch, 0)
    assert 0 < r <= np.pi
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        R = rescale(sol, ch, 0, 1.0, 100.0, m=5)
    assert R.clipped and R.radius == pytest.approx(r) and w


def test_kernel_limit_gap_decreasing(hopf):
    ch, K, sol, _ = hopf
    i = int(np.argmax(sol.values))
    gaps = kernel_limit_gap(ch, SPEC, i, (2, 4, 8), Lambda=2.0)
    assert gaps[0] > gaps[1] > gaps[2]


# ------------------------------------------------------------ bubble fit

def _ball_samples(m=11, R=2.0):
    g = np.linspace(-R, R, m)
    P = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    return P[np.linalg.norm(P, axis=1) <= R]


@pytest.mark.parametrize("alpha", [2.0, 2.5])
def test_bubble_fit_exact(alpha):
    spec = ProblemSpec(3, alpha)
    P = _ball_samples()
    b = bubble(spec, 0.7, [0.2, -0.1, 0.3])
    fit = bubble_fit(P, b(P), spec)
    assert fit.success and fit.interior_max and fit.fit_residual < 1e-8
    assert abs(fit.t - 0.7) < 1e-6 and np.abs(fit.x0 - [0.2, -0.1, 0.3]).max() < 1e-6
    assert abs(fit.amplitude / b.amplitude - 1) < 1e-6


def test_bubble_fit_noise():
    P = _ball_samples()
    b = bubble(SPEC, 0.7, [0.2, -0.1, 0.3])
    v = b(P) * (1 + 0.01 * np.random.default_rng(0).uniform(-1, 1, len(P)))
    fit = bubble_fit(P, v, SPEC)
    assert abs(fit.t / 0.7 - 1) < 2e-2 and np.abs(fit.x0 - [0.2, -0.1, 0.3]).max() < 2e-2
    assert 1e-3 < fit.fit_residual < 2e-2


def test_bubble_fit_constant_and_grid():
    P = _ball_samples()
    fit = bubble_fit(P, np.ones(len(P)), SPEC)
    assert not fit.interior_max and fit.fit_residual > 1e-2
    G = GridField.sample(FunctionField(bubble(SPEC, 0.5), 3), -1, 1, 9)
    assert bubble_fit(G, None, SPEC).fit_residual < 1e-8
    with pytest.raises(ValueError):
        bubble_fit(P, -np.ones(len(P)), SPEC)


# ---------------------------------------------------------- continuation

def test_alpha_grid():
    assert np.allclose(alpha_grid(2.8, 0.1), np.linspace(2, 2.8, 9))
    assert np.allclose(alpha_grid(2.25, 0.1), [2.0, 2.1, 2.2, 2.25])
    with pytest.raises(ValueError):
        alpha_grid(2.8, 0)


def test_sphere_continuation():
    ch = build_chart(trivial_group(3), 8)
    path = continue_alpha(SPEC, ch, 2.8, 0.1)
    assert path.completed and path.compact and len(path.alphas) == 9
    for a, sol, (lhs, rhs) in zip(path.alphas, path.solutions, path.mass_bound):
        assert np.abs(sol.values / sphere_constant_solution(3, a) - 1).max() < 1e-3
        assert lhs <= rhs * (1 + SPEC.tolerances.quad_tol)
    half = continue_alpha(SPEC, ch, 2.8, 0.05)
    assert endpoint_change(path, half) < 10 * SPEC.tolerances.solve_tol


def test_continuation_failures():
    ch = build_chart(trivial_group(3), 5)
    p = continue_alpha(SPEC, ch, 2.4, 0.2, bound=1.0)
    assert p.status == "bound_violation" and p.last_good_alpha == 2.0
    with pytest.raises(ValueError):
        continue_alpha(SPEC, build_chart(dilation_group(2.0, 3), 4), 3.0, 0.5,
                       check_exponent=True)
