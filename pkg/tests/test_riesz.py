import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from kleinriesz.riesz import (ProblemSpec, Tolerances, bubble, bubble_residual, epstein_zeta,
                              frac_laplacian_periodic, grid_points, random_bandlimited,
                              riesz_apply_flat, riesz_apply_periodic, riesz_constant)
from oracles import bubble_amplitude, riesz_c_gaussian

# frozen from the Gaussian oracle (tests/oracles.py)
C_FROZEN = {(3, 2.0): 0.07957747154594767, (4, 2.0): 0.025330295910584444,
            (3, 2.5): 0.12698727186882278, (5, 3.3): 0.007173335245325335}


def test_problem_spec():
    sp = ProblemSpec(3, 2.0)
    assert sp.p == 5 and sp.s == 0.5
    with pytest.raises(ValueError):
        ProblemSpec(3, 3.0)
    with pytest.raises(ValueError):
        ProblemSpec(2, 1.0)
    with pytest.raises(ValueError):
        Tolerances(solve_tol=0)


@pytest.mark.parametrize("n, alpha", list(C_FROZEN))
def test_riesz_constant_frozen(n, alpha):
    assert abs(riesz_constant(n, alpha) / C_FROZEN[n, alpha] - 1) < 1e-10
    assert abs(riesz_c_gaussian(n, alpha) / C_FROZEN[n, alpha] - 1) < 1e-10


def test_riesz_constant_closed_forms():
    assert np.isclose(riesz_constant(3, 2.0), 1 / (4 * np.pi), rtol=1e-15)
    assert np.isclose(riesz_constant(4, 2.0), 1 / (4 * np.pi ** 2), rtol=1e-15)
    with pytest.raises(ValueError):
        riesz_constant(3, 3.0)


@given(st.integers(3, 6), st.floats(0.3, 0.95))
def test_riesz_constant_property(n, frac):
    alpha = frac * n
    assert abs(riesz_constant(n, alpha) / riesz_c_gaussian(n, alpha) - 1) < 1e-9


def test_frac_laplacian_examples():
    x = np.arange(32) * 2 * np.pi / 32
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    assert np.abs(frac_laplacian_periodic(np.full((32, 32), 3.0), 2.0)).max() < 1e-12
    assert np.allclose(frac_laplacian_periodic(np.sin(X1), 2.0), np.sin(X1), atol=1e-12)
    f = np.sin(2 * X1)
    assert np.allclose(frac_laplacian_periodic(f, 3.0), 8 * f, atol=1e-11)
    twice = frac_laplacian_periodic(frac_laplacian_periodic(f, 1.5), 1.5)
    assert np.allclose(twice, frac_laplacian_periodic(f, 3.0), atol=1e-11)


@pytest.mark.parametrize("shape", [(64, 64), (32, 32, 32)])
@pytest.mark.parametrize("alpha", [2.0, 2.5, 3 - 1e-6])
def test_riesz_inverse_identity(shape, alpha):
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = random_bandlimited(rng, shape)
        g = riesz_apply_periodic(frac_laplacian_periodic(f, alpha), alpha)
        assert np.abs(g - f).max() / np.abs(f).max() < 1e-6


def test_periodic_riesz_small_alpha_is_identity():
    f = random_bandlimited(np.random.default_rng(1), (32, 32))
    assert np.allclose(riesz_apply_periodic(f, 1e-9), f, atol=1e-7)


def test_epstein_zeta_frozen():
    # Z_{Z^3}(1): Madelung-type constant, frozen from an independent evaluation
    assert abs(epstein_zeta(1.0, 3) - -2.8372974795) < 1e-9
    # Z_{Z^2}(1) = 4 zeta(1/2) beta(1/2) (Dirichlet L-function product)
    assert abs(epstein_zeta(1.0, 2) - -3.9002649200019) < 1e-9


def test_flat_potential_of_gaussian():
    # n = 3, alpha = 2: I f(0) = int_0^inf rho f(rho) drho for radial f
    errs = []
    for h, m in ((0.25, 49), (0.125, 97)):
        X = grid_points((m,) * 3, h)
        f = np.exp(-np.sum(X ** 2, axis=-1) / 2)
        c = (m - 1) // 2
        errs.append(abs(riesz_apply_flat(f, h, 2.0, targets=[[c, c, c]])[0] - 1.0))
    # zeta-corrected rule: fourth order on smooth integrands
    assert errs[0] < 1e-4 and errs[0] / errs[1] > 12
    h = 0.25
    X = grid_points((49,) * 3, h)
    f = np.exp(-np.sum(X ** 2, axis=-1) / 2)
    # off-center against the shell formula (1/r) int rho f min(r, rho) drho
    r = 1.0
    ref = (quad(lambda p: p * p * np.exp(-p * p / 2), 0, r)[0] / r
           + quad(lambda p: p * np.exp(-p * p / 2), r, np.inf)[0])
    val = riesz_apply_flat(f, h, 2.0, targets=[[28, 24, 24]])[0]
    assert abs(val - ref) < 1e-4


def test_flat_symmetry_and_positivity():
    rng = np.random.default_rng(3)
    f = rng.uniform(0, 1, (9, 9, 9))
    If = riesz_apply_flat(f, 0.3, 2.5)
    assert np.allclose(np.rot90(If, axes=(0, 1)), riesz_apply_flat(np.rot90(f, axes=(0, 1)),
                                                                   0.3, 2.5), atol=1e-12)
    assert np.allclose(If[::-1], riesz_apply_flat(f[::-1], 0.3, 2.5), atol=1e-12)
    assert np.all(If > 0)
    assert np.all(riesz_apply_flat(np.zeros((5, 5, 5)), 0.3, 2.0) == 0)
    # fft path agrees with direct summation
    T = np.array([[0, 0, 0], [4, 4, 4], [8, 1, 3]])
    assert np.allclose(riesz_apply_flat(f, 0.3, 2.5, targets=T), If[tuple(T.T)], rtol=1e-10)


@pytest.mark.parametrize("alpha", [2.0, 2.5])
def test_bubble_amplitude_oracle(alpha):
    spec = ProblemSpec(3, alpha)
    A = bubble(spec).amplitude
    assert abs(A - bubble_amplitude(3, alpha, spec.c_n_alpha)) < 1e-12
    frozen = {2.0: 1.3160740129524924, 2.5: 1.0963714105530595}[alpha]
    assert abs(A - frozen) < 1e-12
    if alpha == 2.0:
        assert abs(A - 3 ** 0.25) < 1e-12


@given(st.floats(0.2, 5), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_bubble_scaling_covariance(t, x0):
    spec = ProblemSpec(3, 2.5)
    b, b1 = bubble(spec, t, x0), bubble(spec)
    x = np.random.default_rng(0).normal(size=(20, 3)) * 2
    lhs = b(x)
    rhs = t ** (-spec.s) * b1((x - np.array(x0)) / t)
    assert np.allclose(lhs, rhs, rtol=1e-12)
    r = np.linalg.norm(x - np.array(x0), axis=1)
    o = np.argsort(r)
    assert np.all(np.diff(lhs[o]) <= 1e-15) and np.all(lhs > 0)


def test_bubble_residual_refinement():
    # refine h and double the box together; order >= 2 per level
    spec = ProblemSpec(3, 2.0)
    res = [bubble_residual(spec, R, h) for R, h in ((2, 0.25), (4, 0.125), (8, 0.0625))]
    rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(rates >= 2)
