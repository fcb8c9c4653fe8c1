"""Residuals of the exact identities the discretization rests on: the
Riesz/fractional-Laplacian inverse pair, the Moebius distance identity,
the spherical derivative formula, chain and inverse rules, and kernel
covariance.  Used by the ``verify`` command and the tests."""
from __future__ import annotations

import numpy as np

from .geometry import chordal_distance, stereographic
from .kernel import covariance_residual, ktilde
from .mobius import (apply, compose, deriv_euclidean, deriv_spherical, inverse,
                     random_moebius)
from .riesz import ProblemSpec, frac_laplacian_periodic, random_bandlimited, riesz_apply_periodic

TOLERANCES = {"riesz_inverse": 1e-6, "distance_identity": 1e-10,
              "spherical_derivative": 1e-10, "chain_rule": 1e-10, "inverse_rule": 1e-10,
              "kernel_covariance": 1e-10}


def riesz_inverse_residual(shape, alpha, rng, n_fields=20, kmax=4):
    """max over random band-limited fields of |I((-Delta)^{a/2} f) - f| / |f|."""
    worst = 0.0
    for _ in range(n_fields):
        f = random_bandlimited(rng, shape, kmax)
        g = riesz_apply_periodic(frac_laplacian_periodic(f, alpha), alpha)
        worst = max(worst, float(np.abs(g - f).max() / np.abs(f).max()))
    return worst


def _random_triple(rng, n):
    g = random_moebius(rng, n)
    while True:
        x, y = rng.normal(size=n), rng.normal(size=n)
        if not g.inversion or min(np.linalg.norm(x - g.a), np.linalg.norm(y - g.a)) > 0.1:
            return g, x, y


def distance_identity_residual(g, x, y):
    """Relative error of |g x - g y| = |g'(x)|_e^{1/2} |g'(y)|_e^{1/2} |x - y|."""
    lhs = np.linalg.norm(apply(g, x) - apply(g, y))
    rhs = np.sqrt(deriv_euclidean(g, x) * deriv_euclidean(g, y)) * np.linalg.norm(x - y)
    return abs(lhs - rhs) / rhs


def spherical_derivative_residual(g, x):
    """Relative error of |g'(x)| = (1 + |x|^2)/(1 + |g x|^2) |g'(x)|_e, with the
    left side taken from the chordal distance identity on S^n."""
    y = x + 1e-3 * np.ones_like(x)
    # chordal distances satisfy the same two-point identity with spherical factors
    ratio = chordal_distance(apply(g, x), apply(g, y)) / chordal_distance(x, y)
    pred = np.sqrt(deriv_spherical(g, x) * deriv_spherical(g, y))
    gx = apply(g, x)
    formula = (1 + x @ x) / (1 + gx @ gx) * deriv_euclidean(g, x)
    return max(abs(ratio - pred) / pred, abs(deriv_spherical(g, x) - formula) / formula)


def chain_rule_residual(f, g, x):
    """|(f o g)'(x)|_e against |f'(g x)|_e |g'(x)|_e (relative)."""
    fg = compose(f, g)
    lhs = deriv_euclidean(fg, x)
    rhs = deriv_euclidean(f, apply(g, x)) * deriv_euclidean(g, x)
    return abs(lhs - rhs) / rhs


def inverse_rule_residual(g, x):
    """|g^{-1}'(g x)|_e |g'(x)|_e - 1 and |g^{-1}(g x) - x| / (1 + |x|)."""
    gi = inverse(g)
    gx = apply(g, x)
    return max(abs(deriv_euclidean(gi, gx) * deriv_euclidean(g, x) - 1),
               np.linalg.norm(apply(gi, gx) - x) / (1 + np.linalg.norm(x)))


def kernel_covariance_residual(g, x, y, spec):
    return float(covariance_residual(g, x, y, spec) / ktilde(x, y, spec))


def identity_suite(seed=0, n=3, alpha=2.0, n_maps=1000, n_kernel=100, riesz_alphas=None):
    """Maximum residual of each identity over random samples.

    Returns {name: (max residual, tolerance)}."""
    rng = np.random.default_rng(seed)
    out = {}
    if riesz_alphas is None:
        riesz_alphas = (2.0, 2.5, 3.0 - 1e-3)
    worst = 0.0
    for a in riesz_alphas:
        for shape in ((64, 64), (32, 32, 32)):
            worst = max(worst, riesz_inverse_residual(shape, a, rng))
    out["riesz_inverse"] = worst
    d = s = c = iv = 0.0
    for _ in range(n_maps):
        g, x, y = _random_triple(rng, n)
        f = random_moebius(rng, n)
        d = max(d, distance_identity_residual(g, x, y))
        s = max(s, spherical_derivative_residual(g, x))
        if np.linalg.norm(apply(g, x) - f.a) > 0.1 or not f.inversion:
            c = max(c, chain_rule_residual(f, g, x))
        iv = max(iv, inverse_rule_residual(g, x))
    out.update(distance_identity=d, spherical_derivative=s, chain_rule=c, inverse_rule=iv)
    spec = ProblemSpec(n, alpha)
    k = 0.0
    for _ in range(n_kernel):
        g, x, y = _random_triple(rng, n)
        k = max(k, kernel_covariance_residual(g, x, y, spec))
    out["kernel_covariance"] = k
    return {name: (float(v), TOLERANCES[name]) for name, v in out.items()}
