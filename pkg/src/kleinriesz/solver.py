"""Discrete I_alpha, its inverse P_alpha, the nonlinear solve of
u = I_alpha(u^p), the order-alpha Yamabe quotient and the a-priori
integral bound."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import minimize

from .geometry import DiscretizedManifold, SolutionField
from .kernel import KernelMatrix
from .riesz import ProblemSpec

log = logging.getLogger(__name__)


class IllConditioned(RuntimeError):
    def __init__(self, residual, cond):
        super().__init__(f"linear solve residual {residual:.2e} (condition ~ {cond:.2e})")
        self.residual = residual
        self.cond = cond


def _op(K: KernelMatrix):
    """Cached operator matrix and its LU factors."""
    cache = K.__dict__.setdefault("_cache", {})
    if "A" not in cache:
        cache["A"] = K.operator_matrix()
    return cache


def operator_matrix(K: KernelMatrix):
    return _op(K)["A"]


def apply_I(K: KernelMatrix, chart: DiscretizedManifold, f):
    """(I f)_p = sum_q K(p, q) dV_q f_q plus the diagonal correction."""
    f = np.asarray(f, float)
    if f.shape[0] != chart.size or K.size != chart.size:
        raise ValueError("field, chart and kernel sizes differ")
    return operator_matrix(K) @ f


def condition_number(K: KernelMatrix):
    """2-norm condition number of the symmetrized operator W^1/2 A W^-1/2."""
    cache = _op(K)
    if "cond" not in cache:
        w = np.sqrt(K.volume_weights)
        B = cache["A"] * w[:, None] / w[None, :]
        ev = np.linalg.eigvalsh(0.5 * (B + B.T))
        cache["cond"] = float(np.abs(ev).max() / np.abs(ev).min())
        cache["eig_min"] = float(ev.min())
    return cache["cond"]


def apply_P(K: KernelMatrix, chart: DiscretizedManifold, u, refine=2, rtol=1e-9):
    """f with I f = u: LU solve plus iterative refinement."""
    cache = _op(K)
    A = cache["A"]
    if "lu" not in cache:
        cache["lu"] = lu_factor(A)
    u = np.asarray(u, float)
    f = lu_solve(cache["lu"], u)
    for _ in range(refine):
        r = u - A @ f
        f = f + lu_solve(cache["lu"], r)
    res = np.abs(A @ f - u).max() / max(np.abs(u).max(), 1e-300)
    if res > rtol:
        raise IllConditioned(res, condition_number(K))
    return f


def inner_w(chart, u, v):
    return float(np.sum(chart.volume_weights * u * v))


# ------------------------------------------------------------------ solve

@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual: float
    min_value: float
    max_value: float
    yamabe_alpha_estimate: float = float("nan")
    mass_bound_lhs: float = float("nan")
    mass_bound_rhs: float = float("nan")
    status: str = ""
    newton_steps: int = 0
    picard_steps: int = 0
    residual_history: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def residual(K, chart, spec, u):
    return u - apply_I(K, chart, u ** spec.p)


def jacobian(K, chart, spec, u):
    """J = id - p A diag(u^{p-1})."""
    A = operator_matrix(K)
    J = -spec.p * A * (u ** (spec.p - 1))[None, :]
    J[np.diag_indices_from(J)] += 1.0
    return J


def initial_guess(K, chart, spec):
    """Constant c0 with c0 = c0^p mean(I 1), the exact constant solution
    when I 1 is constant.  Uses only I, not its inverse."""
    m = float(np.sum(chart.volume_weights * apply_I(K, chart, np.ones(chart.size))) / chart.volume())
    if m <= 0:
        raise ValueError("mean of I(1) is not positive; no constant initial guess")
    return np.full(chart.size, m ** (-1 / (spec.p - 1)))


def solve(spec: ProblemSpec, chart: DiscretizedManifold, K: KernelMatrix, u0=None,
          max_iter=50, theta=0.5, picard_max=200, tol=None, with_yamabe=False,
          with_mass_bound=True):
    """Damped Newton for F(u) = u - I(u^p) = 0.

    Each step halves until the sup residual drops with u > 0; if halving
    fails, damped Picard u <- (1 - theta) u + theta I(u^p) takes over until
    the residual has decreased.  Returns (SolutionField, SolveReport).
    """
    tol = spec.tolerances.solve_tol if tol is None else tol
    u = initial_guess(K, chart, spec) if u0 is None else np.array(u0, float)
    if u.shape != (chart.size,):
        raise ValueError("initial guess has the wrong size")
    if np.any(~(u > 0)):
        raise ValueError("initial guess must be positive")
    F = residual(K, chart, spec, u)
    r = float(np.abs(F).max())
    hist = [r]
    it = newton = picard = 0
    status = "converged" if r < tol else ""
    while r >= tol and it < max_iter:
        it += 1
        delta = np.linalg.solve(jacobian(K, chart, spec, u), -F)
        tau, accepted, lost_positivity = 1.0, False, False
        while tau > 2.0 ** -30:
            un = u + tau * delta
            if np.all(un > 0):
                Fn = residual(K, chart, spec, un)
                rn = float(np.abs(Fn).max())
                if rn < r:
                    accepted = True
                    break
            else:
                lost_positivity = True
            tau *= 0.5
        if accepted:
            newton += 1
        else:
            log.info("Newton stalled at residual %.3e; damped Picard fallback", r)
            un = u
            for _ in range(picard_max):
                un = (1 - theta) * un + theta * apply_I(K, chart, un ** spec.p)
                picard += 1
                if np.any(~(un > 0)):
                    status = "positivity_lost"
                    break
                Fn = residual(K, chart, spec, un)
                rn = float(np.abs(Fn).max())
                if rn < r:
                    accepted = True
                    break
            if not accepted:
                status = status or ("positivity_lost" if lost_positivity else "stalled")
                break
        u, F, r = un, Fn, rn
        hist.append(r)
        log.debug("iteration %d residual %.3e (tau %.3g)", it, r, tau)
    if r < tol:
        status = "converged"
    elif not status:
        status = "max_iter"
    sol = SolutionField(u, spec.alpha, hist)
    rep = SolveReport(status == "converged", it, r, float(u.min()), float(u.max()),
                      status=status, newton_steps=newton, picard_steps=picard,
                      residual_history=hist)
    if with_mass_bound and rep.converged:
        rep.mass_bound_lhs, rep.mass_bound_rhs = mass_bound_check(spec, chart, K, sol)
    if with_yamabe:
        rep.yamabe_alpha_estimate = yamabe_alpha(spec, chart, K)
    return sol, rep


# ----------------------------------------------------------------- Yamabe

def rayleigh_quotient(spec, chart, K, phi):
    """int phi P phi / (int phi^{2n/(n-alpha)})^{(n-alpha)/n}."""
    dV = chart.volume_weights
    q = 2 * spec.n / (spec.n - spec.alpha)
    num = inner_w(chart, phi, apply_P(K, chart, phi))
    den = np.sum(dV * phi ** q) ** (2 / q)
    return num / den


def yamabe_alpha(spec: ProblemSpec, chart: DiscretizedManifold, K: KernelMatrix,
                 n_random=5, seed=0, max_iter=300):
    """Least discrete Rayleigh quotient found from the constant start and
    ``n_random`` random positive starts (bound-constrained L-BFGS)."""
    dV = chart.volume_weights
    q = 2 * spec.n / (spec.n - spec.alpha)

    def fg(phi):
        Pphi = apply_P(K, chart, phi)
        num = np.sum(dV * phi * Pphi)
        S = np.sum(dV * phi ** q)
        den = S ** (2 / q)
        Q = num / den
        g_num = 2 * dV * Pphi
        g_den = 2 * S ** (2 / q - 1) * dV * phi ** (q - 1)
        return Q, (g_num - Q * g_den) / den

    rng = np.random.default_rng(seed)
    starts = [np.ones(chart.size)] + [rng.uniform(0.5, 1.5, chart.size) for _ in range(n_random)]
    best = rayleigh_quotient(spec, chart, K, starts[0])
    for phi0 in starts:
        res = minimize(fg, phi0, jac=True, method="L-BFGS-B",
                       bounds=[(1e-8, None)] * chart.size,
                       options={"maxiter": max_iter, "ftol": 1e-13, "gtol": 1e-10})
        best = min(best, float(res.fun))
    return best


def mass_bound_check(spec, chart, K, u: SolutionField):
    """A priori mass bound (int u^p dV, max|P 1|^{(n+alpha)/(2 alpha)} vol)."""
    dV = chart.volume_weights
    lhs = float(np.sum(dV * u.values ** spec.p))
    P1 = apply_P(K, chart, np.ones(chart.size))
    rhs = float(np.abs(P1).max() ** ((spec.n + spec.alpha) / (2 * spec.alpha)) * dV.sum())
    return lhs, rhs


# -------------------------------------------------------- flat-form check

def flat_residual(spec, chart, K: KernelMatrix, flat_entries, vhat):
    """Residual of the unfolded equation v = I_flat(v^p) at the nodes.

    flat_entries from kernel.flat_kernel_entries; the node's own singular
    weight is carried over from K in flat units (scaled by eta_hat^{-alpha}).
    """
    vp = vhat ** spec.p
    D = K.diagonal_correction * chart.eta_hat ** (-spec.alpha)
    return vhat - (flat_entries @ (chart.flat_weights * vp) + D * vp)
