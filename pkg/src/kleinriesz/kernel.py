"""The conformally covariant kernel K~ and its periodization over the group.

On a chart with conformal factor eta_hat the kernel is

    K~(x, y) = c (eta_hat(x) eta_hat(y))^{-s} |x - y|^{-2s},   s = (n - alpha)/2,

i.e. c rho^{-2s} with rho the conformal chordal distance, and
K(p, q) = sum over the group of K~(x_p, gamma y_q).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import cdist
from scipy.special import gamma, roots_jacobi, roots_legendre

from .geometry import CylinderMetric, DiscretizedManifold, RoundMetric, round_factor, sphere_volume
from .mobius import (INF, MoebiusMap, _geometric_tail, apply, deriv_euclidean,
                     deriv_spherical, log_deriv_spherical)
from .riesz import ProblemSpec, ball_weight

DEFAULT_R0 = 1.2


class TailToleranceError(RuntimeError):
    def __init__(self, achieved, cutoff, tol):
        super().__init__(f"tail bound {achieved:.3e} > tail_tol {tol:.1e} at the maximum "
                         f"cutoff {cutoff}")
        self.achieved = achieved
        self.cutoff = cutoff


# ------------------------------------------------------------- pointwise

def ktilde(x, y, spec: ProblemSpec, eta_tilde_x=1.0, eta_tilde_y=1.0):
    """K~ in the factored form: conformal factors times c|x - y|^{alpha-n}."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(np.all(x == y, axis=-1)):
        raise ValueError("coincident points: the kernel is singular on the diagonal")
    s = spec.s
    fx = (np.sum(x * x, axis=-1) + 1) / 2
    fy = (np.sum(y * y, axis=-1) + 1) / 2
    d = np.linalg.norm(x - y, axis=-1)
    # symmetric products keep K~(x, y) == K~(y, x) bitwise
    return (np.power(np.multiply(eta_tilde_x, eta_tilde_y), -s) * (fx * fy) ** s
            * spec.c_n_alpha * d ** (-2 * s))


def ktilde_chordal(x, y, spec: ProblemSpec):
    """Same kernel as c * (chordal distance)^{alpha-n} computed on S^n."""
    from .geometry import stereographic
    X, Y = stereographic(x), stereographic(y)
    return spec.c_n_alpha * np.linalg.norm(X - Y, axis=-1) ** (-2 * spec.s)


def covariance_residual(g: MoebiusMap, x, y, spec: ProblemSpec):
    """|K~(g x, g y) - K~(x, y)| with eta_tilde carried along by the cocycle
    eta_tilde(g x) = eta_tilde(x) / |g'(x)|."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    gx, gy = apply(g, x), apply(g, y)
    if gx is INF or gy is INF:
        raise ValueError("point at the pole of the map")
    ex = 1.0 / deriv_spherical(g, x)
    ey = 1.0 / deriv_spherical(g, y)
    return np.abs(ktilde(gx, gy, spec, ex, ey) - ktilde(x, y, spec))


# ------------------------------------------------------- local integrals

def _psi(t):
    return np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)


def smooth_cutoff(r, r0):
    """C-infinity cutoff: 1 near 0, 0 for r >= r0, flat at both ends."""
    t = np.clip(np.asarray(r, float) / r0, 0.0, 1.0)
    a, b = _psi(1 - t), _psi(t)
    return a / (a + b)


def local_integral_round(n, alpha, r0, m=80):
    """int over S^n of c rho^{alpha-n} chi(rho) dV, rho the chordal distance
    from a fixed point.  Gauss-Jacobi in the polar angle absorbs the
    theta^{alpha-1} behaviour at the pole."""
    if not 0 < r0 < 2:
        raise ValueError("round-metric cutoff radius must lie in (0, 2)")
    c = (gamma((n - alpha) / 2) / (2 ** alpha * np.pi ** (n / 2) * gamma(alpha / 2)))
    th0 = 2 * np.arcsin(r0 / 2)
    x, w = roots_jacobi(m, 0.0, alpha - 1)
    th = th0 * (x + 1) / 2
    w = w * (th0 / 2) ** alpha
    rho = 2 * np.sin(th / 2)
    g = rho ** (alpha - n) * smooth_cutoff(rho, r0) * np.sin(th) ** (n - 1) / th ** (alpha - 1)
    return c * sphere_volume(n - 1) * np.sum(w * g)


def local_integral_cylinder(metric: CylinderMetric, t, alpha, r0, mr=64, mb=64):
    """Same integral on the universal cover R x S^{n-1} of the shell quotient,
    for points at radial parameters t.  Polar coordinates in the
    (tau - t, angle) half-plane; Gauss-Jacobi in the radius."""
    n = metric.n
    Q = r0 ** 2 * np.exp(2 * abs(metric.warp))
    if Q >= 4:
        raise ValueError("cutoff radius too large for this warp (need r0^2 e^{2|warp|} < 4)")
    c = (gamma((n - alpha) / 2) / (2 ** alpha * np.pi ** (n / 2) * gamma(alpha / 2)))
    s = (n - alpha) / 2
    xr, wr = roots_jacobi(mr, 0.0, alpha - 1)
    xb, wb = roots_legendre(mb)
    beta = (xb + 1) * np.pi / 2
    wb = wb * np.pi / 2
    R = np.empty(mb)
    for i, b in enumerate(beta):
        f = lambda r: 2 * (np.cosh(r * np.cos(b)) - np.cos(r * np.sin(b))) - Q
        hi = np.pi / max(np.sin(b), 1e-12)
        hi = min(hi, np.arccosh(1 + Q / 2) / max(abs(np.cos(b)), 1e-12) + 1.0, 50.0)
        R[i] = brentq(f, 1e-14, hi, xtol=1e-15)
    # (beta, radius) quadrature nodes and weights, same for every t
    r = R[:, None] * (xr[None, :] + 1) / 2
    w = wb[:, None] * wr[None, :] * (R[:, None] / 2) ** alpha
    sig = r * np.cos(beta)[:, None]
    ph = r * np.sin(beta)[:, None]
    base = 2 * (np.cosh(sig) - np.cos(ph))
    geo = sphere_volume(n - 2) * np.sin(ph) ** (n - 2) * r ** (2 - alpha)
    t = np.atleast_1d(np.asarray(t, float))
    out = np.empty(len(t))
    for i, ti in enumerate(t):
        lf = metric.log_factor(ti) + metric.log_factor(ti + sig)
        rho = np.sqrt(np.exp(lf) * base)
        g = c * rho ** (-2 * s) * smooth_cutoff(rho, r0) * np.exp(n * metric.log_factor(ti + sig)) * geo
        out[i] = np.sum(w * g)
    return out


def local_integrals(chart: DiscretizedManifold, spec: ProblemSpec, r0=DEFAULT_R0):
    m = chart.metric
    if isinstance(m, RoundMetric):
        return np.full(chart.size, local_integral_round(chart.n, spec.alpha, r0))
    if isinstance(m, CylinderMetric):
        t = np.round(np.mod(chart.levels(), m.L), 12)
        tu, inv = np.unique(t, return_inverse=True)
        return local_integral_cylinder(m, tu, spec.alpha, r0)[inv]
    raise ValueError(f"no local integral for metric {m!r}")


# --------------------------------------------------------------- assembly

@dataclass
class KernelMatrix:
    entries: np.ndarray
    diagonal_correction: np.ndarray
    tail_bound: float
    group_cutoff: int
    spec: ProblemSpec
    volume_weights: np.ndarray
    method: str = "subtraction"
    r0: float = DEFAULT_R0
    K_estimate: float = 0.0
    asymmetry: float = 0.0
    n_elements: int = 1
    local_integral: np.ndarray = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.entries)

    def operator_matrix(self):
        """A with (I f)_p = sum_q A_pq f_q."""
        A = self.entries * self.volume_weights[None, :]
        A[np.diag_indices_from(A)] += self.diagonal_correction
        return A

    def header(self):
        return {"n": self.spec.n, "alpha": self.spec.alpha, "cutoff": self.group_cutoff,
                "tail_bound": self.tail_bound, "size": self.size, "diagonal": self.method,
                "r0": self.r0, "K_estimate": self.K_estimate, "asymmetry": self.asymmetry}


def _element_stream(group):
    """Yield (shell index, [maps]) for word lengths 1, 2, ..."""
    j = 0
    while True:
        j += 1
        group.enumerate(j)
        shell = [m for m, L in zip((e[1] for e in group.elements), group.lengths) if L == j]
        if not shell:
            return
        yield j, shell


def _kernel_block(X, eta, Y, eta_y, c, s, self_block):
    d2 = cdist(X, Y, "sqeuclidean")
    r2 = eta[:, None] * eta_y[None, :] * d2
    if self_block:
        np.fill_diagonal(r2, np.inf)
    if s == 0.5:
        Kt = c / np.sqrt(r2)
    else:
        Kt = c * r2 ** (-s)
    return Kt, r2, d2


def assemble(chart: DiscretizedManifold, spec: ProblemSpec, diagonal="subtraction",
             r0=DEFAULT_R0, cutoff=None, max_cutoff=1000, min_cutoff=3, window=3) -> KernelMatrix:
    """Dense periodized kernel on the chart nodes.

    The group sum runs shell by shell (word length) until the tail estimate
    K * max_q T(y_q) * (conformal prefactors) drops below tail_tol, where T is
    the geometric extrapolation of the Poincare shell sums at y_q and K the
    largest bounded factor of the kernel over the last ``window`` shells (the
    same shells the extrapolation is fitted on).  A fixed ``cutoff``
    overrides the adaptive stop.

    diagonal: "subtraction" (smooth-cutoff singularity subtraction, default)
    or "ball" (equal-volume geodesic ball around each node).
    """
    if chart.n != spec.n:
        raise ValueError("chart and spec dimensions differ")
    X, eta, dV = chart.nodes, chart.eta_hat, chart.volume_weights
    N, n, s, c = chart.size, chart.n, spec.s, spec.c_n_alpha
    tol = spec.tolerances.tail_tol
    sub = diagonal == "subtraction"
    if diagonal not in ("subtraction", "ball"):
        raise ValueError(f"unknown diagonal method {diagonal!r}")
    r0sq = r0 * r0

    ent, r2, d2 = _kernel_block(X, eta, X, eta, c, s, True)
    S = np.zeros(N)
    if sub:
        m = r2 < r0sq
        S += np.where(m, ent * smooth_cutoff(np.sqrt(np.where(m, r2, 0)), r0), 0.0) @ dV
    del r2, d2

    group = chart.group
    tail, used, Kfac, count = 0.0, 0, 0.0, 1
    if not group.is_trivial:
        a_max = np.max(eta ** (-s))
        b_q = (eta / round_factor(X)) ** (-s)          # eta_tilde(y)^{-s}
        shells, kf = [], []
        stop = cutoff if cutoff is not None else max_cutoff
        for j, shell in _element_stream(group):
            kf.append(0.0)
            for g in shell:
                Y = apply(g, X)
                ey = eta / deriv_euclidean(g, X)
                Kt, r2, d2 = _kernel_block(X, eta, Y, ey, c, s, False)
                ent += Kt
                if sub and r2.min() < r0sq:
                    m = r2 < r0sq
                    S += np.where(m, Kt * smooth_cutoff(np.sqrt(np.where(m, r2, 0)), r0), 0.0) @ dV
                # bounded factor c|x - gy|^{-2s} ((1 + |gy|^2)/2)^s of the tail estimate
                fy = (1 + np.sum(Y * Y, axis=1)) / 2
                kf[-1] = max(kf[-1], float(np.max(c * d2.min(axis=0) ** (-s) * fy ** s)))
                count += 1
            shells.append(np.exp(s * np.array([log_deriv_spherical(g, X) for g in shell])).sum(axis=0))
            used = j
            if j >= min_cutoff:
                Kfac = max(kf[-window:])
                T, div = _geometric_tail(np.array(shells), window)
                tail = float(Kfac * a_max * np.max(b_q * T)) if not div else np.inf
                if cutoff is None and tail <= tol:
                    break
            if j >= stop:
                break
        if cutoff is None and not tail <= tol:
            raise TailToleranceError(tail, used, tol)

    asym = float(np.abs(ent - ent.T).max())
    ent = 0.5 * (ent + ent.T)
    E = None
    if sub:
        E = local_integrals(chart, spec, r0)
        D = E - S
    else:
        D = np.array([ball_weight(n, spec.alpha, v) for v in dV])
    return KernelMatrix(ent, D, tail, used, spec, dV.copy(), diagonal, r0, Kfac, asym,
                        count, E)


def flat_kernel_entries(chart: DiscretizedManifold, spec: ProblemSpec, cutoff: int):
    """Periodized flat kernel sum_gamma c|x_p - gamma y_q|^{-2s} |gamma'_e(y_q)|^s,
    computed from chart coordinates only (no conformal factors)."""
    X, s, c = chart.nodes, spec.s, spec.c_n_alpha
    d2 = cdist(X, X, "sqeuclidean")
    np.fill_diagonal(d2, np.inf)
    out = c * d2 ** (-s)
    if not chart.group.is_trivial:
        for j, shell in _element_stream(chart.group):
            if j > cutoff:
                break
            for g in shell:
                Y = apply(g, X)
                out += c * cdist(X, Y, "sqeuclidean") ** (-s) * deriv_euclidean(g, X)[None, :] ** s
    return 0.5 * (out + out.T)


def export_kernel(K: KernelMatrix, stem, fmt="npy"):
    """Write the matrix (``stem``.npy or .csv) and a JSON header."""
    header = K.header()
    if fmt == "npy":
        np.save(f"{stem}.npy", K.entries)
        np.save(f"{stem}_diag.npy", K.diagonal_correction)
    elif fmt == "csv":
        np.savetxt(f"{stem}.csv", K.entries, delimiter=",", fmt="%.17g")
        np.savetxt(f"{stem}_diag.csv", K.diagonal_correction, delimiter=",", fmt="%.17g")
    else:
        raise ValueError("fmt must be npy or csv")
    with open(f"{stem}.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
    return header


def periodized_kernel(x, y, metric, group, spec: ProblemSpec, cutoff=80):
    """K(x, y) = sum over words of length <= cutoff of K_tilde(x, g y) at
    arbitrary chart points (x != g y for all enumerated g)."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    c, s = spec.c_n_alpha, spec.s
    ex = metric.eta_hat(x)
    out = np.zeros((len(x), len(y)))
    group.enumerate(cutoff)
    for g, L in zip((e[1] for e in group.elements), group.lengths):
        if L > cutoff:
            break
        gy = apply(g, y)
        Kt, _, _ = _kernel_block(x, ex, gy, metric.eta_hat(gy), c, s, False)
        out += Kt
    return out
