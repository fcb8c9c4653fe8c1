"""Blow-up rescaling around a point, the kernel-limit check, and fitting of
the bubble family to a flat field."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..geometry import DiscretizedManifold, SolutionField
from ..kernel import periodized_kernel
from ..mobius import is_inf
from ..riesz import ProblemSpec
from .fields import GridField, ManifoldInterpolant


def chart_radius(chart: DiscretizedManifold, p0_index):
    """Metric radius around node p0 that the flat rescaling may use: half the
    conformal distance to the nearest finite limit point, capped by pi."""
    x0 = chart.nodes[p0_index]
    eta0 = chart.eta_hat[p0_index]
    r = np.pi
    for p in chart.group.limit_points():
        if not is_inf(p):
            r = min(r, 0.5 * eta0 * float(np.linalg.norm(x0 - p)))
    return r


def zeta_map(chart, p0_index, lam, s):
    """x -> x_p0 + x / (eta_hat(p0) lam^{1/s})."""
    x0 = chart.nodes[p0_index]
    a = 1.0 / chart.eta_hat[p0_index]
    scale = a / lam ** (1.0 / s)
    return lambda x: x0 + scale * np.asarray(x, float)


@dataclass
class RescaledField:
    field: GridField
    radius: float
    requested: float
    clipped: bool
    center_value: float
    lam: float


def rescale(u: SolutionField, chart: DiscretizedManifold, p0_index, lam, window, m=17,
            interp=None):
    """v_lambda(x) = u(zeta_lambda(x)) / lambda sampled on the cube inscribed
    in the ball of radius ``window`` (m points per axis, m odd keeps x = 0
    on the grid).

    The window is clipped to lam^{1/s} times the chart radius; the returned
    record flags the clipping and carries the radius actually used.
    """
    if lam < 1:
        raise ValueError("rescaling needs lambda >= 1")
    if window <= 0:
        raise ValueError("window must be positive")
    n, s = chart.n, (chart.n - u.alpha) / 2
    allowed = chart_radius(chart, p0_index) * lam ** (1 / s)
    radius = min(window, allowed)
    clipped = window > allowed
    if clipped:
        warnings.warn(f"rescaling window {window:g} exceeds the chart; clipped to {radius:g}")
    interp = interp or ManifoldInterpolant(chart, u.values)
    zeta = zeta_map(chart, p0_index, lam, s)
    half = radius / np.sqrt(n)
    axes = [np.linspace(-half, half, m)] * n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    vals = interp(zeta(pts)) / lam
    if m % 2:
        # grid centre is the node itself: use the nodal value, not the interpolant
        vals[len(vals) // 2] = u.values[p0_index] / lam
    G = GridField(axes, vals.reshape((m,) * n))
    return RescaledField(G, radius, window, clipped, float(u.values[p0_index] / lam), lam)


def kernel_limit_gap(chart: DiscretizedManifold, spec: ProblemSpec, p0_index, lambdas=(2, 4, 8),
                     Lambda=2.0, m=5, min_sep=None, cutoff=80):
    """sup |lam^-2 K(zeta_lam x, zeta_lam y) - c |x - y|^{alpha-n}| over sample
    pairs in B_Lambda with |x - y| >= min_sep (default Lambda/4).

    The flat limit is singular on the diagonal, so pairs closer than
    min_sep are excluded; the gap is then uniform on compacts.
    """
    n, s, c = spec.n, spec.s, spec.c_n_alpha
    min_sep = Lambda / 4 if min_sep is None else min_sep
    g = np.linspace(-Lambda, Lambda, m)
    P = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    P = P[np.linalg.norm(P, axis=1) <= Lambda + 1e-12]
    D = np.linalg.norm(P[:, None] - P[None], axis=-1)
    mask = D >= min_sep
    flat = np.where(mask, c * np.where(mask, D, 1.0) ** (-2 * s), 0.0)
    gaps = []
    for lam in lambdas:
        Z = zeta_map(chart, p0_index, lam, s)(P)
        with np.errstate(divide="ignore"):
            K = periodized_kernel(Z, Z, chart.metric, chart.group, spec, cutoff)
        gaps.append(float(np.abs(np.where(mask, K / lam ** 2 - flat, 0.0)).max()))
    return gaps


# ------------------------------------------------------------- bubble fit

@dataclass
class BubbleFit:
    t: float
    x0: np.ndarray
    amplitude: float
    fit_residual: float
    success: bool
    interior_max: bool
    message: str = ""

    def to_dict(self):
        return {"t": self.t, "x0": list(map(float, self.x0)), "amplitude": self.amplitude,
                "fit_residual": self.fit_residual, "success": self.success,
                "interior_max": self.interior_max, "message": self.message}


def bubble_fit(points, values, spec: ProblemSpec, t_max=None):
    """Least-squares fit of A (t/(t^2 + |x - x0|^2))^s to positive samples.

    Parameters are (log t, x0, log A); the relative misfit b/v - 1 is
    minimized with t <= t_max (default: diameter of the sample set).  A
    GridField may be passed as ``points`` with ``values=None``.

    Returns
    -------
    BubbleFit with the relative sup residual over the samples.
    """
    if isinstance(points, GridField):
        values = points.values.reshape(-1)
        points = points.points().reshape(-1, points.n)
    X = np.asarray(points, float)
    v = np.asarray(values, float).reshape(-1)
    if np.any(~(v > 0)):
        raise ValueError("bubble_fit needs positive samples")
    n, s = spec.n, spec.s
    cen = X.mean(axis=0)
    rad = np.linalg.norm(X - cen, axis=1)
    diam = 2 * rad.max()
    t_max = diam if t_max is None else t_max
    i = int(np.argmax(v))
    outer = rad >= 0.9 * rad.max()
    interior = bool(v[i] > v[outer].max() * (1 + 1e-12))
    # half-height radius of the profile is t
    half = v[i] * 2 ** (-s)
    near = np.abs(v - half) < 0.25 * v[i]
    t0 = float(np.median(np.linalg.norm(X[near] - X[i], axis=1))) if near.any() else diam / 4
    t0 = min(max(t0, 1e-3 * diam), t_max)
    A0 = v[i] * t0 ** s

    def model(q):
        t, x0, A = np.exp(q[0]), q[1:n + 1], np.exp(q[n + 1])
        return A * (t / (t * t + np.sum((X - x0) ** 2, axis=1))) ** s

    q0 = np.concatenate([[np.log(t0)], X[i], [np.log(A0)]])
    lo = np.full(n + 2, -np.inf)
    hi = np.full(n + 2, np.inf)
    hi[0] = np.log(t_max)
    q0[0] = min(q0[0], hi[0] - 1e-9)
    res = least_squares(lambda q: model(q) / v - 1, q0, bounds=(lo, hi), x_scale="jac",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    fit = float(np.abs(model(res.x) / v - 1).max())
    ok = bool(res.success and np.all(np.isfinite(res.x)))
    return BubbleFit(float(np.exp(res.x[0])), res.x[1:n + 1].copy(), float(np.exp(res.x[n + 1])),
                     fit, ok, interior, res.message)

