"""Fields on flat charts: grid samples with cubic interpolation, closed-form
fields, and interpolation of nodal solutions on the manifold."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import RBFInterpolator, RegularGridInterpolator

from ..geometry import DiscretizedManifold, inverse_stereographic, stereographic
from ..mobius import INF


class FunctionField:
    """A flat field given by a callable on (m, n) arrays."""

    def __init__(self, func, n):
        self.func = func
        self.n = n

    def __call__(self, z):
        z = np.asarray(z, float)
        return self.func(np.atleast_2d(z)).reshape(z.shape[:-1])


class GridField:
    """Samples on a regular grid, evaluated by tensor-product cubic
    interpolation (linear on grids with fewer than 4 points per axis)."""

    def __init__(self, axes, values):
        self.axes = [np.asarray(a, float) for a in axes]
        self.values = np.asarray(values, float)
        self.n = len(self.axes)
        method = "cubic" if min(len(a) for a in self.axes) >= 4 else "linear"
        self._interp = RegularGridInterpolator(self.axes, self.values, method=method,
                                               bounds_error=True)

    @classmethod
    def sample(cls, field, lo, hi, m):
        n = field.n
        lo = np.broadcast_to(np.asarray(lo, float), (n,))
        hi = np.broadcast_to(np.asarray(hi, float), (n,))
        axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, field(pts.reshape(-1, n)).reshape(pts.shape[:-1]))

    def points(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def __call__(self, z):
        z = np.asarray(z, float)
        return self._interp(z.reshape(-1, self.n)).reshape(z.shape[:-1])


class ManifoldInterpolant:
    """Interpolates nodal values of a function on M at arbitrary chart points.

    Radial basis functions on a smooth embedding of M (round sphere in
    R^{n+1}, or the torus-like embedding of the shell quotient), so points
    outside the fundamental domain are reduced by the group automatically.
    """

    def __init__(self, chart: DiscretizedManifold, values, kernel=None, degree=None):
        self.chart = chart
        if kernel is None:
            # degree-2 polynomials are degenerate on the product embedding
            kernel, degree = ("quintic", 2) if chart.chart_kind == "sphere-full-chart" else ("cubic", 1)
        self._rbf = RBFInterpolator(chart.embed(), np.asarray(values, float),
                                    kernel=kernel, degree=degree)

    def __call__(self, x):
        x = np.asarray(x, float)
        return self._rbf(self.chart.embed(x.reshape(-1, x.shape[-1]))).reshape(x.shape[:-1])


def householder_to(b):
    """Orthogonal Q (a reflection) with Q e_{n+1} = b on S^n."""
    b = np.asarray(b, float)
    e = np.zeros_like(b)
    e[-1] = 1.0
    v = e - b
    if np.linalg.norm(v) < 1e-15:
        return np.eye(len(b))
    v /= np.linalg.norm(v)
    return np.eye(len(b)) - 2 * np.outer(v, v)


def unfolded_field(chart: DiscretizedManifold, values, alpha, base=None, interp=None):
    """v_hat of a nodal solution in a stereographic chart with projection
    base point ``base`` (a point of S^n; default the chart's own, e_{n+1}).

    v_hat(z) = u(X) eta_tilde(X)^s (2/(1 + |z|^2))^s with X = Q psi(z).
    Returns (FunctionField, limit points of the group in the new chart).
    """
    n = chart.n
    s = (n - alpha) / 2
    interp = interp or ManifoldInterpolant(chart, values)
    Q = np.eye(n + 1) if base is None else householder_to(base)

    def to_old(z):
        X = stereographic(z) @ Q.T
        return inverse_stereographic(X)

    def f(z):
        x = to_old(z)
        eta_t = chart.metric.eta_tilde(x)
        return interp(x) * eta_t ** s * (2 / (1 + np.sum(z * z, axis=1))) ** s

    lim = []
    for p in chart.group.limit_points():
        X = np.zeros(n + 1)
        X[-1] = 1.0
        if p is not INF:
            X = stereographic(p)
        z = inverse_stereographic(Q.T @ X)
        lim.append(z)
    return FunctionField(f, n), lim
