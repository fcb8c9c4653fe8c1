"""Stereographic charts, conformal factors and quadrature on fundamental
domains.

Conventions: psi maps R^n onto S^n minus the base point e_{n+1}, with
psi(0) = -e_{n+1}.  A conformally flat metric on the chart is written
eta_hat(x)^2 |dx|^2, eta_hat = eta_tilde(psi(x)) * 2/(1 + |x|^2), where
eta_tilde is the conformal factor relative to the round metric.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm, logm
from scipy.special import gamma, roots_gegenbauer

from .mobius import INF, KleinianGroup, MoebiusMap, apply, deriv_euclidean


def sphere_volume(n):
    """Volume of the unit sphere S^n in R^{n+1}."""
    return 2 * np.pi ** ((n + 1) / 2) / gamma((n + 1) / 2)


def stereographic(x):
    """psi: R^n -> S^n.  Accepts a point, a batch or INF (-> base point)."""
    if x is INF:
        raise ValueError("dimension unknown for INF; use stereographic_inf(n)")
    x = np.asarray(x, float)
    X = np.atleast_2d(x)
    r2 = np.einsum("ij,ij->i", X, X)
    out = np.empty((len(X), X.shape[1] + 1))
    fin = np.isfinite(r2)
    out[fin, :-1] = 2 * X[fin] / (1 + r2[fin, None])
    out[fin, -1] = (r2[fin] - 1) / (1 + r2[fin])
    out[~fin] = 0.0
    out[~fin, -1] = 1.0
    return out[0] if x.ndim == 1 else out


def base_point(n):
    e = np.zeros(n + 1)
    e[-1] = 1.0
    return e


def inverse_stereographic(X, tol=1e-15):
    """psi^{-1}; the base point maps to INF (for a batch: a row of +inf)."""
    X = np.asarray(X, float)
    Y = np.atleast_2d(X)
    den = 1.0 - Y[:, -1]
    pole = den <= tol
    if X.ndim == 1 and pole[0]:
        return INF
    with np.errstate(divide="ignore", invalid="ignore"):
        out = Y[:, :-1] / den[:, None]
    out[pole] = np.inf
    return out[0] if X.ndim == 1 else out


def chordal_distance(x, y):
    """|psi(x) - psi(y)| evaluated in the chart."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    nx = np.sum(x * x, axis=-1)
    ny = np.sum(y * y, axis=-1)
    return 2 * np.linalg.norm(x - y, axis=-1) / np.sqrt((1 + nx) * (1 + ny))


def round_factor(x):
    """2/(1 + |x|^2), the round conformal factor in the chart."""
    x = np.asarray(x, float)
    return 2.0 / (1.0 + np.sum(x * x, axis=-1))


def sphere_nodes(n, h):
    """Quadrature on S^n (embedded in R^{n+1}) with spacing about h.

    Nested latitude rings: at each level the height z is a Gauss-Gegenbauer
    node for the weight (1 - z^2)^{(n-2)/2}, and each ring is a scaled copy of
    a grid on S^{n-1} refined so that its spacing stays near h.  The weights
    integrate constants exactly, and the node set is invariant under every
    coordinate reflection (this keeps the l = 1 harmonics, the directions
    of the conformal orbit on the sphere, out of symmetric iterations).
    """
    if n == 1:
        # even counts keep every ring symmetric under all coordinate
        # reflections
        m = 2 * max(2, int(round(np.pi / h)))
        phi = (np.arange(m) + 0.5) * 2 * np.pi / m
        return np.c_[np.cos(phi), np.sin(phi)], np.full(m, 2 * np.pi / m)
    N = max(2, int(round(np.pi / h)))
    z, w = roots_gegenbauer(N, (n - 1) / 2)
    pts, wts = [], []
    for zi, wi in zip(z, w):
        rad = np.sqrt(1 - zi * zi)
        sub, sw = sphere_nodes(n - 1, h / rad)
        pts.append(np.c_[np.full(len(sub), zi), rad * sub])
        wts.append(wi * sw)
    return np.vstack(pts), np.concatenate(wts)


# ------------------------------------------------------------------ metrics

class RoundMetric:
    """Round metric of S^n in the stereographic chart (eta_tilde = 1)."""

    kind = "round"

    def __init__(self, n):
        self.n = n

    def eta_hat(self, x):
        return round_factor(x)

    def eta_tilde(self, x):
        return np.ones(np.shape(x)[:-1])

    def embed(self, x):
        """Smooth embedding of the manifold, used for interpolation."""
        return stereographic(np.atleast_2d(x))

    def to_dict(self):
        return {"kind": self.kind}


class CylinderMetric:
    """Metric on the shell quotient R^n \\ {0} / <x -> k A x>.

    eta_hat(x) = exp(warp * W(t)) / |x|, t = log|x|, W(t) = cos(2 pi t / L),
    L = log k.  With warp = 0 this is the product metric dt^2 + g_{S^{n-1}};
    any warp keeps it invariant under the deck group.
    """

    kind = "cylinder"

    def __init__(self, n, k, rotation=None, warp=0.0):
        self.n = n
        self.k = float(k)
        self.L = np.log(self.k)
        self.A = np.eye(n) if rotation is None else np.asarray(rotation, float)
        self.warp = float(warp)
        self._logA = None if np.allclose(self.A, np.eye(n)) else np.real(logm(self.A))

    def W(self, t):
        return np.cos(2 * np.pi * np.asarray(t) / self.L)

    def log_factor(self, t):
        """log of exp(warp W(t)), the part of eta_hat beyond 1/|x|."""
        return self.warp * self.W(t)

    def eta_hat(self, x):
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        return np.exp(self.log_factor(np.log(r))) / r

    def eta_tilde(self, x):
        return self.eta_hat(x) / round_factor(x)

    def rotation_power(self, tau):
        """A^tau (tau real), via the matrix logarithm."""
        if self._logA is None:
            return np.eye(self.n)
        return expm(tau * self._logA)

    def embed(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        r = np.linalg.norm(x, axis=1)
        t = np.log(r)
        om = x / r[:, None]
        if self._logA is not None:
            om = np.stack([self.rotation_power(-ti / self.L) @ o for ti, o in zip(t, om)])
        th = 2 * np.pi * t / self.L
        rho = self.L / (2 * np.pi)
        return np.c_[rho * np.cos(th), rho * np.sin(th), om]

    def to_dict(self):
        return {"kind": self.kind, "k": self.k, "warp": self.warp,
                "rotation": self.A.ravel().tolist()}


# ------------------------------------------------------------------ charts

@dataclass(frozen=True, eq=False)
class DiscretizedManifold:
    n: int
    nodes: np.ndarray
    flat_weights: np.ndarray
    eta_hat: np.ndarray
    group: KleinianGroup
    chart_kind: str
    metric: object
    domain: dict = field(default_factory=dict)
    resolution: int = 0

    def __post_init__(self):
        for name in ("nodes", "flat_weights", "eta_hat"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.flat_weights <= 0) or np.any(self.eta_hat <= 0):
            raise ValueError("weights and conformal factors must be positive")

    @property
    def size(self):
        return len(self.nodes)

    @property
    def volume_weights(self):
        """dV_g at each node: w * eta_hat^n."""
        return self.flat_weights * self.eta_hat ** self.n

    def volume(self):
        return float(np.sum(self.volume_weights))

    def exact_volume(self):
        if self.chart_kind == "sphere-full-chart":
            return sphere_volume(self.n)
        m = self.metric
        # dV = exp(n warp W(t)) dt dS^{n-1}; integrate W over one period
        t = np.linspace(0, m.L, 4096, endpoint=False)
        return float(np.mean(np.exp(self.n * m.log_factor(t))) * m.L * sphere_volume(self.n - 1))

    def in_domain(self, x):
        x = np.atleast_2d(x)
        d = self.domain
        if d["kind"] == "whole":
            return np.all(np.isfinite(x), axis=1)
        r = np.linalg.norm(x, axis=1)
        return (r >= d["inner"] * (1 - 1e-14)) & (r < d["outer"])

    def transport(self, g: MoebiusMap) -> "DiscretizedManifold":
        """Same quadrature moved to the image domain g(F)."""
        y = apply(g, self.nodes)
        w = self.flat_weights * deriv_euclidean(g, self.nodes) ** self.n
        dom = dict(self.domain)
        if dom["kind"] == "shell" and not g.inversion:
            dom["inner"] *= g.scale
            dom["outer"] *= g.scale
        else:
            dom = {"kind": "image", "of": self.domain}
        return replace(self, nodes=y, flat_weights=w, eta_hat=self.metric.eta_hat(y),
                       domain=dom)

    def levels(self):
        """Radial parameter t = log|x| per node (shell charts)."""
        return np.log(np.linalg.norm(self.nodes, axis=1))

    def embed(self, x=None):
        return self.metric.embed(self.nodes if x is None else x)


def mesh_width(resolution):
    return np.pi / resolution


def build_chart(group: KleinianGroup, resolution: int, n: int | None = None,
                warp: float = 0.0, radial_levels: int | None = None) -> DiscretizedManifold:
    """Quadrature nodes on a fundamental domain of Omega(group).

    Trivial group: sphere nodes pulled back through psi.  Cyclic dilation
    group <x -> k A x>: t = log|x| uniform on [0, log k) times a sphere grid on
    S^{n-1}, each level rotated by A^{t/L} so the deck map is an exact shift.
    ``resolution`` sets the mesh width h = pi/resolution.
    """
    n = group.n if n is None else n
    if n != group.n:
        raise ValueError(f"group acts on R^{group.n}, chart requested for n = {n}")
    if n < 3:
        raise ValueError("dimension n must be at least 3")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    h = mesh_width(resolution)
    if group.is_trivial:
        if warp:
            raise ValueError("warp applies only to dilation-shell charts")
        X, w = sphere_nodes(n, h)
        # put the ring axis on the projection axis: no node hits the base point
        x = inverse_stereographic(np.roll(X, -1, axis=1))
        eta = round_factor(x)
        return DiscretizedManifold(n, x, w / eta ** n, eta, group, "sphere-full-chart",
                                   RoundMetric(n), {"kind": "whole"}, resolution)
    dd = group.dilation_data()
    if dd is None:
        raise ValueError("unsupported group: only the trivial group and cyclic "
                         "dilation-rotation groups have charts")
    k, A = dd
    metric = CylinderMetric(n, k, A, warp)
    L = metric.L
    Nt = radial_levels or max(4, int(round(L / h)))
    t = (np.arange(Nt) + 0.5) * L / Nt
    om, ow = sphere_nodes(n - 1, h)
    pts, wts = [], []
    for ti in t:
        R = metric.rotation_power(ti / L)
        pts.append(np.exp(ti) * om @ R.T)
        wts.append(ow * np.exp(n * ti) * L / Nt)
    x = np.vstack(pts)
    return DiscretizedManifold(n, x, np.concatenate(wts), metric.eta_hat(x), group,
                               "dilation-shell", metric,
                               {"kind": "shell", "inner": 1.0, "outer": k}, resolution)


# ------------------------------------------------------------------ fields

@dataclass
class SolutionField:
    """Positive nodal values of u on M."""
    values: np.ndarray
    alpha: float
    residual_history: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if np.any(~(self.values > 0)):
            raise ValueError("solution values must be positive")


def unfold(u: SolutionField, chart: DiscretizedManifold) -> np.ndarray:
    """v_hat = u * eta_hat^{(n - alpha)/2} at the chart nodes."""
    s = (chart.n - u.alpha) / 2
    return u.values * chart.eta_hat ** s


def pushdown(vhat, chart: DiscretizedManifold, alpha: float) -> SolutionField:
    s = (chart.n - alpha) / 2
    return SolutionField(np.asarray(vhat, float) / chart.eta_hat ** s, alpha)


def export_chart_csv(chart: DiscretizedManifold, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{i}" for i in range(chart.n)] + ["weight", "eta_hat"])
        for x, w, e in zip(chart.nodes, chart.flat_weights, chart.eta_hat):
            wr.writerow([repr(float(v)) for v in x] + [repr(float(w)), repr(float(e))])
