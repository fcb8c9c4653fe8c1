"""Moving-plane diagnostics for an unfolded field on a flat chart."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..mobius import is_inf
from .fields import GridField

INTERP_FLOOR = 1e-3


def reflect(x, lam, axis=-1):
    """x_lambda: reflection of x across the hyperplane {x_axis = lam}."""
    y = np.array(x, dtype=float, copy=True)
    y[..., axis] = 2 * lam - y[..., axis]
    return y


@dataclass
class MovingPlaneReport:
    lambdas: list
    sigma_minus_measure: list
    min_gap: list
    skipped: list
    clearance: list
    boundary_derivative: float = float("nan")
    limit_set_clearance: float = float("nan")
    floor: float = INTERP_FLOOR
    axis: int = -1
    sigma_minus_raw: list = field(default_factory=list)
    n_samples: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def rows(self):
        return [(l, m, g, int(sk), c, r, k) for l, m, g, sk, c, r, k in
                zip(self.lambdas, self.sigma_minus_measure, self.min_gap, self.skipped,
                    self.clearance, self.sigma_minus_raw, self.n_samples)]

    def ok(self):
        """Every scanned (non-skipped) lambda passes the floor test."""
        return all(sk or (g >= -self.floor and m == 0.0) for g, m, sk in
                   zip(self.min_gap, self.sigma_minus_measure, self.skipped))


def clearance(lam, limit_points, axis=-1):
    """Signed distance from the half-space {x_axis >= lam} to the limit points.

    A point at infinity lies in the closure of every half-space."""
    c = np.inf
    for p in limit_points:
        if is_inf(p) or not np.all(np.isfinite(p)):
            return -np.inf
        c = min(c, lam - float(np.asarray(p)[axis]))
    return c


def moving_plane_scan(vhat, lambdas, limit_points=(), axis=-1, lo=-4.0, hi=4.0, m=32,
                      floor=INTERP_FLOOR):
    """Compare v_hat with its reflection over Sigma_lambda = {x_axis > lambda}.

    Parameters
    ----------
    vhat : GridField or callable flat field
        A GridField is sampled at its own nodes and reflected values come
        from its tensor-product cubic interpolation.  Any other field is
        evaluated directly at the nodes of the grid [lo, hi]^n (m points per
        axis) and at their reflections.
    lambdas : iterable of float
        Plane positions; scanned in decreasing order.
    limit_points : list
        Sampled limit set in the same chart (may contain INF).
    floor : float
        Interpolation tolerance. Sigma_lambda^- is measured as the set where
        v_hat_lambda - v_hat < -floor; the raw measure (< 0) is also kept.

    Returns
    -------
    MovingPlaneReport
    """
    if isinstance(vhat, GridField):
        axes = vhat.axes
        vals = vhat.values.reshape(-1)
    else:
        axes = [np.linspace(lo, hi, m)] * vhat.n
    n = len(axes)
    ax = axis % n
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    if not isinstance(vhat, GridField):
        vals = vhat(pts)
    lams = sorted({float(l) for l in lambdas}, reverse=True)
    cell = np.prod([a[1] - a[0] for a in axes])
    lo_ax, hi_ax = axes[ax][0], axes[ax][-1]
    rep = MovingPlaneReport([], [], [], [], [], floor=floor, axis=axis)
    for lam in lams:
        cl = clearance(lam, limit_points, ax)
        rep.lambdas.append(lam)
        rep.clearance.append(cl)
        xn = pts[:, ax]
        sel = (xn >= lam - 1e-12) & (2 * lam - xn >= lo_ax - 1e-12)
        if cl <= 0 or not np.any(sel) or not lo_ax < lam < hi_ax:
            rep.skipped.append(True)
            for lst in (rep.min_gap, rep.sigma_minus_measure, rep.sigma_minus_raw):
                lst.append(float("nan"))
            rep.n_samples.append(0)
            continue
        z = pts[sel]
        zr = reflect(z, lam, ax)
        zr[:, ax] = np.clip(zr[:, ax], lo_ax, hi_ax)
        gap = vhat(zr) - vals[sel]
        rep.skipped.append(False)
        rep.min_gap.append(float(gap.min()))
        rep.sigma_minus_measure.append(float(cell * np.count_nonzero(gap < -floor)))
        rep.sigma_minus_raw.append(float(cell * np.count_nonzero(gap < 0)))
        rep.n_samples.append(int(sel.sum()))
    done = [c for c, sk in zip(rep.clearance, rep.skipped) if not sk]
    if done:
        rep.limit_set_clearance = float(min(done))
    if 0.0 in lams and clearance(0.0, limit_points, ax) > 0:
        rep.boundary_derivative = boundary_derivative(vhat, ax, axes)
    return rep


def boundary_derivative(vhat, axis=-1, axes=None):
    """Largest one-sided (second order) d v_hat / d x_axis over the plane
    {x_axis = 0}, from the x_axis > 0 side, with the grid spacing as step.
    Negative means v_hat decreases into Sigma_0 everywhere on the plane."""
    axes = vhat.axes if axes is None else axes
    n = len(axes)
    ax = axis % n
    h = axes[ax][1] - axes[ax][0]
    others = [a for i, a in enumerate(axes) if i != ax]
    P = np.stack(np.meshgrid(*others, indexing="ij"), axis=-1).reshape(-1, n - 1)

    def at(xn):
        return vhat(np.insert(P, ax, xn, axis=1))
    d = (-3 * at(0.0) + 4 * at(h) - at(2 * h)) / (2 * h)
    return float(d.max())
