"""Flat Riesz potentials, the fractional Laplacian on periodic grids, the
normalizing constant c(n, alpha) and the standard bubbles."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve
from scipy.special import gamma, gammaincc


@dataclass(frozen=True)
class Tolerances:
    tail_tol: float = 1e-9
    solve_tol: float = 1e-8
    quad_tol: float = 1e-3

    def __post_init__(self):
        for k in ("tail_tol", "solve_tol", "quad_tol"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    alpha: float
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        if not 2 <= self.alpha < self.n:
            raise ValueError(f"alpha must lie in [2, n), got {self.alpha}")

    @property
    def p(self):
        return (self.n + self.alpha) / (self.n - self.alpha)

    @property
    def s(self):
        """Kernel decay exponent (n - alpha)/2."""
        return (self.n - self.alpha) / 2

    @property
    def c_n_alpha(self):
        return riesz_constant(self.n, self.alpha)

    def with_alpha(self, alpha):
        return ProblemSpec(self.n, alpha, self.tolerances)


def riesz_constant(n, alpha):
    """c(n, alpha) with (-Delta)^{alpha/2} (c |x|^{alpha-n} * f) = f."""
    if not 0 < alpha < n:
        raise ValueError(f"need 0 < alpha < n, got n={n}, alpha={alpha}")
    return gamma((n - alpha) / 2) / (2 ** alpha * np.pi ** (n / 2) * gamma(alpha / 2))


# ------------------------------------------------------------ periodic grids

def _wavenumbers(shape, length):
    L = np.broadcast_to(np.asarray(length, float), (len(shape),))
    ks = [2 * np.pi * np.fft.fftfreq(m, d=Lj / m) for m, Lj in zip(shape, L)]
    grids = np.meshgrid(*ks, indexing="ij")
    return np.sqrt(sum(g * g for g in grids))


def frac_laplacian_periodic(f, alpha, length=2 * np.pi):
    """(-Delta)^{alpha/2} on a periodic box as the multiplier |xi|^alpha."""
    f = np.asarray(f, float)
    k = _wavenumbers(f.shape, length)
    return np.real(np.fft.ifftn(np.fft.fftn(f) * k ** alpha))


def riesz_apply_periodic(f, alpha, length=2 * np.pi):
    """Riesz potential on the torus: multiplier |xi|^{-alpha}, mean mode -> 0."""
    f = np.asarray(f, float)
    k = _wavenumbers(f.shape, length)
    with np.errstate(divide="ignore"):
        m = np.where(k > 0, k ** (-float(alpha)), 0.0)
    return np.real(np.fft.ifftn(np.fft.fftn(f) * m))


def random_bandlimited(rng, shape, kmax=4, length=2 * np.pi):
    """Random real periodic field with |xi| <= kmax and zero mean."""
    k = _wavenumbers(shape, length)
    F = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * (k <= kmax) * (k > 0)
    f = np.real(np.fft.ifftn(F))
    return f / np.abs(f).max()


# ---------------------------------------------------------------- flat grids

def epstein_zeta(s, n, cutoff=5):
    """Sum over nonzero m in Z^n of |m|^{-s}, analytically continued (0 < s < n).

    Theta-function splitting at t = 1; both lattice sums converge like
    exp(-pi |m|^2).
    """
    if not 0 < s < n:
        raise ValueError("epstein_zeta implemented for 0 < s < n")
    r = np.arange(-cutoff, cutoff + 1)
    m2 = sum(g * g for g in np.meshgrid(*([r] * n), indexing="ij")).ravel().astype(float)
    m2 = m2[m2 > 0]
    x = np.pi * m2
    a, b = s / 2, (n - s) / 2
    direct = np.sum(gammaincc(a, x) * gamma(a) * x ** (-a))
    dual = np.sum(gammaincc(b, x) * gamma(b) * x ** (-b))
    total = direct + dual + 2 / (s - n) - 2 / s
    return total * np.pi ** (s / 2) / gamma(s / 2)


def ball_weight(n, alpha, cell_volume):
    """c * integral of |y|^{alpha-n} over the ball of volume ``cell_volume``."""
    omega = 2 * np.pi ** (n / 2) / gamma(n / 2)
    rb = (n * cell_volume / omega) ** (1 / n)
    return riesz_constant(n, alpha) * omega * rb ** alpha / alpha


def self_weight(n, alpha, h, correction="zeta"):
    """Weight of the node's own value in the corrected trapezoidal rule.

    "zeta": the lattice-sum correction -c Z(n - alpha) h^alpha, which makes the
    punctured trapezoidal rule exact to high order for smooth integrands;
    "ball": equal-volume ball around the node.
    """
    if correction == "zeta":
        return -riesz_constant(n, alpha) * epstein_zeta(n - alpha, n) * h ** alpha
    if correction == "ball":
        return ball_weight(n, alpha, h ** n)
    raise ValueError(f"unknown correction {correction!r}")


def flat_stencil(shape, h, alpha, correction="zeta"):
    """Kernel weights c|h j|^{alpha-n} h^n on offsets |j_i| < shape_i."""
    n = len(shape)
    axes = [np.arange(-(m - 1), m) * h for m in shape]
    G = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(g * g for g in G))
    c = riesz_constant(n, alpha)
    with np.errstate(divide="ignore"):
        W = c * r ** (alpha - n) * h ** n
    W[tuple(m - 1 for m in shape)] = self_weight(n, alpha, h, correction)
    return W


def riesz_apply_flat(f, h, alpha, correction="zeta", targets=None):
    """Riesz potential of grid samples f (zero outside the grid).

    Returns the full field, or only the values at ``targets`` (an (m, n)
    array of integer grid indices) by direct summation.
    """
    f = np.asarray(f, float)
    n = f.ndim
    c = riesz_constant(n, alpha)
    if targets is None:
        W = flat_stencil(f.shape, h, alpha, correction)
        full = fftconvolve(f, W, mode="full")
        sl = tuple(slice(m - 1, 2 * m - 1) for m in f.shape)
        return full[sl]
    targets = np.atleast_2d(np.asarray(targets, int))
    w0 = self_weight(n, alpha, h, correction)
    idx = [np.arange(m) for m in f.shape]
    out = np.empty(len(targets))
    flat = f.ravel()
    for i, t in enumerate(targets):
        d2 = np.zeros(f.shape)
        for ax in range(n):
            sh = [1] * n
            sh[ax] = -1
            d2 = d2 + ((idx[ax] - t[ax]) * h).reshape(sh) ** 2
        d2 = d2.ravel()
        me = np.ravel_multi_index(tuple(t), f.shape)
        d2[me] = 1.0
        v = c * d2 ** ((alpha - n) / 2) * h ** n
        v[me] = w0
        out[i] = v @ flat
    return out


def grid_points(shape, h, origin=None):
    n = len(shape)
    if origin is None:
        origin = [-(m - 1) * h / 2 for m in shape]
    axes = [o + np.arange(m) * h for o, m in zip(origin, shape)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


# ------------------------------------------------------------------ bubbles

@dataclass(frozen=True)
class Bubble:
    center: np.ndarray
    t: float
    amplitude: float
    s: float

    def __call__(self, x):
        x = np.asarray(x, float)
        r2 = np.sum((x - self.center) ** 2, axis=-1)
        return self.amplitude * (self.t / (self.t ** 2 + r2)) ** self.s


def bubble_profile_potential(n, alpha, epsabs=1e-13):
    """Riesz potential of the unit-amplitude profile^p at its center.

    C0 = c omega_{n-1} int_0^inf r^{alpha-1} (1 + r^2)^{-(n+alpha)/2} dr.
    """
    c = riesz_constant(n, alpha)
    omega = 2 * np.pi ** (n / 2) / gamma(n / 2)
    f = lambda r: r ** (alpha - 1) * (1 + r * r) ** (-(n + alpha) / 2)
    a, e1 = quad(f, 0, 1, epsabs=epsabs, epsrel=1e-13, limit=200)
    b, e2 = quad(f, 1, np.inf, epsabs=epsabs, epsrel=1e-13, limit=200)
    val = a + b
    if not np.isfinite(val) or e1 + e2 > 1e-10 * max(val, 1e-300):
        raise RuntimeError(f"bubble calibration quadrature did not converge (err {e1 + e2:g})")
    return c * omega * val


def bubble(spec: ProblemSpec, t=1.0, x0=None) -> Bubble:
    """Entire solution b = A (t/(t^2 + |x - x0|^2))^{(n-alpha)/2} of b = I(b^p).

    A is fixed by A^{p-1} C0 = 1, C0 from the radial quadrature above.
    """
    if t <= 0:
        raise ValueError("bubble scale must be positive")
    x0 = np.zeros(spec.n) if x0 is None else np.asarray(x0, float)
    C0 = bubble_profile_potential(spec.n, spec.alpha)
    A = C0 ** (-1 / (spec.p - 1))
    return Bubble(x0, float(t), float(A), spec.s)


def lattice_offsets(n, r):
    return np.array(list(itertools.product(range(-r, r + 1), repeat=n)))


def bubble_residual(spec: ProblemSpec, box, h, probes=None, t=1.0, correction="zeta"):
    """sup |b - I(b^p)| over probe points, with b^p truncated to [-box, box]^n.

    Probes default to the center and the points +-t/2 e_i; they must lie on
    the grid.  The truncation error decays like box^{-alpha}, so refining h
    and enlarging the box together gives a combined convergence order.
    """
    b = bubble(spec, t)
    n = spec.n
    m = int(round(2 * box / h)) + 1
    if abs((m - 1) * h - 2 * box) > 1e-9 * box:
        raise ValueError("box must be a multiple of h")
    if probes is None:
        probes = np.vstack([np.zeros(n), t / 2 * np.eye(n), -t / 2 * np.eye(n)])
    probes = np.atleast_2d(np.asarray(probes, float))
    idx = np.rint(probes / h).astype(int) + (m - 1) // 2
    off = np.abs((idx - (m - 1) // 2) * h - probes).max()
    if off > 1e-9 * h or np.any(idx < 0) or np.any(idx >= m):
        raise ValueError("probe points must be grid nodes inside the box")
    f = b(grid_points((m,) * n, h)) ** spec.p
    I = riesz_apply_flat(f, h, spec.alpha, correction, targets=idx)
    return float(np.abs(b(probes) - I).max())
