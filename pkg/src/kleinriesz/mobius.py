"""Moebius maps of R^n + {inf}, conformal derivatives, Kleinian groups and
Poincare series.

Every map is stored in the normal form

    gamma(x) = b + scale * R @ iota(x - a)

with iota either the identity or the unit inversion x -> x/|x|^2.  For
similarities (no inversion) the pre-translation is canonicalized to a = 0.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import polar
from scipy.optimize import brentq
from scipy.spatial import cKDTree

DEDUP_TOL = 1e-8


class _Infinity:
    """Tagged point at infinity.  There is exactly one instance, ``INF``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_inf(x) -> bool:
    return x is INF


class PoleError(ValueError):
    """Raised when a derivative is requested at the pole of a map."""


@dataclass(frozen=True, eq=False)
class MoebiusMap:
    rotation: np.ndarray
    scale: float
    inversion: bool
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        n = len(b)
        if R.shape != (n, n) or a.shape != (n,):
            raise ValueError("rotation, a and b must have matching dimension")
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if np.abs(R.T @ R - np.eye(n)).max() > 1e-9:
            raise ValueError("rotation is not orthogonal")
        if not self.inversion and np.any(a != 0):
            b = b - self.scale * (R @ a)
            a = np.zeros(n)
        for name, val in (("rotation", R), ("a", a), ("b", b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "inversion", bool(self.inversion))

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def linear(self) -> np.ndarray:
        return self.scale * self.rotation

    def __call__(self, x):
        return apply(self, x)

    def __repr__(self):
        kind = "inversion" if self.inversion else "similarity"
        return (f"MoebiusMap({kind}, scale={self.scale:.6g}, a={self.a.tolist()}, "
                f"b={self.b.tolist()})")

    # constructors
    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), 1.0, False, np.zeros(n), np.zeros(n))

    @classmethod
    def similarity(cls, scale=1.0, rotation=None, translation=None, n=None):
        if n is None:
            n = len(translation) if translation is not None else np.shape(rotation)[0]
        R = np.eye(n) if rotation is None else rotation
        t = np.zeros(n) if translation is None else translation
        return cls(R, scale, False, np.zeros(n), t)

    @classmethod
    def dilation(cls, k, rotation=None, n=3):
        if rotation is not None:
            n = np.shape(rotation)[0]
        return cls.similarity(k, rotation, None, n)

    @classmethod
    def unit_inversion(cls, n, center=None, radius=1.0):
        """Inversion in the sphere |x - center| = radius."""
        c = np.zeros(n) if center is None else np.asarray(center, float)
        return cls(np.eye(n), radius ** 2, True, c, c)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x, x.ndim == 1


def apply(g: MoebiusMap, x):
    """Image of x under g.

    Accepts a single point, ``INF`` or an (m, n) batch.  A single point at the
    pole maps to ``INF``; in a batch, rows at the pole come back as +inf.
    """
    if x is INF:
        return g.b.copy() if g.inversion else INF
    x, single = _as_points(x)
    X = np.atleast_2d(x)
    v = X - g.a
    if g.inversion:
        r2 = np.einsum("ij,ij->i", v, v)
        pole = r2 == 0
        if single and pole[0]:
            return INF
        with np.errstate(divide="ignore", invalid="ignore"):
            v = v / r2[:, None]
        v[pole] = 0.0
    Y = g.b + g.scale * v @ g.rotation.T
    if g.inversion:
        Y[pole] = np.inf
    return Y[0] if single else Y


def inverse(g: MoebiusMap) -> MoebiusMap:
    RT = g.rotation.T
    if g.inversion:
        return MoebiusMap(RT, g.scale, True, g.b, g.a)
    return MoebiusMap(RT, 1.0 / g.scale, False, np.zeros(g.n), -(RT @ g.b) / g.scale)


def _jacobian(g: MoebiusMap, x):
    if not g.inversion:
        return g.linear
    v = x - g.a
    r2 = v @ v
    return g.linear @ (np.eye(g.n) - 2.0 * np.outer(v, v) / r2) / r2


def compose(f: MoebiusMap, g: MoebiusMap, tol: float = 1e-12) -> MoebiusMap:
    """Normal form of f o g."""
    n = f.n
    if not g.inversion and not f.inversion:
        return MoebiusMap(f.rotation @ g.rotation, f.scale * g.scale, False,
                          np.zeros(n), f.b + f.scale * f.rotation @ g.b)
    if not g.inversion:
        a = g.rotation.T @ (f.a - g.b) / g.scale
        return MoebiusMap(f.rotation @ g.rotation, f.scale / g.scale, True, a, f.b)
    if not f.inversion:
        return MoebiusMap(f.rotation @ g.rotation, f.scale * g.scale, True, g.a,
                          f.b + f.scale * f.rotation @ g.b)
    d = g.b - f.a
    if np.sqrt(d @ d) <= tol * (1.0 + np.sqrt(g.b @ g.b)):
        # the two poles cancel: a similarity
        R = f.rotation @ g.rotation
        s = f.scale / g.scale
        return MoebiusMap(R, s, False, np.zeros(n), f.b - s * R @ g.a)
    # generic case: pole of f o g is g^{-1}(a_f), image of infinity is f(b_g);
    # the linear factor follows from the Jacobian at one probe point.
    a = apply(inverse(g), f.a)
    b = apply(f, g.b)
    e = np.zeros(n)
    e[0] = 1.0
    x = a + e
    J = _jacobian(f, apply(g, x)) @ _jacobian(g, x)
    M = J @ (np.eye(n) - 2.0 * np.outer(e, e))
    U, P = polar(M)
    return MoebiusMap(U, np.trace(P) / n, True, a, b)


def deriv_euclidean(g: MoebiusMap, x):
    """|gamma'(x)|_e: the scalar conformal factor of the differential."""
    x, single = _as_points(x)
    X = np.atleast_2d(x)
    if not g.inversion:
        out = np.full(len(X), g.scale)
    else:
        r2 = np.einsum("ij,ij->i", X - g.a, X - g.a)
        if np.any(r2 == 0):
            raise PoleError("derivative requested at the pole")
        out = g.scale / r2
    return out[0] if single else out


def log_deriv_spherical(g: MoebiusMap, x):
    """log of the spherical conformal derivative, stable for far images."""
    x, single = _as_points(x)
    X = np.atleast_2d(x)
    de = deriv_euclidean(g, X)
    Y = apply(g, X)
    y2 = np.einsum("ij,ij->i", Y, Y)
    with np.errstate(over="ignore"):
        big = ~np.isfinite(y2) | (y2 > 1e300)
    logy2 = np.empty_like(y2)
    logy2[~big] = np.log1p(y2[~big])
    if np.any(big):
        # |gamma x| overflowed; rebuild it from the normal form in log scale
        v = X[big] - g.a
        if g.inversion:
            lv = np.log(g.scale) - np.log(np.linalg.norm(v, axis=1))
        else:
            lv = np.log(g.scale) + np.log(np.linalg.norm(v, axis=1))
        logy2[big] = 2.0 * lv
    out = np.log1p(np.einsum("ij,ij->i", X, X)) + np.log(de) - logy2
    return out[0] if single else out


def deriv_spherical(g: MoebiusMap, x):
    """|gamma'(x)| for the round metric pulled back to the chart."""
    return np.exp(log_deriv_spherical(g, x))


def maps_close(f: MoebiusMap, g: MoebiusMap, tol: float = 1e-10, pts=None) -> bool:
    if pts is None:
        pts = _probe_points(f.n, 100)
    return np.abs(_chordal_image(f, pts) - _chordal_image(g, pts)).max() < tol


# ---------------------------------------------------------------- groups

def _probe_points(n, m=3, seed=7):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(m, n)) * 0.7 + 0.11


def _features(g: MoebiusMap, pts):
    """Dedup key: chordal images of the probe points and the log spherical
    derivatives there (far elements share chordal images near a limit
    point but not derivatives)."""
    return np.concatenate([_chordal_image(g, pts), log_deriv_spherical(g, pts)])


def _chordal_image(g: MoebiusMap, pts):
    """Images of pts on S^n (so that INF is a regular point)."""
    Y = apply(g, pts)
    out = np.empty((len(pts), g.n + 1))
    fin = np.all(np.isfinite(Y), axis=1)
    y2 = np.einsum("ij,ij->i", Y[fin], Y[fin])
    out[fin, :-1] = 2 * Y[fin] / (1 + y2)[:, None]
    out[fin, -1] = (y2 - 1) / (1 + y2)
    out[~fin] = 0.0
    out[~fin, -1] = 1.0
    return out.ravel()


class InsufficientEnumeration(ValueError):
    pass


class PoincareSum(NamedTuple):
    sum: np.ndarray | float
    tail_bound: np.ndarray | float
    diverging: bool


@dataclass
class KleinianGroup:
    """A finitely generated group of Moebius maps, enumerated by word length.

    ``elements`` holds (word, map) pairs in breadth-first order, identity
    first; words are tuples of signed 1-based generator indices.
    """
    generators: list
    n: int = None
    elements: list = field(default_factory=list, repr=False)
    lengths: list = field(default_factory=list, repr=False)
    cutoff: int = 0

    def __post_init__(self):
        if self.n is None:
            if not self.generators:
                raise ValueError("dimension required for the trivial group")
            self.n = self.generators[0].n
        for g in self.generators:
            if g.n != self.n:
                raise ValueError("generators of different dimension")
        self._letters = []
        for i, g in enumerate(self.generators):
            self._letters += [(i + 1, g), (-(i + 1), inverse(g))]
        ident = MoebiusMap.identity(self.n)
        self.elements = [((), ident)]
        self.lengths = [0]
        self._probe = _probe_points(self.n)
        self._features = [_features(ident, self._probe)]
        self._frontier = [((), ident)]

    @property
    def is_trivial(self):
        return len(self.generators) == 0

    @property
    def is_cyclic(self):
        return len(self.generators) == 1

    def dilation_data(self):
        """(k, A) when the group is <x -> k A x>, k > 1, else None."""
        if not self.is_cyclic:
            return None
        g = self.generators[0]
        if g.inversion or np.abs(g.b).max() > 1e-14 or abs(g.scale - 1) < 1e-12:
            return None
        if g.scale < 1:
            g = inverse(g)
        return g.scale, g.rotation

    @property
    def fundamental_domain(self):
        if self.is_trivial:
            return {"kind": "whole"}
        dd = self.dilation_data()
        if dd is not None:
            return {"kind": "shell", "inner": 1.0, "outer": float(dd[0])}
        return {"kind": "unspecified"}

    def enumerate(self, cutoff: int):
        """Extend the enumeration to all reduced words of length <= cutoff."""
        if self.is_trivial or cutoff <= self.cutoff:
            return self
        tree = cKDTree(np.array(self._features))
        for length in range(self.cutoff + 1, cutoff + 1):
            cand, feats = [], []
            for word, m in self._frontier:
                for letter, g in self._letters:
                    if word and word[-1] == -letter:
                        continue
                    h = compose(m, g)
                    f = _features(h, self._probe)
                    if np.all(np.isfinite(f)):
                        cand.append((word + (letter,), h))
                        feats.append(f)
            if not cand:
                break
            feats = np.array(feats)
            keep = tree.query(feats)[0] >= DEDUP_TOL
            for i, j in sorted(cKDTree(feats).query_pairs(DEDUP_TOL)):
                if keep[i]:
                    keep[j] = False
            frontier = [c for c, k in zip(cand, keep) if k]
            if not frontier:
                break
            self.elements += frontier
            self.lengths += [length] * len(frontier)
            self._features += list(feats[keep])
            tree = cKDTree(np.array(self._features))
            self._frontier = frontier
        self.cutoff = cutoff
        return self

    def shells(self, cutoff=None):
        """Elements grouped by word length 1..cutoff."""
        cutoff = self.cutoff if cutoff is None else cutoff
        self.enumerate(cutoff)
        out = [[] for _ in range(cutoff)]
        for (w, m), L in zip(self.elements, self.lengths):
            if 1 <= L <= cutoff:
                out[L - 1].append(m)
        return out

    def limit_points(self, word_length: int = 8, max_points: int = 256):
        """Sampled limit set.  Exact fixed points for cyclic groups."""
        if self.is_trivial:
            return []
        if self.is_cyclic:
            return _fixed_points(self.generators[0])
        self.enumerate(word_length)
        far = [m for m, L in zip((e[1] for e in self.elements), self.lengths)
               if L == self.cutoff]
        x0 = self._probe[0]
        pts = [apply(m, x0) for m in far[:max_points]]
        return [p for p in pts if p is not INF]


def _fixed_points(g: MoebiusMap):
    n = g.n
    if not g.inversion:
        M = np.eye(n) - g.linear
        if abs(g.scale - 1) < 1e-14:
            return [INF]
        return [np.linalg.solve(M, g.b), INF]
    # fixed points of an inversion-type map: iterate forward and backward
    pts = []
    for h in (g, inverse(g)):
        x = _probe_points(n, 1)[0]
        for _ in range(2000):
            y = apply(h, x)
            if y is INF:
                break
            if np.linalg.norm(y - x) < 1e-14 * (1 + np.linalg.norm(x)):
                x = y
                break
            x = y
        pts.append(x)
    return pts


def dilation_group(k, n=3, rotation=None) -> KleinianGroup:
    return KleinianGroup([MoebiusMap.dilation(k, rotation, n)], n)


def trivial_group(n) -> KleinianGroup:
    return KleinianGroup([], n)


def schottky_generator(c1, r1, c2, r2, reflect=True) -> MoebiusMap:
    """Map taking the outside of the ball B(c1, r1) onto the inside of B(c2, r2).

    x -> c2 + r1 r2 Q (x - c1)/|x - c1|^2, Q the reflection in the first
    coordinate when ``reflect`` (making the map orientation preserving).
    """
    c1 = np.asarray(c1, float)
    n = len(c1)
    Q = np.eye(n)
    if reflect:
        Q[0, 0] = -1.0
    return MoebiusMap(Q, r1 * r2, True, c1, np.asarray(c2, float))


# --------------------------------------------------------- Poincare series

def _shell_logderivs(group: KleinianGroup, x, cutoff):
    X = np.atleast_2d(np.asarray(x, float))
    return [np.array([log_deriv_spherical(m, X) for m in shell]).reshape(-1, len(X))
            for shell in group.shells(cutoff)]


def poincare_partial_sum(group: KleinianGroup, s: float, x, cutoff: int,
                         tail_window: int = 3) -> PoincareSum:
    """Sum of |gamma'(x)|^s over enumerated non-identity elements.

    The tail is extrapolated from the last ``tail_window`` shell ratios as a
    geometric series.  ``x`` may be a single point or an (m, n) batch.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    single = np.ndim(x) == 1
    if group.is_trivial:
        z = 0.0 if single else np.zeros(len(x))
        return PoincareSum(z, z, False)
    logs = _shell_logderivs(group, x, cutoff)
    S = np.array([np.exp(s * lg).sum(axis=0) if len(lg) else np.zeros(lg.shape[1])
                  for lg in logs])
    total = S.sum(axis=0)
    tail, div = _geometric_tail(S, tail_window)
    if single:
        return PoincareSum(float(total[0]), float(tail[0]), bool(div))
    return PoincareSum(total, tail, bool(div))


def _geometric_tail(S, window=3):
    """Tail of a series from its last shell sums (rows of S)."""
    J = len(S)
    if J < 2:
        return np.full(S.shape[1], np.inf), True
    lo = max(1, J - window)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = S[lo:] / S[lo - 1:-1]
    ratios = np.where(S[lo - 1:-1] == 0, 0.0, ratios)
    r = ratios.max(axis=0)
    div = bool(np.any(r >= 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(r < 1, S[-1] * r / (1 - r), np.inf)
    tail = np.where(S[-1] == 0, 0.0, tail)
    return tail, div


def shell_sums(group: KleinianGroup, s, x, cutoff):
    logs = _shell_logderivs(group, x, cutoff)
    return np.array([np.exp(s * lg).sum() for lg in logs])


def exponent_estimate(group: KleinianGroup, x=None, cutoff: int = None,
                      fit_from: int = None) -> float:
    """Poincare exponent from the decay rate of shell sums.

    P(s) is the least-squares slope of log(shell sum) against word length;
    the estimate is the root of P, or 0 when the shell sums do not grow at
    s = 0 (elementary groups).
    """
    if group.is_trivial:
        return 0.0
    cutoff = max(group.cutoff, 8) if cutoff is None else cutoff
    if cutoff < 4:
        raise InsufficientEnumeration("need at least 4 shells")
    if cutoff < 8:
        warnings.warn("exponent estimate from fewer than 8 shells is unreliable")
    x = group._probe[0] if x is None else np.asarray(x, float)
    logs = [lg.ravel() for lg in _shell_logderivs(group, x, cutoff)]
    if sum(len(lg) > 0 for lg in logs) < 4:
        raise InsufficientEnumeration("fewer than 4 non-empty shells")
    j0 = fit_from or max(1, cutoff // 2)
    js = np.arange(j0, cutoff + 1)

    def pressure(s):
        y = [np.log(np.exp(s * logs[j - 1]).sum() + 1e-300) for j in js]
        return np.polyfit(js, y, 1)[0]

    if pressure(0.0) <= 1e-9:
        return 0.0
    hi = float(group.n)
    if pressure(hi) >= 0:
        return hi
    return float(brentq(pressure, 0.0, hi, xtol=1e-10))


# ------------------------------------------------------------- JSON I/O

def map_from_dict(d: dict, n: int | None = None, where: str = "generator") -> MoebiusMap:
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object")
    if d.get("type") == "dilation":
        allowed = {"type", "k", "rotation"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"{where}: unknown field(s) {sorted(extra)}")
        if "k" not in d:
            raise ValueError(f"{where}.k: missing")
        k = d["k"]
        if not isinstance(k, (int, float)) or k <= 0 or k == 1:
            raise ValueError(f"{where}.k: must be a positive number other than 1")
        R = _rotation_field(d.get("rotation"), n, where)
        if R is None and n is None:
            raise ValueError(f"{where}: dimension unknown (give rotation or dimension)")
        return MoebiusMap.dilation(float(k), R, n if R is None else None)
    allowed = {"inversion", "scale", "rotation", "a", "b"}
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"{where}: unknown field(s) {sorted(extra)}")
    for key in ("inversion", "scale", "b"):
        if key not in d:
            raise ValueError(f"{where}.{key}: missing")
    if not isinstance(d["inversion"], bool):
        raise ValueError(f"{where}.inversion: must be true or false")
    scale = d["scale"]
    if not isinstance(scale, (int, float)) or not scale > 0:
        raise ValueError(f"{where}.scale: must be positive")
    b = _vector_field(d["b"], n, f"{where}.b")
    n = len(b)
    a = _vector_field(d.get("a", [0.0] * n), n, f"{where}.a")
    R = _rotation_field(d.get("rotation"), n, where)
    R = np.eye(n) if R is None else R
    return MoebiusMap(R, float(scale), d["inversion"], a, b)


def _vector_field(v, n, where):
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"{where}: must be a list of numbers") from None
    if arr.ndim != 1 or (n is not None and len(arr) != n):
        raise ValueError(f"{where}: must have length {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{where}: entries must be finite")
    return arr


def _rotation_field(v, n, where):
    if v is None:
        return None
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"{where}.rotation: must be numeric") from None
    if arr.ndim == 1:
        m = int(round(np.sqrt(arr.size)))
        if m * m != arr.size:
            raise ValueError(f"{where}.rotation: row-major list must have n*n entries")
        arr = arr.reshape(m, m)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or (n is not None and arr.shape[0] != n):
        raise ValueError(f"{where}.rotation: must be {n}x{n}")
    if np.abs(arr.T @ arr - np.eye(len(arr))).max() > 1e-9:
        raise ValueError(f"{where}.rotation: not orthogonal")
    return arr


def map_to_dict(g: MoebiusMap) -> dict:
    return {"inversion": g.inversion, "scale": g.scale,
            "rotation": g.rotation.ravel().tolist(), "a": g.a.tolist(), "b": g.b.tolist()}


def group_from_json(obj, n: int | None = None) -> KleinianGroup:
    """Group from a parsed JSON document (list of generators, or an object
    with keys ``generators`` and optionally ``dimension``)."""
    if isinstance(obj, dict):
        extra = set(obj) - {"generators", "dimension"}
        if extra:
            raise ValueError(f"group: unknown field(s) {sorted(extra)}")
        if "dimension" in obj:
            dim = obj["dimension"]
            if not isinstance(dim, int) or dim < 2:
                raise ValueError("dimension: must be an integer >= 2")
            if n is not None and dim != n:
                raise ValueError(f"dimension: {dim} does not match n = {n}")
            n = dim
        gens = obj.get("generators")
        if gens is None:
            raise ValueError("generators: missing")
    else:
        gens = obj
    if not isinstance(gens, list):
        raise ValueError("generators: must be a list")
    maps = []
    for i, d in enumerate(gens):
        m = map_from_dict(d, n, f"generators[{i}]")
        n = m.n
        maps.append(m)
    if n is None:
        raise ValueError("dimension: required for an empty generator list")
    return KleinianGroup(maps, n)


def load_group(path, n: int | None = None) -> KleinianGroup:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: malformed JSON ({err})") from None
    return group_from_json(obj, n)


def random_moebius(rng, n, inversion=None, spread=1.0) -> MoebiusMap:
    """Random map for testing: similarity or inversion type."""
    Q, Rr = np.linalg.qr(rng.normal(size=(n, n)))
    Q = Q * np.sign(np.diag(Rr))
    if inversion is None:
        inversion = bool(rng.integers(2))
    s = float(np.exp(rng.normal() * 0.5))
    return MoebiusMap(Q, s, inversion, rng.normal(size=n) * spread,
                      rng.normal(size=n) * spread)


def word_product(maps: Sequence[MoebiusMap]) -> MoebiusMap:
    out = maps[0]
    for m in maps[1:]:
        out = compose(out, m)
    return out
