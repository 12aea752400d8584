"""Weight systems, weighted-polar coordinates, sphere sampling, tangency order."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize


class WeightError(ValueError):
    pass


class NonPositiveWeight(WeightError):
    pass


class NotAscending(WeightError):
    pass


class OriginInput(ValueError):
    pass


class DegenerateArcs(ArithmeticError):
    pass


@dataclass(frozen=True)
class WeightSystem:
    """Ascending integer weights with gcd 1.

    ``group_ends`` holds the 1-based index of the last variable of each block
    of equal weights; its last entry is always N.
    """

    omega: tuple[int, ...]
    group_ends: tuple[int, ...]
    normalized: bool = False

    @property
    def n(self) -> int:
        return len(self.omega)

    @property
    def top(self) -> int:
        return self.omega[-1]

    def group_end_of(self, j: int) -> int:
        """1-based end of the block containing the 0-based variable j."""
        for r in self.group_ends:
            if j < r:
                return r
        raise IndexError(j)

    def group_end_index(self) -> np.ndarray:
        return np.array([self.group_end_of(j) for j in range(self.n)])

    def flag_ends(self) -> tuple[int, ...]:
        """r_1 < ... < r_k: the proper flag subspaces V(x_1..x_r)."""
        return self.group_ends[:-1]


def make_weight_system(raw: Sequence[int]) -> WeightSystem:
    raw = [int(w) for w in raw]
    if not raw:
        raise WeightError("empty weight vector")
    if any(w < 1 for w in raw):
        raise NonPositiveWeight(f"weights must be positive integers, got {raw}")
    if any(a > b for a, b in zip(raw, raw[1:])):
        raise NotAscending(f"weights must be non-decreasing in variable order, got {raw}")
    g = reduce(math.gcd, raw)
    omega = tuple(w // g for w in raw)
    ends = [j + 1 for j in range(len(omega) - 1) if omega[j] < omega[j + 1]]
    ends.append(len(omega))
    if g > 1:
        warnings.warn(f"weights {raw} divided by their gcd {g}", stacklevel=2)
    return WeightSystem(omega, tuple(ends), normalized=g > 1)


def group_factors(ws: WeightSystem, s: np.ndarray) -> np.ndarray:
    """Per-variable squared partial norms sum_{i <= groupEnd(j)} s_i^2 (batch ok)."""
    s = np.asarray(s, dtype=float)
    cums = np.cumsum(s * s, axis=-1)
    return cums[..., ws.group_end_index() - 1]


def group_factors_exact(ws: WeightSystem, s: Sequence[Fraction]) -> list[Fraction]:
    s = [Fraction(v) for v in s]
    out = []
    for j in range(ws.n):
        r = ws.group_end_of(j)
        out.append(sum((v * v for v in s[:r]), Fraction(0)))
    return out


def polar_fwd(s, t, ws: WeightSystem) -> np.ndarray:
    """x_i = t^omega_i * s_i; broadcasts over batches of s and t."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    om = np.asarray(ws.omega, dtype=float)
    return s * t[..., None] ** om


def polar_inv(x, ws: WeightSystem, tol: float = 1e-15) -> tuple[np.ndarray, np.ndarray | float]:
    """Weighted-polar coordinates (s, t) of nonzero points x (batch ok).

    With L = log t, g(L) = log sum x_i^2 exp(-2 omega_i L) is convex and
    strictly decreasing, and g >= 0 at L0 = max_i log|x_i| / omega_i.  Newton
    from L0 therefore increases monotonically to the root g = 0.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x).reshape(-1, x.shape[-1])
    if np.any(np.all(X == 0, axis=1)):
        raise OriginInput("the origin has no weighted-polar direction")
    om = np.asarray(ws.omega, dtype=float)
    with np.errstate(divide="ignore"):
        logx = np.log(np.abs(X))
    L = np.max(logx / om, axis=1)
    for _ in range(100):
        e = 2 * logx - 2 * om * L[:, None]
        m = e.max(axis=1, keepdims=True)
        w = np.exp(e - m)
        tot = w.sum(axis=1)
        g = m[:, 0] + np.log(tot)
        dg = -2 * np.sum(om * w, axis=1) / tot
        L = L - g / dg
        if np.max(np.abs(g)) <= tol:
            break
    t = np.exp(L)
    S = X / t[:, None] ** om
    S /= np.linalg.norm(S, axis=1, keepdims=True)
    if single:
        return S[0], float(t[0])
    return S.reshape(x.shape), t.reshape(x.shape[:-1])


def sample_sphere(n: int, seed: int = 42, dim: int = 3) -> np.ndarray:
    """n points uniform on the unit sphere of R^dim, reproducible for a seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


_TRIPLES = [(3, 4, 5), (5, 12, 13), (8, 15, 17), (7, 24, 25), (20, 21, 29)]
_QUADS = [(1, 2, 2, 3), (2, 3, 6, 7), (1, 4, 8, 9), (4, 4, 7, 9), (2, 6, 9, 11)]


def rational_sphere_points(ws: WeightSystem | int, axis_pairs: Sequence[tuple[int, int]] | None = None
                           ) -> list[tuple[Fraction, ...]]:
    """Exact rational points of the unit sphere.

    All signed coordinate directions, Pythagorean points on each chosen pair of
    coordinates (default: all pairs), and for N >= 3 the points
    (a, b, c)/d with a^2 + b^2 + c^2 = d^2 on every coordinate triple.
    """
    N = ws if isinstance(ws, int) else ws.n
    pts: set[tuple[Fraction, ...]] = set()
    zero = [Fraction(0)] * N
    for i in range(N):
        for sg in (1, -1):
            p = list(zero)
            p[i] = Fraction(sg)
            pts.add(tuple(p))
    if axis_pairs is None:
        axis_pairs = list(itertools.combinations(range(N), 2))
    for i, j in axis_pairs:
        for a, b, c in _TRIPLES:
            for u, v in ((a, b), (b, a)):
                for si, sj in itertools.product((1, -1), repeat=2):
                    p = list(zero)
                    p[i] = Fraction(si * u, c)
                    p[j] = Fraction(sj * v, c)
                    pts.add(tuple(p))
    if N >= 3:
        for idx in itertools.combinations(range(N), 3):
            for a, b, c, d in _QUADS:
                for perm in set(itertools.permutations((a, b, c))):
                    for signs in itertools.product((1, -1), repeat=3):
                        p = list(zero)
                        for k, val, sg in zip(idx, perm, signs):
                            p[k] = Fraction(sg * val, d)
                        pts.add(tuple(p))
    return sorted(pts)


@dataclass(frozen=True)
class TordEstimate:
    value: float
    lower_bound_only: bool = False
    points_used: int = 0

    def __float__(self):
        return self.value

    def __repr__(self):
        return f"{'>=' if self.lower_bound_only else ''}{self.value:.4f}"


Arc = Callable[[float], np.ndarray]


def _speed(arc, t: float) -> float:
    vel = getattr(arc, "velocity", None)
    if vel is not None:
        return float(np.linalg.norm(vel(t)))
    h = 1e-6 * max(t, 1e-12)
    lo = max(t - h, 0.0)
    return float(np.linalg.norm((arc(t + h) - arc(lo)) / (t + h - lo)))


def arclength(arc: Arc, t: float) -> float:
    """Length of arc between 0 and t by adaptive quadrature of the speed."""
    if t <= 0:
        return 0.0
    # log substitution resolves the algebraic behaviour of the speed at 0
    val, _ = integrate.quad(lambda u: _speed(arc, t * math.exp(-u)) * t * math.exp(-u),
                            0.0, 60.0, limit=200, epsabs=0.0, epsrel=1e-12)
    return val


def estimate_tord(arc1: Arc, arc2: Arc, grid: Sequence[float], floor: float = 1e-11) -> TordEstimate:
    """Slope of log ||arc1(l) - arc2(l)|| against log l in length parametrization.

    Both arcs are reparametrized by arclength l; for each grid parameter of
    arc1 the matching parameter of arc2 is found by root-finding on its
    length function.  Differences below ``floor * l`` are treated as
    numerical zero; if fewer than three usable points remain a lower bound
    ("at least this order") is returned instead.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    logs_l, logs_d = [], []
    caps = []
    for t in grid:
        l = arclength(arc1, t)
        if l <= 0:
            continue
        L2 = lambda tau: arclength(arc2, tau) - l
        hi = t
        while L2(hi) < 0:
            hi *= 2.0
            if hi > 1e6:
                raise DegenerateArcs("second arc is too short to match the first")
        lo = t / 2
        while L2(lo) > 0:
            lo /= 2.0
        tau = optimize.brentq(L2, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        d = float(np.linalg.norm(np.asarray(arc1(t)) - np.asarray(arc2(tau))))
        if d > floor * l:
            logs_l.append(math.log(l))
            logs_d.append(math.log(d))
        else:
            caps.append(math.log(floor * l) / math.log(l) if l < 1 else math.inf)
    if len(logs_l) < 3:
        if not caps:
            raise DegenerateArcs("no usable grid points")
        return TordEstimate(float(min(caps)), lower_bound_only=True, points_used=0)
    slope = np.polyfit(logs_l, logs_d, 1)[0]
    return TordEstimate(float(slope), False, len(logs_l))
