"""Deformed arcs: t-adic fixed-point solution of the extended implicit-function equation.

For a sphere point s the unknown is a c-vector of series z(t).  With
u = eps * t^delta the Ansatz direction is

    h_j = (sum_{i <= groupEnd(j)} s_i^2) * sum_i d_j f_{p_i}(s) z_i

and the equation is

    (tau + det A) z + A^adj (F(z) - A z) + A^adj G(z) = 0,

    F_i(z) = [f_{p_i}(s + u h) - f_{p_i}(s)] / u      (exact divided difference)
    G_i(z) = t^(-p_i - delta) f_{>p_i}(t^omega (s + u h)).

F(z) - A z and G(z) - G(0) carry a factor u, so for delta >= 1 every sweep
of z <- -A^adj[(F(z) - A z) + G(z)] / (tau + det A) fixes delta more
coefficients.  Everything is vectorized over a batch of sphere points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .obstruction import (DEFAULT_OBSTRUCTION_TOL, GermSystem, gradient_matrix, gram_and_adjugate,
                          obstruction_coefficient)
from .poly import INF, taylor_coefficients
from .series import (DEFAULT_K, AboveTruncation, TSeries, _PowerCache, compose_weighted, ts_ord,
                     ts_ord_batch)
from .wgeom import group_factors

log = logging.getLogger(__name__)

NEAR_THRESHOLD = 1e-3
T_GRID_MAX = 1.0


class Obstructed(ArithmeticError):
    """The sphere point lies on (or numerically near) the link of the obstruction locus."""

    def __init__(self, message: str, points=None, coeffs=None):
        self.points = points
        self.coeffs = coeffs
        super().__init__(message)


class NoContraction(ArithmeticError):
    """Same-order perturbation with |eps| too large for the fixed-point iteration."""


class NotOnLink(ValueError):
    pass


class _Frame:
    """Everything about the equation that depends on s only (batched)."""

    def __init__(self, gs: GermSystem, S: np.ndarray, obstruction_tol: float):
        S = np.atleast_2d(np.asarray(S, dtype=float))
        self.gs = gs
        self.S = S
        self.g = group_factors(gs.ws, S)                       # (B, N)
        self.J = gradient_matrix(gs, S)                        # (B, c, N)
        self.fs = np.stack([f.eval_array(S) for f in gs.f_p], axis=-1)  # (B, c)
        self.tau = np.sum(self.fs ** 2, axis=-1)
        M = self.J * np.sqrt(self.g)[:, None, :]
        ga = gram_and_adjugate(M)
        self.A, self.adj, self.det = ga.A, ga.A_adj, ga.detA
        self.coeff = self.tau + self.det
        bad = self.coeff < obstruction_tol
        if np.any(bad):
            raise Obstructed(
                f"{int(bad.sum())} point(s) on or near the obstruction locus "
                f"(coefficient {float(self.coeff[bad].min()):.3e} < {obstruction_tol:g})",
                S[bad], self.coeff[bad])
        self._taylor = None

    @property
    def taylor(self) -> list[dict]:
        """Per equation, {|alpha|: [(alpha, coefficient array)]} without alpha = 0."""
        if self._taylor is None:
            out = []
            for f in self.gs.f_p:
                by_deg: dict[int, list] = {}
                for alpha, c in taylor_coefficients(f, self.S).items():
                    k = sum(alpha)
                    if k == 0:
                        continue
                    by_deg.setdefault(k, []).append((alpha, c))
                out.append(by_deg)
            self._taylor = out
        return self._taylor

    def h_of(self, z: np.ndarray) -> np.ndarray:
        """Ansatz h (B, N, K+1) from z (B, c, K+1)."""
        return np.einsum("bij,bik->bjk", self.J, z) * self.g[:, :, None]


def _u_shift(arr: np.ndarray, m: int, K: int) -> np.ndarray:
    """Coefficients of t^m * arr truncated to K (arr already truncated to K)."""
    if m == 0:
        return arr
    out = np.zeros(arr.shape[:-1] + (K + 1,))
    if m <= K:
        out[..., m:] = arr[..., : K + 1 - m]
    return out


class _Equation:
    def __init__(self, frame: _Frame, eps: float, K: int):
        self.fr = frame
        self.gs = frame.gs
        self.eps = float(eps)
        self.K = K
        d = self.gs.delta
        self.delta = 0 if d == INF else int(d)
        self.trivial = d == INF

    def F(self, h: np.ndarray) -> np.ndarray:
        """(B, c, K+1): exact u-divided difference of f_p along s + u h."""
        K, delta, eps = self.K, self.delta, self.eps
        B, c = self.fr.S.shape[0], self.gs.c
        out = np.zeros((B, c, K + 1))
        hs = [TSeries(h[:, j, :]) for j in range(h.shape[1])]
        cache = _PowerCache(hs)
        for i, by_deg in enumerate(self.fr.taylor):
            for k, items in by_deg.items():
                m = (k - 1) * delta
                if k > 1 and (m > K or eps == 0.0):
                    continue
                acc = np.zeros((B, K + 1))
                for alpha, cf in items:
                    acc += cf[:, None] * cache.monomial(alpha).coeffs
                out[:, i, :] += eps ** (k - 1) * _u_shift(acc, m, K)
        return out

    def direction(self, h: np.ndarray) -> list[TSeries]:
        """v = s + u h as N series truncated at K + delta."""
        K, delta = self.K, self.delta
        v = []
        for j in range(self.gs.n):
            c = np.zeros((h.shape[0], K + delta + 1))
            c[:, delta:] = self.eps * h[:, j, :]
            c[:, 0] += self.fr.S[:, j]
            v.append(TSeries(c))
        return v

    def G(self, h: np.ndarray) -> np.ndarray:
        K, delta = self.K, self.delta
        B = self.fr.S.shape[0]
        out = np.zeros((B, self.gs.c, K + 1))
        if self.trivial:
            return out
        v = self.direction(h)
        for i, (g, p) in enumerate(zip(self.gs.f_gt, self.gs.p)):
            if g.is_zero():
                continue
            comp = compose_weighted(g, self.gs.ws.omega, v)
            out[:, i, :] = comp.shift(-(p + delta), tol=0.0).coeffs[:, : K + 1]
        return out

    def nonlinear(self, z: np.ndarray) -> np.ndarray:
        """A^adj [(F(z) - A z) + G(z)]  (B, c, K+1)."""
        h = self.fr.h_of(z)
        Az = np.einsum("bik,bkm->bim", self.fr.A, z)
        inner = self.F(h) - Az + self.G(h)
        return np.einsum("bik,bkm->bim", self.fr.adj, inner)

    def step(self, z: np.ndarray) -> np.ndarray:
        return -self.nonlinear(z) / self.fr.coeff[:, None, None]

    def residual(self, z: np.ndarray) -> np.ndarray:
        return self.fr.coeff[:, None, None] * z + self.nonlinear(z)


@dataclass
class ArcBatch:
    """Solved arcs for a batch of sphere points at one eps."""

    gs: GermSystem
    S: np.ndarray           # (B, N)
    eps: float
    K: int
    z: np.ndarray           # (B, c, K+1)
    h: np.ndarray           # (B, N, K+1)
    coeff: np.ndarray       # (B,)
    t_max: np.ndarray       # (B,)
    sweeps: int = 0
    contraction: np.ndarray | None = None

    @property
    def delta(self) -> int:
        return 0 if self.gs.delta == INF else int(self.gs.delta)

    def __len__(self):
        return self.S.shape[0]

    def direction_series(self) -> np.ndarray:
        """s + eps t^delta h as (B, N, K+delta+1) coefficients."""
        d = self.delta
        B, N = self.S.shape
        v = np.zeros((B, N, self.K + d + 1))
        v[:, :, d:] = self.eps * self.h
        v[:, :, 0] += self.S
        return v

    def gamma_coeffs(self) -> list[np.ndarray]:
        """Arc components t^omega_j v_j as (B, K+delta+omega_j+1) arrays."""
        v = self.direction_series()
        out = []
        for j, w in enumerate(self.gs.ws.omega):
            c = np.zeros((v.shape[0], v.shape[2] + w))
            c[:, w:] = v[:, j, :]
            out.append(c)
        return out

    def deformation(self, t) -> np.ndarray:
        """eps t^delta h(t) (B, N)."""
        t = np.asarray(t, dtype=float)
        if self.eps == 0.0 or self.gs.delta == INF:
            return np.zeros(self.S.shape)
        hv = TSeries(self.h)(t[..., None] if t.ndim else t)
        return self.eps * (t[..., None] ** self.delta if t.ndim else t ** self.delta) * hv

    def position(self, t) -> np.ndarray:
        """gamma(t) for every point of the batch; t scalar or shape (B,)."""
        t = np.asarray(t, dtype=float)
        tt = t[..., None] if t.ndim else t
        om = np.asarray(self.gs.ws.omega, dtype=float)
        return tt ** om * (self.S + self.deformation(t))

    def velocity(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        tt = t[..., None] if t.ndim else t
        om = np.asarray(self.gs.ws.omega, dtype=float)
        d = self.delta
        v = self.S + self.deformation(t)
        if self.eps == 0.0 or self.gs.delta == INF:
            dv = np.zeros_like(v)
        else:
            H = TSeries(self.h)
            dv = self.eps * (d * tt ** max(d - 1, 0) * H(tt) * (d > 0) + tt ** d * H.deriv()(tt))
        return om * tt ** np.maximum(om - 1, 0) * v * (om > 0) + tt ** om * dv

    def __getitem__(self, i: int) -> DeformedArc:
        return DeformedArc.from_batch(self, i)


@dataclass
class DeformedArc:
    gs: GermSystem
    s: np.ndarray
    eps: float
    K: int
    z: list[TSeries]
    h: list[TSeries]
    gamma: list[TSeries]
    coeff: float
    t_max: float
    residual_ord: int | None = None
    _batch: ArcBatch | None = None
    _index: int = 0

    @classmethod
    def from_batch(cls, b: ArcBatch, i: int) -> DeformedArc:
        return cls(b.gs, b.S[i].copy(), b.eps, b.K,
                   [TSeries(b.z[i, k]) for k in range(b.gs.c)],
                   [TSeries(b.h[i, j]) for j in range(b.gs.n)],
                   [TSeries(c[i]) for c in b.gamma_coeffs()],
                   float(b.coeff[i]), float(b.t_max[i]), None, b, i)

    def __call__(self, t: float) -> np.ndarray:
        return self.position(t)

    def position(self, t: float) -> np.ndarray:
        return self._batch.position(np.full(len(self._batch), float(t)))[self._index]

    def velocity(self, t: float) -> np.ndarray:
        return self._batch.velocity(np.full(len(self._batch), float(t)))[self._index]

    def undeformed(self) -> _StraightArc:
        return _StraightArc(self.s, self.gs.ws.omega)


@dataclass
class _StraightArc:
    """The weighted-homogeneous arc t -> t^omega s."""

    s: np.ndarray
    omega: Sequence[int]

    def __call__(self, t):
        return np.asarray(t, dtype=float) ** np.asarray(self.omega, dtype=float) * self.s

    position = __call__

    def velocity(self, t):
        om = np.asarray(self.omega, dtype=float)
        return om * float(t) ** (om - 1) * self.s


def ansatz_h(gs: GermSystem, s, z: Sequence[TSeries]) -> list[TSeries]:
    """h_j = (sum_{i <= groupEnd(j)} s_i^2) * sum_i d_j f_{p_i}(s) z_i."""
    s = np.asarray(s, dtype=float)
    if len(z) != gs.c:
        raise ValueError(f"expected {gs.c} z-series, got {len(z)}")
    K = min(zz.trunc for zz in z)
    g = group_factors(gs.ws, s)
    J = gradient_matrix(gs, s)
    out = []
    for j in range(gs.n):
        acc = TSeries.zeros(K)
        for i in range(gs.c):
            acc = acc + z[i].truncate(K).scale(J[i, j])
        out.append(acc.scale(g[j]))
    return out


def assemble_residual(gs: GermSystem, s, eps: float, z: Sequence[TSeries], K: int | None = None,
                      obstruction_tol: float = DEFAULT_OBSTRUCTION_TOL) -> list[TSeries]:
    """Left side of the extended equation for given z (c series)."""
    K = K if K is not None else min(zz.trunc for zz in z)
    fr = _Frame(gs, np.asarray(s, dtype=float)[None, :], obstruction_tol)
    eq = _Equation(fr, eps, K)
    zc = np.stack([zz.truncate(K).coeffs for zz in z])[None]
    R = eq.residual(zc)[0]
    return [TSeries(R[i]) for i in range(gs.c)]


def solve_arcs(gs: GermSystem, S, eps: float, K: int = DEFAULT_K, *,
               obstruction_tol: float = DEFAULT_OBSTRUCTION_TOL, z0: np.ndarray | None = None,
               same_order_tol: float = 1e-12, max_iter: int = 500, seed: int = 0) -> ArcBatch:
    """Solve the extended equation at every row of S (batched)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    fr = _Frame(gs, S, obstruction_tol)
    eq = _Equation(fr, eps, K)
    B, c = S.shape[0], gs.c
    z = np.zeros((B, c, K + 1)) if z0 is None else np.array(z0, dtype=float)
    contraction = None
    if eq.trivial:
        sweeps = 0
    elif eq.delta >= 1:
        cap = math.ceil((K + 1) / eq.delta) + 1
        sweeps = 0
        for sweeps in range(1, cap + 2):
            new = eq.step(z)
            change = np.max(np.abs(new - z)) if new.size else 0.0
            z = new
            if change <= 1e-15 * max(1.0, float(np.max(np.abs(z)))) and sweeps > 1:
                break
    else:
        contraction = _contraction_estimate(eq, seed)
        bad = contraction > 0.5
        if np.any(bad):
            raise NoContraction(
                f"fixed-point map not contracting at {int(bad.sum())} point(s): "
                f"estimated Lipschitz constant {float(contraction.max()):.3g} > 0.5 "
                f"(|eps| = {abs(eps):g} too large for a same-order perturbation)")
        sweeps = 0
        prev = math.inf
        for sweeps in range(1, max_iter + 1):
            new = eq.step(z)
            change = float(np.max(np.abs(new - z)))
            z = new
            # past same_order_tol, keep going until rounding noise stops the decrease
            floor = 1e-15 * max(1.0, float(np.max(np.abs(z))))
            if change <= floor or (change < same_order_tol and change >= prev):
                break
            prev = change
        else:
            raise NoContraction(f"no convergence after {max_iter} iterations (last change {change:.3e})")
    h = fr.h_of(z)
    batch = ArcBatch(gs, S, float(eps), K, z, h, fr.coeff, np.zeros(B), sweeps, contraction)
    batch.t_max = estimate_t_max_batch(batch)
    return batch


def _contraction_estimate(eq: _Equation, seed: int, pairs: int = 24) -> np.ndarray:
    """Sampled Lipschitz constant of the leading-coefficient map near its fixed point.

    Uses the ball of radius 2 ||T(0)|| (plus a floor) around 0: a map with
    Lipschitz constant <= 1/2 there sends the ball into itself.
    """
    B, c, K = eq.fr.S.shape[0], eq.gs.c, eq.K
    sub = _Equation(eq.fr, eq.eps, 0)
    z0 = np.zeros((B, c, 1))
    T0 = sub.step(z0)[..., 0]
    R = 2.0 * np.linalg.norm(T0, axis=-1) + 1e-8
    rng = np.random.default_rng(seed)
    worst = np.zeros(B)
    for _ in range(pairs):
        a = rng.standard_normal((B, c))
        b = rng.standard_normal((B, c))
        a *= (R * rng.uniform(0, 1, B) / np.linalg.norm(a, axis=-1))[:, None]
        b *= (R * rng.uniform(0, 1, B) / np.linalg.norm(b, axis=-1))[:, None]
        Ta = sub.step(a[..., None])[..., 0]
        Tb = sub.step(b[..., None])[..., 0]
        ratio = np.linalg.norm(Ta - Tb, axis=-1) / np.maximum(np.linalg.norm(a - b, axis=-1), 1e-300)
        worst = np.maximum(worst, ratio)
    return worst


def eps_max_estimate(gs: GermSystem, s, eps_probe: float = 0.1, K: int = 0, seed: int = 0) -> float:
    """Largest |eps| for which the same-order iteration is expected to contract.

    Scales the sampled Lipschitz constant at ``eps_probe`` linearly in eps:
    0.5 * |eps_probe| / L(eps_probe).
    """
    fr = _Frame(gs, np.asarray(s, dtype=float)[None, :], DEFAULT_OBSTRUCTION_TOL)
    L = float(_contraction_estimate(_Equation(fr, eps_probe, K), seed)[0])
    return math.inf if L == 0 else 0.5 * abs(eps_probe) / L


def solve_arc(gs: GermSystem, s, eps: float, K: int = DEFAULT_K, **kw) -> DeformedArc:
    """Deformed arc through the sphere point s (see module docstring)."""
    s = np.asarray(s, dtype=float)
    try:
        batch = solve_arcs(gs, s[None, :], eps, K, **kw)
    except Obstructed as e:
        raise Obstructed(f"s = {s.tolist()} is obstructed: {e}", e.points, e.coeffs) from None
    arc = batch[0]
    try:
        arc.residual_ord = arc_residual_order(gs, arc)
    except NotOnLink:
        arc.residual_ord = None
    return arc


def arc_residual_order(gs: GermSystem, arc: DeformedArc | ArcBatch, tol: float = 1e-8,
                       link_tol: float = 1e-10) -> int:
    """min_i ts_ord((f_{p_i} + eps f_{>p_i})(gamma)) for an arc through a link point."""
    batch = arc._batch if isinstance(arc, DeformedArc) else arc
    S = batch.S if isinstance(arc, ArcBatch) else arc.s[None, :]
    fs = np.stack([f.eval_array(S) for f in gs.f_p], axis=-1)
    if np.max(np.abs(fs)) > link_tol:
        raise NotOnLink(f"s is off the link (|f_p(s)| = {float(np.max(np.abs(fs))):.3e}); "
                        "vanishing along the arc is not expected there")
    series = residual_series(gs, arc)
    return min(ts_ord(r, tol) for r in series)


def residual_series(gs: GermSystem, arc: DeformedArc | ArcBatch) -> list[TSeries]:
    """(f_{p_i} + eps f_{>p_i})(gamma(t)) for every equation, recomposed from the arc."""
    if isinstance(arc, DeformedArc):
        b, sel = arc._batch, slice(arc._index, arc._index + 1)
    else:
        b, sel = arc, slice(None)
    v = b.direction_series()[sel]
    vs = [TSeries(v[:, j, :]) for j in range(gs.n)]
    out = []
    for f, g in zip(gs.f_p, gs.f_gt):
        poly = f + g.scale(_exact(b.eps))
        out.append(compose_weighted(poly, gs.ws.omega, vs))
    return out


def residual_orders_batch(gs: GermSystem, batch: ArcBatch, tol: float = 1e-8) -> np.ndarray:
    """Per-point min over equations of the residual t-order."""
    orders = [ts_ord_batch(r, tol) for r in residual_series(gs, batch)]
    return np.min(np.stack(orders), axis=0)


def _exact(eps: float):
    from fractions import Fraction
    return Fraction(eps)


def estimate_t_max_batch(batch: ArcBatch, grid: np.ndarray | None = None) -> np.ndarray:
    """Largest grid t with ||eps t^delta h(t)|| + tail < 1/2 on all of (0, t]."""
    if grid is None:
        grid = np.logspace(-6, math.log10(T_GRID_MAX), 121)
    B = len(batch)
    if batch.eps == 0.0 or batch.gs.delta == INF:
        return np.full(B, grid[-1])
    H = batch.h
    K = H.shape[-1] - 1
    mag = np.abs(H)
    # root-test growth rate over the upper half of the coefficients
    ks = np.arange(max(1, K // 2), K + 1)
    with np.errstate(divide="ignore"):
        rate = np.max(mag[..., ks] ** (1.0 / ks), axis=-1) if K >= 1 else np.zeros(mag.shape[:-1])
    ok = np.ones(B, dtype=bool)
    t_max = np.full(B, grid[0])
    for t in grid:
        vals = np.abs(TSeries(H)(t))                             # (B, N)
        rt = rate * t
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(rt < 0.5, rt ** (K + 1) / (1 - rt), np.inf)
        size = abs(batch.eps) * t ** batch.delta * np.linalg.norm(vals + tail, axis=-1)
        ok &= size < 0.5
        t_max = np.where(ok, t, t_max)
    near = batch.coeff < NEAR_THRESHOLD
    if np.any(near):
        log.warning("%d point(s) close to the obstruction locus; t_max reduced", int(near.sum()))
        t_max = np.where(near, t_max * np.sqrt(batch.coeff / NEAR_THRESHOLD), t_max)
    return t_max


def estimate_t_max(arc: DeformedArc) -> float:
    return arc.t_max
