"""The trivializing homeomorphism Psi_eps, its inverse, the contact factor and diagnostics.

Psi sends gamma_s(t) to gamma_{eps,s}(t).  When the lowest weight is
strictly smaller than the next one, the parameter along each deformed arc
is adjusted so that the first coordinate is left unchanged
(``rectify=True``); this is the version for which the Jacobian bounds with
omega_N - omega_2 hold.  The contact factor is always built from the
unadjusted map.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .arcs import ArcBatch, solve_arcs
from .obstruction import DEFAULT_OBSTRUCTION_TOL, GermSystem, obstruction_coefficient
from .poly import INF
from .series import (DEFAULT_K, DegenerateDenominator, TSeries, compose_weighted, ts_compose_poly,
                     ts_compose_series, ts_pow_real)
from .wgeom import polar_fwd, polar_inv, sample_sphere


class OutsideValidityRadius(ValueError):
    pass


class NoConvergence(ArithmeticError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(message)


class NotHypersurface(ValueError):
    pass


class OnLinkUnsupported(ValueError):
    pass


class _ArcCache:
    """Solved (z, h) per rounded sphere point; concurrent reads, exclusive inserts."""

    def __init__(self, maxsize: int = 200_000):
        self._data: dict = {}
        self._lock = threading.Lock()
        self.maxsize = maxsize

    @staticmethod
    def key(s: np.ndarray) -> bytes:
        return np.round(s, 12).tobytes()

    def get(self, k):
        return self._data.get(k)

    def put_many(self, items):
        with self._lock:
            if len(self._data) + len(items) > self.maxsize:
                self._data.clear()
            self._data.update(items)


@dataclass
class Trivializer:
    gs: GermSystem
    eps: float
    K: int = DEFAULT_K
    rectify: bool | None = None
    obstruction_tol: float = DEFAULT_OBSTRUCTION_TOL
    check_radius: bool = True
    _cache: _ArcCache = field(default_factory=_ArcCache, repr=False)

    def __post_init__(self):
        if self.rectify is None:
            ws = self.gs.ws
            self.rectify = ws.n > 1 and ws.group_ends[0] == 1
        self.eps = float(self.eps)

    @property
    def identity(self) -> bool:
        return self.eps == 0.0 or self.gs.delta == INF

    # -- arcs ------------------------------------------------------------
    def arcs(self, S: np.ndarray) -> ArcBatch:
        """Solved arcs for the rows of S, reusing cached solutions."""
        S = np.atleast_2d(S)
        keys = [self._cache.key(s) for s in S]
        missing = [i for i, k in enumerate(keys) if self._cache.get(k) is None]
        if missing:
            batch = solve_arcs(self.gs, S[missing], self.eps, self.K,
                               obstruction_tol=self.obstruction_tol)
            self._cache.put_many({keys[i]: (batch.z[n], batch.h[n], batch.coeff[n], batch.t_max[n])
                                  for n, i in enumerate(missing)})
        rows = [self._cache.get(k) for k in keys]
        z = np.stack([r[0] for r in rows])
        h = np.stack([r[1] for r in rows])
        coeff = np.array([r[2] for r in rows])
        t_max = np.array([r[3] for r in rows])
        return ArcBatch(self.gs, S, self.eps, self.K, z, h, coeff, t_max)

    def _arc_parameter(self, arcs: ArcBatch, t_tilde: np.ndarray) -> np.ndarray:
        """Parameter t on the deformed arc matched to t_tilde on the straight one."""
        if not self.rectify or self.identity:
            return t_tilde
        # t (1 + eps t^delta w(t))^(1/omega_1) = t_tilde, w = h_1 / s_1
        om1 = self.gs.ws.omega[0]
        s1 = arcs.S[:, 0]
        inner = np.einsum("bi,bik->bk", _first_column(self.gs, arcs), arcs.z)
        W = TSeries(inner * s1[:, None])
        d = arcs.delta
        t = t_tilde.copy()
        for _ in range(100):
            q = 1.0 + self.eps * t ** d * W(t)
            if np.any(q <= 0):
                raise OutsideValidityRadius("first-weight reparametrization is not monotone here")
            new = t_tilde * q ** (-1.0 / om1)
            if np.max(np.abs(new - t) / np.maximum(t, 1e-300)) < 1e-15:
                t = new
                break
            t = new
        return t

    # -- Psi --------------------------------------------------------------
    def psi_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros_like(X)
        nz = np.any(X != 0, axis=1)
        if not np.any(nz):
            return out
        if self.identity:
            out[nz] = X[nz]
            return out
        S, T = polar_inv(X[nz], self.gs.ws)
        out[nz] = self._psi_polar(S, T)
        return out

    def _psi_polar(self, S: np.ndarray, T: np.ndarray, check: bool | None = None) -> np.ndarray:
        arcs = self.arcs(S)
        check = self.check_radius if check is None else check
        if check and np.any(T > arcs.t_max):
            bad = int(np.sum(T > arcs.t_max))
            raise OutsideValidityRadius(f"{bad} point(s) beyond the validity radius of their arcs")
        t = self._arc_parameter(arcs, T)
        return arcs.position(t)

    def psi(self, x) -> np.ndarray:
        return self.psi_many(np.asarray(x, dtype=float)[None, :])[0]

    def inverse_many(self, Y: np.ndarray, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
        """Solve Psi(x) = y by fixed-point iteration in weighted-polar coordinates."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.zeros_like(Y)
        nz = np.any(Y != 0, axis=1)
        if not np.any(nz) or self.identity:
            out[nz] = Y[nz]
            return out
        Yn = Y[nz]
        S_star, T_star = polar_inv(Yn, self.gs.ws)
        S, T = S_star.copy(), T_star.copy()
        # residual measured per coordinate at its own weighted scale
        scale = T_star[:, None] ** np.asarray(self.gs.ws.omega, dtype=float)
        res = np.inf
        for _ in range(max_iter):
            # intermediate iterates may wander past the radius; only the answer is checked
            mapped = self._psi_polar(S, T, check=False)
            res_vec = np.max(np.abs(mapped - Yn) / scale, axis=1)
            res = float(np.max(res_vec))
            if res <= tol:
                break
            S_m, T_m = polar_inv(mapped, self.gs.ws)
            S = S - (S_m - S_star)
            S /= np.linalg.norm(S, axis=1, keepdims=True)
            T = T * (T_star / T_m)
        else:
            if res > 1e3 * tol:
                raise NoConvergence(f"inverse did not converge (residual {res:.3e})", res)
        if self.check_radius:
            self._psi_polar(S, T)
        out[nz] = polar_fwd(S, T, self.gs.ws)
        return out

    def psi_inverse(self, y) -> np.ndarray:
        return self.inverse_many(np.asarray(y, dtype=float)[None, :])[0]

    # -- contact factor ------------------------------------------------------
    def u_minus_one_at(self, Y: np.ndarray) -> np.ndarray:
        """U(y) - 1 at points y (c = 1), computed without cancellation.

        Along the arcs U(gamma_{eps,s}(t)) - 1 = eps t^delta (F + G)(t) / f_p(s)
        which equals -eps t^delta f_p(s) z(t) at a solution (tau = f_p(s)^2).
        Uses the unadjusted map.
        """
        if self.gs.c != 1:
            raise NotHypersurface("pointwise contact factor only for c = 1")
        Y = np.atleast_2d(Y)
        if self.identity:
            return np.zeros(Y.shape[0])
        plain = Trivializer(self.gs, self.eps, self.K, rectify=False,
                            obstruction_tol=self.obstruction_tol, check_radius=self.check_radius,
                            _cache=self._cache)
        X = plain.inverse_many(Y)
        S, T = polar_inv(X, self.gs.ws)
        arcs = plain.arcs(S)
        fs = self.gs.f_p[0].eval_array(S)
        zt = TSeries(arcs.z[:, 0, :])(T)
        return -self.eps * T ** arcs.delta * fs * zt


def _first_column(gs: GermSystem, arcs: ArcBatch) -> np.ndarray:
    """d f_{p_i} / d x_1 at each s, shape (B, c)."""
    return np.stack([row[0].eval_array(arcs.S) for row in gs.grads], axis=-1)


def psi_map(gs: GermSystem, eps: float, x, K: int = DEFAULT_K, tol: float = 1e-14) -> np.ndarray:
    return Trivializer(gs, eps, K).psi(x)


def psi_inverse(gs: GermSystem, eps: float, y, K: int = DEFAULT_K, tol: float = 1e-14) -> np.ndarray:
    return Trivializer(gs, eps, K).inverse_many(np.asarray(y, dtype=float)[None, :], tol)[0]


# -- finite-difference Jacobians ---------------------------------------------

def jacobian_fd(fmap: Callable[[np.ndarray], np.ndarray], x, step) -> np.ndarray:
    """Central-difference Jacobian(s) of a batched map.

    ``x`` is (N,) or (B, N).  ``step`` is a scalar, one value per point (B,),
    or per coordinate ((N,) for a single point, (B, N) for a batch).  Returns (M, N) or (B, M, N).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    B, N = X.shape
    step = np.asarray(step, dtype=float)
    if step.ndim == 1 and not single:
        step = step[:, None]
    step = np.broadcast_to(step, (B, N))
    if np.any(step <= 0):
        raise ValueError("step must be positive")
    D = step[:, :, None] * np.eye(N)          # (B, j, coord)
    plus = (X[:, None, :] + D).reshape(-1, N)
    minus = (X[:, None, :] - D).reshape(-1, N)
    vals = np.asarray(fmap(np.concatenate([plus, minus])), dtype=float)
    vals = vals.reshape(2 * B * N, -1)
    fp, fm = vals[: B * N].reshape(B, N, -1), vals[B * N:].reshape(B, N, -1)
    J = np.swapaxes((fp - fm) / (2 * step[:, :, None]), 1, 2)
    return J[0] if single else J


@dataclass
class TrivializationDiagnostics:
    scales: list[float]
    jac_norms: list[float]
    inv_jac_norms: list[float]
    jac_minus_id: list[float]
    inv_jac_minus_id: list[float]
    drift_ratios: list[float]
    u_grad_norms: list[float] | None
    u_minus_one: list[float] | None
    verdicts: dict
    thresholds: dict
    skipped: int = 0
    n_samples: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _fd_step(ws, X: np.ndarray) -> np.ndarray:
    """Per-coordinate steps 1e-3 t^omega_i at weighted radius t."""
    _, T = polar_inv(X, ws)
    return 1e-3 * T[:, None] ** np.asarray(ws.omega, dtype=float)


def lipschitz_scan(gs: GermSystem, eps: float, scales: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4),
                   n_samples: int = 40, seed: int = 42, K: int = DEFAULT_K,
                   triv: Trivializer | None = None) -> TrivializationDiagnostics:
    """Jacobian, drift and contact-factor measurements of Psi at decreasing scales.

    Verdicts (measurements, not proofs):
    lipschitz_ok  sup ||J|| of Psi and Psi^-1 grows by at most 10x from the first to the last scale;
    c1_ok         ||J - I|| decreases (20% noise allowance) and is <= 0.05 at the last scale;
    bounded_U     sup ||grad U|| grows by at most 10x (c = 1 only);
    c1_U          sup ||grad U|| decreases and is <= 0.05 at the last scale (c = 1 only).
    """
    scales = sorted((float(t) for t in scales), reverse=True)
    triv = triv or Trivializer(gs, eps, K)
    S = sample_sphere(n_samples, seed, gs.n)
    n_drawn = len(S)
    if not triv.identity:
        # skip obstructed directions and those whose arcs do not reach the largest scale
        S = S[obstruction_coefficient(gs, S) >= triv.obstruction_tol]
        if len(S):
            S = S[triv.arcs(S).t_max >= 1.5 * scales[0]]
    jac, ijac, jmi, ijmi, drift, ugrad, uval = [], [], [], [], [], [], []
    want_u = gs.c == 1 and not triv.identity
    skipped = n_drawn - len(S)
    if len(S) == 0:
        raise ValueError("no usable sample directions at these scales")
    if want_u:
        fs = np.abs(gs.f_p[0].eval_array(S))
        offlink = fs >= 0.05 * fs.max()
        skipped += int((~offlink).sum())
    for t in scales:
        X = polar_fwd(S, np.full(len(S), t), gs.ws)
        Y = triv.psi_many(X)
        step = _fd_step(gs.ws, X)
        J = jacobian_fd(triv.psi_many, X, step)
        Ji = jacobian_fd(triv.inverse_many, Y, _fd_step(gs.ws, Y))
        I = np.eye(gs.n)
        jac.append(float(np.max(np.linalg.norm(J, 2, axis=(1, 2)))))
        ijac.append(float(np.max(np.linalg.norm(Ji, 2, axis=(1, 2)))))
        jmi.append(float(np.max(np.linalg.norm(J - I, 2, axis=(1, 2)))))
        ijmi.append(float(np.max(np.linalg.norm(Ji - I, 2, axis=(1, 2)))))
        drift.append(float(np.max(np.linalg.norm(Y - X, axis=1) / np.linalg.norm(X, axis=1))))
        if want_u:
            Yu = Y[offlink]
            G = jacobian_fd(lambda P: triv.u_minus_one_at(P)[:, None], Yu, _fd_step(gs.ws, Yu))
            ugrad.append(float(np.max(np.linalg.norm(G[:, 0, :], axis=1))))
            uval.append(float(np.max(np.abs(triv.u_minus_one_at(Yu)))))

    def bounded(seq):
        return bool(seq[-1] <= 10 * seq[0])

    def to_zero(seq):
        # values below the noise floor count as zero
        mono = all(b <= 1.2 * a + 1e-6 for a, b in zip(seq, seq[1:]))
        return bool(mono and seq[-1] <= 0.05)

    verdicts = {
        "lipschitz_ok": bounded(jac) and bounded(ijac),
        "c1_ok": to_zero(jmi) and to_zero(ijmi),
    }
    if want_u:
        verdicts["bounded_U"] = bounded(ugrad)
        verdicts["c1_U"] = to_zero(ugrad)
    om = gs.ws.omega
    delta = gs.delta
    gap = om[-1] - (om[1] if len(om) > 1 else om[0])
    thresholds = {
        "delta": None if delta == INF else delta,
        "omega_N_minus_omega_2": gap,
        "omega_N": om[-1],
        "lipschitz_claimed": delta >= gap,
        "c1_claimed": delta > gap,
        "U_lipschitz_claimed": delta >= om[-1],
        "U_c1_claimed": delta > om[-1],
    }
    return TrivializationDiagnostics(scales, jac, ijac, jmi, ijmi, drift,
                                     ugrad if want_u else None, uval if want_u else None,
                                     verdicts, thresholds, skipped, n_samples, seed)


# -- contact factor and right trivialization (hypersurfaces) -------------------

def _single_arc(gs: GermSystem, s, eps: float, K: int) -> ArcBatch:
    return solve_arcs(gs, np.asarray(s, dtype=float)[None, :], eps, K)


def contact_factor_series(gs: GermSystem, s, eps: float, K: int = DEFAULT_K,
                          link_tol: float = 1e-10) -> TSeries:
    """U along the deformed arc through s: (f_p + eps f_gt)(gamma_{eps,s}(t)) / f_p(gamma_s(t)).

    Equals 1 + eps t^delta (F + G) / f_p(s); off the link the constant term
    is exactly 1.  On the link numerator and denominator both vanish.
    """
    if gs.c != 1:
        raise NotHypersurface("contact factor series is defined for c = 1 only")
    s = np.asarray(s, dtype=float)
    fs = float(gs.f_p[0](s))
    if abs(fs) <= link_tol:
        raise DegenerateDenominator(
            "s lies on the link: numerator and denominator vanish beyond the common order")
    if eps == 0.0 or gs.delta == INF:
        return TSeries.constant(1.0, K)
    arcs = _single_arc(gs, s, eps, K)
    c = contact_numerator(gs, arcs).scale(1.0 / fs).coeffs.copy()
    c[0] = 1.0      # f_p(s) / f_p(s); recomposition only adds rounding here
    return TSeries(c)


def contact_numerator(gs: GermSystem, arcs: ArcBatch) -> TSeries:
    """t^-p (f_p + eps f_gt)(gamma) for the first arc of a batch, by full recomposition."""
    v = arcs.direction_series()[0]
    vs = [TSeries(v[j]) for j in range(gs.n)]
    from fractions import Fraction
    poly = gs.f_p[0] + gs.f_gt[0].scale(Fraction(arcs.eps))
    return compose_weighted(poly, gs.ws.omega, vs).shift(-gs.p[0], tol=1e-12)


def contact_factor_minus_one(gs: GermSystem, s, eps: float, K: int = DEFAULT_K) -> TSeries:
    """U - 1 along the arc through s as -eps t^delta f_p(s) z(t) (no cancellation)."""
    if gs.c != 1:
        raise NotHypersurface("contact factor series is defined for c = 1 only")
    arcs = _single_arc(gs, s, eps, K)
    fs = float(gs.f_p[0](np.asarray(s, dtype=float)))
    d = arcs.delta
    z = TSeries(arcs.z[0, 0])
    if arcs.eps == 0.0 or gs.delta == INF:
        return TSeries.zeros(K)
    return z.shift(d).scale(-arcs.eps * fs).truncate(K + d)


def right_trivialize(gs: GermSystem, s, eps: float, K: int = DEFAULT_K, link_tol: float = 1e-8,
                     max_sweeps: int = 200) -> TSeries:
    """Reparametrization w(t), w(0) = 1, with

        w^p f_p(s + eps (t w)^delta h(s, t w)) = f_p(s) + eps t^-p f_gt(t^omega s)

    so that f_p(gamma_{eps,s}(t w(t))) = (f_p + eps f_gt)(gamma_s(t)).
    """
    if gs.c != 1:
        raise NotHypersurface("right trivialization is for hypersurfaces (c = 1)")
    s = np.asarray(s, dtype=float)
    f, g, p = gs.f_p[0], gs.f_gt[0], gs.p[0]
    fs = float(f(s))
    if abs(fs) <= link_tol:
        raise OnLinkUnsupported("the reparametrization degenerates on the link (0/0 at leading order)")
    one = TSeries.constant(1.0, K)
    if eps == 0.0 or gs.delta == INF:
        return one
    d = int(gs.delta)
    arcs = _single_arc(gs, s, eps, K)
    H = [TSeries(arcs.h[0, j]) for j in range(gs.n)]
    base = [TSeries.constant(sj, K) for sj in s]
    rhs = compose_weighted(g, gs.ws.omega, base).shift(-p, tol=1e-12).truncate(K).scale(eps) + fs
    w = one
    for _ in range(max_sweeps):
        tau = w.shift(1).truncate(K)
        wd = w ** d
        v = [b + (wd * ts_compose_series(hj, tau)).shift(d).truncate(K).scale(eps)
             for b, hj in zip(base, H)]
        phi = ts_compose_poly(f, v)
        new = ts_pow_real((rhs / phi), 1.0 / p)
        if np.max(np.abs(new.coeffs - w.coeffs)) < 1e-15:
            w = new
            break
        w = new
    return w


def right_trivialization_residual(gs: GermSystem, s, eps: float, K: int = 8) -> float:
    """Recomposition check for right_trivialize, independent of the homogeneity shortcut.

    Substitutes t -> t w(t) into every arc component, composes f_p with the
    result and compares with (f_p + eps f_gt)(t^omega s) through order p + K.
    Returns the largest coefficient difference divided by max(1, |f_p(s)|).
    """
    p = gs.p[0]
    Kb = K + p + 1
    w = right_trivialize(gs, s, eps, Kb)
    s = np.asarray(s, dtype=float)
    arcs = _single_arc(gs, s, eps, Kb)
    tau = w.shift(1)
    X = [ts_compose_series(TSeries(c[0]), tau) for c in arcs.gamma_coeffs()]
    lhs = ts_compose_poly(gs.f_p[0], X)
    from fractions import Fraction
    poly = gs.f_p[0] + gs.f_gt[0].scale(Fraction(eps))
    base = [TSeries.monomial(w_j, K + p + 1).scale(sj) for w_j, sj in zip(gs.ws.omega, s)]
    rhs = ts_compose_poly(poly, base)
    n = p + K + 1
    diff = lhs.coeffs[:n] - rhs.coeffs[:n]
    return float(np.max(np.abs(diff)) / max(1.0, abs(float(gs.f_p[0](s)))))


def contact_identity_error(gs: GermSystem, s, eps: float, K: int = DEFAULT_K) -> float:
    """Relative coefficientwise gap between two routes to U - 1 along an arc.

    Route 1 recomposes (f_p + eps f_gt) with the arc and divides by f_p(s);
    route 2 uses -eps t^delta f_p(s) z(t) from the solved equation.
    """
    u = contact_factor_series(gs, s, eps, K)
    um1 = contact_factor_minus_one(gs, s, eps, K)
    n = min(u.trunc, um1.trunc) + 1
    a = u.coeffs[:n].copy()
    a[0] -= 1.0
    b = um1.coeffs[:n]
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


@dataclass
class ContactRatioScan:
    """Per-scale two-sided bounds of |(f_p + eps f_gt)(Psi(x))| / |f_p(x)| (c > 1 substitute for U)."""

    scales: list[float]
    ratio_min: list[float]
    ratio_max: list[float]
    samples: int

    def to_json(self) -> dict:
        return dict(self.__dict__)


def contact_ratio_scan(gs: GermSystem, eps: float, scales: Sequence[float] = (1e-1, 1e-2, 1e-3),
                       n_samples: int = 100, seed: int = 42, K: int = DEFAULT_K,
                       triv: Trivializer | None = None) -> ContactRatioScan:
    triv = triv or Trivializer(gs, eps, K)
    scales = sorted((float(t) for t in scales), reverse=True)
    S = sample_sphere(n_samples, seed, gs.n)
    F = np.stack([f.eval_array(S) for f in gs.f_p], axis=-1)
    nf = np.linalg.norm(F, axis=1)
    S = S[nf >= 0.05 * nf.max()]
    S = S[obstruction_coefficient(gs, S) >= triv.obstruction_tol]
    S = S[triv.arcs(S).t_max >= 1.5 * scales[0]]
    eqs = gs.equations(eps)
    p = np.asarray(gs.p, dtype=float)
    lo, hi = [], []
    for t in scales:
        X = polar_fwd(S, np.full(len(S), t), gs.ws)
        Y = triv.psi_many(X)
        num = np.linalg.norm(np.stack([e.eval_array(Y) for e in eqs], axis=-1) / t ** p, axis=1)
        den = np.linalg.norm(np.stack([f.eval_array(X) for f in gs.f_p], axis=-1) / t ** p, axis=1)
        r = num / den
        lo.append(float(r.min()))
        hi.append(float(r.max()))
    return ContactRatioScan(scales, lo, hi, len(S))
