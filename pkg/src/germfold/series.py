"""Truncated power series in the radial variable t.

``TSeries.coeffs`` has shape ``(..., K+1)``: the last axis holds the
coefficients of t^0..t^K, any leading axes are a batch (one series per
sphere point).  Every operation broadcasts over the batch, so bulk arc
solves are plain numpy maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .poly import WPolynomial

DEFAULT_K = 12
DEFAULT_TOL = 1e-9


class NonVanishingLeadingCoefficients(ArithmeticError):
    """A negative shift would drop coefficients that are not zero."""


class DegenerateDenominator(ZeroDivisionError):
    pass


class AboveTruncation(int):
    """t-adic order marker meaning "> K": the series vanishes through t^K.

    The integer value is K+1, the tightest certified lower bound.
    """

    def __repr__(self):
        return f">{int(self) - 1}"

    __str__ = __repr__


@dataclass(frozen=True, eq=False)
class TSeries:
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("series coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, value, K: int = DEFAULT_K) -> TSeries:
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (K + 1,))
        c[..., 0] = value
        return cls(c)

    @classmethod
    def zeros(cls, K: int = DEFAULT_K, batch: tuple = ()) -> TSeries:
        return cls(np.zeros(batch + (K + 1,)))

    @classmethod
    def monomial(cls, m: int, K: int = DEFAULT_K, value=1.0) -> TSeries:
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (K + 1,))
        if m <= K:
            c[..., m] = value
        return cls(c)

    # -- shape ---------------------------------------------------------
    @property
    def trunc(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def batch(self) -> tuple:
        return self.coeffs.shape[:-1]

    def truncate(self, K: int) -> TSeries:
        if K >= self.trunc:
            return self
        return TSeries(self.coeffs[..., : K + 1])

    def __getitem__(self, idx) -> TSeries:
        """Select batch entries (never the coefficient axis)."""
        if not isinstance(idx, tuple):
            idx = (idx,)
        return TSeries(self.coeffs[idx + (slice(None),)])

    def __len__(self):
        return self.trunc + 1

    def __repr__(self):
        return f"TSeries(K={self.trunc}, batch={self.batch}, coeffs={self.coeffs!r})"

    # -- arithmetic ----------------------------------------------------
    def _pair(self, other) -> tuple[np.ndarray, np.ndarray]:
        if not isinstance(other, TSeries):
            other = TSeries.constant(other, self.trunc)
        K = min(self.trunc, other.trunc)
        return self.coeffs[..., : K + 1], other.coeffs[..., : K + 1]

    def __add__(self, other) -> TSeries:
        a, b = self._pair(other)
        return TSeries(a + b)

    __radd__ = __add__

    def __sub__(self, other) -> TSeries:
        a, b = self._pair(other)
        return TSeries(a - b)

    def __rsub__(self, other) -> TSeries:
        a, b = self._pair(other)
        return TSeries(b - a)

    def __neg__(self) -> TSeries:
        return TSeries(-self.coeffs)

    def __mul__(self, other) -> TSeries:
        if not isinstance(other, TSeries):
            return self.scale(other)
        a, b = self._pair(other)
        return TSeries(_cauchy(a, b))

    def __rmul__(self, other) -> TSeries:
        return self.scale(other)

    def __truediv__(self, other) -> TSeries:
        if isinstance(other, TSeries):
            return ts_div(self, other)
        return self.scale(1.0 / np.asarray(other, dtype=float))

    def scale(self, r) -> TSeries:
        r = np.asarray(r, dtype=float)
        return TSeries(self.coeffs * r[..., None])

    def __pow__(self, n: int) -> TSeries:
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("integer power must be non-negative")
        out = TSeries.constant(np.ones(self.batch), self.trunc)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def shift(self, m: int, tol: float = DEFAULT_TOL) -> TSeries:
        return ts_shift(self, m, tol)

    # -- evaluation ----------------------------------------------------
    def __call__(self, t) -> np.ndarray:
        """Horner evaluation; ``t`` broadcasts against the batch shape."""
        t = np.asarray(t, dtype=float)
        acc = np.zeros(np.broadcast_shapes(self.batch, t.shape))
        for k in range(self.trunc, -1, -1):
            acc = acc * t + self.coeffs[..., k]
        return acc

    def deriv(self) -> TSeries:
        """d/dt; the truncation drops by one."""
        if self.trunc == 0:
            return TSeries(np.zeros(self.batch + (1,)))
        k = np.arange(1, self.trunc + 1, dtype=float)
        return TSeries(self.coeffs[..., 1:] * k)

    def ord(self, tol: float = DEFAULT_TOL) -> int:
        return ts_ord(self, tol)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


def _cauchy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    K1 = a.shape[-1]
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (K1,)
    out = np.zeros(shape)
    for i in range(K1):
        ai = a[..., i : i + 1]
        if not np.any(ai):
            continue
        out[..., i:] += ai * b[..., : K1 - i]
    return out


def ts_arith(a: TSeries, b: TSeries, op: str) -> TSeries:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def ts_scale(a: TSeries, r) -> TSeries:
    return a.scale(r)


def ts_shift(a: TSeries, m: int, tol: float = DEFAULT_TOL) -> TSeries:
    """Multiply by t^m.  For m < 0 the dropped leading block must vanish."""
    m = int(m)
    if m == 0:
        return a
    c = a.coeffs
    if m > 0:
        pad = np.zeros(a.batch + (m,))
        return TSeries(np.concatenate([pad, c], axis=-1))
    k = -m
    if k > a.trunc:
        raise NonVanishingLeadingCoefficients(
            f"shift by {m} leaves nothing of a series truncated at {a.trunc}")
    lead = c[..., :k]
    worst = float(np.max(np.abs(lead))) if lead.size else 0.0
    if worst > tol:
        raise NonVanishingLeadingCoefficients(
            f"cannot divide by t^{k}: leading coefficient of size {worst:.3e} exceeds {tol:g}")
    return TSeries(c[..., k:])


def ts_ord(a: TSeries, tol: float = DEFAULT_TOL) -> int:
    """Least m with |c_m| > tol * max(1, max|c|); AboveTruncation(K+1) if none.

    For a batch the minimum over entries is returned.
    """
    c = np.abs(a.coeffs)
    if c.size == 0:
        return AboveTruncation(a.trunc + 1)
    scale = max(1.0, float(np.max(c)))
    flat = c.reshape(-1, c.shape[-1])
    hits = np.nonzero(np.any(flat > tol * scale, axis=0))[0]
    if len(hits) == 0:
        return AboveTruncation(a.trunc + 1)
    return int(hits[0])


def ts_ord_batch(a: TSeries, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Per-entry t-adic order; K+1 where an entry vanishes through t^K."""
    c = np.abs(a.coeffs)
    scale = np.maximum(1.0, np.max(c, axis=-1, keepdims=True))
    hit = c > tol * scale
    first = np.argmax(hit, axis=-1)
    return np.where(np.any(hit, axis=-1), first, a.trunc + 1)


def ts_div(a: TSeries, b: TSeries, tol: float = DEFAULT_TOL) -> TSeries:
    """Quotient q with q*b = a, after removing the common power of t."""
    K = min(a.trunc, b.trunc)
    a = a.truncate(K)
    b = b.truncate(K)
    ob = ts_ord(b, tol)
    if isinstance(ob, AboveTruncation):
        raise DegenerateDenominator("denominator vanishes through the truncation order")
    oa = ts_ord(a, tol)
    if oa < ob:
        raise DegenerateDenominator(
            f"denominator order {ob} exceeds numerator order {oa}")
    an = a.coeffs[..., ob:]
    bn = b.coeffs[..., ob:]
    lead = bn[..., 0]
    if np.any(np.abs(lead) <= tol * max(1.0, b.max_abs())):
        raise DegenerateDenominator("leading coefficient of the denominator vanishes")
    n = an.shape[-1]
    q = np.zeros(np.broadcast_shapes(an.shape, bn.shape))
    for k in range(n):
        acc = an[..., k].copy()
        for j in range(1, k + 1):
            acc = acc - bn[..., j] * q[..., k - j]
        q[..., k] = acc / lead
    return TSeries(q)


def ts_compose_poly(p: WPolynomial, args: Sequence[TSeries]) -> TSeries:
    """p(args[0](t), ..., args[N-1](t)) truncated to the common order.

    Arguments with different truncations are cut to the smallest one.
    """
    if len(args) != p.nvars:
        raise ValueError(f"expected {p.nvars} series arguments, got {len(args)}")
    K = min(a.trunc for a in args)
    args = [a.truncate(K) for a in args]
    batch = np.broadcast_shapes(*(a.batch for a in args))
    powers = _PowerCache(args)
    acc = np.zeros(batch + (K + 1,))
    for mono, coef in p.terms.items():
        acc = acc + float(coef) * powers.monomial(mono).coeffs
    return TSeries(np.broadcast_to(acc, batch + (K + 1,)))


def compose_weighted(p: WPolynomial, omega: Sequence[int], v: Sequence[TSeries]) -> TSeries:
    """p(t^omega_1 v_1, ..., t^omega_N v_N) without losing precision.

    Each monomial of weighted degree w is formed from the v's and shifted by
    t^w, so the result is known through t^(word(p) + min trunc(v)).
    """
    if len(v) != p.nvars:
        raise ValueError(f"expected {p.nvars} series arguments, got {len(v)}")
    K = min(a.trunc for a in v)
    v = [a.truncate(K) for a in v]
    batch = np.broadcast_shapes(*(a.batch for a in v))
    if p.is_zero():
        return TSeries(np.zeros(batch + (K + 1,)))
    degs = {mono: sum(e * w for e, w in zip(mono, omega)) for mono in p.terms}
    lo = min(degs.values())
    Kout = lo + K
    acc = np.zeros(batch + (Kout + 1,))
    powers = _PowerCache(v)
    for mono, coef in p.terms.items():
        d = degs[mono]
        if d > Kout:
            continue
        term = powers.monomial(mono).coeffs[..., : Kout - d + 1]
        acc[..., d:] += float(coef) * term
    return TSeries(acc)


class _PowerCache:
    """Memoized monomials in a fixed list of series."""

    def __init__(self, args: Sequence[TSeries]):
        self.args = list(args)
        self.K = min(a.trunc for a in args)
        self.batch = np.broadcast_shapes(*(a.batch for a in args))
        self.single: list[list[TSeries]] = [
            [TSeries.constant(np.ones(a.batch), self.K)] for a in self.args]
        self.cache: dict[tuple[int, ...], TSeries] = {}

    def power(self, j: int, e: int) -> TSeries:
        row = self.single[j]
        while len(row) <= e:
            row.append(row[-1] * self.args[j])
        return row[e]

    def monomial(self, mono: tuple[int, ...]) -> TSeries:
        got = self.cache.get(mono)
        if got is not None:
            return got
        nz = [j for j, e in enumerate(mono) if e]
        if not nz:
            out = TSeries.constant(np.ones(self.batch), self.K)
        elif len(nz) == 1:
            out = self.power(nz[0], mono[nz[0]])
        else:
            j = nz[-1]
            rest = list(mono)
            rest[j] = 0
            out = self.monomial(tuple(rest)) * self.power(j, mono[j])
        self.cache[mono] = out
        return out


def ts_pow_real(a: TSeries, alpha: float) -> TSeries:
    """a(t)^alpha for a series with positive constant term (Miller recurrence)."""
    c = a.coeffs
    c0 = c[..., 0]
    if np.any(c0 <= 0):
        raise DegenerateDenominator("real power needs a positive constant term")
    n = a.trunc + 1
    out = np.zeros(c.shape)
    out[..., 0] = c0 ** alpha
    for k in range(1, n):
        acc = np.zeros(a.batch)
        for j in range(1, k + 1):
            acc = acc + (alpha * j - (k - j)) * c[..., j] * out[..., k - j]
        out[..., k] = acc / (k * c0)
    return TSeries(out)


def ts_compose_series(a: TSeries, b: TSeries) -> TSeries:
    """a(b(t)) for b with zero constant term (Horner in series arithmetic)."""
    if np.any(b.coeffs[..., 0] != 0):
        raise ValueError("inner series must have zero constant term")
    K = min(a.trunc, b.trunc)
    b = b.truncate(K)
    acc = TSeries.constant(a.coeffs[..., K], K)
    for k in range(K - 1, -1, -1):
        acc = acc * b + TSeries.constant(a.coeffs[..., k], K)
    return acc
