"""Exact sparse multivariate polynomials over the rationals.

A polynomial is an immutable map from exponent tuples to nonzero
``Fraction`` coefficients.  Floats appear only at evaluation time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

INF = math.inf


class PolynomialError(ValueError):
    pass


def _as_fraction(r) -> Fraction:
    if isinstance(r, Fraction):
        return r
    if isinstance(r, float):
        return Fraction(r)
    return Fraction(r)


@dataclass(frozen=True)
class WPolynomial:
    nvars: int
    terms: Mapping[Monomial, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.nvars < 1:
            raise PolynomialError("nvars must be positive")
        clean = {}
        for mono, coef in self.terms.items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != self.nvars:
                raise PolynomialError(
                    f"monomial {mono} has {len(mono)} exponents, expected {self.nvars}")
            if any(e < 0 for e in mono):
                raise PolynomialError(f"negative exponent in {mono}")
            coef = _as_fraction(coef)
            if coef != 0:
                clean[mono] = clean.get(mono, Fraction(0)) + coef
                if clean[mono] == 0:
                    del clean[mono]
        object.__setattr__(self, "terms", clean)

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> WPolynomial:
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, value) -> WPolynomial:
        return cls(nvars, {(0,) * nvars: _as_fraction(value)})

    @classmethod
    def variable(cls, nvars: int, index: int) -> WPolynomial:
        """The coordinate x_index (0-based)."""
        if not 0 <= index < nvars:
            raise PolynomialError(f"variable index {index} out of range")
        mono = tuple(1 if k == index else 0 for k in range(nvars))
        return cls(nvars, {mono: Fraction(1)})

    # -- basic queries -------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def min_total_degree(self) -> int | float:
        if not self.terms:
            return INF
        return min(sum(m) for m in self.terms)

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __eq__(self, other):
        if not isinstance(other, WPolynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    # -- ring arithmetic ------------------------------------------------
    def _check(self, other: WPolynomial) -> None:
        if self.nvars != other.nvars:
            raise PolynomialError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> WPolynomial:
        if isinstance(other, WPolynomial):
            self._check(other)
            return other
        return WPolynomial.constant(self.nvars, other)

    def __add__(self, other) -> WPolynomial:
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, Fraction(0)) + c
        return WPolynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> WPolynomial:
        return WPolynomial(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> WPolynomial:
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> WPolynomial:
        return self._coerce(other) - self

    def __mul__(self, other) -> WPolynomial:
        if not isinstance(other, WPolynomial):
            return self.scale(other)
        self._check(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, Fraction(0)) + c1 * c2
        return WPolynomial(self.nvars, out)

    def __rmul__(self, other) -> WPolynomial:
        return self.scale(other)

    def __pow__(self, n: int) -> WPolynomial:
        if not isinstance(n, int) or n < 0:
            raise PolynomialError("only non-negative integer powers")
        result = WPolynomial.constant(self.nvars, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def scale(self, r) -> WPolynomial:
        r = _as_fraction(r)
        if r == 0:
            return WPolynomial.zero(self.nvars)
        return WPolynomial(self.nvars, {m: c * r for m, c in self.terms.items()})

    # -- calculus -------------------------------------------------------
    def diff(self, i: int) -> WPolynomial:
        """Partial derivative in the 0-based variable ``i``."""
        if not 0 <= i < self.nvars:
            raise PolynomialError(f"variable index {i} out of range for {self.nvars} variables")
        out = {}
        for m, c in self.terms.items():
            if m[i] == 0:
                continue
            dm = list(m)
            dm[i] -= 1
            out[tuple(dm)] = c * m[i]
        return WPolynomial(self.nvars, out)

    def gradient(self) -> list[WPolynomial]:
        return [self.diff(i) for i in range(self.nvars)]

    # -- evaluation -----------------------------------------------------
    def eval_exact(self, point: Sequence) -> Fraction:
        if len(point) != self.nvars:
            raise PolynomialError(f"point has {len(point)} coordinates, expected {self.nvars}")
        pt = [_as_fraction(v) for v in point]
        total = Fraction(0)
        for m, c in self.terms.items():
            term = c
            for v, e in zip(pt, m):
                if e:
                    term *= v ** e
            total += term
        return total

    def __call__(self, point: Sequence[float]) -> float:
        return float(self.eval_array(np.asarray(point, dtype=float)))

    def eval_array(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at one point (shape (N,)) or a batch (shape (..., N))."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.nvars:
            raise PolynomialError(
                f"point has {pts.shape[-1]} coordinates, expected {self.nvars}")
        exps, coefs = self.compiled()
        if not len(coefs):
            return np.zeros(pts.shape[:-1])
        powers = _power_table(pts, exps.max(axis=0) if len(exps) else None)
        acc = np.zeros(pts.shape[:-1])
        for row, c in zip(exps, coefs):
            term = np.full(pts.shape[:-1], c)
            for j, e in enumerate(row):
                if e:
                    term = term * powers[j][e]
            acc = acc + term
        return acc

    def compiled(self) -> tuple[np.ndarray, np.ndarray]:
        cache = self.__dict__.get("_compiled")
        if cache is None:
            monos = sorted(self.terms)
            exps = np.array(monos, dtype=int).reshape(len(monos), self.nvars)
            coefs = np.array([float(self.terms[m]) for m in monos])
            cache = (exps, coefs)
            object.__setattr__(self, "_compiled", cache)
        return cache

    # -- weights --------------------------------------------------------
    def word(self, omega: Sequence[int]) -> int | float:
        """Weighted order: min over monomials of sum(e_i * omega_i); inf for zero."""
        omega = _omega_of(omega)
        if len(omega) != self.nvars:
            raise PolynomialError("weight vector length does not match nvars")
        if not self.terms:
            return INF
        return min(_wdeg(m, omega) for m in self.terms)

    def weighted_degrees(self, omega: Sequence[int]) -> set[int]:
        omega = _omega_of(omega)
        return {_wdeg(m, omega) for m in self.terms}

    def is_weighted_homogeneous(self, omega: Sequence[int]) -> tuple[bool, int | float | None]:
        """(True, degree) if all monomials share one weighted degree, else (False, None)."""
        degs = self.weighted_degrees(omega)
        if not degs:
            return True, INF
        if len(degs) == 1:
            return True, degs.pop()
        return False, None

    # -- printing -------------------------------------------------------
    def to_str(self, var_names: Sequence[str] | None = None) -> str:
        if var_names is None:
            var_names = [f"x{i + 1}" for i in range(self.nvars)]
        if not self.terms:
            return "0"
        pieces = []
        for m in sorted(self.terms, key=lambda m: (-sum(m), tuple(-e for e in m))):
            c = self.terms[m]
            factors = []
            for name, e in zip(var_names, m):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            mag = abs(c)
            if not factors:
                body = _frac_str(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([_frac_str(mag)] + factors)
            sign = "-" if c < 0 else "+"
            pieces.append((sign, body))
        first_sign, first = pieces[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in pieces[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"WPolynomial({self.to_str()!r}, nvars={self.nvars})"


def _frac_str(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _omega_of(omega) -> tuple[int, ...]:
    return tuple(getattr(omega, "omega", omega))


def _wdeg(mono: Monomial, omega: Sequence[int]) -> int:
    return sum(e * w for e, w in zip(mono, omega))


def _power_table(pts: np.ndarray, maxexp) -> list[list[np.ndarray]]:
    table = []
    for j in range(pts.shape[-1]):
        col = pts[..., j]
        row = [np.ones_like(col)]
        top = int(maxexp[j]) if maxexp is not None else 0
        for _ in range(top):
            row.append(row[-1] * col)
        table.append(row)
    return table


def poly_arith(a: WPolynomial, b: WPolynomial, op: str) -> WPolynomial:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        if a.nvars != b.nvars:
            raise PolynomialError(f"nvars mismatch: {a.nvars} vs {b.nvars}")
        return a * b
    raise ValueError(f"unknown op {op!r}")


def poly_scale(a: WPolynomial, r) -> WPolynomial:
    return a.scale(r)


def diff_poly(p: WPolynomial, i: int) -> WPolynomial:
    return p.diff(i)


def eval_poly(p: WPolynomial, point: Sequence[float]) -> float:
    return p(point)


def eval_exact(p: WPolynomial, point: Sequence) -> Fraction:
    return p.eval_exact(point)


def word(p: WPolynomial, ws) -> int | float:
    return p.word(ws)


def is_weighted_homogeneous(p: WPolynomial, ws) -> tuple[bool, int | float | None]:
    return p.is_weighted_homogeneous(ws)


def taylor_coefficients(p: WPolynomial, s: np.ndarray) -> dict[Monomial, np.ndarray]:
    """Coefficients c_a(s) with p(s + v) = sum_a c_a(s) v^a.

    ``s`` may be a single point or a batch (..., N); every coefficient has the
    batch shape.  Computed by binomial expansion of each monomial.
    """
    s = np.asarray(s, dtype=float)
    batch = s.shape[:-1]
    if not p.terms:
        return {}
    maxexp = np.max(np.array(list(p.terms), dtype=int), axis=0)
    powers = _power_table(s, maxexp)
    out: dict[Monomial, np.ndarray] = {}
    for mono, c in p.terms.items():
        # iterate over all a <= mono
        ranges = [range(e + 1) for e in mono]
        for alpha in itertools.product(*ranges):
            coef = float(c)
            for e, a in zip(mono, alpha):
                coef *= math.comb(e, a)
            val = np.full(batch, coef)
            for j, (e, a) in enumerate(zip(mono, alpha)):
                if e - a:
                    val = val * powers[j][e - a]
            if alpha in out:
                out[alpha] = out[alpha] + val
            else:
                out[alpha] = val
    return out
