"""Germ systems and the obstruction coefficient tau + det(Gram) on the sphere.

The coefficient of z in the extended implicit-function equation vanishes
exactly on the link of the obstruction locus, so the locus is detected by
zero-finding for this one non-negative function: no ideal computations.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .poly import INF, WPolynomial
from .wgeom import (WeightSystem, group_factors, group_factors_exact, rational_sphere_points,
                    sample_sphere)

log = logging.getLogger(__name__)

DEFAULT_OBSTRUCTION_TOL = 1e-6


class GermError(ValueError):
    """Base class for germ-definition validation failures."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


class NotWeightedHomogeneous(GermError):
    pass


class PerturbationOrderTooLow(GermError):
    pass


class NotInSquaredMaximalIdeal(GermError):
    pass


class CodimensionTooLarge(GermError):
    pass


class CauchyBinetMismatch(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class GermSystem:
    ws: WeightSystem
    f_p: tuple[WPolynomial, ...]
    p: tuple[int, ...]
    f_gt: tuple[WPolynomial, ...]
    delta: int | float
    var_names: tuple[str, ...] = ()
    name: str = ""

    @property
    def c(self) -> int:
        return len(self.f_p)

    @property
    def n(self) -> int:
        return self.ws.n

    @property
    def mode(self) -> str:
        return "same_order" if self.delta == 0 else "higher_order"

    @cached_property
    def grads(self) -> tuple[tuple[WPolynomial, ...], ...]:
        """grads[i][j] = d f_{p_i} / d x_j."""
        return tuple(tuple(f.diff(j) for j in range(self.n)) for f in self.f_p)

    @cached_property
    def coefficient_poly(self) -> WPolynomial:
        """tau + det(A) as an exact polynomial in s (A uses squared group norms)."""
        return coefficient_polynomial(self)

    def equations(self, eps) -> list[WPolynomial]:
        """f_p + eps * f_gt, with eps converted exactly."""
        e = Fraction(eps) if not isinstance(eps, Fraction) else eps
        return [f + g.scale(e) for f, g in zip(self.f_p, self.f_gt)]

    def describe(self) -> str:
        delta = "inf" if self.delta == INF else str(self.delta)
        groups = ",".join(str(r) for r in self.ws.group_ends)
        p = self.p[0] if self.c == 1 else "(" + ",".join(map(str, self.p)) + ")"
        return f"p={p} δ={delta} mode={self.mode} groups=({groups})"


def build_germ_system(ws: WeightSystem, f_p: Sequence[WPolynomial], f_gt: Sequence[WPolynomial],
                      var_names: Sequence[str] = (), name: str = "") -> GermSystem:
    if len(f_p) != len(f_gt) or not f_p:
        raise GermError("equations and perturbations must be non-empty lists of equal length")
    c = len(f_p)
    if c > ws.n:
        raise CodimensionTooLarge(f"codimension {c} exceeds the number of variables {ws.n}")
    degs = []
    for i, f in enumerate(f_p):
        if f.nvars != ws.n:
            raise GermError(f"equation {i} has {f.nvars} variables, expected {ws.n}", i)
        ok, d = f.is_weighted_homogeneous(ws)
        if not ok or f.is_zero():
            raise NotWeightedHomogeneous(
                f"equation {i} is not weighted homogeneous for weights {ws.omega}", i)
        if f.min_total_degree() < 2:
            raise NotInSquaredMaximalIdeal(
                f"equation {i} has terms of total degree < 2 (must lie in (x)^2)", i)
        degs.append(d)
    gaps = []
    for i, (g, d) in enumerate(zip(f_gt, degs)):
        if g.nvars != ws.n:
            raise GermError(f"perturbation {i} has {g.nvars} variables, expected {ws.n}", i)
        w = g.word(ws)
        if w < d:
            raise PerturbationOrderTooLow(
                f"perturbation {i} has weighted order {w} below the equation degree {d}", i)
        gaps.append(w - d)
    delta = min(gaps)
    if delta != INF:
        delta = int(delta)
    return GermSystem(ws, tuple(f_p), tuple(int(d) for d in degs), tuple(f_gt), delta,
                      tuple(var_names), name)


# -- rescaled gradient, Gram matrix, adjugate ------------------------------

def gradient_matrix(gs: GermSystem, s) -> np.ndarray:
    """(..., c, N) matrix of plain gradients at s."""
    s = np.asarray(s, dtype=float)
    rows = [np.stack([g.eval_array(s) for g in row], axis=-1) for row in gs.grads]
    return np.stack(rows, axis=-2)


def rescaled_gradient(gs: GermSystem, s) -> np.ndarray:
    """Column j of the gradient matrix times sqrt(sum_{i <= groupEnd(j)} s_i^2)."""
    s = np.asarray(s, dtype=float)
    J = gradient_matrix(gs, s)
    return J * np.sqrt(group_factors(gs.ws, s))[..., None, :]


def adjugate(A: np.ndarray) -> np.ndarray:
    """Adjugate of a (batch of) c x c matrices via cofactors."""
    A = np.asarray(A, dtype=float)
    c = A.shape[-1]
    if c == 1:
        return np.ones_like(A)
    if c == 2:
        adj = np.empty_like(A)
        adj[..., 0, 0] = A[..., 1, 1]
        adj[..., 1, 1] = A[..., 0, 0]
        adj[..., 0, 1] = -A[..., 0, 1]
        adj[..., 1, 0] = -A[..., 1, 0]
        return adj
    adj = np.empty_like(A)
    for i in range(c):
        for j in range(c):
            minor = np.delete(np.delete(A, i, axis=-2), j, axis=-1)
            adj[..., j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def block_minor_sum(M: np.ndarray) -> np.ndarray:
    """Sum over c x c column blocks of det(block)^2."""
    M = np.asarray(M, dtype=float)
    c, N = M.shape[-2], M.shape[-1]
    total = np.zeros(M.shape[:-2])
    for cols in itertools.combinations(range(N), c):
        total = total + np.linalg.det(M[..., list(cols)]) ** 2
    return total


@dataclass(frozen=True)
class GramAdjugate:
    A: np.ndarray
    A_adj: np.ndarray
    detA: np.ndarray


def gram_and_adjugate(M, rtol: float = 1e-10) -> GramAdjugate:
    """A = M M^T, its adjugate, and det A cross-checked by Cauchy-Binet.

    Raises CauchyBinetMismatch when det(M M^T) and the block-minor sum
    disagree beyond ``rtol`` (relative to the entry scale of M).
    """
    M = np.asarray(M, dtype=float)
    c, N = M.shape[-2], M.shape[-1]
    if c > N:
        raise ValueError(f"{c} x {N} matrix: need c <= N")
    A = M @ np.swapaxes(M, -1, -2)
    adj = adjugate(A)
    det_gram = np.linalg.det(A) if c > 1 else A[..., 0, 0]
    det_cb = block_minor_sum(M)
    scale = np.sum(M * M, axis=(-2, -1)) ** c
    bad = np.abs(det_gram - det_cb) > rtol * np.maximum(np.abs(det_cb), 1e-300) + 1e-13 * scale
    if np.any(bad):
        raise CauchyBinetMismatch(
            f"det(M M^T) and the block-minor sum disagree in {int(np.sum(bad))} case(s)")
    return GramAdjugate(A, adj, det_cb)


# -- exact rational path -------------------------------------------------------

def det_exact(A: Sequence[Sequence[Fraction]]) -> Fraction:
    """Determinant by fraction-exact Gaussian elimination."""
    M = [[Fraction(v) for v in row] for row in A]
    n = len(M)
    det = Fraction(1)
    for k in range(n):
        piv = next((r for r in range(k, n) if M[r][k] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != k:
            M[k], M[piv] = M[piv], M[k]
            det = -det
        det *= M[k][k]
        for r in range(k + 1, n):
            f = M[r][k] / M[k][k]
            if f:
                for col in range(k, n):
                    M[r][col] -= f * M[k][col]
    return det


def adjugate_exact(A: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
    n = len(A)
    if n == 1:
        return [[Fraction(1)]]
    adj = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[A[r][q] for q in range(n) if q != j] for r in range(n) if r != i]
            adj[j][i] = (-1) ** (i + j) * det_exact(minor)
    return adj


def gram_exact(gs: GermSystem, s: Sequence) -> list[list[Fraction]]:
    """A_ik = sum_j g_j(s) d_j f_i(s) d_j f_k(s), exact for rational s."""
    s = [Fraction(v) for v in s]
    g = group_factors_exact(gs.ws, s)
    J = [[d.eval_exact(s) for d in row] for row in gs.grads]
    c = gs.c
    return [[sum((g[j] * J[i][j] * J[k][j] for j in range(gs.n)), Fraction(0))
             for k in range(c)] for i in range(c)]


def tau_exact(gs: GermSystem, s: Sequence) -> Fraction:
    return sum((f.eval_exact(s) ** 2 for f in gs.f_p), Fraction(0))


def obstruction_coefficient_exact(gs: GermSystem, s: Sequence) -> Fraction:
    return tau_exact(gs, s) + det_exact(gram_exact(gs, s))


# -- float path ------------------------------------------------------------

def tau(gs: GermSystem, s) -> np.ndarray | float:
    s = np.asarray(s, dtype=float)
    out = sum(f.eval_array(s) ** 2 for f in gs.f_p)
    return float(out) if np.ndim(out) == 0 else out


def obstruction_coefficient(gs: GermSystem, s) -> np.ndarray | float:
    """tau(s) + det(M M^T) for the rescaled gradient M.

    Falls back to exact rational arithmetic when the two determinant routes
    disagree (only possible for ill-conditioned points).
    """
    s = np.asarray(s, dtype=float)
    M = rescaled_gradient(gs, s)
    try:
        det = gram_and_adjugate(M).detA
    except CauchyBinetMismatch:
        log.debug("Cauchy-Binet mismatch; recomputing exactly")
        flat = s.reshape(-1, gs.n)
        det = np.array([float(det_exact(gram_exact(gs, [Fraction(v) for v in row])))
                        for row in flat]).reshape(s.shape[:-1])
    out = tau(gs, s) + det
    return float(out) if np.ndim(out) == 0 else out


def coefficient_polynomial(gs: GermSystem) -> WPolynomial:
    n = gs.n
    sq = [WPolynomial.variable(n, j) ** 2 for j in range(n)]
    g = []
    for j in range(n):
        r = gs.ws.group_end_of(j)
        total = WPolynomial.zero(n)
        for i in range(r):
            total = total + sq[i]
        g.append(total)
    A = [[sum((g[j] * gs.grads[i][j] * gs.grads[k][j] for j in range(n)), WPolynomial.zero(n))
          for k in range(gs.c)] for i in range(gs.c)]
    t = sum((f * f for f in gs.f_p), WPolynomial.zero(n))
    return t + _det_poly(A)


def _det_poly(A: list[list[WPolynomial]]) -> WPolynomial:
    n = len(A)
    if n == 1:
        return A[0][0]
    total = WPolynomial.zero(A[0][0].nvars)
    for j in range(n):
        minor = [[A[r][q] for q in range(n) if q != j] for r in range(1, n)]
        term = A[0][j] * _det_poly(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def is_obstructed(gs: GermSystem, s, tol: float = DEFAULT_OBSTRUCTION_TOL) -> bool:
    return bool(obstruction_coefficient(gs, s) < tol)


# -- scanning --------------------------------------------------------------

@dataclass
class ObstructionReport:
    min_coeff: float
    witness_points: list[np.ndarray]
    witness_values: list[float]
    exact_zeros: list[tuple[Fraction, ...]]
    verdict: str
    samples: int = 0
    seed: int = 0
    tol: float = DEFAULT_OBSTRUCTION_TOL
    descent_min: float = math.inf

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "min_coeff": self.min_coeff,
            "descent_min": self.descent_min,
            "witnesses": [{"s": list(map(float, p)), "coeff": v}
                          for p, v in zip(self.witness_points, self.witness_values)],
            "exact_zeros": [[str(v) for v in p] for p in self.exact_zeros],
            "samples": self.samples,
            "seed": self.seed,
            "tol": self.tol,
        }


def _descend(poly: WPolynomial, grad: list[WPolynomial], s0: np.ndarray, steps: int = 200) -> np.ndarray:
    """Projected gradient descent on the sphere with Armijo backtracking (batched)."""
    s = np.array(s0, dtype=float)
    val = poly.eval_array(s)
    lr = np.full(s.shape[0], 1e-2)
    for _ in range(steps):
        G = np.stack([g.eval_array(s) for g in grad], axis=-1)
        G = G - np.sum(G * s, axis=-1, keepdims=True) * s
        gn2 = np.sum(G * G, axis=-1)
        active = gn2 > 1e-300
        if not np.any(active):
            break
        for _try in range(30):
            cand = s - lr[:, None] * G
            cand /= np.linalg.norm(cand, axis=-1, keepdims=True)
            cval = poly.eval_array(cand)
            ok = (cval <= val - 1e-4 * lr * gn2) | ~active
            if np.all(ok):
                break
            lr = np.where(ok, lr, lr * 0.5)
        accept = ok & active
        s = np.where(accept[:, None], cand, s)
        val = np.where(accept, cval, val)
        lr = np.where(accept, lr * 2.0, lr)
    return s


def scan_link(gs: GermSystem, n: int = 10_000, seed: int = 42, tol: float = DEFAULT_OBSTRUCTION_TOL,
              n_descent: int = 10, descent_steps: int = 200) -> ObstructionReport:
    """Search the sphere for zeros of the obstruction coefficient.

    Verdict: sigma_nontrivial if an exact rational zero is found or descent
    reaches below tol^2; sigma_trivial if every probe is >= tol; otherwise
    inconclusive.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    S = sample_sphere(n, seed, gs.n)
    vals = obstruction_coefficient(gs, S)

    exact_zeros = []
    rat_pts = rational_sphere_points(gs.ws)
    rat_vals = []
    cpoly = gs.coefficient_poly
    for pt in rat_pts:
        v = cpoly.eval_exact(pt)
        rat_vals.append(float(v))
        if v == 0:
            exact_zeros.append(pt)

    order = np.argsort(vals)[:n_descent]
    grad = cpoly.gradient()
    D = _descend(cpoly, grad, S[order], descent_steps)
    dvals = obstruction_coefficient(gs, D)

    all_pts = np.concatenate([S, np.array(rat_pts, dtype=float), D])
    all_vals = np.concatenate([vals, np.array(rat_vals), np.atleast_1d(dvals)])
    idx = np.argsort(all_vals)[:10]
    min_coeff = float(all_vals[idx[0]])
    descent_min = float(np.min(dvals))

    if exact_zeros or descent_min < tol ** 2:
        verdict = "sigma_nontrivial"
    elif min_coeff >= tol:
        verdict = "sigma_trivial"
    else:
        verdict = "inconclusive"
    return ObstructionReport(min_coeff, [all_pts[i] for i in idx], [float(all_vals[i]) for i in idx],
                             exact_zeros, verdict, n, seed, tol, descent_min)


# -- link points ------------------------------------------------------------

def find_link_points(gs: GermSystem, n: int = 50, seed: int = 42, max_starts: int | None = None,
                     tol: float = 1e-13, min_coeff: float = DEFAULT_OBSTRUCTION_TOL,
                     dedup: float = 1e-7) -> np.ndarray:
    """Points of V(f_p) on the unit sphere found by minimum-norm Newton.

    Starts from seeded random directions and keeps converged, mutually
    distinct points off the obstruction locus, stopping after ``n``.  A
    finite link yields fewer points.
    """
    max_starts = max_starts or 40 * n
    S = sample_sphere(max_starts, seed, gs.n)
    found: list[np.ndarray] = []
    batch = 200
    for b0 in range(0, max_starts, batch):
        X = _newton_to_link(gs, S[b0:b0 + batch])
        res = np.abs(np.stack([f.eval_array(X) for f in gs.f_p], axis=-1)).max(axis=-1)
        good = (res <= tol) & np.isfinite(res)
        if not np.any(good):
            continue
        coeff = obstruction_coefficient(gs, X[good])
        for x, cval in zip(X[good], np.atleast_1d(coeff)):
            if cval < min_coeff:
                continue
            if any(np.linalg.norm(x - y) < dedup for y in found):
                continue
            found.append(x)
            if len(found) >= n:
                return np.array(found)
    return np.array(found).reshape(-1, gs.n)


def _newton_to_link(gs: GermSystem, S: np.ndarray, iters: int = 60) -> np.ndarray:
    X = S.copy()
    for _ in range(iters):
        F = np.concatenate([np.stack([f.eval_array(X) for f in gs.f_p], axis=-1),
                            (np.sum(X * X, axis=-1) - 1.0)[:, None]], axis=-1)
        J = np.concatenate([gradient_matrix(gs, X), 2 * X[:, None, :]], axis=-2)
        step = np.einsum("bij,bj->bi", np.linalg.pinv(J), F)
        X = X - step
        X = X / np.linalg.norm(X, axis=-1, keepdims=True)
        if np.max(np.abs(F)) < 1e-15:
            break
    return X


def regular_sequence_heuristic(gs: GermSystem, n: int = 100, seed: int = 42) -> float:
    """Fraction of found link points where the Jacobian of f_p drops rank.

    A high fraction hints at a component of excess dimension, i.e. that the
    equations are not a regular sequence.  Heuristic only.
    """
    pts = find_link_points(gs, n, seed, min_coeff=-1.0)
    if len(pts) == 0:
        return 0.0
    J = gradient_matrix(gs, pts)
    sv = np.linalg.svd(J, compute_uv=False)
    low = sv[:, -1] < 1e-8 * np.maximum(sv[:, 0], 1.0)
    return float(np.mean(low))
