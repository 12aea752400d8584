"""Orchestrated property checks for one germ, producing a VerificationReport."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arcs import NoContraction, Obstructed, residual_orders_batch, solve_arcs
from .germfile import GermDefinition
from .obstruction import (DEFAULT_OBSTRUCTION_TOL, GermSystem, find_link_points, obstruction_coefficient,
                          scan_link)
from .poly import INF
from .series import TSeries, compose_weighted
from .trivial import (Trivializer, contact_factor_series, contact_identity_error, contact_ratio_scan,
                      lipschitz_scan, right_trivialization_residual, right_trivialize)
from .wgeom import estimate_tord, polar_fwd, polar_inv, sample_sphere

RESIDUAL_K = 8
TRIV_SCALES = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: object
    threshold: object
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "measured": _jsonable(self.measured),
                "threshold": _jsonable(self.threshold), "detail": self.detail}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


@dataclass
class VerificationReport:
    germ: str
    delta: object
    p: list
    mode: str
    obstruction: dict
    checks: list[CheckResult] = field(default_factory=list)
    timing: float = 0.0
    seed: int = 42
    hypothesis_violation: str = ""

    @property
    def passed(self) -> bool:
        return not self.hypothesis_violation and all(c.passed for c in self.checks)

    def add(self, name, passed, measured, threshold, detail=""):
        self.checks.append(CheckResult(name, bool(passed), measured, threshold, detail))

    def to_json(self) -> dict:
        return {"germ": self.germ, "delta": _jsonable(self.delta), "p": self.p, "mode": self.mode,
                "obstruction": self.obstruction, "passed": self.passed, "seed": self.seed,
                "hypothesis_violation": self.hypothesis_violation,
                "checks": [c.to_json() for c in self.checks], "timing": round(self.timing, 3)}

    def summary(self) -> str:
        lines = [f"{self.germ}: δ={self.delta} p={self.p} mode={self.mode} "
                 f"Σ={self.obstruction.get('verdict')} ({self.timing:.1f}s)"]
        if self.hypothesis_violation:
            lines.append(f"  HYPOTHESIS  {self.hypothesis_violation}")
        for c in self.checks:
            lines.append(f"  {'PASS' if c.passed else 'FAIL'}  {c.name}: measured {_short(c.measured)} "
                         f"vs {_short(c.threshold)}" + (f"  [{c.detail}]" if c.detail else ""))
        return "\n".join(lines)


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


# -- individual checks -------------------------------------------------------

def _epsilons(defn: GermDefinition, gs: GermSystem) -> list[float]:
    eps = [float(e) for e in defn.opt("epsilons")]
    if gs.delta == 0:
        eps = [e for e in eps if abs(e) <= 0.1] or [0.1]
    return eps


def _unobstructed(gs, S, tol=1e-3):
    return S[obstruction_coefficient(gs, S) >= tol]


def check_residuals(rep, gs, L, epsilons):
    target = min(gs.p) + (0 if gs.delta == INF else gs.delta) + RESIDUAL_K + 1
    worst = math.inf
    for eps in epsilons:
        b = solve_arcs(gs, L, eps, RESIDUAL_K)
        worst = min(worst, int(np.min(residual_orders_batch(gs, b))))
    rep.add("residual_vanishing", worst >= target, worst, f">= {target}",
            f"{len(L)} link points, eps={epsilons}, K={RESIDUAL_K}")


def check_deformation_orders(rep, gs, S, eps):
    if gs.delta == INF:
        rep.add("deformation_orders", True, "none", "n/a", "zero perturbation")
        return
    b = solve_arcs(gs, S, eps, RESIDUAL_K)
    ok = True
    worst = math.inf
    for j, c in enumerate(b.gamma_coeffs()):
        # gamma_eps - gamma_s equals these coefficients past the constant direction
        lead = gs.ws.omega[j] + gs.delta
        diff = c.copy()
        diff[:, gs.ws.omega[j]] -= b.S[:, j]
        nz = np.nonzero(np.any(diff != 0, axis=0))[0]
        first = int(nz[0]) if len(nz) else math.inf
        worst = min(worst, first - gs.ws.omega[j])
        ok &= first >= lead
    rep.add("deformation_orders", ok, f"min ord - omega_i = {worst}", f">= δ = {gs.delta}")


def check_tord(rep, gs, S, eps):
    if gs.delta in (0, INF):
        return
    target = 1 + gs.delta / gs.ws.top - 0.05
    b = solve_arcs(gs, S[:2], eps, 12)
    vals = []
    for i in range(len(b)):
        arc = b[i]
        hi = min(0.3, arc.t_max / 2)
        grid = np.geomspace(hi / 100, hi, 8)
        vals.append(float(estimate_tord(arc, arc.undeformed(), grid)))
    rep.add("tord_deformed_vs_straight", min(vals) >= target, min(vals), f">= {target:.3f}")
    # tord = 1 between two directions iff it is 1 between their deformations
    a0, a1 = b[0], b[1]
    hi = min(0.3, a0.t_max / 2, a1.t_max / 2)
    grid = np.geomspace(hi / 100, hi, 6)
    straight = float(estimate_tord(a0.undeformed(), a1.undeformed(), grid))
    deformed = float(estimate_tord(a0, a1, grid))
    same = (abs(straight - 1) <= 0.05) == (abs(deformed - 1) <= 0.05)
    rep.add("tord_one_preserved", same, [straight, deformed], "both ≈ 1 or both > 1")


def check_flags(rep, gs, eps, seed, min_coeff=1e-3):
    ends = gs.ws.flag_ends()
    if not ends:
        rep.add("flag_preservation", True, "no proper flag", "n/a")
        return
    rng = np.random.default_rng(seed)
    worst = 0.0
    n_used = 0
    for r in ends:
        S = rng.standard_normal((8, gs.n))
        S[:, :r] = 0.0
        S /= np.linalg.norm(S, axis=1, keepdims=True)
        S = _unobstructed(gs, S, min_coeff)
        if len(S) == 0:
            continue
        b = solve_arcs(gs, S, eps, RESIDUAL_K)
        worst = max(worst, float(np.max(np.abs(b.h[:, :r, :]))))
        n_used += len(S)
    rep.add("flag_preservation", worst == 0.0, worst, "== 0 exactly", f"{n_used} flag points")


def check_fixed_arcs(rep, gs, L, eps):
    if len(L) == 0 or gs.delta == INF:
        return
    base = [TSeries.constant(L[:, j], 4) for j in range(gs.n)]
    vanish = np.ones(len(L), dtype=bool)
    for g in gs.f_gt:
        c = compose_weighted(g, gs.ws.omega, base).coeffs
        vanish &= np.max(np.abs(c), axis=-1) <= 1e-14
    if not np.any(vanish):
        return
    b = solve_arcs(gs, L[vanish], eps, RESIDUAL_K)
    zmax = float(np.max(np.abs(b.z)))
    rep.add("fixed_arcs", zmax <= 1e-12, zmax, "<= 1e-12", f"{int(vanish.sum())} arcs in X_o ∩ X_eps")


def check_eps_zero(rep, gs, S):
    b = solve_arcs(gs, S, 0.0, RESIDUAL_K)
    gam = b.gamma_coeffs()
    straight = all(np.array_equal(c[:, gs.ws.omega[j]], S[:, j]) and
                   np.count_nonzero(c) == np.count_nonzero(S[:, j])
                   for j, c in enumerate(gam))
    tr = Trivializer(gs, 0.0, RESIDUAL_K)
    X = polar_fwd(S, np.full(len(S), 0.05), gs.ws)
    ident = np.array_equal(tr.psi_many(X), X) and np.array_equal(tr.inverse_many(X), X)
    extra = True
    if gs.c == 1:
        fs = np.abs(gs.f_p[0].eval_array(S))
        s = S[int(np.argmax(fs))]
        u = contact_factor_series(gs, s, 0.0, 6)
        w = right_trivialize(gs, s, 0.0, 6)
        one = np.zeros(7)
        one[0] = 1.0
        extra = np.array_equal(u.coeffs[:7], one) and np.array_equal(w.coeffs, one)
    ok = straight and ident and extra
    rep.add("eps_zero_identity", ok, {"arcs": straight, "psi": ident, "U_w": extra}, "all exact")


def _sample_t(rng, t_max, n):
    hi = np.maximum(np.minimum(t_max / 2, 0.3), 2e-4)
    lo = np.full(n, 1e-4)
    return np.exp(rng.uniform(np.log(lo), np.log(hi)))


def check_zero_sets(rep, gs, L, eps, n, seed):
    tr = Trivializer(gs, eps, 12)
    rng = np.random.default_rng(seed)
    p = np.asarray(gs.p, dtype=float)
    eqs = gs.equations(eps)
    # forward: points of V(f_p)
    idx = rng.integers(0, len(L), n)
    S = L[idx]
    T = _sample_t(rng, tr.arcs(S).t_max, n)
    X = polar_fwd(S, T, gs.ws)
    Y = tr.psi_many(X)
    fwd = np.stack([e.eval_array(Y) for e in eqs], axis=-1) / T[:, None] ** p
    fwd_max = float(np.max(np.abs(fwd)))
    rep.add("zero_set_forward", fwd_max <= 1e-8, fwd_max, "<= 1e-8 (scaled by t^p)", f"{n} points")
    # inverse: points of V(f_p + eps f_gt) found independently by Newton projection
    Yp = _project(gs, eqs, polar_fwd(S, T, gs.ws) * (1 + 1e-3 * rng.standard_normal((n, gs.n))))
    Sy, Ty = polar_inv(Yp, gs.ws)
    res_y = np.max(np.abs(np.stack([e.eval_array(Yp) for e in eqs], axis=-1)) / Ty[:, None] ** p, axis=1)
    good = (res_y <= 1e-12) & (Ty <= tr.arcs(Sy).t_max / 4)
    Xb = tr.inverse_many(Yp[good])
    inv = np.stack([f.eval_array(Xb) for f in gs.f_p], axis=-1) / Ty[good, None] ** p
    inv_max = float(np.max(np.abs(inv)))
    rep.add("zero_set_inverse", inv_max <= 1e-8, inv_max, "<= 1e-8 (scaled by t^p)",
            f"{int(good.sum())} projected points")
    # roundtrip at generic directions
    S2 = _unobstructed(gs, sample_sphere(n, seed + 1, gs.n))
    T2 = _sample_t(rng, tr.arcs(S2).t_max, len(S2))
    X2 = polar_fwd(S2, T2, gs.ws)
    back = tr.inverse_many(tr.psi_many(X2))
    rt = float(np.max(np.linalg.norm(back - X2, axis=1) / np.linalg.norm(X2, axis=1)))
    rep.add("psi_roundtrip", rt <= 1e-9, rt, "<= 1e-9", f"{len(S2)} points")


def _project(gs, eqs, Y, iters=40):
    """Minimum-norm Newton onto V(eqs), starting near the given points."""
    grads = [[e.diff(j) for j in range(gs.n)] for e in eqs]
    for _ in range(iters):
        F = np.stack([e.eval_array(Y) for e in eqs], axis=-1)
        J = np.stack([np.stack([g.eval_array(Y) for g in row], axis=-1) for row in grads], axis=-2)
        Y = Y - np.einsum("bij,bj->bi", np.linalg.pinv(J), F)
    return Y


def check_contact(rep, gs, S, eps):
    if gs.c != 1 or gs.delta == INF:
        return
    fs = np.abs(gs.f_p[0].eval_array(S))
    S = S[fs >= 0.1 * fs.max()][:5]
    worst_id, worst_ord = 0.0, math.inf
    for s in S:
        worst_id = max(worst_id, contact_identity_error(gs, s, eps, 12))
        u = contact_factor_series(gs, s, eps, 12)
        d = u.coeffs.copy()
        d[0] -= 1.0
        nz = np.nonzero(np.abs(d) > 1e-14)[0]
        worst_ord = min(worst_ord, int(nz[0]) if len(nz) else math.inf)
    rep.add("contact_identity", worst_id <= 1e-10, worst_id, "<= 1e-10 relative", f"{len(S)} off-link arcs")
    rep.add("contact_factor_order", worst_ord >= gs.delta, worst_ord, f">= δ = {gs.delta}")
    w_err = right_trivialization_residual(gs, S[0], eps, 8)
    rep.add("right_trivialization", w_err <= 1e-9, w_err, "<= 1e-9 per coefficient")


def check_diagnostics(rep, gs, eps, seed, n_samples):
    d = lipschitz_scan(gs, eps, TRIV_SCALES, n_samples, seed)
    th, v = d.thresholds, d.verdicts
    rep.diagnostics = d.to_json()
    if th["lipschitz_claimed"]:
        rep.add("lipschitz", v["lipschitz_ok"], [d.jac_norms[0], d.jac_norms[-1]], "ratio <= 10",
                f"δ={gs.delta} >= ω_N-ω_2={th['omega_N_minus_omega_2']}")
    if th["c1_claimed"]:
        rep.add("c1", v["c1_ok"], d.jac_minus_id[-1], "<= 0.05, decreasing")
    drift = d.drift_ratios
    # strictly decreasing until the rounding floor
    mono = all(b < a or b < 1e-12 for a, b in zip(drift, drift[1:]))
    rep.add("differentiable_at_origin", mono and drift[-1] <= 1e-2, drift[-1],
            "<= 1e-2, strictly decreasing")
    if gs.c == 1:
        if th["U_lipschitz_claimed"]:
            rep.add("U_lipschitz", v["bounded_U"], [d.u_grad_norms[0], d.u_grad_norms[-1]], "ratio <= 10")
        if th["U_c1_claimed"]:
            rep.add("U_c1", v["c1_U"], d.u_grad_norms[-1], "<= 0.05, decreasing")
    else:
        cr = contact_ratio_scan(gs, eps, TRIV_SCALES[:3], 100, seed)
        lo, hi = min(cr.ratio_min), max(cr.ratio_max)
        rep.add("contact_ratio_two_sided", lo >= 0.5 and hi <= 2.0, [lo, hi], "[0.5, 2]")


# -- orchestration -----------------------------------------------------------

def run_verification(defn: GermDefinition, *, allow_obstructed: bool | None = None,
                     seed: int | None = None, samples: int | None = None,
                     point_samples: int = 1000, diag_samples: int = 12,
                     tol: float | None = None) -> VerificationReport:
    """All checks for one germ definition.  Raises the GermError of the first failing invariant."""
    t0 = time.perf_counter()
    gs = defn.build()
    seed = defn.opt("seed") if seed is None else seed
    allow = defn.opt("allow_obstructed") if allow_obstructed is None else allow_obstructed
    n_scan = samples or defn.opt("samples")
    ob = scan_link(gs, n=n_scan, seed=seed, tol=tol or DEFAULT_OBSTRUCTION_TOL)
    rep = VerificationReport(defn.name, "inf" if gs.delta == INF else gs.delta, list(gs.p), gs.mode,
                             ob.to_json(), seed=seed)
    expect = defn.opt("expect_sigma")
    if expect:
        got = ob.verdict.replace("sigma_", "")
        rep.add("obstruction_verdict", got == expect, got, expect)
    trivial = ob.verdict == "sigma_trivial"
    if not trivial and not allow:
        rep.hypothesis_violation = (f"obstruction locus is not trivial ({ob.verdict}); "
                                    "rerun with --allow-obstructed for off-link properties")
        rep.timing = time.perf_counter() - t0
        return rep

    epsilons = _epsilons(defn, gs)
    eps = epsilons[-1]
    # same-order perturbations only contract away from a neighbourhood of the locus
    mc = float(defn.opt("link_min_coeff"))
    L = find_link_points(gs, int(defn.opt("link_points")), seed, min_coeff=mc)
    S = _unobstructed(gs, sample_sphere(20, seed, gs.n), mc)
    if not trivial:
        # refusals on the locus are part of the expected behaviour
        for z in ob.exact_zeros[:2]:
            try:
                solve_arcs(gs, np.array([float(v) for v in z]), eps, RESIDUAL_K)
                refused = False
            except Obstructed:
                refused = True
            rep.add("refuses_obstructed_direction", refused, [str(v) for v in z], "Obstructed")
    try:
        if len(L):
            check_residuals(rep, gs, L, epsilons)
        check_deformation_orders(rep, gs, S, eps)
        check_tord(rep, gs, S, eps)
        check_flags(rep, gs, eps, seed, mc)
        check_fixed_arcs(rep, gs, L, eps)
        check_eps_zero(rep, gs, S[:5])
        if trivial and gs.delta not in (0, INF) and len(L):
            check_zero_sets(rep, gs, L, eps, point_samples, seed)
            check_contact(rep, gs, S, eps)
            check_diagnostics(rep, gs, eps, seed, diag_samples)
    except NoContraction as e:
        rep.add("same_order_contraction", False, str(e), "contraction < 0.5")
    rep.timing = time.perf_counter() - t0
    return rep
