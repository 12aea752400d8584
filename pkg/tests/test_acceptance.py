"""Acceptance criteria 1-12.  Each test carries an ``acceptance`` marker; the
conftest hook prints one PASS/FAIL line per criterion after the run."""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from germfold.arcs import Obstructed, residual_orders_batch, solve_arc, solve_arcs
from germfold.germfile import load_corpus
from germfold.obstruction import (adjugate_exact, block_minor_sum, det_exact, find_link_points,
                                  obstruction_coefficient, obstruction_coefficient_exact, scan_link)
from germfold.poly import INF
from germfold.series import TSeries, ts_ord
from germfold.trivial import (Trivializer, contact_factor_series, lipschitz_scan,
                              right_trivialization_residual, right_trivialize)
from germfold.verify import VerificationReport, check_zero_sets
from germfold.wgeom import estimate_tord, polar_fwd, rational_sphere_points, sample_sphere

SEED = 42
SCALES = (1e-1, 1e-2, 1e-3, 1e-4)


def acceptance(n, title):
    return pytest.mark.acceptance(n, title)


@pytest.fixture(scope="module")
def defs():
    return {d.name: d for d in load_corpus()}


@pytest.fixture(scope="module")
def systems(defs):
    return {n: d.build() for n, d in defs.items()}


def trivial_names(defs):
    return sorted(n for n, d in defs.items() if d.opt("expect_sigma") == "trivial")


def link_points(gs, n=50, min_coeff=1e-3):
    return find_link_points(gs, n, SEED, min_coeff=min_coeff)


def usable(gs, n=20, min_coeff=1e-3, seed=SEED):
    S = sample_sphere(n, seed, gs.n)
    return S[obstruction_coefficient(gs, S) >= min_coeff]


# -- 1 -------------------------------------------------------------------------

@acceptance(1, "obstruction exactness (BS, BS-type, quadric)")
def test_obstruction_exactness(systems):
    t0 = time.perf_counter()
    bs, bst, q = systems["bs"], systems["bs_type"], systems["quadric"]
    for s in ((0, 1, 0), (0, -1, 0)):
        assert obstruction_coefficient_exact(bs, s) == 0
    off = [p for p in rational_sphere_points(bs.ws) if p[0] != 0 or p[2] != 0]
    worst = min(obstruction_coefficient_exact(bs, p) for p in off)
    assert worst >= Fraction(1, 10 ** 6)
    # variables (x, z, y): the top-weight axis is y
    assert bst.ws.omega[-1] == max(bst.ws.omega)
    assert obstruction_coefficient_exact(bst, (0, 0, 1)) == 0
    rep = scan_link(q, n=10_000, seed=SEED)
    assert rep.min_coeff >= 4 - 1e-6
    elapsed = time.perf_counter() - t0
    print(f"BS min off V(x,z) = {float(worst):.3g}; quadric min = {rep.min_coeff:.6f}; {elapsed:.1f}s")
    assert elapsed <= 10


# -- 2 -------------------------------------------------------------------------

@acceptance(2, "hand-verified solver value for x^2-y^2+eps*y^3")
def test_hand_value(systems):
    r = 1 / math.sqrt(2)
    arc = solve_arc(systems["quadric"], [r, r], 1.0, 12)
    assert abs(arc.z[0].coeffs[0] + math.sqrt(2) / 16) <= 1e-12
    assert abs(arc.h[0].coeffs[0] + 1 / 8) <= 1e-12
    assert abs(arc.h[1].coeffs[0] - 1 / 8) <= 1e-12


# -- 3 -------------------------------------------------------------------------

@acceptance(3, "residual vanishing along link arcs, K_eff = 8")
def test_residual_vanishing(defs, systems):
    K = 8
    for name in trivial_names(defs):
        gs = systems[name]
        L = link_points(gs)
        # a curve link (N - c = 1) is finite: use all of it
        need = 50 if gs.n - gs.c >= 2 else 1
        assert len(L) >= need, name
        target = min(gs.p) + (0 if gs.delta == INF else gs.delta) + K + 1
        for eps in (0.3, 1.0):
            b = solve_arcs(gs, L, eps, K)
            worst = int(np.min(residual_orders_batch(gs, b, tol=1e-8)))
            assert worst >= target, (name, eps, worst, target)
        print(f"{name}: {len(L)} link points, residual order >= {target}")


# -- 4 -------------------------------------------------------------------------

@acceptance(4, "componentwise deformation orders and tord bound")
def test_deformation_orders(defs, systems):
    for name, gs in systems.items():
        if gs.delta == INF:
            continue
        mc = float(defs[name].opt("link_min_coeff"))
        eps = 0.1 if gs.delta == 0 else 1.0
        S = np.concatenate([usable(gs, 20, mc), link_points(gs, 10, mc)])
        b = solve_arcs(gs, S, eps, 10)
        for j, c in enumerate(b.gamma_coeffs()):
            diff = c.copy()
            diff[:, gs.ws.omega[j]] -= S[:, j]
            assert ts_ord(TSeries(diff), tol=0.0) >= gs.ws.omega[j] + gs.delta, (name, j)
        if gs.delta == 0:
            continue
        target = 1 + gs.delta / gs.ws.top - 0.05
        for i in range(2):
            arc = b[i]
            hi = min(0.3, arc.t_max / 2)
            est = float(estimate_tord(arc, arc.undeformed(), np.geomspace(hi / 100, hi, 8)))
            assert est >= target, (name, est, target)


# -- 5 -------------------------------------------------------------------------

@acceptance(5, "flag preservation and fixed arcs")
def test_flags_and_fixed_arc(defs, systems):
    rng = np.random.default_rng(SEED)
    for name, gs in systems.items():
        mc = float(defs[name].opt("link_min_coeff"))
        eps = 0.1 if gs.delta == 0 else 1.0
        for r in gs.ws.flag_ends():
            S = rng.standard_normal((8, gs.n))
            S[:, :r] = 0
            S /= np.linalg.norm(S, axis=1, keepdims=True)
            S = S[obstruction_coefficient(gs, S) >= mc]
            if len(S) == 0:
                continue
            gam = solve_arcs(gs, S, eps, 10).gamma_coeffs()
            assert all(not np.any(gam[j]) for j in range(r)), (name, r)
    r2 = 1 / math.sqrt(2)
    gs = systems["quadric_fixed_arc"]
    for eps in (-1.0, 0.3, 1.0, 2.5):
        z = solve_arcs(gs, [[r2, r2]], eps, 12).z
        assert np.linalg.norm(z) <= 1e-12


# -- 6 -------------------------------------------------------------------------

@acceptance(6, "obstructed refusal and same-order solving")
def test_obstructed_refusal(defs, systems):
    bs, bst = systems["bs"], systems["bs_type"]
    with pytest.raises(Obstructed):
        solve_arc(bs, [0, 1, 0], 0.1)
    with pytest.raises(Obstructed):
        solve_arc(bst, [0, 0, 1], 1.0)
    L = link_points(bs, 50, float(defs["bs"].opt("link_min_coeff")))
    assert len(L) >= 50
    assert np.all(np.abs(L[:, 0]) + np.abs(L[:, 2]) > 0)
    target = bs.p[0] + 0 + 8 + 1
    for eps in (0.1, -0.1, 0.05):
        b = solve_arcs(bs, L, eps, 8)
        assert int(np.min(residual_orders_batch(bs, b))) >= target


# -- 7 -------------------------------------------------------------------------

@acceptance(7, "zero-set correspondence and Psi roundtrip")
def test_zero_sets(defs, systems):
    for name in trivial_names(defs):
        gs = systems[name]
        if gs.delta in (0, INF):
            continue
        rep = VerificationReport(name, gs.delta, list(gs.p), gs.mode, {})
        check_zero_sets(rep, gs, link_points(gs), 1.0, 1000, SEED)
        for c in rep.checks:
            print(f"{name}: {c.name} = {c.measured:.2e} ({c.detail})")
        failed = [c.name for c in rep.checks if not c.passed]
        assert not failed, (name, failed)


# -- 8 -------------------------------------------------------------------------

@acceptance(8, "contact factor orders, decay slope and boundary boundedness")
def test_contact_factor(defs, systems):
    for name in trivial_names(defs):
        gs = systems[name]
        if gs.c != 1 or gs.delta in (0, INF):
            continue
        S = sample_sphere(30, SEED, gs.n)
        fs = np.abs(gs.f_p[0].eval_array(S))
        for s in S[fs >= 0.05 * fs.max()][:8]:
            u = contact_factor_series(gs, s, 1.0, 12)
            d = u.coeffs.copy()
            d[0] -= 1.0
            assert ts_ord(TSeries(d), 1e-12) >= gs.delta, name

    gs = systems["cusp_x2y2"]
    assert gs.delta == 4
    tr = Trivializer(gs, 1.0)
    S = sample_sphere(40, SEED, 2)
    fs = np.abs(gs.f_p[0].eval_array(S))
    S = S[fs >= 0.05 * fs.max()]
    S = S[tr.arcs(S).t_max >= 0.15]
    ts = np.array(SCALES)
    U = np.array([np.abs(tr.u_minus_one_at(polar_fwd(S, np.full(len(S), t), gs.ws))) for t in ts])
    slopes = [np.polyfit(np.log(ts), np.log(U[:, i]), 1)[0] for i in range(len(S))]
    assert min(slopes) >= gs.delta - 0.2
    print(f"cusp_x2y2: min |U-1| log-slope {min(slopes):.4f} over {len(S)} directions")

    gs = systems["cusp_x3"]
    assert gs.delta == gs.ws.top
    d = lipschitz_scan(gs, 1.0, SCALES, 12, SEED)
    g = d.u_grad_norms
    assert max(g) / min(g) <= 10 and d.verdicts["bounded_U"]
    print(f"cusp_x3: |grad U| across scales {['%.3g' % v for v in g]}")


# -- 9 -------------------------------------------------------------------------

@acceptance(9, "Lipschitz and C1 thresholds for the Brieskorn pair")
def test_lipschitz_thresholds(systems):
    gs = systems["brieskorn_yz2"]
    assert gs.delta == 2 and gs.ws.top - gs.ws.omega[1] == 1
    d = lipschitz_scan(gs, 1.0, SCALES, 12, SEED)
    assert d.verdicts["c1_ok"] and d.jac_minus_id[-1] <= 0.05
    print(f"brieskorn_yz2: |J - I| {['%.2g' % v for v in d.jac_minus_id]}")

    gs = systems["brieskorn_y2z"]
    assert gs.delta == 1
    d = lipschitz_scan(gs, 1.0, SCALES, 12, SEED)
    for norms in (d.jac_norms, d.inv_jac_norms):
        assert max(norms) / min(norms) <= 10
    assert d.verdicts["lipschitz_ok"]
    print(f"brieskorn_y2z: |J| {['%.3g' % v for v in d.jac_norms]}, "
          f"|J^-1| {['%.3g' % v for v in d.inv_jac_norms]}")


# -- 10 ------------------------------------------------------------------------

@acceptance(10, "differentiability at the origin (drift ratios)")
def test_drift(systems):
    for name, gs in systems.items():
        if gs.delta in (0, INF):
            continue
        drift = lipschitz_scan(gs, 1.0, SCALES, 12, SEED).drift_ratios
        # strictly decreasing until double-precision rounding takes over
        assert all(b < a or b < 1e-12 for a, b in zip(drift, drift[1:])), (name, drift)
        assert drift[-1] <= 1e-2, (name, drift)


# -- 11 ------------------------------------------------------------------------

@acceptance(11, "right-trivialization recomposition for the cusp germs")
def test_right_trivialization(systems):
    for name in ("cusp_x2y2", "cusp_x3", "cusp_y4"):
        gs = systems[name]
        S = sample_sphere(10, SEED, 2)
        fs = np.abs(gs.f_p[0].eval_array(S))
        errs = [right_trivialization_residual(gs, s, eps, 8)
                for s in S[fs >= 0.05 * fs.max()] for eps in (0.3, 1.0)]
        assert max(errs) <= 1e-9, (name, max(errs))


# -- 12 ------------------------------------------------------------------------

@acceptance(12, "Cauchy-Binet, exact adjugate, eps = 0 collapse")
def test_internal_cross_checks(systems):
    rng = np.random.default_rng(SEED)
    for c, N in ((1, 4), (2, 4), (3, 5), (2, 3)):
        M = rng.standard_normal((250, c, N))
        direct = np.linalg.det(M @ np.swapaxes(M, -1, -2))
        blocks = block_minor_sum(M)
        assert np.all(np.abs(direct - blocks) <= 1e-10 * np.abs(blocks))
    for _ in range(50):
        A = [[Fraction(int(v), int(d)) for v, d in zip(row, drow)]
             for row, drow in zip(rng.integers(-9, 10, (3, 3)), rng.integers(1, 5, (3, 3)))]
        adj, det = adjugate_exact(A), det_exact(A)
        assert all(sum(adj[i][k] * A[k][j] for k in range(3)) == (det if i == j else 0)
                   for i in range(3) for j in range(3))

    for name, gs in systems.items():
        S = usable(gs, 10)
        b = solve_arcs(gs, S, 0.0, 8)
        for j, c in enumerate(b.gamma_coeffs()):
            expect = np.zeros_like(c)
            expect[:, gs.ws.omega[j]] = S[:, j]
            assert np.array_equal(c, expect), name
        tr = Trivializer(gs, 0.0)
        X = polar_fwd(S, np.full(len(S), 0.05), gs.ws)
        assert np.array_equal(tr.psi_many(X), X) and np.array_equal(tr.inverse_many(X), X)
        if gs.c == 1:
            one = np.zeros(7)
            one[0] = 1.0
            for s in S[:3]:
                if abs(gs.f_p[0](s)) > 1e-8:
                    assert np.array_equal(contact_factor_series(gs, s, 0.0, 6).coeffs, one)
                    assert np.array_equal(right_trivialize(gs, s, 0.0, 6).coeffs, one)
