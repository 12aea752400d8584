import math

import numpy as np
import pytest

from germfold.arcs import (ArcBatch, NoContraction, NotOnLink, Obstructed, ansatz_h, arc_residual_order,
                           assemble_residual, estimate_t_max_batch, residual_orders_batch, solve_arc,
                           solve_arcs)
from germfold.obstruction import find_link_points, obstruction_coefficient
from germfold.series import TSeries, ts_ord
from germfold.wgeom import sample_sphere

R2 = 1 / math.sqrt(2)
DIAG = np.array([R2, R2])


def test_ansatz_quadric(quadric):
    s = np.array([0.6, 0.8])
    z = [TSeries(np.array([0.3, -1.0, 2.0]))]
    h = ansatz_h(quadric, s, z)
    assert np.allclose(h[0].coeffs, 2 * 0.6 * z[0].coeffs)
    assert np.allclose(h[1].coeffs, -2 * 0.8 * z[0].coeffs)
    zero = ansatz_h(quadric, s, [TSeries.zeros(4)])
    assert all(not np.any(hj.coeffs) for hj in zero)


def test_ansatz_flag(corpus):
    gs = corpus("brieskorn_yz2")
    h = ansatz_h(gs, [0.0, 0.6, 0.8], [TSeries(np.array([1.0, 2.0, 3.0]))])
    assert not np.any(h[0].coeffs)


def test_residual_at_zero(quadric):
    r = assemble_residual(quadric, DIAG, 1.0, [TSeries.zeros(6)])
    assert r[0].coeffs[0] == pytest.approx(R2 ** 3, abs=1e-15)


def test_residual_linear_without_perturbation():
    from conftest import make_germ
    gs = make_germ(["x", "y"], [1, 1], ["x^2-y^2"], ["0"])
    z = TSeries(np.array([0.2, -0.1, 0.05]))
    r = assemble_residual(gs, [0.6, 0.8], 0.0, [z])
    assert np.allclose(r[0].coeffs, (0.28 ** 2 + 4) * z.coeffs)


def test_quadric_leading_coefficient(quadric):
    arc = solve_arc(quadric, DIAG, 1.0, 10)
    assert arc.z[0].coeffs[0] == pytest.approx(-math.sqrt(2) / 16, abs=1e-12)
    assert arc.h[0].coeffs[0] == pytest.approx(-1 / 8, abs=1e-12)
    assert arc.h[1].coeffs[0] == pytest.approx(1 / 8, abs=1e-12)


def test_eps_zero_is_straight(corpus):
    gs = corpus("cusp_x3")
    s = sample_sphere(5, seed=2, dim=2)
    b = solve_arcs(gs, s, 0.0, 10)
    for i in range(len(b)):
        arc = b[i]
        for j, g in enumerate(arc.gamma):
            expect = np.zeros_like(g.coeffs)
            expect[gs.ws.omega[j]] = s[i, j]
            assert np.array_equal(g.coeffs, expect)


def test_eps_zero_residual_vanishes(corpus):
    gs = corpus("cusp_x3")
    L = find_link_points(gs, n=2)
    b = solve_arcs(gs, L, 0.0, 8)
    assert np.all(residual_orders_batch(gs, b, tol=1e-13) > 8 + 6)


def test_obstructed(bs):
    with pytest.raises(Obstructed):
        solve_arc(bs, [0, 1, 0], 0.1)


def test_no_contraction(bs):
    with pytest.raises(NoContraction):
        solve_arc(bs, np.array([0.36, 0.48, 0.8]), 50.0)


@pytest.mark.parametrize("name", ["cusp_x2y2", "cusp_x3", "brieskorn_yz2", "quadric", "ci_quadrics"])
def test_link_residual_contract(corpus, name):
    gs = corpus(name)
    K = 8
    L = find_link_points(gs, n=10)
    b = solve_arcs(gs, L, 0.7, K)
    assert np.all(residual_orders_batch(gs, b) >= min(gs.p) + gs.delta + K + 1)


def test_off_link(quadric):
    arc = solve_arc(quadric, [0.6, 0.8], 1.0, 6)
    assert arc.residual_ord is None
    with pytest.raises(NotOnLink):
        arc_residual_order(quadric, arc)


@pytest.mark.parametrize("name", ["cusp_y4", "brieskorn_y2z", "surface_reduced_slice", "bs_type"])
def test_deformation_order(corpus, name):
    gs = corpus(name)
    S = sample_sphere(20, seed=11, dim=gs.n)
    b = solve_arcs(gs, S, 1.0, 8)
    for i in range(len(b)):
        arc = b[i]
        for j, g in enumerate(arc.gamma):
            diff = g.coeffs.copy()
            diff[gs.ws.omega[j]] -= S[i, j]
            assert ts_ord(TSeries(diff), tol=0.0) >= gs.ws.omega[j] + gs.delta


def test_flag_preservation(corpus):
    gs = corpus("brieskorn_y2z")
    s = np.array([0.0, 0.6, -0.8])
    arc = solve_arc(gs, s, 1.0, 10)
    assert not np.any(arc.gamma[0].coeffs)
    s = np.array([0.0, 0.0, 1.0])
    arc = solve_arc(gs, s, 1.0, 10)
    assert not np.any(arc.gamma[0].coeffs) and not np.any(arc.gamma[1].coeffs)


def test_fixed_arc(corpus):
    gs = corpus("quadric_fixed_arc")
    for eps in (-2.0, -0.5, 0.3, 1.0, 3.0):
        arc = solve_arc(gs, DIAG, eps, 10)
        assert max(np.max(np.abs(z.coeffs)) for z in arc.z) <= 1e-12


def test_eps_polynomial_smoothness(corpus):
    gs = corpus("cusp_x2y2")
    s = sample_sphere(1, seed=4, dim=2)
    eps_grid = np.linspace(-1.0, 1.0, 11)
    Z = np.array([solve_arcs(gs, s, e, 12).z[0, 0] for e in eps_grid])
    for k in range(Z.shape[1]):
        fit = np.polynomial.polynomial.Polynomial.fit(eps_grid, Z[:, k], 4)
        assert np.max(np.abs(fit(eps_grid) - Z[:, k])) < 1e-8


@pytest.mark.parametrize("name,eps", [("cusp_x3", 1.0), ("ci_quadrics", 0.5), ("bs", 0.1)])
def test_idempotence(corpus, name, eps):
    gs = corpus(name)
    S = sample_sphere(40, seed=9, dim=gs.n)
    S = S[obstruction_coefficient(gs, S) >= 0.1][:5]
    b = solve_arcs(gs, S, eps, 10)
    again = solve_arcs(gs, S, eps, 10, z0=b.z)
    assert np.max(np.abs(again.z - b.z)) <= 1e-14


@pytest.mark.parametrize("name", ["cusp_x3", "brieskorn_yz2"])
def test_residual_vanishes_through_truncation(corpus, name):
    gs = corpus(name)
    S = sample_sphere(4, seed=1, dim=gs.n)
    K = 10
    b = solve_arcs(gs, S, 0.8, K)
    for i in range(len(b)):
        r = assemble_residual(gs, S[i], 0.8, b[i].z, K)
        assert all(ts_ord(ri, 1e-10) > K for ri in r)


class TestTMax:
    def test_eps_zero(self, quadric):
        b = solve_arcs(quadric, sample_sphere(3, dim=2), 0.0, 8)
        assert np.all(b.t_max == 1.0)

    def test_constant_h(self, quadric):
        K = 8
        h = np.zeros((1, 2, K + 1))
        h[:, :, 0] = 0.125
        b = ArcBatch(quadric, DIAG[None], 1.0, K, np.zeros((1, 1, K + 1)), h, np.array([5.0]), np.zeros(1))
        assert estimate_t_max_batch(b)[0] == pytest.approx(min(1.0, 4.0))

    def test_shrinks_with_eps(self, corpus):
        gs = corpus("cusp_x3")
        S = sample_sphere(10, seed=6, dim=2)
        prev = np.full(10, np.inf)
        for eps in (0.1, 0.5, 2.0, 8.0, 30.0):
            tm = solve_arcs(gs, S, eps, 10).t_max
            assert np.all(tm <= prev + 1e-15)
            prev = tm
