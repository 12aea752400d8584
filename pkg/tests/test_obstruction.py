import math
from fractions import Fraction

import numpy as np
import pytest

from germfold.obstruction import (CauchyBinetMismatch, NotInSquaredMaximalIdeal, NotWeightedHomogeneous,
                                  PerturbationOrderTooLow, adjugate_exact, block_minor_sum, det_exact,
                                  gram_and_adjugate, is_obstructed, obstruction_coefficient,
                                  obstruction_coefficient_exact, rescaled_gradient, scan_link, tau)
from germfold.poly import INF
from germfold.wgeom import rational_sphere_points, sample_sphere

from conftest import make_germ


class TestBuild:
    def test_bs(self, bs):
        assert bs.p == (15,) and bs.delta == 0 and bs.mode == "same_order"

    def test_bs_type(self, corpus):
        gs = corpus("bs_type")
        assert gs.ws.omega == (5, 7, 10)
        assert gs.p == (35,) and gs.delta == 5 and gs.mode == "higher_order"

    def test_zero_perturbation(self):
        gs = make_germ(["x", "y"], [1, 1], ["x^2-y^2"], ["0"])
        assert gs.delta == INF

    def test_errors(self):
        with pytest.raises(NotWeightedHomogeneous):
            make_germ(["x", "y"], [1, 1], ["x^2+y^3"], ["0"])
        with pytest.raises(PerturbationOrderTooLow):
            make_germ(["x", "y"], [1, 1], ["x^2-y^2"], ["x"])
        with pytest.raises(NotInSquaredMaximalIdeal):
            make_germ(["x", "y"], [1, 2], ["x^2+y"], ["0"])


class TestCoefficient:
    def test_quadric(self, quadric):
        s = np.array([0.6, 0.8])
        assert np.allclose(rescaled_gradient(quadric, s), [[1.2, -1.6]])
        g = gram_and_adjugate(rescaled_gradient(quadric, s))
        assert g.A[0, 0] == pytest.approx(4) and g.A_adj[0, 0] == 1 and g.detA == pytest.approx(4)
        assert tau(quadric, [1, 0]) == 1
        assert obstruction_coefficient(quadric, [1, 0]) == pytest.approx(5)
        assert obstruction_coefficient_exact(quadric, (1, 0)) == 5

    def test_zero_matrix(self):
        g = gram_and_adjugate(np.zeros((1, 3)))
        assert g.detA == 0 and g.A_adj[0, 0] == 1

    def test_bs(self, bs):
        assert np.array_equal(rescaled_gradient(bs, [0, 1, 0]), np.zeros((1, 3)))
        assert np.allclose(rescaled_gradient(bs, [0, 0, 1]), [[0, 0, 5]])
        assert tau(bs, [0, 1, 0]) == 0
        assert obstruction_coefficient_exact(bs, (0, 1, 0)) == 0
        assert obstruction_coefficient_exact(bs, (0, 0, 1)) == 26
        assert is_obstructed(bs, [0, 1, 0]) and not is_obstructed(bs, [0, 0, 1])

    def test_generic_points_unobstructed(self, bs):
        assert not np.any(obstruction_coefficient(bs, sample_sphere(200, seed=5)) < 1e-6)

    def test_flag_columns_vanish(self, corpus):
        for name in ("bs", "brieskorn_yz2", "surface_reduced_slice"):
            gs = corpus(name)
            for r in gs.ws.flag_ends():
                S = sample_sphere(50, seed=r, dim=gs.n)
                S[:, :r] = 0
                S /= np.linalg.norm(S, axis=1, keepdims=True)
                M = rescaled_gradient(gs, S)
                assert np.all(M[..., :r] == 0)

    @pytest.mark.parametrize("name", ["bs", "quadric", "brieskorn_y2z", "ci_quadrics", "surface_reduced_slice"])
    def test_exact_matches_float(self, corpus, name):
        gs = corpus(name)
        pts = rational_sphere_points(gs.ws)[:300]
        fl = obstruction_coefficient(gs, np.array(pts, dtype=float))
        ex = np.array([float(obstruction_coefficient_exact(gs, p)) for p in pts])
        assert np.all(np.abs(fl - ex) <= 1e-9 * np.maximum(1.0, np.abs(ex)))


class TestLinearAlgebra:
    def test_cauchy_binet_random(self):
        rng = np.random.default_rng(0)
        for c, N in ((1, 3), (2, 3), (2, 4), (3, 5)):
            M = rng.standard_normal((250, c, N))
            det_direct = np.linalg.det(M @ np.swapaxes(M, -1, -2))
            det_blocks = block_minor_sum(M)
            assert np.all(np.abs(det_direct - det_blocks) <= 1e-10 * np.abs(det_blocks) + 1e-12)
            ga = gram_and_adjugate(M)
            lhs = ga.A_adj @ ga.A
            assert np.allclose(lhs, ga.detA[:, None, None] * np.eye(c), rtol=1e-10, atol=1e-10)

    def test_exact_adjugate(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = [[Fraction(int(v)) for v in row] for row in rng.integers(-9, 10, (3, 3))]
            adj = adjugate_exact(A)
            d = det_exact(A)
            prod = [[sum(adj[i][k] * A[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
            assert prod == [[d if i == j else 0 for j in range(3)] for i in range(3)]

    def test_mismatch_detected(self, monkeypatch):
        import germfold.obstruction as ob
        monkeypatch.setattr(ob, "block_minor_sum", lambda M: np.linalg.det(M @ M.T) + 1.0)
        with pytest.raises(CauchyBinetMismatch):
            ob.gram_and_adjugate(np.eye(2))


class TestScan:
    def test_quadric_trivial(self, quadric):
        rep = scan_link(quadric, n=10_000, seed=42)
        assert rep.verdict == "sigma_trivial" and rep.min_coeff >= 4 - 1e-6

    def test_bs_nontrivial(self, bs):
        rep = scan_link(bs, n=2000, seed=42)
        assert rep.verdict == "sigma_nontrivial"
        zeros = {tuple(int(v) for v in z) for z in rep.exact_zeros}
        assert {(0, 1, 0), (0, -1, 0)} <= zeros

    def test_brieskorn_trivial(self, corpus):
        assert scan_link(corpus("brieskorn_yz2"), n=5000, seed=42).verdict == "sigma_trivial"

    def test_report_sorted(self, bs):
        rep = scan_link(bs, n=500, seed=3)
        assert rep.witness_values == sorted(rep.witness_values)
