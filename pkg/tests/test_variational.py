import math

import numpy as np
import pytest
from scipy.optimize import bisect, minimize_scalar

from blockergm import (BlockMatrix, LimitPartition, ModelParams,
                       NonConvergenceError, block_graphon, el_residual,
                       fixed_point_map, holder_certificate, lipschitz_bound,
                       objective, objective_gradient, predicted_edge_density,
                       solve_fixed_point)
from blockergm.util import mixing_entropy, sigmoid
from blockergm.variational import SolverOptions, _objective_raw
from conftest import (late_contraction_ratios, random_limit, random_params,
                      random_step_graphon)


def alpha0_free_energy_oracle(limit, h, s=0.0):
    """Per block pair, maximize u*(h+s) - I(u) by bounded scalar search."""
    total = 0.0
    for i in range(limit.k):
        for j in range(limit.k):
            res = minimize_scalar(
                lambda u: -(u * (h[i, j] + s) - mixing_entropy(u)),
                bounds=(1e-12, 1 - 1e-12), method="bounded",
                options={"xatol": 1e-10, "maxiter": 500})
            total += limit.b[i] * limit.b[j] * (-res.fun)
    return total / 2.0


def sym(rng, k):
    c = rng.random((k, k))
    return (c + c.T) / 2


class TestObjective:
    def test_k1_half(self, k1):
        p = ModelParams(alpha=np.zeros((1, 1, 1)), h=np.zeros((1, 1)))
        val = objective(k1, p, BlockMatrix(c=np.array([[0.5]])))
        assert val == pytest.approx(0.5 * math.log(2), rel=1e-14)

    def test_all_zero_matrix(self, half_half):
        rng = np.random.default_rng(191)
        p = random_params(2, rng)
        val = objective(half_half, p, BlockMatrix(c=np.zeros((2, 2))))
        assert val == 0.0

    def test_out_of_range_rejected(self, k1):
        p = ModelParams(alpha=np.zeros((1, 1, 1)), h=np.zeros((1, 1)))
        with pytest.raises(ValueError):
            objective(k1, p, np.array([[1.2]]))


class TestFixedPointMap:
    def test_alpha0_constant_map(self, half_half):
        rng = np.random.default_rng(193)
        h = sym(rng, 2)
        p = ModelParams(alpha=np.zeros((2, 2, 2)), h=h)
        for _ in range(3):
            C = BlockMatrix(c=sym(rng, 2))
            out = fixed_point_map(half_half, p, C, s=0.3)
            assert np.allclose(out.c, sigmoid(h + 0.3), atol=1e-15)

    def test_k1_direct_value(self, k1):
        p = ModelParams(alpha=np.full((1, 1, 1), 1.0), h=np.zeros((1, 1)))
        out = fixed_point_map(k1, p, BlockMatrix(c=np.array([[1.0]])))
        assert out.c[0, 0] == pytest.approx(sigmoid(1.0), rel=1e-14)

    def test_symmetry_preserved(self, half_half):
        rng = np.random.default_rng(197)
        p = random_params(2, rng)
        out = fixed_point_map(half_half, p, BlockMatrix(c=sym(rng, 2)))
        assert np.array_equal(out.c, out.c.T)
        assert np.all((out.c > 0) & (out.c < 1))

    def test_monotone_for_nonnegative_alpha(self, half_half):
        rng = np.random.default_rng(199)
        p = random_params(2, rng, nonneg=True)
        lo = sym(rng, 2) * 0.5
        hi = lo + 0.3
        out_lo = fixed_point_map(half_half, p, BlockMatrix(c=lo))
        out_hi = fixed_point_map(half_half, p, BlockMatrix(c=hi))
        assert np.all(out_lo.c <= out_hi.c + 1e-15)


class TestLipschitzBound:
    def test_values(self):
        z = np.zeros((2, 2))
        assert lipschitz_bound(ModelParams(alpha=np.zeros((2, 2, 2)), h=z)) == 0.0
        assert lipschitz_bound(
            ModelParams(alpha=np.full((2, 2, 2), 1.9), h=z)) == pytest.approx(0.95)
        mixed = np.where(np.arange(8).reshape(2, 2, 2) % 2 == 0, -1.5, 0.5)
        mixed = ModelParams(alpha=mixed, h=z)
        assert lipschitz_bound(mixed) == pytest.approx(max(
            abs(mixed.alpha).max() / 2, 0.0))
        assert lipschitz_bound(mixed) <= 0.75 + 1e-12


class TestSolve:
    def test_alpha0_logistic_solution(self):
        rng = np.random.default_rng(211)
        for _ in range(10):
            k = int(rng.integers(1, 5))
            lim = random_limit(k, rng)
            h = sym(rng, k) * 2 - 1
            p = ModelParams(alpha=np.zeros((k, k, k)), h=h)
            rep = solve_fixed_point(lim, p)
            assert np.max(np.abs(rep.c_star.c - sigmoid(h))) <= 1e-12
            oracle = alpha0_free_energy_oracle(lim, h)
            assert rep.free_energy == pytest.approx(oracle, abs=1e-10)
            closed = 0.5 * float(
                lim.b @ np.log1p(np.exp(h)) @ lim.b)
            assert rep.free_energy == pytest.approx(closed, abs=1e-12)

    def test_k1_alpha1_bisection_oracle(self, k1):
        p = ModelParams(alpha=np.full((1, 1, 1), 1.0), h=np.zeros((1, 1)))
        rep = solve_fixed_point(k1, p)
        root = bisect(lambda u: u - sigmoid(u * u), 0.5, 1.0, xtol=1e-14)
        assert rep.c_star.c[0, 0] == pytest.approx(root, abs=1e-11)

    def test_k1_symmetric_point(self, k1):
        p = ModelParams(alpha=np.zeros((1, 1, 1)), h=np.zeros((1, 1)))
        rep = solve_fixed_point(k1, p)
        assert rep.c_star.c[0, 0] == pytest.approx(0.5, abs=1e-13)
        assert rep.free_energy == pytest.approx(0.5 * math.log(2), rel=1e-12)

    def test_report_contract(self, half_half):
        rng = np.random.default_rng(223)
        p = random_params(2, rng, nonneg=True, alpha_scale=0.8)
        rep = solve_fixed_point(half_half, p)
        assert rep.converged
        assert rep.regime == "contractive"
        assert rep.el_residual <= 1e-12
        assert rep.starts_agreed == 16
        assert rep.iterations >= 1

    def test_regime_classification(self, half_half):
        z = np.zeros((2, 2))
        big = ModelParams(alpha=np.full((2, 2, 2), 2.5), h=z)
        assert solve_fixed_point(half_half, big).regime == "ferromagnetic"
        neg = ModelParams(alpha=np.full((2, 2, 2), -0.5), h=z)
        assert solve_fixed_point(half_half, neg).regime == "heuristic"

    def test_negative_alpha_still_solves(self, half_half):
        rng = np.random.default_rng(227)
        p = random_params(2, rng, alpha_scale=0.6)
        rep = solve_fixed_point(half_half, p)
        assert rep.el_residual <= 1e-12

    def test_nonconvergence_error(self, half_half):
        p = ModelParams(alpha=np.full((2, 2, 2), 1.0), h=np.zeros((2, 2)))
        with pytest.raises(NonConvergenceError) as exc:
            solve_fixed_point(half_half, p, opts=SolverOptions(max_iter=2))
        assert exc.value.best_residual is not None

    def test_uniqueness_in_contractive_regime(self):
        rng = np.random.default_rng(229)
        for _ in range(5):
            k = int(rng.integers(1, 4))
            lim = random_limit(k, rng)
            p = random_params(k, rng, nonneg=True, h_scale=0.7)
            p = ModelParams(alpha=p.alpha / max(1.0, p.alpha_inf / 1.9), h=p.h)
            rep = solve_fixed_point(lim, p)
            assert rep.regime == "contractive"
            assert rep.starts_agreed == 16

    def test_stationarity_beats_random_points(self, half_half):
        rng = np.random.default_rng(233)
        p = random_params(2, rng, nonneg=True, alpha_scale=0.9)
        rep = solve_fixed_point(half_half, p)
        for _ in range(100):
            c = BlockMatrix(c=sym(rng, 2))
            assert rep.free_energy >= objective(half_half, p, c) - 1e-12

    def test_block_permutation_equivariance(self):
        rng = np.random.default_rng(239)
        lim = LimitPartition(b=np.array([0.3, 0.7]))
        p = random_params(2, rng, nonneg=True, alpha_scale=1.2)
        rep = solve_fixed_point(lim, p)
        perm = [1, 0]
        lim_p = LimitPartition(b=lim.b[perm])
        p_p = ModelParams(alpha=p.alpha[np.ix_(perm, perm, perm)],
                          h=p.h[np.ix_(perm, perm)])
        rep_p = solve_fixed_point(lim_p, p_p)
        assert np.allclose(rep_p.c_star.c, rep.c_star.c[np.ix_(perm, perm)],
                           atol=1e-10)
        assert rep_p.free_energy == pytest.approx(rep.free_energy, rel=1e-12)

    def test_contraction_rate(self, half_half):
        rng = np.random.default_rng(241)
        p = random_params(2, rng, nonneg=True, h_scale=0.5)
        p = ModelParams(alpha=1.9 * p.alpha / p.alpha_inf, h=p.h)
        L = lipschitz_bound(p)
        ratios = late_contraction_ratios(half_half, p, 0.0, sym(rng, 2))
        assert ratios
        assert max(ratios) <= L + 1e-6


class TestELResidual:
    def test_zero_at_solution(self, half_half):
        rng = np.random.default_rng(251)
        p = random_params(2, rng, nonneg=True)
        rep = solve_fixed_point(half_half, p)
        assert el_residual(half_half, p, rep.c_star) <= 1e-12

    def test_alpha0_logistic_point(self, half_half):
        rng = np.random.default_rng(257)
        h = sym(rng, 2)
        p = ModelParams(alpha=np.zeros((2, 2, 2)), h=h)
        assert el_residual(half_half, p, BlockMatrix(c=sigmoid(h))) <= 1e-15

    def test_displacement_lower_bound(self, half_half):
        rng = np.random.default_rng(263)
        p = random_params(2, rng, nonneg=True, h_scale=0.5)
        p = ModelParams(alpha=1.5 * p.alpha / p.alpha_inf, h=p.h)
        L = lipschitz_bound(p)
        rep = solve_fixed_point(half_half, p)
        c = np.array(rep.c_star.c)
        delta = 0.1 if c[0, 1] <= 0.85 else -0.1
        c[0, 1] += delta
        c[1, 0] += delta
        assert el_residual(half_half, p, c) >= 0.1 * (1 - L) - 1e-12

    def test_boundary_rejected(self, k1):
        p = ModelParams(alpha=np.zeros((1, 1, 1)), h=np.zeros((1, 1)))
        with pytest.raises(ValueError):
            el_residual(k1, p, np.array([[1.0]]))


class TestPredictedEdgeDensity:
    def test_values(self, k1, half_half):
        assert predicted_edge_density(
            k1, BlockMatrix(c=np.array([[0.5]]))) == pytest.approx(0.5)
        C = BlockMatrix(c=np.array([[0.2, 0.4], [0.4, 0.8]]))
        assert predicted_edge_density(half_half, C) == pytest.approx(0.45)

    def test_alpha0_composition(self, half_half):
        rng = np.random.default_rng(269)
        h = sym(rng, 2)
        p = ModelParams(alpha=np.zeros((2, 2, 2)), h=h)
        rep = solve_fixed_point(half_half, p)
        expected = float(half_half.b @ sigmoid(h) @ half_half.b)
        assert predicted_edge_density(half_half, rep.c_star) == pytest.approx(
            expected, rel=1e-12)


class TestGradient:
    def test_matches_central_differences(self, half_half):
        rng = np.random.default_rng(271)
        p = random_params(2, rng)
        step = 1e-6
        for _ in range(10):
            c = 0.05 + 0.9 * sym(rng, 2)
            grad = objective_gradient(half_half, p, BlockMatrix(c=c))
            for i in range(2):
                for j in range(2):
                    cp, cm = c.copy(), c.copy()
                    cp[i, j] += step
                    cm[i, j] -= step
                    fd = (_objective_raw(half_half.b, p.alpha, p.h, cp, 0.0)
                          - _objective_raw(half_half.b, p.alpha, p.h, cm, 0.0)
                          ) / (2 * step)
                    assert grad[i, j] == pytest.approx(fd, abs=1e-6)

    def test_vanishes_at_solution(self, half_half):
        rng = np.random.default_rng(277)
        p = random_params(2, rng, nonneg=True)
        rep = solve_fixed_point(half_half, p)
        grad = objective_gradient(half_half, p, rep.c_star)
        assert np.max(np.abs(grad)) <= 1e-10


class TestHolderCertificate:
    def test_block_constant_equality(self, half_half):
        rng = np.random.default_rng(281)
        for _ in range(10):
            p = random_params(2, rng, nonneg=True)
            C = BlockMatrix(c=sym(rng, 2))
            cert = holder_certificate(half_half, p,
                                      block_graphon(half_half, C))
            assert abs(cert.gap) <= 1e-9

    def test_constant_graphon_k1(self, k1):
        p = ModelParams(alpha=np.full((1, 1, 1), 2.0), h=np.zeros((1, 1)))
        g = block_graphon(k1, BlockMatrix(c=np.array([[0.6]])))
        cert = holder_certificate(k1, p, g)
        assert cert.lhs == pytest.approx(2.0 * 0.6**3, rel=1e-14)
        assert cert.rhs == pytest.approx(cert.lhs, rel=1e-12)

    def test_nonnegative_gap_random(self, half_half):
        rng = np.random.default_rng(283)
        p = ModelParams(alpha=np.ones((2, 2, 2)), h=np.zeros((2, 2)))
        for _ in range(20):
            g = random_step_graphon(half_half, 3, rng)
            assert holder_certificate(half_half, p, g).gap >= -1e-12

    def test_negative_alpha_rejected(self, half_half):
        p = ModelParams(alpha=np.full((2, 2, 2), -0.1), h=np.zeros((2, 2)))
        g = random_step_graphon(half_half, 2, np.random.default_rng(293))
        with pytest.raises(ValueError):
            holder_certificate(half_half, p, g)

    def test_misaligned_rejected(self, half_half):
        p = ModelParams(alpha=np.ones((2, 2, 2)), h=np.zeros((2, 2)))
        other = LimitPartition(b=np.array([0.25, 0.75]))
        g = random_step_graphon(other, 2, np.random.default_rng(307))
        with pytest.raises(ValueError):
            holder_certificate(half_half, p, g)
