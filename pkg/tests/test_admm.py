import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uoi import (
    AdmmSettings,
    NormalFactorization,
    RegressionProblem,
    consensus_lasso_admm,
    kkt_violation,
    lasso_admm,
    lasso_path,
    objective,
    ols_admm,
    soft_threshold,
)

from oracles import cd_lasso, lasso_objective, normal_equations

TIGHT = AdmmSettings(abs_tol=1e-10, rel_tol=1e-10, max_iter=200000)


def random_problem(rng, n, p, k=None, sigma=0.5):
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    k = k if k is not None else max(1, p // 4)
    idx = rng.choice(p, size=k, replace=False)
    beta[idx] = rng.standard_normal(k) * 2
    y = X @ beta + sigma * rng.standard_normal(n)
    return RegressionProblem(X, y)


class TestSoftThreshold:
    def test_basic_shrinkage(self):
        out = soft_threshold(np.array([3.0, -0.5, 1.0]), 1.0)
        assert np.array_equal(out, [2.0, 0.0, 0.0])

    def test_zero_threshold_is_identity(self):
        v = np.array([0.3, -2.0, 0.0, 5.5])
        assert np.array_equal(soft_threshold(v, 0.0), v)

    def test_full_shrinkage(self):
        assert np.array_equal(soft_threshold(np.array([1.0, -1.0]), 2.0), [0.0, 0.0])

    def test_negative_kappa_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.array([1.0]), -0.1)

    @given(
        arrays(np.float64, st.integers(1, 20),
               elements=st.floats(-100, 100)),
        st.floats(0, 50),
    )
    def test_matches_elementwise_definition(self, v, kappa):
        out = soft_threshold(v, kappa)
        for vi, oi in zip(v, out):
            expect = np.sign(vi) * max(abs(vi) - kappa, 0.0)
            assert oi == expect


class TestSettings:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rho": 0.0},
            {"rho": -1.0},
            {"abs_tol": 0.0},
            {"rel_tol": -1e-9},
            {"max_iter": 0},
            {"relaxation": 0.9},
            {"relaxation": 2.0},
        ],
    )
    def test_invalid_settings_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AdmmSettings(**kwargs)


class TestLassoAdmm:
    def test_zero_solution_at_lambda_max(self):
        rng = np.random.default_rng(0)
        problem = random_problem(rng, 40, 12)
        lam_max = float(np.abs(problem.X.T @ problem.y).max())
        res = lasso_admm(problem, lam_max, TIGHT)
        assert res.converged
        assert np.count_nonzero(res.beta) == 0

    def test_identity_design_closed_form(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal(6)
        problem = RegressionProblem(np.eye(6), y)
        res = lasso_admm(problem, 0.4, TIGHT)
        assert np.allclose(res.beta, soft_threshold(y, 0.4), atol=1e-9)

    def test_against_coordinate_descent_oracle(self):
        rng = np.random.default_rng(2)
        problem = random_problem(rng, 50, 20)
        lam = 0.1 * float(np.abs(problem.X.T @ problem.y).max())
        res = lasso_admm(problem, lam, TIGHT)
        oracle = cd_lasso(problem.X, problem.y, lam, tol=1e-12)
        obj_o = lasso_objective(problem.X, problem.y, lam, oracle)
        assert res.converged
        assert abs(res.objective - obj_o) <= 1e-6 * abs(obj_o)

    def test_kkt_certificate_at_tight_settings(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            problem = random_problem(rng, 60, 15)
            lam = 0.2 * float(np.abs(problem.X.T @ problem.y).max())
            res = lasso_admm(problem, lam, AdmmSettings(abs_tol=1e-9, rel_tol=1e-9,
                                                        max_iter=200000))
            assert res.converged
            assert kkt_violation(problem, lam, res.beta) <= 1e-4

    def test_wide_problem_matches_oracle(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((15, 40))
        y = rng.standard_normal(15)
        problem = RegressionProblem(X, y)
        lam = 0.3 * float(np.abs(X.T @ y).max())
        res = lasso_admm(problem, lam, TIGHT)
        oracle = cd_lasso(X, y, lam, tol=1e-12)
        obj_o = lasso_objective(X, y, lam, oracle)
        assert abs(res.objective - obj_o) <= 1e-6 * abs(obj_o)

    def test_monotone_objective_from_zero_start(self):
        rng = np.random.default_rng(5)
        problem = random_problem(rng, 80, 25)
        lam = 0.05 * float(np.abs(problem.X.T @ problem.y).max())
        res = lasso_admm(problem, lam, TIGHT)
        initial = objective(problem, lam, np.zeros(problem.p))
        assert res.objective <= initial + 1e-12

    def test_nonconvergence_reported_not_raised(self):
        rng = np.random.default_rng(6)
        problem = random_problem(rng, 50, 20)
        lam = 0.1 * float(np.abs(problem.X.T @ problem.y).max())
        strict = AdmmSettings(abs_tol=1e-14, rel_tol=1e-14, max_iter=3)
        res = lasso_admm(problem, lam, strict)
        assert not res.converged
        assert res.iterations == 3

    def test_negative_lambda_rejected(self):
        problem = RegressionProblem(np.eye(3), np.ones(3))
        with pytest.raises(ValueError):
            lasso_admm(problem, -0.5)

    def test_warm_start_shape_validated(self):
        problem = RegressionProblem(np.eye(3), np.ones(3))
        bad = (np.zeros(2), np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            lasso_admm(problem, 0.1, warm_start=bad)

    def test_warm_start_matches_cold_start(self):
        # warm-started path solutions agree with cold starts; restarting at
        # a solve's own solution converges at once (per-grid-point iteration
        # dominance of warm starts does not hold in general)
        rng = np.random.default_rng(7)
        problem = random_problem(rng, 60, 18)
        lam_max = float(np.abs(problem.X.T @ problem.y).max())
        lambdas = lam_max * 0.01 ** (np.arange(6) / 5)
        warm_results = lasso_path(problem, lambdas, TIGHT)
        for lam, warm_res in zip(lambdas, warm_results):
            cold = lasso_admm(problem, lam, TIGHT)
            assert abs(warm_res.objective - cold.objective) <= 1e-8 * max(
                1.0, abs(cold.objective)
            )
            restarted = lasso_admm(problem, lam, TIGHT, warm_start=warm_res.state)
            assert restarted.iterations <= cold.iterations

    def test_factorization_reuse_matches_fresh(self):
        rng = np.random.default_rng(8)
        problem = random_problem(rng, 40, 10)
        fac = NormalFactorization(problem.X, 1.0)
        lam = 0.2 * float(np.abs(problem.X.T @ problem.y).max())
        a = lasso_admm(problem, lam, TIGHT, factorization=fac)
        b = lasso_admm(problem, lam, TIGHT)
        assert np.array_equal(a.beta, b.beta)

    def test_factorization_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        problem = random_problem(rng, 40, 10)
        other = NormalFactorization(rng.standard_normal((30, 10)), 1.0)
        with pytest.raises(ValueError):
            lasso_admm(problem, 0.1, factorization=other)
        wrong_rho = NormalFactorization(problem.X, 2.0)
        with pytest.raises(ValueError):
            lasso_admm(problem, 0.1, AdmmSettings(rho=1.0), factorization=wrong_rho)


class TestOlsAdmm:
    def test_identity_design(self):
        problem = RegressionProblem(np.eye(2), np.array([2.0, -3.0]))
        res = ols_admm(problem, TIGHT)
        assert np.allclose(res.beta, [2.0, -3.0], atol=1e-9)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((30, 5))
        y = rng.standard_normal(30)
        res = ols_admm(RegressionProblem(X, y), TIGHT)
        assert np.abs(res.beta - normal_equations(X, y)).max() <= 1e-8

    def test_zero_response(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((20, 4))
        res = ols_admm(RegressionProblem(X, np.zeros(20)), TIGHT)
        assert np.allclose(res.beta, 0.0, atol=1e-12)

    def test_rank_deficient_gives_min_norm_fixed_point(self):
        rng = np.random.default_rng(12)
        base = rng.standard_normal((25, 3))
        X = np.hstack([base, base[:, :1]])  # column 3 duplicates column 0
        y = rng.standard_normal(25)
        res = ols_admm(RegressionProblem(X, y), TIGHT)
        # residual is optimal even though the coefficient split is not unique
        grad = X.T @ (y - X @ res.beta)
        assert np.abs(grad).max() <= 1e-6


class TestObjective:
    def test_zero_beta(self):
        rng = np.random.default_rng(13)
        y = rng.standard_normal(9)
        problem = RegressionProblem(rng.standard_normal((9, 4)), y)
        assert objective(problem, 0.7, np.zeros(4)) == pytest.approx(0.5 * y @ y)

    def test_exact_fit_identity(self):
        y = np.array([1.0, 2.0])
        problem = RegressionProblem(np.eye(2), y)
        assert objective(problem, 0.0, y) == 0.0

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(14)
        problem = random_problem(rng, 12, 6)
        beta = rng.standard_normal(6)
        direct = lasso_objective(problem.X, problem.y, 0.3, beta)
        assert objective(problem, 0.3, beta) == pytest.approx(direct, rel=1e-14)

    def test_dimension_mismatch(self):
        problem = RegressionProblem(np.eye(3), np.ones(3))
        with pytest.raises(ValueError):
            objective(problem, 0.1, np.zeros(4))


class TestConsensus:
    def test_single_shard_degenerates(self):
        rng = np.random.default_rng(15)
        problem = random_problem(rng, 40, 8)
        lam = 0.2 * float(np.abs(problem.X.T @ problem.y).max())
        single = lasso_admm(problem, lam, TIGHT)
        cons = consensus_lasso_admm([problem], lam, TIGHT)
        assert np.allclose(cons.beta, single.beta, atol=1e-12)
        assert np.array_equal(
            np.flatnonzero(cons.beta), np.flatnonzero(single.beta)
        )

    def test_four_shards_match_concatenated(self):
        rng = np.random.default_rng(16)
        problem = random_problem(rng, 100, 10)
        lam = 0.1 * float(np.abs(problem.X.T @ problem.y).max())
        shards = [problem.rows(np.arange(i * 25, (i + 1) * 25)) for i in range(4)]
        cons = consensus_lasso_admm(shards, lam, TIGHT)
        single = lasso_admm(problem, lam, TIGHT)
        assert cons.converged
        rel = abs(cons.objective - single.objective) / abs(single.objective)
        assert rel <= 1e-6

    def test_identical_shards_match_their_concatenation(self):
        # K identical copies are a row-sharding of the K-fold stacked
        # problem; that is the solve they must reproduce (for lam > 0 the
        # stacked data term scales, so this is not the single-copy solution)
        rng = np.random.default_rng(17)
        problem = random_problem(rng, 50, 6)
        lam = 0.2 * float(np.abs(problem.X.T @ problem.y).max())
        cons = consensus_lasso_admm([problem] * 3, lam, TIGHT)
        stacked = RegressionProblem(
            np.vstack([problem.X] * 3), np.concatenate([problem.y] * 3)
        )
        single = lasso_admm(stacked, lam, TIGHT)
        rel = abs(cons.objective - single.objective) / abs(single.objective)
        assert rel <= 1e-6

    def test_identical_shards_ols_matches_single(self):
        # at lam = 0 scaling the objective does not move the minimizer, so
        # identical copies do reproduce the single-problem solution
        rng = np.random.default_rng(23)
        problem = random_problem(rng, 50, 6)
        cons = consensus_lasso_admm([problem] * 3, 0.0, TIGHT)
        single = ols_admm(problem, TIGHT)
        assert np.allclose(cons.beta, single.beta, atol=1e-7)

    def test_worker_count_bit_identical(self):
        rng = np.random.default_rng(18)
        problem = random_problem(rng, 80, 9)
        lam = 0.15 * float(np.abs(problem.X.T @ problem.y).max())
        shards = [problem.rows(np.arange(i * 20, (i + 1) * 20)) for i in range(4)]
        a = consensus_lasso_admm(shards, lam, TIGHT, workers=1)
        b = consensus_lasso_admm(shards, lam, TIGHT, workers=4)
        assert np.array_equal(a.beta, b.beta)

    def test_empty_shard_list_rejected(self):
        with pytest.raises(ValueError):
            consensus_lasso_admm([], 0.1)

    def test_column_mismatch_rejected(self):
        rng = np.random.default_rng(19)
        a = RegressionProblem(rng.standard_normal((5, 3)), rng.standard_normal(5))
        b = RegressionProblem(rng.standard_normal((5, 4)), rng.standard_normal(5))
        with pytest.raises(ValueError):
            consensus_lasso_admm([a, b], 0.1)


class TestKkt:
    def test_independent_of_solver(self):
        # a hand-made optimum: orthonormal design, known soft threshold
        rng = np.random.default_rng(20)
        y = rng.standard_normal(5)
        problem = RegressionProblem(np.eye(5), y)
        beta = soft_threshold(y, 0.3)
        assert kkt_violation(problem, 0.3, beta) <= 1e-12

    def test_detects_violation(self):
        problem = RegressionProblem(np.eye(3), np.array([5.0, 0.0, 0.0]))
        beta = np.array([1.0, 0.0, 0.0])  # too small for lam=0.1
        assert kkt_violation(problem, 0.1, beta) > 1.0
