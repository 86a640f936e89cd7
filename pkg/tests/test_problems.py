import numpy as np
import pytest
import scipy.sparse as sp

from ltrsolve import (
    ContractViolationError,
    EvaluationError,
    build_problem61,
    build_synthetic,
)
from ltrsolve.operator import adjointness_defect
from ltrsolve.problems import coefficient_field, state_field


class TestFields:
    def test_coefficient_center_value(self):
        # sine factor vanishes at 0.5, paraboloid is zero at the center
        assert coefficient_field(0.5, 0.5) == pytest.approx(2.0)

    def test_state_center_value(self):
        assert state_field(0.5, 0.5) == pytest.approx(0.0)

    def test_state_boundary_value(self):
        assert state_field(0.0, 0.3) == 1.0
        assert state_field(0.7, 1.0) == 1.0

    def test_grid_sampling_consistent_across_refinement(self):
        # N=11 grid nodes are a subset of the N=21 nodes
        a = build_problem61(11, seed=0)
        b = build_problem61(21, seed=0)
        ca = a.c_true.reshape(11, 11)
        cb = b.c_true.reshape(21, 21)
        assert np.allclose(ca, cb[::2, ::2], atol=1e-14)
        ua = a.u0.reshape(11, 11)
        ub = b.u0.reshape(21, 21)
        assert np.allclose(ua, ub[::2, ::2], atol=1e-14)


class TestBuild:
    def test_dimensions(self, prob61_n12):
        assert prob61_n12.n == 144
        assert prob61_n12.A.shape == (144, 144)

    def test_laplacian_spd(self, prob61_n12):
        lam_min = sp.linalg.eigsh(prob61_n12.A, k=1, which="SA",
                                  return_eigenvectors=False)[0]
        assert lam_min > 0
        assert (abs(prob61_n12.A - prob61_n12.A.T) > 0).nnz == 0

    def test_grid_too_small(self):
        with pytest.raises(ContractViolationError):
            build_problem61(2)

    def test_bad_residual_mode(self):
        with pytest.raises(ContractViolationError):
            build_problem61(8, residual_mode="projected")

    def test_forward_map_reproduces_state_at_truth(self, prob61_n12):
        F = prob61_n12.eval_F(prob61_n12.c_true)
        assert np.linalg.norm(F - prob61_n12.u0) <= 1e-10 * np.linalg.norm(prob61_n12.u0)

    def test_forward_map_at_zero_coefficient(self, prob61_n12):
        import scipy.sparse.linalg as spla
        F = prob61_n12.eval_F(np.zeros(prob61_n12.n))
        ref = spla.spsolve(prob61_n12.A.tocsc(), prob61_n12.phi_bar)
        assert np.allclose(F, ref, atol=1e-10)

    def test_back_substitution_residual(self, prob61_n12):
        rng = np.random.default_rng(0)
        c = np.abs(rng.standard_normal(prob61_n12.n)) + 0.5
        F = prob61_n12.eval_F(c)
        M = prob61_n12.A + sp.diags(c)
        assert (np.linalg.norm(M @ F - prob61_n12.phi_bar)
                <= 1e-10 * np.linalg.norm(prob61_n12.phi_bar))

    def test_residual_norm_is_target(self, prob61_n12):
        gap = np.linalg.norm(prob61_n12.eval_F(prob61_n12.c_true) - prob61_n12.u_bar)
        assert gap == pytest.approx(prob61_n12.residual_target, rel=1e-10)
        assert 0.09 <= gap <= 0.11

    def test_stationarity_documented_and_modest(self, prob61_n12):
        # even grid: floored at 1/cond(J); the documented value is what holds
        assert 0 < prob61_n12.stationarity_rel <= 5e-3

    def test_odd_grid_exact_stationarity(self, prob61_n21):
        assert prob61_n21.stationarity_abs <= 1e-12
        assert prob61_n21.stationarity_rel <= 1e-10

    def test_random_mode_documented(self):
        prob = build_problem61(10, seed=4, residual_mode="random")
        assert prob.stationarity_rel > 0
        g = prob.jac_transpose_apply(
            prob.c_true, prob.eval_F(prob.c_true) - prob.u_bar)
        assert np.linalg.norm(g) == pytest.approx(prob.stationarity_abs, rel=1e-10)

    def test_build_deterministic(self):
        a = build_problem61(8, seed=5)
        b = build_problem61(8, seed=5)
        assert np.array_equal(a.u_bar, b.u_bar)

    def test_paper_scale_dimensions(self):
        # N=50 gives the published problem size n=2500; assembly only
        xs = np.linspace(0, 1, 50)
        assert coefficient_field(xs[:, None], xs[None, :]).size == 2500


class TestJacobianProducts:
    def test_zero_direction(self, prob61_n12):
        out = prob61_n12.jac_apply(prob61_n12.c_true, np.zeros(prob61_n12.n))
        assert np.allclose(out, 0.0)

    def test_finite_difference_consistency(self, prob61_n12):
        rng = np.random.default_rng(2)
        c = prob61_n12.c_true
        v = rng.standard_normal(prob61_n12.n)
        v /= np.linalg.norm(v)
        Jv = prob61_n12.jac_apply(c, v)
        defects = []
        for h in (1e-4, 1e-6):
            fd = (prob61_n12.eval_F(c + h * v) - prob61_n12.eval_F(c)) / h
            defects.append(np.linalg.norm(fd - Jv))
        assert defects[1] <= 0.05 * defects[0]  # first order in h

    def test_adjointness(self, prob61_n12):
        op = prob61_n12.operator()
        assert adjointness_defect(op, prob61_n12.c_true, trials=50) <= 1e-10

    def test_dense_hook_matches_products(self, prob61_n12):
        rng = np.random.default_rng(3)
        c = prob61_n12.default_start()
        J = prob61_n12.jac_dense(c)
        v = rng.standard_normal(prob61_n12.n)
        assert np.allclose(J @ v, prob61_n12.jac_apply(c, v), atol=1e-12)
        u = rng.standard_normal(prob61_n12.n)
        assert np.allclose(J.T @ u, prob61_n12.jac_transpose_apply(c, u),
                           atol=1e-12)

    def test_nonfinite_coefficient_raises(self, prob61_n12):
        c = prob61_n12.c_true.copy()
        c[0] = np.nan
        with pytest.raises(EvaluationError):
            prob61_n12.eval_F(c)

    def test_factorization_cache_reused(self, prob61_n12):
        c = prob61_n12.c_true + 0.01
        prob61_n12.eval_F(c)
        lu_first = prob61_n12._cache["slot"][1]
        prob61_n12.jac_apply(c, np.ones(prob61_n12.n))
        assert prob61_n12._cache["slot"][1] is lu_first


class TestSynthetic:
    def test_dimension_guard(self):
        with pytest.raises(ContractViolationError):
            build_synthetic(1)

    def test_condition_number_at_origin(self):
        op = build_synthetic(6, spectrum_decay=0.5, nonlinearity_scale=0.0)
        J = op.jac_dense(np.zeros(6))
        s = np.linalg.svd(J, compute_uv=False)
        assert s[0] / s[-1] == pytest.approx(0.5 ** (1 - 6), rel=1e-12)

    def test_known_solution_is_stationary_for_exact_data(self):
        op = build_synthetic(9, 0.8, 0.2, seed=1)
        from ltrsolve import NoisyData, gradient
        y = op.eval(op.known_solution)
        g = gradient(op, op.known_solution, NoisyData(y_delta=y, delta=0.0))
        assert np.linalg.norm(g) == 0.0

    def test_jacobian_analytic(self):
        op = build_synthetic(5, 0.9, 0.3, seed=2)
        x = np.linspace(-1, 1, 5)
        s = 0.9 ** np.arange(1, 6)
        assert np.allclose(op.jac_dense(x), np.diag(s + 0.6 * x))

    def test_deterministic(self):
        a = build_synthetic(7, seed=9)
        b = build_synthetic(7, seed=9)
        assert np.array_equal(a.known_solution, b.known_solution)
