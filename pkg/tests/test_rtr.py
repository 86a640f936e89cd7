import numpy as np
import pytest

from ltrsolve import (
    DenseCapExceededError,
    SecularConfig,
    UndefinedMetricError,
    add_noise,
    build_synthetic,
    compare_metrics,
    decompose_jacobian,
    exact_sqrt_apply,
    exact_trs,
    factorization_defect,
    gklb,
    recover_step,
    rtr_solve,
    secular_newton,
    small_svd,
    sq,
)
from ltrsolve.rtr import DenseDecomposition
from ltrsolve.solver import SolverConfig


def dec_of(J):
    U, s, Vt = np.linalg.svd(np.asarray(J, dtype=float), full_matrices=False)
    return DenseDecomposition(U=U, s=s, Vt=Vt)


class TestExactSqrt:
    def test_identity(self):
        dec = dec_of(np.eye(3))
        b = np.array([0.3, -1.0, 2.0])
        assert np.allclose(exact_sqrt_apply(dec, b), b)

    def test_diagonal(self):
        dec = dec_of(np.diag([2.0, 1.0]))
        assert np.allclose(exact_sqrt_apply(dec, np.ones(2)), [2.0, 1.0])

    def test_agrees_with_subspace_root_at_full_dimension(self, rng):
        J = rng.standard_normal((5, 5))
        b = rng.standard_normal(5)
        dec = dec_of(J)
        bid = gklb(J.dot, J.T.dot, b, 5)
        ref = exact_sqrt_apply(dec, b)
        assert np.linalg.norm(sq(bid, b) - ref) <= 1e-10 * np.linalg.norm(ref)


class TestExactTRS:
    def test_identity_newton_step(self):
        dec = dec_of(np.eye(3))
        sol = exact_trs(dec, np.array([1.0, 0.0, 0.0]), 10.0)
        assert sol.lam == 0.0 and not sol.active
        assert np.allclose(sol.z, [-1.0, 0.0, 0.0])
        assert np.allclose(sol.p, [-1.0, 0.0, 0.0])

    def test_scalar_analytic_root(self):
        dec = dec_of(np.array([[1.0]]))
        sol = exact_trs(dec, np.array([2.0]), 1.0)
        assert abs(sol.lam - 1.0) <= 2.0e-2

    def test_matches_subspace_solver_at_full_dimension(self, rng):
        J = rng.standard_normal((5, 5))
        g = J.T @ rng.standard_normal(5)
        gnorm = np.linalg.norm(g)
        dec = dec_of(J)
        bid = gklb(J.dot, J.T.dot, g, 5)
        tsvd = small_svd(bid.t_matrix())
        w0n = np.linalg.norm(exact_trs(dec, g, 1e12).z)
        Delta = 0.25 * w0n
        cfg = SecularConfig(psi_tol=1e-10)
        sol_l = secular_newton(tsvd, gnorm, Delta, cfg)
        z_l, p_l = recover_step(bid, sol_l.w, tsvd)
        sol_e = exact_trs(dec, g, Delta, cfg)
        assert np.linalg.norm(z_l - sol_e.z) <= 1e-8 * np.linalg.norm(sol_e.z)
        assert np.linalg.norm(p_l - sol_e.p) <= 1e-8 * np.linalg.norm(sol_e.p)

    def test_kkt_residual(self, rng):
        J = rng.standard_normal((7, 5))
        g = rng.standard_normal(5)
        dec = dec_of(J)
        B = J.T @ J
        w0n = np.linalg.norm(exact_trs(dec, g, 1e12).z)
        sol = exact_trs(dec, g, 0.3 * w0n)
        rhs = -exact_sqrt_apply(dec, g)
        resid = (B @ B + sol.lam * np.eye(5)) @ sol.z - rhs
        assert np.linalg.norm(resid) <= 1e-10 * np.linalg.norm(rhs)


class TestRTRSolve:
    def test_stops_at_stationary_start(self):
        op = build_synthetic(8, 0.9, 0.1, seed=1)
        data = add_noise(op.eval(op.known_solution), 0.0, 2)
        res = rtr_solve(op, data, op.known_solution)
        assert res.stop_reason == "gradient_tol"
        assert res.totals["outer"] == 0

    def test_dense_cap_refusal(self):
        op = build_synthetic(50, 0.9, 0.1, seed=1)
        data = add_noise(op.eval(op.known_solution), 0.0, 2)
        with pytest.raises(DenseCapExceededError):
            rtr_solve(op, data, np.zeros(50), dense_cap=10)

    def test_missing_hook_refusal(self):
        from ltrsolve import NonlinearProblem, NoisyData
        op = NonlinearProblem(n=3, m=3, eval=lambda x: x,
                              jac_apply=lambda x, v: v,
                              jac_transpose_apply=lambda x, u: u)
        with pytest.raises(DenseCapExceededError):
            rtr_solve(op, NoisyData(y_delta=np.ones(3), delta=0.0), np.zeros(3))

    def test_q_condition_analog_under_radius_cap(self):
        op = build_synthetic(12, 0.8, 0.1, seed=6)
        data = add_noise(op.eval(op.known_solution), 0.0, 2)
        cfg = SolverConfig(ell=12, k_max=40, enforce_radius_cap=True)
        qs = []
        res = rtr_solve(op, data, np.zeros(12), cfg,
                        sink=lambda rec: qs.append(rec.q_k))
        assert qs
        assert min(qs) >= cfg.q


class TestCompareMetrics:
    def test_full_dimension_errors_vanish(self, rng):
        J = rng.standard_normal((6, 6))
        g = J.T @ rng.standard_normal(6)
        dec = dec_of(J)
        bid = gklb(J.dot, J.T.dot, g, 6)
        w0n = np.linalg.norm(exact_trs(dec, g, 1e12).z)
        m = compare_metrics(dec, bid, g, 0.3 * w0n)
        assert m["err_r"] <= 1e-10
        assert m["err_p"] <= 1e-10

    def test_zero_denominator_raises(self, rng):
        J = np.diag([1.0, 0.0])
        dec = dec_of(J)
        bid = gklb(J.dot, J.T.dot, np.array([1.0, 0.0]), 1)
        with pytest.raises(UndefinedMetricError):
            compare_metrics(dec, bid, np.array([0.0, 1.0]), 1.0)

    def test_subspace_error_decreases(self, prob61_n12):
        op = prob61_n12.operator()
        x = prob61_n12.default_start()
        data = prob61_n12.noisy_data(0.0, 0)
        from ltrsolve import gradient
        g = gradient(op, x, data)
        dec = decompose_jacobian(op, x)
        errs = []
        for ell in (5, 20, 60):
            bid = gklb(lambda v: op.jac_apply(x, v),
                       lambda u: op.jac_transpose_apply(x, u), g, ell)
            errs.append(compare_metrics(dec, bid, g, 1e-3)["err_r"])
        assert errs[-1] <= errs[0]


class TestFactorizationDefect:
    def test_zero_at_full_dimension(self, rng):
        J = rng.standard_normal((6, 6))
        B = J.T @ J
        g = rng.standard_normal(6)
        bid = gklb(J.dot, J.T.dot, g, 6)
        assert factorization_defect(bid, B) <= 1e-10 * np.linalg.norm(B)

    def test_spectral_bounded_by_frobenius(self, rng):
        J = rng.standard_normal((9, 7))
        B = J.T @ J
        bid = gklb(J.dot, J.T.dot, rng.standard_normal(7), 3)
        two = factorization_defect(bid, B, norm="2")
        fro = factorization_defect(bid, B, norm="fro")
        assert two <= fro * (1 + 1e-12)

    def test_unknown_norm_rejected(self, rng):
        J = rng.standard_normal((4, 4))
        bid = gklb(J.dot, J.T.dot, np.ones(4), 2)
        with pytest.raises(ValueError):
            factorization_defect(bid, J.T @ J, norm="inf")

    def test_sweep_decreases_on_param_ident(self, prob61_n12):
        op = prob61_n12.operator()
        x = prob61_n12.default_start()
        data = prob61_n12.noisy_data(0.0, 0)
        from ltrsolve import gradient
        g = gradient(op, x, data)
        J = op.jac_dense(x)
        B = J.T @ J
        defects = []
        for ell in (5, 10, 20, 40):
            bid = gklb(lambda v: op.jac_apply(x, v),
                       lambda u: op.jac_transpose_apply(x, u), g, ell)
            defects.append(factorization_defect(bid, B))
        assert defects[-1] <= defects[0]
        assert defects[0] <= 1e-2 * np.linalg.norm(B)

    def test_reorthogonalization_shrinks_defect(self):
        from ltrsolve import ReorthPolicy
        n = 80
        A = np.diag(np.logspace(0, -10, n))
        B = A.T @ A
        q1 = np.ones(n)
        d_none = factorization_defect(
            gklb(A.dot, A.T.dot, q1, 40, ReorthPolicy(mode="none")), B)
        d_full = factorization_defect(
            gklb(A.dot, A.T.dot, q1, 40, ReorthPolicy(mode="full")), B)
        assert d_full < d_none
