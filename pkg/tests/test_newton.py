import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npipg import (Box, FullSpace, NotPositiveDefinite, Point, Singular, StepSizes,
                   choose_step_sizes, make_problem, residual, solve, SolverConfig)
from npipg.newton import (BlockTridiagonal, block_cholesky, build_vd_apply, build_vu,
                          build_w_tilde, newton_direction, snapshot_at, snapshot_jacobians)
from npipg.problems import OscMassConfig, gen_oscillating_masses
from npipg.projections import IDENTITY, MASK
from oracle import (dense_jd, dense_newton_matrix, dense_newton_solve, dense_w_tilde,
                    random_problem)

seeds = st.integers(0, 2**32 - 1)


def differentiable_iterate(rng, p, s, max_tries=500, cond_max=1e8):
    """Random iterate with a differentiable, well-conditioned Newton matrix."""
    for _ in range(max_tries):
        z, w = rng.normal(scale=0.7, size=p.n_z), rng.normal(size=p.n_w)
        snap = snapshot_jacobians(p, s, z, w)
        if snap.differentiable and np.linalg.cond(
                dense_newton_matrix(p, s.alpha, s.beta, snap)) < cond_max:
            return z, w, snap
    return None


def free_problem(rho=1.0, eq=True):
    return make_problem([[FullSpace(2, rho)], [FullSpace(1, rho)]], [1.0, -2.0, 0.5],
                        [(np.array([[1.0, 2.0]]), np.array([[1.0]]))], [0.3],
                        [1 if eq else 0], [0 if eq else 1])


class TestSnapshot:
    def test_all_identity(self, rng):
        p = free_problem()
        s = choose_step_sizes(p)
        snap = snapshot_jacobians(p, s, rng.normal(size=3), rng.normal(size=1))
        assert snap.differentiable
        assert all(b.jac.form == IDENTITY for b in snap.d_blocks)
        assert snap.k_mask.all()

    def test_box_clamped(self):
        p = make_problem([[Box([-1.0], [1.0])], [FullSpace(1)]], [-10.0, 0.0],
                         [(np.zeros((0, 1)), np.zeros((0, 1)))], [], [0], [0])
        snap = snapshot_jacobians(p, StepSizes(0.5, 0.5, 1.0, 0.0), np.zeros(2), np.zeros(0))
        assert snap.differentiable and snap.d_blocks[0].jac.form == MASK
        assert not snap.d_blocks[0].jac.mask[0]

    def test_box_on_bound(self):
        p = make_problem([[Box([-1.0], [1.0])], [FullSpace(1)]], [-2.0, 0.0],
                         [(np.zeros((0, 1)), np.zeros((0, 1)))], [], [0], [0])
        # pre-projection point z - a(z + q) = 0 - 0.5 * (-2) = 1, exactly the upper bound
        snap = snapshot_jacobians(p, StepSizes(0.5, 0.5, 1.0, 0.0), np.zeros(2), np.zeros(0))
        assert not snap.differentiable

    def test_inequality_dual_at_zero(self):
        p = free_problem(eq=False)
        snap = snapshot_at(p, np.zeros(3), np.zeros(1))
        assert not snap.differentiable


class TestVU:
    def test_point_block(self):
        p = make_problem([[Point([1.0, 2.0])], [FullSpace(1)]], np.zeros(3),
                         [(np.zeros((0, 2)), np.zeros((0, 1)))], [], [0], [0])
        s = StepSizes(0.5, 0.5, 1.0, 0.0)
        v = build_vd_apply(snapshot_at(p, np.zeros(3), np.zeros(0)), p, s).to_dense()
        np.testing.assert_array_equal(v[:2, :2], np.eye(2))

    def test_identity_block_middle_factor(self):
        p = free_problem()
        s = StepSizes(0.5, 0.5, 1.0, 1.0)
        v = build_vd_apply(snapshot_at(p, np.zeros(3), np.zeros(1)), p, s).to_dense()
        np.testing.assert_array_equal(v, 2.0 * np.eye(3))

    @given(seeds)
    def test_matches_dense_inverse(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng)
        s = choose_step_sizes(p)
        snap = snapshot_jacobians(p, s, rng.normal(size=p.n_z), rng.normal(size=p.n_w))
        if not snap.differentiable:
            return
        jd = dense_jd(p, snap)
        ref = np.linalg.inv(np.eye(p.n_z) - jd @ (np.eye(p.n_z) - s.alpha * np.diag(p.p_diag)))
        v, u = build_vu(snap, p, s)
        np.testing.assert_allclose(v.to_dense(), ref, atol=1e-10, rtol=1e-10)
        np.testing.assert_allclose(u.to_dense(), ref @ jd, atol=1e-10, rtol=1e-10)
        x = rng.normal(size=p.n_z)
        np.testing.assert_allclose(v.apply(x), ref @ x, atol=1e-10, rtol=1e-10)


class TestWTilde:
    def test_masked_out(self):
        p = free_problem(eq=False)
        s = choose_step_sizes(p)
        snap = snapshot_at(p, np.zeros(3), np.array([1.0]))  # inequality dual positive
        wt = build_w_tilde(snap, p, s, delta=0.3).to_dense()
        np.testing.assert_array_equal(wt, 1.3 * np.eye(1))

    def test_scalar_hand_value(self):
        p = make_problem([[FullSpace(1)], [FullSpace(1)]], [0.0, 0.0],
                         [(np.array([[1.0]]), np.array([[1.0]]))], [0.0], [1], [0])
        s = StepSizes(1.0, 1.0, 1.0, 1.0)  # U = (a rho)^-1 I = I, ab = 1
        wt = build_w_tilde(snapshot_at(p, np.zeros(2), np.zeros(1)), p, s).to_dense()
        np.testing.assert_array_equal(wt, [[2.0]])

    @given(seeds, st.floats(0.0, 1.0))
    def test_matches_dense(self, seed, delta):
        rng = np.random.default_rng(seed)
        p = random_problem(rng, 3)
        s = choose_step_sizes(p)
        snap = snapshot_jacobians(p, s, rng.normal(size=p.n_z), rng.normal(size=p.n_w))
        if not snap.differentiable:
            return
        wt = build_w_tilde(snap, p, s, delta).to_dense()
        ref = dense_w_tilde(p, s.alpha, s.beta, snap, delta)
        np.testing.assert_allclose(wt, ref, atol=1e-11, rtol=1e-11)
        assert np.max(np.abs(wt - wt.T)) < 1e-12


class TestBlockCholesky:
    def test_hand_example(self):
        wt = BlockTridiagonal((np.array([[4.0]]), np.array([[5.0]])), (np.array([[2.0]]),))
        np.testing.assert_allclose(block_cholesky(wt).to_dense_l(), [[2.0, 0.0], [1.0, 2.0]])

    def test_identity(self):
        wt = BlockTridiagonal((np.eye(2), np.eye(3), np.eye(1)), (np.zeros((2, 3)), np.zeros((3, 1))))
        np.testing.assert_array_equal(block_cholesky(wt).to_dense_l(), np.eye(6))

    def test_not_positive_definite(self):
        wt = BlockTridiagonal((np.array([[1.0]]), np.array([[1.0]])), (np.array([[2.0]]),))
        with pytest.raises(NotPositiveDefinite) as exc:
            block_cholesky(wt)
        assert exc.value.stage == 1

    @pytest.mark.parametrize("n", [5, 20])
    def test_oscmass_against_dense_cholesky(self, n):
        p = gen_oscillating_masses(OscMassConfig(horizon=n))
        s = choose_step_sizes(p)
        rng = np.random.default_rng(n)
        snap = snapshot_jacobians(p, s, rng.normal(size=p.n_z), np.zeros(p.n_w))
        wt = build_w_tilde(snap, p, s, 1e-3)
        dense = wt.to_dense()
        fac = block_cholesky(wt, 1e-3)
        l = fac.to_dense_l()
        assert np.linalg.norm(l @ l.T - dense) <= 1e-10 * np.linalg.norm(dense)
        np.testing.assert_allclose(l, np.linalg.cholesky(dense), atol=1e-10 * np.abs(l).max())
        assert all(np.all(np.diag(d) > 0) for d in fac.diag_blocks)
        b = rng.normal(size=p.n_w)
        np.testing.assert_allclose(fac.solve(b), np.linalg.solve(dense, b), rtol=1e-8, atol=1e-10)


class TestNewtonDirection:
    def test_fixed_point(self):
        p = free_problem()
        s = choose_step_sizes(p)
        snap = snapshot_at(p, np.zeros(3), np.zeros(1))
        dz, dw = newton_direction(p, s, snap, np.zeros(4))
        assert not dz.any() and not dw.any()

    def test_unconstrained(self):
        p = make_problem([[FullSpace(2, 2.0)], [FullSpace(1, 2.0)]], np.zeros(3),
                         [(np.zeros((0, 2)), np.zeros((0, 1)))], [], [0], [0])
        s = StepSizes(0.25, 0.25, 2.0, 0.0)
        r = np.array([1.0, -2.0, 0.5])
        dz, dw = newton_direction(p, s, snapshot_at(p, np.zeros(3), np.zeros(0)), r)
        np.testing.assert_allclose(dz, r / (0.25 * 2.0), rtol=1e-15)
        assert dw.size == 0

    def test_singular_after_retries(self):
        # every column is pinned by a point set, so W is zero on equality rows
        p = make_problem([[Point([0.0])], [Point([1.0])]], np.zeros(2),
                         [(np.ones((1, 1)), np.ones((1, 1)))], [1.0], [1], [0])
        s = choose_step_sizes(p)
        snap = snapshot_at(p, np.zeros(2), np.zeros(1))
        with pytest.raises(Singular):
            newton_direction(p, s, snap, np.ones(3), max_retries=0)
        dz, dw = newton_direction(p, s, snap, np.ones(3), max_retries=8)
        assert np.all(np.isfinite(dw))

    def test_requires_differentiable(self):
        p = free_problem(eq=False)
        with pytest.raises(ValueError):
            newton_direction(p, choose_step_sizes(p), snapshot_at(p, np.zeros(3), np.zeros(1)),
                             np.zeros(4))

    @given(seeds)
    def test_matches_dense_solve(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng)
        s = choose_step_sizes(p)
        found = differentiable_iterate(rng, p, s, max_tries=50)
        if found is None:
            return
        z, w, snap = found
        r, _ = residual(p, s, z, w)
        dz, dw = newton_direction(p, s, snap, r, 0.0, max_retries=0)
        ez, ew = dense_newton_solve(p, s.alpha, s.beta, snap, z, w)
        pv, ev = np.concatenate([dz, dw]), np.concatenate([ez, ew])
        assert np.linalg.norm(pv - ev) <= 1e-8 * np.linalg.norm(ev)
        m = dense_newton_matrix(p, s.alpha, s.beta, snap)
        assert np.linalg.norm(m @ pv - r) <= 1e-9 * np.linalg.norm(r)


def test_local_nonsingularity_at_solution():
    p = gen_oscillating_masses(OscMassConfig(horizon=10, seed=1))
    rep = solve(p, SolverConfig(eps_abs=1e-10))
    assert rep.converged
    sp, s = rep.solved_problem, rep.steps
    snap = snapshot_jacobians(sp, s, rep.z_solved, rep.w_solved)
    assert snap.differentiable
    block_cholesky(build_w_tilde(snap, sp, s, 0.0))
