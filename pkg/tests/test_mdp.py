import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from construal.maze import TINY3, TINY_OB, compose_construed_mdp, parse_maze, true_mdp
from construal.mdp import (ConvergenceError, SingularSystemError, TabularMDP, bellman_q,
                           eps_softmax_policy, from_dense, optimal_stochastic_policy,
                           policy_evaluation_exact, policy_iteration_sparse, policy_matrix,
                           sample_trajectory, solution_to_json, successor_representation,
                           value_iteration)

from oracles import DenseMaze, dense_eval, dense_vi

# frozen from the dense oracle in tests/oracles.py
TINY3_START_VALUE = -3.940437424215036
TINY3_START_VALUE_UNDISCOUNTED = -4.000040000400004


def random_mdp(seed, n=6, m=3, gamma=0.9):
    rng = np.random.default_rng(seed)
    P = rng.random((n, m, n)) * (rng.random((n, m, n)) < 0.6)
    P[:, :, 0] += 1e-3
    P /= P.sum(axis=2, keepdims=True)
    terminal = np.zeros(n, dtype=bool)
    terminal[-1] = True
    P[-1] = 0.0
    P[-1, :, -1] = 1.0
    u = -rng.random(n)
    u[-1] = 0.0
    return from_dense(P, u, gamma, terminal)


class TestValueIteration:
    def test_tiny3_start_value(self, tiny3):
        v, _ = value_iteration(true_mdp(tiny3))
        assert v[tiny3.start_index] == pytest.approx(TINY3_START_VALUE, abs=1e-9)

    def test_matches_dense_oracle(self):
        m = DenseMaze(TINY3)
        ref, _ = dense_vi(m.transitions([]), m.utility(), m.idx(m.goal))
        v, _ = value_iteration(true_mdp(parse_maze(TINY3)))
        np.testing.assert_allclose(v, ref, atol=1e-9)

    def test_goal_value_zero(self, tiny3, tiny_ob):
        for maze in (tiny3, tiny_ob):
            v, _ = value_iteration(true_mdp(maze))
            assert v[maze.goal_index] == 0.0

    def test_undiscounted(self, tiny3):
        v, _ = value_iteration(true_mdp(tiny3, discount=1.0))
        assert v[tiny3.start_index] == pytest.approx(-4.0, abs=1e-3)
        assert v[tiny3.start_index] == pytest.approx(TINY3_START_VALUE_UNDISCOUNTED, abs=1e-8)

    def test_bellman_residual_below_tol(self, fixtures):
        for maze in list(fixtures.values())[:4]:
            mdp = true_mdp(maze)
            v, q = value_iteration(mdp, tol=1e-10)
            resid = np.abs(bellman_q(mdp, v).max(axis=1) - v)
            assert resid.max() < 1e-10 / (1 - mdp.discount)
            np.testing.assert_allclose(q.max(axis=1), v, atol=1e-9)

    def test_non_convergence_names_residual(self, tiny3):
        with pytest.raises(ConvergenceError, match="residual"):
            value_iteration(true_mdp(tiny3), tol=1e-12, max_iters=2)

    def test_rejects_bad_tol(self, tiny3):
        with pytest.raises(ValueError):
            value_iteration(true_mdp(tiny3), tol=0.0)


class TestPolicyEvaluation:
    def test_always_right_on_tiny_ob_is_stuck(self, tiny_ob):
        mdp = true_mdp(tiny_ob)
        pi = np.zeros((9, 4))
        pi[:, 3] = 1.0
        v = policy_evaluation_exact(mdp, pi)
        assert v[tiny_ob.start_index] == pytest.approx(-100.0, abs=1e-9)

    def test_optimal_policy_matches_vi(self, tiny3):
        mdp = true_mdp(tiny3)
        v, q = value_iteration(mdp)
        np.testing.assert_allclose(policy_evaluation_exact(mdp, optimal_stochastic_policy(q)), v,
                                   atol=1e-9)

    def test_uniform_is_worse(self, tiny3):
        mdp = true_mdp(tiny3)
        v, _ = value_iteration(mdp)
        vu = policy_evaluation_exact(mdp, np.full((9, 4), 0.25))
        assert vu[tiny3.start_index] < v[tiny3.start_index]

    def test_matches_dense_oracle_on_random_policy(self):
        m = DenseMaze(TINY_OB)
        rng = np.random.default_rng(3)
        pi = rng.random((9, 4))
        pi /= pi.sum(axis=1, keepdims=True)
        ref = dense_eval(m.transitions([0]), m.utility(), pi, m.idx(m.goal))
        got = policy_evaluation_exact(true_mdp(parse_maze(TINY_OB)), pi)
        np.testing.assert_allclose(got, ref, atol=1e-9)

    def test_improper_policy_undiscounted_is_singular(self, tiny_ob):
        mdp = true_mdp(tiny_ob, discount=1.0)
        pi = np.zeros((9, 4))
        pi[:, 3] = 1.0
        with pytest.raises(SingularSystemError):
            policy_evaluation_exact(mdp, pi)


class TestPolicies:
    def test_ties_uniform(self):
        np.testing.assert_allclose(optimal_stochastic_policy(np.array([[-3, -3, -5, -5.0]])),
                                   [[0.5, 0.5, 0, 0]])

    def test_unique_argmax(self):
        np.testing.assert_allclose(optimal_stochastic_policy(np.array([[-1, -2, -3, -4.0]])),
                                   [[1, 0, 0, 0]])

    def test_tiny_ob_empty_construal_goes_right(self, tiny_ob):
        _, q = value_iteration(compose_construed_mdp(tiny_ob, 0))
        pi = optimal_stochastic_policy(q)
        np.testing.assert_array_equal(pi[tiny_ob.start_index], [0, 0, 0, 1])

    @given(arrays(float, (5, 4), elements=st.floats(-50, 50)), st.floats(-100, 100))
    def test_argmax_set_shift_invariant(self, q, c):
        # shift by a value exactly representable relative to q's spacing
        c = np.round(c)
        np.testing.assert_array_equal(optimal_stochastic_policy(q), optimal_stochastic_policy(q + c))

    def test_eps_one_uniform(self):
        q = np.array([[0.0, -5.0, 3.0, 1.0]])
        np.testing.assert_allclose(eps_softmax_policy(q, 7.0, 1.0), [[0.25] * 4])

    def test_zero_inv_temp_uniform(self):
        q = np.array([[0.0, -5.0, 3.0, 1.0]])
        np.testing.assert_allclose(eps_softmax_policy(q, 0.0, 0.0), [[0.25] * 4])

    def test_symmetric_q(self):
        np.testing.assert_allclose(eps_softmax_policy(np.zeros((1, 2)), 5.0, 0.2), [[0.5, 0.5]])

    @given(st.sampled_from([1.0, 3.0, 5.0, 7.0, 9.0, 10.0]),
           st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.3]),
           arrays(float, (4, 4), elements=st.floats(-1e3, 1e3)))
    def test_rows_sum_to_one(self, inv_temp, eps, q):
        pi = eps_softmax_policy(q, inv_temp, eps)
        assert np.all(pi >= 0)
        np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)

    def test_bad_params(self):
        with pytest.raises(ValueError):
            eps_softmax_policy(np.zeros((1, 2)), -1.0, 0.0)


class TestPolicyIteration:
    def test_tiny3_matches_vi(self, tiny3):
        mdp = true_mdp(tiny3)
        pi, v = policy_iteration_sparse(mdp)
        v_vi, _ = value_iteration(mdp)
        np.testing.assert_allclose(v, v_vi, atol=1e-8)
        assert set(np.unique(pi)) <= {0.0, 1.0}

    def test_all_fixtures_agree_with_vi(self, fixtures):
        for maze in fixtures.values():
            mdp = true_mdp(maze)
            _, v = policy_iteration_sparse(mdp)
            v_vi, _ = value_iteration(mdp)
            np.testing.assert_allclose(v, v_vi, atol=1e-8)

    @given(st.integers(0, 10_000))
    def test_random_mdps(self, seed):
        mdp = random_mdp(seed)
        _, v = policy_iteration_sparse(mdp)
        v_vi, _ = value_iteration(mdp, tol=1e-12)
        np.testing.assert_allclose(v, v_vi, atol=1e-8)

    def test_single_terminal_state(self):
        mdp = TabularMDP(sp.csr_array(np.ones((4, 1))), np.zeros(1), 0.99, np.array([True]))
        _, v = policy_iteration_sparse(mdp)
        np.testing.assert_array_equal(v, [0.0])

    def test_requires_discount(self, tiny3):
        with pytest.raises(ValueError):
            policy_iteration_sparse(true_mdp(tiny3, discount=1.0))


class TestSuccessorRepresentation:
    def test_two_state_chain(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = 1.0
        P[1, 0, 1] = 1.0
        mdp = from_dense(P, [-1.0, 0.0], 1.0, [False, True])
        M = successor_representation(mdp, np.ones((2, 1)))
        np.testing.assert_allclose(M, [[1, 1], [0, 1]])

    @given(st.integers(0, 10_000))
    def test_value_identity(self, seed):
        mdp = random_mdp(seed)
        rng = np.random.default_rng(seed)
        pi = rng.random((mdp.n_states, mdp.n_actions))
        pi /= pi.sum(axis=1, keepdims=True)
        M = successor_representation(mdp, pi)
        np.testing.assert_allclose(M @ mdp.utility, policy_evaluation_exact(mdp, pi), atol=1e-8)
        # (I - gamma P) M = I, terminal rows are self-indicators
        P = policy_matrix(mdp, pi).toarray()
        np.testing.assert_allclose((np.eye(mdp.n_states) - mdp.discount * P) @ M,
                                   np.eye(mdp.n_states), atol=1e-8)
        assert np.all(np.diag(M)[~mdp.terminal] >= 1 - 1e-12)
        np.testing.assert_allclose(M[-1], np.eye(mdp.n_states)[-1])

    def test_off_path_corner_not_visited(self, tiny3):
        mdp = true_mdp(tiny3)
        pi, _ = policy_iteration_sparse(mdp)
        M = successor_representation(mdp, pi)
        path = {tiny3.cell(s) for s, _ in sample_trajectory(mdp, pi, tiny3.start_index, 0)}
        # a shortest path misses at least one of the two off-diagonal corners
        off_path = {(0, 0), (2, 2)} - path
        assert off_path
        for corner in off_path:
            assert M[tiny3.start_index, tiny3.index(corner)] == 0.0
        for c in path - {tiny3.goal}:
            assert M[tiny3.start_index, tiny3.index(c)] > 0.9

    def test_improper_undiscounted_diverges(self, tiny_ob):
        pi = np.zeros((9, 4))
        pi[:, 3] = 1.0
        with pytest.raises(SingularSystemError):
            successor_representation(true_mdp(tiny_ob, discount=1.0), pi)


class TestTrajectories:
    def test_deterministic_optimal_path(self, tiny3):
        mdp = true_mdp(tiny3)
        pi, _ = policy_iteration_sparse(mdp)
        paths = set()
        for seed in range(5):
            traj = sample_trajectory(mdp, pi, tiny3.start_index, seed)
            assert traj[-1][1] is None
            paths.add(tuple(tiny3.cell(s) for s, _ in traj))
        # slip could in principle add a stay; with these seeds it does not
        (path,) = paths
        assert len(path) == 5 and path[0] == (0, 2) and path[-1] == (2, 0)
        assert all(abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1 for a, b in zip(path, path[1:]))

    def test_terminal_start(self, tiny3):
        mdp = true_mdp(tiny3)
        traj = sample_trajectory(mdp, np.full((9, 4), 0.25), tiny3.goal_index, 0)
        assert traj == [(tiny3.goal_index, None)]

    def test_same_seed_same_trajectory(self, tiny3):
        mdp = true_mdp(tiny3)
        pi = np.full((9, 4), 0.25)
        assert sample_trajectory(mdp, pi, 6, 42) == sample_trajectory(mdp, pi, 6, 42)

    def test_max_steps(self, tiny_ob):
        mdp = true_mdp(tiny_ob)
        pi = np.zeros((9, 4))
        pi[:, 3] = 1.0
        traj = sample_trajectory(mdp, pi, tiny_ob.start_index, 0, max_steps=10)
        assert len(traj) == 11
        with pytest.raises(ValueError):
            sample_trajectory(mdp, pi, 0, 0, max_steps=0)


def test_validate_and_json(tiny3):
    mdp = true_mdp(tiny3)
    mdp.validate()
    v, q = value_iteration(mdp)
    js = solution_to_json(v, optimal_stochastic_policy(q))
    assert js["values"]["2"] == 0.0 and len(js["policy"]) == 9


def test_validate_flags_bad_rows():
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = 0.5
    P[1, 0, 1] = 1.0
    with pytest.raises(ValueError, match="sums"):
        from_dense(P, [0.0, 0.0]).validate()
