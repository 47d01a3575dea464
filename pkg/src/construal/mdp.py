"""Tabular Markov decision processes and exact solvers.

Transitions are kept as a single sparse matrix of shape ``(A*S, S)`` whose
row ``a*S + s`` holds ``P(. | s, a)``.  Values follow the utility-on-entry
convention used throughout the package::

    V(s) = U(s) - cost(s, a) + discount * sum_s' P(s' | s, a) V(s')

Terminal states accrue their utility once and stop, so their value is
``U(s)`` and their row of the successor matrix is the indicator of itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_SOLVE_LIMIT = 50_000


class ConvergenceError(RuntimeError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TabularMDP:
    """Finite MDP with row-stochastic transitions.

    ``action_cost`` is an optional ``(S, A)`` penalty subtracted from the
    state utility when ``a`` is taken in ``s``; the construal-modification
    process uses it for its switching cost.
    """

    transition: sp.csr_array
    utility: np.ndarray
    discount: float = 0.99
    terminal: Optional[np.ndarray] = None
    action_cost: Optional[np.ndarray] = None
    n_actions: int = 4

    def __post_init__(self):
        utility = np.asarray(self.utility, dtype=float)
        object.__setattr__(self, "utility", utility)
        n = utility.shape[0]
        if self.terminal is None:
            object.__setattr__(self, "terminal", np.zeros(n, dtype=bool))
        else:
            object.__setattr__(self, "terminal", np.asarray(self.terminal, dtype=bool))
        P = sp.csr_array(self.transition)
        object.__setattr__(self, "transition", P)
        if P.shape != (self.n_actions * n, n):
            raise ValueError(
                f"transition has shape {P.shape}, expected {(self.n_actions * n, n)}"
            )
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if self.action_cost is not None:
            cost = np.asarray(self.action_cost, dtype=float)
            if cost.shape != (n, self.n_actions):
                raise ValueError("action_cost must have shape (n_states, n_actions)")
            object.__setattr__(self, "action_cost", cost)

    @property
    def n_states(self) -> int:
        return self.utility.shape[0]

    def validate(self, atol: float = 1e-12) -> None:
        P = self.transition
        if P.nnz and P.data.min() < 0:
            raise ValueError("negative transition probability")
        sums = np.asarray(P.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > atol)
        if bad.size:
            a, s = divmod(int(bad[0]), self.n_states)
            raise ValueError(f"row (s={s}, a={a}) sums to {sums[bad[0]]!r}")

    def action_block(self, a: int) -> sp.csr_array:
        n = self.n_states
        return self.transition[a * n:(a + 1) * n]

    def dense(self) -> np.ndarray:
        """Transition tensor of shape (S, A, S)."""
        n, m = self.n_states, self.n_actions
        return self.transition.toarray().reshape(m, n, n).transpose(1, 0, 2)

    def reward(self) -> np.ndarray:
        r = np.repeat(self.utility[:, None], self.n_actions, axis=1)
        if self.action_cost is not None:
            r = r - self.action_cost
        return r

    def with_discount(self, discount: float) -> "TabularMDP":
        return TabularMDP(self.transition, self.utility, discount, self.terminal,
                          self.action_cost, self.n_actions)


def bellman_q(mdp: TabularMDP, values: np.ndarray) -> np.ndarray:
    """One-step lookahead action values, shape (S, A)."""
    n, m = mdp.n_states, mdp.n_actions
    cont = (mdp.transition @ values).reshape(m, n).T
    q = mdp.reward() + mdp.discount * cont
    q[mdp.terminal] = mdp.utility[mdp.terminal, None]
    return q


def _initial_values(mdp: TabularMDP) -> np.ndarray:
    # Pessimistic start: the value of never leaving. Enclosed pockets are
    # then already at their fixed point and do not slow convergence.
    if mdp.discount < 1.0:
        v = mdp.utility / (1.0 - mdp.discount)
    else:
        v = np.zeros(mdp.n_states)
    v = v.copy()
    v[mdp.terminal] = mdp.utility[mdp.terminal]
    return v


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iters: int = 100_000):
    """Synchronous value iteration.

    Returns ``(V, Q)`` where the max-norm Bellman residual of ``V`` is
    below ``tol``.  Raises :class:`ConvergenceError` after ``max_iters``
    sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _initial_values(mdp)
    residual = np.inf
    for _ in range(max_iters):
        v_new = bellman_q(mdp, v).max(axis=1)
        residual = np.max(np.abs(v_new - v)) if v.size else 0.0
        v = v_new
        if residual < tol:
            q = bellman_q(mdp, v)
            return v, q
    raise ConvergenceError(
        f"value iteration did not converge in {max_iters} sweeps "
        f"(residual {residual:.3e}, tol {tol:.1e})"
    )


def policy_matrix(mdp: TabularMDP, policy: np.ndarray) -> sp.csr_array:
    """State-to-state matrix under ``policy`` with terminal rows zeroed."""
    n, m = mdp.n_states, mdp.n_actions
    policy = np.asarray(policy, dtype=float)
    onehot = np.all((policy == 0.0) | (policy == 1.0)) and np.all(policy.sum(axis=1) == 1.0)
    if onehot:
        rows = policy.argmax(axis=1) * n + np.arange(n)
        P = mdp.transition[rows]
    else:
        weights = policy.T.reshape(-1)
        weighted = sp.csr_array(mdp.transition.multiply(weights[:, None]))
        summer = sp.hstack([sp.identity(n, format="csr")] * m, format="csr")
        P = sp.csr_array(summer @ weighted)
    if mdp.terminal.any():
        keep = sp.diags_array((~mdp.terminal).astype(float))
        P = sp.csr_array(keep @ P)
    P.eliminate_zeros()
    return P


def _policy_reward(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    r = np.sum(mdp.reward() * policy, axis=1)
    r[mdp.terminal] = mdp.utility[mdp.terminal]
    return r


def _solve(A: sp.csr_array, b: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    if n < DIRECT_SOLVE_LIMIT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = spla.spsolve(sp.csc_array(A), b)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SingularSystemError(f"singular evaluation system: {exc}") from exc
    else:
        x, info = spla.bicgstab(A, b, rtol=1e-12, atol=1e-10, maxiter=10_000)
        if info != 0:
            raise SingularSystemError(f"iterative solve failed (info={info})")
    x = np.asarray(x, dtype=float).reshape(b.shape)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("evaluation system has no finite solution")
    return x


def policy_evaluation_exact(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """Solve ``V = r_pi + discount * P_pi V`` exactly."""
    P = policy_matrix(mdp, policy)
    A = sp.identity(mdp.n_states, format="csr") - mdp.discount * P
    v = _solve(sp.csr_array(A), _policy_reward(mdp, policy))
    residual = np.max(np.abs(A @ v - _policy_reward(mdp, policy))) if v.size else 0.0
    if residual > 1e-6:
        raise SingularSystemError(f"policy evaluation residual {residual:.3e}")
    return v


def optimal_stochastic_policy(q: np.ndarray, tie_tol: float = 1e-8) -> np.ndarray:
    """Uniform distribution over the actions within ``tie_tol`` of the best."""
    q = np.asarray(q, dtype=float)
    best = q.max(axis=1, keepdims=True)
    ties = (q >= best - tie_tol).astype(float)
    return ties / ties.sum(axis=1, keepdims=True)


def eps_softmax_policy(q: np.ndarray, inv_temp: float, eps: float) -> np.ndarray:
    """Mixture of uniform noise (weight ``eps``) and a softmax over ``q``."""
    if inv_temp < 0 or not 0.0 <= eps <= 1.0:
        raise ValueError("need inv_temp >= 0 and eps in [0, 1]")
    q = np.asarray(q, dtype=float)
    z = inv_temp * (q - q.max(axis=1, keepdims=True))
    soft = np.exp(z)
    soft /= soft.sum(axis=1, keepdims=True)
    return eps / q.shape[1] + (1.0 - eps) * soft


def policy_iteration_sparse(mdp: TabularMDP, max_iters: int = 1_000, tie_tol: float = 1e-9):
    """Howard policy iteration over the sparse transition matrix.

    Returns ``(policy, V)`` with a deterministic one-hot policy.  Among
    near-tied actions the lowest index is kept, and the incumbent action is
    only replaced on a strict improvement, so the loop cannot cycle.
    """
    if mdp.discount >= 1.0:
        raise ValueError("policy_iteration_sparse requires discount < 1")
    n, m = mdp.n_states, mdp.n_actions
    rows = np.arange(n)

    def greedy(q, incumbent=None):
        best = q.max(axis=1)
        choice = np.argmax(q >= (best - tie_tol)[:, None], axis=1)
        if incumbent is not None:
            keep = q[rows, incumbent] >= best - tie_tol
            choice = np.where(keep, incumbent, choice)
        return choice

    actions = greedy(bellman_q(mdp, _initial_values(mdp)))
    for _ in range(max_iters):
        policy = np.zeros((n, m))
        policy[rows, actions] = 1.0
        v = policy_evaluation_exact(mdp, policy)
        new_actions = greedy(bellman_q(mdp, v), actions)
        if np.array_equal(new_actions, actions):
            return policy, v
        actions = new_actions
    raise ConvergenceError(f"policy iteration did not stabilise in {max_iters} iterations")


def successor_representation(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """Dense successor matrix ``M = (I - discount * P_pi)^-1``."""
    P = policy_matrix(mdp, policy)
    A = sp.csc_array(sp.identity(mdp.n_states, format="csc") - mdp.discount * P)
    try:
        M = _solve(A, np.eye(mdp.n_states))
    except SingularSystemError as exc:
        raise SingularSystemError(f"successor representation diverges: {exc}") from exc
    return M


def successor_row(mdp: TabularMDP, policy_or_chain, start: int) -> np.ndarray:
    """Row ``start`` of the successor matrix without forming the full matrix.

    ``policy_or_chain`` is either an ``(S, A)`` policy or an already
    assembled ``(S, S)`` chain with terminal rows zeroed.
    """
    if sp.issparse(policy_or_chain):
        P = sp.csr_array(policy_or_chain)
    else:
        P = policy_matrix(mdp, policy_or_chain)
    n = mdp.n_states
    A = sp.csr_array(sp.identity(n, format="csr") - mdp.discount * P).T
    e = np.zeros(n)
    e[start] = 1.0
    return _solve(sp.csr_array(A), e)


def sample_trajectory(mdp: TabularMDP, policy: np.ndarray, start: int, seed: int,
                      max_steps: int = 1_000) -> list[tuple[int, Optional[int]]]:
    """Roll out ``policy`` from ``start``.

    Each element is ``(state, action)``; the final terminal state carries
    ``None`` as its action.  At most ``max_steps`` actions are taken.
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    rng = np.random.default_rng(seed)
    n, m = mdp.n_states, mdp.n_actions
    P = mdp.transition
    policy = np.asarray(policy, dtype=float)
    s = int(start)
    out: list[tuple[int, Optional[int]]] = []
    for _ in range(max_steps):
        if mdp.terminal[s]:
            out.append((s, None))
            return out
        a = int(rng.choice(m, p=policy[s]))
        out.append((s, a))
        row = a * n + s
        lo, hi = P.indptr[row], P.indptr[row + 1]
        probs = P.data[lo:hi]
        s = int(P.indices[lo:hi][rng.choice(hi - lo, p=probs / probs.sum())])
    out.append((s, None))
    return out


def solution_to_json(values: np.ndarray, policy: Optional[np.ndarray] = None) -> dict:
    out = {"values": {str(i): float(v) for i, v in enumerate(values)}}
    if policy is not None:
        out["policy"] = {str(i): [float(p) for p in row] for i, row in enumerate(policy)}
    return out


def from_dense(transition: np.ndarray, utility: Sequence[float], discount: float = 0.99,
               terminal=None, action_cost=None) -> TabularMDP:
    """Build a :class:`TabularMDP` from an ``(S, A, S)`` tensor."""
    transition = np.asarray(transition, dtype=float)
    n, m, _ = transition.shape
    stacked = transition.transpose(1, 0, 2).reshape(m * n, n)
    return TabularMDP(sp.csr_array(stacked), np.asarray(utility, dtype=float), discount,
                      terminal, action_cost, m)
