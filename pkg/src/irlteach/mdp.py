"""Tabular MDPs and the dynamic-programming routines built on them.

Rewards are state-based and collected on the current state at every step,
including the first one. Terminal states are absorbing and carry no decision:
their value is ``R(s) / (1 - gamma)`` and they contribute no entropy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .validation import ConvergenceError, check_policy, check_weights

VALUE_TOL = 1e-8
EVAL_TOL = 1e-10
MAX_SWEEPS = 10_000


@dataclass(frozen=True, eq=False)
class Mdp:
    """Tabular dynamics ``T[s, a, s']`` with initial distribution and discount."""

    transition: np.ndarray
    p0: np.ndarray
    gamma: float
    terminal: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        p0 = np.asarray(self.p0, dtype=float)
        terminal = np.asarray(self.terminal, dtype=bool)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "terminal", terminal)
        object.__setattr__(self, "gamma", float(self.gamma))

        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {T.shape}")
        S = T.shape[0]
        if p0.shape != (S,) or terminal.shape != (S,):
            raise ValueError("p0 and terminal must be vectors over states")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if np.any(T < 0) or not np.allclose(T.sum(axis=2), 1.0, rtol=0, atol=1e-12):
            raise ValueError("transition rows must be probability vectors")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ValueError("p0 must be a probability vector")
        if np.any(p0[terminal] > 0):
            raise ValueError("p0 puts mass on a terminal state")
        for s in np.flatnonzero(terminal):
            if not np.all(T[s, :, s] == 1.0):
                raise ValueError(f"terminal state {s} must self-loop under every action")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def initial_states(self) -> np.ndarray:
        return np.flatnonzero(self.p0 > 0)

    @cached_property
    def flat_transition(self) -> sparse.csr_matrix:
        """Sparse ``(S*A, S)`` view of the transition tensor."""
        S, A = self.n_states, self.n_actions
        return sparse.csr_matrix(self.transition.reshape(S * A, S))

    @cached_property
    def _live_transition(self) -> sparse.csr_matrix:
        # terminal rows zeroed; their value is fixed analytically
        T = self.transition.copy()
        T[self.terminal] = 0.0
        S, A = self.n_states, self.n_actions
        return sparse.csr_matrix(T.reshape(S * A, S))

    def expected_next(self, values: np.ndarray) -> np.ndarray:
        """``E[values(s') | s, a]`` with shape ``(S, A, ...)``."""
        S, A = self.n_states, self.n_actions
        out = self.flat_transition @ values
        return out.reshape((S, A) + values.shape[1:])

    def policy_matrix(self, policy: np.ndarray) -> sparse.csr_matrix:
        """State-to-state kernel ``P[s, s'] = sum_a pi(a|s) T(s'|s, a)``, terminal rows zero."""
        S, A = self.n_states, self.n_actions
        W = sparse.csr_matrix(
            (policy.ravel(), np.arange(S * A), np.arange(0, S * A + 1, A)),
            shape=(S, S * A),
        )
        return (W @ self._live_transition).tocsr()

    def reachable(self) -> np.ndarray:
        """Boolean mask of states reachable from the support of ``p0`` (BFS)."""
        seen = np.zeros(self.n_states, dtype=bool)
        succ = self.flat_transition.tolil().rows
        A = self.n_actions
        queue = deque(int(s) for s in self.initial_states)
        seen[self.initial_states] = True
        while queue:
            s = queue.popleft()
            for a in range(A):
                for nxt in succ[s * A + a]:
                    if not seen[nxt]:
                        seen[nxt] = True
                        queue.append(nxt)
        return seen


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fixed-length sequence of (state, action) pairs."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        if states.shape != actions.shape or states.ndim != 1:
            raise ValueError("states and actions must be 1-d of equal length")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    def __len__(self) -> int:
        return len(self.states)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash((self.states.tobytes(), self.actions.tobytes()))

    @property
    def start(self) -> int:
        return int(self.states[0])

    def to_list(self) -> list[list[int]]:
        return [[int(s), int(a)] for s, a in zip(self.states, self.actions)]

    @classmethod
    def from_list(cls, steps) -> "Trajectory":
        steps = np.asarray(steps, dtype=np.int64).reshape(-1, 2)
        return cls(steps[:, 0], steps[:, 1])


@dataclass(frozen=True)
class SoftValues:
    v_soft: np.ndarray
    q_soft: np.ndarray
    beta: float


def reward_vector(theta, phi: np.ndarray) -> np.ndarray:
    theta = check_weights(theta)
    if phi.shape[-1] != theta.shape[0]:
        raise ValueError(
            f"feature dimension {phi.shape[-1]} does not match weights {theta.shape[0]}"
        )
    return phi @ theta


def _terminal_value(mdp: Mdp, base: np.ndarray) -> np.ndarray:
    tb = base[mdp.terminal]
    if mdp.gamma < 1.0:
        return tb / (1.0 - mdp.gamma)
    if np.any(tb != 0):
        raise ValueError("nonzero terminal reward with gamma = 1 has no finite value")
    return tb


def _linear_fixed_point(mdp, P, base, tol, max_sweeps):
    """Iterate ``x <- base + gamma P x`` (terminal rows pinned) until the update is below tol."""
    base = np.array(base, dtype=float)
    base[mdp.terminal] = _terminal_value(mdp, base)
    x = base.copy()
    for _ in range(max_sweeps):
        x_new = base + mdp.gamma * (P @ x)
        delta = np.max(np.abs(x_new - x)) if x.size else 0.0
        x = x_new
        if delta <= tol:
            return x
        if not np.isfinite(delta):
            raise FloatingPointError("policy evaluation produced non-finite values")
    raise ConvergenceError(f"no convergence after {max_sweeps} sweeps (last change {delta:.3g})")


def policy_evaluation(mdp: Mdp, reward, policy, tol=EVAL_TOL, max_sweeps=MAX_SWEEPS):
    """State values of ``policy``; ``reward`` may be ``(S,)`` or ``(S, k)`` for k rewards at once."""
    policy = check_policy(policy, mdp.n_states, mdp.n_actions)
    return _linear_fixed_point(mdp, mdp.policy_matrix(policy), reward, tol, max_sweeps)


def expected_policy_value(values, p0) -> float:
    values, p0 = np.asarray(values, dtype=float), np.asarray(p0, dtype=float)
    if values.shape != p0.shape:
        raise ValueError("values and p0 must have the same shape")
    return float(p0 @ values)


def q_from_v(mdp: Mdp, reward, values) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    return reward[:, None] + mdp.gamma * mdp.expected_next(np.asarray(values, dtype=float))


def _greedy(q: np.ndarray, tie_tol: float = 1e-12) -> np.ndarray:
    # lowest index among near-maximal actions
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - tie_tol * np.maximum(1.0, np.abs(best)), axis=1)


def optimal_policy(mdp: Mdp, reward, tol=EVAL_TOL, max_iter=1_000):
    """Policy iteration. Returns a one-hot deterministic policy and its values."""
    reward = np.asarray(reward, dtype=float)
    S, A = mdp.n_states, mdp.n_actions
    actions = np.zeros(S, dtype=np.int64)
    rows = np.arange(S)
    for _ in range(max_iter):
        policy = np.zeros((S, A))
        policy[rows, actions] = 1.0
        values = _linear_fixed_point(mdp, mdp.policy_matrix(policy), reward, tol, MAX_SWEEPS)
        q = q_from_v(mdp, reward, values)
        greedy = _greedy(q)
        # only switch on strict improvement, so ties never cycle
        improve = q[rows, greedy] > q[rows, actions] + 1e-12 * np.maximum(1.0, np.abs(values))
        if not improve.any():
            # canonicalize ties toward the lowest index
            actions = greedy
            policy = np.zeros((S, A))
            policy[rows, actions] = 1.0
            return policy, values
        actions = np.where(improve, greedy, actions)
    raise ConvergenceError(f"policy iteration did not stabilize in {max_iter} rounds")


def optimal_action_policy(mdp: Mdp, reward, tie_tol=1e-9):
    """Optimal policy that spreads its mass uniformly over all optimal actions."""
    reward = np.asarray(reward, dtype=float)
    _, values = optimal_policy(mdp, reward)
    q = q_from_v(mdp, reward, values)
    best = q.max(axis=1, keepdims=True)
    mask = q >= best - tie_tol * np.maximum(1.0, np.abs(best))
    return mask / mask.sum(axis=1, keepdims=True)


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def soft_bellman(mdp: Mdp, reward, beta: float, tol=VALUE_TOL, max_sweeps=MAX_SWEEPS):
    """Soft value iteration on a reward vector ``(S,)`` or a batch ``(S, k)``.

    Returns ``(v_soft, q_soft)``; ``v_soft`` is the exact log-sum-exp of the
    returned ``q_soft`` at every non-terminal state.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    reward = np.asarray(reward, dtype=float)
    term = mdp.terminal
    v_term = _terminal_value(mdp, reward)
    R = reward[:, None]
    v = np.zeros_like(reward)
    v[term] = v_term
    for _ in range(max_sweeps):
        q = R + mdp.gamma * mdp.expected_next(v)
        v_new = _logsumexp(beta * q, axis=1) / beta
        v_new[term] = v_term
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta <= tol:
            break
        if not np.isfinite(delta):
            raise FloatingPointError("soft values became non-finite (reward scale too large)")
    else:
        raise ConvergenceError(f"soft value iteration did not converge in {max_sweeps} sweeps")
    q = R + mdp.gamma * mdp.expected_next(v)
    v = _logsumexp(beta * q, axis=1) / beta
    v[term] = v_term
    return v, q


def mce_policy(mdp: Mdp, v_soft: np.ndarray, q_soft: np.ndarray, beta: float) -> np.ndarray:
    pi = np.exp(beta * (q_soft - v_soft[:, None]))
    pi[mdp.terminal] = 1.0 / mdp.n_actions
    return pi


def soft_value_iteration(mdp: Mdp, theta, phi, beta: float, tol=VALUE_TOL, max_sweeps=MAX_SWEEPS):
    """Soft values and the maximum-causal-entropy policy for reward ``phi @ theta``."""
    v, q = soft_bellman(mdp, reward_vector(theta, phi), beta, tol, max_sweeps)
    return SoftValues(v, q, float(beta)), mce_policy(mdp, v, q, beta)


def policy_entropy(policy: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(policy > 0, policy * np.log(policy), 0.0)
    return -terms.sum(axis=1)


def entropy_values(mdp: Mdp, policy, beta: float, tol=EVAL_TOL, max_sweeps=MAX_SWEEPS):
    """Discounted entropy bonus ``(1/beta) H`` accumulated by ``policy`` (the reward-free part)."""
    policy = check_policy(policy, mdp.n_states, mdp.n_actions)
    bonus = policy_entropy(policy) / beta
    bonus[mdp.terminal] = 0.0
    return _linear_fixed_point(mdp, mdp.policy_matrix(policy), bonus, tol, max_sweeps)


def soft_policy_evaluation(mdp: Mdp, reward, policy, beta: float, tol=EVAL_TOL, max_sweeps=MAX_SWEEPS):
    if beta <= 0:
        raise ValueError("beta must be positive")
    policy = check_policy(policy, mdp.n_states, mdp.n_actions)
    bonus = policy_entropy(policy) / beta
    bonus[mdp.terminal] = 0.0
    base = np.asarray(reward, dtype=float) + bonus
    return _linear_fixed_point(mdp, mdp.policy_matrix(policy), base, tol, max_sweeps)


def trajectory_feature_counts(traj: Trajectory, phi: np.ndarray, gamma: float) -> np.ndarray:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    discounts = gamma ** np.arange(len(traj))
    return discounts @ phi[traj.states]


def policy_feature_counts(mdp: Mdp, policy, phi, tol=EVAL_TOL, max_sweeps=MAX_SWEEPS):
    """Per-state discounted feature expectations ``mu(pi, s)``, shape ``(S, d)``."""
    return policy_evaluation(mdp, phi, policy, tol, max_sweeps)


def evd_hard(mdp: Mdp, theta, phi, pi_eval, s: int) -> float:
    reward = reward_vector(theta, phi)
    _, v_opt = optimal_policy(mdp, reward)
    v_eval = policy_evaluation(mdp, reward, pi_eval)
    return float(v_opt[s] - v_eval[s])


def evd_soft(mdp: Mdp, theta, phi, pi_eval, s: int, beta: float) -> float:
    sv, _ = soft_value_iteration(mdp, theta, phi, beta)
    v_eval = soft_policy_evaluation(mdp, reward_vector(theta, phi), pi_eval, beta)
    return float(sv.v_soft[s] - v_eval[s])


def optimal_values_batch(mdp: Mdp, rewards, tol=VALUE_TOL, max_sweeps=MAX_SWEEPS):
    """Optimal state values for each column of ``rewards`` (value iteration)."""
    rewards = np.asarray(rewards, dtype=float)
    term = mdp.terminal
    v_term = _terminal_value(mdp, rewards)
    v = np.zeros_like(rewards)
    v[term] = v_term
    for _ in range(max_sweeps):
        v_new = (rewards[:, None] + mdp.gamma * mdp.expected_next(v)).max(axis=1)
        v_new[term] = v_term
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta <= tol:
            return v
        if not np.isfinite(delta):
            raise FloatingPointError("values became non-finite")
    raise ConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps")


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # scaling by the row total keeps rounding from selecting past the last positive entry
    return (cdf <= (u * cdf[:, -1])[:, None]).sum(axis=1)


def sample_trajectories(mdp: Mdp, policy, starts, horizon: int, rng) -> list[Trajectory]:
    """Roll out ``policy`` for ``horizon`` steps from each start state, vectorized over starts."""
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    n = len(starts)
    pol_cdf = np.cumsum(policy, axis=1)
    states = np.empty((n, horizon), dtype=np.int64)
    actions = np.empty((n, horizon), dtype=np.int64)
    s = starts.copy()
    for t in range(horizon):
        a = _inverse_cdf(pol_cdf[s], rng.random(n))
        states[:, t], actions[:, t] = s, a
        s = _inverse_cdf(np.cumsum(mdp.transition[s, a], axis=1), rng.random(n))
    return [Trajectory(states[i], actions[i]) for i in range(n)]


def rollout(mdp: Mdp, policy, start: int, horizon: int, rng) -> Trajectory:
    return sample_trajectories(mdp, policy, [start], horizon, rng)[0]
