"""Input validation helpers shared by the estimators and DP routines."""

from __future__ import annotations

import numpy as np

POLICY_ATOL = 1e-9


class ConvergenceError(RuntimeError):
    """A fixed-point iteration hit its sweep cap before reaching tolerance."""


def check_weights(theta, d: int | None = None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1:
        raise ValueError(f"weights must be a 1-d vector, got shape {theta.shape}")
    if d is not None and theta.shape[0] != d:
        raise ValueError(f"weights have dimension {theta.shape[0]}, features have {d}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("weights contain non-finite entries")
    return theta


def check_policy(policy, n_states: int, n_actions: int) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (n_states, n_actions):
        raise ValueError(
            f"policy has shape {policy.shape}, expected {(n_states, n_actions)}"
        )
    if np.any(policy < -POLICY_ATOL) or np.any(policy > 1 + POLICY_ATOL):
        raise ValueError("policy entries must lie in [0, 1]")
    if not np.allclose(policy.sum(axis=1), 1.0, rtol=0.0, atol=POLICY_ATOL):
        raise ValueError("policy rows must sum to 1")
    return policy


def check_trajectory(traj, mdp) -> None:
    """Raise if ``traj`` uses unknown states/actions or impossible transitions."""
    s, a = traj.states, traj.actions
    if len(s) == 0:
        raise ValueError("empty trajectory")
    if s.min() < 0 or s.max() >= mdp.n_states:
        raise ValueError("trajectory state out of range")
    if a.min() < 0 or a.max() >= mdp.n_actions:
        raise ValueError("trajectory action out of range")
    probs = mdp.transition[s[:-1], a[:-1], s[1:]]
    if np.any(probs <= 0):
        t = int(np.flatnonzero(probs <= 0)[0])
        raise ValueError(f"impossible transition at step {t}: {s[t]} -> {s[t + 1]}")

