"""Maximum-causal-entropy IRL: the batch algorithm and its one-trajectory interactive variant.

The ascent direction ``mu(xi) - mu(pi_theta, s0)`` is the gradient of the
discounted causal log-likelihood

    sum_t gamma^t [Q_soft(s_t, a_t) - V_soft(s_t)]  =  theta . mu(xi) - V_soft(s0)

for trajectories that end in a terminal state (exactly, under deterministic
dynamics; in expectation otherwise). That objective is concave in theta since
``V_soft(s0)`` is convex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .mdp import (
    Mdp,
    Trajectory,
    mce_policy,
    policy_feature_counts,
    soft_bellman,
    trajectory_feature_counts,
)


@dataclass(frozen=True)
class IrlEstimate:
    theta_hat: np.ndarray
    pi_hat: np.ndarray
    beta: float
    v_soft: np.ndarray
    q_soft: np.ndarray


def estimate_for(theta, mdp: Mdp, phi, beta: float) -> IrlEstimate:
    theta = np.asarray(theta, dtype=float)
    v, q = soft_bellman(mdp, phi @ theta, beta)
    return IrlEstimate(theta, mce_policy(mdp, v, q, beta), float(beta), v, q)


def _moments(trajectories, phi, gamma):
    mu = np.array([trajectory_feature_counts(xi, phi, gamma) for xi in trajectories])
    starts = np.array([xi.start for xi in trajectories])
    return mu, starts


def _gradient_at(est: IrlEstimate, mu_xi, starts, mdp, phi, weights=None):
    mu_pi = policy_feature_counts(mdp, est.pi_hat, phi)
    diff = mu_xi - mu_pi[starts]
    if weights is None:
        return diff.mean(axis=0)
    return weights @ diff


def mce_gradient(trajectories, theta, mdp: Mdp, phi, beta: float) -> np.ndarray:
    """``mean_xi (mu(xi) - mu(pi_theta, s0(xi)))`` under the MCE policy for ``theta``."""
    trajectories = list(trajectories)
    if not trajectories or any(len(xi) == 0 for xi in trajectories):
        raise ValueError("need at least one non-empty trajectory")
    mu_xi, starts = _moments(trajectories, phi, mdp.gamma)
    return _gradient_at(estimate_for(theta, mdp, phi, beta), mu_xi, starts, mdp, phi)


def mce_objective(trajectories, theta, mdp: Mdp, phi, beta: float) -> float:
    """Mean discounted causal log-likelihood (in units of 1/beta) whose gradient is :func:`mce_gradient`."""
    est = estimate_for(theta, mdp, phi, beta)
    adv = est.q_soft - est.v_soft[:, None]
    total = 0.0
    for xi in trajectories:
        disc = mdp.gamma ** np.arange(len(xi))
        total += disc @ adv[xi.states, xi.actions]
    return total / len(trajectories)


def trajectory_log_likelihood(xi: Trajectory, pi: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.log(pi[xi.states, xi.actions]).sum())


def step_size(step: float, n: int, decay: float = 0.0) -> float:
    return step / (1.0 + n * decay)


def _ascend(est, mu_xi, starts, mdp, phi, iters, step, decay, weights=None, extra=None):
    if iters < 1:
        raise ValueError("iters must be at least 1")
    theta = est.theta_hat
    for n in range(iters):
        grad = _gradient_at(est, mu_xi, starts, mdp, phi, weights)
        if extra is not None:
            grad = grad + extra(est)
        theta = theta + step_size(step, n, decay) * grad
        if not np.all(np.isfinite(theta)):
            raise FloatingPointError("MCE ascent diverged; reduce the step size")
        est = estimate_for(theta, mdp, phi, est.beta)
    return est


def batch_mce_irl(trajectories, theta_init, mdp: Mdp, phi, beta=1.0, iters=100, step=0.1, step_decay=0.0):
    """Plain MCE-IRL gradient ascent on all trajectories with equal weight."""
    trajectories = list(trajectories)
    mu_xi, starts = _moments(trajectories, phi, mdp.gamma)
    est = estimate_for(theta_init, mdp, phi, beta)
    return _ascend(est, mu_xi, starts, mdp, phi, iters, step, step_decay)


def interactive_mce(
    xi_new: Trajectory,
    prev: IrlEstimate,
    mdp: Mdp,
    phi,
    iters=100,
    step=0.1,
    step_decay=0.0,
    history=(),
    old_weight=0.0,
):
    """Warm-started MCE ascent using only ``xi_new`` as evidence.

    With ``old_weight > 0`` the averaged gradient of ``history`` is mixed in
    with that weight.
    """
    mu_new, start_new = _moments([xi_new], phi, mdp.gamma)
    extra = None
    history = list(history)
    if old_weight > 0 and history:
        mu_old, starts_old = _moments(history, phi, mdp.gamma)

        def extra(est):
            return old_weight * _gradient_at(est, mu_old, starts_old, mdp, phi)

    return _ascend(prev, mu_new, start_new, mdp, phi, iters, step, step_decay, extra=extra)


class MaxCausalEntropyIRL(BaseEstimator):
    """Estimator wrapper around the MCE-IRL routines.

    :meth:`fit` runs batch MCE-IRL on a trajectory set; :meth:`partial_fit`
    runs the interactive variant on one new trajectory, warm-started from the
    current weights.
    """

    def __init__(
        self, beta=1.0, n_iter=100, step=0.1, step_decay=0.0, warm_start=True, old_weight=0.0, n_old=5
    ):
        self.beta = beta
        self.n_iter = n_iter
        self.step = step
        self.step_decay = step_decay
        self.warm_start = warm_start
        self.old_weight = old_weight
        self.n_old = n_old

    def initialize(self, mdp: Mdp, phi, theta=None):
        self.mdp_, self.phi_ = mdp, phi
        theta = np.zeros(phi.shape[1]) if theta is None else theta
        self._set(estimate_for(theta, mdp, phi, self.beta))
        self.history_ = []
        return self

    def _set(self, est: IrlEstimate):
        self.estimate_ = est
        self.theta_ = est.theta_hat
        self.policy_ = est.pi_hat

    def fit(self, trajectories, mdp: Mdp = None, phi=None):
        if mdp is not None:
            if not (self.warm_start and getattr(self, "mdp_", None) is mdp):
                self.initialize(mdp, phi)
        check_is_fitted(self, "theta_")
        trajectories = list(trajectories)
        est = batch_mce_irl(
            trajectories, self.theta_, self.mdp_, self.phi_, self.beta, self.n_iter, self.step, self.step_decay
        )
        self._set(est)
        self.history_ = trajectories
        return self

    def partial_fit(self, trajectory: Trajectory, mdp: Mdp = None, phi=None):
        if mdp is not None and getattr(self, "mdp_", None) is not mdp:
            self.initialize(mdp, phi)
        check_is_fitted(self, "theta_")
        est = interactive_mce(
            trajectory,
            self.estimate_,
            self.mdp_,
            self.phi_,
            self.n_iter,
            self.step,
            self.step_decay,
            history=self.history_[-self.n_old :] if self.n_old else (),
            old_weight=self.old_weight,
        )
        self._set(est)
        self.history_.append(trajectory)
        return self

    def predict_proba(self, states=None):
        check_is_fitted(self, "theta_")
        return self.policy_ if states is None else self.policy_[states]

    def score(self, trajectories):
        """Mean per-trajectory log-likelihood under the current MCE policy."""
        check_is_fitted(self, "theta_")
        return float(np.mean([trajectory_log_likelihood(xi, self.policy_) for xi in trajectories]))
