"""Cross-entropy behavioral-cloning learner with a linear softmax policy."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .mdp import Mdp, Trajectory, _logsumexp, sample_trajectories
from .validation import check_trajectory


def successor_features(mdp: Mdp, phi: np.ndarray) -> np.ndarray:
    """``phi_ce[s, a] = E[phi(s') | s, a]``, shape ``(S, A, d)``."""
    return mdp.expected_next(phi)


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(theta)
    if norm > radius:
        return theta * (radius / norm)
    return theta


class CrossEntBCLearner(BaseEstimator):
    """Softmax policy over successor-feature scores ``theta . phi_ce(s, a)``.

    Each demonstration triggers ``steps_per_demo`` projected gradient-ascent
    steps on its log-likelihood, projected back onto the L2 ball of ``radius``.

    Parameters
    ----------
    eta : float
        Gradient step size.
    eta_decay : float
        The step for the n-th demonstration is ``eta / (1 + n * eta_decay)``;
        0 keeps it constant.
    radius : float
        Radius of the L2 ball the weights are kept in.
    init_scale : float
        Initial weights are drawn uniformly from ``(-init_scale, init_scale)``.
    steps_per_demo : int
        Number of ascent steps per received demonstration.
    horizon : int
        Rollout length used by :meth:`rollout`.
    """

    def __init__(self, eta=0.34, eta_decay=0.0, radius=100.0, init_scale=10.0, steps_per_demo=1, horizon=10):
        self.eta = eta
        self.eta_decay = eta_decay
        self.radius = radius
        self.init_scale = init_scale
        self.steps_per_demo = steps_per_demo
        self.horizon = horizon

    def initialize(self, mdp: Mdp, phi: np.ndarray, rng):
        self.mdp_ = mdp
        self.phi_ce_ = successor_features(mdp, phi)
        d = phi.shape[1]
        self.theta_ = rng.uniform(-self.init_scale, self.init_scale, size=d)
        self.n_demos_ = 0
        return self

    def fit(self, mdp: Mdp, phi: np.ndarray, demos=(), rng=None):
        """Draw fresh initial weights, then learn from ``demos`` in order."""
        rng = np.random.default_rng(rng)
        self.initialize(mdp, phi, rng)
        for demo in demos:
            self.partial_fit(demo)
        return self

    def _scores(self, theta=None):
        theta = self.theta_ if theta is None else theta
        return self.phi_ce_ @ theta

    def predict_log_proba(self, states=None, theta=None) -> np.ndarray:
        check_is_fitted(self, "theta_")
        h = self._scores(theta)
        if states is not None:
            h = h[states]
        return h - _logsumexp(h, axis=1)[:, None]

    def predict_proba(self, states=None, theta=None) -> np.ndarray:
        return np.exp(self.predict_log_proba(states, theta))

    def score(self, demo: Trajectory, theta=None) -> float:
        """Log-likelihood ``sum_t log pi(a_t | s_t)`` of a demonstration."""
        logp = self.predict_log_proba(demo.states, theta)
        return float(logp[np.arange(len(demo)), demo.actions].sum())

    def gradient(self, demo: Trajectory, theta=None) -> np.ndarray:
        check_is_fitted(self, "theta_")
        feats = self.phi_ce_[demo.states]  # (T, A, d)
        probs = self.predict_proba(demo.states, theta)
        observed = feats[np.arange(len(demo)), demo.actions]
        expected = np.einsum("ta,tad->td", probs, feats)
        return (observed - expected).sum(axis=0)

    def partial_fit(self, demo: Trajectory):
        check_is_fitted(self, "theta_")
        check_trajectory(demo, self.mdp_)
        eta = self.eta / (1.0 + self.n_demos_ * self.eta_decay)
        for _ in range(self.steps_per_demo):
            self.theta_ = project_ball(self.theta_ + eta * self.gradient(demo), self.radius)
        self.n_demos_ += 1
        return self

    def rollout(self, start: int, rng) -> Trajectory:
        check_is_fitted(self, "theta_")
        if self.mdp_.p0[start] <= 0:
            raise ValueError(f"state {start} is not an initial state")
        return sample_trajectories(self.mdp_, self.predict_proba(), [start], self.horizon, rng)[0]
