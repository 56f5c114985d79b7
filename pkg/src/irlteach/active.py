"""Query-state selection by value-at-risk of the expected value difference.

A fixed set of reward weights is sampled on an L1 sphere once per session.
Each sample carries a log-likelihood accumulator updated with every learner
trajectory, optionally decayed so that old trajectories (produced by older
learner policies) count less. The query state is the initial state whose
posterior VaR of the EVD of the current policy estimate is largest.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .mdp import (
    Mdp,
    Trajectory,
    _logsumexp,
    entropy_values,
    optimal_values_batch,
    policy_feature_counts,
    soft_bellman,
)

DECAYS = ("none", "last_n", "exponential")
LIKELIHOODS = ("mce", "softmax")
EVDS = ("soft", "hard")


@dataclass(frozen=True)
class PosteriorMode:
    """How trajectories are scored and combined.

    ``decay`` is ``"none"`` (all trajectories weighted equally), ``"last_n"``
    (only the last ``window``) or ``"exponential"`` (weight ``lam**age``).
    ``likelihood`` is ``"mce"`` with entropy factor ``beta`` or ``"softmax"``
    over optimal Q-values with confidence ``c``.
    """

    decay: str = "exponential"
    lam: float = 0.4
    window: int = 1
    likelihood: str = "mce"
    beta: float = 1.0
    c: float = 1.0
    evd: str = "soft"

    def __post_init__(self):
        if self.decay not in DECAYS:
            raise ValueError(f"decay must be one of {DECAYS}")
        if self.likelihood not in LIKELIHOODS:
            raise ValueError(f"likelihood must be one of {LIKELIHOODS}")
        if self.evd not in EVDS:
            raise ValueError(f"evd must be one of {EVDS}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.beta <= 0 or self.c <= 0:
            raise ValueError("beta and c must be positive")

    @classmethod
    def interactive(cls, beta=1.0, lam=0.4):
        return cls("exponential", lam=lam, likelihood="mce", beta=beta, evd="soft")

    @classmethod
    def unmodified(cls, beta=1.0, c=None):
        return cls("none", likelihood="softmax", beta=beta, c=beta if c is None else c, evd="hard")


@dataclass
class WeightSampleSet:
    thetas: np.ndarray
    radius: float
    log_acc: np.ndarray = None
    v_soft: np.ndarray | None = None  # (S, n) soft values per sample
    v_star: np.ndarray | None = None  # (S, n) optimal values per sample
    recent: deque = field(default_factory=deque)
    n_updates: int = 0

    def __post_init__(self):
        if self.log_acc is None:
            self.log_acc = np.zeros(len(self.thetas))

    def __len__(self):
        return len(self.thetas)


def sample_l1_sphere(n: int, r: float, d: int, rng) -> WeightSampleSet:
    """Uniform samples on ``{theta : ||theta||_1 = r}``."""
    if n < 1 or r <= 0:
        raise ValueError("need n >= 1 and r > 0")
    mag = rng.standard_exponential((n, d))
    signs = np.where(rng.random((n, d)) < 0.5, -1.0, 1.0)
    x = mag * signs
    x *= r / np.abs(x).sum(axis=1, keepdims=True)
    return WeightSampleSet(x, float(r))


def prepare_cache(samples: WeightSampleSet, mode: PosteriorMode, mdp: Mdp, phi, chunk=1000):
    """Solve each sample's MDP once: soft values and/or optimal values, as the mode needs."""
    rewards = phi @ samples.thetas.T
    n = len(samples)
    need_soft = mode.likelihood == "mce" or mode.evd == "soft"
    need_star = mode.likelihood == "softmax" or mode.evd == "hard"
    if need_soft:
        samples.v_soft = np.empty_like(rewards)
        for lo in range(0, n, chunk):
            samples.v_soft[:, lo : lo + chunk] = soft_bellman(mdp, rewards[:, lo : lo + chunk], mode.beta)[0]
    if need_star:
        samples.v_star = np.empty_like(rewards)
        for lo in range(0, n, chunk):
            samples.v_star[:, lo : lo + chunk] = optimal_values_batch(mdp, rewards[:, lo : lo + chunk])
    return samples


def _step_logliks(q: np.ndarray, actions: np.ndarray, scale: float) -> np.ndarray:
    # q: (T, A, n) -> sum_t log softmax(scale * q)[a_t], per sample
    z = scale * q
    lse = _logsumexp(z, axis=1)
    chosen = z[np.arange(len(actions)), actions]
    return (chosen - lse).sum(axis=0)


def _q_rows(xi: Trajectory, thetas, values, mdp: Mdp, phi):
    """Q(s_t, ., theta_j) for every trajectory step and sample: shape (T, A, n)."""
    r = phi[xi.states] @ thetas.T  # (T, n)
    A = mdp.n_actions
    rows = (xi.states[:, None] * A + np.arange(A)).ravel()
    ev = (mdp.flat_transition[rows] @ values).reshape(len(xi), A, -1)
    return r[:, None, :] + mdp.gamma * ev


def sample_logliks(samples: WeightSampleSet, xi: Trajectory, mode: PosteriorMode, mdp: Mdp, phi):
    """Trajectory log-likelihood under every sample, using the cached values."""
    if mode.likelihood == "mce":
        q = _q_rows(xi, samples.thetas, samples.v_soft, mdp, phi)
        return _step_logliks(q, xi.actions, mode.beta)
    q = _q_rows(xi, samples.thetas, samples.v_star, mdp, phi)
    return _step_logliks(q, xi.actions, mode.c)


def trajectory_loglik(xi: Trajectory, theta, mode: PosteriorMode, mdp: Mdp, phi) -> float:
    """Log-likelihood of one trajectory for one weight vector (solves the MDP)."""
    theta = np.asarray(theta, dtype=float)[None, :]
    reward = phi @ theta.T
    if mode.likelihood == "mce":
        v, _ = soft_bellman(mdp, reward, mode.beta)
        scale = mode.beta
    else:
        v = optimal_values_batch(mdp, reward)
        scale = mode.c
    return float(_step_logliks(_q_rows(xi, theta, v, mdp, phi), xi.actions, scale)[0])


def posterior_update(samples: WeightSampleSet, xi: Trajectory, mode: PosteriorMode, mdp: Mdp, phi, logliks=None):
    """Fold a new trajectory into the per-sample accumulators (in place; returns ``samples``)."""
    ll = sample_logliks(samples, xi, mode, mdp, phi) if logliks is None else np.asarray(logliks)
    if mode.decay == "exponential":
        samples.log_acc = mode.lam * samples.log_acc + ll
    elif mode.decay == "none":
        samples.log_acc = samples.log_acc + ll
    else:
        samples.recent.append(ll)
        while len(samples.recent) > mode.window:
            samples.recent.popleft()
        samples.log_acc = np.sum(samples.recent, axis=0)
    samples.n_updates += 1
    return samples


def posterior_weights(samples: WeightSampleSet) -> np.ndarray:
    acc = samples.log_acc
    top = np.max(acc)
    if not np.isfinite(top):
        raise FloatingPointError("no sample can explain the trajectories (all log-likelihoods are -inf)")
    w = np.exp(acc - top)
    return w / w.sum()


def weighted_var(values, weights, alpha: float, tol: float = 1e-12) -> float:
    """Smallest sample value ``v`` with ``sum(w[values <= v]) >= alpha``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise ValueError("empty input")
    order = np.argsort(values, kind="stable")
    v, cum = values[order], np.cumsum(weights[order])
    # a threshold v covers every tie at v, so use the cumulative mass at the last tie
    last_of_tie = np.r_[v[1:] != v[:-1], True]
    ok = (cum >= alpha - tol) & last_of_tie
    idx = np.flatnonzero(ok)
    return float(v[idx[0]] if idx.size else v[-1])


def evd_matrix(samples: WeightSampleSet, pi_hat: np.ndarray, states, mode: PosteriorMode, mdp: Mdp, phi):
    """EVD of ``pi_hat`` at ``states`` for every sample, shape ``(len(states), n)``.

    Values of a fixed policy are linear in the weights, so one feature-count
    evaluation (plus one entropy evaluation for soft EVD) covers all samples.
    """
    states = np.asarray(states)
    mu = policy_feature_counts(mdp, pi_hat, phi)[states]
    v_eval = mu @ samples.thetas.T
    if mode.evd == "soft":
        v_eval = v_eval + entropy_values(mdp, pi_hat, mode.beta)[states][:, None]
        return samples.v_soft[states] - v_eval
    return samples.v_star[states] - v_eval


def select_query_state(samples: WeightSampleSet, pi_hat, mode: PosteriorMode, mdp: Mdp, phi, alpha=0.95) -> int:
    starts = mdp.initial_states
    w = posterior_weights(samples)
    evd = evd_matrix(samples, pi_hat, starts, mode, mdp, phi)
    risk = np.array([weighted_var(row, w, alpha) for row in evd])
    return int(starts[np.argmax(risk)])


def interactive_var(history, prev_pi_hat, samples: WeightSampleSet, mode: PosteriorMode, mdp: Mdp, phi, rng, alpha=0.95):
    """One AL step: random start before any feedback, then VaR-maximizing start.

    Expects to be called once per iteration with the full trajectory history;
    the newest trajectory is folded into the posterior first.
    """
    if len(history) == 0:
        return int(rng.choice(mdp.initial_states))
    posterior_update(samples, history[-1], mode, mdp, phi)
    return select_query_state(samples, prev_pi_hat, mode, mdp, phi, alpha)


class InteractiveVaR(BaseEstimator):
    """Estimator-style wrapper: :meth:`fit` samples and caches the weights,
    :meth:`partial_fit` absorbs a learner trajectory, :meth:`query` picks a start."""

    def __init__(self, n_samples=5000, radius=24.0, alpha=0.95, mode=None):
        self.n_samples = n_samples
        self.radius = radius
        self.alpha = alpha
        self.mode = mode

    def fit(self, mdp: Mdp, phi, rng):
        self.mode_ = self.mode or PosteriorMode.interactive()
        self.mdp_, self.phi_ = mdp, phi
        self.samples_ = sample_l1_sphere(self.n_samples, self.radius, phi.shape[1], rng)
        prepare_cache(self.samples_, self.mode_, mdp, phi)
        return self

    def partial_fit(self, trajectory: Trajectory):
        check_is_fitted(self, "samples_")
        posterior_update(self.samples_, trajectory, self.mode_, self.mdp_, self.phi_)
        return self

    def query(self, pi_hat, rng) -> int:
        check_is_fitted(self, "samples_")
        if self.samples_.n_updates == 0:
            return int(rng.choice(self.mdp_.initial_states))
        return select_query_state(self.samples_, pi_hat, self.mode_, self.mdp_, self.phi_, self.alpha)
