"""Demonstration selection and the teacher-learner session loop.

Every iteration: the teacher picks a query state, the learner answers with
one trajectory from it, the teacher updates its estimate of the learner's
policy, picks a demonstration, and the learner learns from it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .active import InteractiveVaR, PosteriorMode
from .config import ExperimentConfig, child_rng
from .env import CarEnv, true_weights
from .irl import MaxCausalEntropyIRL
from .learner import CrossEntBCLearner
from .mdp import (
    Trajectory,
    expected_policy_value,
    optimal_action_policy,
    optimal_policy,
    policy_evaluation,
    sample_trajectories,
    soft_value_iteration,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantSpec:
    tag: str
    al: str | None  # "random", "active_var", "interactive_var"
    irl: str | None  # "batch_mce", "interactive_mce", "exact"
    mt: str  # "random", "dsr"


TEACHERS = {
    "Agn": VariantSpec("Agn", None, None, "random"),
    "Rnd": VariantSpec("Rnd", "random", "interactive_mce", "dsr"),
    "NoE": VariantSpec("NoE", "active_var", "batch_mce", "dsr"),
    "Var": VariantSpec("Var", "interactive_var", "interactive_mce", "dsr"),
    "Cur": VariantSpec("Cur", None, "exact", "dsr"),
}


def difficulty_score(xi: Trajectory, pi: np.ndarray) -> float:
    """``log Psi = -sum_t log pi(a_t | s_t)``; ``inf`` if any step has probability zero."""
    with np.errstate(divide="ignore"):
        return float(-np.log(pi[xi.states, xi.actions]).sum())


@dataclass
class DemoPool:
    candidates: list[Trajectory]
    log_psi_teacher: np.ndarray
    states: np.ndarray = field(init=False, repr=False)
    actions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("empty demonstration pool")
        self.states = np.stack([xi.states for xi in self.candidates])
        self.actions = np.stack([xi.actions for xi in self.candidates])

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i) -> Trajectory:
        return self.candidates[i]

    def log_psi(self, pi: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log(pi[self.states, self.actions]).sum(axis=1)


def build_pool(mdp, pi_teacher, per_road: int, rng, horizon: int = 10) -> DemoPool:
    """``per_road`` rollouts of the teacher policy from every initial state."""
    if per_road < 1:
        raise ValueError("per_road must be at least 1")
    starts = np.repeat(mdp.initial_states, per_road)
    cands = sample_trajectories(mdp, pi_teacher, starts, horizon, rng)
    pool = DemoPool(cands, np.zeros(len(cands)))
    pool.log_psi_teacher = pool.log_psi(pi_teacher)
    return pool


def dsr_select(pool: DemoPool, pi_hat_learner, pi_teacher=None) -> int:
    """Index of the candidate maximizing the difficulty-score ratio learner/teacher.

    Candidates the teacher itself could not produce are skipped. A candidate
    the estimated learner deems impossible wins outright.
    """
    psi_t = pool.log_psi_teacher if pi_teacher is None else pool.log_psi(pi_teacher)
    psi_l = pool.log_psi(pi_hat_learner)
    feasible = np.isfinite(psi_t)
    if not feasible.any():
        raise ValueError("no candidate in the pool is feasible under the teacher policy")
    certain_win = feasible & np.isinf(psi_l)
    if certain_win.any():
        return int(np.flatnonzero(certain_win)[0])
    ratio = np.where(feasible, psi_l - psi_t, -np.inf)
    return int(np.argmax(ratio))


def teacher_demo_agnostic(mdp, pi_opt, rng, horizon: int = 10) -> Trajectory:
    start = int(rng.choice(mdp.initial_states))
    return sample_trajectories(mdp, pi_opt, [start], horizon, rng)[0]


@dataclass
class IterationRecord:
    iteration: int
    query_state: int | None
    learner_trajectory: list | None
    theta_hat: list | None
    demo_index: int | None
    learner_loss: float
    teacher_estimate_loss: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class SessionRecord:
    variant: str
    seed: int
    eps: list
    max_iters: int
    iterations: list[IterationRecord] = field(default_factory=list)
    crossings: dict = field(default_factory=dict)
    learner_theta: list | None = None
    status: str = "ok"
    error: str | None = None
    config: dict | None = None

    @property
    def learner_losses(self) -> np.ndarray:
        return np.array([it.learner_loss for it in self.iterations])

    @property
    def teacher_losses(self) -> np.ndarray:
        return np.array([it.teacher_estimate_loss for it in self.iterations])

    def to_lines(self) -> list[dict]:
        """One JSON object per iteration, each tagged with the session key."""
        head = {"variant": self.variant, "seed": self.seed}
        return [{**head, **it.to_dict()} for it in self.iterations]

    def header(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "n_iterations": len(self.iterations),
            "crossings": {str(e): c for e, c in self.crossings.items()},
            "learner_theta": self.learner_theta,
        }


def first_crossings(losses, eps_list) -> dict:
    """First 1-based iteration with loss strictly below each threshold (``None`` if never)."""
    losses = np.asarray(losses)
    out = {}
    for e in eps_list:
        hit = np.flatnonzero(losses < e)
        out[e] = int(hit[0]) + 1 if hit.size else None
    return out


class Evaluator:
    """Omniscient scorer: reads policies directly, which the teacher cannot."""

    def __init__(self, env: CarEnv):
        self.mdp = env.mdp
        self.reward = env.phi @ true_weights()
        self.pi_star, v = optimal_policy(self.mdp, self.reward)
        self.v_star = expected_policy_value(v, self.mdp.p0)
        self.pi_star_ties = optimal_action_policy(self.mdp, self.reward)

    def value(self, pi) -> float:
        return expected_policy_value(policy_evaluation(self.mdp, self.reward, pi), self.mdp.p0)

    def loss(self, pi) -> float:
        return self.v_star - self.value(pi)


def make_learner(env: CarEnv, config: ExperimentConfig, seed: int) -> CrossEntBCLearner:
    learner = CrossEntBCLearner(
        eta=config.learner_eta,
        eta_decay=config.learner_eta_decay,
        radius=config.learner_radius,
        init_scale=config.learner_init_scale,
        steps_per_demo=config.learner_steps_per_demo,
        horizon=env.horizon,
    )
    return learner.initialize(env.mdp, env.phi, child_rng(seed, "learner"))


def teacher_policy(env: CarEnv, config: ExperimentConfig, evaluator: Evaluator | None = None):
    """Policy that generates the demonstration pool and scores its difficulty for the teacher."""
    if config.pool_policy == "optimal":
        return (evaluator or Evaluator(env)).pi_star_ties
    _, pi = soft_value_iteration(env.mdp, true_weights(), env.phi, config.beta)
    return pi


def run_session(env: CarEnv, learner: CrossEntBCLearner, variant: str, config: ExperimentConfig, seed: int) -> SessionRecord:
    """Run one teacher variant against ``learner`` (mutated in place)."""
    spec = TEACHERS[variant]
    mdp, phi = env.mdp, env.phi
    evaluator = Evaluator(env)
    record = SessionRecord(variant, seed, list(config.eps), config.max_iters)

    query_rng = child_rng(seed, "query")
    rollout_rng = child_rng(seed, "rollout")
    demo_rng = child_rng(seed, "demo")

    if spec.mt == "dsr":
        pool = build_pool(mdp, teacher_policy(env, config, evaluator), config.pool_per_road,
                          child_rng(seed, "pool"), env.horizon)

    estimator = None
    if spec.irl in ("batch_mce", "interactive_mce") or spec.irl is None:
        estimator = MaxCausalEntropyIRL(
            beta=config.beta,
            n_iter=config.mce_iters,
            step=config.mce_step,
            step_decay=config.mce_step_decay,
            old_weight=config.old_weight,
        ).initialize(mdp, phi)

    selector = None
    if spec.al in ("active_var", "interactive_var"):
        mode = (
            PosteriorMode.interactive(config.beta, config.lam)
            if spec.al == "interactive_var"
            else PosteriorMode.unmodified(config.beta, config.c)
        )
        selector = InteractiveVaR(config.n_weight_samples, config.sphere_radius, config.alpha, mode)
        selector.fit(mdp, phi, child_rng(seed, "sampler"))

    history: list[Trajectory] = []
    for i in range(1, config.max_iters + 1):
        # AL: pick where the learner should start its trajectory
        query = None
        if spec.al == "random":
            query = int(query_rng.choice(mdp.initial_states))
        elif selector is not None:
            if history:
                selector.partial_fit(history[-1])
            query = selector.query(estimator.policy_, query_rng)

        pi_learner = learner.predict_proba()
        xi = None
        if query is not None:
            xi = learner.rollout(query, rollout_rng)
            history.append(xi)

        # IRL: update the estimate of the learner's policy
        if spec.irl == "interactive_mce":
            estimator.partial_fit(xi)
        elif spec.irl == "batch_mce":
            estimator.fit(history)
        pi_hat = pi_learner if spec.irl == "exact" else estimator.policy_

        # MT: choose and send a demonstration
        if spec.mt == "dsr":
            demo_index = dsr_select(pool, pi_hat)
            demo = pool[demo_index]
        else:
            demo_index = None
            demo = teacher_demo_agnostic(mdp, evaluator.pi_star_ties, demo_rng, env.horizon)
        learner.partial_fit(demo)

        teacher_loss = 0.0 if spec.irl == "exact" else abs(evaluator.value(pi_learner) - evaluator.value(pi_hat))
        record.iterations.append(
            IterationRecord(
                iteration=i,
                query_state=query,
                learner_trajectory=xi.to_list() if xi is not None else None,
                theta_hat=estimator.theta_.tolist() if estimator is not None else None,
                demo_index=demo_index,
                learner_loss=evaluator.loss(learner.predict_proba()),
                teacher_estimate_loss=teacher_loss,
            )
        )
        record.crossings = first_crossings(record.learner_losses, config.eps)
        if config.stop_at_goal and all(c is not None for c in record.crossings.values()):
            break

    record.learner_theta = learner.theta_.tolist()
    log.debug("session %s seed=%d finished after %d iterations", variant, seed, len(record.iterations))
    return record
