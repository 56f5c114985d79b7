"""Interactive machine teaching of an inverse-RL learner on a tabular car-driving benchmark."""

from .active import (
    InteractiveVaR,
    PosteriorMode,
    WeightSampleSet,
    interactive_var,
    posterior_update,
    posterior_weights,
    sample_l1_sphere,
    select_query_state,
    weighted_var,
)
from .config import VARIANTS, ConfigError, ExperimentConfig, child_rng, derive_seed
from .env import CarEnv, RoadSpec, build_env, env_from_roads, generate_road, load_env, true_weights
from .harness import RunSummary, emit_outputs, run_experiments, summarize_thresholds
from .irl import MaxCausalEntropyIRL, batch_mce_irl, interactive_mce, mce_gradient
from .learner import CrossEntBCLearner
from .mdp import (
    Mdp,
    Trajectory,
    evd_hard,
    evd_soft,
    expected_policy_value,
    optimal_policy,
    policy_evaluation,
    policy_feature_counts,
    soft_value_iteration,
)
from .teaching import DemoPool, SessionRecord, build_pool, dsr_select, run_session
from .validation import ConvergenceError

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
