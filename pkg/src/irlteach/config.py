"""Experiment configuration, seeding and the quick CI profile."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .env import DEFAULT_DENSITIES

VARIANTS = ("Agn", "Rnd", "NoE", "Var", "Cur")

# child stream ids; the offset multiplier is a large odd constant
STREAMS = {"env": 1, "learner": 2, "pool": 3, "sampler": 4, "query": 5, "rollout": 6, "demo": 7}
_ODD = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    pass


def derive_seed(seed: int, component: str | int) -> int:
    cid = STREAMS[component] if isinstance(component, str) else int(component)
    return (int(seed) + cid * _ODD) & _MASK


def child_rng(seed: int, component: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, component))


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    n_seeds: int = 16
    variants: list = field(default_factory=lambda: list(VARIANTS))
    roads_per_type: int = 5
    densities: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_DENSITIES)))
    gamma: float = 0.99
    beta: float = 1.0
    lam: float = 0.4
    alpha: float = 0.95
    n_weight_samples: int = 5000
    sphere_radius: float = 24.0
    softmax_c: float | None = None
    mce_iters: int = 100
    mce_step: float = 0.1
    mce_step_decay: float = 0.0
    old_weight: float = 0.0
    learner_eta: float = 0.34
    learner_eta_decay: float = 0.0
    learner_radius: float = 100.0
    learner_init_scale: float = 10.0
    learner_steps_per_demo: int = 3
    pool_per_road: int = 10
    pool_policy: str = "optimal"
    max_iters: int = 120
    eps: list = field(default_factory=lambda: [2.0, 1.0, 0.5])
    stop_at_goal: bool = True
    n_workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown or not self.variants:
            raise ConfigError(f"unknown variants {unknown}; choose from {VARIANTS}")
        positive = (
            "n_seeds roads_per_type beta alpha n_weight_samples sphere_radius mce_iters "
            "mce_step learner_eta learner_radius learner_init_scale learner_steps_per_demo "
            "pool_per_road max_iters n_workers"
        ).split()
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 < self.gamma <= 1 or not 0 < self.lam <= 1 or not 0 < self.alpha <= 1:
            raise ConfigError("gamma, lam and alpha must lie in (0, 1]")
        if self.pool_policy not in ("optimal", "mce"):
            raise ConfigError("pool_policy must be 'optimal' or 'mce'")
        if self.softmax_c is not None and self.softmax_c <= 0:
            raise ConfigError("softmax_c must be positive")
        if not self.eps or any(e <= 0 for e in self.eps):
            raise ConfigError("eps must be a non-empty list of positive thresholds")
        if min(self.mce_step_decay, self.old_weight, self.learner_eta_decay) < 0:
            raise ConfigError("mce_step_decay, learner_eta_decay and old_weight must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(doc)

    def quick(self) -> "ExperimentConfig":
        """CI-scale profile: 8 roads, 500 weight samples, 4 seeds, 60 iterations."""
        return replace(self, roads_per_type=1, n_weight_samples=500, n_seeds=4, max_iters=60)

    @property
    def c(self) -> float:
        return self.beta if self.softmax_c is None else self.softmax_c

    def to_dict(self) -> dict:
        return asdict(self)

    def resolved(self) -> dict:
        """Every setting with its value and where the default comes from."""
        return {
            name: {"value": value, "source": PROVENANCE.get(name, "decision")}
            for name, value in self.to_dict().items()
        }


PROVENANCE = {
    "n_seeds": "paper",
    "variants": "paper",
    "roads_per_type": "paper",
    "gamma": "paper",
    "lam": "paper",
    "alpha": "paper",
    "n_weight_samples": "paper",
    "sphere_radius": "paper",
    "mce_iters": "paper",
    "learner_eta": "paper",
    "learner_radius": "paper",
    "learner_init_scale": "paper",
    "pool_per_road": "paper",
    "eps": "paper",
    "master_seed": "run",
    "n_workers": "run",
}
