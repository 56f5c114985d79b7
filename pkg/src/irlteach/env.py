"""Procedural two-lane car-driving environment.

Each road is a 10-row by 2-lane grid. The agent starts in row 0 of the left
lane, advances one row per step whatever it does, and the episode ends after
row 9. All roads are packed into one MDP with a shared absorbing terminal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mdp import Mdp

N_ROWS = 10
N_LANES = 2
LEFT, RIGHT = 0, 1
HORIZON = N_ROWS
GAMMA = 0.99

OBJECTS = ("stone", "grass", "car", "pedestrian", "hov", "police")
FEATURES = OBJECTS + ("car_in_front", "ped_in_front")
ACTIONS = ("left", "right", "stay")
ROAD_TYPES = tuple(f"T{i}" for i in range(8))

TRUE_WEIGHTS = {
    "stone": -1.0,
    "grass": -0.5,
    "car": -5.0,
    "pedestrian": -10.0,
    "hov": 1.0,
    "police": 0.0,
    "car_in_front": -2.0,
    "ped_in_front": -5.0,
}

# object -> (Bernoulli probability per cell, lane restriction)
DEFAULT_DENSITIES = {
    "T0": {"car": [0.1, "any"]},
    "T1": {"car": [0.3, "any"]},
    "T2": {"stone": [0.5, "right"]},
    "T3": {"car": [0.15, "any"], "stone": [0.15, "any"]},
    "T4": {"grass": [0.5, "right"]},
    "T5": {"car": [0.15, "any"], "grass": [0.15, "any"]},
    "T6": {"grass": [0.5, "right"], "pedestrian": [0.1, "any"]},
    "T7": {"hov": [1.0, "right"], "police": [0.2, "any"]},
}

_LANE_MASK = {
    "any": np.array([True, True]),
    "left": np.array([True, False]),
    "right": np.array([False, True]),
}

SCHEMA_PATH = Path(__file__).with_name("schemas") / "env.schema.json"


def true_weights() -> np.ndarray:
    return np.array([TRUE_WEIGHTS[f] for f in FEATURES])


@dataclass(frozen=True, eq=False)
class RoadSpec:
    road_type: str
    cells: np.ndarray  # bool (row, lane, object)

    def has(self, obj: str, row: int, lane: int) -> bool:
        return bool(self.cells[row, lane, OBJECTS.index(obj)])

    def count(self, obj: str) -> int:
        return int(self.cells[..., OBJECTS.index(obj)].sum())

    def to_json(self) -> dict:
        grid = [
            [[o for k, o in enumerate(OBJECTS) if self.cells[r, lane, k]] for lane in range(N_LANES)]
            for r in range(N_ROWS)
        ]
        return {"type": self.road_type, "cells": grid}

    @classmethod
    def from_json(cls, doc: dict) -> "RoadSpec":
        cells = np.zeros((N_ROWS, N_LANES, len(OBJECTS)), dtype=bool)
        grid = doc["cells"]
        if len(grid) != N_ROWS or any(len(row) != N_LANES for row in grid):
            raise ValueError("road cells must be a 10 x 2 grid")
        for r, row in enumerate(grid):
            for lane, objs in enumerate(row):
                for o in objs:
                    cells[r, lane, OBJECTS.index(o)] = True
        return cls(doc["type"], cells)


def generate_road(road_type: str, rng, densities: dict | None = None) -> RoadSpec:
    """Sample object placement for one road; the start cell is always left empty."""
    if road_type not in ROAD_TYPES:
        raise ValueError(f"unknown road type {road_type!r}")
    rules = (densities or DEFAULT_DENSITIES)[road_type]
    cells = np.zeros((N_ROWS, N_LANES, len(OBJECTS)), dtype=bool)
    for obj, (prob, lanes) in rules.items():
        draw = rng.random((N_ROWS, N_LANES)) < prob
        cells[..., OBJECTS.index(obj)] = draw & _LANE_MASK[lanes]
    cells[0, LEFT] = False
    return RoadSpec(road_type, cells)


@dataclass(frozen=True, eq=False)
class CarEnv:
    mdp: Mdp
    phi: np.ndarray
    roads: tuple[RoadSpec, ...]
    seed: int | None = None
    densities: dict = field(default_factory=lambda: DEFAULT_DENSITIES)
    horizon: int = HORIZON

    @property
    def n_roads(self) -> int:
        return len(self.roads)

    @property
    def terminal_state(self) -> int:
        return self.n_roads * N_ROWS * N_LANES

    @property
    def initial_states(self) -> np.ndarray:
        return self.mdp.initial_states

    def state(self, road: int, row: int, lane: int) -> int:
        return (road * N_ROWS + row) * N_LANES + lane

    def coords(self, s: int) -> tuple[int, int, int]:
        if s == self.terminal_state:
            raise ValueError("terminal state has no grid coordinates")
        road, rest = divmod(int(s), N_ROWS * N_LANES)
        row, lane = divmod(rest, N_LANES)
        return road, row, lane

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.mdp.gamma,
            "densities": self.densities,
            "roads": [r.to_json() for r in self.roads],
        }

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def env_from_roads(roads, seed=None, densities=None, gamma: float = GAMMA) -> CarEnv:
    """Assemble the MDP and feature map for a fixed list of roads."""
    roads = tuple(roads)
    n_roads = len(roads)
    if n_roads == 0:
        raise ValueError("need at least one road")
    S = n_roads * N_ROWS * N_LANES + 1
    term = S - 1
    A = len(ACTIONS)
    T = np.zeros((S, A, S))
    phi = np.zeros((S, len(FEATURES)))
    car, ped = OBJECTS.index("car"), OBJECTS.index("pedestrian")

    for k, road in enumerate(roads):
        base = k * N_ROWS * N_LANES
        for row in range(N_ROWS):
            for lane in range(N_LANES):
                s = base + row * N_LANES + lane
                phi[s, : len(OBJECTS)] = road.cells[row, lane]
                if row + 1 < N_ROWS:
                    phi[s, 6] = road.cells[row + 1, lane, car]
                    phi[s, 7] = road.cells[row + 1, lane, ped]
                    nxt = base + (row + 1) * N_LANES
                    # left: deterministic from the right lane, coin flip from the left lane
                    if lane == RIGHT:
                        T[s, 0, nxt + LEFT] = 1.0
                    else:
                        T[s, 0, nxt + LEFT] += 0.5
                        T[s, 0, nxt + RIGHT] += 0.5
                    if lane == LEFT:
                        T[s, 1, nxt + RIGHT] = 1.0
                    else:
                        T[s, 1, nxt + LEFT] += 0.5
                        T[s, 1, nxt + RIGHT] += 0.5
                    T[s, 2, nxt + lane] = 1.0
                else:
                    T[s, :, term] = 1.0
    T[term, :, term] = 1.0

    p0 = np.zeros(S)
    starts = [k * N_ROWS * N_LANES + LEFT for k in range(n_roads)]
    p0[starts] = 1.0 / n_roads
    terminal = np.zeros(S, dtype=bool)
    terminal[term] = True
    mdp = Mdp(T, p0, gamma, terminal)
    return CarEnv(mdp, phi, roads, seed, densities or DEFAULT_DENSITIES)


def build_env(seed: int, roads_per_type: int = 5, densities: dict | None = None, gamma: float = GAMMA) -> CarEnv:
    """Generate ``roads_per_type`` roads of each type T0..T7 from one seeded stream."""
    if roads_per_type < 1:
        raise ValueError("roads_per_type must be at least 1")
    densities = densities or DEFAULT_DENSITIES
    rng = np.random.default_rng(seed)
    roads = [generate_road(t, rng, densities) for t in ROAD_TYPES for _ in range(roads_per_type)]
    return env_from_roads(roads, seed=seed, densities=densities, gamma=gamma)


def load_env(path) -> CarEnv:
    doc = json.loads(Path(path).read_text())
    roads = [RoadSpec.from_json(r) for r in doc["roads"]]
    return env_from_roads(roads, doc.get("seed"), doc.get("densities"), doc.get("gamma", GAMMA))
