"""Empirical evaluation of frozen greedy policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from bossgrid import _kernels as K
from bossgrid.gridworld import EPISODE_STEPS, GridMap, Task
from bossgrid.learner import QTable
from bossgrid.seeding import START_CELLS, stream

N_TASKS = 12


def make_start_states(gmap: GridMap, n: int = 40, seed: int = 0) -> np.ndarray:
    """``n`` start cells drawn uniformly with replacement from the free cells."""
    rng = stream(seed, START_CELLS)
    return gmap.free_cells[rng.integers(0, len(gmap.free_cells), size=n)]


@dataclass(frozen=True, eq=False)
class EvalConfig:
    starts: np.ndarray
    rollouts: int = 5
    horizon: int = EPISODE_STEPS
    option_cap: int = 500

    def __post_init__(self):
        if self.rollouts < 1 or self.horizon < 1 or len(self.starts) == 0:
            raise ValueError("evaluation needs at least one start, rollout and step")

    @classmethod
    def default(cls, gmap: GridMap, seed: int = 0, **kw) -> "EvalConfig":
        return cls(starts=make_start_states(gmap, 40, seed), **kw)


@dataclass
class EvalReport:
    per_task: dict[int, float]
    aggregate: float
    rollouts: int
    seeds: dict = field(default_factory=dict)


def rollout_returns(q: QTable, task: Task, gmap: GridMap, cfg: EvalConfig,
                    rng: np.random.Generator) -> np.ndarray:
    """Undiscounted return of every (start, rollout) pair, start-major order."""
    if q.values.shape != (gmap.n_states, q.option_set.n_choices):
        raise ValueError(f"Q-table shape {q.values.shape} does not match option set "
                         f"({gmap.n_states}, {q.option_set.n_choices})")
    n_low, goal_cells, policy = q.option_set.kernel_arrays(gmap.n_positions)
    out = np.empty(len(cfg.starts) * cfg.rollouts)
    K.evaluate(q.values, np.asarray(cfg.starts, dtype=np.int64), cfg.rollouts, cfg.horizon,
               cfg.option_cap, gmap.move_to, task.sources(gmap), n_low, goal_cells, policy, rng, out)
    return out


def evaluate_policy(q: QTable, task: Task, gmap: GridMap, cfg: EvalConfig,
                    rng: np.random.Generator) -> float:
    return float(rollout_returns(q, task, gmap, cfg, rng).mean())


def aggregate_over_tasks(values) -> float:
    values = list(values)
    if len(values) != N_TASKS:
        raise ValueError(f"expected {N_TASKS} per-task values, got {len(values)}")
    return float(np.mean(values))
