"""Option space: two-step low-level options and pretrained goal-reaching options."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from bossgrid import _kernels as K
from bossgrid.gridworld import Action, GridMap
from bossgrid.seeding import PRETRAIN, stream

log = logging.getLogger(__name__)

MOVE = K.MOVE_PROB


@dataclass(frozen=True, eq=False)
class OptionDef:
    id: str
    kind: str  # "low_level" or "goal"
    action: int | None = None
    goal_cell: int | None = None
    policy: np.ndarray | None = field(default=None, repr=False)  # int8 (n_positions, 4)


@dataclass(frozen=True, eq=False)
class OptionSet:
    """Goal options plus (normally) the 4 low-level options.

    Choice order seen by the learner: 4 primitives, then the low-level options
    (north, east, south, west) when included, then goal options by ascending
    goal cell.
    """

    goal_options: tuple[OptionDef, ...] = ()
    include_low_level: bool = True

    def __post_init__(self):
        goals = [o.goal_cell for o in self.goal_options]
        if len(set(goals)) != len(goals):
            raise ValueError(f"duplicate goal cells in option set: {goals}")
        ordered = tuple(sorted(self.goal_options, key=lambda o: o.goal_cell))
        object.__setattr__(self, "goal_options", ordered)

    @property
    def omega(self) -> int:
        return len(self.goal_options)

    @property
    def goals(self) -> tuple[int, ...]:
        return tuple(int(o.goal_cell) for o in self.goal_options)

    @property
    def low_level_options(self) -> tuple[OptionDef, ...]:
        return make_lowlevel_options() if self.include_low_level else ()

    @property
    def n_low(self) -> int:
        return 4 if self.include_low_level else 0

    @property
    def n_choices(self) -> int:
        return 4 + self.n_low + self.omega

    def kernel_arrays(self, n_positions: int) -> tuple[int, np.ndarray, np.ndarray]:
        goal_cells = np.array(self.goals, dtype=np.int64)
        policy = np.zeros((self.omega, n_positions, 4), dtype=np.int8)
        for j, o in enumerate(self.goal_options):
            policy[j] = o.policy
        return self.n_low, goal_cells, policy


@dataclass(frozen=True)
class PretrainConfig:
    learning_rate: float = 0.1
    epsilon: float = 0.2
    max_episodes: int = 20_000
    episode_steps: int = 500
    patience: int = 1_000

    def __post_init__(self):
        for name in ("learning_rate", "epsilon"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if min(self.max_episodes, self.episode_steps, self.patience) <= 0:
            raise ValueError("pretraining caps must be positive")


def make_lowlevel_options() -> tuple[OptionDef, ...]:
    return tuple(OptionDef(id=f"low_{a.name.lower()}", kind="low_level", action=int(a))
                 for a in Action)


def _check_goal(gmap: GridMap, goal_cell: int) -> None:
    if not (0 <= goal_cell < gmap.n_positions) or not gmap.is_free(goal_cell):
        raise ValueError(f"goal cell {goal_cell} is not a free cell")


def goal_option(gmap: GridMap, goal_cell: int, policy: np.ndarray) -> OptionDef:
    r, c = gmap.coords(goal_cell)
    return OptionDef(id=f"goal_{r}_{c}", kind="goal", goal_cell=int(goal_cell),
                     policy=np.ascontiguousarray(policy, dtype=np.int8))


def train_goal_option(gmap: GridMap, goal_cell: int, cfg: PretrainConfig,
                      rng: np.random.Generator) -> OptionDef:
    """Q-learn a shortest-path policy to ``goal_cell``; the greedy policy becomes the option."""
    _check_goal(gmap, goal_cell)
    _, policy, episodes, visited = K.pretrain(
        goal_cell, cfg.learning_rate, cfg.epsilon, cfg.max_episodes, cfg.episode_steps,
        cfg.patience, gmap.free_cells, gmap.move_to, rng)
    free = [p for p in gmap.free_cells if p != goal_cell]
    if not visited[free].all():
        raise RuntimeError(f"pretraining for goal {gmap.coords(goal_cell)} ran {episodes} "
                           "episodes without covering every state")
    log.debug("goal %s trained in %d episodes", gmap.coords(goal_cell), episodes)
    return goal_option(gmap, goal_cell, policy)


def expected_steps_oracle(gmap: GridMap, goal_cell: int, tol: float = 1e-10,
                          max_iter: int = 200_000) -> np.ndarray:
    """Optimal expected steps-to-goal per (position, last_action) by value iteration.

    Wall positions are NaN. Raises if the iteration does not settle within
    ``max_iter`` sweeps, which happens when the goal is unreachable.
    """
    _check_goal(gmap, goal_cell)
    n = gmap.n_positions
    free = ~gmap.walls.ravel()
    move = gmap.move_to
    v = np.zeros((n, 4))
    actions = np.arange(4)
    for _ in range(max_iter):
        # q[p, l, a]: cost of picking a in (p, l)
        moved = v[move, actions[None, :]]  # (n, a) value of (move(p,a), a)
        stay = v  # (n, a) value of (p, a)
        q = np.empty((n, 4, 4))
        q[:] = 1.0 + stay[:, None, :]
        for a in range(4):
            q[:, a, a] = 1.0 + MOVE * moved[:, a] + (1 - MOVE) * stay[:, a]
        new = q.min(axis=2)
        new[goal_cell] = 0.0
        new[~free] = 0.0
        delta = np.max(np.abs(new - v))
        v = new
        if delta < tol:
            out = v.copy()
            out[~free] = np.nan
            return out
    raise RuntimeError(f"value iteration did not converge for goal {gmap.coords(goal_cell)}")


def policy_expected_steps(gmap: GridMap, option: OptionDef) -> np.ndarray:
    """Exact expected steps-to-goal of a fixed option policy (linear solve)."""
    free = gmap.free_cells
    goal = option.goal_cell
    idx = {(int(p), l): i for i, (p, l) in enumerate((p, l) for p in free for l in range(4))}
    n = len(idx)
    A = np.eye(n)
    b = np.zeros(n)
    for (p, l), i in idx.items():
        if p == goal:
            continue
        a = int(option.policy[p, l])
        b[i] = 1.0
        if a == l:
            A[i, idx[(int(gmap.move_to[p, a]), a)]] -= MOVE
            A[i, idx[(p, a)]] -= 1 - MOVE
        else:
            A[i, idx[(p, a)]] -= 1.0
    x = np.linalg.solve(A, b)
    out = np.full((gmap.n_positions, 4), np.nan)
    for (p, l), i in idx.items():
        out[p, l] = x[i]
    return out


def rollout_steps(gmap: GridMap, option: OptionDef, start_cell: int, n: int,
                  rng: np.random.Generator, cap: int = 500) -> np.ndarray:
    """Steps to reach the goal over ``n`` executions (uniform initial last action)."""
    out = np.empty(n, dtype=np.int64)
    K.option_rollouts(option.policy, option.goal_cell, start_cell, n, cap, gmap.move_to, rng, out)
    return out


def make_bottleneck_options(gmap: GridMap, cfg: PretrainConfig,
                            rng: np.random.Generator) -> tuple[OptionDef, ...]:
    if not gmap.doorways:
        raise ValueError("map declares no doorways")
    return tuple(train_goal_option(gmap, g, cfg, rng) for g in gmap.doorway_cells)


# -- policy cache ------------------------------------------------------------

def cache_key(gmap: GridMap, cfg: PretrainConfig, seed: int) -> str:
    payload = gmap.digest + repr(sorted(asdict(cfg).items())) + str(seed)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def cache_path(cache_dir, gmap: GridMap, goal_cell: int, cfg: PretrainConfig, seed: int) -> Path:
    r, c = gmap.coords(goal_cell)
    return Path(cache_dir) / f"option_{cache_key(gmap, cfg, seed)}_r{r}c{c}.csv"


def save_policy(path, policy: np.ndarray, gmap: GridMap) -> None:
    rows = ["position,last_action,action"]
    for p in gmap.free_cells:
        for l in range(4):
            rows.append(f"{p},{l},{int(policy[p, l])}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(rows) + "\n")
    os.replace(tmp, path)


def load_policy(path, gmap: GridMap) -> np.ndarray:
    policy = np.zeros((gmap.n_positions, 4), dtype=np.int8)
    seen = 0
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "position,last_action,action":
            raise ValueError(f"{path}: bad header {header!r}")
        for line in fh:
            p, l, a = (int(x) for x in line.split(","))
            policy[p, l] = a
            seen += 1
    if seen != 4 * len(gmap.free_cells):
        raise ValueError(f"{path}: policy table incomplete ({seen} rows)")
    return policy


def pretrain_goal_options(gmap: GridMap, goals: Iterable[int], cfg: PretrainConfig | None = None,
                          seed: int = 0, cache_dir=None) -> tuple[dict[int, OptionDef], int]:
    """Train (or load from cache) one goal option per cell.

    Each goal draws from its own stream derived from ``seed`` and the goal cell,
    so results do not depend on which other goals are requested. Returns the
    options and the number actually trained.
    """
    cfg = cfg or PretrainConfig()
    out: dict[int, OptionDef] = {}
    trained = 0
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
    for g in goals:
        g = int(g)
        _check_goal(gmap, g)
        path = cache_path(cache_dir, gmap, g, cfg, seed) if cache_dir is not None else None
        if path is not None and path.exists():
            out[g] = goal_option(gmap, g, load_policy(path, gmap))
            continue
        opt = train_goal_option(gmap, g, cfg, stream(seed, PRETRAIN, g))
        trained += 1
        if path is not None:
            save_policy(path, opt.policy, gmap)
        out[g] = opt
    return out, trained


def option_set(goals: Sequence[int], pool: dict[int, OptionDef],
               include_low_level: bool = True) -> OptionSet:
    return OptionSet(tuple(pool[int(g)] for g in goals), include_low_level)
