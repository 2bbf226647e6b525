"""Exhaustive best-option-set search.

Each option set is trained from scratch on every task under budget C, the
greedy policy is evaluated, and sets are ranked by the mean over tasks. A work
item is one option set (all tasks and repetitions); every learning and
evaluation run draws from a stream keyed by the set's goal cells, the budget,
task and repetition, so the result does not depend on worker count or order.
"""

from __future__ import annotations

import itertools
import logging
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from bossgrid.evaluator import EvalConfig, evaluate_policy
from bossgrid.gridworld import GridMap, Task
from bossgrid.learner import LearnConfig, learn_policy
from bossgrid.options import OptionDef, OptionSet
from bossgrid.seeding import SEARCH, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    candidate_goals: tuple[int, ...]
    omegas: tuple[int, ...] = (0, 1, 2)
    budgets: tuple[int, ...] = (5_000,)
    repetitions: int = 10
    n_tasks: int = 12
    sample_tasks: bool = False  # draw n_tasks from the uniform task distribution instead

    def __post_init__(self):
        if len(set(self.candidate_goals)) != len(self.candidate_goals):
            raise ValueError("duplicate candidate goals")
        if any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if not set(self.omegas) <= {0, 1, 2}:
            raise ValueError(f"omegas must be drawn from {{0, 1, 2}}, got {self.omegas}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def enumerate_option_sets(cfg: SearchConfig) -> list[tuple[int, ...]]:
    """Goal tuples in canonical order: omega ascending, goals ascending within a set."""
    goals = sorted(cfg.candidate_goals)
    out: list[tuple[int, ...]] = []
    for omega in sorted(set(cfg.omegas)):
        out.extend(itertools.combinations(goals, omega))
    return out


def build_option_set(goals: Sequence[int], pool: dict[int, OptionDef]) -> OptionSet:
    return OptionSet(tuple(pool[g] for g in goals), include_low_level=True)


@dataclass(frozen=True)
class SearchRow:
    goals: tuple[int, ...]
    budget: int
    j_hat: float
    per_task: tuple[float, ...]
    stderr: float

    @property
    def omega(self) -> int:
        return len(self.goals)


@dataclass
class SearchResult:
    rows: list[SearchRow] = field(default_factory=list)

    @property
    def budgets(self) -> list[int]:
        return sorted({r.budget for r in self.rows})

    def ranked(self, budget: int) -> list[SearchRow]:
        """Rows of one budget, best first; ties keep enumeration order."""
        rows = [r for r in self.rows if r.budget == budget]
        return sorted(rows, key=lambda r: -r.j_hat)

    @property
    def ranking(self) -> list[SearchRow]:
        return [r for b in self.budgets for r in self.ranked(b)]

    def argmax(self, budget: int) -> SearchRow:
        return self.ranked(budget)[0]


def run_seed_key(budget: int, goals: Sequence[int], task_slot: int, rep: int, phase: int) -> tuple[int, ...]:
    return (SEARCH, budget, len(goals), *goals, task_slot, rep, phase)


def evaluate_set(goals: tuple[int, ...], tasks: Sequence[Task], gmap: GridMap,
                 pool: dict[int, OptionDef], learn_cfg: LearnConfig, eval_cfg: EvalConfig,
                 repetitions: int, master_seed: int) -> np.ndarray:
    """Ĵ for every (task, repetition) of one option set; shape (len(tasks), repetitions)."""
    oset = build_option_set(goals, pool)
    out = np.empty((len(tasks), repetitions))
    for i, task in enumerate(tasks):
        for rep in range(repetitions):
            q = learn_policy(task, oset, gmap, learn_cfg,
                             stream(master_seed, *run_seed_key(learn_cfg.budget, goals, i, rep, 0)))
            out[i, rep] = evaluate_policy(q, task, gmap, eval_cfg,
                                          stream(master_seed, *run_seed_key(learn_cfg.budget, goals, i, rep, 1)))
    return out


_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _CTX.clear()
    _CTX.update(ctx)


def _work(goals: tuple[int, ...]) -> np.ndarray:
    return evaluate_set(goals, **_CTX)


def _summarize(goals, budget, values: np.ndarray) -> SearchRow:
    per_task = values.mean(axis=1)
    per_rep = values.mean(axis=0)
    reps = values.shape[1]
    stderr = float(per_rep.std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan")
    return SearchRow(tuple(goals), budget, float(np.mean(per_task)),
                     tuple(float(v) for v in per_task), stderr)


def boss_search(sets: Sequence[tuple[int, ...]], tasks: Sequence[Task], gmap: GridMap,
                pool: dict[int, OptionDef], learn_cfg: LearnConfig, eval_cfg: EvalConfig,
                repetitions: int = 10, master_seed: int = 0, workers: int = 1,
                progress=None) -> SearchResult:
    """Learn and evaluate every set on every task at ``learn_cfg.budget``."""
    if not sets:
        raise ValueError("no option sets to search")
    missing = sorted({g for s in sets for g in s} - set(pool))
    if missing:
        raise ValueError(f"no pretrained option for goal cells {missing}")
    ctx = dict(tasks=list(tasks), gmap=gmap, pool=pool, learn_cfg=learn_cfg,
               eval_cfg=eval_cfg, repetitions=repetitions, master_seed=master_seed)
    sets = [tuple(s) for s in sets]
    if workers <= 1:
        _init_worker(ctx)
        results = map(_work, sets)
    else:
        pool_ex = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,))
        results = pool_ex.map(_work, sets, chunksize=max(1, len(sets) // (8 * workers)))
    rows = []
    try:
        for i, (goals, values) in enumerate(zip(sets, results)):
            rows.append(_summarize(goals, learn_cfg.budget, values))
            if progress is not None:
                progress(i + 1, len(sets))
    finally:
        if workers > 1:
            pool_ex.shutdown()
    return SearchResult(rows)


def search_tasks(all_tasks: Sequence[Task], cfg: SearchConfig, master_seed: int) -> list[Task]:
    if not cfg.sample_tasks:
        return list(all_tasks)[: cfg.n_tasks]
    idx = stream(master_seed, SEARCH, 0).integers(0, len(all_tasks), size=cfg.n_tasks)
    return [all_tasks[i] for i in idx]


def run_search(cfg: SearchConfig, tasks: Sequence[Task], gmap: GridMap, pool: dict[int, OptionDef],
               learn_cfg: LearnConfig, eval_cfg: EvalConfig, master_seed: int = 0,
               workers: int = 1, progress=None) -> SearchResult:
    sets = enumerate_option_sets(cfg)
    chosen = search_tasks(tasks, cfg, master_seed)
    result = SearchResult()
    for budget in cfg.budgets:
        lc = replace(learn_cfg, budget=budget)
        log.info("searching %d sets at budget %d", len(sets), budget)
        part = boss_search(sets, chosen, gmap, pool, lc, eval_cfg, cfg.repetitions,
                           master_seed, workers, progress)
        result.rows.extend(part.rows)
    return result


def top_k_goal_distribution(result: SearchResult | Sequence[SearchRow], k: int,
                            budget: int | None = None, omega: int | None = None) -> Counter:
    """Goal-cell counts over the goal options of the ``k`` best sets.

    ``result`` may be a SearchResult (ranked within ``budget``, required when it
    holds several budgets) or an already ranked row sequence. ``omega``
    restricts the ranking to sets of that size.
    """
    if isinstance(result, SearchResult):
        budgets = result.budgets
        if budget is None:
            if len(budgets) != 1:
                raise ValueError("budget required for a multi-budget result")
            budget = budgets[0]
        rows = result.ranked(budget)
    else:
        rows = list(result)
    if omega is not None:
        rows = [r for r in rows if r.omega == omega]
    if k > len(rows):
        raise ValueError(f"k={k} exceeds the {len(rows)} ranked rows")
    counts: Counter = Counter()
    for row in rows[:k]:
        counts.update(row.goals)
    return counts


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)))
