"""Experiment orchestration: configuration, baselines, CSV files, heatmaps, manifests.

Configuration precedence is built-in defaults < config file < explicit
overrides (command-line flags). Config files are flat ``key = value`` text
with ``#`` comments; list values are comma separated.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import typing
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from bossgrid import __version__
from bossgrid.evaluator import EvalConfig, evaluate_policy, make_start_states
from bossgrid.gridworld import GridMap, Task, default_map, enumerate_tasks, load_map
from bossgrid.learner import LearnConfig, learn_policy
from bossgrid.options import OptionDef, OptionSet, PretrainConfig, pretrain_goal_options
from bossgrid.search import SearchResult, SearchRow, top_k_goal_distribution
from bossgrid.seeding import BASELINE, stream

log = logging.getLogger(__name__)

CONDITIONS = ("primitives_only", "low_level_only", "low_plus_bottleneck", "boss_best")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    map: str = ""  # empty: built-in default map
    seed: int = 0
    pretrain_seed: int = 0
    eval_seed: int = 0
    budgets: tuple[int, ...] = (5_000, 25_000, 500_000)
    omegas: tuple[int, ...] = (0, 1, 2)
    goals: str = "all"
    repetitions: int = 10
    seeds: int = 10
    conditions: tuple[str, ...] = CONDITIONS
    workers: int = 1
    learning_rate: float = 0.25
    discount: float = 0.99
    epsilon: float = 0.1
    option_cap: int = 500
    eval_starts: int = 40
    eval_rollouts: int = 5
    eval_horizon: int = 500
    pretrain_learning_rate: float = 0.1
    pretrain_epsilon: float = 0.2
    pretrain_max_episodes: int = 20_000
    pretrain_episode_steps: int = 500
    pretrain_patience: int = 1_000
    option_cache: str = ""
    sample_tasks: bool = False
    n_tasks: int = 12
    top: int = 10

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


def _convert(key: str, raw, hint):
    if not isinstance(raw, str):
        return tuple(raw) if hint in (tuple[int, ...], tuple[str, ...]) else raw
    raw = raw.strip()
    try:
        if hint is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw.replace("_", ""))
        if hint is float:
            return float(raw)
        if hint == tuple[int, ...]:
            return tuple(int(x.replace("_", "")) for x in raw.split(",") if x.strip())
        if hint == tuple[str, ...]:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve_config(config_file=None, overrides: dict | None = None) -> RunConfig:
    hints = typing.get_type_hints(RunConfig)
    values = {}
    layers = [read_config_file(config_file) if config_file else {}, overrides or {}]
    for layer in layers:
        for k, v in layer.items():
            if v is None:
                continue
            if k not in hints:
                raise ConfigError(f"unknown configuration key {k!r}")
            values[k] = _convert(k, v, hints[k])
    cfg = RunConfig(**values)
    bad = set(cfg.conditions) - set(CONDITIONS)
    if bad:
        raise ConfigError(f"unknown conditions {sorted(bad)}; choose from {', '.join(CONDITIONS)}")
    return cfg


# -- building blocks from a RunConfig -------------------------------------------

def run_map(cfg: RunConfig) -> GridMap:
    return load_map(cfg.map) if cfg.map else default_map()


def learn_config(cfg: RunConfig, budget: int) -> LearnConfig:
    return LearnConfig(budget=budget, learning_rate=cfg.learning_rate, discount=cfg.discount,
                       epsilon=cfg.epsilon, option_cap=cfg.option_cap)


def eval_config(cfg: RunConfig, gmap: GridMap) -> EvalConfig:
    return EvalConfig(starts=make_start_states(gmap, cfg.eval_starts, cfg.eval_seed),
                      rollouts=cfg.eval_rollouts, horizon=cfg.eval_horizon, option_cap=cfg.option_cap)


def pretrain_config(cfg: RunConfig) -> PretrainConfig:
    return PretrainConfig(learning_rate=cfg.pretrain_learning_rate, epsilon=cfg.pretrain_epsilon,
                          max_episodes=cfg.pretrain_max_episodes,
                          episode_steps=cfg.pretrain_episode_steps, patience=cfg.pretrain_patience)


def parse_cell(text: str, gmap: GridMap) -> int:
    try:
        r, c = (int(x) for x in text.strip().split(":"))
    except ValueError:
        raise ConfigError(f"bad cell {text!r}; expected row:col") from None
    if not (0 <= r < gmap.height and 0 <= c < gmap.width) or gmap.walls[r, c]:
        raise ConfigError(f"cell {r}:{c} is not a free cell")
    return gmap.cell(r, c)


def format_cell(cell: int, gmap: GridMap) -> str:
    r, c = gmap.coords(cell)
    return f"{r}:{c}"


def parse_goals(spec: str, gmap: GridMap) -> list[int]:
    if spec.strip() == "all":
        return [int(g) for g in gmap.free_cells]
    cells = [parse_cell(t, gmap) for t in spec.split(",") if t.strip()]
    if len(set(cells)) != len(cells):
        raise ConfigError("duplicate goal cells")
    return cells


def goal_pool(cfg: RunConfig, gmap: GridMap, goals, cache_dir=None) -> tuple[dict[int, OptionDef], int]:
    cache = cache_dir or cfg.option_cache or None
    return pretrain_goal_options(gmap, goals, pretrain_config(cfg), cfg.pretrain_seed, cache)


# -- formatting ---------------------------------------------------------------

def fmt(x: float) -> str:
    return f"{x:.6g}"


def write_csv(path, header: Sequence[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


SEARCH_HEADER = ("budget", "rank", "goal_1", "goal_2", "j_hat", "stderr")


def write_search_results(path, result: SearchResult, gmap: GridMap) -> None:
    rows = []
    for budget in result.budgets:
        for rank, r in enumerate(result.ranked(budget), 1):
            goals = [format_cell(g, gmap) for g in r.goals] + ["", ""]
            rows.append((budget, rank, goals[0], goals[1], fmt(r.j_hat), fmt(r.stderr)))
    write_csv(path, SEARCH_HEADER, rows)


def read_search_results(path, gmap: GridMap) -> SearchResult:
    """Rows in file order (ranked within each budget); per-task values are not stored."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SEARCH_HEADER:
            raise ConfigError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            goals = tuple(parse_cell(rec[k], gmap) for k in ("goal_1", "goal_2") if rec[k])
            rows.append(SearchRow(goals, int(rec["budget"]), float(rec["j_hat"]), (), float(rec["stderr"])))
    return SearchResult(rows)


# -- baselines ----------------------------------------------------------------

@dataclass(frozen=True)
class PerfRow:
    condition: str
    budget: int
    seed: int
    task_id: int
    j_hat: float


@dataclass(frozen=True)
class SummaryRow:
    condition: str
    budget: int
    mean_j: float
    stderr: float
    n: int


def condition_option_set(condition: str, gmap: GridMap, pool: dict[int, OptionDef],
                         boss_goals: Sequence[int] | None = None) -> OptionSet:
    if condition == "primitives_only":
        return OptionSet(include_low_level=False)
    if condition == "low_level_only":
        return OptionSet()
    if condition == "low_plus_bottleneck":
        if not gmap.doorways:
            raise ConfigError("map declares no doorways")
        return OptionSet(tuple(pool[g] for g in gmap.doorway_cells))
    if condition == "boss_best":
        if boss_goals is None:
            raise ConfigError("boss_best needs a completed search at the same budget")
        return OptionSet(tuple(pool[g] for g in boss_goals))
    raise ConfigError(f"unknown condition {condition!r}")


def _baseline_item(args) -> list[PerfRow]:
    condition, budget, seed, oset, tasks, gmap, learn_cfg, eval_cfg, master = args
    out = []
    for task in tasks:
        q = learn_policy(task, oset, gmap, learn_cfg, stream(master, BASELINE, budget, seed, task.id, 0))
        j = evaluate_policy(q, task, gmap, eval_cfg, stream(master, BASELINE, budget, seed, task.id, 1))
        out.append(PerfRow(condition, budget, seed, task.id, j))
    return out


def run_baselines(conditions: Sequence[str], budgets: Sequence[int], n_seeds: int, gmap: GridMap,
                  pool: dict[int, OptionDef], learn_cfg: LearnConfig, eval_cfg: EvalConfig,
                  master_seed: int = 0, boss_best: dict[int, Sequence[int]] | None = None,
                  workers: int = 1, tasks: Sequence[Task] | None = None) -> list[PerfRow]:
    """Learn and evaluate each condition on every task for ``n_seeds`` seeds per budget.

    Seed ``s`` uses the same random streams under every condition.
    """
    tasks = list(tasks or enumerate_tasks(gmap))
    items = []
    for cond in conditions:
        for budget in budgets:
            goals = (boss_best or {}).get(budget)
            oset = condition_option_set(cond, gmap, pool, goals)
            lc = dataclasses.replace(learn_cfg, budget=budget)
            for seed in range(n_seeds):
                items.append((cond, budget, seed, oset, tasks, gmap, lc, eval_cfg, master_seed))
    if workers <= 1:
        parts = list(map(_baseline_item, items))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_baseline_item, items))
    return [row for part in parts for row in part]


def summarize(rows: Sequence[PerfRow]) -> list[SummaryRow]:
    """Mean and standard error over seeds of the task-averaged Ĵ, per (condition, budget)."""
    groups: dict[tuple[str, int], dict[int, list[float]]] = {}
    for r in rows:
        groups.setdefault((r.condition, r.budget), {}).setdefault(r.seed, []).append(r.j_hat)
    out = []
    for (cond, budget), by_seed in groups.items():
        per_seed = np.array([np.mean(v) for _, v in sorted(by_seed.items())])
        n = len(per_seed)
        se = float(per_seed.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        out.append(SummaryRow(cond, budget, float(per_seed.mean()), se, n))
    return out


def write_performance(path, rows: Sequence[PerfRow]) -> None:
    write_csv(path, ("condition", "budget", "seed", "task_id", "j_hat"),
              [(r.condition, r.budget, r.seed, r.task_id, fmt(r.j_hat)) for r in rows])


def write_summary(path, rows: Sequence[SummaryRow]) -> None:
    write_csv(path, ("condition", "budget", "mean_j", "stderr", "n"),
              [(r.condition, r.budget, fmt(r.mean_j), fmt(r.stderr), r.n) for r in rows])


# -- heatmaps -----------------------------------------------------------------

def goal_heatmaps(result: SearchResult, k: int, omega: int | None = None) -> dict[int, Counter]:
    return {b: top_k_goal_distribution(result, k, budget=b, omega=omega) for b in result.budgets}


def write_heatmap(path, heatmaps: dict[int, Counter], gmap: GridMap) -> None:
    rows = []
    for budget, counts in sorted(heatmaps.items()):
        for cell in gmap.free_cells:
            r, c = gmap.coords(cell)
            rows.append((budget, r, c, counts.get(int(cell), 0)))
    write_csv(path, ("budget", "row", "col", "count"), rows)


def render_heatmap_svg(path, heatmaps: dict[int, Counter], gmap: GridMap) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "bossgrid"  # stable element ids

    budgets = sorted(heatmaps)
    fig, axes = plt.subplots(1, len(budgets), figsize=(3.2 * len(budgets), 3.4), squeeze=False)
    vmax = max([max(c.values(), default=0) for c in heatmaps.values()] + [1])
    for ax, budget in zip(axes[0], budgets):
        grid = np.zeros((gmap.height, gmap.width))
        for cell, n in heatmaps[budget].items():
            grid[gmap.coords(cell)] = n
        img = np.ma.masked_where(gmap.walls, grid)
        cmap = matplotlib.colormaps["Reds"].copy()
        cmap.set_bad("black")
        ax.imshow(img, cmap=cmap, vmin=0, vmax=vmax)
        for (r, c), n in np.ndenumerate(grid):
            if n:
                ax.text(c, r, int(n), ha="center", va="center", fontsize=8)
        ax.set_title(f"C = {budget:,}")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- manifests ----------------------------------------------------------------

@dataclass
class RunManifest:
    master_seed: int
    config: dict
    map_sha256: str
    command: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def content_hash(self) -> str:
        body = {k: v for k, v in dataclasses.asdict(self).items() if k != "timestamp"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        body = dataclasses.asdict(self)
        body["content_sha256"] = self.content_hash
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path


def read_manifest(out_dir) -> RunManifest:
    body = json.loads((Path(out_dir) / "manifest.json").read_text())
    body.pop("content_sha256", None)
    return RunManifest(**body)


def manifest_for(cfg: RunConfig, gmap: GridMap, command: str) -> RunManifest:
    return RunManifest(master_seed=cfg.seed, config=cfg.as_dict(), map_sha256=gmap.digest, command=command)
