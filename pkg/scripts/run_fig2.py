"""Performance of each option condition against the learning budget.

For every budget: run the full option-set search, take its best set as the
``boss_best`` condition, then learn and evaluate all four conditions on fresh
seeds. Writes search/, baselines/ and a budget-vs-return SVG under --out.

    python scripts/run_fig2.py --out runs/fig2 --budgets 5000,25000,100000
"""

import argparse
import logging
from pathlib import Path

from bossgrid import experiments as X
from bossgrid.gridworld import enumerate_tasks
from bossgrid.search import SearchConfig, default_workers, run_search


def plot(summary, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "bossgrid"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for cond in X.CONDITIONS:
        rows = sorted((s for s in summary if s.condition == cond), key=lambda s: s.budget)
        if rows:
            ax.errorbar([s.budget for s in rows], [s.mean_j for s in rows], [s.stderr for s in rows],
                        marker="o", capsize=3, label=cond)
    ax.set_xscale("log")
    ax.set_xlabel("learning budget C (steps)")
    ax.set_ylabel("mean return")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budgets", default="5000,25000,100000")
    ap.add_argument("--seeds", type=int, default=10, help="baseline seeds per condition")
    ap.add_argument("--repetitions", type=int, default=10, help="search repetitions per (set, task)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--out", default="runs/fig2")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = X.resolve_config(overrides=dict(budgets=args.budgets, seeds=args.seeds, seed=args.seed,
                                          repetitions=args.repetitions, workers=args.workers))
    out = Path(args.out)
    gmap = X.run_map(cfg)
    goals = [int(g) for g in gmap.free_cells]
    pool, _ = X.goal_pool(cfg, gmap, goals, cache_dir=out / "options")
    scfg = SearchConfig(candidate_goals=tuple(goals), budgets=cfg.budgets, repetitions=cfg.repetitions)
    result = run_search(scfg, enumerate_tasks(gmap), gmap, pool, X.learn_config(cfg, cfg.budgets[0]),
                        X.eval_config(cfg, gmap), cfg.seed, cfg.workers)
    X.write_search_results(out / "search" / "search_results.csv", result, gmap)
    X.manifest_for(cfg, gmap, "search").write(out / "search")

    best = {b: result.argmax(b).goals for b in cfg.budgets}
    rows = X.run_baselines(cfg.conditions, cfg.budgets, cfg.seeds, gmap, pool, X.learn_config(cfg, cfg.budgets[0]),
                           X.eval_config(cfg, gmap), cfg.seed, best, cfg.workers)
    summary = X.summarize(rows)
    X.write_performance(out / "baselines" / "performance.csv", rows)
    X.write_summary(out / "baselines" / "summary.csv", summary)
    X.manifest_for(cfg, gmap, "baselines").write(out / "baselines")
    plot(summary, out / "performance.svg")
    for s in summary:
        print(f"{s.condition:20s} C={s.budget:<7d} {s.mean_j:8.1f} ± {s.stderr:.1f}")


if __name__ == "__main__":
    main()
