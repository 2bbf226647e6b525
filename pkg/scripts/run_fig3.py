"""Where the best goal options sit, at low and high learning budgets.

Runs the option-set search for several master seeds and writes the summed
top-k goal counts (omega = 2 sets) as heatmap.csv plus an SVG rendering.

    python scripts/run_fig3.py --out runs/fig3 --seeds 0,1,2,3,4 --budgets 5000,100000
"""

import argparse
import logging
from collections import Counter
from pathlib import Path

from bossgrid import experiments as X
from bossgrid.gridworld import enumerate_tasks
from bossgrid.search import SearchConfig, default_workers, run_search


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--budgets", default="5000,100000")
    ap.add_argument("--seeds", default="0,1,2,3,4", help="master seeds")
    ap.add_argument("--top", type=int, default=10)
    ap.add_argument("--repetitions", type=int, default=10)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--out", default="runs/fig3")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    totals: dict[int, Counter] = {}
    for seed in (int(s) for s in args.seeds.split(",")):
        cfg = X.resolve_config(overrides=dict(budgets=args.budgets, seed=seed, top=args.top,
                                              repetitions=args.repetitions, workers=args.workers))
        gmap = X.run_map(cfg)
        goals = [int(g) for g in gmap.free_cells]
        pool, _ = X.goal_pool(cfg, gmap, goals, cache_dir=out / "options")
        scfg = SearchConfig(candidate_goals=tuple(goals), budgets=cfg.budgets, repetitions=cfg.repetitions)
        result = run_search(scfg, enumerate_tasks(gmap), gmap, pool, X.learn_config(cfg, cfg.budgets[0]),
                            X.eval_config(cfg, gmap), seed, cfg.workers)
        d = out / f"seed{seed}"
        X.write_search_results(d / "search_results.csv", result, gmap)
        X.manifest_for(cfg, gmap, "search").write(d)
        for b, counts in X.goal_heatmaps(result, cfg.top, omega=2).items():
            totals.setdefault(b, Counter()).update(counts)
    X.write_heatmap(out / "heatmap.csv", totals, gmap)
    X.render_heatmap_svg(out / "heatmap.svg", totals, gmap)
    for b, counts in sorted(totals.items()):
        top = ", ".join(f"{X.format_cell(g, gmap)}={n}" for g, n in counts.most_common(6))
        print(f"C={b}: {top}")


if __name__ == "__main__":
    main()
