"""Command-line front end.

Exit codes: 0 success, 1 internal error, 2 invalid input or configuration.
The default output root is ``$BOSSGRID_OUTPUT`` (falling back to ``./runs``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from bossgrid import __version__
from bossgrid import experiments as X
from bossgrid.gridworld import CORNER_NAMES, MapError, enumerate_tasks
from bossgrid.options import cache_key, expected_steps_oracle, policy_expected_steps
from bossgrid.search import SearchConfig, run_search

log = logging.getLogger("bossgrid")

EXIT_OK, EXIT_INTERNAL, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get("BOSSGRID_OUTPUT", "runs"))


def _csv_list(text: str) -> str:
    return ",".join(t.strip() for t in text.split(",") if t.strip())


def _config(args, **flags) -> X.RunConfig:
    if getattr(args, "map", None):
        flags["map"] = args.map
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        flags["workers"] = args.workers
    return X.resolve_config(getattr(args, "config", None), flags)


def _out_dir(args, name: str) -> Path:
    out = Path(args.out) if args.out else output_root() / name
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _progress(label):
    def report(i, n):
        if i == n or i % max(1, n // 20) == 0:
            log.info("%s: %d/%d", label, i, n)
    return report


def cmd_validate_map(args) -> int:
    cfg = _config(args)
    gmap = X.run_map(cfg)
    print(f"free={len(gmap.free_cells)} states={gmap.n_states} doorways={len(gmap.doorways)}")
    print("corners: " + " ".join(f"{n}={r}:{c}" for n, (r, c) in zip(CORNER_NAMES, gmap.corners)))
    if gmap.doorways:
        print("doorway cells: " + " ".join(f"{r}:{c}" for r, c in gmap.doorways))
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args, goals=args.goals, pretrain_seed=args.pretrain_seed)
    gmap = X.run_map(cfg)
    goals = X.parse_goals(cfg.goals, gmap)
    out = _out_dir(args, "options")
    pool, n_trained = X.goal_pool(cfg, gmap, goals, cache_dir=out)
    key = cache_key(gmap, X.pretrain_config(cfg), cfg.pretrain_seed)
    print(f"goals={len(goals)} trained={n_trained} cached={len(goals) - n_trained} key={key}")
    if args.check:
        oracle_bad = []
        for g in goals:
            oracle = expected_steps_oracle(gmap, g)
            got = policy_expected_steps(gmap, pool[g])
            free = gmap.free_cells
            if not (np.abs(got[free] - oracle[free]) <= 0.05 * oracle[free] + 1e-9).all():
                oracle_bad.append(X.format_cell(g, gmap))
        print(f"oracle check: {len(goals) - len(oracle_bad)}/{len(goals)} within 5%")
        if oracle_bad:
            print("outside bound: " + " ".join(oracle_bad))
            return EXIT_INTERNAL
    return EXIT_OK


def _pool(cfg, gmap, goals, args):
    cache = args.options if getattr(args, "options", None) else None
    pool, n = X.goal_pool(cfg, gmap, goals, cache_dir=cache)
    if n:
        log.info("pretrained %d goal options", n)
    return pool


def cmd_search(args) -> int:
    cfg = _config(args, budgets=args.budget, omegas=args.omega, repetitions=args.seeds, goals=args.goals)
    gmap = X.run_map(cfg)
    goals = X.parse_goals(cfg.goals, gmap)
    out = _out_dir(args, "search")
    pool = _pool(cfg, gmap, goals, args)
    scfg = SearchConfig(candidate_goals=tuple(goals), omegas=cfg.omegas, budgets=cfg.budgets,
                        repetitions=cfg.repetitions, n_tasks=cfg.n_tasks, sample_tasks=cfg.sample_tasks)
    result = run_search(scfg, enumerate_tasks(gmap), gmap, pool, X.learn_config(cfg, cfg.budgets[0]),
                        X.eval_config(cfg, gmap), cfg.seed, cfg.workers, _progress("search"))
    X.write_search_results(out / "search_results.csv", result, gmap)
    X.manifest_for(cfg, gmap, "search").write(out)
    for b in result.budgets:
        best = result.argmax(b)
        cells = " ".join(X.format_cell(g, gmap) for g in best.goals) or "-"
        print(f"budget={b} sets={len(result.ranked(b))} best={cells} j_hat={X.fmt(best.j_hat)}")
    return EXIT_OK


def _boss_best(path: Path, gmap, budgets) -> dict[int, tuple[int, ...]]:
    f = path / "search_results.csv" if path.is_dir() else path
    if not f.exists():
        raise UsageError(f"no search results at {f}")
    result = X.read_search_results(f, gmap)
    missing = sorted(set(budgets) - set(result.budgets))
    if missing:
        raise UsageError(f"search results lack budgets {missing}")
    return {b: result.argmax(b).goals for b in budgets}


def cmd_baselines(args) -> int:
    cfg = _config(args, budgets=args.budgets, conditions=args.conditions, seeds=args.seeds)
    gmap = X.run_map(cfg)
    out = _out_dir(args, "baselines")
    boss = None
    if "boss_best" in cfg.conditions:
        if not args.search_results:
            raise UsageError("condition boss_best needs --search-results")
        boss = _boss_best(Path(args.search_results), gmap, cfg.budgets)
    goals = sorted(set(gmap.doorway_cells) | {g for s in (boss or {}).values() for g in s})
    pool = _pool(cfg, gmap, goals, args)
    rows = X.run_baselines(cfg.conditions, cfg.budgets, cfg.seeds, gmap, pool,
                           X.learn_config(cfg, cfg.budgets[0]), X.eval_config(cfg, gmap),
                           cfg.seed, boss, cfg.workers)
    summary = X.summarize(rows)
    X.write_performance(out / "performance.csv", rows)
    X.write_summary(out / "summary.csv", summary)
    X.manifest_for(cfg, gmap, "baselines").write(out)
    for s in summary:
        print(f"{s.condition:20s} budget={s.budget:<7d} mean_j={X.fmt(s.mean_j):>10s} "
              f"stderr={X.fmt(s.stderr)} n={s.n}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = _config(args, top=args.top)
    gmap = X.run_map(cfg)
    src = Path(args.results)
    f = src / "search_results.csv" if src.is_dir() else src
    if not f.exists():
        raise UsageError(f"no search results at {f}")
    result = X.read_search_results(f, gmap)
    if not result.rows:
        raise UsageError(f"{f} holds no result rows")
    try:
        maps = X.goal_heatmaps(result, cfg.top, args.omega)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else output_root() / "heatmap.csv"
    X.write_heatmap(out, maps, gmap)
    if args.svg:
        X.render_heatmap_svg(args.svg, maps, gmap)
    for b, counts in sorted(maps.items()):
        top = ", ".join(f"{X.format_cell(g, gmap)}={n}" for g, n in counts.most_common(5))
        print(f"budget={b} total={sum(counts.values())} top: {top}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bossgrid", description="Best option set search on the food grid-world.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, workers=False):
        sp.add_argument("--map", help="ASCII map file (default: built-in four rooms)")
        sp.add_argument("--config", help="flat key = value config file")
        if seed:
            sp.add_argument("--seed", type=int, help="master seed")
        if workers:
            sp.add_argument("--workers", type=int, help="worker processes (default 1)")

    sp = sub.add_parser("validate-map", help="parse a map and print its summary")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_validate_map)

    sp = sub.add_parser("pretrain", help="train and cache goal options")
    common(sp, seed=False)
    sp.add_argument("--goals", default=None, help="'all' or comma separated r:c cells")
    sp.add_argument("--out", help="cache directory")
    sp.add_argument("--pretrain-seed", dest="pretrain_seed", type=int)
    sp.add_argument("--check", action="store_true", help="verify every policy against the exact optimum")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("search", help="exhaustive option-set search")
    common(sp, workers=True)
    sp.add_argument("--budget", type=_csv_list, help="learning budget(s), comma separated")
    sp.add_argument("--omega", type=_csv_list, help="set sizes, e.g. 0,1,2")
    sp.add_argument("--goals", help="'all' or comma separated r:c candidate cells")
    sp.add_argument("--seeds", type=int, help="learning repetitions per (set, task)")
    sp.add_argument("--options", help="goal-option cache directory")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("baselines", help="learning curves of the comparison conditions")
    common(sp, workers=True)
    sp.add_argument("--budgets", type=_csv_list, help="comma separated budgets")
    sp.add_argument("--conditions", type=_csv_list, help=f"subset of {','.join(X.CONDITIONS)}")
    sp.add_argument("--seeds", type=int, help="seeds per (condition, budget)")
    sp.add_argument("--search-results", dest="search_results", help="search output (for boss_best)")
    sp.add_argument("--options", help="goal-option cache directory")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_baselines)

    sp = sub.add_parser("heatmap", help="goal-cell counts over the top-ranked sets")
    common(sp, seed=False)
    sp.add_argument("--results", required=True, help="search output directory or CSV")
    sp.add_argument("--top", type=int, help="number of top sets (default 10)")
    sp.add_argument("--omega", type=int, default=None, help="only rank sets of this size")
    sp.add_argument("--out", help="heatmap CSV path")
    sp.add_argument("--svg", help="also render an SVG heatmap here")
    sp.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, X.ConfigError, MapError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
