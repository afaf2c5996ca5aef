"""Experiment harness.

Subcommands: simulate, compare, stability, gen-graph, gen-trips, partition.
A JSON config file can predefine any flag (by its long name with dashes);
explicit flags win. Every run is fully determined by (config, seed): one
master seed expands to per-run seeds by run index, and wall-clock timings are
kept in separate files so all other outputs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import demand, graph as graphmod
from .partition import get_partitions
from .planner import TwoPhasePolicy
from .policies import (GreedyPolicy, IACommitPolicy, IARAPolicy, RandomIAPolicy,
                       service_distance)
from .rollout import RolloutConfig, RolloutPolicy
from .sim import run_episode
from .stability import compute_bounds, empirical_stability

POLICIES = ("greedy", "random-ia", "ia-commit", "ia-ra", "rollout", "two-phase")


class CLIError(Exception):
    pass


def make_policy(kind, g, model, m, args):
    if kind == "greedy":
        return GreedyPolicy(g)
    if kind == "ia-ra":
        return IARAPolicy(g)
    if kind == "ia-commit":
        return IACommitPolicy(g)
    if kind == "random-ia":
        return RandomIAPolicy(g)
    cfg = RolloutConfig(t_h=args["t_h"], num_mc=args["num_mc"], base_policy=args["base_policy"])
    if kind == "rollout":
        return RolloutPolicy(g, model, cfg)
    if kind == "two-phase":
        return TwoPhasePolicy(g, model, m, args["m_lim"], cfg)
    raise CLIError(f"unknown policy '{kind}' (expected one of {', '.join(POLICIES)})")


def resolve_graph(args):
    if args.get("graph"):
        return graphmod.load_graph(args["graph"])
    if args.get("grid"):
        return graphmod.grid_graph(args["grid"])
    raise CLIError("provide --graph FILE or --grid K")


def resolve_model(g, args):
    if args.get("trips"):
        rows = demand.read_trip_log(args["trips"])
        return demand.estimate_from_trips(rows, g)
    if args.get("e_eta") is not None:
        return demand.synthetic_model(g, args["e_eta"], hotspot=args.get("hotspot"),
                                      hotspot_mass=args.get("hotspot_mass") or 0.0)
    raise CLIError("provide --trips FILE or --e-eta RATE for a synthetic model")


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_one(task):
    """One (policy, m, seed) episode; executed possibly in a worker process."""
    g = resolve_graph(task)
    model = resolve_model(g, task)
    policy = make_policy(task["policy"], g, model, task["m"], task)
    sim_graph = getattr(policy, "graph", g)  # two-phase carries the sectored copy
    trace = run_episode(sim_graph, model, policy, task["m"], task["T"], task["run_seed"])
    z = service_distance(trace, g)
    label = f"{task['policy']}_m{task['m']}_seed{task['run_seed']}"
    outdir = Path(task["out_dir"])
    _write_csv(outdir / f"{label}.trace.csv", trace.trace_rows())
    summary = trace.summary()
    summary["z_total"] = z.total
    summary["z_unassigned"] = len(z.unassigned)
    _write_json(outdir / f"{label}.summary.json", summary)
    _write_csv(outdir / f"{label}.timing.csv", trace.timing_rows())
    sector_timing = getattr(policy, "sector_timing", None)
    if sector_timing:
        rows = [["t", "sector", "plan_ms"]]
        rows += [[t, k, f"{ms:.3f}"] for t, k, ms in sector_timing]
        _write_csv(outdir / f"{label}.sector_timing.csv", rows)
    summary["mean_plan_ms"] = trace.mean_plan_ms()
    summary["outstanding_series"] = trace.outstanding_series()
    return summary


def _execute(tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def _tasks_for(args, policies, m_values):
    tasks = []
    for policy in policies:
        for m in m_values:
            for i in range(args["seeds"]):
                t = dict(args)
                t["policy"] = policy
                t["m"] = m
                t["run_seed"] = args["seed"] + i
                tasks.append(t)
    return tasks


def cmd_simulate(args):
    outdir = Path(args["out_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    m_values = args["m_sweep"] or [args["m"]]
    if not m_values or m_values[0] is None:
        raise CLIError("provide --m or --m-sweep")
    tasks = _tasks_for(args, [args["policy"]], m_values)
    results = _execute(tasks, args["jobs"])

    rows = [["policy", "m", "T", "seed", "cost", "z_total", "z_unassigned"]]
    for r in results:
        rows.append([r["policy"], r["m"], r["T"], r["seed"], r["cost"],
                     r["z_total"], r["z_unassigned"]])
    _write_csv(outdir / "summary.csv", rows)
    timing = [["policy", "m", "seed", "mean_plan_ms"]]
    for r in results:
        timing.append([r["policy"], r["m"], r["seed"], f"{r['mean_plan_ms']:.3f}"])
    _write_csv(outdir / "timing_summary.csv", timing)
    print(f"wrote {len(results)} runs to {outdir}")
    return 0


def _paired_t(deltas):
    """One-sided paired t: mean(delta) < 0. Returns (t, p)."""
    from scipy import stats

    n = len(deltas)
    mean = sum(deltas) / n
    var = sum((d - mean) ** 2 for d in deltas) / (n - 1)
    if var == 0:
        return 0.0, (0.0 if mean < 0 else 1.0)
    t = mean / math.sqrt(var / n)
    return t, float(stats.t.cdf(t, n - 1))


def cmd_compare(args):
    policies = args["policies"]
    if not policies or len(policies) < 2:
        raise CLIError("--policies needs at least two comma-separated names")
    outdir = Path(args["out_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    m_values = args["m_sweep"] or [args["m"]]
    tasks = _tasks_for(args, policies, m_values)
    results = _execute(tasks, args["jobs"])

    by_key = {}
    for r in results:
        by_key.setdefault((r["policy"], r["m"]), []).append(r)
    rows = [["policy", "m", "mean_cost", "std_cost", "mean_z"]]
    timing_rows = [["policy", "m", "mean_plan_ms"]]
    for (policy, m), rs in sorted(by_key.items(), key=lambda kv: (kv[0][1], policies.index(kv[0][0]))):
        costs = [r["cost"] for r in rs]
        mean = sum(costs) / len(costs)
        std = math.sqrt(sum((c - mean) ** 2 for c in costs) / (len(costs) - 1)) if len(costs) > 1 else 0.0
        zmean = sum(r["z_total"] for r in rs) / len(rs)
        tmean = sum(r["mean_plan_ms"] for r in rs) / len(rs)
        rows.append([policy, m, f"{mean:.3f}", f"{std:.3f}", f"{zmean:.3f}"])
        timing_rows.append([policy, m, f"{tmean:.3f}"])
    _write_csv(outdir / "compare.csv", rows)
    _write_csv(outdir / "compare_timing.csv", timing_rows)

    pair_rows = [["m", "policy_a", "policy_b", "mean_cost_a", "mean_cost_b",
                  "mean_delta", "t_stat", "p_a_lt_b"]]
    pair_timing = [["m", "policy_a", "policy_b", "runtime_ratio_a_over_b"]]
    for m in m_values:
        for ia in range(len(policies)):
            for ib in range(ia + 1, len(policies)):
                a, b = policies[ia], policies[ib]
                ra = sorted(by_key[(a, m)], key=lambda r: r["seed"])
                rb = sorted(by_key[(b, m)], key=lambda r: r["seed"])
                deltas = [x["cost"] - y["cost"] for x, y in zip(ra, rb)]
                t, p = _paired_t(deltas)
                ca = sum(r["cost"] for r in ra) / len(ra)
                cb = sum(r["cost"] for r in rb) / len(rb)
                ta = sum(r["mean_plan_ms"] for r in ra) / len(ra)
                tb = sum(r["mean_plan_ms"] for r in rb) / len(rb)
                ratio = ta / tb if tb > 0 else float("inf")
                pair_rows.append([m, a, b, f"{ca:.3f}", f"{cb:.3f}",
                                  f"{sum(deltas)/len(deltas):.3f}", f"{t:.3f}",
                                  f"{p:.5f}"])
                pair_timing.append([m, a, b, f"{ratio:.3f}"])
    _write_csv(outdir / "pairs.csv", pair_rows)
    _write_csv(outdir / "pairs_timing.csv", pair_timing)
    print(f"wrote compare.csv and pairs.csv to {outdir}")
    return 0


def cmd_stability(args):
    g = resolve_graph(args)
    model = resolve_model(g, args)
    report = compute_bounds(model, g, metric=args["metric"])
    outdir = Path(args["out_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "stability_report.json", report.as_dict())
    print(report.table())

    if args["verify"]:
        m_values = args["m_sweep"] or [report.m_sufficient]
        verdict_rows = [["m", "policy", "verdict", "first_window_mean",
                         "last_window_mean", "slope", "slope_p"]]
        for m in m_values:
            tasks = _tasks_for(args, [args["policy"]], [m])
            results = _execute(tasks, args["jobs"])
            series = [r["outstanding_series"] for r in results]
            traces = [_SeriesTrace(s) for s in series]
            v = empirical_stability(traces, window=max(1, args["T"] // 4))
            verdict_rows.append([m, args["policy"], v.verdict,
                                 f"{v.first_window_mean:.3f}", f"{v.last_window_mean:.3f}",
                                 f"{v.slope:.5f}", f"{v.slope_p:.5f}"])
            print(f"m={m} {args['policy']}: {v.verdict}")
        _write_csv(outdir / "verdicts.csv", verdict_rows)
    return 0


class _SeriesTrace:
    """Adapter: a bare outstanding series viewed as a trace."""

    def __init__(self, series):
        self._series = series

    def outstanding_series(self):
        return self._series


def cmd_gen_graph(args):
    g = graphmod.grid_graph(args["k"])
    graphmod.save_graph(g, args["out"])
    print(f"wrote {args['k']}x{args['k']} grid ({g.n} nodes, {len(g.edges)} edges) to {args['out']}")
    return 0


def cmd_gen_trips(args):
    g = resolve_graph(args)
    model = resolve_model(g, args)
    rows = demand.generate_trips(model, args["T"], args["seed"])
    demand.write_trip_log(rows, args["out"])
    print(f"wrote {len(rows)} trips over {args['T']} steps to {args['out']}")
    return 0


def cmd_partition(args):
    g = resolve_graph(args)
    model = resolve_model(g, args)
    K = math.ceil(args["m"] / args["m_lim"])
    spec = get_partitions(g, model, args["m_lim"], K, seed=args["seed"])
    _write_csv(args["out"], spec.rows())
    print(f"wrote {K}-sector partition (centers {spec.centers}) to {args['out']}")
    return 0


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _add_common(p, model_opts=True):
    p.add_argument("--config", help="JSON file of defaults for any flag")
    p.add_argument("--graph", help="edge-list graph file")
    p.add_argument("--grid", type=int, help="generate a K x K grid graph")
    if model_opts:
        p.add_argument("--trips", help="trip log CSV to estimate the demand model from")
        p.add_argument("--e-eta", dest="e_eta", type=float, help="synthetic model: mean arrivals per step")
        p.add_argument("--hotspot", type=int, help="synthetic model: high-demand pickup node")
        p.add_argument("--hotspot-mass", dest="hotspot_mass", type=float,
                       help="synthetic model: extra pickup mass on the hotspot")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, help="parallel runs (default $FLEETROLL_JOBS or 1)")


def _add_run_opts(p):
    p.add_argument("--m", type=int, help="fleet size")
    p.add_argument("--m-sweep", dest="m_sweep", type=_int_list, help="comma-separated fleet sizes")
    p.add_argument("--T", type=int, help="horizon in steps (default 60)")
    p.add_argument("--seeds", type=int, help="number of seeded runs (default 1)")
    p.add_argument("--m-lim", dest="m_lim", type=int, help="taxis per sector (default 10)")
    p.add_argument("--t-h", dest="t_h", type=int, help="lookahead horizon (default 10)")
    p.add_argument("--num-mc", dest="num_mc", type=int, help="Monte-Carlo scenarios (default 50)")
    p.add_argument("--base-policy", dest="base_policy", choices=("ia-ra", "greedy"),
                   help="rollout base policy (default ia-ra)")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default out)")


_DEFAULTS = {
    "seed": 0, "jobs": None, "T": 60, "seeds": 1, "m": None, "m_sweep": None,
    "m_lim": 10, "t_h": 10, "num_mc": 50, "base_policy": "ia-ra",
    "out_dir": "out", "metric": "graph", "verify": False, "policy": "ia-ra",
    "e_eta": None, "hotspot": None, "hotspot_mass": None, "trips": None,
    "graph": None, "grid": None,
}


def _merge(ns) -> dict:
    """Defaults < config file < explicit flags."""
    args = dict(_DEFAULTS)
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        loaded = json.loads(Path(cfg_path).read_text())
        for key, val in loaded.items():
            args[key.replace("-", "_")] = val
    for key, val in vars(ns).items():
        if key in ("config", "func"):
            continue
        if val is not None:
            args[key] = val
    if args["jobs"] is None:
        args["jobs"] = int(os.environ.get("FLEETROLL_JOBS", "1"))
    return args


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fleetroll",
                                     description="taxi fleet routing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run seeded episodes for one policy")
    _add_common(p)
    _add_run_opts(p)
    p.add_argument("--policy", choices=POLICIES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="paired same-seed comparison of policies")
    _add_common(p)
    _add_run_opts(p)
    p.add_argument("--policies", type=lambda s: [x.strip() for x in s.split(",") if x.strip()])
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("stability", help="fleet-size bounds and empirical verdicts")
    _add_common(p)
    _add_run_opts(p)
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--metric", choices=("graph", "euclidean"))
    p.add_argument("--verify", action="store_true", default=None,
                   help="also simulate and report STABLE/UNSTABLE per m")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("gen-graph", help="emit a grid graph file")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("gen-trips", help="emit a synthetic trip log")
    _add_common(p)
    p.add_argument("--T", type=int, help="log horizon in steps (default 60)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trips)

    p = sub.add_parser("partition", help="emit the node,sector,center table")
    _add_common(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--m-lim", dest="m_lim", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    ns = parser.parse_args(argv)
    if ns.command == "gen-graph":
        return ns.func({"k": ns.k, "out": ns.out})
    args = _merge(ns)
    if ns.command in ("gen-trips", "partition"):
        args["out"] = ns.out
    try:
        return ns.func(args)
    except (CLIError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
