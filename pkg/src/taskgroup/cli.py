"""Command-line front end.

Exit codes: 0 ok, 1 verification found a violation, 2 bad input,
3 numerical failure, 4 infeasible grouping problem.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cost import CostProfile, audit_against_counters, total_cost
from .errors import NumericalError, SizeGuardError, TaskGroupError
from .evaluation import evaluate_grouping
from .feasibility import check_problem_assignment
from .gains import read_gain_csv
from .mip import export_mip
from .pipeline import (
    build_problem,
    build_tasks,
    collect_from_config,
    dump_json,
    load_config,
    resolve_config,
    run_collect,
    run_pipeline,
    run_verify,
)
from .sim import init_state
from .solver import solve, solve_bruteforce

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 1, 2, 3, 4


class InputError(TaskGroupError):
    pass


def _config(args) -> dict:
    user = load_config(args.config) if args.config else {}
    if args.seed is not None:
        user["seed"] = args.seed
    return resolve_config(user)


def _emit(obj, out):
    """Write JSON to ``out`` (file path) or stdout."""
    text = dump_json(obj)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _problem(args):
    gains = read_gain_csv(args.gains)
    params = load_config(args.problem) if args.problem else {}
    if args.m is not None:
        params["m"] = args.m
    if args.mode is not None:
        params["mode"] = args.mode
    if "m" not in params:
        raise InputError("the number of groups is required (--m or problem JSON)")
    return gains, build_problem(params, gains)


def _group_table(result, names) -> str:
    lines = [f"objective {result.objective!r}"]
    for j, g in enumerate(result.groups):
        lines.append(f"group {j}: " + " ".join(names[i] for i in g))
    return "\n".join(lines) + "\n"


def cmd_collect(args) -> int:
    cfg = _config(args)
    out = args.out or "collect_out"
    summary = run_collect(cfg, out)
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


def _solve_common(args, solver) -> int:
    gains, problem = _problem(args)
    result = solver(problem)
    payload = result.to_dict(gains.names, timing=False)
    if not result.feasible:
        _emit(payload, args.out)
        sys.stderr.write(f"infeasible: {result.reason}\n")
        return EXIT_INFEASIBLE
    bad = check_problem_assignment(problem, result.X)
    if bad:  # would be a solver bug; fail loudly
        raise RuntimeError(f"solver returned an infeasible matrix: {bad}")
    sys.stderr.write(_group_table(result, gains.names))
    _emit(payload, args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    return _solve_common(args, lambda p: solve(p, threads=args.threads))


def cmd_oracle(args) -> int:
    return _solve_common(args, solve_bruteforce)


def cmd_export_mip(args) -> int:
    _, problem = _problem(args)
    if not args.out:
        raise InputError("--out is required for export-mip")
    model = export_mip(problem, args.out)
    sys.stdout.write(dump_json({
        "path": str(args.out), "binaries": len(model.binaries),
        "continuous": len(model.continuous), "constraints": len(model.constraints),
    }))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    tasks = build_tasks(cfg["tasks"], cfg["seed"])
    names = [t.name for t in tasks]
    obj = load_config(args.groups)
    raw = obj["groups"] if isinstance(obj, dict) else obj
    try:
        groups = [[names.index(x) if isinstance(x, str) else int(x) for x in g] for g in raw]
    except ValueError as exc:
        raise InputError(f"unknown task in groups: {exc}") from None
    ev = cfg["evaluation"]
    rep = evaluate_grouping(groups, tasks, int(ev["steps"]), init_state(tasks, seed=cfg["seed"]),
                            lr=float(ev["eta"]))
    _emit(rep.to_dict(names), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _config(args)
    report = run_verify(cfg)
    _emit(report, args.out)
    return EXIT_OK if report["pass"] else EXIT_VIOLATION


def cmd_cost(args) -> int:
    methods = [args.method] if args.method else ["tag", "ours", "ours_sampling"]
    out = {"n": args.n, "variant": args.variant, "methods": {}}
    for method in methods:
        prof = CostProfile(args.n, method, args.F, args.B, args.C)
        entry = {"appendix": total_cost(prof).to_dict()}
        if args.variant == "main-text":
            entry["main-text"] = total_cost(prof, "main-text").to_dict()
        out["methods"][method] = entry
    if args.audit_steps:
        for policy, method in (("full", "ours"), ("sampled", "ours_sampling")):
            cfg = resolve_config({
                "seed": args.seed or 0,
                "tasks": {"family": "random", "n": args.n, "dim": 3},
                "collection": {"steps": args.audit_steps, "policy": policy, "eta": 0.01},
            })
            _, res = collect_from_config(cfg)
            out.setdefault("audit", {})[method] = audit_against_counters(CostProfile(args.n, method), res.counter)
    _emit(out, args.out)
    if "audit" in out and not all(a["pass"] for a in out["audit"].values()):
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    summary = run_pipeline(cfg, args.out or "pipeline_out", threads=args.threads)
    sys.stdout.write(dump_json({
        "stl_total": summary["stl_total"], "mtl_total": summary["mtl_total"],
        "splits": [{"m": s["m"], "ours": s["ours"].get("total_loss"), "random_mean": s["random_mean"]}
                   for s in summary["splits"]],
        "trend_non_increasing": summary["trend_non_increasing"],
    }))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskgroup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="JSON run config (defaults fill the rest)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--threads", type=int, default=1)
        return p

    def problem_args(p):
        p.add_argument("--gains", required=True, help="gain matrix CSV")
        p.add_argument("--problem", help="problem JSON (m, mode, budget, size_bounds)")
        p.add_argument("--m", type=int)
        p.add_argument("--mode", choices=["cover", "partition"])

    common(sub.add_parser("collect", help="simulate training and collect gains")).set_defaults(fn=cmd_collect)
    for name, fn in (("solve", cmd_solve), ("oracle", cmd_oracle), ("export-mip", cmd_export_mip)):
        p = common(sub.add_parser(name), config=False)
        problem_args(p)
        p.set_defaults(fn=fn)
    p = common(sub.add_parser("evaluate", help="train a grouping and report losses"))
    p.add_argument("--groups", required=True, help="JSON list of groups or a solve result")
    p.set_defaults(fn=cmd_evaluate)
    common(sub.add_parser("verify", help="randomised checks of the gain bound and ordering")).set_defaults(
        fn=cmd_verify
    )
    p = common(sub.add_parser("cost", help="collection cost coefficients"), config=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", choices=["tag", "ours", "ours_sampling"])
    p.add_argument("--variant", choices=["appendix", "main-text"], default="appendix")
    p.add_argument("--F", type=float, default=1.0)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--audit-steps", type=int, default=0, help="also audit simulated counters")
    p.set_defaults(fn=cmd_cost)
    common(sub.add_parser("pipeline", help="collect, solve and evaluate per split")).set_defaults(fn=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, SizeGuardError, TaskGroupError) as exc:
        # json.JSONDecodeError is a ValueError
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
