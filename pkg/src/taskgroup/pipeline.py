"""Config-driven runs: collection, theory campaigns and the end-to-end loop."""

from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import StructuralError
from .evaluation import evaluate_grouping
from .gains import write_gain_csv, write_record_log
from .sim import (
    CollectionPolicy,
    LearningRate,
    SyntheticTask,
    TrainState,
    aligned_tasks,
    check_observation1,
    collect_run,
    init_state,
    random_quadratic_tasks,
    random_regression_tasks,
    verify_prop1_bound,
)
from .solver import GroupingProblem, random_feasible_assignment, solve

__all__ = [
    "DEFAULTS",
    "resolve_config",
    "load_config",
    "build_tasks",
    "build_problem",
    "run_collect",
    "run_verify",
    "run_pipeline",
    "dump_json",
]

DEFAULTS = {
    "seed": 0,
    "tasks": {
        "family": "aligned",
        "n": 6,
        "dim": 4,
        "head_dim": 2,
        "clusters": 3,
        "spread": 0.1,
        "separation": 3.0,
        "curvature": [0.5, 1.5],
        "offset": [0.05, 0.2],
    },
    "collection": {
        "steps": 100,
        "eta": 0.05,
        "schedule": "constant",
        "policy": "full",
        "interval": 1,
        "policy_seed": 0,
        "self_gain": "solo_step",
        "aggregation": "sum",
    },
    "problem": {"m": 2, "mode": "cover"},
    "splits": [2, 3, 4],
    "evaluation": {"steps": 100, "eta": 0.05, "random_repeats": 10},
    "verify": {
        "prop1_instances": 200,
        "obs1_instances": 500,
        "max_tasks": 6,
        "max_group": 4,
        "dim": 3,
        "radius": 10.0,
        "offset": [0.1, 1.0],
        "eta": [1e-3, 1e-1],
        "sweep": {"eta_start": 0.1, "eta_stop": 1e-4, "n": 4},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "problem":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(user: dict | None = None) -> dict:
    """Defaults overlaid with ``user`` (``tasks.inline`` replaces the generator)."""
    cfg = _merge(DEFAULTS, user or {})
    if "inline" in (user or {}).get("tasks", {}):
        cfg["tasks"] = {"inline": user["tasks"]["inline"]}
    if "seed" not in cfg or cfg["seed"] is None:
        raise StructuralError("config needs a seed")
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    return text


def build_tasks(params: dict, seed: int):
    if "inline" in params:
        return [SyntheticTask.from_dict(t) for t in params["inline"]]
    family = params.get("family", "aligned")
    n, dim, head = int(params["n"]), int(params.get("dim", 4)), int(params.get("head_dim", 2))
    if family == "aligned":
        return aligned_tasks(
            n, clusters=int(params.get("clusters", 3)), dim=dim, seed=seed, head_dim=head,
            spread=params.get("spread", 0.1), separation=params.get("separation", 3.0),
            curvature=tuple(params.get("curvature", (0.5, 1.5))),
            offset=tuple(params.get("offset", (0.05, 0.2))),
        )
    if family == "random":
        return random_quadratic_tasks(
            n, dim=dim, seed=seed, head_dim=head,
            curvature=tuple(params.get("curvature", (0.2, 2.0))),
            offset=tuple(params.get("offset", (0.1, 1.0))),
        )
    if family == "regression":
        return random_regression_tasks(
            n, dim=dim, seed=seed, head_dim=head, offset=tuple(params.get("offset", (0.1, 1.0)))
        )
    raise StructuralError(f"unknown task family {family!r}")


def build_problem(params: dict, gains, m: int | None = None) -> GroupingProblem:
    params = dict(params)
    if m is not None:
        params["m"] = m
    return GroupingProblem.from_dict(params, gains)


def _collection_args(col: dict):
    policy = CollectionPolicy(col["policy"], int(col.get("interval", 1)), int(col.get("policy_seed", 0)))
    lr = LearningRate(float(col["eta"]), col.get("schedule", "constant"))
    return policy, lr


def collect_from_config(cfg: dict):
    tasks = build_tasks(cfg["tasks"], cfg["seed"])
    col = cfg["collection"]
    policy, lr = _collection_args(col)
    result = collect_run(
        tasks, policy, int(col["steps"]), lr, seed=cfg["seed"],
        self_gain_policy=col.get("self_gain", "solo_step"),
        aggregation=col.get("aggregation", "sum"),
    )
    return tasks, result


def run_collect(cfg: dict, out_dir) -> dict:
    """Collect gains and write ``gains.csv``, ``records.jsonl`` and ``counters.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(cfg, out / "config.json")
    _, result = collect_from_config(cfg)
    write_gain_csv(result.gains, out / "gains.csv")
    write_record_log(result.records, out / "records.jsonl")
    dump_json(result.counter.to_dict(), out / "counters.json")
    skipped = sum(len(r.skipped) for r in result.records)
    return {"coverage": result.gains.coverage_summary(), "rounds": len(result.records), "skipped": skipped}


# -- theory campaigns ----------------------------------------------------------


def _random_state(rng, tasks, eta, scale=1.0):
    p = tasks[0].shared_dim
    phi = scale * rng.standard_normal(p)
    thetas = [rng.standard_normal(t.head_dim) for t in tasks]
    return TrainState(phi, thetas, 1, eta)


def _log_uniform(rng, lo, hi):
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def eta_sweep(ver: dict, seed: int) -> dict:
    sw = ver["sweep"]
    n = int(sw.get("n", 4))
    tasks = random_quadratic_tasks(n, dim=int(ver["dim"]), seed=seed, offset=tuple(ver["offset"]))
    rng = np.random.default_rng(seed)
    state = _random_state(rng, tasks, 1.0)
    A, j = list(range(n - 2)) or [0], n - 1
    etas, eta = [], float(sw["eta_start"])
    while eta >= float(sw["eta_stop"]) * (1 - 1e-12):
        etas.append(eta)
        eta /= 2
    rows = []
    for eta in etas:
        state.eta = eta
        rep = verify_prop1_bound(state, tasks, A, j, float(ver["radius"]))
        rows.append({"eta": eta, "lhs": rep.lhs, "rhs": rep.rhs, "valid": rep.valid, "holds": rep.holds})
    lhs = [r["lhs"] for r in rows if r["valid"]]
    ratios = [r["lhs"] / r["rhs"] for r in rows if r["valid"]]
    return {
        "rows": rows,
        "monotone": all(a > b for a, b in zip(lhs, lhs[1:])),
        "bounded": all(r["holds"] for r in rows if r["valid"]),
        "valid_rows": len(ratios),
        "max_ratio": max(ratios) if ratios else None,
    }


def run_verify(cfg: dict) -> dict:
    """Randomised campaigns for the gain-ordering equivalence and the group-gain bound."""
    ver = cfg["verify"]
    rng = np.random.default_rng(cfg["seed"])
    offset = tuple(ver["offset"])
    prop = {"instances": 0, "valid": 0, "invalid": 0, "violations": 0, "max_ratio": 0.0, "reasons": {}}
    for _ in range(int(ver["prop1_instances"])):
        n = int(rng.integers(2, int(ver["max_tasks"]) + 1))
        tasks = random_quadratic_tasks(n, dim=int(ver["dim"]), seed=int(rng.integers(2**31)), offset=offset)
        state = _random_state(rng, tasks, _log_uniform(rng, *ver["eta"]))
        j = int(rng.integers(n))
        others = [i for i in range(n) if i != j]
        k = int(rng.integers(1, min(int(ver["max_group"]), len(others)) + 1))
        A = sorted(int(i) for i in rng.choice(others, size=k, replace=False))
        rep = verify_prop1_bound(state, tasks, A, j, float(ver["radius"]))
        prop["instances"] += 1
        if not rep.valid:
            prop["invalid"] += 1
            prop["reasons"][rep.reason] = prop["reasons"].get(rep.reason, 0) + 1
            continue
        prop["valid"] += 1
        prop["max_ratio"] = max(prop["max_ratio"], rep.lhs / rep.rhs)
        if not rep.holds:
            prop["violations"] += 1

    obs = {"instances": 0, "valid": 0, "violations": 0}
    for _ in range(int(ver["obs1_instances"])):
        n = int(rng.integers(3, int(ver["max_tasks"]) + 1))
        tasks = random_quadratic_tasks(n, dim=int(ver["dim"]), seed=int(rng.integers(2**31)), offset=offset)
        state = _random_state(rng, tasks, _log_uniform(rng, *ver["eta"]))
        j = int(rng.integers(n))
        others = [i for i in range(n) if i != j]
        A1 = rng.choice(others, size=int(rng.integers(1, len(others) + 1)), replace=False)
        A2 = rng.choice(others, size=int(rng.integers(1, len(others) + 1)), replace=False)
        rep = check_observation1(state, tasks, A1.tolist(), A2.tolist(), j)
        obs["instances"] += 1
        if rep.valid:
            obs["valid"] += 1
            if not rep.consistent:
                obs["violations"] += 1

    sweep = eta_sweep(ver, cfg["seed"])
    ok = prop["violations"] == 0 and obs["violations"] == 0 and sweep["bounded"]
    return {"prop1": prop, "obs1": obs, "eta_sweep": sweep, "pass": ok}


# -- end-to-end loop -----------------------------------------------------------


def _job(kind, cfg, tasks, gains, m, start, repeat=None, solver_threads=1):
    ev = cfg["evaluation"]
    kwargs = dict(steps=int(ev["steps"]), state=start, lr=float(ev["eta"]),
                  aggregation=cfg["collection"].get("aggregation", "sum"), compare_solo=False)
    problem = build_problem(cfg["problem"], gains, m)
    if kind == "ours":
        res = solve(problem, threads=solver_threads)
        if not res.feasible:
            return {"feasible": False, "reason": res.reason}
        rep = evaluate_grouping(res, tasks, **kwargs)
        return {
            "feasible": True,
            "groups": [[gains.names[i] for i in g] for g in res.groups],
            "objective": res.objective,
            "total_loss": rep.total,
            "solver": res.to_dict(gains.names, timing=False)["stats"],
        }
    rng = np.random.default_rng([int(cfg["seed"]), int(m), int(repeat)])
    res = random_feasible_assignment(problem, rng)
    rep = evaluate_grouping(res, tasks, **kwargs)
    return {"groups": [[gains.names[i] for i in g] for g in res.groups], "total_loss": rep.total}


def run_pipeline(cfg: dict, out_dir=None, threads: int = 1) -> dict:
    """Collect, solve each split, evaluate and compare with baselines.

    Independent solves and random-baseline evaluations fan out over
    ``threads`` workers; results are gathered in a fixed order so the summary
    does not depend on scheduling.
    """
    tasks, result = collect_from_config(cfg)
    gains = result.gains
    ev = cfg["evaluation"]
    start = init_state(tasks, seed=cfg["seed"])
    base = evaluate_grouping([[i] for i in range(len(tasks))], tasks, int(ev["steps"]), start,
                             lr=float(ev["eta"]), compare_solo=False)
    mtl = evaluate_grouping([list(range(len(tasks)))], tasks, int(ev["steps"]), start,
                            lr=float(ev["eta"]), compare_solo=False)
    splits = [int(m) for m in cfg["splits"]]
    repeats = int(ev["random_repeats"])
    jobs = []
    for m in splits:
        jobs.append(("ours", m, None))
        jobs += [("random", m, r) for r in range(repeats)]

    def run(job):
        kind, m, r = job
        try:
            return _job(kind, cfg, tasks, gains, m, start, r)
        except Exception as exc:  # surfaced in the summary, not swallowed
            return {"error": f"{type(exc).__name__}: {exc}"}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, jobs))
    else:
        outputs = [run(job) for job in jobs]

    per_split = []
    for m in splits:
        ours = next(o for (k, mm, _), o in zip(jobs, outputs) if k == "ours" and mm == m)
        rand = [o for (k, mm, _), o in zip(jobs, outputs) if k == "random" and mm == m]
        totals = [o["total_loss"] for o in rand if "total_loss" in o]
        entry = {"m": m, "ours": ours, "random_totals": totals}
        entry["random_mean"] = float(np.mean(totals)) if totals else None
        if ours.get("feasible") and totals:
            entry["ours_le_random"] = ours["total_loss"] <= entry["random_mean"]
        per_split.append(entry)
    ours_totals = [s["ours"].get("total_loss") for s in per_split]
    finite = [t for t in ours_totals if t is not None]
    summary = {
        "tasks": list(gains.names),
        "stl_total": base.total,
        "mtl_total": mtl.total,
        "splits": per_split,
        "trend_non_increasing": all(a >= b for a, b in zip(finite, finite[1:])),
        "coverage": gains.coverage_summary(),
        "collection_rounds": len(result.records),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_json(cfg, out / "config.json")
        write_gain_csv(gains, out / "gains.csv")
        dump_json(summary, out / "summary.json")
    return summary
