"""Command-line entry point.

Exit codes: 0 ok, 2 inference infeasible, 3 data-quality error, 4 solver limits.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from ..core import DataQualityError, ScenarioSpec, dumps
from ..inverse import MODES, InferenceInfeasibleError, InverseProblem, infer
from ..planning import MppiConfig, baseline_cost_inference, baseline_plan, plan_kkt, plan_mppi
from ..volumes import (VolumeAtlas, VolumeContext, consistency_check, extract_parameter_volume,
                       query_scheduler)
from .pipeline import _plain, generate_demos, inverse_config, load_demos, run_pipeline
from .scenarios import list_scenarios, scenario_entry

EXIT_OK, EXIT_INFEASIBLE, EXIT_DATA, EXIT_LIMIT = 0, 2, 3, 4


def _write(args, name: str, obj) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    path = name if os.path.isabs(name) else os.path.join(args.out_dir, name)
    with open(path, "w") as fh:
        fh.write(obj if isinstance(obj, str) else dumps(_plain(obj), indent=1))
    return path


def _milp_cfg(args) -> dict:
    return {"milp_time_limit": args.milp_time_limit, "milp_node_limit": args.milp_node_limit,
            "M": args.milp_M, "Mbar": args.milp_Mbar}


def _problem(args) -> InverseProblem:
    demos = load_demos(args.demos)
    mode = args.encoding
    if mode is None:
        from ..constraints import make_family
        sc = demos[0].scenario
        mode = "exact_offset" if make_family(sc, sc.unknown_family).offset else "relaxed_affine"
    return InverseProblem(demos, mode, inverse_config(_milp_cfg(args)), cost_unknown=args.cost_unknown)


def _scenario(text: str, plan: bool = False):
    """Library name (planning boundary when ``plan``) or scenario JSON file."""
    if os.path.exists(text):
        with open(text) as fh:
            return ScenarioSpec.from_json(fh.read()), None
    entry = scenario_entry(text)
    return (entry.plan_spec() if plan else entry.spec), entry


def cmd_list(args) -> int:
    for name in list_scenarios():
        e = scenario_entry(name)
        print(f"{name:26s} theta*={tuple(e.theta_star)}  {e.description}")
    return EXIT_OK


def cmd_gen_demos(args) -> int:
    entry = scenario_entry(args.scenario)
    sets = generate_demos(entry, args.seed, args.noise)
    for k, ds in enumerate(sets):
        print(_write(args, f"demos_{k}.json", ds.to_json()))
    return EXIT_OK


def cmd_infer(args) -> int:
    prob = _problem(args)
    res = infer(prob)
    print(_write(args, args.out, res.to_dict()))
    print("theta", np.round(res.theta, 6).tolist() if res.theta is not None else None)
    return EXIT_LIMIT if res.status == "limit" else EXIT_OK


def cmd_volumes(args) -> int:
    prob = _problem(args)
    ctx = VolumeContext.build(prob)
    atlas = query_scheduler(prob, args.budget, args.strategy, args.seed, tuple(args.variants),
                            args.scale, ctx=ctx, check=consistency_check(ctx, seed=args.seed))
    for k, q in enumerate(args.param_query or []):
        atlas.add(extract_parameter_volume(ctx, json.loads(q), query_id=f"param:{k}"))
    print(_write(args, args.out, atlas.to_dict()))
    print(f"{len(atlas.volumes)} volumes")
    return EXIT_OK


def cmd_plan(args) -> int:
    spec, entry = _scenario(args.scenario, plan=True)
    truth = None if entry is None else entry.theta_star
    atlas = None
    if args.atlas:
        with open(args.atlas) as fh:
            atlas = VolumeAtlas.from_dict(json.load(fh))
    if args.mode == "kkt":
        if args.theta:
            with open(args.theta) as fh:
                tj = json.load(fh)
            theta = np.asarray(tj["theta"] if isinstance(tj, dict) else tj, float)
        elif args.demos:
            theta = infer(_problem(args)).theta
        else:
            raise DataQualityError("plan --mode kkt needs --theta or --demos")
        traj, rep = plan_kkt(spec, theta, atlas, args.seed, theta_true=truth)
    elif args.mode == "mppi":
        demos = load_demos(args.demos or [])
        cfg = MppiConfig(samples=args.samples, iterations=args.iterations, sigma_u=args.sigma_u)
        traj, rep = plan_mppi(spec, demos, cfg, args.seed, atlas=atlas, theta_true=truth)
    else:
        w = baseline_cost_inference(load_demos(args.demos or []))
        traj, rep = baseline_plan(spec, w, args.seed, theta_true=truth)
        rep["barrier_weight"] = w
    print(_write(args, args.out, {"scenario_hash": spec.digest(), "trajectory": traj.data.tolist()}))
    print(_write(args, args.report, rep))
    print(f"min distance {rep['min_distance']:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    rep = run_pipeline(args.config, args.out_dir)
    print(rep.to_json())
    if rep.failure is None:
        return EXIT_OK
    return {"InferenceInfeasibleError": EXIT_INFEASIBLE,
            "DataQualityError": EXIT_DATA}.get(rep.failure["error"], 1)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nashkkt", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--milp-time-limit", type=float, default=120.0)
    p.add_argument("--milp-node-limit", type=int, default=200000)
    p.add_argument("--milp-M", type=float, default=1e4)
    p.add_argument("--milp-Mbar", type=float, default=1e3)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("list-scenarios", help="list the scenario library")
    s.set_defaults(func=cmd_list)

    s = sub.add_parser("gen-demos", help="solve the forward game at the true parameters")
    s.add_argument("--scenario", required=True)
    s.add_argument("--noise", type=float, default=None)
    s.set_defaults(func=cmd_gen_demos)

    def demo_args(s, required=True):
        s.add_argument("--demos", nargs="+", required=required)
        s.add_argument("--encoding", choices=MODES, default=None)
        s.add_argument("--cost-unknown", action="store_true")

    s = sub.add_parser("infer", help="recover constraint parameters from demonstrations")
    demo_args(s)
    s.add_argument("--out", default="inference.json")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("extract-volumes", help="certified safe/unsafe hypercubes")
    demo_args(s)
    s.add_argument("--budget", type=int, default=4)
    s.add_argument("--strategy", choices=("jitter", "grid", "frontier"), default="jitter")
    s.add_argument("--variants", nargs="+", choices=("safe", "unsafe"), default=["safe", "unsafe"])
    s.add_argument("--scale", type=float, default=0.3)
    s.add_argument("--param-query", action="append", help="JSON list, parameter-volume query")
    s.add_argument("--out", default="atlas.json")
    s.set_defaults(func=cmd_volumes)

    s = sub.add_parser("plan", help="plan with learned constraints")
    s.add_argument("--mode", choices=("kkt", "mppi", "baseline"), default="kkt")
    s.add_argument("--scenario", required=True)
    s.add_argument("--theta")
    demo_args(s, required=False)
    s.add_argument("--atlas")
    s.add_argument("--samples", type=int, default=16)
    s.add_argument("--iterations", type=int, default=70)
    s.add_argument("--sigma-u", type=float, default=3.0)
    s.add_argument("--out", default="plan.json")
    s.add_argument("--report", default="plan_report.json")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("report", help="run a pipeline config and write its report")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InferenceInfeasibleError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DataQualityError as err:
        print(f"data quality: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
