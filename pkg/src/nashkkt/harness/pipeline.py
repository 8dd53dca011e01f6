"""Staged experiment pipeline: gen-demos -> infer -> extract-volumes -> plan -> report.

A pipeline config is a JSON object, for example::

    {"scenario": "di_elliptic", "seed": 0, "mode": "relaxed_affine",
     "stages": ["gen-demos", "infer", "extract-volumes", "plan", "report"],
     "volumes": {"budget": 4, "strategy": "jitter", "variants": ["safe", "unsafe"]},
     "plan": {"mode": "kkt"}}

Every stage records its wall time, every input and output is content-hashed,
and the report (minus wall times) is a deterministic function of the config.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..core import DataQualityError, DemonstrationSet, ScenarioSpec, Trajectory, assemble, digest, dumps
from ..dynamics import models_for
from ..game import solve_nash
from ..inverse import InverseProblem, InverseConfig, infer
from ..milp import MilpConfig
from ..planning import MppiConfig, baseline_cost_inference, baseline_plan, plan_kkt, plan_mppi
from ..volumes import VolumeContext, consistency_check, query_scheduler
from .metrics import metrics
from .scenarios import ScenarioEntry, scenario_entry

SCHEMA_VERSION = 1
STAGES = ("gen-demos", "infer", "extract-volumes", "plan", "report")


@dataclass
class ExperimentReport:
    scenario: str = ""
    schema: int = SCHEMA_VERSION
    config_digest: str = ""
    stages: List[str] = field(default_factory=list)
    digests: Dict[str, str] = field(default_factory=dict)
    inference: Dict[str, Any] = field(default_factory=dict)
    volumes: Dict[str, Any] = field(default_factory=dict)
    safety: Dict[str, Any] = field(default_factory=dict)
    solver: Dict[str, Any] = field(default_factory=dict)
    wall_times: Dict[str, float] = field(default_factory=dict)
    failure: Optional[Dict[str, str]] = None

    def to_dict(self, timings: bool = True) -> dict:
        out = {"schema": self.schema, "scenario": self.scenario, "config_digest": self.config_digest,
               "stages": self.stages, "digests": self.digests, "inference": self.inference,
               "volumes": self.volumes, "safety": self.safety, "solver": self.solver,
               "failure": self.failure}
        if timings:
            out["wall_times"] = self.wall_times
        return out

    def to_json(self, timings: bool = True) -> str:
        return dumps(_plain(self.to_dict(timings)), indent=1)


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return o


# ---------------------------------------------------------------------------
# demonstrations


def noisy_trajectory(spec: ScenarioSpec, tr: Trajectory, sigma: float, seed: int) -> Trajectory:
    """Perturb interior positions by N(0, sigma^2) and lift back to consistent dynamics."""
    rng = np.random.default_rng(seed)
    lay = spec.layout()
    states, controls = [], []
    for i, model in enumerate(models_for(spec)):
        P = np.asarray(tr.data, float)[lay.pos_idx(i)].copy()
        P[1:-1] += sigma * rng.normal(size=P[1:-1].shape)
        fv = None if spec.final_vel is None else spec.final_vel[i]
        X, U = model.from_positions(P, spec.dt, final_velocity=fv)
        states.append(X)
        controls.append(U)
    return Trajectory(assemble(lay, states, controls), lay, tr.scenario_digest)


def generate_demos(entry: ScenarioEntry, seed: int = 0, noise: Optional[float] = None) -> List[DemonstrationSet]:
    """One demonstration set per demo scenario of the entry, solved at the true parameters."""
    out = []
    for k, spec in enumerate(entry.demo_specs()):
        tr, _ = solve_nash(spec, entry.theta_star, seed=seed, theta_bar=entry.theta_bar_star)
        if noise:
            tr = noisy_trajectory(spec, tr, noise, seed * 1000 + k)
            out.append(DemonstrationSet(spec, (tr,), (float(noise),)))
        else:
            out.append(DemonstrationSet(spec, (tr,)))
    return out


def load_demos(paths: Sequence[str]) -> List[DemonstrationSet]:
    sets = []
    for p in paths:
        with open(p) as fh:
            sets.append(DemonstrationSet.from_json(fh.read()))
    return sets


def default_mode(entry: ScenarioEntry) -> str:
    from ..constraints import make_family
    fam = make_family(entry.spec, entry.spec.unknown_family)
    return "exact_offset" if fam.offset else "relaxed_affine"


def inverse_config(cfg: dict) -> InverseConfig:
    mc = MilpConfig(time_limit=float(cfg.get("milp_time_limit", 120.0)),
                    node_limit=int(cfg.get("milp_node_limit", 200000)))
    return InverseConfig(M=float(cfg.get("M", 1e4)), M_bar=float(cfg.get("Mbar", 1e3)), milp=mc)


# ---------------------------------------------------------------------------
# pipeline


def run_pipeline(config, out_dir: Optional[str] = None) -> ExperimentReport:
    """Run the declared stages; failures are recorded in the report, not raised.

    ``config`` is a dict or the path of a JSON file.
    """
    if isinstance(config, str):
        with open(config) as fh:
            config = json.load(fh)
    cfg = dict(config)
    rep = ExperimentReport(config_digest=digest(dumps(_plain(cfg))))
    stages = list(cfg.get("stages", []))
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ValueError(f"unknown stages {unknown}; available: {list(STAGES)}")
    rep.stages = stages
    if not stages:
        return rep
    entry = scenario_entry(cfg["scenario"])
    rep.scenario = entry.name
    rep.digests["scenario"] = entry.spec.digest()
    seed = int(cfg.get("seed", 0))
    state: Dict[str, Any] = {}
    current = ""
    try:
        for stage in stages:
            current = stage
            t0 = time.perf_counter()
            _STAGE_FUNCS[stage](entry, cfg, seed, state, rep)
            rep.wall_times[stage] = time.perf_counter() - t0
    except Exception as err:      # recorded, not raised: the report names the failing stage
        rep.failure = {"stage": current, "error": type(err).__name__, "message": str(err)}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for k, ds in enumerate(state.get("demos", [])):
            with open(os.path.join(out_dir, f"demos_{k}.json"), "w") as fh:
                fh.write(ds.to_json())
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            fh.write(rep.to_json())
    return rep


def _stage_demos(entry, cfg, seed, state, rep):
    if cfg.get("demos"):
        demos = load_demos(cfg["demos"])
    else:
        demos = generate_demos(entry, seed, cfg.get("noise"))
    state["demos"] = demos
    for k, ds in enumerate(demos):
        rep.digests[f"demos_{k}"] = digest(ds.to_json())


def _problem(entry, cfg, state):
    if "problem" not in state:
        if "demos" not in state:
            raise DataQualityError("no demonstrations: run gen-demos first or pass demo files")
        mode = cfg.get("mode") or default_mode(entry)
        state["problem"] = InverseProblem(state["demos"], mode, inverse_config(cfg),
                                          cost_unknown=entry.theta_bar_star is not None)
    return state["problem"]


def _stage_infer(entry, cfg, seed, state, rep):
    prob = _problem(entry, cfg, state)
    res = infer(prob)
    state["inference"] = res
    d = res.to_dict()
    rep.inference = {k: d[k] for k in ("status", "theta", "theta_interval", "identified", "theta_bar",
                                       "theta_bar_interval", "stationarity_error", "recertify_residual",
                                       "recertified", "census", "warnings", "theta_names") if k in d}
    rep.solver["inference"] = [{k: v for k, v in s.items() if k != "wall_time"} for s in res.solves]


def _stage_volumes(entry, cfg, seed, state, rep):
    prob = _problem(entry, cfg, state)
    vc = cfg.get("volumes", {})
    res = state.get("inference")
    iv = None if res is None else np.concatenate(
        [res.theta_interval] + ([res.theta_bar_interval] if res.theta_bar_interval is not None else []))
    ctx = VolumeContext.build(prob, iv)
    atlas = query_scheduler(prob, int(vc.get("budget", 4)), vc.get("strategy", "jitter"), seed,
                            tuple(vc.get("variants", ("safe", "unsafe"))), float(vc.get("scale", 0.3)),
                            ctx=ctx, check=consistency_check(ctx, seed=seed))
    state["atlas"] = atlas
    rep.volumes = {"count": len(atlas.volumes),
                   "by_label": {lab: len(atlas.of_label(lab)) for lab in
                                ("guaranteed_safe", "guaranteed_unsafe")},
                   "radii": [v.radius for v in atlas.volumes], "demo_hash": atlas.demo_hash}
    rep.digests["atlas"] = digest(dumps(_plain(atlas.to_dict())))


def _stage_plan(entry, cfg, seed, state, rep):
    pc = cfg.get("plan", {})
    mode = pc.get("mode", "kkt")
    spec = entry.plan_spec(int(pc.get("index", 0)))
    atlas = state.get("atlas")
    if mode == "kkt":
        res = state.get("inference")
        theta = res.theta if res is not None else np.asarray(entry.theta_star)
        traj, srep = plan_kkt(spec, theta, atlas, seed, theta_true=entry.theta_star)
    elif mode == "mppi":
        mc = MppiConfig(**{k: v for k, v in pc.items() if k in ("samples", "iterations", "sigma_u",
                                                               "temperature", "tol")})
        traj, srep = plan_mppi(spec, state.get("demos", []), mc, seed,
                               problem=state.get("problem"), atlas=atlas, theta_true=entry.theta_star)
        srep.pop("history", None)
    elif mode == "baseline":
        w = baseline_cost_inference(state["demos"])
        traj, srep = baseline_plan(spec, w, seed, theta_true=entry.theta_star)
        srep["barrier_weight"] = w
    else:
        raise ValueError(f"unknown plan mode {mode!r}; available: kkt, mppi, baseline")
    state["plan"] = traj
    srep.pop("distance_profile", None)
    rep.safety = dict(srep)
    rep.safety["metrics"] = metrics(spec, traj.data, entry.theta_star)
    rep.digests["plan"] = digest(dumps(_plain(traj.data.tolist())))


def _stage_report(entry, cfg, seed, state, rep):
    rep.solver["stages_completed"] = len(rep.wall_times) + 1


_STAGE_FUNCS = {"gen-demos": _stage_demos, "infer": _stage_infer, "extract-volumes": _stage_volumes,
                "plan": _stage_plan, "report": _stage_report}
