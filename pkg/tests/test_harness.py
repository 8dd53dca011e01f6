import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import demo_sets
from nashkkt.core import DemonstrationSet, FamilySpec, Trajectory
from nashkkt.harness.cli import EXIT_DATA, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_OK, main
from nashkkt.harness.metrics import metrics, violation_rate
from nashkkt.harness.pipeline import noisy_trajectory, run_pipeline
from nashkkt.harness.scenarios import list_scenarios, scenario_entry
from nashkkt.harness.svg import emit_svg


def write_demos(tmp_path, name):
    paths = []
    for k, (ds, _) in enumerate(demo_sets(name)):
        p = tmp_path / f"{name}_{k}.json"
        p.write_text(ds.to_json())
        paths.append(str(p))
    return paths


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


# ---------------------------------------------------------------------------
# scenario library


def test_library_lists_every_entry():
    names = list_scenarios()
    assert len(names) == len(set(names))
    for n in names:
        e = scenario_entry(n)
        assert e.name == n and len(e.theta_star) > 0
    with pytest.raises(KeyError):
        scenario_entry("nope")


def test_reference_scenario_constants():
    e = scenario_entry("di_elliptic")
    assert e.theta_star[:3] == (49.0, 4.0, 1.0)
    assert (e.spec.horizon, e.spec.dt) == (10, 1.0)
    assert e.spec.origins == ((0.0, 0.0), (10.0, 10.0)) and e.spec.goals == ((10.0, 10.0), (0.0, 0.0))
    assert scenario_entry("di_box").theta_star == (-6.0, -6.0, -6.0, -6.0, -4.0, -4.0)
    assert scenario_entry("quad_sphere").theta_star == (6.0, 8.0, 9.0)
    assert scenario_entry("si_nonlinear_cost").theta_bar_star[0] == 0.73
    p = scenario_entry("di_mppi").plan_spec()
    assert (p.horizon, p.dt) == (20, 0.1)
    assert scenario_entry("di_mppi").theta_star == (25.0, 25.0)


# ---------------------------------------------------------------------------
# CLI


def test_cli_list(capsys):
    assert main(["list-scenarios"]) == EXIT_OK
    assert "di_elliptic" in capsys.readouterr().out


def test_cli_gen_infer_volumes_plan(tmp_path):
    assert run(tmp_path, "gen-demos", "--scenario", "di_elliptic_known_shape") == EXIT_OK
    demos = str(tmp_path / "demos_0.json")
    assert run(tmp_path, "infer", "--demos", demos) == EXIT_OK
    res = json.loads((tmp_path / "inference.json").read_text())
    assert np.allclose(res["theta"], [49.0, 49.0], atol=1e-4)
    assert run(tmp_path, "extract-volumes", "--demos", demos, "--budget", "2",
               "--param-query", "[20.0, 49.0]") == EXIT_OK
    atlas = json.loads((tmp_path / "atlas.json").read_text())
    assert any(v["label"] == "rejected_params" for v in atlas["volumes"])
    assert run(tmp_path, "plan", "--scenario", "di_elliptic_known_shape", "--theta",
               str(tmp_path / "inference.json"), "--atlas", str(tmp_path / "atlas.json")) == EXIT_OK
    plan = json.loads((tmp_path / "plan_report.json").read_text())
    assert plan["max_violation_learned"] <= 1e-8


def test_cli_corrupted_demo_exit_code(tmp_path):
    path, = write_demos(tmp_path, "di_baseline")
    d = json.loads(open(path).read())
    d["trajectories"][0][7] += 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert run(tmp_path, "infer", "--demos", str(bad)) == EXIT_DATA


def test_cli_hash_mismatch_is_data_error(tmp_path):
    path, = write_demos(tmp_path, "di_baseline")
    d = json.loads(open(path).read())
    d["scenario_hash"] = "0" * len(d["scenario_hash"])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert run(tmp_path, "infer", "--demos", str(bad)) == EXIT_DATA


def test_cli_inconsistent_family_exit_code(tmp_path):
    (ds, _), = demo_sets("di_baseline")
    spec = ds.scenario.replace(unknown_family=FamilySpec.make("spherical", ((0, 0), (10, 10))))
    tr = Trajectory(ds.trajectories[0].data, spec.layout(), spec.digest())
    p = tmp_path / "capped.json"
    p.write_text(DemonstrationSet(spec, (tr,)).to_json())
    assert run(tmp_path, "infer", "--demos", str(p)) == EXIT_INFEASIBLE


def test_cli_solver_limit_exit_code(tmp_path):
    paths = write_demos(tmp_path, "di_box")
    assert run(tmp_path, "--milp-node-limit", "1", "--milp-time-limit", "1e-6", "infer", "--demos",
               *paths) == EXIT_LIMIT


def test_cli_report_exit_codes(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"scenario": "di_elliptic_known_shape", "stages": ["gen-demos", "infer"]}))
    assert run(tmp_path, "report", "--config", str(good)) == EXIT_OK
    nodemo = tmp_path / "nodemo.json"
    nodemo.write_text(json.dumps({"scenario": "di_elliptic_known_shape", "stages": ["infer"]}))
    assert run(tmp_path, "report", "--config", str(nodemo)) == EXIT_DATA


def test_cli_rejects_unknown_encoding(tmp_path):
    with pytest.raises(SystemExit):
        run(tmp_path, "infer", "--demos", "x.json", "--encoding", "bogus")


# ---------------------------------------------------------------------------
# pipeline


FULL = {"scenario": "di_elliptic_known_shape", "seed": 0,
        "stages": ["gen-demos", "infer", "extract-volumes", "plan", "report"],
        "volumes": {"budget": 3, "strategy": "jitter", "variants": ["safe", "unsafe"]},
        "plan": {"mode": "kkt"}}


def test_pipeline_deterministic_without_timings(tmp_path):
    a = run_pipeline(FULL, str(tmp_path / "a"))
    b = run_pipeline(FULL, str(tmp_path / "b"))
    assert a.failure is None
    assert a.to_json(timings=False) == b.to_json(timings=False)
    assert set(a.wall_times) == set(FULL["stages"])
    assert (tmp_path / "a" / "report.json").exists() and (tmp_path / "a" / "demos_0.json").exists()
    assert a.safety["metrics"]["safe"]


def test_pipeline_empty_and_unknown_stages():
    rep = run_pipeline({"scenario": "di_baseline", "stages": []})
    assert rep.stages == [] and rep.failure is None and rep.wall_times == {}
    with pytest.raises(ValueError):
        run_pipeline({"scenario": "di_baseline", "stages": ["bake"]})


def test_pipeline_records_failing_stage():
    rep = run_pipeline({"scenario": "di_baseline", "stages": ["gen-demos", "plan"],
                        "plan": {"mode": "teleport"}})
    assert rep.failure["stage"] == "plan" and rep.failure["error"] == "ValueError"
    assert "gen-demos" in rep.wall_times


def test_noise_keeps_dynamics_and_boundaries():
    from nashkkt.game import Game
    (ds, _), = demo_sets("di_baseline")
    spec = ds.scenario
    tr = noisy_trajectory(spec, ds.trajectories[0], 0.1, 3)
    assert np.max(np.abs(Game(spec).h(tr.data))) < 1e-9
    assert not np.allclose(tr.data, ds.trajectories[0].data)
    again = noisy_trajectory(spec, ds.trajectories[0], 0.1, 3)
    assert np.array_equal(tr.data, again.data)


# ---------------------------------------------------------------------------
# metrics and plots


def test_metrics_on_straight_swap():
    from nashkkt.planning import mppi_init
    spec = scenario_entry("di_baseline").plan_spec()
    xi = mppi_init(spec).xi
    m = metrics(spec, xi, (49.0, 49.0))
    P0 = np.linspace(spec.origins[0], spec.goals[0], spec.horizon)
    P1 = np.linspace(spec.origins[1], spec.goals[1], spec.horizon)
    d = np.linalg.norm(P0 - P1, axis=1)
    assert np.allclose(m["min_distance_t"], d)
    # every knot closer than 7 violates: 10, 7.78, 5.56, 3.33, 1.11, ...
    assert m["violations"] == 2 * int(np.sum(d < 7.0)) and not m["safe"]
    assert violation_rate([m, metrics(spec, xi, (0.0, 0.0))]) == 0.5
    assert violation_rate([]) == 0.0


def test_svg_is_valid_and_scaled(tmp_path):
    P = [np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 3.0]]), np.array([[3.0, 0.0], [2.0, 1.0]])]
    out = tmp_path / "p.svg"
    text = emit_svg(P, str(out), circles=[(1.0, 1.0, 7.0)], active=[(1.0, 2.0)], scale=20.0,
                    title="a <b> & c")
    assert out.read_text() == text
    root = ET.fromstring(text)
    ns = "{http://www.w3.org/2000/svg}"
    circles = root.findall(f".//{ns}circle")
    assert len(circles) == 1 and float(circles[0].get("r")) == 140.0
    assert len(root.findall(f".//{ns}polyline")) == 2
    assert len(root.findall(f".//{ns}rect")) == 1
    assert root.find(f"{ns}title").text == "a <b> & c"
