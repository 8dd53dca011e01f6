"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line (printed in the terminal summary by
conftest) and then asserts every sub-check of its criterion.
"""

import time

import numpy as np

from conftest import demo_sets, enumerate_milp, random_milp
from nashkkt.constraints import make_family
from nashkkt.core import DemonstrationSet
from nashkkt.harness.metrics import metrics
from nashkkt.harness.pipeline import noisy_trajectory
from nashkkt.harness.scenarios import scenario_entry
from nashkkt.inverse import InverseProblem, infer, infer_joint_cost_constraint, infer_suboptimal
from nashkkt.milp import MilpConfig, export_mps, import_mps, solve
from nashkkt.planning import MppiConfig, baseline_cost_inference, baseline_plan, plan_kkt, plan_mppi
from nashkkt.volumes import (REJECTED, SAFE, ZERO, VolumeContext, extract_parameter_volume, query_scheduler,
                             theta_feasible)

RESULTS = []


def record(number, title, checks, detail, t0, budget=None):
    """Store the criterion line and fail the test on any unmet check."""
    wall = time.perf_counter() - t0
    if budget is not None:
        checks = dict(checks, runtime=wall < budget)
    failed = [k for k, ok in checks.items() if not ok]
    RESULTS.append((number, title, not failed, f"{detail}; {wall:.1f}s" + (f"; failed: {failed}" if failed else "")))
    assert not failed, f"criterion {number} failed checks {failed}: {detail}"


def sets_of(name):
    return [ds for ds, _ in demo_sets(name)]


def problem(name, mode="exact_offset", **kw):
    return InverseProblem(sets_of(name), mode, **kw)


def active_coordinates(name, tol=1e-6):
    """Parameter coordinates of scalars that are active inside an active block at the true parameter."""
    e = scenario_entry(name)
    out = set()
    for ds in sets_of(name):
        fam = make_family(ds.scenario, ds.scenario.unknown_family)
        for tr in ds:
            g = fam.evaluate(e.theta_star, tr.data, check=False)
            G1 = fam.decomposition(tr.data)[1]
            for b0, bs in zip(fam.block_start, fam.block_size):
                blk = g[b0:b0 + bs]
                if abs(blk.min()) > tol:
                    continue
                for s in b0 + np.flatnonzero(np.abs(blk) <= tol):
                    out.update(np.flatnonzero(G1[s]).tolist())
    return sorted(out)


# ---------------------------------------------------------------------------


def test_criterion_01_elliptic_recovery():
    t0 = time.perf_counter()
    e = scenario_entry("di_elliptic")
    prob = problem("di_elliptic", "relaxed_affine")
    res = infer(prob)
    truth = np.asarray(e.theta_star)
    ident = np.flatnonzero(res.identified)
    err = np.abs(res.theta - truth)
    # pinning: a parameter 1e-2 off any identified coordinate is rejected at that distance
    ctx = VolumeContext.build(prob)
    pins = []
    for k in ident:
        q = truth.copy()
        q[k] += 1e-2
        v = extract_parameter_volume(ctx, q)
        pins.append(v.label == REJECTED and abs(v.radius - 1e-2) < 1e-6)
    checks = {"some identified": ident.size > 0,
              "identified within 1e-3": bool(np.all(err[ident] <= 1e-3)),
              "truth pinned": extract_parameter_volume(ctx, truth).label == ZERO and all(pins),
              "recertified": bool(res.recertified and res.recertify_residual < 1e-5)}
    record(1, "elliptic recovery", checks,
           f"theta={np.round(res.theta, 6).tolist()} identified={res.identified.tolist()} "
           f"residual={res.recertify_residual:.1e}", t0, 120)


def test_criterion_02_polytopic_box_recovery():
    t0 = time.perf_counter()
    truth = np.asarray(scenario_entry("di_box").theta_star)
    checks, parts = {}, []
    for name in ("di_box", "di_box_2agent", "quad_box"):
        res = infer(problem(name))
        act = active_coordinates(name)
        iv = res.theta_interval
        checks[f"{name} active faces within 1e-3"] = bool(len(act) > 0 and
                                                         np.all(np.abs(res.theta[act] - truth[act]) <= 1e-3))
        checks[f"{name} intervals contain truth"] = bool(np.all((iv[:, 0] <= truth + 1e-6) &
                                                                (truth - 1e-6 <= iv[:, 1])))
        checks[f"{name} recertified"] = bool(res.recertified)
        parts.append(f"{name}: active={act} theta={np.round(res.theta, 4).tolist()} "
                     f"open={np.flatnonzero(~res.identified).tolist()}")
    # the two-agent demo leaves some faces unactivated; they are reported as intervals
    res2 = infer(problem("di_box_2agent"))
    checks["2-agent reports unactivated faces as intervals"] = bool((~res2.identified).any())
    record(2, "polytopic offset recovery", checks, " | ".join(parts), t0, 300)


def test_criterion_03_spherical_per_agent_recovery():
    t0 = time.perf_counter()
    truth = np.asarray(scenario_entry("quad_sphere").theta_star)
    res = infer(problem("quad_sphere"))
    central = infer_suboptimal(problem("quad_sphere", "stationarity_min", centralized=True))
    game = infer_suboptimal(problem("quad_sphere", "stationarity_min"))
    err = np.abs(res.theta - truth)
    checks = {f"agent {i} within 1e-3": bool(err[i] <= 1e-3) for i in range(truth.size)}
    checks["single-agent encoding error > 0.1"] = central.stationarity_error > 0.1
    checks["game encoding error < 1e-6"] = game.stationarity_error < 1e-6
    record(3, "spherical per-agent recovery", checks,
           f"theta={np.round(res.theta, 6).tolist()} intervals={np.round(res.theta_interval, 4).tolist()} "
           f"single-agent error={central.stationarity_error:.3f} game error={game.stationarity_error:.1e}",
           t0, 180)


def test_criterion_04_conservativeness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    counts = {SAFE: 0, "guaranteed_unsafe": 0}
    bad = 0
    for name, mode in (("di_elliptic", "relaxed_affine"), ("di_box", "exact_offset"),
                       ("quad_sphere", "exact_offset")):
        e = scenario_entry(name)
        prob = problem(name, mode)
        ctx = VolumeContext.build(prob)
        fam = make_family(e.spec, e.spec.unknown_family)
        for strategy, scale in (("jitter", 0.3), ("grid", 1.0)):
            atlas = query_scheduler(prob, 6, strategy, 0, ("safe", "unsafe"), scale, ctx=ctx)
            for v in atlas.volumes:
                counts[v.label] += 1
                for x in v.sample(1000, rng):
                    bv = fam.block_values(fam.evaluate(e.theta_star, x, check=False)).max()
                    bad += int(bv > 0) if v.label == SAFE else int(bv <= 0)
    checks = {"no contradicting samples": bad == 0, "safe volumes present": counts[SAFE] > 0,
              "unsafe volumes present": counts["guaranteed_unsafe"] > 0}
    record(4, "conservativeness", checks, f"volumes={counts} contradicting samples={bad}", t0, 60)


def test_criterion_05_learnability_limit():
    t0 = time.perf_counter()
    e = scenario_entry("si_two_radius")
    th1, th2 = e.theta_star
    prob = problem("si_two_radius")
    ctx = VolumeContext.build(prob)

    def feasible(a):
        return theta_feasible(ctx, (a, th2))

    def edge(inside, outside):
        for _ in range(40):
            m = 0.5 * (inside + outside)
            inside, outside = (m, outside) if feasible(m) else (inside, m)
        return inside

    assert feasible(th1)
    lo = 0.0 if feasible(0.0) else edge(th1, 0.0)
    hi = edge(th1, 10.0) if not feasible(10.0) else 10.0
    checks = {"interval covers [0.5 true, agent-2 value]": lo <= 0.5 * th1 + 1e-9 and hi >= th2 - 1e-6}
    record(5, "learnability limit", checks, f"agent-1 feasible interval [{lo:.6f}, {hi:.6f}]", t0, 60)


def test_criterion_06_mppi():
    t0 = time.perf_counter()
    e = scenario_entry("di_mppi")
    spec = e.plan_spec()
    cfg = MppiConfig(samples=16, iterations=70)
    dist, goal = [], []
    for seed in range(3):
        _, rep = plan_mppi(spec, sets_of("di_mppi"), cfg, seed, theta_true=e.theta_star)
        dist.append(rep["min_distance"])
        goal.append(max(rep["goal_error"]))
    checks = {"T=20, dt=0.1": (spec.horizon, spec.dt) == (20, 0.1),
              "min distance >= 4.95": min(dist) >= 4.95, "goal error <= 0.1": max(goal) <= 0.1}
    record(6, "MPPI reproduction", checks,
           f"min distances={np.round(dist, 4).tolist()} goal errors={[f'{g:.1e}' for g in goal]}", t0, 600)


def random_swaps(n, seed=0, clearance=7.5):
    """Two-agent crossings with distinct starts and goals, separated by more than the true radius."""
    spec = scenario_entry("di_baseline").spec
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        c = rng.uniform(3, 7, 2)
        a = rng.uniform(0, 2 * np.pi)
        b = a + np.pi + rng.uniform(-0.6, 0.6)
        L = rng.uniform(4, 6)
        u, v = np.array([np.cos(a), np.sin(a)]), np.array([np.cos(b), np.sin(b)])
        s0, g0, s1, g1 = c + L * u, c - L * u, c + L * v, c - L * v
        if np.linalg.norm(s0 - s1) < clearance:
            continue
        out.append(spec.replace(origins=(tuple(s0), tuple(s1)), goals=(tuple(g0), tuple(g1))))
    return out


def test_criterion_07_baseline_comparison():
    t0 = time.perf_counter()
    e = scenario_entry("di_baseline")
    sets = sets_of("di_baseline")
    theta = infer(InverseProblem(sets)).theta
    w = baseline_cost_inference(sets)
    learned, barrier = [], []
    for k, spec in enumerate(random_swaps(20)):
        tk, _ = plan_kkt(spec, theta, seed=k)
        learned.append(metrics(spec, tk.data, e.theta_star)["violations"])
        tb, _ = baseline_plan(spec, w, seed=k)
        barrier.append(metrics(spec, tb.data, e.theta_star)["violations"])
    n_bad = sum(v > 0 for v in barrier)
    checks = {"learned plans: 0 violations": sum(learned) == 0, "barrier: >= 1 violating scenario": n_bad >= 1}
    record(7, "baseline comparison", checks,
           f"barrier weight={w:.3f} learned violations={sum(learned)} barrier violating scenarios={n_bad}/20",
           t0, 600)


def test_criterion_08_suboptimal_demos():
    t0 = time.perf_counter()
    (ds, _), = demo_sets("di_elliptic_known_shape")
    exact = infer_suboptimal(InverseProblem([ds], "stationarity_min")).stationarity_error
    med = []
    for sigma in (1e-3, 1e-2, 1e-1):
        errs = []
        for seed in range(10):
            tr = noisy_trajectory(ds.scenario, ds.trajectories[0], sigma, seed)
            p = InverseProblem([DemonstrationSet(ds.scenario, (tr,))], "stationarity_min")
            errs.append(infer_suboptimal(p).stationarity_error)
        med.append(float(np.median(errs)))
    checks = {"exact demos < 1e-6": exact < 1e-6, "median increasing in sigma": med[0] < med[1] < med[2]}
    record(8, "suboptimal demonstrations", checks,
           f"exact={exact:.1e} medians={np.round(med, 4).tolist()}", t0, 300)


def test_criterion_09_milp_engine(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    cfg = MilpConfig(backend="bnb")
    mismatches = 0
    for _ in range(200):
        m = random_milp(rng)
        status, obj = enumerate_milp(m)
        sol = solve(m, cfg)
        if sol.status != status or (status == "optimal" and abs(sol.objective - obj) > 1e-6):
            mismatches += 1
    trips = 0
    for k in range(50):
        m = random_milp(rng)
        path = tmp_path / f"m{k}.mps"
        export_mps(m, path)
        b = import_mps(path)
        same = (m.num_vars == b.num_vars and m.num_rows == b.num_rows and m.binary == b.binary
                and np.array_equal(np.asarray(m.lo), np.asarray(b.lo))
                and np.array_equal(np.asarray(m.hi), np.asarray(b.hi))
                and np.array_equal(m.objective_vector(), b.objective_vector())
                and all(ra.sense == rb.sense and ra.rhs == rb.rhs
                        and {int(j): c for j, c in zip(ra.idx, ra.coef) if c != 0}
                        == {int(j): c for j, c in zip(rb.idx, rb.coef)} for ra, rb in zip(m.rows, b.rows)))
        trips += int(same)
    checks = {"200 models match enumeration": mismatches == 0, "50 exact MPS round-trips": trips == 50}
    record(9, "MILP engine oracle", checks, f"mismatches={mismatches}/200 round-trips={trips}/50", t0, 120)


def test_criterion_10_scaling():
    t0 = time.perf_counter()
    walls, ok = {}, True
    for n in (2, 4, 6):
        sets = sets_of(f"di_scaling_{n}")
        t = time.perf_counter()
        res = infer(InverseProblem(sets))
        walls[n] = time.perf_counter() - t
        ok &= res.status == "feasible" and bool(np.all(np.abs(res.theta - 9.0) <= 1e-3))
    checks = {"feasible with theta within 1e-3": ok}
    record(10, "scaling smoke test", checks,
           "inference wall times " + ", ".join(f"N={n}: {w:.2f}s" for n, w in walls.items()), t0)


def test_criterion_11_joint_cost_constraint():
    t0 = time.perf_counter()
    name = "si_nonlinear_cost"
    e = scenario_entry(name)
    res = infer_joint_cost_constraint(problem(name, cost_unknown=True))
    activates = len(active_coordinates(name)) > 0
    tb_err = np.abs(np.asarray(res.theta_bar) - np.asarray(e.theta_bar_star))
    checks = {"recertified < 1e-5": bool(res.recertified and res.recertify_residual < 1e-5),
              "theta within 1e-3": bool(np.all(np.abs(res.theta - e.theta_star) <= 1e-3)),
              "theta_bar within 1e-2 (demo activates)": (not activates) or bool(np.all(tb_err <= 1e-2))}
    record(11, "joint cost-constraint recovery", checks,
           f"theta={np.round(res.theta, 6).tolist()} theta_bar={np.round(res.theta_bar, 4).tolist()} "
           f"theta_bar interval={np.round(res.theta_bar_interval, 4).tolist()} activates={activates} "
           f"residual={res.recertify_residual:.1e}", t0, 120)
