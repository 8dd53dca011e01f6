import json
from itertools import product

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import demo_sets
from nashkkt.constraints import StructuralError, make_family
from nashkkt.core import AgentSpec, DataQualityError, DemonstrationSet, FamilySpec, ScenarioSpec, Trajectory, \
    assemble
from nashkkt.dynamics import models_for
from nashkkt.game import Game, solve_nash
from nashkkt.harness.scenarios import scenario_entry
from nashkkt.inverse import (InferenceInfeasibleError, InverseProblem, assignment_from_certificate,
                             build_encoding, infer, infer_joint_cost_constraint, infer_suboptimal,
                             recertify, theta_intervals)
from nashkkt.volumes import theta_feasible

EXACT = ["di_elliptic_known_shape", "di_baseline", "di_polytopic", "di_box", "di_box_2agent",
         "si_two_radius", "si_nonlinear", "di_scaling_4", "quad_sphere", "di_proximity"]


def problem(name, mode="exact_offset", **kw):
    return InverseProblem([ds for ds, _ in demo_sets(name)], mode, **kw)


# ---------------------------------------------------------------------------
# encoding structure


@pytest.mark.parametrize("name", EXACT)
def test_true_parameter_satisfies_every_row(name):
    e = scenario_entry(name)
    enc = build_encoding(problem(name))
    sets = demo_sets(name)
    # one certificate per demonstration set, merged in demo order
    from nashkkt.core import KktCertificate
    cert = KktCertificate(np.asarray(e.theta_star), tuple(c.lam[0] for _, c in sets),
                          tuple(c.nu[0] for _, c in sets), tuple(c.lam_known[0] for _, c in sets))
    x = assignment_from_certificate(enc, e.theta_star, cert)
    assert enc.model.violation(x) <= 1e-7
    assert enc.model.integrality_gap(x) == 0.0


def test_census_quadcopter_spheres():
    enc = build_encoding(problem("quad_sphere"))
    S = 3 * 2 * 20
    assert enc.census["scalars"] == S
    assert enc.census["binaries"] == 5 * S == enc.model.num_binaries == 600
    assert enc.census["continuous"] == 2 * S + enc.census["eq_rows"] + 3


def test_census_small_frozen():
    enc = build_encoding(problem("di_elliptic_known_shape"))
    assert {k: enc.census[k] for k in ("binaries", "continuous", "scalars", "eq_rows", "vars", "rows")} == \
        {"binaries": 100, "continuous": 122, "scalars": 20, "eq_rows": 80, "vars": 222, "rows": 396}


def test_inactive_block_has_zero_multiplier():
    from nashkkt.milp import solve
    prob = problem("di_elliptic_known_shape")
    enc = build_encoding(prob)
    de = enc.demos[0]
    e = scenario_entry("di_elliptic_known_shape")
    g = de.G0 + de.G1 @ np.asarray(e.theta_star)
    s = int(np.argmin(g))                   # the most slack scalar
    assert g[s] < -10
    m = enc.model.copy()
    m.set_objective([de.lam[s]], [-1.0])
    sol = solve(m, prob.config.milp)
    assert sol.status == "optimal"
    assert sol.x[de.lam[s]] == pytest.approx(0.0, abs=1e-9)


def test_affine_family_rejected_in_exact_mode():
    with pytest.raises(StructuralError):
        problem("di_elliptic", "exact_offset")


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        problem("di_baseline", "nonsense")


def test_corrupted_demo_is_data_quality_error():
    (ds, _), = demo_sets("di_baseline")
    xi = ds.trajectories[0].data.copy()
    xi[5] += 0.3
    bad = DemonstrationSet(ds.scenario, (Trajectory(xi, ds.scenario.layout(), ds.scenario.digest()),))
    with pytest.raises(DataQualityError):
        build_encoding(InverseProblem([bad]))


def test_inconsistent_family_raises_infeasible():
    # demos generated with radius^2 49 cannot be explained when the box caps it at 10
    (ds, _), = demo_sets("di_baseline")
    fam = FamilySpec.make("spherical", ((0, 0), (10, 10)))
    spec = ds.scenario.replace(unknown_family=fam)
    tr = Trajectory(ds.trajectories[0].data, spec.layout(), spec.digest())
    with pytest.raises(InferenceInfeasibleError):
        infer(InverseProblem([DemonstrationSet(spec, (tr,))]))


# ---------------------------------------------------------------------------
# exactness against an active-set enumeration oracle


def tiny_demo(rng, feasible_hint):
    agents = tuple(AgentSpec(2, 2, "single_int", "individual_smoothness") for _ in range(2))
    fam = FamilySpec.make("spherical", ((0.0, 0.0), (9.0, 9.0)), owners=(0,))
    spec = ScenarioSpec(agents, 3, 1.0, fam, ((0.0, 0.0), (2.0, 2.0)), ((4.0, 0.0), (2.0, -2.0)))
    opp = rng.uniform(-1, 1, 2) + (2.0, 0.0)
    if feasible_hint:
        away = rng.normal(size=2)
        mid = np.array([2.0, 0.0]) + rng.uniform(0.1, 1.5) * away / np.linalg.norm(away)
        opp = mid - rng.uniform(0.5, 3.0) * away / np.linalg.norm(away)
    else:
        mid = rng.uniform(-1, 1, 2) + (2.0, 0.0)
    paths = [np.array([(0.0, 0.0), mid, (4.0, 0.0)]), np.array([(2.0, 2.0), opp, (2.0, -2.0)])]
    states, controls = [], []
    for P, m in zip(paths, models_for(spec)):
        X, U = m.from_positions(P, spec.dt)
        states.append(X)
        controls.append(U)
    xi = assemble(spec.layout(), states, controls)
    return spec, xi


def oracle(spec, xi, Mb=1e3):
    """Feasible theta-range of the KKT system by enumerating active sets, one LP per set."""
    fam = make_family(spec, spec.unknown_family)
    game = Game(spec, np.zeros(fam.num_theta))
    G0, G1 = fam.decomposition(xi)
    grad_g = fam.grad(np.zeros(fam.num_theta), xi)
    lay = spec.layout()
    S, P = G0.size, fam.num_theta
    o = lay.agent_idx(0)
    Jh = game.eq.jacobian(0, xi)[:, o]
    c0 = game.costs.grad(0, xi)[o]
    lows, highs = [], []
    others = [(game.eq.jacobian(1, xi)[:, lay.agent_idx(1)], game.costs.grad(1, xi)[lay.agent_idx(1)])]
    # agent 1 owns no constraint: its stationarity is a pure equality-dual system
    for J1, c1 in others:
        y = np.linalg.lstsq(J1.T, -c1, rcond=None)[0]
        if np.max(np.abs(J1.T @ y + c1)) > 1e-9 or np.max(np.abs(y)) > Mb:
            return None
    for A in product((0, 1), repeat=S):
        act = np.flatnonzero(A)
        n = P + act.size + Jh.shape[0]
        A_eq = [np.hstack([np.zeros((o.size, P)), grad_g[np.ix_(act, o)].T, Jh.T])]
        b_eq = [-c0]
        A_eq.append(np.hstack([G1[act], np.zeros((act.size, n - P))]))
        b_eq.append(-G0[act])
        ina = np.setdiff1d(np.arange(S), act)
        A_ub = np.hstack([G1[ina], np.zeros((ina.size, n - P))])
        b_ub = -G0[ina]
        bounds = [(a, b) for a, b in zip(fam.theta_lo, fam.theta_hi)] + [(0, Mb)] * act.size + \
            [(-Mb, Mb)] * Jh.shape[0]
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[0] = sign
            r = linprog(c, A_ub=A_ub if ina.size else None, b_ub=b_ub if ina.size else None,
                        A_eq=np.vstack(A_eq), b_eq=np.concatenate(b_eq), bounds=bounds, method="highs")
            if r.status == 0:
                (lows if sign > 0 else highs).append(r.x[0])
    if not lows:
        return None
    return min(lows), max(highs)


@pytest.mark.parametrize("seed", range(12))
def test_exact_encoding_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(seed)
    spec, xi = tiny_demo(rng, feasible_hint=seed % 2 == 0)
    ds = DemonstrationSet(spec, (Trajectory(xi, spec.layout(), spec.digest()),))
    prob = InverseProblem([ds])
    want = oracle(spec, xi)
    enc = build_encoding(prob)
    iv = theta_intervals(enc, coords=[0])[0]
    if want is None:
        assert np.all(np.isnan(iv))
    else:
        assert iv == pytest.approx(want, abs=1e-6)


# ---------------------------------------------------------------------------
# inference


def test_offset_recovery_pins_radius():
    res = infer(problem("di_elliptic_known_shape"))
    assert res.recertified and res.recertify_residual < 1e-5
    assert np.allclose(res.theta, 49.0, atol=1e-4)
    assert res.identified.all()
    json.dumps(res.to_dict())


def test_relaxed_recovery_recertifies():
    res = infer(problem("di_elliptic", "relaxed_affine"))
    assert res.recertified
    assert res.recertify_residual < 1e-5


def test_unidentified_coordinate_returns_interval():
    # agents far apart never touch the disc: every radius below the closest approach is consistent
    agents = tuple(AgentSpec(4, 2, "double_int", "individual_smoothness") for _ in range(2))
    fam = FamilySpec.make("spherical", ((0, 0), (100, 100)))
    spec = ScenarioSpec(agents, 6, 1.0, fam, ((0.0, 0.0), (0.0, 8.0)), ((10.0, 0.0), (10.0, 8.0)))
    tr, _ = solve_nash(spec, (1.0, 1.0))
    res = infer(InverseProblem([DemonstrationSet(spec, (tr,))]))
    assert not res.identified.any()
    assert res.theta_interval[:, 0] == pytest.approx([0.0, 0.0], abs=1e-9)
    assert res.theta_interval[:, 1] == pytest.approx([64.0, 64.0], abs=1e-6)


def test_two_radius_smaller_radius_unlearnable():
    prob = problem("si_two_radius")
    res = infer(prob)
    lo, hi = res.theta_interval[0]
    assert lo <= 0.5 + 1e-9 and hi >= 4.0 - 1e-6
    assert res.theta_interval[1] == pytest.approx([4.0, 4.0], abs=1e-6)
    for th1 in np.linspace(0.05, 3.95, 5):
        assert theta_feasible(prob, (th1, 4.0))
    assert not theta_feasible(prob, (4.5, 4.0))


def test_recertify_rejects_wrong_parameter():
    prob = problem("di_elliptic_known_shape")
    _, worst, viol = recertify(prob, (49.0, 49.0))
    assert worst < 1e-6 and viol <= 1e-9
    _, worst, viol = recertify(prob, (60.0, 60.0))
    assert viol > 1.0


def test_suboptimal_exact_demos_zero_error():
    res = infer_suboptimal(problem("di_elliptic_known_shape"))
    assert res.stationarity_error < 1e-6


def test_suboptimal_noisy_demo_positive_error():
    from nashkkt.harness.pipeline import noisy_trajectory
    (ds, _), = demo_sets("di_elliptic_known_shape")
    tr = noisy_trajectory(ds.scenario, ds.trajectories[0], 1e-2, 0)
    res = infer_suboptimal(InverseProblem([DemonstrationSet(ds.scenario, (tr,))], "stationarity_min"))
    assert res.stationarity_error > 1e-4


def test_cost_weight_fixed_at_truth_matches_plain_inference():
    name = "si_nonlinear_cost"
    plain = infer(problem(name))
    joint = infer_joint_cost_constraint(problem(name))
    assert plain.recertified and joint.recertified
    lo, hi = joint.theta_interval[:, 0], joint.theta_interval[:, 1]
    assert np.all(lo <= plain.theta + 1e-6) and np.all(plain.theta <= hi + 1e-6)
    assert joint.theta_bar_interval is not None
    tb = joint.theta_bar_interval
    assert np.all(tb[:, 0] <= 0.73 + 1e-6) and np.all(0.73 - 1e-6 <= tb[:, 1])
