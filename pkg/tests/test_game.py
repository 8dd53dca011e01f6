import numpy as np
import pytest

from conftest import demo_sets
from nashkkt.core import AgentSpec, FamilySpec, ScenarioSpec
from nashkkt.game import Game, best_response, kkt_residual, solve_nash, straight_line
from nashkkt.harness.scenarios import scenario_entry

CERTIFIED = ["di_elliptic", "di_elliptic_known_shape", "di_polytopic", "di_box", "di_proximity",
             "di_velocity_sphere", "uni_los", "si_nonlinear", "si_two_radius", "di_scaling_4", "quad_box"]


def pair(T=10, dt=1.0, origins=((0.0, 0.0), (10.0, 10.0)), goals=((10.0, 10.0), (0.0, 0.0)), fam=None,
         dyn="double_int"):
    dims = {"double_int": (4, 2), "single_int": (2, 2)}[dyn]
    agents = tuple(AgentSpec(*dims, dyn, "individual_smoothness") for _ in range(2))
    return ScenarioSpec(agents, T, dt, fam, origins, goals)


@pytest.mark.parametrize("name", CERTIFIED)
def test_demos_certified_at_birth(name):
    e = scenario_entry(name)
    for ds, cert in demo_sets(name):
        spec = ds.scenario
        xi = ds.trajectories[0].data
        game = Game(spec, e.theta_star, e.theta_bar_star)
        assert np.max(kkt_residual(spec, e.theta_star, xi, cert, e.theta_bar_star)) < 1e-6
        assert np.max(np.abs(game.h(xi))) < 1e-8
        g = game.g(xi)
        assert np.max(game.block_values(g), initial=-np.inf) <= 1e-8
        lam = game.join_lam(cert.lam[0], cert.lam_known[0])
        assert np.all(lam >= -1e-7)
        assert np.max(np.abs(lam * g), initial=0.0) <= 1e-7


def test_elliptic_demo_activates_constraint():
    e = scenario_entry("di_elliptic")
    (ds, cert), = demo_sets("di_elliptic")
    g = Game(ds.scenario, e.theta_star).g(ds.trajectories[0].data)
    assert np.sum(np.abs(g) <= 1e-6) >= 1
    assert max(float(np.max(l)) for l in cert.lam[0]) > 1e-6


def test_no_unknown_constraint_gives_straight_line():
    spec = pair()
    tr, cert = solve_nash(spec)
    lay = spec.layout()
    for i in range(2):
        P = tr.data[lay.pos_idx(i)]
        want = np.linspace(spec.origins[i], spec.goals[i], spec.horizon)
        assert np.allclose(P, want, atol=1e-9)
    assert max(cert.residuals[0]) < 1e-9


def test_straight_line_initializer_pins_boundaries():
    spec = pair()
    xi = straight_line(spec, perturb=0.5, seed=3)
    assert np.max(np.abs(Game(spec).h(xi))) < 1e-12


def test_head_on_symmetry():
    # agents swap places through a disc constraint; the equilibrium is point-symmetric
    fam = FamilySpec.make("spherical", ((0, 0), (20, 20)))
    spec = pair(T=12, origins=((0.0, 0.0), (10.0, 0.0)), goals=((10.0, 0.0), (0.0, 0.0)), fam=fam,
                dyn="single_int")
    tr, _ = solve_nash(spec, (9.0, 9.0))
    lay = spec.layout()
    P0, P1 = tr.data[lay.pos_idx(0)], tr.data[lay.pos_idx(1)]
    center = np.array([5.0, 0.0])
    assert np.allclose(P1, 2 * center - P0, atol=1e-6)


def test_best_response_far_opponent_is_straight():
    fam = FamilySpec.make("spherical", ((0, 0), (20, 20)))
    spec = pair(T=8, origins=((0.0, 0.0), (0.0, 100.0)), goals=((10.0, 0.0), (10.0, 100.0)), fam=fam)
    game = Game(spec, (4.0, 4.0))
    xi = straight_line(spec, perturb=1.0, seed=0)
    out = best_response(game, xi, 0, np.zeros(0, int))
    lay = spec.layout()
    assert np.allclose(out[lay.pos_idx(0)], np.linspace((0, 0), (10, 0), 8), atol=1e-6)
    assert np.array_equal(out[lay.agent_idx(1)], xi[lay.agent_idx(1)])


def test_best_response_touches_active_disc():
    # T=3 single integrator; the midpoint is pushed out to the circle of radius 2 around the opponent
    fam = FamilySpec.make("spherical", ((0, 0), (20, 20)))
    spec = pair(T=3, origins=((0.0, 0.0), (5.0, 0.5)), goals=((10.0, 0.0), (5.0, 0.5)), fam=fam,
                dyn="single_int")
    game = Game(spec, (4.0, 4.0))
    lay = spec.layout()
    xi = straight_line(spec)
    xi[lay.pos_idx(1)[1]] = (5.0, 0.5)
    sel = game.select_faces(xi)
    out = best_response(game, xi, 0, sel)
    mid = out[lay.pos_idx(0)[1]]
    assert np.linalg.norm(mid - np.array([5.0, 0.5])) == pytest.approx(2.0, abs=1e-8)
    # projected-QP oracle: for this symmetric geometry the optimum sits straight below the opponent
    assert mid == pytest.approx([5.0, -1.5], abs=1e-6)


def test_zero_multipliers_straight_line_residual_zero():
    spec = pair()
    xi = straight_line(spec)
    res = kkt_residual(spec, None, xi)
    assert np.max(res) < 1e-9


def test_residual_grows_with_perturbation():
    e = scenario_entry("di_elliptic")
    (ds, cert), = demo_sets("di_elliptic")
    xi = ds.trajectories[0].data
    rng = np.random.default_rng(0)
    means = []
    for delta in (1e-3, 1e-2, 1e-1):
        vals = [kkt_residual(ds.scenario, e.theta_star, xi + delta * rng.normal(size=xi.size), cert).sum()
                for _ in range(30)]
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def test_unilateral_deviations_do_not_improve_cost():
    e = scenario_entry("di_elliptic")
    (ds, _), = demo_sets("di_elliptic")
    spec = ds.scenario
    xi = ds.trajectories[0].data
    game = Game(spec, e.theta_star)
    lay = spec.layout()
    from nashkkt.dynamics import models_for
    models = models_for(spec)
    rng = np.random.default_rng(1)
    tried = 0
    while tried < 20:
        i = int(rng.integers(2))
        P = xi[lay.pos_idx(i)].copy()
        P[1:-1] += rng.uniform(-1e-3, 1e-3, P[1:-1].shape)
        X, U = models[i].from_positions(P, spec.dt)
        x = xi.copy()
        x[lay.state_idx(i)] = X
        x[lay.control_idx(i)] = U
        if np.max(game.block_values(game.g(x))) > 0:
            continue          # infeasible deviation
        tried += 1
        assert game.costs.value(i, x) >= game.costs.value(i, xi) - 1e-8


def test_solver_deterministic():
    e = scenario_entry("di_elliptic")
    a, _ = solve_nash(e.spec, e.theta_star, seed=0)
    b, _ = solve_nash(e.spec, e.theta_star, seed=0)
    assert np.array_equal(a.data, b.data)
