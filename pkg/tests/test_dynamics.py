import numpy as np
import pytest

from nashkkt.dynamics import NumericInputError, UnicycleVelocity, make_model

MODELS = [("single_int", 2), ("double_int", 2), ("double_int", 3), ("unicycle_v", 2),
          ("quadcopter", 3)]


def random_point(model, rng):
    x = rng.normal(size=model.state_dim)
    u = rng.normal(size=model.control_dim)
    if model.id == "unicycle_v":
        x[2:] += np.sign(x[2:]) * 0.5          # keep away from the v = 0 branch
    return x, u


def test_double_integrator_constant_velocity_residual_zero():
    m = make_model("double_int", 2)
    r = m.step_residual([0, 0, 1, 0], [0, 0], [1, 0, 1, 0], 1.0)
    assert np.array_equal(r, np.zeros(4))


def test_unicycle_at_rest_has_no_drift():
    m = make_model("unicycle_v", 2)
    x = np.array([1.0, 2.0, 0.0, 0.0])
    x_next = np.array([1.5, 2.0, 0.3, 0.0])
    assert np.array_equal(m.step_residual(x, [3.0, -2.0], x_next, 0.5), x_next - x)
    A, B = m.jac(x, [3.0, -2.0])
    assert np.all(A[2:] == 0) and np.all(B == 0)


def test_quadcopter_hover_residual_zero():
    m = make_model("quadcopter", 3)
    x = np.zeros(12)
    x[:3] = [1.0, -2.0, 3.0]
    r = m.step_residual(x, [m.mass * m.gravity, 0, 0, 0], x, 0.1)
    assert np.allclose(r, 0.0, atol=1e-15)


def test_quadcopter_thrust_derivative_at_hover():
    m = make_model("quadcopter", 3)
    _, B = m.jac(np.zeros(12), [m.mass * m.gravity, 0, 0, 0])
    assert B[8, 0] == pytest.approx(-1.0 / m.mass)


def test_double_integrator_jacobians_constant(rng):
    m = make_model("double_int", 2)
    j1 = m.step_jacobians(rng.normal(size=4), rng.normal(size=2), 0.5)
    j2 = m.step_jacobians(rng.normal(size=4), rng.normal(size=2), 0.5)
    for a, b in zip(j1, j2):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("model_id,d", MODELS)
def test_jacobians_match_central_differences(model_id, d, rng):
    m = make_model(model_id, d)
    h = 1e-6
    for _ in range(100):
        x, u = random_point(m, rng)
        A, B = m.jac(x, u)
        Anum = np.column_stack([(m.f(x + h * e, u) - m.f(x - h * e, u)) / (2 * h)
                                for e in np.eye(m.state_dim)])
        Bnum = np.column_stack([(m.f(x, u + h * e) - m.f(x, u - h * e)) / (2 * h)
                                for e in np.eye(m.control_dim)])
        scale = 1.0 + np.abs(Anum).max()
        assert np.abs(A - Anum).max() < 1e-5 * scale
        assert np.abs(B - Bnum).max() < 1e-5 * (1.0 + np.abs(Bnum).max())


@pytest.mark.parametrize("model_id,d", MODELS)
def test_step_jacobian_next_is_identity(model_id, d, rng):
    m = make_model(model_id, d)
    x, u = random_point(m, rng)
    _, _, Jn = m.step_jacobians(x, u, 0.3)
    assert np.array_equal(Jn, np.eye(m.state_dim))


@pytest.mark.parametrize("model_id,d", MODELS)
def test_unroll_is_euler_consistent(model_id, d, rng):
    m = make_model(model_id, d)
    x0, _ = random_point(m, rng)
    U = 0.1 * rng.normal(size=(8, m.control_dim))
    X = m.unroll(x0, U, 0.2)
    res = m.step_residual(X[:-1], U[:-1], X[1:], 0.2)
    assert np.abs(res).max() < 1e-12


def test_unroll_zero_controls_single_integrator():
    m = make_model("single_int", 2)
    X = m.unroll([3.0, 4.0], np.zeros((5, 2)), 1.0)
    assert np.array_equal(X, np.tile([3.0, 4.0], (5, 1)))


def test_unroll_double_integrator_recursion():
    m = make_model("double_int", 2)
    X = m.unroll(np.zeros(4), np.tile([1.0, 0.0], (5, 1)), 1.0)
    p, v = 0.0, 0.0
    for t in range(5):
        assert X[t, 0] == p and X[t, 2] == v
        p, v = p + v, v + 1.0


def test_unroll_reports_first_bad_step():
    m = make_model("double_int", 2)
    U = np.zeros((5, 2))
    U[2, 0] = np.inf
    with pytest.raises(NumericInputError, match="step 3"):
        m.unroll(np.zeros(4), U, 1.0)


def test_nonfinite_input_rejected():
    with pytest.raises(NumericInputError):
        make_model("single_int", 2).step_residual([np.nan, 0], [0, 0], [0, 0], 1.0)


@pytest.mark.parametrize("model_id,d", [("single_int", 2), ("double_int", 2), ("unicycle_v", 2),
                                        ("quadcopter", 3)])
def test_from_positions_then_unroll_is_identity(model_id, d, rng):
    m = make_model(model_id, d)
    T = 7
    P = np.cumsum(rng.uniform(0.5, 1.0, size=(T, d)), axis=0)
    X, U = m.from_positions(P, 0.5)
    assert np.allclose(X[:, :d], P)
    X2 = m.unroll(X[0], U, 0.5)
    assert np.allclose(X2, X, atol=1e-9)


def test_unicycle_transform_matches_heading_speed_model(rng):
    """With u1 read as lateral acceleration (v * heading rate) both models agree."""
    m = UnicycleVelocity()
    for _ in range(50):
        px, py, phi = rng.normal(size=3)
        v = rng.uniform(0.2, 3.0)
        u1, u2 = rng.normal(size=2)
        polar = np.array([px, py, phi, v])
        xbar = np.array([px, py, v * np.cos(phi), v * np.sin(phi)])
        fp = UnicycleVelocity.polar_field(polar, [u1 / v, u2])
        # chain rule of (phi, v) -> (v cos phi, v sin phi)
        J = np.array([[-v * np.sin(phi), np.cos(phi)], [v * np.cos(phi), np.sin(phi)]])
        fbar = m.f(xbar, [u1, u2])
        assert np.allclose(fbar[:2], fp[:2], atol=1e-12)
        assert np.allclose(fbar[2:], J @ fp[2:], atol=1e-12)
        dt = 1e-5
        polar_next = polar + dt * fp
        mapped = np.array([polar_next[0], polar_next[1], polar_next[3] * np.cos(polar_next[2]),
                           polar_next[3] * np.sin(polar_next[2])])
        assert np.allclose(m.step(xbar, [u1, u2], dt), mapped, atol=1e-8)


def test_unknown_model_lists_available():
    with pytest.raises(KeyError, match="available"):
        make_model("bicycle")
