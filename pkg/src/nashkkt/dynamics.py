"""Discrete-time agent dynamics under forward Euler.

Every model exposes the continuous vector field ``f(x, u)`` together with its
Jacobians.  The equality constraint attached to step t is the residual
``x_{t+1} - x_t - dt * f(x_t, u_t)``.  All evaluators broadcast over leading
axes so whole trajectories can be processed at once.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np


class NumericInputError(ValueError):
    """Raised when a dynamics evaluation receives or produces NaN/Inf."""


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericInputError("non-finite value in dynamics input")


class DynamicsModel:
    id = ""
    velocity_offset: Optional[int] = None

    def __init__(self, pos_dim: int = 2):
        self.pos_dim = pos_dim

    state_dim = 0
    control_dim = 0

    def f(self, x, u):
        raise NotImplementedError

    def jac(self, x, u) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def linear(self) -> bool:
        return False

    # discrete-time views ----------------------------------------------------
    def step(self, x, u, dt):
        return x + dt * self.f(x, u)

    def step_residual(self, x_t, u_t, x_next, dt):
        x_t, u_t, x_next = (np.asarray(a, float) for a in (x_t, u_t, x_next))
        _check_finite(x_t, u_t, x_next)
        return x_next - x_t - dt * self.f(x_t, u_t)

    def step_jacobians(self, x_t, u_t, dt):
        """Return (d res/d x_t, d res/d u_t, d res/d x_next)."""
        x_t, u_t = np.asarray(x_t, float), np.asarray(u_t, float)
        _check_finite(x_t, u_t)
        A, B = self.jac(x_t, u_t)
        eye = np.broadcast_to(np.eye(self.state_dim), A.shape)
        return -eye - dt * A, -dt * B, eye.copy()

    def unroll(self, x0, controls, dt):
        controls = np.asarray(controls, float)
        xs = np.zeros((controls.shape[0], self.state_dim))
        xs[0] = x0
        for t in range(controls.shape[0] - 1):
            xs[t + 1] = self.step(xs[t], controls[t], dt)
            if not np.all(np.isfinite(xs[t + 1])):
                raise NumericInputError(f"non-finite state produced at step {t + 1}")
        return xs

    def from_positions(self, positions, dt):
        """States and controls reproducing ``positions`` exactly (T, pos_dim)."""
        raise NotImplementedError

    def hessian_contract(self, x, u, w, eps=1e-6):
        """Second derivative of w . f(x, u) w.r.t. z = (x, u), per leading index.

        Obtained by central differences of the analytic Jacobian.
        """
        x, u, w = (np.atleast_2d(np.asarray(a, float)) for a in (x, u, w))
        n, m = self.state_dim, self.control_dim
        out = np.zeros((x.shape[0], n + m, n + m))
        if self.linear:
            return out
        for k in range(n + m):
            dx = np.zeros(n)
            du = np.zeros(m)
            if k < n:
                dx[k] = eps
            else:
                du[k - n] = eps
            Ap, Bp = self.jac(x + dx, u + du)
            Am, Bm = self.jac(x - dx, u - du)
            gp = np.concatenate([np.einsum("ti,tij->tj", w, Ap), np.einsum("ti,tij->tj", w, Bp)], 1)
            gm = np.concatenate([np.einsum("ti,tij->tj", w, Am), np.einsum("ti,tij->tj", w, Bm)], 1)
            out[:, :, k] = (gp - gm) / (2 * eps)
        return 0.5 * (out + out.transpose(0, 2, 1))


class SingleIntegrator(DynamicsModel):
    id = "single_int"

    def __init__(self, pos_dim=2):
        super().__init__(pos_dim)
        self.state_dim = pos_dim
        self.control_dim = pos_dim

    @property
    def linear(self):
        return True

    def f(self, x, u):
        return np.array(u, dtype=float, copy=True)

    def jac(self, x, u):
        lead = np.shape(x)[:-1]
        A = np.zeros(lead + (self.state_dim, self.state_dim))
        B = np.broadcast_to(np.eye(self.pos_dim), lead + (self.pos_dim, self.pos_dim)).copy()
        return A, B

    def from_positions(self, positions, dt, final_velocity=None):
        P = np.asarray(positions, float)
        U = np.zeros_like(P)
        U[:-1] = np.diff(P, axis=0) / dt
        return P.copy(), U


class DoubleIntegrator(DynamicsModel):
    id = "double_int"

    def __init__(self, pos_dim=2):
        super().__init__(pos_dim)
        self.state_dim = 2 * pos_dim
        self.control_dim = pos_dim
        self.velocity_offset = pos_dim

    @property
    def linear(self):
        return True

    def f(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        return np.concatenate([x[..., self.pos_dim:], u], axis=-1)

    def jac(self, x, u):
        d = self.pos_dim
        lead = np.shape(x)[:-1]
        A = np.zeros(lead + (2 * d, 2 * d))
        A[..., :d, d:] = np.eye(d)
        B = np.zeros(lead + (2 * d, d))
        B[..., d:, :] = np.eye(d)
        return A, B

    def from_positions(self, positions, dt, final_velocity=None):
        P = np.asarray(positions, float)
        T = P.shape[0]
        V = np.zeros_like(P)
        V[:-1] = np.diff(P, axis=0) / dt
        V[-1] = V[-2] if final_velocity is None else final_velocity
        U = np.zeros_like(P)
        U[:-1] = np.diff(V, axis=0) / dt
        return np.concatenate([P, V], axis=1), U


class UnicycleVelocity(DynamicsModel):
    """Unicycle written in Cartesian velocity coordinates (p_x, p_y, v_x, v_y).

    The acceleration is the rotation-like map R(v) u with
    R(v) = [[-v_y, v_x], [v_x, v_y]] / |v|; at v = 0 the drift is zero.
    """

    id = "unicycle_v"
    velocity_offset = 2

    def __init__(self, pos_dim=2):
        if pos_dim != 2:
            raise ValueError("unicycle_v is planar (pos_dim 2)")
        super().__init__(2)
        self.state_dim = 4
        self.control_dim = 2

    def f(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        vx, vy = x[..., 2], x[..., 3]
        s = np.hypot(vx, vy)
        safe = np.where(s > 0, s, 1.0)
        ax = np.where(s > 0, (-vy * u[..., 0] + vx * u[..., 1]) / safe, 0.0)
        ay = np.where(s > 0, (vx * u[..., 0] + vy * u[..., 1]) / safe, 0.0)
        return np.stack([vx, vy, ax, ay], axis=-1)

    def jac(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        lead = x.shape[:-1]
        vx, vy = x[..., 2], x[..., 3]
        u1, u2 = u[..., 0], u[..., 1]
        s = np.hypot(vx, vy)
        moving = s > 0
        s = np.where(moving, s, 1.0)
        s3 = s ** 3
        A = np.zeros(lead + (4, 4))
        A[..., 0, 2] = 1.0
        A[..., 1, 3] = 1.0
        # ax = (-vy u1 + vx u2)/s ; ay = (vx u1 + vy u2)/s
        nx = -vy * u1 + vx * u2
        ny = vx * u1 + vy * u2
        dax_dvx = u2 / s - nx * vx / s3
        dax_dvy = -u1 / s - nx * vy / s3
        day_dvx = u1 / s - ny * vx / s3
        day_dvy = u2 / s - ny * vy / s3
        A[..., 2, 2] = np.where(moving, dax_dvx, 0.0)
        A[..., 2, 3] = np.where(moving, dax_dvy, 0.0)
        A[..., 3, 2] = np.where(moving, day_dvx, 0.0)
        A[..., 3, 3] = np.where(moving, day_dvy, 0.0)
        B = np.zeros(lead + (4, 2))
        B[..., 2, 0] = np.where(moving, -vy / s, 0.0)
        B[..., 2, 1] = np.where(moving, vx / s, 0.0)
        B[..., 3, 0] = np.where(moving, vx / s, 0.0)
        B[..., 3, 1] = np.where(moving, vy / s, 0.0)
        return A, B

    def from_positions(self, positions, dt, final_velocity=None):
        P = np.asarray(positions, float)
        V = np.zeros_like(P)
        V[:-1] = np.diff(P, axis=0) / dt
        V[-1] = V[-2] if final_velocity is None else final_velocity
        acc = np.zeros_like(P)
        acc[:-1] = np.diff(V, axis=0) / dt
        s = np.hypot(V[:, 0], V[:, 1])
        if np.any((s == 0) & (np.abs(acc).sum(1) > 0)):
            raise ValueError("position sequence needs acceleration from rest; not reachable")
        safe = np.where(s > 0, s, 1.0)
        # R(v) is a symmetric involution, so u = R(v) a.
        U = np.stack([(-V[:, 1] * acc[:, 0] + V[:, 0] * acc[:, 1]) / safe,
                      (V[:, 0] * acc[:, 0] + V[:, 1] * acc[:, 1]) / safe], axis=1)
        return np.concatenate([P, V], axis=1), U

    @staticmethod
    def polar_field(x_polar, u_polar):
        """Vector field of the heading/speed unicycle (p_x, p_y, phi, v)."""
        x_polar, u_polar = np.asarray(x_polar, float), np.asarray(u_polar, float)
        phi, v = x_polar[..., 2], x_polar[..., 3]
        return np.stack([v * np.cos(phi), v * np.sin(phi), u_polar[..., 0], u_polar[..., 1]], -1)


class Quadcopter(DynamicsModel):
    """12-state quadcopter: x = (p, alpha, beta, gamma, p_dot, rates), u = (F, torques).

    The z axis points down, so a thrust of F = m g hovers.  Body torques act on
    the Euler-angle accelerations through the principal inertias.
    """

    id = "quadcopter"
    velocity_offset = 6

    def __init__(self, pos_dim=3, mass=1.0, gravity=9.81, Ix=1.0, Iy=1.0, Iz=1.0):
        if pos_dim != 3:
            raise ValueError("quadcopter is spatial (pos_dim 3)")
        super().__init__(3)
        self.state_dim = 12
        self.control_dim = 4
        self.mass, self.gravity = float(mass), float(gravity)
        self.inertia = np.array([Ix, Iy, Iz], float)

    def _coupling(self):
        Ix, Iy, Iz = self.inertia
        return np.array([(Iy - Iz) / Ix, (Iz - Ix) / Iy, (Ix - Iy) / Iz])

    def f(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        a, b, c = x[..., 3], x[..., 4], x[..., 5]
        da, db, dc = x[..., 9], x[..., 10], x[..., 11]
        K = u[..., 0] / self.mass
        sa, ca, sb, cb, sc, cc = np.sin(a), np.cos(a), np.sin(b), np.cos(b), np.sin(c), np.cos(c)
        ax = -K * (sa * sc + ca * sb * cc)
        ay = -K * (ca * sc - sa * sb * cc)
        az = self.gravity - K * cb * cc
        k = self._coupling()
        dda = k[0] * db * dc + u[..., 1] / self.inertia[0]
        ddb = k[1] * da * dc + u[..., 2] / self.inertia[1]
        ddc = k[2] * da * db + u[..., 3] / self.inertia[2]
        return np.stack([x[..., 6], x[..., 7], x[..., 8], da, db, dc,
                         ax, ay, az, dda, ddb, ddc], axis=-1)

    def jac(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        lead = x.shape[:-1]
        a, b, c = x[..., 3], x[..., 4], x[..., 5]
        da, db, dc = x[..., 9], x[..., 10], x[..., 11]
        F = u[..., 0]
        m = self.mass
        K = F / m
        sa, ca, sb, cb, sc, cc = np.sin(a), np.cos(a), np.sin(b), np.cos(b), np.sin(c), np.cos(c)
        A = np.zeros(lead + (12, 12))
        for r in range(6):
            A[..., r, r + 6] = 1.0
        A[..., 6, 3] = -K * (ca * sc - sa * sb * cc)
        A[..., 6, 4] = -K * (ca * cb * cc)
        A[..., 6, 5] = -K * (sa * cc - ca * sb * sc)
        A[..., 7, 3] = -K * (-sa * sc - ca * sb * cc)
        A[..., 7, 4] = -K * (-sa * cb * cc)
        A[..., 7, 5] = -K * (ca * cc + sa * sb * sc)
        A[..., 8, 4] = K * sb * cc
        A[..., 8, 5] = K * cb * sc
        k = self._coupling()
        A[..., 9, 10] = k[0] * dc
        A[..., 9, 11] = k[0] * db
        A[..., 10, 9] = k[1] * dc
        A[..., 10, 11] = k[1] * da
        A[..., 11, 9] = k[2] * db
        A[..., 11, 10] = k[2] * da
        B = np.zeros(lead + (12, 4))
        B[..., 6, 0] = -(sa * sc + ca * sb * cc) / m
        B[..., 7, 0] = -(ca * sc - sa * sb * cc) / m
        B[..., 8, 0] = -cb * cc / m
        B[..., 9, 1] = 1.0 / self.inertia[0]
        B[..., 10, 2] = 1.0 / self.inertia[1]
        B[..., 11, 3] = 1.0 / self.inertia[2]
        return A, B

    def from_positions(self, positions, dt, final_velocity=None):
        P = np.asarray(positions, float)
        T = P.shape[0]
        Vp = np.zeros_like(P)
        Vp[:-1] = np.diff(P, axis=0) / dt
        Vp[-1] = Vp[-2] if final_velocity is None else final_velocity
        acc = np.zeros_like(P)
        acc[:-1] = np.diff(Vp, axis=0) / dt
        # thrust direction with zero first Euler angle:
        # g e_z - acc = (F/m) (sin b cos c, sin c, cos b cos c)
        thrust = np.column_stack([-acc[:, 0], -acc[:, 1], self.gravity - acc[:, 2]])
        K = np.linalg.norm(thrust, axis=1)
        if np.any(K < 1e-9):
            raise ValueError("free-fall acceleration requested; attitude undefined")
        ang = np.zeros((T, 3))
        ang[:, 2] = np.arcsin(np.clip(thrust[:, 1] / K, -1, 1))
        ang[:, 1] = np.arctan2(thrust[:, 0], thrust[:, 2])
        # the last attitude only matters through unused rows; hold the previous one
        ang[-1] = ang[-2]
        rates = np.zeros((T, 3))
        rates[:-1] = np.diff(ang, axis=0) / dt
        rates[-1] = rates[-2]
        k = self._coupling()
        coupling = np.column_stack([k[0] * rates[:, 1] * rates[:, 2],
                                    k[1] * rates[:, 0] * rates[:, 2],
                                    k[2] * rates[:, 0] * rates[:, 1]])
        torque = np.zeros((T, 3))
        torque[:-1] = self.inertia * (np.diff(rates, axis=0) / dt - coupling[:-1])
        U = np.column_stack([K * self.mass, torque])
        U[-1] = [self.mass * self.gravity, 0.0, 0.0, 0.0]
        X = np.concatenate([P, ang, Vp, rates], axis=1)
        return X, U


MODELS = {cls.id: cls for cls in (SingleIntegrator, DoubleIntegrator, UnicycleVelocity, Quadcopter)}


def make_model(model_id: str, pos_dim: int = 2, **params) -> DynamicsModel:
    if model_id not in MODELS:
        raise KeyError(f"unknown dynamics {model_id!r}; available: {sorted(MODELS)}")
    return MODELS[model_id](pos_dim=pos_dim, **params)


def models_for(spec):
    return [make_model(a.dynamics, pos_dim=spec.pos_dim, **a.dyn_params()) for a in spec.agents]
