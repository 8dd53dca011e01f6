"""Parameterized interaction constraints g(xi, theta) <= 0.

Every family is evaluated on "units" (owner i, other j, time t).  A unit holds
one or more scalar constraints arranged in groups: scalars in the same group
form a disjunction (the unit is satisfied if any scalar of the group is
<= 0), distinct groups are conjunctive.  Each scalar is affine in theta,

    g_s(xi, theta) = G0_s(xi) + G1_s(xi) . theta,

and depends on xi only through a small set of local coordinates (positions
and possibly velocities of agents i and j at time t).  Gradients are kept in
that local form and scattered into dense rows on request.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import FamilySpec, ScenarioSpec

TOL_ACTIVE = 1e-6
EPS_STRICT = 1e-4


class DomainError(ValueError):
    """theta outside the declared parameter box."""


class StructuralError(ValueError):
    """A family fails a structural self-check (e.g. affinity in theta)."""


class ConstraintFamily:
    kind = ""
    local_kind = "pos"           # pos | pos_vel | pos_veli
    group_sizes: Tuple[int, ...] = (1,)
    local_params: Tuple[str, ...] = ("theta1",)
    offset = True
    per_agent_default = True

    def __init__(self, spec: ScenarioSpec, fam: FamilySpec):
        self.spec = spec
        self.fam = fam
        opts = fam.opts()
        self.per_agent = bool(opts.get("per_agent", self.per_agent_default))
        self._configure(opts)
        lay = spec.layout()
        self.layout = lay
        self.d = spec.pos_dim
        N, T = spec.num_agents, spec.horizon
        owners = opts.get("owners")
        owners = set(range(N)) if owners is None else {int(o) for o in owners}
        units = [(t, i, j) for t in range(T) for i in range(N) for j in range(N)
                 if i != j and i in owners]
        self.unit_time = np.array([u[0] for u in units], int)
        self.unit_owner = np.array([u[1] for u in units], int)
        self.unit_other = np.array([u[2] for u in units], int)
        pos = [lay.pos_idx(i) for i in range(N)]
        cols = [np.stack([pos[i][t] for (t, i, j) in units]), np.stack([pos[j][t] for (t, i, j) in units])]
        if self.local_kind in ("pos_vel", "pos_veli"):
            vel = [lay.vel_idx(i) for i in range(N)]
            cols.append(np.stack([vel[i][t] for (t, i, j) in units]))
            if self.local_kind == "pos_vel":
                cols.append(np.stack([vel[j][t] for (t, i, j) in units]))
        self.unit_local = np.concatenate(cols, axis=1)            # (U, K)
        self.n_unit = int(sum(self.group_sizes))
        U = len(units)
        self.num_units = U
        self.num_scalars = U * self.n_unit
        self.scalar_unit = np.repeat(np.arange(U), self.n_unit)
        self.scalar_owner = self.unit_owner[self.scalar_unit]
        self.scalar_other = self.unit_other[self.scalar_unit]
        self.scalar_time = self.unit_time[self.scalar_unit]
        self.scalar_local = self.unit_local[self.scalar_unit]      # (S, K)
        # disjunction blocks: consecutive scalar ranges
        starts, sizes = [], []
        for u in range(U):
            base = u * self.n_unit
            off = 0
            for g in self.group_sizes:
                starts.append(base + off)
                sizes.append(g)
                off += g
        self.block_start = np.array(starts, int)
        self.block_size = np.array(sizes, int)
        self.scalar_block = np.repeat(np.arange(len(starts)), self.block_size)
        self.block_owner = self.scalar_owner[self.block_start]
        self.block_other = self.scalar_other[self.block_start]
        self.block_time = self.scalar_time[self.block_start]
        P_loc = len(self.local_params)
        if self.per_agent:
            self.num_theta = N * P_loc
            self.scalar_theta = self.scalar_owner[:, None] * P_loc + np.arange(P_loc)[None, :]
            self.theta_names = [f"{p}[{i}]" for i in range(N) for p in self.local_params]
        else:
            self.num_theta = P_loc
            self.scalar_theta = np.broadcast_to(np.arange(P_loc), (self.num_scalars, P_loc)).copy()
            self.theta_names = list(self.local_params)
        if fam.theta is not None:
            self.fixed_theta = np.asarray(fam.theta, float)
            if self.fixed_theta.size != self.num_theta:
                raise StructuralError(f"{self.kind}: frozen theta has {self.fixed_theta.size} "
                                      f"entries, expected {self.num_theta}")
        else:
            self.fixed_theta = None
        if fam.theta_lo or fam.theta_hi:
            self.theta_lo = np.asarray(fam.theta_lo, float)
            self.theta_hi = np.asarray(fam.theta_hi, float)
        else:
            self.theta_lo = np.full(self.num_theta, -np.inf)
            self.theta_hi = np.full(self.num_theta, np.inf)
        if self.theta_lo.size != self.num_theta or self.theta_hi.size != self.num_theta:
            raise StructuralError(f"{self.kind}: theta_bounds need {self.num_theta} entries "
                                  f"({', '.join(self.theta_names)})")

    # hooks ---------------------------------------------------------------
    def _configure(self, opts):
        pass

    def _unit_terms(self, X):
        """Return G0 (U,n), G1 (U,n,P), dG0 (U,n,K), dG1 (U,n,P,K) from local values X (U,K)."""
        raise NotImplementedError

    # helpers -------------------------------------------------------------
    @property
    def disjunctive(self) -> bool:
        return any(g > 1 for g in self.group_sizes)

    @property
    def num_blocks(self) -> int:
        return self.block_start.size

    def _rel(self, X):
        d = self.d
        return X[:, d:2 * d] - X[:, :d]

    def _local_values(self, xi):
        xi = np.asarray(xi, float)
        if xi.size != self.layout.size:
            raise ValueError(f"trajectory length {xi.size} != {self.layout.size}")
        return xi[self.unit_local]

    def check_theta(self, theta, tol=1e-9):
        theta = np.asarray(theta, float).ravel()
        if theta.size != self.num_theta:
            raise DomainError(f"{self.kind}: theta needs {self.num_theta} entries, got {theta.size}")
        bad = (theta < self.theta_lo - tol) | (theta > self.theta_hi + tol)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise DomainError(f"{self.kind}: {self.theta_names[k]}={theta[k]} outside "
                              f"[{self.theta_lo[k]}, {self.theta_hi[k]}]")
        return theta

    def resolve_theta(self, theta=None):
        if theta is None:
            if self.fixed_theta is None:
                raise DomainError(f"{self.kind}: theta required")
            return self.fixed_theta
        return self.check_theta(theta)

    def terms(self, xi):
        """Scalar-level (G0, G1_local, dG0, dG1_local) arrays."""
        X = self._local_values(xi)
        G0, G1, dG0, dG1 = self._unit_terms(X)
        S = self.num_scalars
        K = X.shape[1]
        P = len(self.local_params)
        return (G0.reshape(S), G1.reshape(S, P), dG0.reshape(S, K),
                None if dG1 is None else dG1.reshape(S, P, K))

    # public operations -----------------------------------------------------
    def decomposition(self, xi):
        """Dense (G0, G1) with g(xi, theta) = G0 + G1 @ theta."""
        G0, G1l, _, _ = self.terms(xi)
        G1 = np.zeros((self.num_scalars, self.num_theta))
        rows = np.arange(self.num_scalars)[:, None]
        np.add.at(G1, (np.broadcast_to(rows, self.scalar_theta.shape), self.scalar_theta), G1l)
        return G0, G1

    def evaluate(self, theta, xi, check=True):
        theta = self.resolve_theta(theta) if check else np.asarray(theta, float)
        G0, G1l, _, _ = self.terms(xi)
        return G0 + np.einsum("sp,sp->s", G1l, theta[self.scalar_theta])

    def grad_local(self, theta, xi, check=True):
        theta = self.resolve_theta(theta) if check else np.asarray(theta, float)
        _, _, dG0, dG1 = self.terms(xi)
        if dG1 is None:
            return dG0
        return dG0 + np.einsum("spk,sp->sk", dG1, theta[self.scalar_theta])

    def grad(self, theta, xi, check=True):
        """Dense Jacobian rows (num_scalars, len(xi))."""
        vals = self.grad_local(theta, xi, check)
        return self.scatter(vals)

    def scatter(self, vals):
        out = np.zeros((self.num_scalars, self.layout.size))
        rows = np.broadcast_to(np.arange(self.num_scalars)[:, None], self.scalar_local.shape)
        np.add.at(out, (rows, self.scalar_local), vals)
        return out

    def block_values(self, g):
        """Per-block satisfaction value: min over disjuncts (<= 0 means satisfied)."""
        return np.minimum.reduceat(g, self.block_start)

    def satisfied(self, theta, xi, tol=1e-8):
        return bool(np.all(self.block_values(self.evaluate(theta, xi)) <= tol))

    def evaluated(self, theta, xi, tol_active=TOL_ACTIVE):
        g = self.evaluate(theta, xi)
        return EvaluatedConstraints(g, self.grad(theta, xi), np.abs(g) <= tol_active)

    def hessian_local(self, theta, lam, xi, eps=1e-6):
        """Sum over scalars of lam_s * Hessian of g_s, as (S, K, K) local blocks.

        Computed by central differences of the analytic local gradient.
        """
        theta = np.asarray(theta, float)
        X = self._local_values(xi)
        K = X.shape[1]
        th = theta[self.scalar_theta]
        out = np.zeros((self.num_scalars, K, K))
        for k in range(K):
            Xp = X.copy()
            Xm = X.copy()
            Xp[:, k] += eps
            Xm[:, k] -= eps
            gp = self._grad_from_X(Xp, th)
            gm = self._grad_from_X(Xm, th)
            out[:, :, k] = (gp - gm) / (2 * eps)
        out = 0.5 * (out + out.transpose(0, 2, 1))
        return out * np.asarray(lam, float)[:, None, None]

    def _grad_from_X(self, X, th):
        G0, G1, dG0, dG1 = self._unit_terms(X)
        S = self.num_scalars
        dG0 = dG0.reshape(S, -1)
        if dG1 is None:
            return dG0
        return dG0 + np.einsum("spk,sp->sk", dG1.reshape(S, th.shape[1], -1), th)


class EvaluatedConstraints:
    def __init__(self, g, grad, active):
        self.g = g
        self.grad = grad
        self.active = active


# --------------------------------------------------------------------------
# Concrete families


class Spherical(ConstraintFamily):
    """-|p_j - p_i|^2 + theta1 <= 0 (theta1 is the squared radius)."""

    kind = "spherical"

    def _unit_terms(self, X):
        r = self._rel(X)
        U, d = r.shape
        G0 = -(r ** 2).sum(1)[:, None]
        G1 = np.ones((U, 1, 1))
        dG0 = np.concatenate([2 * r, -2 * r], axis=1)[:, None, :]
        return G0, G1, dG0, None


class Elliptic(ConstraintFamily):
    """-sum_k w_k r_k^2 + theta1 <= 0 with axis weights w either known or unknown."""

    kind = "elliptic"

    def _configure(self, opts):
        shape = opts.get("shape")
        d = self.spec.pos_dim
        if shape is not None:
            self.shape = np.asarray(shape, float)
            if self.shape.size != d:
                raise StructuralError(f"elliptic shape needs {d} weights")
            self.offset = True
            self.local_params = ("theta1",)
        else:
            self.shape = None
            self.offset = False
            self.local_params = ("theta1",) + tuple(f"theta{k + 2}" for k in range(d))

    def _unit_terms(self, X):
        r = self._rel(X)
        U, d = r.shape
        if self.shape is not None:
            G0 = -(self.shape * r ** 2).sum(1)[:, None]
            G1 = np.ones((U, 1, 1))
            dG0 = np.concatenate([2 * self.shape * r, -2 * self.shape * r], 1)[:, None, :]
            return G0, G1, dG0, None
        G0 = np.zeros((U, 1))
        G1 = np.concatenate([np.ones((U, 1)), -r ** 2], axis=1)[:, None, :]
        dG0 = np.zeros((U, 1, 2 * d))
        dG1 = np.zeros((U, 1, 1 + d, 2 * d))
        for k in range(d):
            dG1[:, 0, 1 + k, k] = 2 * r[:, k]
            dG1[:, 0, 1 + k, d + k] = -2 * r[:, k]
        return G0, G1, dG0, dG1


class SphereProximity(ConstraintFamily):
    """theta1 <= |p_j - p_i|^2 <= theta5, two conjunctive scalars per unit."""

    kind = "sphere_proximity"
    group_sizes = (1, 1)
    local_params = ("theta1", "theta5")

    def _unit_terms(self, X):
        r = self._rel(X)
        U, d = r.shape
        sq = (r ** 2).sum(1)
        G0 = np.stack([-sq, sq], 1)
        G1 = np.zeros((U, 2, 2))
        G1[:, 0, 0] = 1.0
        G1[:, 1, 1] = -1.0
        g = np.concatenate([2 * r, -2 * r], 1)
        dG0 = np.stack([g, -g], 1)
        return G0, G1, dG0, None


class PolytopicOffset(ConstraintFamily):
    """Outside a polytope with known face normals and unknown offsets.

    With ``sense='ge'`` (default) the unit is safe when a_b . (p_j - p_i) >= b_b
    for some face b; with ``sense='le'`` when a_b . (p_j - p_i) <= b_b.
    """

    kind = "polytopic_offset"
    per_agent_default = False

    def _configure(self, opts):
        A = np.asarray(opts["A"], float)
        if A.ndim != 2 or A.shape[1] != self.spec.pos_dim:
            raise StructuralError("polytopic A must have one row of pos_dim entries per face")
        self.A = A
        self.sense = opts.get("sense", "ge")
        if self.sense not in ("ge", "le"):
            raise StructuralError("polytopic sense must be 'ge' or 'le'")
        self.group_sizes = (A.shape[0],)
        self.local_params = tuple(f"b{k + 1}" for k in range(A.shape[0]))

    def _unit_terms(self, X):
        r = self._rel(X)
        U, d = r.shape
        nc = self.A.shape[0]
        s = 1.0 if self.sense == "ge" else -1.0
        proj = r @ self.A.T                              # (U, nc)
        G0 = -s * proj
        G1 = np.broadcast_to(s * np.eye(nc), (U, nc, nc)).copy()
        row = np.concatenate([s * self.A, -s * self.A], 1)   # d/d(p_i, p_j) of -s a.r
        dG0 = np.broadcast_to(row, (U, nc, 2 * d)).copy()
        return G0, G1, dG0, None


class PolytopicAffine(ConstraintFamily):
    """Polytope with unknown normals and offsets; theta = (A row-major, b)."""

    kind = "polytopic_affine"
    per_agent_default = False
    offset = False

    def _configure(self, opts):
        nc = int(opts.get("faces", 4))
        self.sense = opts.get("sense", "ge")
        d = self.spec.pos_dim
        self.nc = nc
        self.group_sizes = (nc,)
        self.local_params = tuple(f"a{b + 1}_{k + 1}" for b in range(nc) for k in range(d)) + \
            tuple(f"b{b + 1}" for b in range(nc))

    def _unit_terms(self, X):
        r = self._rel(X)
        U, d = r.shape
        nc = self.nc
        s = 1.0 if self.sense == "ge" else -1.0
        P = nc * d + nc
        G0 = np.zeros((U, nc))
        G1 = np.zeros((U, nc, P))
        dG1 = np.zeros((U, nc, P, 2 * d))
        for b in range(nc):
            G1[:, b, b * d:(b + 1) * d] = -s * r
            G1[:, b, nc * d + b] = s
            for k in range(d):
                dG1[:, b, b * d + k, k] = s
                dG1[:, b, b * d + k, d + k] = -s
        dG0 = np.zeros((U, nc, 2 * d))
        return G0, G1, dG0, dG1


class VelocitySphere(ConstraintFamily):
    """-|dp + theta6 dv|^2 + theta1 <= 0, lifted with theta6_sq = theta6^2."""

    kind = "velocity_sphere"
    local_kind = "pos_vel"
    local_params = ("theta1", "theta6", "theta6_sq")
    offset = False

    def _unit_terms(self, X):
        d = self.d
        rp = X[:, d:2 * d] - X[:, :d]
        rv = X[:, 3 * d:4 * d] - X[:, 2 * d:3 * d]
        U = rp.shape[0]
        G0 = -(rp ** 2).sum(1)[:, None]
        G1 = np.stack([np.ones(U), -2 * (rp * rv).sum(1), -(rv ** 2).sum(1)], 1)[:, None, :]
        dG0 = np.concatenate([2 * rp, -2 * rp, np.zeros((U, 2 * d))], 1)[:, None, :]
        dG1 = np.zeros((U, 1, 3, 4 * d))
        # d/d(p_i, p_j, v_i, v_j) of -2 rp.rv and -|rv|^2
        dG1[:, 0, 1] = np.concatenate([2 * rv, -2 * rv, 2 * rp, -2 * rp], 1)
        dG1[:, 0, 2] = np.concatenate([np.zeros((U, 2 * d)), 2 * rv, -2 * rv], 1)
        return G0, G1, dG0, dG1


class LineOfSight(ConstraintFamily):
    """Relative position kept inside a cone around agent i's velocity (planar).

    Two conjunctive half-spaces per unit, in <= 0 form:
      -(rx vy - ry vx) - (rx vx + ry vy) theta7 <= 0
      -(-rx vy + ry vx) - (rx vx + ry vy) theta7 <= 0
    With ``proximity=True`` the unit also carries the two sphere-proximity
    scalars theta1 <= |r|^2 <= theta5, and theta = (theta1, theta5, theta7).
    """

    kind = "line_of_sight"
    local_kind = "pos_veli"
    group_sizes = (1, 1)
    local_params = ("theta7",)
    offset = False

    def _configure(self, opts):
        self.proximity = bool(opts.get("proximity", False))
        if self.proximity:
            self.group_sizes = (1, 1, 1, 1)
            self.local_params = ("theta1", "theta5", "theta7")

    def _unit_terms(self, X):
        if self.d != 2:
            raise StructuralError("line_of_sight is planar")
        rx, ry = X[:, 2] - X[:, 0], X[:, 3] - X[:, 1]
        vx, vy = X[:, 4], X[:, 5]
        U = rx.size
        cross = rx * vy - ry * vx
        along = rx * vx + ry * vy
        # local order: p_i (0,1), p_j (2,3), v_i (4,5)
        d_cross = np.stack([-vy, vx, vy, -vx, -ry, rx], 1)
        d_along = np.stack([-vx, -vy, vx, vy, rx, ry], 1)
        P = len(self.local_params)
        n = self.n_unit
        G0 = np.zeros((U, n))
        G1 = np.zeros((U, n, P))
        dG0 = np.zeros((U, n, 6))
        dG1 = np.zeros((U, n, P, 6))
        c = 0
        if self.proximity:
            sq = rx ** 2 + ry ** 2
            d_sq = np.stack([-2 * rx, -2 * ry, 2 * rx, 2 * ry, 0 * rx, 0 * rx], 1)
            G0[:, 0], G1[:, 0, 0], dG0[:, 0] = -sq, 1.0, -d_sq
            G0[:, 1], G1[:, 1, 1], dG0[:, 1] = sq, -1.0, d_sq
            c = 2
        G0[:, c], G0[:, c + 1] = -cross, cross
        G1[:, c, P - 1] = G1[:, c + 1, P - 1] = -along
        dG0[:, c], dG0[:, c + 1] = -d_cross, d_cross
        dG1[:, c, P - 1] = dG1[:, c + 1, P - 1] = -d_along
        return G0, G1, dG0, dG1


class CustomOffset(ConstraintFamily):
    """Quartic avoid set {q(r) < theta8} with an unknown offset theta8 (planar).

    g = theta8 - q(r) with q the fixed quartic in the relative position r.
    """

    kind = "custom_offset"
    local_params = ("theta8",)

    def _unit_terms(self, X):
        if self.d != 2:
            raise StructuralError("custom_offset is planar")
        rx, ry = X[:, 2] - X[:, 0], X[:, 3] - X[:, 1]
        U = rx.size
        val = (2 * rx ** 4 + 2 * ry ** 4 - 5 * rx ** 3 - 5 * ry ** 3
               + 5 * (rx - 1) ** 3 + 5 * (ry + 1) ** 3)
        gx = 8 * rx ** 3 - 15 * rx ** 2 + 15 * (rx - 1) ** 2
        gy = 8 * ry ** 3 - 15 * ry ** 2 + 15 * (ry + 1) ** 2
        G0 = -val[:, None]
        G1 = np.ones((U, 1, 1))
        dG0 = np.stack([gx, gy, -gx, -gy], 1)[:, None, :]
        return G0, G1, dG0, None


FAMILIES = {cls.kind: cls for cls in (Spherical, Elliptic, SphereProximity, PolytopicOffset,
                                      PolytopicAffine, VelocitySphere, LineOfSight, CustomOffset)}


def make_family(spec: ScenarioSpec, fam: FamilySpec) -> ConstraintFamily:
    if fam.kind not in FAMILIES:
        raise StructuralError(f"unknown constraint family {fam.kind!r}; available: {sorted(FAMILIES)}")
    return FAMILIES[fam.kind](spec, fam)


def unknown_family(spec: ScenarioSpec) -> Optional[ConstraintFamily]:
    return None if spec.unknown_family is None else make_family(spec, spec.unknown_family)


def known_families(spec: ScenarioSpec) -> List[ConstraintFamily]:
    out = []
    for k in spec.known_constraints:
        if k.kind == "boundary_eq":
            continue
        fam = make_family(spec, k)
        if fam.fixed_theta is None:
            raise StructuralError(f"known constraint {k.kind} needs a frozen theta")
        out.append(fam)
    return out


def check_affinity(family: ConstraintFamily, rng, draws=20, tol=1e-10):
    """Numerical self-check that g is affine in theta and, for offset families,
    that the xi-gradient does not depend on theta."""
    lo = np.where(np.isfinite(family.theta_lo), family.theta_lo, -5.0)
    hi = np.where(np.isfinite(family.theta_hi), family.theta_hi, 5.0)
    worst = 0.0
    for _ in range(draws):
        xi = rng.normal(scale=3.0, size=family.layout.size)
        G0, G1 = family.decomposition(xi)
        ta, tb = rng.uniform(lo, hi), rng.uniform(lo, hi)
        for th in (ta, tb):
            worst = max(worst, np.max(np.abs(family.evaluate(th, xi, check=False) - (G0 + G1 @ th)),
                                      initial=0.0))
        if family.offset:
            diff = family.grad_local(ta, xi, check=False) - family.grad_local(tb, xi, check=False)
            if np.any(diff != 0):
                raise StructuralError(f"{family.kind}: gradient depends on theta but family is offset")
    if worst > tol:
        raise StructuralError(f"{family.kind}: affine reconstruction error {worst:.2e}")
    return worst


# --------------------------------------------------------------------------
# Equality rows: dynamics and boundary pins


class EqualityRows:
    """Per-agent equality constraints h^i(xi) = 0: Euler dynamics then boundary pins."""

    def __init__(self, spec: ScenarioSpec):
        from .dynamics import models_for
        self.spec = spec
        self.layout = spec.layout()
        self.models = models_for(spec)
        lay = self.layout
        N, T, d = spec.num_agents, spec.horizon, spec.pos_dim
        self.rows_per_agent = []
        self.boundary = []
        for i in range(N):
            n = lay.state_dims[i]
            pins = [(lay.pos_idx(i)[0], np.asarray(spec.origins[i], float)),
                    (lay.pos_idx(i)[T - 1], np.asarray(spec.goals[i], float))]
            if spec.init_vel is not None:
                pins.append((lay.vel_idx(i)[0], np.asarray(spec.init_vel[i], float)))
            if spec.final_vel is not None:
                pins.append((lay.vel_idx(i)[T - 1], np.asarray(spec.final_vel[i], float)))
            idx = np.concatenate([p[0] for p in pins])
            val = np.concatenate([p[1] for p in pins])
            self.boundary.append((idx, val))
            self.rows_per_agent.append(n * (T - 1) + idx.size)

    def num_rows(self, i):
        return self.rows_per_agent[i]

    def evaluate(self, i, xi):
        lay, T, dt = self.layout, self.spec.horizon, self.spec.dt
        xi = np.asarray(xi, float)
        X = xi[lay.state_idx(i)]
        U = xi[lay.control_idx(i)]
        dyn = self.models[i].step_residual(X[:-1], U[:-1], X[1:], dt).ravel()
        idx, val = self.boundary[i]
        return np.concatenate([dyn, xi[idx] - val])

    def jacobian(self, i, xi):
        """Dense Jacobian (rows_i, len(xi))."""
        lay, T, dt = self.layout, self.spec.horizon, self.spec.dt
        xi = np.asarray(xi, float)
        sidx, cidx = lay.state_idx(i), lay.control_idx(i)
        X, U = xi[sidx], xi[cidx]
        Jx, Ju, Jn = self.models[i].step_jacobians(X[:-1], U[:-1], dt)
        n = lay.state_dims[i]
        J = np.zeros((self.rows_per_agent[i], lay.size))
        for t in range(T - 1):
            r = slice(t * n, (t + 1) * n)
            J[r, sidx[t]] += Jx[t]
            J[r, cidx[t]] += Ju[t]
            J[r, sidx[t + 1]] += Jn[t]
        idx, _ = self.boundary[i]
        base = n * (T - 1)
        J[base + np.arange(idx.size), idx] = 1.0
        return J

    def hessian_contract(self, i, xi, nu):
        """sum_r nu_r * Hessian of h_r w.r.t. xi (dense), for nonlinear dynamics."""
        lay, T, dt = self.layout, self.spec.horizon, self.spec.dt
        model = self.models[i]
        H = np.zeros((lay.size, lay.size))
        if model.linear:
            return H
        sidx, cidx = lay.state_idx(i), lay.control_idx(i)
        xi = np.asarray(xi, float)
        n = lay.state_dims[i]
        W = np.asarray(nu, float)[:n * (T - 1)].reshape(T - 1, n)
        # residual = x_next - x - dt f  ->  Hessian = -dt * d2(w.f)
        blocks = -dt * model.hessian_contract(xi[sidx[:-1]], xi[cidx[:-1]], W)
        for t in range(T - 1):
            z = np.concatenate([sidx[t], cidx[t]])
            H[np.ix_(z, z)] += blocks[t]
        return H


def boundary_constraints(spec: ScenarioSpec):
    """List of (flat index, pinned value) rows for every agent's boundary pins."""
    rows = EqualityRows(spec)
    out = []
    for i in range(spec.num_agents):
        idx, val = rows.boundary[i]
        out.append([(int(k), float(v)) for k, v in zip(idx, val)])
    return out
