"""Forward dynamic game: local Nash equilibria, best responses and KKT certificates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear, minimize

from .constraints import (TOL_ACTIVE, ConstraintFamily, EqualityRows, known_families,
                          make_family, unknown_family)
from .core import AgentSpec, KktCertificate, ScenarioSpec, Trajectory
from .costs import CostModel
from .dynamics import models_for


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=np.inf, trajectory=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.trajectory = trajectory


class InfeasibleBoundaryError(ValueError):
    pass


class DegenerateActiveSetError(RuntimeError):
    pass


@dataclass
class NashConfig:
    max_face_rounds: int = 6
    ibr_sweeps: int = 40
    slsqp_maxiter: int = 600
    slsqp_ftol: float = 1e-13
    newton_iters: int = 40
    perturb: float = 0.5
    stat_tol: float = 1e-6
    feas_tol: float = 1e-8
    reduce: bool = True
    central: bool = True


@dataclass
class ActiveSetChoice:
    """Selected disjunct per block (index into the block's scalars)."""

    faces: np.ndarray

    def scalars(self, block_start) -> np.ndarray:
        return block_start + self.faces


class Game:
    """Constraint, dynamics and cost evaluators for one scenario and parameter."""

    def __init__(self, spec: ScenarioSpec, theta=None, theta_bar=None, extra_costs=None):
        self.spec = spec
        self.layout = spec.layout()
        self.N = spec.num_agents
        self.eq = EqualityRows(spec)
        self.costs = extra_costs or CostModel(spec, theta_bar)
        self.families: List[ConstraintFamily] = []
        self.thetas: List[np.ndarray] = []
        fam = unknown_family(spec)
        self.unknown = fam
        if fam is not None and theta is not None:
            self.families.append(fam)
            self.thetas.append(fam.check_theta(theta))
        for k in known_families(spec):
            self.families.append(k)
            self.thetas.append(k.fixed_theta)
        owners, starts, sizes, offs = [], [], [], []
        off = 0
        for f in self.families:
            owners.append(f.scalar_owner)
            starts.append(f.block_start + off)
            sizes.append(f.block_size)
            offs.append(off)
            off += f.num_scalars
        self.num_scalars = off
        self.scalar_owner = np.concatenate(owners) if owners else np.zeros(0, int)
        self.block_start = np.concatenate(starts) if starts else np.zeros(0, int)
        self.block_size = np.concatenate(sizes) if sizes else np.zeros(0, int)
        self.block_owner = self.scalar_owner[self.block_start] if off else np.zeros(0, int)
        self.family_offset = offs
        self.own = [self.layout.agent_idx(i) for i in range(self.N)]
        self.own_mask = np.zeros((self.N, self.layout.size), bool)
        for i in range(self.N):
            self.own_mask[i, self.own[i]] = True

    # constraints ---------------------------------------------------------------
    def g(self, xi) -> np.ndarray:
        if not self.families:
            return np.zeros(0)
        return np.concatenate([f.evaluate(t, xi, check=False) for f, t in zip(self.families, self.thetas)])

    def g_grad(self, xi) -> np.ndarray:
        if not self.families:
            return np.zeros((0, self.layout.size))
        return np.vstack([f.grad(t, xi, check=False) for f, t in zip(self.families, self.thetas)])

    def g_hessian_rows(self, xi, lam) -> np.ndarray:
        """sum_s lam_s Hess g_s, keeping only rows owned by each scalar's agent."""
        n = self.layout.size
        H = np.zeros((n, n))
        for f, t, off in zip(self.families, self.thetas, self.family_offset):
            lf = lam[off:off + f.num_scalars]
            nz = np.flatnonzero(lf)
            if nz.size == 0:
                continue
            blocks = f.hessian_local(t, lf, xi)
            for s in nz:
                idx = f.scalar_local[s]
                rows = self.own_mask[f.scalar_owner[s], idx]
                H[np.ix_(idx[rows], idx)] += blocks[s][rows]
        return H

    def block_values(self, g) -> np.ndarray:
        if g.size == 0:
            return g
        return np.minimum.reduceat(g, self.block_start)

    def select_faces(self, xi) -> np.ndarray:
        """Most satisfied disjunct (smallest g) of every block, as global scalar ids."""
        g = self.g(xi)
        out = np.empty(self.block_start.size, int)
        for b, (s, k) in enumerate(zip(self.block_start, self.block_size)):
            out[b] = s + int(np.argmin(g[s:s + k]))
        return out

    def _unknown_range(self):
        if self.unknown is not None and self.families and self.families[0] is self.unknown:
            return 0, self.unknown.num_scalars
        return 0, 0

    def split_lam(self, lam):
        """Flat multipliers -> per-agent tuples for the unknown family and known constraints."""
        a, b = self._unknown_range()
        idx = np.arange(self.num_scalars)
        unk = (idx >= a) & (idx < b)
        lam_u = tuple(np.asarray(lam)[unk & (self.scalar_owner == i)] for i in range(self.N))
        lam_k = tuple(np.asarray(lam)[~unk & (self.scalar_owner == i)] for i in range(self.N))
        return lam_u, lam_k

    def join_lam(self, lam_u, lam_k=None):
        a, b = self._unknown_range()
        idx = np.arange(self.num_scalars)
        unk = (idx >= a) & (idx < b)
        lam = np.zeros(self.num_scalars)
        for i in range(self.N):
            lam[unk & (self.scalar_owner == i)] = lam_u[i] if len(lam_u) else 0.0
            if lam_k is not None and len(lam_k):
                lam[~unk & (self.scalar_owner == i)] = lam_k[i]
        return lam

    def stationarity(self, xi, lam, nus):
        """Per-agent stationarity residual vectors over own coordinates."""
        G = self.g_grad(xi)
        out = []
        for i in range(self.N):
            o = self.own[i]
            r = self.costs.grad(i, xi)[o]
            mine = np.flatnonzero(self.scalar_owner == i)
            if mine.size:
                r = r + G[np.ix_(mine, o)].T @ np.asarray(lam)[mine]
            r = r + self.eq.jacobian(i, xi)[:, o].T @ nus[i]
            out.append(r)
        return out

    def stationarity_l1(self, xi, lam, nus):
        return np.array([float(np.sum(np.abs(r))) for r in self.stationarity(xi, lam, nus)])

    # equality rows --------------------------------------------------------------
    def h(self, xi) -> np.ndarray:
        return np.concatenate([self.eq.evaluate(i, xi) for i in range(self.N)])

    def h_jac(self, xi) -> np.ndarray:
        return np.vstack([self.eq.jacobian(i, xi) for i in range(self.N)])

    # costs -------------------------------------------------------------------
    def pseudo_grad(self, xi) -> np.ndarray:
        """Stack of each agent's own-coordinate cost gradient."""
        F = np.zeros(self.layout.size)
        for i in range(self.N):
            F[self.own[i]] = self.costs.grad(i, xi)[self.own[i]]
        return F

    def pseudo_hessian(self, xi) -> np.ndarray:
        n = self.layout.size
        H = np.zeros((n, n))
        for i in range(self.N):
            H[self.own[i]] = self.costs.hessian(i, xi)[self.own[i]]
        return H

    def potential(self, xi) -> float:
        """Sum of own-coordinate quadratic parts plus pairwise barriers counted once."""
        xi = np.asarray(xi, float)
        v = 0.0
        for i in range(self.N):
            o = self.own[i]
            H = self.costs.Q0[i][np.ix_(o, o)]
            if self.costs.Q1[i] is not None:
                H = H + self.costs.theta_bar[i] * self.costs.Q1[i][np.ix_(o, o)]
            v += 0.5 * xi[o] @ H @ xi[o]
        if np.any(self.costs.barrier):
            pos = [self.layout.pos_idx(i) for i in range(self.N)]
            for i in range(self.N):
                for j in range(i + 1, self.N):
                    w = 0.5 * (self.costs.barrier[i] + self.costs.barrier[j])
                    r = xi[pos[i]] - xi[pos[j]]
                    v -= w * np.sum(np.log(np.sum(r ** 2, axis=1)))
        return float(v)

    def is_potential(self) -> bool:
        for i in range(self.N):
            o = self.own[i]
            other = ~self.own_mask[i]
            H = self.costs.Q0[i]
            if np.any(H[np.ix_(o, np.flatnonzero(other))]):
                return False
        b = self.costs.barrier
        return bool(np.all(b == b[0]))


# ------------------------------------------------------------------------------
# initialization and reductions


def straight_line(spec: ScenarioSpec, perturb: float = 0.0, seed: int = 0) -> np.ndarray:
    """Straight-line positions lifted to a dynamically consistent trajectory.

    A seeded lateral bump of size ``perturb`` breaks head-on symmetry; among a
    few seeded draws the one keeping agents furthest apart is used, so that no
    pair starts out coincident (where distance gradients vanish).
    """
    lay = spec.layout()
    rng = np.random.default_rng(seed)
    T = spec.horizon
    s = np.linspace(0.0, 1.0, T)[:, None]
    base = []
    for i in range(spec.num_agents):
        o = np.asarray(spec.origins[i], float)
        g = np.asarray(spec.goals[i], float)
        base.append(o + s * (g - o))
    paths = base
    if perturb:
        best = -np.inf
        for _ in range(16):
            cand = []
            for i, P in enumerate(base):
                direction = rng.normal(size=P.shape[1])
                axis = P[-1] - P[0]
                if np.linalg.norm(axis) > 0:
                    direction -= axis * (direction @ axis) / (axis @ axis)
                direction /= max(np.linalg.norm(direction), 1e-12)
                cand.append(P + perturb * np.sin(np.pi * s) * direction)
            sep = min((np.min(np.linalg.norm(a[1:-1] - b[1:-1], axis=1), initial=np.inf)
                       for k, a in enumerate(cand) for b in cand[k + 1:]), default=np.inf)
            if sep > best:
                best, paths = sep, cand
    states, controls = [], []
    for i, model in enumerate(models_for(spec)):
        fv = None if spec.final_vel is None else spec.final_vel[i]
        X, U = model.from_positions(paths[i], spec.dt, final_velocity=fv)
        if spec.init_vel is not None and model.velocity_offset is not None:
            X = X.copy()
            X[0, model.velocity_offset:model.velocity_offset + spec.pos_dim] = spec.init_vel[i]
        states.append(X)
        controls.append(U)
    from .core import assemble
    return assemble(lay, states, controls)


def reducible(spec: ScenarioSpec) -> bool:
    """True when the game can be solved over positions alone and lifted afterwards.

    Requires position-only costs, no velocity pins and position-only constraints;
    then free controls make every position sequence reachable, and the KKT
    conditions in the original coordinates reduce to those of a
    single-integrator surrogate with the same positions.
    """
    if spec.init_vel is not None or spec.final_vel is not None:
        return False
    for a in spec.agents:
        opt = a.cost_options()
        if a.cost not in ("individual_smoothness", "shared_smoothness"):
            return False
        if opt.get("control_weight", 0.0) or opt.get("barrier_weight", 0.0):
            return False
        if a.dynamics == "unicycle_v":
            return False
    fams = [spec.unknown_family] if spec.unknown_family is not None else []
    fams += [k for k in spec.known_constraints if k.kind != "boundary_eq"]
    for f in fams:
        if f.kind in ("velocity_sphere", "line_of_sight"):
            return False
    return True


def surrogate_spec(spec: ScenarioSpec) -> ScenarioSpec:
    d = spec.pos_dim
    agents = tuple(AgentSpec(d, d, "single_int", a.cost, (), a.cost_params) for a in spec.agents)
    return spec.replace(agents=agents)


def lift_positions(spec: ScenarioSpec, xi_pos: np.ndarray, source: ScenarioSpec) -> np.ndarray:
    """Lift a surrogate trajectory's positions into ``spec``'s dynamics."""
    from .core import assemble
    src = source.layout()
    states, controls = [], []
    for i, model in enumerate(models_for(spec)):
        P = xi_pos[src.pos_idx(i)]
        X, U = model.from_positions(P, spec.dt)
        states.append(X)
        controls.append(U)
    return assemble(spec.layout(), states, controls)


# ------------------------------------------------------------------------------
# solvers


def _slsqp(fun, jac, x0, eq, eq_jac, ineq, ineq_jac, cfg: NashConfig):
    cons = [{"type": "eq", "fun": eq, "jac": eq_jac}]
    if ineq is not None:
        cons.append({"type": "ineq", "fun": ineq, "jac": ineq_jac})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(fun, x0, jac=jac, method="SLSQP", constraints=cons,
                       options={"maxiter": cfg.slsqp_maxiter, "ftol": cfg.slsqp_ftol})
    return res.x


def central_solve(game: Game, xi0, selected, cfg: NashConfig):
    """Minimize the game potential subject to all selected faces."""
    def ineq(x):
        return -game.g(x)[selected]

    def ineq_jac(x):
        return -game.g_grad(x)[selected]

    return _slsqp(game.potential, game.pseudo_grad, xi0, game.h, game.h_jac,
                  ineq if selected.size else None, ineq_jac, cfg)


def best_response(game: Game, xi, agent: int, selected, cfg: Optional[NashConfig] = None):
    """Agent ``agent``'s optimal slice with the other agents frozen.

    Minimizes J^i subject to h^i = 0 and the selected faces owned by the agent.
    Returns the full flat vector with only the agent's coordinates changed.
    """
    cfg = cfg or NashConfig()
    xi = np.asarray(xi, float).copy()
    o = game.own[agent]
    sel = selected[game.scalar_owner[selected] == agent]

    def full(z):
        x = xi.copy()
        x[o] = z
        return x

    def fun(z):
        return game.costs.value(agent, full(z))

    def jac(z):
        return game.costs.grad(agent, full(z))[o]

    def eq(z):
        return game.eq.evaluate(agent, full(z))

    def eq_jac(z):
        return game.eq.jacobian(agent, full(z))[:, o]

    def ineq(z):
        return -game.g(full(z))[sel]

    def ineq_jac(z):
        return -game.g_grad(full(z))[np.ix_(sel, o)]

    z = _slsqp(fun, jac, xi[o], eq, eq_jac, ineq if sel.size else None, ineq_jac, cfg)
    return full(z)


def fit_multipliers(game: Game, xi, active=None, lam_bound=None):
    """Nonnegative least-squares multipliers for each agent's stationarity.

    Returns (lam over all scalars, list of nu per agent, per-agent inf-norm residual).
    """
    xi = np.asarray(xi, float)
    g = game.g(xi)
    G = game.g_grad(xi)
    if active is None:
        active = np.flatnonzero(np.abs(g) <= TOL_ACTIVE)
    lam = np.zeros(game.num_scalars)
    nus, res = [], []
    for i in range(game.N):
        o = game.own[i]
        grad = game.costs.grad(i, xi)[o]
        Hj = game.eq.jacobian(i, xi)[:, o]
        act = active[game.scalar_owner[active] == i]
        A = np.hstack([G[np.ix_(act, o)].T, Hj.T])
        lo = np.concatenate([np.zeros(act.size), np.full(Hj.shape[0], -np.inf)])
        hi = np.full(A.shape[1], np.inf)
        if A.shape[1]:
            sol = lsq_linear(A, -grad, bounds=(lo, hi), method="bvls", tol=1e-14, lsmr_tol=None)
            y = sol.x
        else:
            y = np.zeros(0)
        lam[act] = y[:act.size]
        nus.append(y[act.size:])
        res.append(float(np.max(np.abs(grad + A @ y), initial=0.0)))
    return lam, nus, np.array(res)


def newton_polish(game: Game, xi, active, cfg: NashConfig):
    """Gauss-Newton on the stacked Nash KKT system with a fixed active set."""
    xi = np.asarray(xi, float).copy()
    lam_all, nus, _ = fit_multipliers(game, xi, active)
    lam = lam_all[active]
    nu = np.concatenate(nus) if nus else np.zeros(0)
    n = xi.size
    na, ne = active.size, nu.size
    rows_h = [game.eq.num_rows(i) for i in range(game.N)]
    h_owner = np.repeat(np.arange(game.N), rows_h)

    def residual(x, lam, nu):
        G = game.g_grad(x)[active]
        Hj = game.h_jac(x)
        F = game.pseudo_grad(x)
        stat = F.copy()
        for k, s in enumerate(active):
            stat += lam[k] * G[k] * game.own_mask[game.scalar_owner[s]]
        for i in range(game.N):
            rows = h_owner == i
            stat += game.own_mask[i] * (Hj[rows].T @ nu[rows])
        return np.concatenate([stat, game.g(x)[active], game.h(x)]), G, Hj

    best = None
    for _ in range(cfg.newton_iters):
        r, G, Hj = residual(xi, lam, nu)
        nr = np.max(np.abs(r), initial=0.0)
        if best is None or nr < best[0]:
            best = (nr, xi.copy(), lam.copy(), nu.copy())
        if nr < 1e-12:
            break
        lam_full = np.zeros(game.num_scalars)
        lam_full[active] = lam
        Jx = game.pseudo_hessian(xi) + game.g_hessian_rows(xi, lam_full)
        off = 0
        for i in range(game.N):
            k = rows_h[i]
            Hn = game.eq.hessian_contract(i, xi, nu[off:off + k])
            Jx[game.own[i]] += Hn[game.own[i]]
            off += k
        Jl = (G * game.own_mask[game.scalar_owner[active]]).T
        Jn = Hj.T * game.own_mask[h_owner].T
        top = np.hstack([Jx, Jl, Jn])
        mid = np.hstack([G, np.zeros((na, na + ne))])
        bot = np.hstack([Hj, np.zeros((ne, na + ne))])
        J = np.vstack([top, mid, bot])
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        xi = xi + step[:n]
        lam = lam + step[n:n + na]
        nu = nu + step[n + na:]
    return best


def kkt_residual(spec: ScenarioSpec, theta, xi, certificate: Optional[KktCertificate] = None,
                 theta_bar=None, demo: int = 0) -> np.ndarray:
    """Per-agent L1 norm of the stationarity residual.

    With a certificate its multipliers (demo ``demo``) are used as given;
    without one they are re-fitted by nonnegative least squares on the active
    constraints.
    """
    game = Game(spec, theta, theta_bar)
    xi = np.asarray(xi, float)
    if certificate is None:
        lam, nus, _ = fit_multipliers(game, xi)
    else:
        lam = game.join_lam(certificate.lam[demo], certificate.lam_known[demo]
                            if certificate.lam_known else None)
        nus = [np.asarray(v, float) for v in certificate.nu[demo]]
    return game.stationarity_l1(xi, lam, nus)


def certify(game: Game, xi, theta=None) -> KktCertificate:
    """Single-demo certificate with independently fitted multipliers."""
    xi = np.asarray(xi, float)
    lam, nus, _ = fit_multipliers(game, xi)
    lam_u, lam_k = game.split_lam(lam)
    th = np.asarray(theta if theta is not None else [], float)
    res = game.stationarity_l1(xi, lam, nus)
    return KktCertificate(theta=th, lam=(lam_u,), nu=(tuple(nus),), lam_known=(lam_k,),
                          residuals=(tuple(float(r) for r in res),),
                          cost_theta=game.costs.theta_bar.copy() if any(game.costs.has_unknown_weight)
                          else None)


def _solve_core(game: Game, spec: ScenarioSpec, seed: int, cfg: NashConfig, xi0=None):
    xi = straight_line(spec, cfg.perturb, seed) if xi0 is None else np.asarray(xi0, float)
    if game.num_scalars == 0:
        xi = _slsqp(game.potential, game.pseudo_grad, xi, game.h, game.h_jac, None, None, cfg)
        return xi, np.zeros(0, int)
    selected = game.select_faces(xi)
    if cfg.central and game.is_potential():
        for _ in range(cfg.max_face_rounds):
            xi = central_solve(game, xi, selected, cfg)
            new = game.select_faces(xi)
            if np.array_equal(new, selected):
                break
            selected = new
    for _ in range(cfg.ibr_sweeps):
        prev = xi.copy()
        for i in range(game.N):
            xi = best_response(game, xi, i, selected, cfg)
        new = game.select_faces(xi)
        moved = np.max(np.abs(xi - prev))
        if np.array_equal(new, selected) and moved < 1e-10:
            break
        selected = new
    return xi, selected


def _quality(game: Game, xi) -> float:
    """Worst of stationarity (refitted multipliers), equality error and block violation."""
    _, _, res = fit_multipliers(game, xi)
    bv = game.block_values(game.g(xi))
    return max(float(res.max(initial=0.0)), float(np.max(np.abs(game.h(xi)), initial=0.0)),
               float(bv.max()) if bv.size else 0.0)


def _refine(game: Game, xi, selected, cfg: NashConfig):
    """Active-set loop around the joint Newton polish.

    Faces with negative Newton multipliers are released, and the most
    satisfied face of every block the polish pushed into violation is added,
    until the active set is stable.  The best certified iterate is returned.
    """
    best_xi, best_q = xi, _quality(game, xi)
    if selected.size == 0:
        active = np.zeros(0, int)
    else:
        g = game.g(xi)
        active = np.unique(selected[g[selected] >= -1e-5])
    for _ in range(2 * cfg.max_face_rounds):
        res = newton_polish(game, xi, active, cfg)
        if res is None:
            break
        x, lam = res[1], res[2]
        q = _quality(game, x)
        if q < best_q:
            best_xi, best_q = x, q
        if best_q <= min(cfg.stat_tol, cfg.feas_tol) * 1e-2:
            break
        keep = active[lam > -1e-10]
        g = game.g(x)
        bv = game.block_values(g)
        add = [game.block_start[b] + int(np.argmin(g[game.block_start[b]:game.block_start[b] + game.block_size[b]]))
               for b in np.flatnonzero(bv > cfg.feas_tol)]
        new = np.unique(np.concatenate([keep, np.asarray(add, int)]))
        if np.array_equal(new, active):
            break
        active = new
        xi = x
    return best_xi


def solve_nash(spec: ScenarioSpec, theta=None, seed: int = 0, config: Optional[NashConfig] = None,
               theta_bar=None, xi0=None):
    """Local Nash equilibrium of the scenario under parameter ``theta``.

    Returns (Trajectory, KktCertificate).  The certificate's multipliers are
    re-fitted independently of the solver and the residual is checked against
    ``config.stat_tol``.
    """
    cfg = config or NashConfig()
    work = spec
    if cfg.reduce and reducible(spec) and any(a.dynamics != "single_int" for a in spec.agents):
        work = surrogate_spec(spec)
    game = Game(work, theta, theta_bar)
    xi, selected = _solve_core(game, work, seed, cfg, xi0 if work is spec else None)
    xi = _refine(game, xi, selected, cfg)
    if work is not spec:
        xi = lift_positions(spec, xi, work)
    final = Game(spec, theta, theta_bar)
    cert = certify(final, xi, theta)
    traj = Trajectory(xi, spec.layout(), spec.digest())
    _, _, res_inf = fit_multipliers(final, xi)
    bv = final.block_values(final.g(xi))
    worst_res = float(res_inf.max(initial=0.0))
    eq_err = float(np.max(np.abs(final.h(xi)), initial=0.0))
    viol = float(bv.max()) if bv.size else 0.0
    if worst_res > cfg.stat_tol or eq_err > cfg.feas_tol or viol > cfg.feas_tol:
        if viol > 1.0:
            raise InfeasibleBoundaryError(f"no feasible equilibrium found; worst block violation {viol:.3g}")
        raise ConvergenceError("Nash solve did not certify", max(worst_res, eq_err, viol), traj)
    return traj, cert
