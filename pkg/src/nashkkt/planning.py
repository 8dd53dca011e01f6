"""Motion planning with learned constraints.

Three planners share one safety report:

* ``plan_kkt`` solves the forward game under a learned parameter;
* ``plan_mppi`` runs sampling-based trajectory updates in which every
  sample's constraint cost comes from a feasibility MILP over the parameters
  consistent with the demonstrations (the sample is charged only when some
  such parameter makes it unsafe);
* ``baseline_plan`` drops explicit constraints and instead adds a pairwise
  log-barrier whose weight is fitted to the demonstrations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from .constraints import make_family
from .core import AgentSpec, DemonstrationSet, ScenarioSpec, Trajectory, assemble
from .costs import CostModel
from .dynamics import NumericInputError, models_for
from .game import ConvergenceError, Game, NashConfig, solve_nash, straight_line
from .inverse import InverseProblem
from .milp import solve
from .volumes import VolumeAtlas, VolumeContext, scalar_bounds


class RankError(ValueError):
    """The least-squares problem for the barrier weight is degenerate."""


# ---------------------------------------------------------------------------
# safety report


def pair_distances(spec: ScenarioSpec, xi) -> Dict[Tuple[int, int], np.ndarray]:
    """Distance profile over time for every agent pair."""
    lay = spec.layout()
    xi = np.asarray(xi, float)
    pos = [xi[lay.pos_idx(i)] for i in range(spec.num_agents)]
    return {(i, j): np.linalg.norm(pos[i] - pos[j], axis=1)
            for i in range(spec.num_agents) for j in range(i + 1, spec.num_agents)}


def safety_report(spec: ScenarioSpec, xi, theta=None, theta_true=None,
                  atlas: Optional[VolumeAtlas] = None) -> dict:
    """Distances, goal errors and constraint values of a plan.

    ``theta`` is the parameter the plan was made with and ``theta_true`` the
    ground truth (when known); both are evaluated on the scenario's unknown
    family.
    """
    xi = np.asarray(xi, float)
    lay = spec.layout()
    d = pair_distances(spec, xi)
    out = {"min_distance": float(min((v.min() for v in d.values()), default=np.inf)),
           "distance_profile": {f"{i}-{j}": v.tolist() for (i, j), v in d.items()},
           "goal_error": [float(np.linalg.norm(xi[lay.pos_idx(i)][-1] - np.asarray(spec.goals[i])))
                          for i in range(spec.num_agents)]}
    if spec.unknown_family is not None:
        fam = make_family(spec, spec.unknown_family)
        for key, th in (("learned", theta), ("true", theta_true)):
            if th is not None:
                bv = fam.block_values(fam.evaluate(th, xi, check=False))
                out[f"max_violation_{key}"] = float(max(bv.max(initial=-np.inf), 0.0))
    if atlas is not None:
        out["atlas"] = atlas.membership(xi)
    return out


# ---------------------------------------------------------------------------
# forward-game planning


def plan_kkt(spec: ScenarioSpec, theta=None, atlas: Optional[VolumeAtlas] = None, seed: int = 0,
             config: Optional[NashConfig] = None, theta_true=None, tol: float = 1e-8):
    """Forward-game plan under a learned parameter.

    Returns (Trajectory, report).  Raises ConvergenceError when the game
    cannot be certified and ValueError when the plan violates the learned
    constraints by more than ``tol``.
    """
    if spec.unknown_family is None or theta is None:
        spec_run = spec if theta is not None else spec.replace(unknown_family=None)
        traj, _ = solve_nash(spec_run, None, seed, config)
        traj = Trajectory(traj.data, spec.layout(), spec.digest())
        return traj, safety_report(spec, traj.data, theta_true=theta_true, atlas=atlas)
    traj, cert = solve_nash(spec, theta, seed, config)
    rep = safety_report(spec, traj.data, theta, theta_true, atlas)
    rep["kkt_residual"] = float(max((max(r) for r in cert.residuals), default=0.0))
    if rep.get("max_violation_learned", 0.0) > tol:
        raise ValueError(f"plan violates the learned constraints by {rep['max_violation_learned']:.3g}")
    return traj, rep


# ---------------------------------------------------------------------------
# MPPI


@dataclass
class MppiConfig:
    """Sampling planner settings.

    ``sigma_u`` is the per-axis standard deviation of the control noise and
    ``temperature`` divides the costs inside the softmax.
    """

    samples: int = 16
    iterations: int = 70
    sigma_u: float = 3.0
    temperature: float = 1.0
    tol: Optional[float] = None          # stop when the nominal moves less than this
    keep_goal: bool = True               # project noise so the terminal position is unchanged

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("MPPI needs at least one sample")
        if not self.sigma_u > 0:
            raise ValueError("sigma_u must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


@dataclass
class MppiState:
    spec: ScenarioSpec
    x0: List[np.ndarray]
    controls: List[np.ndarray]           # per agent (T, m)
    xi: np.ndarray
    history: List[dict] = field(default_factory=list)


class ViolationOracle:
    """Decides whether some demo-consistent parameter makes a trajectory unsafe.

    The demonstration rows of the feasibility MILP are built once; each query
    copies them and appends the trajectory-dependent violation disjunction.
    Interval bounds over the parameter hull settle clear cases without a MILP:
    if no block can be violated for any parameter in the hull the answer is
    no, and if some block is violated for every parameter in the hull the
    answer is yes (the consistent set lies inside the hull).
    """

    def __init__(self, problem: InverseProblem, spec: ScenarioSpec, margin: float = 1e-4,
                 shortcut: bool = True):
        self.ctx = VolumeContext.build(problem)
        self.spec = spec
        self.shortcut = shortcut
        self.fam = make_family(spec, problem.demos[0].scenario.unknown_family)
        self.margin = margin
        self.milps = 0
        self._ref = None

    def reference(self):
        if self._ref is None:
            self._ref = self.ctx.reference_theta()
        return self._ref

    def __call__(self, xi) -> Optional[np.ndarray]:
        """A consistent parameter under which ``xi`` violates some block, or None."""
        fam, ctx = self.fam, self.ctx
        if self.shortcut:
            lo, hi = scalar_bounds(fam, xi, 0.0, ctx.theta_lo, ctx.theta_hi)
            if not np.any(np.logical_and.reduceat(hi >= self.margin, fam.block_start)):
                return None
            if np.any(np.logical_and.reduceat(lo >= self.margin, fam.block_start)):
                return self.reference()
        enc = ctx.encoding
        m = enc.model.copy()
        G0, G1 = fam.decomposition(xi)
        M = ctx.problem.config.M
        y = m.add_vars(fam.num_blocks, "viol", binary=True)
        for b, (b0, bs) in enumerate(zip(fam.block_start, fam.block_size)):
            for s in range(b0, b0 + bs):
                nz = np.flatnonzero(G1[s])
                m.add_row(np.append(enc.theta[nz], y[b]), np.append(G1[s, nz], -M), ">",
                          self.margin - G0[s] - M)
        m.add_row(y, np.ones(y.size), ">", 1.0)
        m.set_objective([], [])
        self.milps += 1
        sol = solve(m, ctx.problem.config.milp)
        return None if sol.x is None else sol.x[enc.theta]


def _terminal_basis(spec: ScenarioSpec, agent: int, x0) -> Optional[np.ndarray]:
    """Orthonormal basis of control perturbations that keep the final position fixed.

    Only defined for linear dynamics; returns None otherwise.
    """
    model = models_for(spec)[agent]
    if not model.linear:
        return None
    T, m = spec.horizon, model.control_dim
    lay = spec.layout()
    d = spec.pos_dim
    zero = model.unroll(np.zeros(model.state_dim), np.zeros((T, m)), spec.dt)
    cols = []
    for k in range((T - 1) * m):
        u = np.zeros((T, m))
        u.flat[k] = 1.0
        xs = model.unroll(np.zeros(model.state_dim), u, spec.dt)
        cols.append(xs[-1, :d] - zero[-1, :d])
    R = np.array(cols).T                      # (d, (T-1) m)
    return null_space(R)


def mppi_init(spec: ScenarioSpec) -> MppiState:
    """Straight-line nominal lifted to a dynamically consistent trajectory."""
    xi = straight_line(spec, 0.0)
    lay = spec.layout()
    x0 = [xi[lay.state_idx(i)][0].copy() for i in range(spec.num_agents)]
    controls = [xi[lay.control_idx(i)].copy() for i in range(spec.num_agents)]
    return MppiState(spec, x0, controls, xi)


def _assemble(spec: ScenarioSpec, x0, controls) -> np.ndarray:
    states = [m.unroll(x0[i], controls[i], spec.dt) for i, m in enumerate(models_for(spec))]
    return assemble(spec.layout(), states, controls)


def softmax_weights(costs, temperature: float = 1.0) -> np.ndarray:
    c = np.asarray(costs, float) / temperature
    w = np.exp(-(c - c.min()))
    return w / w.sum()


def mppi_iterate(state: MppiState, oracle: Optional[ViolationOracle], config: MppiConfig,
                 rng, costs: Optional[CostModel] = None, bases=None) -> MppiState:
    """One sampling update of every agent's nominal controls.

    Each sample perturbs all agents' controls, is unrolled, and is charged
    c_cv^i = sum of positive block violations owned by agent i under a
    demo-consistent parameter that makes it unsafe (zero when no such
    parameter exists).  Each agent's nominal becomes the softmax-weighted
    mean of the sampled controls under its own cost J^i + c_cv^i.
    """
    spec = state.spec
    N = spec.num_agents
    costs = costs or CostModel(spec)
    lay = spec.layout()
    if bases is None:
        bases = [_terminal_basis(spec, i, state.x0[i]) if config.keep_goal else None for i in range(N)]
    S = config.samples
    samples, J = [], np.full((S, N), np.inf)
    ccv = np.zeros((S, N))
    for s in range(S):
        ctrl = []
        for i in range(N):
            U = state.controls[i]
            T, m = U.shape
            if bases[i] is not None:
                w = rng.normal(0.0, config.sigma_u, size=bases[i].shape[1])
                du = np.zeros((T, m))
                du[:-1] = (bases[i] @ w).reshape(T - 1, m)
            else:
                du = np.zeros((T, m))
                du[:-1] = rng.normal(0.0, config.sigma_u, size=(T - 1, m))
            ctrl.append(U + du)
        try:
            xi = _assemble(spec, state.x0, ctrl)
        except NumericInputError:
            samples.append(None)
            continue
        samples.append(ctrl)
        J[s] = [costs.value(i, xi) for i in range(N)]
        th = oracle(xi) if oracle is not None else None
        if th is not None:
            g = np.maximum(oracle.fam.evaluate(th, xi, check=False), 0.0)
            ccv[s] = np.bincount(oracle.fam.scalar_owner, weights=g, minlength=N)
    ok = np.isfinite(J).all(axis=1)
    if not ok.any():
        raise NumericInputError("every MPPI sample failed to unroll")
    new = []
    weights = []
    for i in range(N):
        w = softmax_weights((J[ok, i] + ccv[ok, i]), config.temperature)
        weights.append(w)
        stack = np.stack([samples[s][i] for s in np.flatnonzero(ok)])
        new.append(np.tensordot(w, stack, axes=1))
    xi = _assemble(spec, state.x0, new)
    change = max(float(np.max(np.abs(a - b))) for a, b in zip(new, state.controls))
    rec = {"change": change, "weight_sums": [float(w.sum()) for w in weights],
           "charged": int(np.sum(ccv.sum(1) > 0)), "min_distance":
           float(min((v.min() for v in pair_distances(spec, xi).values()), default=np.inf))}
    return MppiState(spec, state.x0, new, xi, state.history + [rec])


def plan_mppi(spec: ScenarioSpec, demos: Sequence[DemonstrationSet], config: Optional[MppiConfig] = None,
              seed: int = 0, problem: Optional[InverseProblem] = None,
              atlas: Optional[VolumeAtlas] = None, theta_true=None):
    """Iterate the sampling update from a straight-line nominal.

    Returns (Trajectory, report).  The report holds the safety report, the
    per-iterate history and the number of feasibility MILPs solved.
    """
    config = config or MppiConfig()
    rng = np.random.default_rng(seed)
    state = mppi_init(spec)
    oracle = None
    if spec.unknown_family is not None and demos:
        problem = problem or InverseProblem(list(demos), "exact_offset" if make_family(
            spec, spec.unknown_family).offset else "relaxed_affine")
        oracle = ViolationOracle(problem, spec)
    costs = CostModel(spec)
    bases = [_terminal_basis(spec, i, state.x0[i]) if config.keep_goal else None
             for i in range(spec.num_agents)]
    for _ in range(config.iterations):
        state = mppi_iterate(state, oracle, config, rng, costs, bases)
        if config.tol is not None and state.history[-1]["change"] < config.tol:
            break
    traj = Trajectory(state.xi, spec.layout(), spec.digest())
    rep = safety_report(spec, state.xi, theta_true=theta_true, atlas=atlas)
    rep["iterations"] = len(state.history)
    rep["milps"] = oracle.milps if oracle is not None else 0
    rep["history"] = state.history
    return traj, rep


# ---------------------------------------------------------------------------
# log-barrier baseline


def _with_barrier(spec: ScenarioSpec, weight: float) -> ScenarioSpec:
    agents = []
    for a in spec.agents:
        opts = a.cost_options()
        opts["barrier_weight"] = float(weight)
        agents.append(AgentSpec(a.state_dim, a.control_dim, a.dynamics, a.cost, a.dynamics_params,
                                tuple(sorted(opts.items()))))
    return spec.replace(agents=tuple(agents), unknown_family=None)


def baseline_cost_inference(demos: Sequence[DemonstrationSet]) -> float:
    """Least-squares barrier weight explaining the demonstrations without constraints.

    Each agent's stationarity over its own coordinates reads
    a + w b + H^T nu = 0 with b the gradient of -sum log |p_i - p_j|^2.
    Projecting out the equality multipliers leaves a scalar least-squares
    problem in w with the closed-form minimizer -<Pa, Pb> / <Pb, Pb>,
    clipped at zero.
    """
    num, den = 0.0, 0.0
    for ds in demos:
        spec = ds.scenario.replace(unknown_family=None)
        game = Game(spec)
        for tr in ds:
            xi = np.asarray(tr.data, float)
            for i in range(spec.num_agents):
                o = game.own[i]
                a = game.costs.grad(i, xi)[o]
                b = game.costs.barrier_basis(i, xi)[o]
                H = game.eq.jacobian(i, xi)[:, o].T
                Q, _ = np.linalg.qr(H)
                pa = a - Q @ (Q.T @ a)
                pb = b - Q @ (Q.T @ b)
                num += pa @ pb
                den += pb @ pb
    if den <= 1e-24:
        raise RankError("barrier gradient lies in the span of the equality constraints")
    return max(-num / den, 0.0)


def baseline_plan(spec: ScenarioSpec, weight: float, seed: int = 0, theta_true=None,
                  config: Optional[NashConfig] = None):
    """Unconstrained game plan under the barrier-augmented costs.

    Returns (Trajectory, report); the report is evaluated against
    ``theta_true`` when given.
    """
    if weight < 0:
        raise ValueError("barrier weight must be nonnegative")
    run = _with_barrier(spec, weight)
    try:
        traj, _ = solve_nash(run, None, seed, config or NashConfig(perturb=0.5))
    except ConvergenceError as err:
        if err.trajectory is None:
            raise
        traj = err.trajectory
    traj = Trajectory(traj.data, spec.layout(), spec.digest())
    return traj, safety_report(spec, traj.data, theta_true=theta_true)
