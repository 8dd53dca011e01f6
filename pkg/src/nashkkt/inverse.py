"""Inverse KKT: constraint parameters consistent with Nash demonstrations.

The demonstrations fix the trajectory, so every KKT condition of every agent
becomes linear in the unknowns (theta, multipliers) once complementarity and
the disjunctions are encoded with binaries.  Three encodings are provided:

``exact_offset``
    For families whose gradients do not depend on theta.  Per scalar s the
    binaries are z (primal disjunct), zh1/zh2 (complementary slackness), q
    (disjunct enforced in the KKT system) and its complement qt; the
    multiplier lam enters stationarity through the product w = q * lam.
``relaxed_affine``
    For families where theta multiplies trajectory terms.  The bilinear term
    lam * grad g(theta) is replaced by a bounded slack on the scalar's own
    local coordinates that may be nonzero only when the scalar is flagged
    active (g = 0).  The feasible set contains the exact one.
``stationarity_min``
    Either of the above with split slacks on every stationarity row; the
    objective is the total L1 stationarity error.

A centralized variant (system cost sum_i J^i, every multiplier acting on the
full trajectory) serves as the single-agent baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constraints import (TOL_ACTIVE, ConstraintFamily, EqualityRows, StructuralError,
                          known_families, make_family)
from .core import DataQualityError, DemonstrationSet, KktCertificate, ScenarioSpec
from .costs import CostModel
from .game import Game, fit_multipliers
from .milp import (DEFAULT_M, DEFAULT_MBAR, DEFAULT_MLOW, MilpConfig, MilpModel, check_big_m,
                   linearize_binary_product, solve)

MODES = ("exact_offset", "relaxed_affine", "stationarity_min")


class InferenceInfeasibleError(RuntimeError):
    """No parameter in the declared box is consistent with the demonstrations."""


@dataclass
class InverseConfig:
    M: float = DEFAULT_M
    M_low: float = DEFAULT_MLOW
    M_bar: float = DEFAULT_MBAR
    tol_eq: float = 1e-6            # demo equality rows must hold to this
    tol_known: float = 1e-6         # known inequalities: violation limit and activity band
    tol_identified: float = 1e-4    # interval width below which a coordinate counts as pinned
    tol_recertify: float = 1e-5
    theta_bar_bounds: Tuple[float, float] = (0.0, 2.0)
    milp: MilpConfig = field(default_factory=MilpConfig)


@dataclass
class InverseProblem:
    """Demonstrations (one or more sets sharing the unknown family) and the encoding choice.

    ``base`` selects the underlying encoding when ``mode`` is
    ``stationarity_min`` ("auto" picks exact for offset families).
    """

    demos: Sequence[DemonstrationSet]
    mode: str = "exact_offset"
    config: InverseConfig = field(default_factory=InverseConfig)
    cost_unknown: bool = False
    centralized: bool = False
    base: str = "auto"

    def __post_init__(self):
        if isinstance(self.demos, DemonstrationSet):
            self.demos = [self.demos]
        self.demos = list(self.demos)
        if not self.demos:
            raise ValueError("inverse problem needs at least one demonstration set")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; available: {MODES}")
        fams = {d.scenario.unknown_family for d in self.demos}
        if None in fams:
            raise StructuralError("scenario declares no unknown constraint family")
        if len(fams) != 1:
            raise StructuralError("all demonstration sets must share the unknown family")
        ref = self.demos[0].scenario
        for d in self.demos[1:]:
            s = d.scenario
            if (s.num_agents != ref.num_agents
                    or [a.dynamics for a in s.agents] != [a.dynamics for a in ref.agents]):
                raise StructuralError("demonstration sets must share agents and dynamics")
        self.family = make_family(ref, ref.unknown_family)
        if self.mode == "exact_offset" and not self.family.offset:
            raise StructuralError(f"{self.family.kind} is not offset-parameterized; "
                                  "use mode='relaxed_affine'")

    @property
    def exact(self) -> bool:
        if self.mode == "exact_offset":
            return True
        if self.mode == "relaxed_affine":
            return False
        if self.base == "auto":
            return bool(self.family.offset)
        return self.base == "exact_offset"

    @property
    def subopt(self) -> bool:
        return self.mode == "stationarity_min"

    @property
    def num_theta(self) -> int:
        return self.family.num_theta

    def items(self):
        """(scenario, flat trajectory) for every demonstration."""
        for ds in self.demos:
            for tr in ds.trajectories:
                yield ds.scenario, np.asarray(tr.data, float)


@dataclass
class DemoEncoding:
    spec: ScenarioSpec
    xi: np.ndarray
    family: ConstraintFamily
    G0: np.ndarray
    G1: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    q: Optional[np.ndarray] = None
    qt: Optional[np.ndarray] = None
    zh1: Optional[np.ndarray] = None
    zh2: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    z_active: Optional[np.ndarray] = None
    ell: Dict[int, np.ndarray] = field(default_factory=dict)
    lam_known: Dict[Tuple[int, int], int] = field(default_factory=dict)
    nu: List[np.ndarray] = field(default_factory=list)
    slack_pos: List[np.ndarray] = field(default_factory=list)
    slack_neg: List[np.ndarray] = field(default_factory=list)


@dataclass
class KktEncoding:
    model: MilpModel
    problem: InverseProblem
    theta: np.ndarray
    theta_bar: Dict[int, int]
    demos: List[DemoEncoding]
    census: Dict[str, int]

    @property
    def slack_vars(self) -> np.ndarray:
        out = [np.concatenate(d.slack_pos + d.slack_neg) for d in self.demos if d.slack_pos]
        return np.concatenate(out) if out else np.zeros(0, int)


# ---------------------------------------------------------------------------
# encoding


def _check_demo(spec: ScenarioSpec, xi: np.ndarray, cfg: InverseConfig):
    eq = EqualityRows(spec)
    for i in range(spec.num_agents):
        err = float(np.max(np.abs(eq.evaluate(i, xi)), initial=0.0))
        if err > cfg.tol_eq:
            raise DataQualityError(f"demonstration violates agent {i}'s dynamics or boundary rows "
                                   f"by {err:.3e}")
    known = []
    for fam in known_families(spec):
        g = fam.evaluate(fam.fixed_theta, xi)
        worst = float(fam.block_values(g).max(initial=-np.inf))
        if worst > cfg.tol_known:
            raise DataQualityError(f"demonstration violates known constraint {fam.kind} by {worst:.3e}")
        known.append((fam, g, fam.grad(fam.fixed_theta, xi)))
    return eq, known


def _stationarity_block(model: MilpModel, const: np.ndarray, columns, name: str, slack: bool,
                        enc_pos: list, enc_neg: list):
    """Add rows const + sum_cols C x (+ s+ - s-) = 0."""
    V = np.concatenate([np.asarray(v, int) for v, _ in columns]) if columns else np.zeros(0, int)
    C = np.hstack([m for _, m in columns]) if columns else np.zeros((const.size, 0))
    scale = max(1.0, float(np.max(np.abs(C), initial=0.0)))
    C = np.where(np.abs(C) <= 1e-14 * scale, 0.0, C)
    nrow = const.size
    if slack:
        sp = model.add_vars(nrow, f"{name}_sp", 0.0, np.inf)
        sn = model.add_vars(nrow, f"{name}_sn", 0.0, np.inf)
        enc_pos.append(sp)
        enc_neg.append(sn)
    dead = None
    for r in range(nrow):
        nz = np.flatnonzero(C[r])
        idx, coef = V[nz], C[r, nz]
        if slack:
            idx = np.concatenate([idx, [sp[r], sn[r]]])
            coef = np.concatenate([coef, [1.0, -1.0]])
        if idx.size == 0:
            if abs(const[r]) <= 1e-12:
                continue
            if dead is None:
                dead = model.add_var(f"{name}_fixed0", 0.0, 0.0)
            idx, coef = np.array([dead]), np.array([1.0])
        model.add_row(idx, coef, "=", -float(const[r]), f"{name}_{r}")


def build_encoding(problem: InverseProblem) -> KktEncoding:
    """Build the inverse-KKT MILP for ``problem`` and return it with its index maps."""
    cfg = problem.config
    M, Mb, Ml = cfg.M, cfg.M_bar, cfg.M_low
    fam0 = problem.family
    model = MilpModel(f"inverse_kkt_{problem.mode}")
    theta = np.array([model.add_var(f"theta_{fam0.theta_names[k]}", fam0.theta_lo[k], fam0.theta_hi[k])
                      for k in range(fam0.num_theta)], int)
    ref = problem.demos[0].scenario
    theta_bar: Dict[int, int] = {}
    if problem.cost_unknown:
        cm = CostModel(ref)
        for i, unk in enumerate(cm.has_unknown_weight):
            if unk:
                theta_bar[i] = model.add_var(f"theta_bar_{i}", *cfg.theta_bar_bounds)
        if not theta_bar:
            raise StructuralError("cost_unknown set but no agent cost carries an unknown weight")
    census = {"binaries": 0, "continuous": 0, "scalars": 0, "known_active": 0, "eq_rows": 0,
              "stationarity_rows": 0}
    demos: List[DemoEncoding] = []
    exact = problem.exact
    for d, (spec, xi) in enumerate(problem.items()):
        eq, known = _check_demo(spec, xi, cfg)
        fam = make_family(spec, spec.unknown_family)
        G0, G1 = fam.decomposition(xi)
        S = fam.num_scalars
        N = spec.num_agents
        lay = spec.layout()
        tag = f"d{d}"
        enc = DemoEncoding(spec, xi, fam, G0, G1,
                           z=model.add_vars(S, f"{tag}_z", binary=True),
                           lam=model.add_vars(S, f"{tag}_lam", 0.0, Mb) if exact else np.zeros(0, int))
        census["scalars"] += S
        # primal feasibility: g_s <= M (1 - z_s); one satisfied disjunct per block
        for s in range(S):
            nzt = np.flatnonzero(G1[s])
            check_big_m(model, theta[nzt], -G1[s, nzt], G0[s], M, f"{tag}_primal{s}")
            model.add_row(np.append(theta[nzt], enc.z[s]), np.append(G1[s, nzt], M), "<",
                          M - G0[s], f"{tag}_g{s}")
        for b0, bs in zip(fam.block_start, fam.block_size):
            model.add_row(enc.z[b0:b0 + bs], np.ones(bs), ">", 1.0, f"{tag}_cover{b0}")
        if exact:
            enc.zh1 = model.add_vars(S, f"{tag}_zh1", binary=True)
            enc.zh2 = model.add_vars(S, f"{tag}_zh2", binary=True)
            enc.q = model.add_vars(S, f"{tag}_q", binary=True)
            enc.qt = model.add_vars(S, f"{tag}_qt", binary=True)
            w = []
            for s in range(S):
                nzt = np.flatnonzero(G1[s])
                model.add_row([enc.lam[s], enc.zh1[s]], [1.0, -Mb], "<", 0.0, f"{tag}_cs1_{s}")
                check_big_m(model, theta[nzt], G1[s, nzt], -G0[s], M, f"{tag}_cs2_{s}")
                model.add_row(np.append(theta[nzt], enc.zh2[s]), np.append(-G1[s, nzt], -M), "<",
                              G0[s], f"{tag}_cs2_{s}")
                model.add_row([enc.zh1[s], enc.zh2[s], enc.q[s]], [1.0, 1.0, 1.0], "<", 2.0,
                              f"{tag}_cs_{s}")
                model.add_row([enc.q[s], enc.qt[s]], [1.0, 1.0], "=", 1.0, f"{tag}_qq_{s}")
                model.add_row([enc.q[s], enc.z[s]], [1.0, -1.0], "<", 0.0, f"{tag}_qz_{s}")
                model.add_row([enc.lam[s], enc.q[s]], [1.0, -Mb], "<", 0.0, f"{tag}_lq_{s}")
                w.append(linearize_binary_product(model, int(enc.q[s]), int(enc.lam[s]), 0.0, Mb,
                                                  f"{tag}_w{s}"))
            enc.w = np.array(w, int)
            for b0, bs in zip(fam.block_start, fam.block_size):
                model.add_row(enc.q[b0:b0 + bs], np.ones(bs), ">", 1.0, f"{tag}_qcover{b0}")
            census["binaries"] += 5 * S
            census["continuous"] += 2 * S
        else:
            enc.z_active = model.add_vars(S, f"{tag}_za", binary=True)
            for s in range(S):
                nzt = np.flatnonzero(G1[s])
                model.add_row(np.append(theta[nzt], enc.z_active[s]), np.append(G1[s, nzt], -M), ">",
                              -G0[s] - M, f"{tag}_act{s}")
                model.add_row([enc.z_active[s], enc.z[s]], [1.0, -1.0], "<", 0.0, f"{tag}_az{s}")
            census["binaries"] += 2 * S
        # dense unknown-family gradients (offset families only)
        grad_u = fam.scatter(fam.terms(xi)[2]) if exact else None
        cost = CostModel(spec)
        groups = [np.arange(lay.size)] if problem.centralized else [lay.agent_idx(i) for i in range(N)]
        for gi, o in enumerate(groups):
            members = list(range(N)) if problem.centralized else [gi]
            mask = np.zeros(lay.size, bool)
            mask[o] = True
            const = np.zeros(o.size)
            columns = []
            for i in members:
                a, b = cost.grad_affine(i, xi)
                const += a[o]
                if i in theta_bar:
                    columns.append((np.array([theta_bar[i]]), b[o][:, None]))
                elif cost.Q1[i] is not None:
                    const += cost.theta_bar[i] * b[o]
            mine = (np.arange(S) if problem.centralized
                    else np.flatnonzero(fam.scalar_owner == gi))
            if exact and mine.size:
                columns.append((enc.w[mine], grad_u[np.ix_(mine, o)].T))
            elif not exact:
                pos = {int(c): r for r, c in enumerate(o)}
                for s in mine:
                    loc = [int(c) for c in fam.scalar_local[s] if mask[c]]
                    if not loc:
                        continue
                    ell = model.add_vars(len(loc), f"{tag}_ell{s}_", Ml, Mb)
                    enc.ell[int(s)] = ell
                    for v, c in zip(ell, loc):
                        model.add_row([v, enc.z_active[s]], [1.0, -Mb], "<", 0.0)
                        model.add_row([v, enc.z_active[s]], [1.0, -Ml], ">", 0.0)
                    Cm = np.zeros((o.size, len(loc)))
                    Cm[[pos[c] for c in loc], np.arange(len(loc))] = 1.0
                    columns.append((ell, Cm))
                    census["continuous"] += len(loc)
            for kf, (kfam, gk, Gk) in enumerate(known):
                act = np.flatnonzero(np.abs(gk) <= cfg.tol_known)
                if not problem.centralized:
                    act = act[kfam.scalar_owner[act] == gi]
                if act.size:
                    lk = model.add_vars(act.size, f"{tag}_lamk{kf}_{gi}_", 0.0, Mb)
                    for s, v in zip(act, lk):
                        enc.lam_known[(kf, int(s))] = int(v)
                    columns.append((lk, Gk[np.ix_(act, o)].T))
                    census["known_active"] += act.size
                    census["continuous"] += act.size
            for i in members:
                J = eq.jacobian(i, xi)
                nu = model.add_vars(J.shape[0], f"{tag}_nu{i}_", -Mb, Mb)
                enc.nu.append(nu)
                columns.append((nu, J[:, o].T))
                census["eq_rows"] += J.shape[0]
                census["continuous"] += J.shape[0]
            _stationarity_block(model, const, columns, f"{tag}_stat{gi}", problem.subopt,
                                enc.slack_pos, enc.slack_neg)
            census["stationarity_rows"] += o.size
        demos.append(enc)
    census["theta"] = int(theta.size + len(theta_bar))
    census["continuous"] += census["theta"]
    census["vars"] = model.num_vars
    census["rows"] = model.num_rows
    enc = KktEncoding(model, problem, theta, theta_bar, demos, census)
    if problem.subopt:
        sv = enc.slack_vars
        model.set_objective(sv, np.ones(sv.size))
    return enc


def encode_kkt_milp(problem: InverseProblem) -> MilpModel:
    """The inverse-KKT MILP (its index maps are attached as ``model.encoding``)."""
    enc = build_encoding(problem)
    enc.model.encoding = enc
    return enc.model


def encode_kkt_relaxed(problem: InverseProblem) -> MilpModel:
    """Relaxed encoding for affine-parameterized families."""
    if problem.mode == "exact_offset":
        problem = InverseProblem(problem.demos, "relaxed_affine", problem.config,
                                 problem.cost_unknown, problem.centralized)
    return encode_kkt_milp(problem)


# ---------------------------------------------------------------------------
# solving


@dataclass
class InferenceResult:
    """Outcome of an inference query.

    ``theta`` is a demo-consistent point estimate (closest feasible point to
    the interval midpoints); ``theta_interval`` holds per-coordinate
    [min, max] over the feasible set and ``identified`` flags coordinates
    pinned to within ``tol_identified``.
    """

    status: str
    theta: Optional[np.ndarray] = None
    theta_interval: Optional[np.ndarray] = None
    identified: Optional[np.ndarray] = None
    theta_bar: Optional[np.ndarray] = None
    theta_bar_interval: Optional[np.ndarray] = None
    stationarity_error: float = 0.0
    certificate: Optional[KktCertificate] = None
    recertify_residual: float = np.inf
    recertified: bool = False
    census: Dict[str, int] = field(default_factory=dict)
    solves: List[dict] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    theta_names: List[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status in ("feasible", "optimal")

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return {"status": self.status, "theta": arr(self.theta),
                "theta_interval": arr(self.theta_interval), "identified": arr(self.identified),
                "theta_bar": arr(self.theta_bar), "theta_bar_interval": arr(self.theta_bar_interval),
                "stationarity_error": self.stationarity_error,
                "recertify_residual": self.recertify_residual, "recertified": self.recertified,
                "census": dict(self.census), "solves": list(self.solves),
                "warnings": list(self.warnings), "theta_names": list(self.theta_names)}


def _solve(enc: KktEncoding, objective=None, label: str = ""):
    model = enc.model
    saved = model.obj
    if objective is not None:
        model.set_objective(*objective)
    sol = solve(model, enc.problem.config.milp)
    model.obj = saved
    info = sol.stats()
    info["label"] = label
    return sol, info


def _theta_vars(enc: KktEncoding) -> Tuple[np.ndarray, np.ndarray]:
    tb_agents = np.array(sorted(enc.theta_bar), int)
    tb = np.array([enc.theta_bar[i] for i in tb_agents], int)
    return np.concatenate([enc.theta, tb]).astype(int), tb_agents


def theta_intervals(enc: KktEncoding, coords: Optional[Sequence[int]] = None,
                    solves: Optional[list] = None) -> np.ndarray:
    """Per-coordinate [min, max] of (theta, theta_bar) over the encoded feasible set.

    Coordinates are indexed over theta followed by the unknown cost weights.
    Returns an array (K, 2); rows of infeasible queries are NaN.
    """
    allv, _ = _theta_vars(enc)
    coords = range(allv.size) if coords is None else coords
    out = np.full((allv.size, 2), np.nan)
    slack = enc.slack_vars if enc.problem.subopt else None
    for k in coords:
        for col, sgn in ((0, 1.0), (1, -1.0)):
            if slack is not None and slack.size:
                # restrict to the minimal stationarity error before ranging theta
                raise StructuralError("theta intervals are defined for feasibility encodings")
            sol, info = _solve(enc, ([allv[k]], [sgn]), f"range[{k}]{'min' if sgn > 0 else 'max'}")
            if solves is not None:
                solves.append(info)
            if sol.x is not None:
                out[k, col] = sol.x[allv[k]]
    return out


def closest_feasible(enc: KktEncoding, target: np.ndarray, solves: list):
    """Feasible (theta, theta_bar) minimizing the L1 distance to ``target``."""
    allv, _ = _theta_vars(enc)
    m = enc.model.copy()
    t = m.add_vars(allv.size, "dist", 0.0, np.inf)
    for k in range(allv.size):
        m.add_row([t[k], allv[k]], [1.0, -1.0], ">", -target[k])
        m.add_row([t[k], allv[k]], [1.0, 1.0], ">", target[k])
    m.set_objective(t, np.ones(t.size))
    sol = solve(m, enc.problem.config.milp)
    info = sol.stats()
    info["label"] = "point"
    solves.append(info)
    return None if sol.x is None else sol.x[:enc.model.num_vars]


def recertify(problem: InverseProblem, theta, theta_bar=None, tol_active: float = TOL_ACTIVE):
    """Re-fit multipliers on every demo under (theta, theta_bar), independently of the MILP.

    Returns (KktCertificate, worst per-agent L1 stationarity residual, worst
    primal violation of the recovered constraints).
    """
    lams, nus, lks, ress = [], [], [], []
    worst, viol = 0.0, 0.0
    for spec, xi in problem.items():
        game = Game(spec, theta, theta_bar)
        g = game.g(xi)
        active = np.flatnonzero(np.abs(g) <= tol_active)
        lam, nu, _ = fit_multipliers(game, xi, active)
        res = game.stationarity_l1(xi, lam, nu)
        lu, lk = game.split_lam(lam)
        lams.append(lu)
        lks.append(lk)
        nus.append(tuple(nu))
        ress.append(tuple(float(r) for r in res))
        worst = max(worst, float(res.max(initial=0.0)))
        if g.size:
            viol = max(viol, float(game.block_values(g).max()))
    cert = KktCertificate(np.asarray(theta, float), tuple(lams), tuple(nus), tuple(lks), tuple(ress),
                          None if theta_bar is None else np.asarray(theta_bar, float))
    return cert, worst, viol


def _full_theta_bar(problem: InverseProblem, agents: np.ndarray, values: np.ndarray):
    cm = CostModel(problem.demos[0].scenario)
    tb = cm.theta_bar.copy()
    tb[agents] = values
    return tb


def _finish(problem: InverseProblem, enc: KktEncoding, x: np.ndarray, result: InferenceResult):
    allv, tb_agents = _theta_vars(enc)
    P = enc.theta.size
    th = np.clip(x[enc.theta], problem.family.theta_lo, problem.family.theta_hi)
    result.theta = th
    tb_full = None
    if tb_agents.size:
        result.theta_bar = x[allv[P:]]
        tb_full = _full_theta_bar(problem, tb_agents, result.theta_bar)
    cert, worst, viol = recertify(problem, th, tb_full)
    result.certificate = cert
    result.recertify_residual = max(worst, viol)
    result.recertified = worst < problem.config.tol_recertify and viol <= problem.config.tol_known


def infer(problem: InverseProblem, intervals: bool = True) -> InferenceResult:
    """Feasibility inference: demo-consistent parameters, intervals and a re-certified estimate.

    Raises InferenceInfeasibleError when no parameter is consistent.
    """
    if problem.subopt:
        return infer_suboptimal(problem)
    enc = build_encoding(problem)
    result = InferenceResult("feasible", census=dict(enc.census), warnings=list(enc.model.warnings),
                             theta_names=list(problem.family.theta_names)
                             + [f"theta_bar[{i}]" for i in sorted(enc.theta_bar)])
    sol, info = _solve(enc, None, "feasibility")
    result.solves.append(info)
    if sol.x is None:
        if sol.status == "iteration-limit":
            result.status = "limit"
            return result
        raise InferenceInfeasibleError("no parameter in the box is consistent with the demonstrations")
    x = sol.x
    if intervals:
        iv = np.sort(theta_intervals(enc, solves=result.solves), axis=1)
        P = enc.theta.size
        result.theta_interval = iv[:P]
        if enc.theta_bar:
            result.theta_bar_interval = iv[P:]
        width = iv[:, 1] - iv[:, 0]
        result.identified = np.abs(width[:P]) <= problem.config.tol_identified
        target = np.where(np.isnan(iv).any(axis=1), x[_theta_vars(enc)[0]], iv.mean(axis=1))
        # the interval midpoint is the estimate when it re-certifies the demos;
        # otherwise fall back to the feasible point closest to it
        mid = _theta_vars(enc)[0]
        x_mid = x.copy()
        x_mid[mid] = target
        _finish(problem, enc, x_mid, result)
        if result.recertified:
            return result
        xp = closest_feasible(enc, target, result.solves)
        if xp is not None:
            x = xp
        result.warnings.append("interval midpoint does not re-certify the demonstrations; "
                               "reporting the closest consistent parameter")
    _finish(problem, enc, x, result)
    return result


def infer_suboptimal(problem: InverseProblem) -> InferenceResult:
    """Minimize the total L1 stationarity error over the remaining KKT conditions."""
    if not problem.subopt:
        problem = InverseProblem(problem.demos, "stationarity_min", problem.config,
                                 problem.cost_unknown, problem.centralized,
                                 "exact_offset" if problem.mode == "exact_offset" else "relaxed_affine")
    enc = build_encoding(problem)
    result = InferenceResult("optimal", census=dict(enc.census), warnings=list(enc.model.warnings),
                             theta_names=list(problem.family.theta_names))
    sol, info = _solve(enc, None, "stationarity_min")
    result.solves.append(info)
    if sol.x is None:
        if sol.status == "iteration-limit":
            result.status = "limit"
            return result
        raise InferenceInfeasibleError("primal and complementarity conditions admit no parameter")
    result.stationarity_error = float(max(sol.objective, 0.0))
    if sol.status != "optimal":
        result.status = "limit"
    _finish(problem, enc, sol.x, result)
    return result


def infer_joint_cost_constraint(problem: InverseProblem, intervals: bool = True) -> InferenceResult:
    """Joint recovery of the constraint parameters and the unknown cost weights."""
    if not problem.cost_unknown:
        problem = InverseProblem(problem.demos, problem.mode, problem.config, True,
                                 problem.centralized, problem.base)
    return infer(problem, intervals)


# ---------------------------------------------------------------------------
# warm assignments (used to check that a known parameter is feasible)


def assignment_from_certificate(enc: KktEncoding, theta, certificate: KktCertificate,
                                theta_bar=None) -> np.ndarray:
    """Variable assignment of the encoding induced by a forward certificate.

    Only defined for exact, non-centralized feasibility encodings.  Useful to
    verify that the generating parameter lies in the encoded feasible set.
    """
    problem = enc.problem
    if not problem.exact or problem.centralized:
        raise StructuralError("assignments are defined for exact per-agent encodings")
    x = np.zeros(enc.model.num_vars)
    theta = np.asarray(theta, float)
    x[enc.theta] = theta
    if theta_bar is not None:
        for i, v in enc.theta_bar.items():
            x[v] = float(np.asarray(theta_bar, float)[i])
    for d, de in enumerate(enc.demos):
        fam = de.family
        g = de.G0 + de.G1 @ theta
        lam = np.zeros(fam.num_scalars)
        for i in range(de.spec.num_agents):
            lam[fam.scalar_owner == i] = certificate.lam[d][i]
        lam = np.maximum(lam, 0.0)
        q = np.zeros(fam.num_scalars)
        for b0, bs in zip(fam.block_start, fam.block_size):
            blk = slice(b0, b0 + bs)
            pick = b0 + (int(np.argmax(lam[blk])) if lam[blk].max() > 0 else int(np.argmin(g[blk])))
            q[pick] = 1.0
        lam = lam * q
        x[de.z] = (g <= 1e-7).astype(float)
        x[de.q] = q
        x[de.qt] = 1.0 - q
        x[de.zh1] = (lam > 0).astype(float)
        x[de.zh2] = (lam <= 0).astype(float)
        x[de.lam] = lam
        x[de.w] = lam
        for i, nu in enumerate(de.nu):
            x[nu] = certificate.nu[d][i]
        if certificate.lam_known and de.lam_known:
            game = Game(de.spec, theta, theta_bar)
            for (kf, s), v in de.lam_known.items():
                owner = game.families[kf + 1].scalar_owner
                i = int(owner[s])
                rank = int(np.sum(owner[:s] == i))
                x[v] = certificate.lam_known[d][i][rank] if len(certificate.lam_known[d]) else 0.0
    return x
