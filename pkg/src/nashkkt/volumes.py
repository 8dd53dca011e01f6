"""Certified hypercubes of guaranteed-safe / guaranteed-unsafe trajectories and
of rejected parameters.

Trajectory volumes answer: how far (in the infinity norm) can a query
trajectory move before some demo-consistent parameter makes it unsafe (safe
variant) or safe (unsafe variant)?

* polytopic offsets (linear in the trajectory) are handled by an exact MILP
  over (shift, theta, KKT rows of the demonstrations, block selectors);
* other offset families use a per-scalar decomposition: the theta term ranges
  exactly over the projection of the feasible set (each row of G1 is a signed
  unit vector, so the range is a theta interval) and the trajectory term is
  maximized in closed form over the box; the radius follows by bisection;
* affine families use interval arithmetic over the theta hull, which only
  under-estimates the radius.

Every returned radius is conservative: the cube it certifies never contains
a trajectory of the opposite label for any parameter consistent with the
demonstrations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constraints import ConstraintFamily, make_family
from .core import ScenarioSpec, digest
from .inverse import (InferenceInfeasibleError, InverseProblem, KktEncoding, closest_feasible,
                      build_encoding, theta_intervals)
from .milp import MilpModel, solve

SAFE, UNSAFE, REJECTED, ZERO = "guaranteed_safe", "guaranteed_unsafe", "rejected_params", "zero"
UNKNOWN = "unknown"


@dataclass
class SafeVolume:
    space: str                       # trajectory | parameter
    center: np.ndarray
    radius: float
    label: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.center = np.asarray(self.center, float)
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValueError("volume radius must be finite and nonnegative")
        if (self.radius == 0) != (self.label == ZERO):
            raise ValueError("radius is zero exactly when the label is 'zero'")

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, float)
        return x.shape == self.center.shape and float(np.max(np.abs(x - self.center))) <= self.radius + tol

    def sample(self, n: int, rng) -> np.ndarray:
        return self.center + rng.uniform(-self.radius, self.radius, size=(n, self.center.size))

    def to_dict(self) -> dict:
        return {"space": self.space, "center": self.center.tolist(), "radius": self.radius,
                "label": self.label, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "SafeVolume":
        return cls(d["space"], np.asarray(d["center"], float), float(d["radius"]), d["label"],
                   dict(d.get("provenance", {})))


@dataclass
class VolumeAtlas:
    """Union of certified volumes for one demonstration set."""

    demo_hash: str
    volumes: List[SafeVolume] = field(default_factory=list)
    check: Optional[Callable[[SafeVolume], None]] = None

    def add(self, vol: SafeVolume) -> None:
        if self.check is not None and vol.label in (SAFE, UNSAFE):
            self.check(vol)
        self.volumes.append(vol)

    def membership(self, x) -> str:
        x = np.asarray(x, float)
        if any(v.label == SAFE and v.contains(x) for v in self.volumes):
            return SAFE
        if any(v.label == UNSAFE and v.contains(x) for v in self.volumes):
            return UNSAFE
        return UNKNOWN

    def covered(self, x) -> bool:
        return any(v.label in (SAFE, UNSAFE, REJECTED) and v.contains(x) for v in self.volumes)

    def of_label(self, label: str) -> List[SafeVolume]:
        return [v for v in self.volumes if v.label == label]

    def to_dict(self) -> dict:
        return {"demo_hash": self.demo_hash, "volumes": [v.to_dict() for v in self.volumes]}

    @classmethod
    def from_dict(cls, d: dict) -> "VolumeAtlas":
        return cls(d["demo_hash"], [SafeVolume.from_dict(v) for v in d["volumes"]])


def membership_query(atlas: VolumeAtlas, xi) -> str:
    """guaranteed_safe | guaranteed_unsafe | unknown (closed cubes, <= test)."""
    return atlas.membership(xi)


def demo_hash(problem: InverseProblem) -> str:
    return digest("|".join(ds.to_json() for ds in problem.demos))


# ---------------------------------------------------------------------------
# interval arithmetic


class Interval:
    """Elementwise closed intervals [lo, hi] with exact +, -, * and squares."""

    __array_priority__ = 1000

    def __init__(self, lo, hi=None):
        self.lo = np.asarray(lo, float)
        self.hi = self.lo if hi is None else np.asarray(hi, float)

    @staticmethod
    def _wrap(v):
        return v if isinstance(v, Interval) else Interval(v)

    def __add__(self, o):
        o = self._wrap(o)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, o):
        return self + (-self._wrap(o))

    def __rsub__(self, o):
        return self._wrap(o) - self

    def __mul__(self, o):
        o = self._wrap(o)
        c = np.stack([self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi])
        return Interval(c.min(0), c.max(0))

    __rmul__ = __mul__

    def sq(self):
        lo2, hi2 = self.lo ** 2, self.hi ** 2
        top = np.maximum(lo2, hi2)
        bottom = np.where((self.lo <= 0) & (self.hi >= 0), 0.0, np.minimum(lo2, hi2))
        return Interval(bottom, top)

    def __getitem__(self, k):
        return Interval(self.lo[k], self.hi[k])


def _poly_range(coefs, lo, hi):
    """Exact range of the 1-D polynomial sum_k coefs[k] x^k on [lo, hi] (vectorized over x)."""
    c = np.asarray(coefs, float)
    deriv = np.polynomial.polynomial.polyder(c)
    crit = np.polynomial.polynomial.polyroots(deriv) if deriv.size > 1 else np.zeros(0)
    crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12])
    pts = [lo, hi] + [np.clip(np.full_like(lo, r), lo, hi) for r in crit]
    vals = np.stack([np.polynomial.polynomial.polyval(p, c) for p in pts])
    return vals.min(0), vals.max(0)


# quartic avoid-set polynomial per axis: q(r) = fx(rx) + fy(ry)
_QUARTIC_X = (0.0, 15.0, -15.0, 0.0, 2.0)
_QUARTIC_Y = (0.0, 15.0, 15.0, 0.0, 2.0)


def scalar_bounds(fam: ConstraintFamily, xi_q, eps: float, th_lo, th_hi):
    """Lower and upper bounds of every scalar g_s over the cube B_eps(xi_q) x theta-box.

    For offset families the bounds are exact per scalar (the trajectory and
    parameter terms separate); for affine families they come from interval
    arithmetic and are conservative.
    """
    X = np.asarray(xi_q, float)[fam.unit_local]
    L = Interval(X - eps, X + eps)
    th_lo = np.asarray(th_lo, float)
    th_hi = np.asarray(th_hi, float)
    P = len(fam.local_params)
    unit_theta = fam.scalar_theta[::fam.n_unit]                 # (U, P)
    T = Interval(th_lo[unit_theta], th_hi[unit_theta])
    d = fam.d
    kind = fam.kind

    def col(k):
        return L[:, k]

    def rel(k):
        return col(d + k) - col(k)

    if kind in ("spherical", "elliptic", "sphere_proximity", "polytopic_offset", "polytopic_affine",
                "velocity_sphere"):
        r = [rel(k) for k in range(d)]
    if kind == "spherical":
        sq = _sum([rk.sq() for rk in r])
        outs = [-sq + T[:, 0]]
    elif kind == "elliptic":
        if fam.shape is not None:
            outs = [-_sum([w * rk.sq() for w, rk in zip(fam.shape, r)]) + T[:, 0]]
        else:
            outs = [T[:, 0] - _sum([T[:, 1 + k] * r[k].sq() for k in range(d)])]
    elif kind == "sphere_proximity":
        sq = _sum([rk.sq() for rk in r])
        outs = [-sq + T[:, 0], sq - T[:, 1]]
    elif kind == "polytopic_offset":
        s = 1.0 if fam.sense == "ge" else -1.0
        outs = []
        for b in range(fam.A.shape[0]):
            proj = _sum([fam.A[b, k] * r[k] for k in range(d)])
            outs.append(s * (T[:, b] - proj))
    elif kind == "polytopic_affine":
        s = 1.0 if fam.sense == "ge" else -1.0
        outs = []
        for b in range(fam.nc):
            proj = _sum([T[:, b * d + k] * r[k] for k in range(d)])
            outs.append(s * (T[:, fam.nc * d + b] - proj))
    elif kind == "velocity_sphere":
        rv = [col(3 * d + k) - col(2 * d + k) for k in range(d)]
        sq = _sum([rk.sq() for rk in r])
        cross = _sum([a * b for a, b in zip(r, rv)])
        vsq = _sum([v.sq() for v in rv])
        outs = [-sq - 2.0 * (T[:, 1] * cross) - T[:, 2] * vsq + T[:, 0]]
    elif kind == "line_of_sight":
        rx, ry = col(2) - col(0), col(3) - col(1)
        vx, vy = col(4), col(5)
        cross = rx * vy - ry * vx
        along = rx * vx + ry * vy
        t7 = T[:, P - 1]
        outs = []
        if fam.proximity:
            sq = rx.sq() + ry.sq()
            outs += [-sq + T[:, 0], sq - T[:, 1]]
        outs += [-cross - along * t7, cross - along * t7]
    elif kind == "custom_offset":
        rx, ry = col(2) - col(0), col(3) - col(1)
        ax = _poly_range(_QUARTIC_X, rx.lo, rx.hi)
        ay = _poly_range(_QUARTIC_Y, ry.lo, ry.hi)
        q = Interval(ax[0] + ay[0], ax[1] + ay[1])
        outs = [T[:, 0] - q]
    else:
        raise NotImplementedError(f"no volume bounds for family {kind!r}")
    lo = np.stack([o.lo for o in outs], 1).reshape(-1)
    hi = np.stack([o.hi for o in outs], 1).reshape(-1)
    return lo, hi


def _sum(items):
    out = items[0]
    for it in items[1:]:
        out = out + it
    return out


# ---------------------------------------------------------------------------
# trajectory volumes


@dataclass
class VolumeContext:
    """Per-problem data shared by many queries: the encoding and the theta hull."""

    problem: InverseProblem
    encoding: KktEncoding
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    solves: List[dict] = field(default_factory=list)

    @classmethod
    def build(cls, problem: InverseProblem, intervals: Optional[np.ndarray] = None) -> "VolumeContext":
        enc = build_encoding(problem)
        solves: List[dict] = []
        if intervals is None:
            intervals = theta_intervals(enc, range(enc.theta.size), solves)
        iv = np.asarray(intervals, float)[:enc.theta.size]
        if np.isnan(iv).any():
            raise InferenceInfeasibleError("no parameter is consistent with the demonstrations")
        lo = np.minimum(iv[:, 0], iv[:, 1])
        hi = np.maximum(iv[:, 0], iv[:, 1])
        return cls(problem, enc, lo, hi, solves)

    def reference_theta(self) -> np.ndarray:
        """A demo-consistent parameter, the one closest (L1) to the hull midpoint."""
        mid = 0.5 * (self.theta_lo + self.theta_hi)
        target = np.concatenate([mid, np.ones(len(self.encoding.theta_bar))])
        x = closest_feasible(self.encoding, target, self.solves)
        if x is None:
            raise InferenceInfeasibleError("no parameter is consistent with the demonstrations")
        return x[self.encoding.theta]


def _diameter(spec: ScenarioSpec, xi_q) -> float:
    lay = spec.layout()
    pos = np.concatenate([np.asarray(xi_q, float)[lay.pos_idx(i)].ravel()
                          for i in range(spec.num_agents)])
    span = float(pos.max() - pos.min()) if pos.size else 0.0
    return max(2.0 * span, 1.0)


def _exact_for(fam: ConstraintFamily) -> bool:
    return bool(fam.offset) and all(g == 1 for g in fam.group_sizes)


def _bisect(pred, hi: float, tol: float) -> Tuple[float, bool]:
    """Largest eps in [0, hi] with pred(eps) true (pred monotone decreasing); lower bracket."""
    if not pred(0.0):
        return 0.0, False
    if pred(hi):
        return hi, True
    a, b = 0.0, hi
    while b - a > tol * max(1.0, b):
        m = 0.5 * (a + b)
        if pred(m):
            a = m
        else:
            b = m
    return a, False


def _unsafe_possible(fam, xi_q, eps, ctx, margin):
    """Can some block be violated inside the cube for some admissible theta?"""
    _, hi = scalar_bounds(fam, xi_q, eps, ctx.theta_lo, ctx.theta_hi)
    ok = hi > margin if margin <= 0 else hi >= margin
    return bool(np.any(np.logical_and.reduceat(ok, fam.block_start)))


def _safe_impossible(fam, xi_q, eps, ctx, margin):
    """Is some block violated everywhere in the cube for every admissible theta?"""
    lo, _ = scalar_bounds(fam, xi_q, eps, ctx.theta_lo, ctx.theta_hi)
    bad = lo > max(margin, 0.0)
    return bool(np.any(np.logical_and.reduceat(bad, fam.block_start)))


def _polytopic_milp(ctx: VolumeContext, fam: ConstraintFamily, xi_q, cap: float, margin: float,
                    M: float):
    """Exact MILP for linear offsets: min eps s.t. every scalar of some block reaches ``margin``."""
    enc = ctx.encoding
    m = enc.model.copy()
    G0, G1 = fam.decomposition(xi_q)
    dG0 = fam.terms(xi_q)[2]
    loc = np.unique(fam.scalar_local)
    pos = {int(c): k for k, c in enumerate(loc)}
    eps = m.add_var("eps", 0.0, cap)
    delta = m.add_vars(loc.size, "delta", -cap, cap)
    for v in delta:
        m.add_row([v, eps], [1.0, -1.0], "<", 0.0)
        m.add_row([v, eps], [1.0, 1.0], ">", 0.0)
    y = m.add_vars(fam.num_blocks, "viol", binary=True)
    for b, (b0, bs) in enumerate(zip(fam.block_start, fam.block_size)):
        for s in range(b0, b0 + bs):
            nzt = np.flatnonzero(G1[s])
            idx = np.concatenate([[delta[pos[int(c)]] for c in fam.scalar_local[s]], enc.theta[nzt],
                                  [y[b]]]).astype(int)
            coef = np.concatenate([dG0[s], G1[s, nzt], [-M]])
            m.add_row(idx, coef, ">", margin - G0[s] - M)
    m.add_row(y, np.ones(y.size), ">", 1.0)
    m.set_objective([eps], [1.0])
    sol = solve(m, ctx.problem.config.milp)
    info = sol.stats()
    if sol.x is None:
        return None, info
    return float(sol.x[eps]), info


def extract_trajectory_volume(problem_or_ctx, xi_q, spec: Optional[ScenarioSpec] = None,
                              variant: str = "safe", margin: float = 0.0,
                              tol: float = 1e-9, query_id: str = "") -> SafeVolume:
    """Certified cube around ``xi_q`` (safe or unsafe variant).

    Parameters
    ----------
    problem_or_ctx : InverseProblem or VolumeContext
    xi_q : array
        Query trajectory (flat layout of ``spec``).
    spec : ScenarioSpec, optional
        Scenario the query lives in (defaults to the first demo's); it must
        share the unknown family with the demonstrations.
    variant : {"safe", "unsafe"}
    margin : float
        Violation threshold.  With the default 0 a block counts as violated
        once all its scalars reach 0 (closed test), which keeps the closed
        cube conservative.  A positive margin such as ``EPS_STRICT`` ignores
        violations smaller than the margin and is not conservative.
    tol : float
        Relative bisection tolerance; the lower bracket is returned.

    Returns
    -------
    SafeVolume
        Label ``zero`` when no positive radius can be certified.
    """
    ctx = problem_or_ctx if isinstance(problem_or_ctx, VolumeContext) else \
        VolumeContext.build(problem_or_ctx)
    problem = ctx.problem
    spec = spec or problem.demos[0].scenario
    xi_q = np.asarray(xi_q, float)
    if xi_q.size != spec.layout().size:
        raise ValueError(f"query has {xi_q.size} entries, scenario layout needs {spec.layout().size}")
    fam = make_family(spec, problem.demos[0].scenario.unknown_family)
    cap = _diameter(spec, xi_q)
    prov = {"query": query_id, "variant": variant, "family": fam.kind}
    if variant == "safe":
        if fam.kind == "polytopic_offset":
            eps, info = _polytopic_milp(ctx, fam, xi_q, cap, margin, problem.config.M)
            prov["milp"] = info
            prov["method"] = "milp"
            flagged = eps is None
            eps = cap if eps is None else max(eps, 0.0)
            # the optimum itself is unsafe for some theta: shrink to the open side
            eps = max(eps - tol * max(1.0, eps), 0.0) if not flagged else eps
        else:
            eps, flagged = _bisect(lambda e: not _unsafe_possible(fam, xi_q, e, ctx, margin), cap, tol)
            prov["method"] = "exact_decomposition" if _exact_for(fam) else "interval_arithmetic"
        label = SAFE
    elif variant == "unsafe":
        eps, flagged = _bisect(lambda e: _safe_impossible(fam, xi_q, e, ctx, margin), cap, tol)
        prov["method"] = "per_block_bound"
        label = UNSAFE
    else:
        raise ValueError("variant must be 'safe' or 'unsafe'")
    prov["clamped"] = bool(flagged)
    if eps <= 0.0:
        return SafeVolume("trajectory", xi_q, 0.0, ZERO, prov)
    return SafeVolume("trajectory", xi_q, float(eps), label, prov)


# ---------------------------------------------------------------------------
# parameter volumes


def extract_parameter_volume(problem_or_ctx, theta_q, query_id: str = "") -> SafeVolume:
    """Infinity-norm distance from ``theta_q`` to the demo-consistent set.

    A positive radius certifies that the open cube of that radius around
    ``theta_q`` holds no parameter consistent with the demonstrations.
    """
    ctx = problem_or_ctx if isinstance(problem_or_ctx, VolumeContext) else \
        VolumeContext(problem_or_ctx, build_encoding(problem_or_ctx), None, None)
    enc = ctx.encoding
    theta_q = np.asarray(theta_q, float)
    m = enc.model.copy()
    fam = ctx.problem.family
    span = float(np.max(fam.theta_hi - fam.theta_lo)) if np.all(np.isfinite(fam.theta_hi - fam.theta_lo)) \
        else 1e6
    t = m.add_var("dist", 0.0, np.inf)
    for k, v in enumerate(enc.theta):
        m.add_row([t, v], [1.0, -1.0], ">", -theta_q[k])
        m.add_row([t, v], [1.0, 1.0], ">", theta_q[k])
    m.set_objective([t], [1.0])
    sol = solve(m, ctx.problem.config.milp)
    prov = {"query": query_id, "milp": sol.stats()}
    if sol.x is None:
        prov["clamped"] = True
        return SafeVolume("parameter", theta_q, span, REJECTED, prov)
    r = float(sol.x[t])
    if r <= 1e-9:
        return SafeVolume("parameter", theta_q, 0.0, ZERO, prov)
    # the cube is certified open; report a slightly smaller closed one
    return SafeVolume("parameter", theta_q, r * (1 - 1e-9) - 1e-12, REJECTED, prov)


def theta_feasible(problem_or_ctx, theta) -> bool:
    """Is ``theta`` consistent with the demonstrations (pinned feasibility MILP)?"""
    enc = problem_or_ctx.encoding if isinstance(problem_or_ctx, VolumeContext) else \
        build_encoding(problem_or_ctx)
    m = enc.model.copy()
    for k, v in enumerate(enc.theta):
        m.set_bounds(int(v), float(theta[k]), float(theta[k]))
    m.set_objective([], [])
    sol = solve(m, enc.problem.config.milp)
    return sol.x is not None


def grid_certify(problem_or_ctx, xi, spec: Optional[ScenarioSpec] = None, rejected=(),
                 points_per_axis: int = 9, tol: float = 1e-8) -> bool:
    """Grid realization of the safe set rebuilt from rejected parameter cubes.

    ``xi`` is certified when g(xi, theta) <= tol for every theta on a regular
    grid over the parameter box that lies outside all rejected cubes.  This
    only approximates the intersection over the continuum.
    """
    ctx = problem_or_ctx if isinstance(problem_or_ctx, VolumeContext) else None
    problem = ctx.problem if ctx else problem_or_ctx
    spec = spec or problem.demos[0].scenario
    fam = make_family(spec, problem.demos[0].scenario.unknown_family)
    lo, hi = fam.theta_lo, fam.theta_hi
    axes = [np.linspace(a, b, points_per_axis) if b > a else np.array([a]) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, lo.size)
    keep = np.ones(len(grid), bool)
    for v in rejected:
        keep &= np.max(np.abs(grid - v.center), axis=1) >= v.radius
    grid = grid[keep]
    if not len(grid):
        return True
    G0, G1 = fam.decomposition(np.asarray(xi, float))
    g = G0[:, None] + G1 @ grid.T
    bv = np.minimum.reduceat(g, fam.block_start, axis=0)
    return bool(np.all(bv <= tol))


# ---------------------------------------------------------------------------
# query scheduling


def query_scheduler(problem: InverseProblem, budget: int, strategy: str = "jitter", seed: int = 0,
                    variants: Sequence[str] = ("safe",), scale: float = 0.5,
                    ctx: Optional[VolumeContext] = None, spec: Optional[ScenarioSpec] = None,
                    seeds_xi: Optional[Sequence[np.ndarray]] = None,
                    check: Optional[Callable[[SafeVolume], None]] = None) -> VolumeAtlas:
    """Emit ``budget`` trajectory queries and collect their certified volumes.

    Strategies: ``jitter`` (the demos first, then Gaussian perturbations of
    them), ``grid`` (one agent's path shifted over a position grid) and
    ``frontier`` (centres stepped just beyond existing volume faces).
    Queries already covered by the atlas are skipped.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if strategy not in ("jitter", "grid", "frontier"):
        raise ValueError(f"unknown strategy {strategy!r}; available: jitter, grid, frontier")
    ctx = ctx or VolumeContext.build(problem)
    spec = spec or problem.demos[0].scenario
    rng = np.random.default_rng(seed)
    base = list(seeds_xi) if seeds_xi is not None else [xi for sp, xi in problem.items() if sp == spec]
    if not base:
        base = [next(problem.items())[1]]
    atlas = VolumeAtlas(demo_hash(problem), check=check)
    lay = spec.layout()
    d = spec.pos_dim
    issued = 0
    k = 0
    grid_offsets = None
    if strategy == "grid":
        side = max(2, int(np.ceil(budget ** (1.0 / d))))
        ax = np.linspace(-scale * 4, scale * 4, side)
        grid_offsets = np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)
    attempts = 0
    while issued < budget and attempts < 50 * budget:
        attempts += 1
        if strategy == "jitter" or (strategy == "frontier" and not atlas.volumes):
            xi = base[k % len(base)].copy()
            if k >= len(base):
                xi = xi + scale * rng.normal(size=xi.size)
        elif strategy == "grid":
            xi = base[0].copy()
            off = grid_offsets[k % len(grid_offsets)]
            agent = (k // len(grid_offsets)) % spec.num_agents
            idx = lay.pos_idx(agent)
            xi[idx] = xi[idx] + off
        else:
            v = atlas.volumes[int(rng.integers(len(atlas.volumes)))]
            step = np.zeros(v.center.size)
            j = int(rng.integers(v.center.size))
            step[j] = (v.radius + scale * 0.1) * (1 if rng.random() < 0.5 else -1)
            xi = v.center + step
        k += 1
        if atlas.covered(xi):
            continue
        for var in variants:
            vol = extract_trajectory_volume(ctx, xi, spec, var, query_id=f"{strategy}:{issued}")
            if vol.label != ZERO:
                atlas.add(vol)
        issued += 1
    return atlas


def consistency_check(ctx: VolumeContext, spec: Optional[ScenarioSpec] = None, theta=None,
                      samples: int = 64, seed: int = 0) -> Callable[[SafeVolume], None]:
    """Insertion check: sampled points of a new volume must carry its label under a
    demo-consistent parameter (the one closest to the interval midpoint unless
    ``theta`` is given)."""
    spec = spec or ctx.problem.demos[0].scenario
    fam = make_family(spec, ctx.problem.demos[0].scenario.unknown_family)
    th = ctx.reference_theta() if theta is None else np.asarray(theta, float)
    rng = np.random.default_rng(seed)

    def check(vol: SafeVolume) -> None:
        pts = vol.sample(samples, rng)
        for x in pts:
            bv = fam.block_values(fam.evaluate(th, x, check=False))
            if vol.label == SAFE and bv.max() > 1e-9:
                raise AssertionError("safe volume contains a sample violating a consistent parameter")
            if vol.label == UNSAFE and bv.max() <= 0:
                raise AssertionError("unsafe volume contains a sample safe under a consistent parameter")

    return check
