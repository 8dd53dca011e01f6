"""Problem vocabulary shared by every stage: scenarios, trajectories, demos.

The flat trajectory vector is laid out time-major and agent-minor.  At each
time step the states of all agents come first (agent 0, agent 1, ...),
followed by the controls of all agents in the same order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

SCHEMA_VERSION = 1

STATE = "state"
CONTROL = "control"


class DataQualityError(ValueError):
    """Raised when observed data contradicts the method's assumptions."""


class ScenarioError(ValueError):
    """Raised for malformed scenario descriptions."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _freeze(value):
    if isinstance(value, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _thaw(value):
    if isinstance(value, tuple):
        if value and all(isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], str)
                         for v in value):
            return {k: _thaw(v) for k, v in value}
        return [_thaw(v) for v in value]
    return value


def format_float(x: float) -> str:
    """17 significant digits, enough for a bit-exact round trip."""
    x = float(x)
    if not np.isfinite(x):
        raise DataQualityError(f"non-finite value {x!r} cannot be serialized")
    text = format(x, ".17g")
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def dumps(obj: Any, indent: Optional[int] = None) -> str:
    """JSON encoding that writes every float with 17 significant digits."""

    def convert(o):
        if isinstance(o, dict):
            return {str(k): convert(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [convert(v) for v in o]
        if isinstance(o, np.ndarray):
            return [convert(v) for v in o.tolist()]
        if isinstance(o, (np.floating, float)):
            return _Float(float(o))
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    return "".join(_iterencode(convert(obj), indent, 0))


class _Float(float):
    pass


def _iterencode(o, indent, level):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ", " if indent is None else ","
    if isinstance(o, _Float):
        yield format_float(o)
    elif isinstance(o, bool) or o is None:
        yield json.dumps(o)
    elif isinstance(o, (int, str)):
        yield json.dumps(o)
    elif isinstance(o, float):
        yield format_float(o)
    elif isinstance(o, dict):
        if not o:
            yield "{}"
            return
        yield "{"
        for n, (k, v) in enumerate(o.items()):
            yield (sep if n else "") + pad + json.dumps(k) + ": "
            yield from _iterencode(v, indent, level + 1)
        yield end + "}"
    elif isinstance(o, list):
        if not o:
            yield "[]"
            return
        flat = all(not isinstance(v, (list, dict)) for v in o)
        yield "["
        for n, v in enumerate(o):
            if flat:
                yield (", " if n else "")
            else:
                yield (sep if n else "") + pad
            yield from _iterencode(v, indent, level + 1)
        yield ("]" if flat else end + "]")
    else:
        raise TypeError(f"cannot serialize {type(o).__name__}")


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# Scenario description


@dataclass(frozen=True)
class AgentSpec:
    state_dim: int
    control_dim: int
    dynamics: str
    cost: str
    dynamics_params: Tuple = ()
    cost_params: Tuple = ()

    def dyn_params(self) -> Dict[str, Any]:
        return _thaw(self.dynamics_params) if self.dynamics_params else {}

    def cost_options(self) -> Dict[str, Any]:
        return _thaw(self.cost_params) if self.cost_params else {}


@dataclass(frozen=True)
class FamilySpec:
    """A constraint family descriptor (kind, parameter box, options)."""

    kind: str
    theta_lo: Tuple[float, ...] = ()
    theta_hi: Tuple[float, ...] = ()
    options: Tuple = ()
    theta: Optional[Tuple[float, ...]] = None  # frozen value for known constraints

    def opts(self) -> Dict[str, Any]:
        return _thaw(self.options) if self.options else {}

    @classmethod
    def make(cls, kind, theta_bounds=None, theta=None, **options):
        lo, hi = ((), ()) if theta_bounds is None else theta_bounds
        return cls(kind=kind,
                   theta_lo=tuple(float(v) for v in lo),
                   theta_hi=tuple(float(v) for v in hi),
                   options=_freeze(options),
                   theta=None if theta is None else tuple(float(v) for v in theta))

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.theta_lo or self.theta_hi:
            out["theta_bounds"] = [list(self.theta_lo), list(self.theta_hi)]
        if self.theta is not None:
            out["theta"] = list(self.theta)
        out.update(self.opts())
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FamilySpec":
        d = dict(d)
        kind = d.pop("kind")
        bounds = d.pop("theta_bounds", None)
        theta = d.pop("theta", None)
        return cls.make(kind, bounds, theta, **d)


@dataclass(frozen=True)
class ScenarioSpec:
    agents: Tuple[AgentSpec, ...]
    horizon: int
    dt: float
    unknown_family: Optional[FamilySpec]
    origins: Tuple[Tuple[float, ...], ...]
    goals: Tuple[Tuple[float, ...], ...]
    known_constraints: Tuple[FamilySpec, ...] = ()
    init_vel: Optional[Tuple[Tuple[float, ...], ...]] = None
    final_vel: Optional[Tuple[Tuple[float, ...], ...]] = None
    name: str = ""

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def pos_dim(self) -> int:
        return len(self.origins[0])

    @property
    def theta_lo(self) -> np.ndarray:
        return np.array(self.unknown_family.theta_lo if self.unknown_family else ())

    @property
    def theta_hi(self) -> np.ndarray:
        return np.array(self.unknown_family.theta_hi if self.unknown_family else ())

    def layout(self) -> "Layout":
        return Layout.from_spec(self)

    def replace(self, **changes) -> "ScenarioSpec":
        from dataclasses import replace
        return replace(self, **changes)

    # serialization ---------------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        agents = []
        for a in self.agents:
            entry: Dict[str, Any] = {"state_dim": a.state_dim, "control_dim": a.control_dim,
                                     "dynamics": a.dynamics, "cost": a.cost}
            if a.dynamics_params:
                entry["dynamics_params"] = a.dyn_params()
            if a.cost_params:
                entry["cost_params"] = a.cost_options()
            agents.append(entry)
        boundary: Dict[str, Any] = {"origins": [list(o) for o in self.origins],
                                    "goals": [list(g) for g in self.goals]}
        if self.init_vel is not None:
            boundary["init_vel"] = [list(v) for v in self.init_vel]
        if self.final_vel is not None:
            boundary["final_vel"] = [list(v) for v in self.final_vel]
        out = {
            "version": SCHEMA_VERSION,
            "agents": agents,
            "horizon": self.horizon,
            "dt": float(self.dt),
            "known_constraints": [k.to_dict() for k in self.known_constraints],
            "unknown_family": None if self.unknown_family is None else self.unknown_family.to_dict(),
            "boundary": boundary,
        }
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ScenarioSpec":
        if d.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario version {d.get('version')!r}")
        agents = tuple(
            AgentSpec(state_dim=int(a["state_dim"]), control_dim=int(a["control_dim"]),
                      dynamics=a["dynamics"], cost=a["cost"],
                      dynamics_params=_freeze(a.get("dynamics_params", {})),
                      cost_params=_freeze(a.get("cost_params", {})))
            for a in d["agents"])
        b = d["boundary"]
        unk = d.get("unknown_family")

        def vecs(key):
            v = b.get(key)
            return None if v is None else tuple(tuple(float(c) for c in row) for row in v)

        return cls(agents=agents, horizon=int(d["horizon"]), dt=float(d["dt"]),
                   unknown_family=None if unk is None else FamilySpec.from_dict(unk),
                   origins=vecs("origins"), goals=vecs("goals"),
                   known_constraints=tuple(FamilySpec.from_dict(k)
                                           for k in d.get("known_constraints", [])),
                   init_vel=vecs("init_vel"), final_vel=vecs("final_vel"),
                   name=d.get("name", ""))

    def to_json(self) -> str:
        return dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return digest(dumps(self.to_dict()))


def validate_scenario(spec: ScenarioSpec) -> List[str]:
    """Return a list of diagnostics; an empty list means the spec is well formed."""
    from . import dynamics as dyn

    diags: List[str] = []
    if spec.num_agents < 2:
        diags.append("need ≥ 2 agents")
    if spec.horizon < 2:
        diags.append("horizon must be ≥ 2 steps")
    if not (spec.dt > 0):
        diags.append("dt must be > 0")
    if len(spec.origins) != spec.num_agents or len(spec.goals) != spec.num_agents:
        diags.append("boundary origins/goals must list one entry per agent")
    pos_dims = {len(o) for o in spec.origins} | {len(g) for g in spec.goals}
    if len(pos_dims) != 1 or next(iter(pos_dims), 0) not in (2, 3):
        diags.append("all agents must share a position dimension of 2 or 3")
    for i, a in enumerate(spec.agents):
        if a.state_dim <= 0 or a.control_dim <= 0:
            diags.append(f"agent {i}: dims must be positive")
        try:
            model = dyn.make_model(a.dynamics, pos_dim=spec.pos_dim, **a.dyn_params())
        except (KeyError, ValueError) as exc:
            diags.append(f"agent {i}: {exc}")
            continue
        if (model.state_dim, model.control_dim) != (a.state_dim, a.control_dim):
            diags.append(f"agent {i}: dims ({a.state_dim}, {a.control_dim}) do not match "
                         f"dynamics {a.dynamics} ({model.state_dim}, {model.control_dim})")
    fam = spec.unknown_family
    if fam is not None:
        lo, hi = np.asarray(fam.theta_lo, float), np.asarray(fam.theta_hi, float)
        if lo.shape != hi.shape:
            diags.append("theta_bounds lower/upper lengths differ")
        else:
            for k in range(lo.size):
                if not (np.isfinite(lo[k]) and np.isfinite(hi[k])):
                    diags.append(f"theta component {k} has a non-finite bound")
                elif lo[k] > hi[k]:
                    diags.append(f"theta component {k}: lower bound {lo[k]} > upper bound {hi[k]}")
    for key, vel in (("init_vel", spec.init_vel), ("final_vel", spec.final_vel)):
        if vel is not None and len(vel) != spec.num_agents:
            diags.append(f"{key} must list one entry per agent")
    return diags


def check_scenario(spec: ScenarioSpec) -> ScenarioSpec:
    diags = validate_scenario(spec)
    if diags:
        raise ScenarioError(diags)
    return spec


# --------------------------------------------------------------------------
# Flat layout


@dataclass(frozen=True)
class Layout:
    state_dims: Tuple[int, ...]
    control_dims: Tuple[int, ...]
    horizon: int
    pos_offsets: Tuple[int, ...] = ()
    vel_offsets: Tuple[Optional[int], ...] = ()
    pos_dim: int = 2

    @classmethod
    def from_spec(cls, spec: ScenarioSpec) -> "Layout":
        from . import dynamics as dyn
        vel = []
        for a in spec.agents:
            model = dyn.make_model(a.dynamics, pos_dim=spec.pos_dim, **a.dyn_params())
            vel.append(model.velocity_offset)
        return cls(tuple(a.state_dim for a in spec.agents),
                   tuple(a.control_dim for a in spec.agents), spec.horizon,
                   tuple(0 for _ in spec.agents), tuple(vel), spec.pos_dim)

    @property
    def num_agents(self) -> int:
        return len(self.state_dims)

    @property
    def n(self) -> int:
        return sum(self.state_dims)

    @property
    def m(self) -> int:
        return sum(self.control_dims)

    @property
    def stride(self) -> int:
        return self.n + self.m

    @property
    def size(self) -> int:
        return self.stride * self.horizon

    def flat_index(self, agent: int, time: int, kind: str, coord: int) -> int:
        if not 0 <= agent < self.num_agents:
            raise IndexError(f"agent {agent} out of range")
        if not 0 <= time < self.horizon:
            raise IndexError(f"time {time} out of range")
        if kind == STATE:
            dims, base = self.state_dims, 0
        elif kind == CONTROL:
            dims, base = self.control_dims, self.n
        else:
            raise IndexError(f"unknown kind {kind!r}")
        if not 0 <= coord < dims[agent]:
            raise IndexError(f"coord {coord} out of range for agent {agent} {kind}")
        return time * self.stride + base + sum(dims[:agent]) + coord

    def unflatten(self, index: int) -> Tuple[int, int, str, int]:
        if not 0 <= index < self.size:
            raise IndexError(f"flat index {index} out of range")
        time, r = divmod(index, self.stride)
        if r < self.n:
            dims, kind = self.state_dims, STATE
        else:
            dims, kind, r = self.control_dims, CONTROL, r - self.n
        for agent, d in enumerate(dims):
            if r < d:
                return agent, time, kind, r
            r -= d
        raise IndexError(index)  # unreachable

    # vectorized index tables (T, dim) ---------------------------------------
    def state_idx(self, agent: int) -> np.ndarray:
        base = sum(self.state_dims[:agent])
        t = np.arange(self.horizon)[:, None] * self.stride
        return t + base + np.arange(self.state_dims[agent])[None, :]

    def control_idx(self, agent: int) -> np.ndarray:
        base = self.n + sum(self.control_dims[:agent])
        t = np.arange(self.horizon)[:, None] * self.stride
        return t + base + np.arange(self.control_dims[agent])[None, :]

    def pos_idx(self, agent: int) -> np.ndarray:
        return self.state_idx(agent)[:, self.pos_offsets[agent]:self.pos_offsets[agent] + self.pos_dim]

    def vel_idx(self, agent: int) -> np.ndarray:
        off = self.vel_offsets[agent]
        if off is None:
            raise ValueError(f"agent {agent} has no velocity in its state")
        return self.state_idx(agent)[:, off:off + self.pos_dim]

    def agent_idx(self, agent: int) -> np.ndarray:
        """Sorted flat indices of all variables owned by ``agent``."""
        return np.sort(np.concatenate([self.state_idx(agent).ravel(),
                                       self.control_idx(agent).ravel()]))


# --------------------------------------------------------------------------
# Trajectories and demonstrations


@dataclass(frozen=True, eq=False)
class Trajectory:
    data: np.ndarray
    layout: Layout
    scenario_digest: str = ""

    def __post_init__(self):
        arr = np.array(self.data, dtype=float, copy=True).ravel()
        if arr.size != self.layout.size:
            raise ValueError(f"trajectory length {arr.size} != layout size {self.layout.size}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def position(self, agent: int, time: Optional[int] = None) -> np.ndarray:
        idx = self.layout.pos_idx(agent)
        return self.data[idx] if time is None else self.data[idx[time]]

    def velocity(self, agent: int, time: Optional[int] = None) -> np.ndarray:
        idx = self.layout.vel_idx(agent)
        return self.data[idx] if time is None else self.data[idx[time]]

    def states(self, agent: int) -> np.ndarray:
        return self.data[self.layout.state_idx(agent)]

    def controls(self, agent: int) -> np.ndarray:
        return self.data[self.layout.control_idx(agent)]

    def with_data(self, data) -> "Trajectory":
        return Trajectory(data, self.layout, self.scenario_digest)


def assemble(layout: Layout, states: Sequence[np.ndarray], controls: Sequence[np.ndarray]) -> np.ndarray:
    """Pack per-agent (T, n_i) states and (T, m_i) controls into a flat vector."""
    xi = np.zeros(layout.size)
    for i in range(layout.num_agents):
        xi[layout.state_idx(i)] = states[i]
        xi[layout.control_idx(i)] = controls[i]
    return xi


@dataclass(frozen=True, eq=False)
class DemonstrationSet:
    scenario: ScenarioSpec
    trajectories: Tuple[Trajectory, ...]
    noise: Tuple[Optional[float], ...] = ()

    def __post_init__(self):
        if len(self.trajectories) < 1:
            raise ValueError("a demonstration set needs at least one trajectory")
        lay = self.scenario.layout()
        for tr in self.trajectories:
            if tr.layout != lay:
                raise ValueError("all demonstrations must share the scenario layout")

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def to_dict(self) -> Dict[str, Any]:
        out = {"scenario_hash": self.scenario.digest(),
               "scenario": self.scenario.to_dict(),
               "trajectories": [t.data.tolist() for t in self.trajectories]}
        if any(n is not None for n in self.noise):
            out["noise"] = list(self.noise)
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: Dict[str, Any], scenario: Optional[ScenarioSpec] = None) -> "DemonstrationSet":
        if scenario is None:
            if "scenario" not in d:
                raise DataQualityError("demonstration file carries no scenario; pass one explicitly")
            scenario = ScenarioSpec.from_dict(d["scenario"])
        expected = scenario.digest()
        if d.get("scenario_hash") != expected:
            raise DataQualityError(
                f"scenario digest mismatch: file has {d.get('scenario_hash')!r}, expected {expected!r}")
        lay = scenario.layout()
        trajs = tuple(Trajectory(np.array(t, float), lay, expected) for t in d["trajectories"])
        noise = tuple(d.get("noise", [None] * len(trajs)))
        return cls(scenario, trajs, noise)

    @classmethod
    def from_json(cls, text: str, scenario: Optional[ScenarioSpec] = None) -> "DemonstrationSet":
        return cls.from_dict(json.loads(text), scenario)


@dataclass(frozen=True, eq=False)
class KktCertificate:
    """Multipliers witnessing stationarity of each demo under ``theta``.

    ``lam[d][i]`` holds agent i's multipliers for its unknown-family scalars,
    ``lam_known[d][i]`` those for known inequality constraints and ``nu[d][i]``
    the equality multipliers (dynamics rows then boundary rows).
    """

    theta: np.ndarray
    lam: Tuple[Tuple[np.ndarray, ...], ...]
    nu: Tuple[Tuple[np.ndarray, ...], ...]
    lam_known: Tuple[Tuple[np.ndarray, ...], ...] = ()
    residuals: Tuple[Tuple[float, ...], ...] = ()
    cost_theta: Optional[np.ndarray] = None

    def check(self, tol: float = 1e-7) -> None:
        for per_demo in tuple(self.lam) + tuple(self.lam_known):
            for lam in per_demo:
                if lam.size and lam.min() < -tol:
                    raise ValueError(f"negative inequality multiplier {lam.min():.3e}")
        for per_demo in self.residuals:
            if any(r < 0 for r in per_demo):
                raise ValueError("negative residual norm")

    def to_dict(self) -> Dict[str, Any]:
        return {"theta": self.theta.tolist(),
                "lam": [[a.tolist() for a in d] for d in self.lam],
                "lam_known": [[a.tolist() for a in d] for d in self.lam_known],
                "nu": [[a.tolist() for a in d] for d in self.nu],
                "residuals": [list(r) for r in self.residuals],
                "cost_theta": None if self.cost_theta is None else self.cost_theta.tolist()}
