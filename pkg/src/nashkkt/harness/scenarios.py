"""Scenario library: frozen scenario specs with their ground-truth parameters.

Each entry bundles the scenario used to generate demonstrations, the true
parameter vector (known only to tests and the harness), optional extra
demonstration boundaries sharing the same family, and the boundary
conditions used for downstream planning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import AgentSpec, FamilySpec, ScenarioSpec

Boundary = Tuple[tuple, tuple, Optional[tuple], Optional[tuple]]


@dataclass(frozen=True)
class ScenarioEntry:
    name: str
    spec: ScenarioSpec
    theta_star: Tuple[float, ...]
    description: str = ""
    extra_demos: Tuple[Boundary, ...] = ()
    plans: Tuple[Boundary, ...] = ()
    theta_bar_star: Optional[Tuple[float, ...]] = None
    plan_horizon: Optional[int] = None
    plan_dt: Optional[float] = None

    def demo_specs(self) -> List[ScenarioSpec]:
        """One scenario per demonstration (the base spec first)."""
        return [self.spec] + [_with_boundary(self.spec, b) for b in self.extra_demos]

    def plan_spec(self, k: int = 0) -> ScenarioSpec:
        spec = _with_boundary(self.spec, self.plans[k]) if self.plans else self.spec
        changes = {}
        if self.plan_horizon is not None:
            changes["horizon"] = self.plan_horizon
        if self.plan_dt is not None:
            changes["dt"] = self.plan_dt
        return spec.replace(**changes) if changes else spec


def _with_boundary(spec: ScenarioSpec, b: Boundary) -> ScenarioSpec:
    origins, goals, v0, vT = b
    return spec.replace(origins=_tt(origins), goals=_tt(goals),
                        init_vel=None if v0 is None else _tt(v0),
                        final_vel=None if vT is None else _tt(vT))


def _tt(rows) -> tuple:
    return tuple(tuple(float(c) for c in r) for r in rows)


def _agents(n, dyn, cost, d=2, **cost_opts) -> tuple:
    dims = {"single_int": (d, d), "double_int": (2 * d, d), "unicycle_v": (4, 2),
            "quadcopter": (12, 4)}[dyn]
    params = tuple(sorted(cost_opts.items()))
    return tuple(AgentSpec(dims[0], dims[1], dyn, cost, (), params) for _ in range(n))


def _spec(name, agents, T, dt, family, origins, goals, v0=None, vT=None) -> ScenarioSpec:
    return ScenarioSpec(agents=agents, horizon=T, dt=float(dt), unknown_family=family,
                        origins=_tt(origins), goals=_tt(goals),
                        init_vel=None if v0 is None else _tt(v0),
                        final_vel=None if vT is None else _tt(vT), name=name)


# polytope normals and offsets of the planar polytopic demonstration
POLY_A = ((-0.2545, -0.9671), (0.9487, -0.3162), (0.2169, 0.9762), (-0.9285, 0.3714))
POLY_B = (10.0779, 9.4868, 11.6058, 9.4705)
BOX_A = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
         (0.0, 0.0, 1.0), (0.0, 0.0, -1.0))
BOX_B = (-6.0, -6.0, -6.0, -6.0, -4.0, -4.0)


def _di_elliptic() -> ScenarioEntry:
    fam = FamilySpec.make("elliptic", ((0, 0, 1, 0, 0, 1), (100, 10, 1, 100, 10, 1)))
    spec = _spec("di_elliptic", _agents(2, "double_int", "individual_smoothness"), 10, 1.0, fam,
                 [(0, 0), (10, 10)], [(10, 10), (0, 0)])
    return ScenarioEntry("di_elliptic", spec, (49.0, 4.0, 1.0, 49.0, 4.0, 1.0),
                         "two double integrators, elliptic avoidance with unknown shape")


def _di_elliptic_known_shape() -> ScenarioEntry:
    fam = FamilySpec.make("elliptic", ((0, 0), (100, 100)), shape=(4.0, 1.0))
    spec = _spec("di_elliptic_known_shape", _agents(2, "double_int", "individual_smoothness"), 10,
                 1.0, fam, [(0, 0), (10, 10)], [(10, 10), (0, 0)])
    return ScenarioEntry("di_elliptic_known_shape", spec, (49.0, 49.0),
                         "elliptic avoidance with known axis weights (4, 1); offset class")


def _di_polytopic() -> ScenarioEntry:
    fam = FamilySpec.make("polytopic_offset", ((0, 0, 0, 0), (20, 20, 20, 20)), A=POLY_A,
                          sense="ge")
    spec = _spec("di_polytopic", _agents(2, "double_int", "individual_smoothness"), 20, 1.0, fam,
                 [(-2, 0), (9.5, 9.5)], [(9.5, 9.5), (-2, 9.5)])
    return ScenarioEntry("di_polytopic", spec, POLY_B, "planar polytope with known normals",
                         extra_demos=(([(15, 0), (15, 15)], [(15, 15), (15, 0)], None, None),),
                         plans=(([(15, 0), (15, 15)], [(0, 15), (0, 0)], None, None),))


def _box(name, dyn, n_agents) -> ScenarioEntry:
    fam = FamilySpec.make("polytopic_offset", ((-10,) * 6, (0,) * 6), A=BOX_A, sense="le")
    starts = [(0, 0, 0), (10, 10, 10), (0, 10, 0), (10, 0, 10)][:n_agents]
    goals = [(10, 10, 10), (0, 0, 0), (10, 0, 10), (0, 10, 0)][:n_agents]
    spec = _spec(name, _agents(n_agents, dyn, "individual_smoothness", d=3), 10, 1.0, fam,
                 starts, goals)
    extra = ()
    if n_agents == 4:
        # two far-apart head-on pairs: every activated face has a single owner
        extra = (([(-8, 0, 0), (8, 0.5, 0.3), (40, -8, 0), (40.5, 8, 0.2)],
                  [(8, 0, 0), (-8, 0.5, 0.3), (40, 8, 0), (40.5, -8, 0.2)], None, None),)
    return ScenarioEntry(name, spec, BOX_B, f"{n_agents} agents ({dyn}) with a box avoid set",
                         extra_demos=extra,
                         plans=(([(7, -7, -7), (0, 7, 7)], [(-7, 7, 7), (7, -7, -7)], None, None),))


def _quad_sphere() -> ScenarioEntry:
    fam = FamilySpec.make("spherical", ((0, 0, 0), (100, 100, 100)))
    spec = _spec("quad_sphere", _agents(3, "quadcopter", "individual_smoothness", d=3), 20, 1.0,
                 fam, [(0, 0, 0), (20, 20, 20), (0, 20, 0)],
                 [(20, 20, 20), (0, 0, 0), (20, 0, 20)])
    return ScenarioEntry("quad_sphere", spec, (6.0, 8.0, 9.0),
                         "three quadcopters with per-agent spherical radii",
                         plans=(([(0, 0, 0), (10, 10, 10), (0, 10, 0)],
                                 [(10, 10, 20), (0, 0, 0), (20, 0, 20)], None, None),))


def _uni_los() -> ScenarioEntry:
    fam = FamilySpec.make("line_of_sight", ((0, 0, 0, 0, 0, 0), (4, 25, 1, 4, 25, 1)),
                          proximity=True, owners=(1,))
    spec = _spec("uni_los", _agents(2, "unicycle_v", "smoothness_plus_control"), 20, 0.3, fam,
                 [(-3.0, 0.0), (-4.1, 0.0)], [(3.0, 3.0), (1.413, 2.245)],
                 [(0.270, 0.0), (0.438, 0.0)], [(0.855, 0.0), (1.056, 0.576)])
    return ScenarioEntry("uni_los", spec, (1.0, 16.0, 0.1, 1.0, 16.0, 0.1),
                         "two unicycles: the pursuer keeps the leader in a cone within a distance band",
                         plans=(([(0.0, 3.0), (-1.2, 3.0)], [(2.001, 0.013), (0.985, 1.735)],
                                 [(0.293, 0.0), (0.210, 0.0)], [(0.007, -0.565), (-0.492, 0.238)]),))


def _di_proximity() -> ScenarioEntry:
    fam = FamilySpec.make("sphere_proximity", ((0, 0, 0, 0), (4, 25, 4, 25)))
    # under forward Euler the first step is fixed by the start velocity, and pinning
    # (0, 0.1) / (2.35, 0.1) leaves |r_1|^2 > 4 for every control: start velocities stay free
    spec = _spec("di_proximity", _agents(2, "double_int", "smoothness_plus_control", y_weight=5.0),
                 10, 0.5, fam, [(-3.0, 0.0), (-1.95, -0.05)], [(3.0, 3.0), (2.95, 1.05)],
                 None, [(0.0, 0.1), (0.77, 1.77)])
    return ScenarioEntry("di_proximity", spec, (1.0, 4.0, 1.0, 4.0),
                         "distance band 1 <= |r|^2 <= 4 with velocity pins",
                         plans=(([(-3.0, 0.0), (-1.95, -0.55)], [(1.0, 2.0), (1.129, 0.05)],
                                 None, [(2.356, 0.1), (0.685, 1.349)]),))


def _di_velocity_sphere() -> ScenarioEntry:
    fam = FamilySpec.make("velocity_sphere", ((0, 0, 0, 0, 0, 0), (10, 2, 4, 10, 2, 4)))
    spec = _spec("di_velocity_sphere", _agents(2, "double_int", "smoothness_plus_control"), 20, 0.5,
                 fam, [(-3.0, 0.0), (3.0, 3.0)], [(3.0, 3.0), (-3.0, 0.0)],
                 [(0.715, 0.145), (-0.715, -0.145)], [(0.546, 0.483), (-0.546, -0.483)])
    return ScenarioEntry("di_velocity_sphere", spec, (2.0, 1.0, 1.0, 2.0, 1.0, 1.0),
                         "velocity-dependent sphere, lifted parameters (theta1, theta6, theta6^2)",
                         plans=(([(2.0, 0.0), (-3.0, 3.0)], [(-3.0, 3.0), (3.0, 0.0)],
                                 [(-0.622, 0.179), (0.727, -0.179)], [(-0.439, 0.439), (0.544, -0.439)]),
                                ([(2.0, 0.0), (2.0, 3.0)], [(-3.0, 3.0), (-3.0, 6.0)],
                                 [(-0.526, 0.316), (-0.526, 0.316)], [(-0.526, 0.316), (-0.526, 0.316)])))


def _si_nonlinear(weighted: bool) -> ScenarioEntry:
    fam = FamilySpec.make("custom_offset", ((0, 0), (10, 10)))
    if weighted:
        agents = _agents(2, "single_int", "weighted_shared", theta_bar=0.73)
        name = "si_nonlinear_cost"
    else:
        agents = _agents(2, "single_int", "smoothness_plus_control")
        name = "si_nonlinear"
    spec = _spec(name, agents, 20, 0.5, fam, [(2.0, 0.0), (-2.0, -0.5)], [(-2.0, 0.0), (2.0, -0.5)])
    return ScenarioEntry(name, spec, (2.0, 2.0),
                         "quartic avoid set with unknown offset" +
                         (" and unknown cost weight" if weighted else ""),
                         plans=(([(3.0, -2.0), (-3.0, 2.0)], [(-3.0, 2.0), (3.0, -2.0)], None, None),),
                         theta_bar_star=(0.73, 0.73) if weighted else None)


def _si_two_radius() -> ScenarioEntry:
    fam = FamilySpec.make("spherical", ((0, 0), (10, 10)))
    spec = _spec("si_two_radius", _agents(2, "single_int", "individual_smoothness"), 7, 1.0, fam,
                 [(0.0, 3.0), (0.0, -3.0)], [(0.0, -3.0), (0.0, 3.0)])
    return ScenarioEntry("si_two_radius", spec, (1.0, 4.0),
                         "head-on pair with radii 1 and 2: the smaller radius is never active")


def _si_two_radius_centralized() -> ScenarioEntry:
    fam = FamilySpec.make("spherical", ((0, 0), (10, 10)))
    spec = _spec("si_two_radius_sqrt2", _agents(2, "single_int", "individual_smoothness"), 7, 1.0,
                 fam, [(0.0, 3.0), (0.0, -3.0)], [(0.0, -3.0), (0.0, 3.0)])
    return ScenarioEntry("si_two_radius_sqrt2", spec, (1.0, 2.0),
                         "head-on pair with radii 1 and sqrt(2)")


def _di_mppi() -> ScenarioEntry:
    fam = FamilySpec.make("spherical", ((0, 0), (100, 100)))
    spec = _spec("di_mppi", _agents(2, "double_int", "individual_smoothness"), 10, 1.0, fam,
                 [(10.0, 0.0), (0.0, 10.0)], [(0.0, 10.0), (10.0, 0.0)])
    return ScenarioEntry("di_mppi", spec, (25.0, 25.0), "radius-5 crossing used to guide sampling",
                         plans=(([(0.0, 5.0), (10.0, 5.0)], [(10.0, 5.0), (0.0, 5.0)], None, None),),
                         plan_horizon=20, plan_dt=0.1)


def _di_baseline() -> ScenarioEntry:
    fam = FamilySpec.make("spherical", ((0, 0), (100, 100)))
    spec = _spec("di_baseline", _agents(2, "double_int", "individual_smoothness"), 10, 1.0, fam,
                 [(0.0, 0.0), (10.0, 10.0)], [(10.0, 10.0), (0.0, 0.0)])
    return ScenarioEntry("di_baseline", spec, (49.0, 49.0),
                         "radius-7 swap used to compare against log-barrier cost inference",
                         plans=(([(0.0, 5.0), (10.0, 5.0)], [(10.0, 5.0), (0.0, 5.0)], None, None),))


def scaling_entry(n_agents: int, theta: float = 9.0, radius: float = 10.0, T: int = 10) -> ScenarioEntry:
    """Antipodal swap on a circle: every agent crosses the centre."""
    ang = 2 * np.pi * np.arange(n_agents) / n_agents + 0.1
    starts = [(radius * np.cos(a), radius * np.sin(a)) for a in ang]
    goals = [(-x, -y) for x, y in starts]
    fam = FamilySpec.make("spherical", ((0,) * n_agents, (20,) * n_agents))
    name = f"di_scaling_{n_agents}"
    spec = _spec(name, _agents(n_agents, "double_int", "individual_smoothness"), T, 1.0, fam,
                 starts, goals)
    return ScenarioEntry(name, spec, (float(theta),) * n_agents,
                         f"{n_agents} double integrators swapping through the centre")


_BUILDERS: Dict[str, Callable[[], ScenarioEntry]] = {
    "di_elliptic": _di_elliptic,
    "di_elliptic_known_shape": _di_elliptic_known_shape,
    "di_polytopic": _di_polytopic,
    "di_box": lambda: _box("di_box", "double_int", 4),
    "di_box_2agent": lambda: _box("di_box_2agent", "double_int", 2),
    "quad_box": lambda: _box("quad_box", "quadcopter", 4),
    "quad_sphere": _quad_sphere,
    "uni_los": _uni_los,
    "di_proximity": _di_proximity,
    "di_velocity_sphere": _di_velocity_sphere,
    "si_nonlinear": lambda: _si_nonlinear(False),
    "si_nonlinear_cost": lambda: _si_nonlinear(True),
    "si_two_radius": _si_two_radius,
    "si_two_radius_sqrt2": _si_two_radius_centralized,
    "di_mppi": _di_mppi,
    "di_baseline": _di_baseline,
    "di_scaling_2": lambda: scaling_entry(2),
    "di_scaling_4": lambda: scaling_entry(4),
    "di_scaling_6": lambda: scaling_entry(6),
}


def list_scenarios() -> List[str]:
    return sorted(_BUILDERS)


def scenario_entry(name: str) -> ScenarioEntry:
    if name not in _BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(list_scenarios())}")
    return _BUILDERS[name]()


def scenario_library(name: str) -> ScenarioSpec:
    """The frozen scenario spec registered under ``name``."""
    return scenario_entry(name).spec
