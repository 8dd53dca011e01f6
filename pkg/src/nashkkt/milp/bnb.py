"""Best-bound branch and bound over LP relaxations, plus the HiGHS dispatch."""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import MilpModel
from .simplex import solve_lp


@dataclass
class MilpConfig:
    time_limit: float = 120.0
    node_limit: int = 200000
    tol_int: float = 1e-6
    tol_feas: float = 1e-7
    backend: str = "auto"          # auto | bnb | highs
    lp_backend: str = "simplex"    # simplex | highs (LP solver inside bnb)
    polish: bool = True
    auto_max_binaries: int = 24
    auto_max_vars: int = 200


@dataclass
class MilpSolution:
    status: str                    # optimal | infeasible | iteration-limit
    x: Optional[np.ndarray]
    objective: float
    nodes: int = 0
    wall_time: float = 0.0
    backend: str = ""
    max_violation: float = 0.0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "optimal" or (self.status == "iteration-limit" and self.x is not None)

    def stats(self) -> dict:
        return {"status": self.status, "objective": self.objective, "nodes": self.nodes,
                "wall_time": self.wall_time, "backend": self.backend,
                "max_violation": self.max_violation}


def _lp(c, A, senses, rhs, lo, hi, backend):
    if backend == "simplex":
        r = solve_lp(c, A, senses, rhs, lo, hi)
        return r.status, r.x, r.objective
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, s, b in zip(A, senses, rhs):
        if s == "<":
            A_ub.append(row); b_ub.append(b)
        elif s == ">":
            A_ub.append(-row); b_ub.append(-b)
        else:
            A_eq.append(row); b_eq.append(b)
    n = c.size
    res = linprog(c, A_ub=np.array(A_ub).reshape(-1, n) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq).reshape(-1, n) if A_eq else None, b_eq=b_eq or None,
                  bounds=np.column_stack([lo, hi]), method="highs")
    if res.status == 0:
        return "optimal", res.x, float(res.fun)
    if res.status == 2:
        return "infeasible", None, np.nan
    if res.status == 3:
        return "unbounded", None, np.nan
    return "iteration-limit", None, np.nan


def branch_and_bound(model: MilpModel, config: MilpConfig) -> MilpSolution:
    """Exact best-bound branch and bound.

    Branches on the most fractional binary (lowest index on ties); open nodes
    are ordered by LP bound, then depth (deeper first), then creation order,
    so identical inputs always explore identical trees.
    """
    t0 = time.perf_counter()
    c = model.objective_vector()
    A = model.matrix()[0].toarray()
    senses = [r.sense for r in model.rows]
    rhs = np.array([r.rhs for r in model.rows], float)
    lo0, hi0 = model.bounds(clamp=True)
    bins = model.binaries
    counter = itertools.count()
    nodes = 0
    best_x, best_obj = None, np.inf
    limit_hit = False

    def cutoff():
        return np.inf if best_x is None else best_obj - 1e-9 * max(1.0, abs(best_obj))

    def relax(lo, hi):
        nonlocal nodes
        nodes += 1
        return _lp(c, A, senses, rhs, lo, hi, config.lp_backend)

    heap: List = []
    st, x, obj = relax(lo0, hi0)
    if st == "unbounded":
        return MilpSolution("infeasible", None, np.nan, nodes, time.perf_counter() - t0, "bnb",
                            message="LP relaxation unbounded")
    if st == "optimal":
        heapq.heappush(heap, (obj, 0, next(counter), lo0, hi0, x))
    while heap:
        if nodes >= config.node_limit or time.perf_counter() - t0 > config.time_limit:
            limit_hit = True
            break
        obj, negdepth, _, lo, hi, x = heapq.heappop(heap)
        if obj >= cutoff():
            continue
        if bins.size:
            frac = np.abs(x[bins] - np.round(x[bins]))
            k = int(np.argmax(frac))
        else:
            frac = np.zeros(0)
        if not bins.size or frac[k] <= config.tol_int:
            best_x, best_obj = x, obj
            continue
        j = int(bins[k])
        for val in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = val
            st, cx, cobj = relax(clo, chi)
            if st == "optimal" and cobj < cutoff():
                heapq.heappush(heap, (cobj, negdepth - 1, next(counter), clo, chi, cx))
    wall = time.perf_counter() - t0
    if limit_hit:
        return MilpSolution("iteration-limit", best_x, best_obj if best_x is not None else np.nan,
                            nodes, wall, "bnb")
    if best_x is None:
        return MilpSolution("infeasible", None, np.nan, nodes, wall, "bnb")
    return MilpSolution("optimal", best_x, best_obj, nodes, wall, "bnb")


def solve_highs(model: MilpModel, config: MilpConfig) -> MilpSolution:
    t0 = time.perf_counter()
    c = model.objective_vector()
    n = model.num_vars
    if n == 0:
        return MilpSolution("optimal", np.zeros(0), 0.0, 0, 0.0, "highs")
    A, lo_r, hi_r = model.row_bounds()
    lo, hi = model.bounds(clamp=False)
    integrality = np.asarray(model.binary, int)
    cons = [LinearConstraint(A, lo_r, hi_r)] if model.num_rows else []
    res = milp(c, integrality=integrality, bounds=Bounds(lo, hi), constraints=cons,
               options={"time_limit": config.time_limit, "node_limit": config.node_limit,
                        "mip_rel_gap": 0.0, "presolve": True})
    wall = time.perf_counter() - t0
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        return MilpSolution("optimal", np.asarray(res.x), float(res.fun), nodes, wall, "highs")
    if res.status == 2:
        return MilpSolution("infeasible", None, np.nan, nodes, wall, "highs", message=res.message)
    if res.status == 1:
        x = None if res.x is None else np.asarray(res.x)
        return MilpSolution("iteration-limit", x, np.nan if x is None else float(c @ x), nodes, wall,
                            "highs", message=res.message)
    return MilpSolution("infeasible", None, np.nan, nodes, wall, "highs", message=res.message)


def polish(model: MilpModel, sol: MilpSolution) -> MilpSolution:
    """Fix binaries at their rounded values and re-solve the continuous LP.

    Removes the big-M leakage that integrality tolerances allow on relaxed rows.
    """
    if sol.x is None or model.num_binaries == 0:
        return sol
    lo, hi = model.bounds(clamp=False)
    b = model.binaries
    zb = np.round(sol.x[b])
    lo, hi = lo.copy(), hi.copy()
    lo[b] = hi[b] = zb
    A, lo_r, hi_r = model.row_bounds()
    c = model.objective_vector()
    cons = [LinearConstraint(A, lo_r, hi_r)] if model.num_rows else []
    res = milp(c, integrality=np.zeros(model.num_vars, int), bounds=Bounds(lo, hi), constraints=cons)
    if res.status != 0:
        return sol
    x = np.asarray(res.x)
    x[b] = zb
    return MilpSolution(sol.status, x, float(c @ x), sol.nodes, sol.wall_time, sol.backend,
                        message=sol.message)


def solve(model: MilpModel, config: Optional[MilpConfig] = None) -> MilpSolution:
    """Solve a MILP with the configured backend and verify the returned assignment."""
    config = config or MilpConfig()
    if model.num_vars == 0:
        viol = 0.0 if all((r.sense == "<" and r.rhs >= 0) or (r.sense == ">" and r.rhs <= 0)
                          or (r.sense == "=" and r.rhs == 0) for r in model.rows) else 1.0
        return MilpSolution("optimal" if viol == 0 else "infeasible", np.zeros(0),
                            0.0 if viol == 0 else np.nan, 0, 0.0, "trivial")
    backend = config.backend
    if backend == "auto":
        small = model.num_binaries <= config.auto_max_binaries and model.num_vars <= config.auto_max_vars
        backend = "bnb" if small else "highs"
    sol = branch_and_bound(model, config) if backend == "bnb" else solve_highs(model, config)
    if config.polish and sol.x is not None:
        sol = polish(model, sol)
    if sol.x is not None:
        sol.max_violation = model.violation(sol.x)
    return sol
