import functools
import sys

import numpy as np
import pytest

from nashkkt.core import DemonstrationSet
from nashkkt.game import solve_nash
from nashkkt.harness.scenarios import scenario_entry


@functools.lru_cache(maxsize=None)
def demo_sets(name: str, seed: int = 0):
    """Noise-free demonstration sets of a library scenario (cached per session)."""
    e = scenario_entry(name)
    out = []
    for spec in e.demo_specs():
        tr, cert = solve_nash(spec, e.theta_star, seed=seed, theta_bar=e.theta_bar_star)
        out.append((DemonstrationSet(spec, (tr,)), cert))
    return tuple(out)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# random MILP models with a brute-force oracle


def random_milp(rng, max_binaries: int = 12):
    """Small random MILP: up to ``max_binaries`` binaries and a few bounded continuous variables."""
    from nashkkt.milp import MilpModel
    k = int(rng.integers(1, max_binaries + 1))
    n_cont = int(rng.integers(0, 2)) if k > 6 else int(rng.integers(0, 4))
    m = MilpModel("rand")
    m.add_vars(k, "z", binary=True)
    if n_cont:
        m.add_vars(n_cont, "x", lo=rng.uniform(-5, 0, n_cont), hi=rng.uniform(0.5, 5, n_cont))
    n = k + n_cont
    for r in range(int(rng.integers(1, 7))):
        support = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coef = np.round(rng.normal(size=support.size) * 3, 2)
        sense = ("<", ">", "=")[int(rng.choice(3, p=[0.45, 0.45, 0.1]))] if n_cont else "<>"[int(rng.integers(2))]
        rhs = float(np.round(rng.normal() * 3, 2)) + 0.005
        m.add_row(support, coef, sense, rhs)
    m.set_objective(np.arange(n), np.round(rng.normal(size=n), 3))
    return m


def enumerate_milp(model):
    """Exhaustive oracle: every binary assignment, continuous part solved exactly.

    One continuous variable is handled in closed form (interval intersection),
    more than one with scipy's LP solver.  Returns (status, objective).
    """
    from scipy.optimize import linprog
    from itertools import product
    A, senses, rhs = model.matrix()
    A = A.toarray()
    c = model.objective_vector()
    b = model.binaries
    cont = np.setdiff1d(np.arange(model.num_vars), b)
    lo, hi = np.asarray(model.lo), np.asarray(model.hi)
    best = np.inf
    Z = np.array(list(product((0.0, 1.0), repeat=b.size)))
    base = rhs[None, :] - Z @ A[:, b].T                      # residual rhs per assignment
    zcost = Z @ c[b]
    if cont.size == 0:
        ok = np.ones(len(Z), bool)
        for r, s in enumerate(senses):
            v = -base[:, r]        # activity - rhs
            ok &= (v <= 1e-9) if s == "<" else (v >= -1e-9) if s == ">" else (np.abs(v) <= 1e-9)
        best = zcost[ok].min() if ok.any() else np.inf
    elif cont.size == 1:
        a = A[:, cont[0]]
        xl = np.full(len(Z), lo[cont[0]])
        xh = np.full(len(Z), hi[cont[0]])
        ok = np.ones(len(Z), bool)
        for r, s in enumerate(senses):
            if a[r] == 0.0:
                ok &= (base[:, r] >= -1e-9) if s == "<" else (base[:, r] <= 1e-9) if s == ">" \
                    else (np.abs(base[:, r]) <= 1e-9)
                continue
            q = base[:, r] / a[r]
            if s == "=":
                xl, xh = np.maximum(xl, q), np.minimum(xh, q)
            elif (s == "<") == (a[r] > 0):
                xh = np.minimum(xh, q)
            else:
                xl = np.maximum(xl, q)
        ok &= xl <= xh + 1e-9
        cx = c[cont[0]]
        val = zcost + np.where(cx >= 0, cx * xl, cx * xh)
        best = val[ok].min() if ok.any() else np.inf
    else:
        for z, res_rhs, zc in zip(Z, base, zcost):
            Ac = A[:, cont]
            ub = [(Ac[r], res_rhs[r]) if s == "<" else (-Ac[r], -res_rhs[r]) for r, s in enumerate(senses) if s != "="]
            eq = [(Ac[r], res_rhs[r]) for r, s in enumerate(senses) if s == "="]
            res = linprog(c[cont], A_ub=np.array([u[0] for u in ub]) if ub else None,
                          b_ub=[u[1] for u in ub] or None,
                          A_eq=np.array([e[0] for e in eq]) if eq else None, b_eq=[e[1] for e in eq] or None,
                          bounds=list(zip(lo[cont], hi[cont])), method="highs")
            if res.status == 0:
                best = min(best, zc + res.fun)
    return ("optimal", float(best)) if np.isfinite(best) else ("infeasible", np.nan)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    rows = sorted(getattr(mod, "RESULTS", []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in rows:
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
