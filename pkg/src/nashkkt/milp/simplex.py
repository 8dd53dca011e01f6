"""Dense two-phase tableau simplex with Bland's anti-cycling rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-9


@dataclass
class LpResult:
    status: str          # optimal | infeasible | unbounded | iteration-limit
    x: np.ndarray
    objective: float
    iterations: int


def _pivot(T, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    nz = np.flatnonzero(np.abs(col) > 0)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T, basis, ncols, max_iter, it0):
    """Minimize the objective stored in the last row; columns >= ncols are ignored."""
    it = it0
    m = T.shape[0] - 1
    while it < max_iter:
        red = T[-1, :ncols]
        cand = np.flatnonzero(red < -TOL)
        if cand.size == 0:
            return "optimal", it
        c = int(cand[0])                       # Bland: lowest index entering
        col = T[:m, c]
        pos = np.flatnonzero(col > TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + TOL * max(1.0, abs(best))]
        r = int(min(ties, key=lambda k: basis[k]))   # Bland: lowest basic index leaves
        _pivot(T, r, c)
        basis[r] = c
        it += 1
    return "iteration-limit", it


def solve_lp(c, A, senses, rhs, lo, hi, max_iter=50000) -> LpResult:
    """min c.x s.t. A x (<,>,=) rhs, lo <= x <= hi with finite bounds.

    Variables are shifted to y = x - lo in [0, hi - lo]; upper bounds become
    explicit rows so the tableau is in standard form.
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, c.size)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    n = c.size
    if np.any(lo > hi + TOL):
        return LpResult("infeasible", np.zeros(n), np.nan, 0)
    b = np.asarray(rhs, float) - A @ lo
    width = hi - lo
    ub = np.flatnonzero(width < np.inf)
    rows = [A, np.eye(n)[ub]]
    sense = list(senses) + ["<"] * ub.size
    bb = np.concatenate([b, width[ub]])
    Afull = np.vstack(rows) if n else np.zeros((len(sense), 0))
    m = Afull.shape[0]
    if m == 0:
        x = np.where(c >= 0, lo, hi)
        if np.any(~np.isfinite(x)):
            return LpResult("unbounded", lo.copy(), -np.inf, 0)
        return LpResult("optimal", x, float(c @ x), 0)
    # slack columns
    slack_sign = np.array([1.0 if s == "<" else (-1.0 if s == ">" else 0.0) for s in sense])
    sl = np.flatnonzero(slack_sign != 0)
    S = np.zeros((m, sl.size))
    S[sl, np.arange(sl.size)] = slack_sign[sl]
    M = np.hstack([Afull, S])
    flip = bb < 0
    M[flip] *= -1
    bb = np.where(flip, -bb, bb)
    nstd = M.shape[1]
    # artificials for every row
    T = np.zeros((m + 1, nstd + m + 1))
    T[:m, :nstd] = M
    T[:m, nstd:nstd + m] = np.eye(m)
    T[:m, -1] = bb
    basis = list(range(nstd, nstd + m))
    # phase 1 objective: sum of artificials, expressed in nonbasic terms
    T[-1, :] = 0.0
    T[-1, nstd:nstd + m] = 1.0
    T[-1] -= T[:m].sum(axis=0)
    status, it = _run(T, basis, nstd + m, max_iter, 0)
    if status == "iteration-limit":
        return LpResult(status, lo.copy(), np.nan, it)
    if -T[-1, -1] > 1e-7 * max(1.0, np.abs(bb).max()):
        return LpResult("infeasible", lo.copy(), np.nan, it)
    # drive artificials out of the basis
    for r in range(m):
        if basis[r] >= nstd:
            nz = np.flatnonzero(np.abs(T[r, :nstd]) > TOL)
            if nz.size:
                _pivot(T, r, int(nz[0]))
                basis[r] = int(nz[0])
    keep = [r for r in range(m) if basis[r] < nstd]
    T = np.vstack([T[keep], T[-1:]])
    T = np.hstack([T[:, :nstd], T[:, -1:]])
    basis = [basis[r] for r in keep]
    # phase 2 objective
    cstd = np.concatenate([c, np.zeros(nstd - n)])
    T[-1, :] = 0.0
    T[-1, :nstd] = cstd
    for r, j in enumerate(basis):
        if cstd[j] != 0:
            T[-1] -= cstd[j] * T[r]
    status, it = _run(T, basis, nstd, max_iter, it)
    y = np.zeros(nstd)
    for r, j in enumerate(basis):
        y[j] = T[r, -1]
    x = lo + y[:n]
    if status != "optimal":
        return LpResult(status, x, np.nan, it)
    return LpResult("optimal", x, float(c @ x), it)
