"""Mixed-integer linear model container and encoding helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

BOUND_CLAMP = 1e7
DEFAULT_M = 1e4
DEFAULT_MBAR = 1e3
DEFAULT_MLOW = -1e3


class BigMWarning(UserWarning):
    pass


class MilpStructuralError(ValueError):
    pass


@dataclass
class Row:
    idx: np.ndarray
    coef: np.ndarray
    sense: str          # "<", ">", "="
    rhs: float
    name: str = ""


class MilpModel:
    """Continuous and binary variables, linear rows and a minimization objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.lo: List[float] = []
        self.hi: List[float] = []
        self.binary: List[bool] = []
        self.var_names: List[str] = []
        self.rows: List[Row] = []
        self.obj: dict = {}
        self.warnings: List[str] = []

    # variables -------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.lo)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.binary, bool))

    @property
    def num_binaries(self) -> int:
        return int(np.sum(self.binary))

    def add_var(self, name: str = "", lo: float = 0.0, hi: float = np.inf, binary: bool = False) -> int:
        if binary:
            lo, hi = 0.0, 1.0
        if lo > hi:
            raise MilpStructuralError(f"variable {name}: lower bound {lo} > upper bound {hi}")
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.binary.append(bool(binary))
        self.var_names.append(name or f"x{len(self.lo) - 1}")
        return len(self.lo) - 1

    def add_vars(self, n: int, prefix: str = "x", lo=0.0, hi=np.inf, binary: bool = False) -> np.ndarray:
        lo = np.broadcast_to(np.asarray(lo, float), (n,))
        hi = np.broadcast_to(np.asarray(hi, float), (n,))
        start = self.num_vars
        for k in range(n):
            self.add_var(f"{prefix}{k}", lo[k], hi[k], binary)
        return np.arange(start, start + n)

    def set_bounds(self, j: int, lo: float, hi: float) -> None:
        self.lo[j], self.hi[j] = float(lo), float(hi)

    # rows --------------------------------------------------------------------
    def add_row(self, idx, coef, sense: str, rhs: float, name: str = "") -> int:
        idx = np.asarray(idx, int).ravel()
        coef = np.asarray(coef, float).ravel()
        if idx.size != coef.size:
            raise MilpStructuralError("row index and coefficient lengths differ")
        if sense not in ("<", ">", "="):
            raise MilpStructuralError(f"unknown row sense {sense!r}")
        if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
            raise MilpStructuralError(f"row {name} references an undeclared variable")
        if not np.all(np.isfinite(coef)) or not np.isfinite(rhs):
            raise MilpStructuralError(f"row {name} has non-finite data")
        if idx.size and np.unique(idx).size != idx.size:
            uniq, inv = np.unique(idx, return_inverse=True)
            acc = np.zeros(uniq.size)
            np.add.at(acc, inv, coef)
            idx, coef = uniq, acc
        self.rows.append(Row(idx, coef, sense, float(rhs), name or f"r{len(self.rows)}"))
        return len(self.rows) - 1

    def set_objective(self, idx, coef) -> None:
        self.obj = {}
        for j, c in zip(np.asarray(idx, int).ravel(), np.asarray(coef, float).ravel()):
            self.obj[int(j)] = self.obj.get(int(j), 0.0) + float(c)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_vars)
        for j, v in self.obj.items():
            c[j] = v
        return c

    def copy(self) -> "MilpModel":
        m = MilpModel(self.name)
        m.lo, m.hi, m.binary, m.var_names = list(self.lo), list(self.hi), list(self.binary), list(self.var_names)
        m.rows = list(self.rows)
        m.obj = dict(self.obj)
        m.warnings = list(self.warnings)
        return m

    # array views ---------------------------------------------------------------
    def bounds(self, clamp: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if clamp:
            lo = np.clip(lo, -BOUND_CLAMP, BOUND_CLAMP)
            hi = np.clip(hi, -BOUND_CLAMP, BOUND_CLAMP)
        return lo, hi

    def matrix(self) -> Tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """Row matrix, senses and right-hand sides."""
        data, ri, ci = [], [], []
        for r, row in enumerate(self.rows):
            data.append(row.coef)
            ci.append(row.idx)
            ri.append(np.full(row.idx.size, r))
        if data:
            A = sparse.csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                                  shape=(self.num_rows, self.num_vars))
        else:
            A = sparse.csr_matrix((self.num_rows, self.num_vars))
        senses = np.array([row.sense for row in self.rows], dtype="<U1")
        rhs = np.array([row.rhs for row in self.rows], float)
        return A, senses, rhs

    def row_bounds(self) -> Tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        A, senses, rhs = self.matrix()
        lo = np.where(senses == "<", -np.inf, rhs)
        hi = np.where(senses == ">", np.inf, rhs)
        return A, lo, hi

    def violation(self, x) -> float:
        """Largest row or bound violation of the assignment x (binaries checked for 0/1 separately)."""
        x = np.asarray(x, float)
        worst = 0.0
        if self.num_vars:
            lo, hi = np.asarray(self.lo), np.asarray(self.hi)
            worst = max(worst, float(np.max(np.maximum(lo - x, 0.0))), float(np.max(np.maximum(x - hi, 0.0))))
        if self.rows:
            A, lo_r, hi_r = self.row_bounds()
            act = A @ x
            worst = max(worst, float(np.max(np.maximum(lo_r - act, 0.0))),
                        float(np.max(np.maximum(act - hi_r, 0.0))))
        return worst

    def row_violations(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if not self.rows:
            return np.zeros(0)
        A, lo_r, hi_r = self.row_bounds()
        act = A @ x
        return np.maximum(np.maximum(lo_r - act, 0.0), np.maximum(act - hi_r, 0.0))

    def integrality_gap(self, x) -> float:
        b = self.binaries
        if b.size == 0:
            return 0.0
        xb = np.asarray(x, float)[b]
        return float(np.max(np.abs(xb - np.round(xb))))

    # interval arithmetic ------------------------------------------------------
    def activity_range(self, idx, coef) -> Tuple[float, float]:
        lo = np.asarray(self.lo, float)[idx]
        hi = np.asarray(self.hi, float)[idx]
        with np.errstate(invalid="ignore"):
            lo_t = np.where(coef >= 0, coef * lo, coef * hi)
            hi_t = np.where(coef >= 0, coef * hi, coef * lo)
        lo_t = np.where(coef == 0, 0.0, lo_t)
        hi_t = np.where(coef == 0, 0.0, hi_t)
        return float(np.sum(lo_t)), float(np.sum(hi_t))


def add_disjunction_bigM(model: MilpModel, rows: Sequence[Tuple[Sequence[int], Sequence[float], float]],
                         selector_name: str, M: float = DEFAULT_M) -> np.ndarray:
    """Encode OR_beta (coef_beta . x >= rhs_beta) with one binary per disjunct.

    Emits coef . x >= rhs - M (1 - z_beta) per disjunct and the cover row
    sum_beta z_beta >= 1.  When interval arithmetic over the variable box shows
    that M cannot relax a row, a warning is recorded on the model.
    """
    if not rows:
        raise MilpStructuralError("disjunction needs at least one row")
    z = model.add_vars(len(rows), prefix=f"{selector_name}_z", binary=True)
    for b, (idx, coef, rhs) in enumerate(rows):
        idx = np.asarray(idx, int)
        coef = np.asarray(coef, float)
        check_big_m(model, idx, coef, rhs, M, f"{selector_name}[{b}]")
        model.add_row(np.append(idx, z[b]), np.append(coef, -M), ">", rhs - M, f"{selector_name}_d{b}")
    model.add_row(z, np.ones(len(rows)), ">", 1.0, f"{selector_name}_cover")
    return z


def check_big_m(model: MilpModel, idx, coef, rhs, M, label) -> bool:
    """Record a warning when coef . x >= rhs - M can be violated inside the box."""
    lo, _ = model.activity_range(np.asarray(idx, int), np.asarray(coef, float))
    if lo < rhs - M:
        msg = f"big-M too small for {label}: min activity {lo:.4g} < rhs - M = {rhs - M:.4g}"
        model.warnings.append(msg)
        return False
    return True


def linearize_binary_product(model: MilpModel, q: int, ell: int, lo: float, hi: float,
                             name: str = "") -> int:
    """Add r = q * ell for binary q and bounded continuous ell in [lo, hi]."""
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise MilpStructuralError("binary product needs explicit finite bounds on the continuous factor")
    if not model.binary[q]:
        raise MilpStructuralError("first factor must be binary")
    r = model.add_var(name or f"prod_{q}_{ell}", min(lo, 0.0), max(hi, 0.0))
    model.add_row([r, q], [1.0, -lo], ">", 0.0)                 # r >= lo q
    model.add_row([r, q], [1.0, -hi], "<", 0.0)                 # r <= hi q
    model.add_row([r, ell, q], [1.0, -1.0, -hi], ">", -hi)      # r >= ell - (1-q) hi
    model.add_row([r, ell, q], [1.0, -1.0, -lo], "<", -lo)      # r <= ell - (1-q) lo
    model.add_row([r, ell, q], [1.0, -1.0, hi], "<", hi)        # r <= ell + (1-q) hi
    return r
