"""Agent cost functions J^i over the flat trajectory vector.

All supported costs are quadratic, J^i = 0.5 xi' Q_i xi + c_i' xi, except
for an optional log-barrier term used by the cost-inference baseline.  A cost
may carry one unknown weight theta_bar entering its gradient affinely.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from .core import ScenarioSpec

COST_KINDS = ("individual_smoothness", "shared_smoothness", "smoothness_plus_control",
              "weighted_shared")


def _diff_quadratic(size, idx, weight=1.0):
    """Q for weight * sum_t |z_{t+1} - z_t|^2 where idx is (T, d) flat indices."""
    Q = np.zeros((size, size))
    for t in range(idx.shape[0] - 1):
        a, b = idx[t + 1], idx[t]
        Q[a, a] += 2 * weight
        Q[b, b] += 2 * weight
        Q[a, b] -= 2 * weight
        Q[b, a] -= 2 * weight
    return Q


def _square_quadratic(size, idx, weight=1.0):
    Q = np.zeros((size, size))
    flat = np.asarray(idx).ravel()
    Q[flat, flat] += 2 * weight
    return Q


class CostModel:
    """Per-agent quadratic costs built from the scenario's cost descriptors.

    Cost options (``AgentSpec.cost_params``):
      shared: sum smoothness (and control effort) over all agents, default per kind
      control_weight: weight on sum_t |u_t|^2 (default 1 for smoothness_plus_control)
      y_weight: weight on sum_t p_y^2 of the agent's own position
      theta_bar: mixing weight on the weighted agent's smoothness (weighted_shared)
      weighted_agent: which agent's smoothness theta_bar multiplies (default 1)
      barrier_weight: log-barrier weight theta_tilde (baseline costs only)
    """

    def __init__(self, spec: ScenarioSpec, theta_bar=None):
        self.spec = spec
        lay = spec.layout()
        self.layout = lay
        n = lay.size
        N = spec.num_agents
        self.Q0: List[np.ndarray] = []
        self.Q1: List[Optional[np.ndarray]] = []
        self.barrier = np.zeros(N)
        self.theta_bar = np.zeros(N)
        pos = [lay.pos_idx(i) for i in range(N)]
        ctl = [lay.control_idx(i) for i in range(N)]
        for i, agent in enumerate(spec.agents):
            kind = agent.cost
            if kind not in COST_KINDS:
                raise ValueError(f"unknown cost kind {kind!r}; available: {COST_KINDS}")
            opt = agent.cost_options()
            shared = bool(opt.get("shared", kind in ("shared_smoothness", "smoothness_plus_control",
                                                      "weighted_shared")))
            cw = float(opt.get("control_weight", 1.0 if kind in ("smoothness_plus_control",
                                                                  "weighted_shared") else 0.0))
            who = range(N) if shared else [i]
            Q = np.zeros((n, n))
            Q1 = None
            if kind == "weighted_shared":
                wa = int(opt.get("weighted_agent", 1))
                for j in who:
                    if j != wa:
                        Q += _diff_quadratic(n, pos[j])
                Q1 = _diff_quadratic(n, pos[wa])
                self.theta_bar[i] = float(opt.get("theta_bar", 1.0))
            else:
                for j in who:
                    Q += _diff_quadratic(n, pos[j])
            if cw:
                for j in who:
                    Q += _square_quadratic(n, ctl[j], cw)
            yw = float(opt.get("y_weight", 0.0))
            if yw:
                Q += _square_quadratic(n, pos[i][:, 1], yw)
            self.Q0.append(Q)
            self.Q1.append(Q1)
            self.barrier[i] = float(opt.get("barrier_weight", 0.0))
        if theta_bar is not None:
            tb = np.asarray(theta_bar, float).ravel()
            if tb.size != N:
                raise ValueError(f"theta_bar needs {N} entries")
            self.theta_bar = tb.copy()
        self._pos = pos

    @property
    def has_unknown_weight(self) -> List[bool]:
        return [q is not None for q in self.Q1]

    def hessian(self, i, xi=None) -> np.ndarray:
        H = self.Q0[i].copy()
        if self.Q1[i] is not None:
            H += self.theta_bar[i] * self.Q1[i]
        if self.barrier[i] and xi is not None:
            H += self._barrier_hessian(i, xi)
        return H

    def value(self, i, xi) -> float:
        xi = np.asarray(xi, float)
        v = 0.5 * xi @ self.Q0[i] @ xi
        if self.Q1[i] is not None:
            v += 0.5 * self.theta_bar[i] * xi @ self.Q1[i] @ xi
        if self.barrier[i]:
            v += self._barrier_value(i, xi)
        return float(v)

    def grad(self, i, xi) -> np.ndarray:
        """Gradient of J^i with respect to the whole flat vector."""
        xi = np.asarray(xi, float)
        g = self.Q0[i] @ xi
        if self.Q1[i] is not None:
            g += self.theta_bar[i] * (self.Q1[i] @ xi)
        if self.barrier[i]:
            g += self._barrier_grad(i, xi)
        return g

    def grad_affine(self, i, xi):
        """(a, b) with grad J^i = a + theta_bar_i * b (b is zero when the weight is known)."""
        xi = np.asarray(xi, float)
        a = self.Q0[i] @ xi
        if self.barrier[i]:
            a += self._barrier_grad(i, xi)
        b = np.zeros_like(a) if self.Q1[i] is None else self.Q1[i] @ xi
        return a, b

    # log barrier: -w sum_t sum_{j != i} log |p_i - p_j|^2 ---------------------
    def _pairs(self, i):
        return [j for j in range(self.spec.num_agents) if j != i]

    def _barrier_value(self, i, xi):
        v = 0.0
        for j in self._pairs(i):
            r = xi[self._pos[i]] - xi[self._pos[j]]
            v -= self.barrier[i] * np.sum(np.log(np.sum(r ** 2, axis=1)))
        return v

    def _barrier_grad(self, i, xi):
        g = np.zeros_like(xi)
        for j in self._pairs(i):
            r = xi[self._pos[i]] - xi[self._pos[j]]
            sq = np.sum(r ** 2, axis=1, keepdims=True)
            d = -self.barrier[i] * 2 * r / sq
            np.add.at(g, self._pos[i], d)
            np.add.at(g, self._pos[j], -d)
        return g

    def _barrier_hessian(self, i, xi):
        n = xi.size
        H = np.zeros((n, n))
        d = self.spec.pos_dim
        eye = np.eye(d)
        for j in self._pairs(i):
            for t in range(self.spec.horizon):
                a, b = self._pos[i][t], self._pos[j][t]
                r = xi[a] - xi[b]
                sq = r @ r
                blk = -self.barrier[i] * (2 * eye / sq - 4 * np.outer(r, r) / sq ** 2)
                H[np.ix_(a, a)] += blk
                H[np.ix_(b, b)] += blk
                H[np.ix_(a, b)] -= blk
                H[np.ix_(b, a)] -= blk
        return H

    def barrier_basis(self, i, xi):
        """Gradient of -sum log |p_i - p_j|^2 (the term multiplied by theta_tilde)."""
        xi = np.asarray(xi, float)
        g = np.zeros_like(xi)
        for j in self._pairs(i):
            r = xi[self._pos[i]] - xi[self._pos[j]]
            sq = np.sum(r ** 2, axis=1, keepdims=True)
            d = -2 * r / sq
            np.add.at(g, self._pos[i], d)
            np.add.at(g, self._pos[j], -d)
        return g
