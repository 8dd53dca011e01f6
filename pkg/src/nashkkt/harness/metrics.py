"""Safety statistics of plans against ground-truth constraints."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..constraints import make_family
from ..core import ScenarioSpec
from ..planning import pair_distances


def metrics(spec: ScenarioSpec, xi, theta_true, tol: float = 1e-6) -> dict:
    """Per-timestep min/mean pairwise distance and violations under ``theta_true``.

    A block counts as violated when its value exceeds ``tol``.
    """
    xi = np.asarray(xi, float)
    d = np.stack(list(pair_distances(spec, xi).values())) if spec.num_agents > 1 else \
        np.zeros((0, spec.horizon))
    out = {"min_distance_t": d.min(0).tolist() if d.size else [],
           "mean_distance_t": d.mean(0).tolist() if d.size else [],
           "violations": 0, "safe": True}
    if spec.unknown_family is not None:
        fam = make_family(spec, spec.unknown_family)
        bv = fam.block_values(fam.evaluate(theta_true, xi, check=False))
        out["violations"] = int(np.sum(bv > tol))
        out["safe"] = out["violations"] == 0
    return out


def violation_rate(reports: Sequence[dict]) -> float:
    """Fraction of metric reports with at least one violation."""
    if not reports:
        return 0.0
    return float(np.mean([not r["safe"] for r in reports]))
