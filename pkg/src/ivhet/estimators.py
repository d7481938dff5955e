"""The three instrumental-variables estimands and their cell weights.

All three estimators run on the observations belonging to non-degenerate
cells, and all three are exactly a weighted average of the per-cell Wald
ratios tau_j:

  saturated LATE    weights proportional to p_j pi_j
  linear IV         weights proportional to p_j pi_j Var(Z | cell j)
  interacted IV     weights proportional to p_j pi_j^2 Var(Z | cell j)

with Var(Z | cell) = q_j (1 - q_j). The identities are algebraic, not
asymptotic, and the tests hold them to 1e-8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cells import CellTable
from .errors import IdentificationError
from .regression import tsls
from .tables import json_safe


@dataclass(frozen=True)
class EstimateReport:
    estimand: str
    estimate: float
    se: float
    se_type: str
    n_used: int
    cells_used: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return json_safe({
            "estimand": self.estimand,
            "estimate": self.estimate,
            "se": self.se,
            "se_type": self.se_type,
            "n_used": self.n_used,
            "cells_used": self.cells_used,
            "metadata": dict(self.metadata),
        })


@dataclass(frozen=True)
class WeightTable:
    """Per-cell weights for the three estimands, NaN at degenerate cells."""

    w_late: np.ndarray
    w_iv: np.ndarray
    w_ai: np.ndarray
    tau: np.ndarray
    degenerate: np.ndarray
    late_defined: bool
    iv_defined: bool
    ai_defined: bool

    @property
    def n_cells(self) -> int:
        return len(self.tau)

    def dot(self, family: str) -> float:
        """Weighted average of tau under one family's weights."""
        w = {"late": self.w_late, "iv": self.w_iv, "ai": self.w_ai}[family]
        mask = ~self.degenerate
        return float(np.sum(w[mask] * self.tau[mask]))

    def to_records(self) -> list[dict]:
        return [
            {
                "cell": int(j),
                "w_late": float(self.w_late[j]),
                "w_iv": float(self.w_iv[j]),
                "w_ai": float(self.w_ai[j]),
                "tau": float(self.tau[j]),
                "degenerate": bool(self.degenerate[j]),
            }
            for j in range(self.n_cells)
        ]

    def to_json(self) -> str:
        return json.dumps(json_safe(self.to_records()), indent=2)


def _normalize(raw: np.ndarray, mask: np.ndarray):
    """Normalize raw weights over the mask; returns (weights, defined)."""
    out = np.full(raw.shape, np.nan)
    total = raw[mask].sum()
    if total == 0.0 or not np.isfinite(total):
        return out, False
    out[mask] = raw[mask] / total
    return out, True


def decompose_weights(ct: CellTable) -> WeightTable:
    """Cell weights for the three estimands from cell statistics alone."""
    mask = ct.retained
    if not mask.any():
        raise IdentificationError("no non-degenerate cells")
    pi = np.where(mask, ct.pi_j, 0.0)
    raw_late = ct.p_j * pi
    raw_iv = ct.p_j * pi * ct.var_z_j
    raw_ai = ct.p_j * pi * pi * ct.var_z_j
    w_late, late_ok = _normalize(raw_late, mask)
    w_iv, iv_ok = _normalize(raw_iv, mask)
    w_ai, ai_ok = _normalize(raw_ai, mask)
    return WeightTable(
        w_late=w_late, w_iv=w_iv, w_ai=w_ai,
        tau=ct.tau_j.copy(),
        degenerate=ct.degenerate.copy(),
        late_defined=late_ok, iv_defined=iv_ok, ai_defined=ai_ok,
    )


def _retained_rows(ct: CellTable) -> np.ndarray:
    return ct.retained[ct.assignments]


def _cell_dummies(assignments: np.ndarray, cell_ids: np.ndarray) -> np.ndarray:
    return (assignments[:, None] == cell_ids[None, :]).astype(np.float64)


def _resolve_se(ct: CellTable, se_type: str | None) -> str:
    if se_type is not None:
        return se_type
    return "cluster" if ct.source.cluster is not None else "hc1"


def _subset(ct: CellTable):
    ds = ct.source
    rows = _retained_rows(ct)
    cell_ids = np.flatnonzero(ct.retained)
    a = ct.assignments[rows]
    dummies = _cell_dummies(a, cell_ids)
    cluster = None if ds.cluster is None else ds.cluster[rows]
    return ds.y[rows], ds.d[rows].astype(float), ds.z[rows].astype(float), \
        dummies, cluster, int(rows.sum()), len(cell_ids)


def estimate_beta_iv(ct: CellTable, se_type: str | None = None) -> EstimateReport:
    """Linear IV: 2SLS of Y on cell dummies and D, instrumented by Z."""
    se = _resolve_se(ct, se_type)
    y, d, z, dummies, cluster, n_used, j_used = _subset(ct)
    fit = tsls(y, dummies, d, z, se_type=se, cluster=cluster)
    idx = fit.endog_index
    return EstimateReport(
        estimand="beta_iv",
        estimate=float(fit.coefficients[idx]),
        se=float(np.sqrt(fit.vcov[idx, idx])),
        se_type=se,
        n_used=n_used,
        cells_used=j_used,
        metadata={"estimator": "2sls", "instruments": 1},
    )


def estimate_beta_ai(ct: CellTable, se_type: str | None = None) -> EstimateReport:
    """Interacted IV: instruments are Z times each retained cell dummy."""
    se = _resolve_se(ct, se_type)
    y, d, z, dummies, cluster, n_used, j_used = _subset(ct)
    inst = dummies * z[:, None]
    fit = tsls(y, dummies, d, inst, se_type=se, cluster=cluster)
    idx = fit.endog_index
    return EstimateReport(
        estimand="beta_ai",
        estimate=float(fit.coefficients[idx]),
        se=float(np.sqrt(fit.vcov[idx, idx])),
        se_type=se,
        n_used=n_used,
        cells_used=j_used,
        metadata={"estimator": "2sls_interacted", "instruments": j_used},
    )


def estimate_beta_late_saturated(ct: CellTable, se_type: str | None = None) -> EstimateReport:
    """Share-weighted Wald ratio over non-degenerate cells.

    The point estimate is sum_j p_j (ybar_1j - ybar_0j) over
    sum_j p_j (dbar_1j - dbar_0j). The standard error comes from the
    influence function of this ratio, treating cell shares and instrument
    arm shares as estimated; with cluster labels present, influence
    contributions are summed within clusters first.
    """
    se = _resolve_se(ct, se_type)
    mask = ct.retained
    num = float(np.sum(ct.p_j[mask] * ct.dy_j[mask]))
    den = float(np.sum(ct.p_j[mask] * ct.pi_j[mask]))
    if den == 0.0:
        raise IdentificationError("aggregate first stage is exactly zero")
    beta = num / den

    ds = ct.source
    rows = _retained_rows(ct)
    a = ct.assignments[rows]
    y = ds.y[rows]
    d = ds.d[rows].astype(float)
    z = ds.z[rows]
    m = int(rows.sum())

    # rescale shares to the retained subsample so the moments average to
    # the estimate over exactly the rows used
    p_scale = ct.p_j[mask].sum()
    num_s = num / p_scale
    den_s = den / p_scale

    q = ct.q_j[a]
    my1 = ct.mean_y1_j[a]
    my0 = ct.mean_y0_j[a]
    md1 = ct.mean_d1_j[a]
    md0 = ct.mean_d0_j[a]
    dy = ct.dy_j[a]
    dd = ct.pi_j[a]

    zf = z.astype(float)
    psi_num = zf * (y - my1) / q - (1 - zf) * (y - my0) / (1 - q) + dy - num_s
    psi_den = zf * (d - md1) / q - (1 - zf) * (d - md0) / (1 - q) + dd - den_s
    infl = (psi_num - beta * psi_den) / den_s

    if se == "cluster":
        labels = ds.cluster[rows]
        _, inverse = np.unique(labels, return_inverse=True)
        g = inverse.max() + 1
        sums = np.bincount(inverse, weights=infl)
        var = float(np.sum(sums ** 2)) / m ** 2
        if g > 1:
            var *= g / (g - 1.0)
        se_label = "cluster"
    else:
        var = float(np.sum(infl ** 2)) / m ** 2
        se_label = "influence"

    return EstimateReport(
        estimand="beta_late_saturated",
        estimate=beta,
        se=float(np.sqrt(var)),
        se_type=se_label,
        n_used=m,
        cells_used=int(mask.sum()),
        metadata={"estimator": "saturated_wald_ratio"},
    )
