"""Estimators for designs with one instrument per covariate cell.

Interacting the instrument with cell dummies turns one instrument into J,
and when J grows with the sample the interacted two stage least squares
estimator picks up a bias proportional to the number of instruments. The
two jackknife estimators remove the own-observation term that causes it:
each unit's constructed instrument is a first stage prediction computed
as if that unit had been left out, using the standard leverage identity
for leave-one-out fits rather than J separate regressions.

jive leaves the unit out of the full first stage (covariates and
instrument interactions together). ujive additionally subtracts the
unit's leave-one-out prediction from the covariates-only regression, so
the constructed instrument is centered within cells; the two coincide up
to a term of order 1/n when the covariates are just an intercept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cells import CellTable
from .errors import DomainError, IdentificationError, LeverageError
from .estimators import _resolve_se, _subset, estimate_beta_ai
from .regression import hat_diagonals, ols

_LEVERAGE_CAP = 1.0 - 1e-8


@dataclass(frozen=True)
class ManyIVFit:
    estimator: str
    estimate: float
    se: float
    se_type: str
    n_instruments: int
    n_controls: int
    leverage_max: float
    n_used: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "estimate": self.estimate,
            "se": self.se,
            "se_type": self.se_type,
            "n_instruments": self.n_instruments,
            "n_controls": self.n_controls,
            "leverage_max": self.leverage_max,
            "n_used": self.n_used,
            **self.metadata,
        }


def _loo_fitted(target: np.ndarray, design: np.ndarray, what: str):
    """Leave-one-out fitted values via the leverage identity."""
    fit = ols(target, design, se_type="hc0")
    h = hat_diagonals(design)
    hmax = float(h.max())
    if hmax > _LEVERAGE_CAP:
        raise LeverageError(
            f"a leverage value in the {what} regression is {hmax:.6f}; "
            "some cell arm is a single observation, so leave-one-out "
            "predictions are undefined there. Raise min_arm_size when "
            "building the cells."
        )
    return (fit.fitted - h * target) / (1.0 - h), hmax


def _just_identified_iv(y, X, Q, se_type, cluster):
    """IV fit with exactly as many instruments as regressors.

    beta solves (Q'X) b = Q'y; the covariance is the usual sandwich with
    bread (Q'X)^{-1} and meat built from the instrument-times-residual
    scores (optionally summed within clusters).
    """
    n, k = X.shape
    if Q.shape != X.shape:
        raise DomainError("instrument block must match the regressor block")
    a = Q.T @ X
    try:
        with warnings.catch_warnings():
            # singularity is detected from the factor below and raised
            # as IdentificationError; scipy's warning would be noise
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(a)
    except scipy.linalg.LinAlgError as exc:
        raise IdentificationError(
            "instrument cross-moment matrix is singular"
        ) from exc
    if not np.all(np.isfinite(lu[0])) or np.min(
            np.abs(np.diag(lu[0]))) < 1e-12 * max(1.0, np.abs(a).max()):
        raise IdentificationError("instrument cross-moment matrix is singular")
    beta = scipy.linalg.lu_solve(lu, Q.T @ y)
    resid = y - X @ beta
    scores = Q * resid[:, None]
    df = n - k
    if se_type == "cluster":
        _, inverse = np.unique(cluster, return_inverse=True)
        g = inverse.max() + 1
        if g < 2:
            raise DomainError("cluster se needs at least 2 clusters")
        sums = np.zeros((g, k))
        np.add.at(sums, inverse, scores)
        meat = sums.T @ sums
        if df <= 0:
            raise DomainError("no residual degrees of freedom")
        meat *= (g / (g - 1.0)) * ((n - 1.0) / df)
    else:
        meat = scores.T @ scores
        if se_type == "hc1":
            if df <= 0:
                raise DomainError("no residual degrees of freedom")
            meat *= n / df
        elif se_type != "hc0":
            raise DomainError(
                "just-identified IV supports hc0, hc1 and cluster ses"
            )
    bread = scipy.linalg.lu_solve(lu, np.eye(k))
    vcov = bread @ meat @ bread.T
    return beta, vcov, resid


def many_tsls(ct: CellTable, se_type: str | None = None) -> ManyIVFit:
    """Interacted two stage least squares, with leverage diagnostics."""
    se = _resolve_se(ct, se_type)
    rep = estimate_beta_ai(ct, se_type=se)
    _, d, z, dummies, _, n_used, j_used = _subset(ct)
    w = np.column_stack([dummies, dummies * z[:, None]])
    h = hat_diagonals(w)
    return ManyIVFit(
        estimator="tsls", estimate=rep.estimate, se=rep.se, se_type=se,
        n_instruments=j_used, n_controls=j_used,
        leverage_max=float(h.max()), n_used=n_used,
        metadata={"first_stage_design_columns": 2 * j_used},
    )


def jive(ct: CellTable, se_type: str | None = None) -> ManyIVFit:
    """Jackknife IV: the constructed instrument for unit i is the first
    stage prediction of D_i from a fit that leaves row i out."""
    se = _resolve_se(ct, se_type)
    y, d, z, dummies, cluster, n_used, j_used = _subset(ct)
    w = np.column_stack([dummies, dummies * z[:, None]])
    d_loo, hmax = _loo_fitted(d, w, "first stage")
    X = np.column_stack([dummies, d])
    Q = np.column_stack([dummies, d_loo])
    beta, vcov, _ = _just_identified_iv(y, X, Q, se, cluster)
    return ManyIVFit(
        estimator="jive", estimate=float(beta[-1]),
        se=float(np.sqrt(vcov[-1, -1])), se_type=se,
        n_instruments=j_used, n_controls=j_used,
        leverage_max=hmax, n_used=n_used,
        metadata={},
    )


def ujive(ct: CellTable, se_type: str | None = None) -> ManyIVFit:
    """Jackknife IV with the covariate part of the prediction removed.

    The constructed instrument is the leave-one-out first stage
    prediction minus the leave-one-out prediction from the covariates
    alone, so it carries only the instrument's contribution.
    """
    se = _resolve_se(ct, se_type)
    y, d, z, dummies, cluster, n_used, j_used = _subset(ct)
    w = np.column_stack([dummies, dummies * z[:, None]])
    d_loo_full, h1 = _loo_fitted(d, w, "first stage")
    d_loo_ctrl, h2 = _loo_fitted(d, dummies, "covariate")
    u = d_loo_full - d_loo_ctrl
    X = np.column_stack([dummies, d])
    Q = np.column_stack([dummies, u])
    beta, vcov, _ = _just_identified_iv(y, X, Q, se, cluster)
    return ManyIVFit(
        estimator="ujive", estimate=float(beta[-1]),
        se=float(np.sqrt(vcov[-1, -1])), se_type=se,
        n_instruments=j_used, n_controls=j_used,
        leverage_max=max(h1, h2), n_used=n_used,
        metadata={},
    )
