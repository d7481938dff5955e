"""Least squares and two stage least squares with robust covariances.

Everything is solved through orthogonal decompositions. Collinear columns
are screened out greedily in design order: a column is dropped when, after
projecting out the columns already kept, less than 1e-10 of its norm
remains. Dropped columns keep a zero coefficient and a zero row/column in
the covariance, and their indices are reported, so nothing disappears
silently. The screen prefers earlier columns on ties, which makes results
independent of how a caller happens to have ordered redundant columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import DomainError, EmptyDataError, IdentificationError, RankError

PIVOT_RTOL = 1e-10

SE_TYPES = ("classical", "hc0", "hc1", "cluster")


@dataclass(frozen=True)
class RegressionFit:
    """Result of an OLS or 2SLS fit.

    coefficients has one entry per column of the original design, zeros in
    the positions listed in dropped. endog_index is the position of the
    endogenous regressor's coefficient for 2SLS fits, None for OLS.
    """

    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    vcov: np.ndarray
    df_resid: int
    rank: int
    se_type: str
    dropped: tuple[int, ...] = ()
    endog_index: int | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))


def screen_columns(X: np.ndarray, rtol: float = PIVOT_RTOL):
    """Greedy design-order rank screen.

    Returns (kept, Q) where kept indexes the retained columns and Q is an
    orthonormal basis for their span. Reorthogonalizing twice keeps the
    basis clean enough that the rtol decision is stable.
    """
    X = np.asarray(X, dtype=np.float64)
    n, k = X.shape
    kept: list[int] = []
    Q = np.empty((n, 0))
    for j in range(k):
        col = X[:, j]
        norm0 = np.linalg.norm(col)
        if norm0 == 0.0:
            continue
        v = col.copy()
        for _ in range(2):
            v -= Q @ (Q.T @ v)
        norm_v = np.linalg.norm(v)
        if norm_v > rtol * norm0:
            Q = np.column_stack([Q, v / norm_v])
            kept.append(j)
    return kept, Q


def _check_se_args(se_type: str, cluster, n: int):
    if se_type not in SE_TYPES:
        raise DomainError(f"unknown se_type '{se_type}'; choose from {SE_TYPES}")
    if se_type == "cluster":
        if cluster is None:
            raise DomainError("cluster se requested but no cluster labels given")
        cluster = np.asarray(cluster)
        if cluster.shape != (n,):
            raise DomainError("cluster labels must align with the rows")
    return cluster


def _sandwich(design: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray,
              se_type: str, cluster, df_resid: int) -> np.ndarray:
    """Covariance of the coefficients for the kept columns."""
    n, k = design.shape
    if se_type == "classical":
        if df_resid <= 0:
            raise DomainError("no residual degrees of freedom for classical se")
        sigma2 = float(resid @ resid) / df_resid
        return sigma2 * xtx_inv
    if se_type in ("hc0", "hc1"):
        scores = design * resid[:, None]
        meat = scores.T @ scores
        scale = 1.0
        if se_type == "hc1":
            if df_resid <= 0:
                raise DomainError("no residual degrees of freedom for hc1 se")
            scale = n / df_resid
        return scale * xtx_inv @ meat @ xtx_inv
    # cluster
    if df_resid <= 0:
        raise DomainError("no residual degrees of freedom for cluster se")
    scores = design * resid[:, None]
    _, inverse = np.unique(cluster, return_inverse=True)
    g = inverse.max() + 1
    if g < 2:
        raise DomainError("cluster se needs at least 2 clusters")
    sums = np.zeros((g, k))
    np.add.at(sums, inverse, scores)
    meat = sums.T @ sums
    correction = (g / (g - 1.0)) * ((n - 1.0) / df_resid)
    return correction * xtx_inv @ meat @ xtx_inv


def _solve_ols(y: np.ndarray, Xk: np.ndarray):
    """Coefficients and (X'X)^-1 for a full-rank design via thin QR."""
    Q, R = qr(Xk, mode="economic")
    coef = solve_triangular(R, Q.T @ y)
    rinv = solve_triangular(R, np.eye(R.shape[0]))
    xtx_inv = rinv @ rinv.T
    return coef, xtx_inv


def _embed(values: np.ndarray, kept: list[int], k: int) -> np.ndarray:
    out = np.zeros(k)
    out[kept] = values
    return out


def _embed_matrix(vk: np.ndarray, kept: list[int], k: int) -> np.ndarray:
    out = np.zeros((k, k))
    out[np.ix_(kept, kept)] = vk
    return out


def ols(y, X, se_type: str = "hc1", cluster=None) -> RegressionFit:
    """Minimum-norm least squares of y on the columns of X."""
    y = np.asarray(y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n == 0:
        raise EmptyDataError("no rows to fit")
    if y.shape[0] != n:
        raise DomainError("y and X disagree on the number of rows")
    cluster = _check_se_args(se_type, cluster, n)

    kept, _ = screen_columns(X)
    if not kept:
        raise RankError("all design columns are collinear or zero")
    Xk = X[:, kept]
    coef_k, xtx_inv = _solve_ols(y, Xk)
    fitted = Xk @ coef_k
    resid = y - fitted
    rank = len(kept)
    df_resid = n - rank
    vcov_k = _sandwich(Xk, resid, xtx_inv, se_type, cluster, df_resid)

    dropped = tuple(j for j in range(k) if j not in set(kept))
    return RegressionFit(
        coefficients=_embed(coef_k, kept, k),
        fitted=fitted,
        residuals=resid,
        vcov=_embed_matrix(vcov_k, kept, k),
        df_resid=df_resid,
        rank=rank,
        se_type=se_type,
        dropped=dropped,
    )


def tsls(y, X_exog, d_endog, Z_inst, se_type: str = "hc1", cluster=None) -> RegressionFit:
    """2SLS of y on [X_exog, d_endog] with instruments [X_exog, Z_inst].

    One endogenous regressor, one or more excluded instruments. The
    coefficient vector covers the kept exogenous columns followed by the
    endogenous coefficient in the last position (endog_index). Residuals
    are structural, y minus the original regressors times the estimate, and
    the sandwich uses the projected design, so the reported covariance is
    the usual 2SLS one.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    d = np.asarray(d_endog, dtype=np.float64).ravel()
    X_exog = np.asarray(X_exog, dtype=np.float64)
    if X_exog.ndim == 1:
        X_exog = X_exog[:, None]
    Z_inst = np.asarray(Z_inst, dtype=np.float64)
    if Z_inst.ndim == 1:
        Z_inst = Z_inst[:, None]
    n = y.shape[0]
    if n == 0:
        raise EmptyDataError("no rows to fit")
    if d.shape[0] != n or X_exog.shape[0] != n or Z_inst.shape[0] != n:
        raise DomainError("rows of y, X_exog, d_endog and Z_inst disagree")
    cluster = _check_se_args(se_type, cluster, n)

    kept_x, _ = screen_columns(X_exog)
    Xe = X_exog[:, kept_x]
    k_exog_all = X_exog.shape[1]

    # first stage on the full instrument set
    Zfull = np.column_stack([Xe, Z_inst])
    kept_z, _ = screen_columns(Zfull)
    if len(kept_z) <= len(kept_x):
        raise IdentificationError("no instrument survives the collinearity screen")
    fs_coef, _ = _solve_ols(d, Zfull[:, kept_z])
    dhat = Zfull[:, kept_z] @ fs_coef

    design = np.column_stack([Xe, dhat])
    kept2, _ = screen_columns(design)
    if kept2 != list(range(design.shape[1])):
        raise IdentificationError(
            "projected treatment is collinear with the exogenous columns "
            "(zero first stage)"
        )
    coef, xtx_inv = _solve_ols(y, design)
    structural = np.column_stack([Xe, d])
    fitted = structural @ coef
    resid = y - fitted
    rank = design.shape[1]
    df_resid = n - rank
    vcov = _sandwich(design, resid, xtx_inv, se_type, cluster, df_resid)

    # re-embed the exogenous block so callers can index by original column
    k_total = k_exog_all + 1
    kept_full = kept_x + [k_exog_all]
    dropped = tuple(j for j in range(k_exog_all) if j not in set(kept_x))
    return RegressionFit(
        coefficients=_embed(coef, kept_full, k_total),
        fitted=fitted,
        residuals=resid,
        vcov=_embed_matrix(vcov, kept_full, k_total),
        df_resid=df_resid,
        rank=rank,
        se_type=se_type,
        dropped=dropped,
        endog_index=k_total - 1,
    )


def hat_diagonals(X) -> np.ndarray:
    """Diagonal of the projection matrix X (X'X)^-1 X'.

    X must have full column rank; a rank-deficient design raises RankError
    because leave-one-out algebra downstream would silently lose meaning.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n == 0:
        raise EmptyDataError("no rows")
    kept, Q = screen_columns(X)
    if len(kept) != k:
        raise RankError("design is rank deficient; drop redundant columns first")
    return np.einsum("ij,ij->i", Q, Q)
