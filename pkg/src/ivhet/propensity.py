"""Binary index models for the instrument propensity, and the IPW LATE.

fit_binary_index runs a damped Newton iteration expressed as iteratively
reweighted least squares, solving each step as a lstsq problem on the
square-root-weighted design rather than forming normal equations. The
probit score and information use Mills ratios computed from the stable
log-CDF, so extreme indexes do not produce 0/0.

ipw_late is the Hajek (self-normalized) version of the abadie-style
kappa estimand: each of the four arm means E[y|z], E[d|z] is a weighted
mean with weights 1/phat or 1/(1-phat), and the estimate is the ratio of
the reweighted contrasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .data_model import Dataset
from .errors import (
    ConvergenceError,
    DomainError,
    IdentificationError,
    SeparationError,
    TrimError,
)
from .regression import ols, screen_columns
from .special import normal_cdf, normal_log_cdf, normal_pdf

LINKS = ("logit", "probit", "linear")

_MAX_ABS_COEF = 30.0
_SCORE_TOL = 1e-8  # per observation: the gate on the summed score is n times this
_LL_RTOL = 1e-10


@dataclass(frozen=True)
class PropensityFit:
    link: str
    coefficients: np.ndarray
    index: np.ndarray
    phat: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    intercept_added: bool
    phat_in_unit: bool
    _design: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.phat.shape[0]


def _logit_parts(eta: np.ndarray, z: np.ndarray):
    # log p = -log(1 + e^-eta), log 1-p = -log(1 + e^eta)
    p = 1.0 / (1.0 + np.exp(-eta))
    ll = float(np.sum(z * eta - np.logaddexp(0.0, eta)))
    u = z - p
    w = p * (1.0 - p)
    return ll, u, w, p


def _probit_parts(eta: np.ndarray, z: np.ndarray):
    log_p = normal_log_cdf(eta)
    log_1mp = normal_log_cdf(-eta)
    ll = float(np.sum(z * log_p + (1.0 - z) * log_1mp))
    phi = normal_pdf(eta)
    # Mills ratios phi/Phi and phi/(1-Phi) via the log CDF; stable in both tails
    mills_p = np.exp(np.log(phi, out=np.full_like(eta, -np.inf), where=phi > 0) - log_p)
    mills_1mp = np.exp(np.log(phi, out=np.full_like(eta, -np.inf), where=phi > 0) - log_1mp)
    u = z * mills_p - (1.0 - z) * mills_1mp
    w = mills_p * mills_1mp
    p = normal_cdf(eta)
    return ll, u, w, p


def _needs_intercept(X: np.ndarray) -> bool:
    if X.size == 0:
        return True
    ones = np.ones(X.shape[0])
    coef, _, _, _ = np.linalg.lstsq(X, ones, rcond=None)
    return not np.allclose(X @ coef, ones, atol=1e-8)


def fit_binary_index(
    z: np.ndarray,
    X: np.ndarray,
    link: str = "logit",
    max_iter: int = 100,
    start: np.ndarray | None = None,
) -> PropensityFit:
    """Fit P(z=1|x) = G(x'b) by maximum likelihood (or OLS for linear G)."""
    if link not in LINKS:
        raise DomainError(f"unknown link '{link}'; choose from {LINKS}")
    z = np.asarray(z, dtype=np.float64).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] != z.shape[0]:
        X = X.T
    if X.shape[0] != z.shape[0]:
        raise DomainError("design and response have different lengths")
    if not np.isin(z, (0.0, 1.0)).all():
        raise DomainError("binary index models need a 0/1 response")

    intercept_added = _needs_intercept(X)
    if intercept_added:
        X = np.column_stack([np.ones(z.shape[0]), X]) if X.size else np.ones((z.shape[0], 1))

    kept, _ = screen_columns(X)
    X = X[:, kept]
    n, k = X.shape

    if link == "linear":
        fit = ols(z, X, se_type="hc0")
        phat_raw = fit.fitted
        inside = bool((phat_raw > 0.0).all() and (phat_raw < 1.0).all())
        eps = 1.0 / (2.0 * n)
        phat = np.clip(phat_raw, eps, 1.0 - eps)
        return PropensityFit(
            link="linear", coefficients=fit.coefficients, index=phat_raw,
            phat=phat, converged=True, iterations=0, loglik=float("nan"),
            intercept_added=intercept_added, phat_in_unit=inside, _design=X,
        )

    parts = _logit_parts if link == "logit" else _probit_parts

    if start is not None and start.shape[0] == k:
        beta = start.astype(np.float64).copy()
    else:
        beta = np.zeros(k)
    eta = X @ beta
    ll, u, w, p = parts(eta, z)
    ll_path = [ll]
    converged = False
    it = 0
    # the score sums over observations, so its tolerance must scale with n;
    # likewise a step is "no worse" only relative to the loglik's own size
    score_gate = _SCORE_TOL * n
    ll_noise = 1e-12 * (1.0 + abs(ll))
    for it in range(1, max_iter + 1):
        score = X.T @ u
        if np.max(np.abs(score)) < score_gate:
            converged = True
            it -= 1
            break
        sw = np.sqrt(np.maximum(w, 1e-12))
        # Newton step: (X'WX) delta = X'u, solved as lstsq on the weighted design
        delta, _, rank, _ = np.linalg.lstsq(X * sw[:, None], u / sw, rcond=None)
        step = 1.0
        improved = False
        for _ in range(30):
            cand = beta + step * delta
            ll_new, u_new, w_new, p_new = parts(X @ cand, z)
            if ll_new > ll - ll_noise:
                beta, ll, u, w, p = cand, ll_new, u_new, w_new, p_new
                improved = True
                break
            step *= 0.5
        if not improved:
            # cannot move uphill: either converged flat or numerically stuck
            if np.max(np.abs(X.T @ u)) < score_gate * 10:
                converged = True
                break
            raise ConvergenceError(
                f"{link} fit stalled after {it} iterations "
                f"(loglik {ll:.6g}, max score {np.max(np.abs(X.T @ u)):.3g})"
            )
        ll_noise = 1e-12 * (1.0 + abs(ll))
        ll_path.append(ll)
        if np.max(np.abs(beta)) > _MAX_ABS_COEF and ll_path[-1] > ll_path[-2]:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(
                f"{link} fit is diverging (|coefficient {j}| > {_MAX_ABS_COEF:g} "
                "with the likelihood still improving); the response is likely "
                "perfectly separated by the design"
            )
        if abs(ll_path[-1] - ll_path[-2]) < _LL_RTOL * (abs(ll_path[-2]) + 1e-12):
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"{link} fit did not converge in {max_iter} iterations "
            f"(last loglik {ll:.6g})"
        )

    eps = np.finfo(np.float64).tiny
    phat = np.clip(p, eps, 1.0 - eps)
    return PropensityFit(
        link=link, coefficients=beta, index=X @ beta, phat=phat,
        converged=True, iterations=it, loglik=ll,
        intercept_added=intercept_added, phat_in_unit=True, _design=X,
    )


@dataclass(frozen=True)
class IPWReport:
    estimate: float
    se: float
    se_type: str
    n_used: int
    n_trimmed: int
    link: str
    trim: tuple[float, float]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimand": "beta_late_ipw",
            "estimate": self.estimate,
            "se": self.se,
            "se_type": self.se_type,
            "n_used": self.n_used,
            "n_trimmed": self.n_trimmed,
            "link": self.link,
            "trim": list(self.trim),
            **self.metadata,
        }


def _hajek_arms(y, d, z, phat):
    """Weighted means of y and d in each instrument arm; returns means and weights."""
    w1 = z / phat
    w0 = (1.0 - z) / (1.0 - phat)
    s1, s0 = w1.sum(), w0.sum()
    if s1 <= 0 or s0 <= 0:
        raise IdentificationError("an instrument arm is empty after trimming")
    my1 = float(np.sum(w1 * y) / s1)
    my0 = float(np.sum(w0 * y) / s0)
    md1 = float(np.sum(w1 * d) / s1)
    md0 = float(np.sum(w0 * d) / s0)
    return my1, my0, md1, md0, w1, w0


def ipw_late(
    ds: Dataset,
    pf: PropensityFit,
    trim: tuple[float, float] = (0.01, 0.99),
    se: str = "delta",
    reps: int = 500,
    seed: int = 0,
) -> IPWReport:
    """Propensity-reweighted Wald estimate with trimming.

    The delta-method standard error treats phat as fixed. se="bootstrap"
    refits the propensity inside each resample instead; resamples where the
    refit fails or the denominator vanishes are skipped and counted.
    """
    lo, hi = float(trim[0]), float(trim[1])
    if not 0.0 <= lo < hi <= 1.0:
        raise DomainError("trim bounds must satisfy 0 <= lo < hi <= 1")
    if pf.phat.shape[0] != ds.n:
        raise DomainError("propensity fit and dataset have different lengths")

    keep = (pf.phat >= lo) & (pf.phat <= hi)
    n_used = int(keep.sum())
    n_trimmed = ds.n - n_used
    if n_used < 2:
        raise TrimError(
            f"trimming to [{lo:g}, {hi:g}] keeps {n_used} of {ds.n} rows; "
            "widen the window or inspect the propensity fit"
        )
    y = ds.y[keep]
    d = ds.d[keep].astype(np.float64)
    z = ds.z[keep].astype(np.float64)
    phat = pf.phat[keep]

    my1, my0, md1, md0, w1, w0 = _hajek_arms(y, d, z, phat)
    den = md1 - md0
    if den == 0.0 or not np.isfinite(den):
        raise IdentificationError(
            "reweighted first stage is zero; the IPW contrast is undefined"
        )
    est = (my1 - my0) / den

    meta = {"arm_means": {"y_z1": my1, "y_z0": my0, "d_z1": md1, "d_z0": md0}}

    if se == "delta":
        # influence function of a ratio of Hajek contrasts, phat held fixed
        n = n_used
        s1, s0 = w1.sum(), w0.sum()
        psi_num = w1 * (y - my1) / (s1 / n) - w0 * (y - my0) / (s0 / n)
        psi_den = w1 * (d - md1) / (s1 / n) - w0 * (d - md0) / (s0 / n)
        infl = (psi_num - est * psi_den) / den
        if ds.cluster is not None:
            cl = ds.cluster[keep]
            _, codes = np.unique(cl, return_inverse=True)
            g = codes.max() + 1
            sums = np.bincount(codes, weights=infl, minlength=g)
            var = float(np.sum(sums**2)) / n**2 * (g / max(g - 1, 1))
            se_type = "cluster"
        else:
            var = float(np.sum(infl**2)) / n**2
            se_type = "delta"
        return IPWReport(est, float(np.sqrt(var)), se_type, n_used, n_trimmed,
                         pf.link, (lo, hi), meta)

    if se != "bootstrap":
        raise DomainError("se must be 'delta' or 'bootstrap'")

    # nonparametric bootstrap over rows (or clusters), refitting phat each time
    children = np.random.SeedSequence(seed).spawn(reps)
    X_full = pf._design
    ests = []
    failures = 0
    if ds.cluster is not None:
        labels, codes = np.unique(ds.cluster, return_inverse=True)
        groups = [np.flatnonzero(codes == g) for g in range(len(labels))]
    for child in children:
        rng = np.random.default_rng(child)
        if ds.cluster is not None:
            pick = rng.integers(0, len(groups), size=len(groups))
            idx = np.concatenate([groups[g] for g in pick])
        else:
            idx = rng.integers(0, ds.n, size=ds.n)
        try:
            pf_b = fit_binary_index(ds.z[idx], X_full[idx], link=pf.link,
                                    start=pf.coefficients if pf.link != "linear" else None)
            keep_b = (pf_b.phat >= lo) & (pf_b.phat <= hi)
            if keep_b.sum() < 2:
                raise TrimError("resample fully trimmed")
            yb = ds.y[idx][keep_b]
            db = ds.d[idx][keep_b].astype(np.float64)
            zb = ds.z[idx][keep_b].astype(np.float64)
            m1, m0, t1, t0, _, _ = _hajek_arms(yb, db, zb, pf_b.phat[keep_b])
            den_b = t1 - t0
            if den_b == 0.0 or not np.isfinite(den_b):
                raise IdentificationError("zero first stage in resample")
            ests.append((m1 - m0) / den_b)
        except (ConvergenceError, SeparationError, TrimError,
                IdentificationError, DomainError):
            failures += 1
    if len(ests) < 2:
        raise IdentificationError(
            f"bootstrap failed in {failures} of {reps} resamples; "
            "no variance estimate available"
        )
    se_val = float(np.std(ests, ddof=1))
    meta["bootstrap"] = {"reps": reps, "completed": len(ests),
                         "failed": failures, "seed": seed}
    return IPWReport(est, se_val, "bootstrap", n_used, n_trimmed,
                     pf.link, (lo, hi), meta)
