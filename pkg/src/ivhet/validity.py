"""Testable implications of instrument validity.

Every test here has the same shape: a family of moments that must all be
nonnegative when the instrument is randomly assigned, excluded from the
outcome equation, and weakly encouraging for everyone. Each moment is a
difference of two arm means. The statistic is the largest studentized
violation, and its null distribution is simulated with a Rademacher
multiplier bootstrap of the recentered moment estimates, so the p-value
accounts for max-over-many-moments selection.

Three families are provided:

* bp_test: for each candidate outcome interval A, the arrival rates
  P(Y in A, D = 1) and P(Y in A, D = 0) can only move one way when the
  instrument switches on. Works with or without covariate cells.
* mw_test: within rows whose outcome falls in A (and within a cell), the
  treated share must not fall when the instrument switches on.
* first_stage_nonneg_test: the cell-level first stage cannot be negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import CellTable
from .data_model import Dataset
from .errors import ConfigError, DomainError, UndefinedTestError

_SIGMA_FLOOR = 1e-6
_MAX_SUPPORT = 12


@dataclass(frozen=True)
class OutcomeSetPartition:
    """Candidate outcome sets built from cut points.

    cut_points must be strictly increasing with at least two entries; the
    candidate sets are the half-open intervals [c_a, c_b) over all pairs
    a < b. The widest candidate therefore spans the whole grid.
    """

    cut_points: tuple[float, ...]

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cut_points)
        if len(cuts) < 2:
            raise ConfigError("an outcome partition needs at least two cut points")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigError("cut points must be strictly increasing")
        object.__setattr__(self, "cut_points", cuts)

    @property
    def n_candidates(self) -> int:
        m = len(self.cut_points)
        return m * (m - 1) // 2

    def candidates(self):
        cuts = self.cut_points
        for a in range(len(cuts) - 1):
            for b in range(a + 1, len(cuts)):
                yield cuts[a], cuts[b], f"[{cuts[a]:g}, {cuts[b]:g})"

    def ensure_covers(self, y: np.ndarray) -> "OutcomeSetPartition":
        """Extend the grid so the widest candidate contains every outcome."""
        cuts = list(self.cut_points)
        ymin, ymax = float(np.min(y)), float(np.max(y))
        if ymin < cuts[0]:
            cuts.insert(0, ymin)
        if ymax >= cuts[-1]:
            cuts.append(np.nextafter(ymax, np.inf))
        return OutcomeSetPartition(tuple(cuts))

    @classmethod
    def from_support(cls, y: np.ndarray) -> "OutcomeSetPartition":
        vals = np.unique(np.asarray(y, dtype=np.float64))
        if vals.size < 1:
            raise DomainError("no outcome values to partition")
        cuts = list(vals) + [np.nextafter(float(vals[-1]), np.inf)]
        if len(cuts) < 2:
            cuts.append(np.nextafter(cuts[-1], np.inf))
        return cls(tuple(cuts))

    @classmethod
    def from_deciles(cls, y: np.ndarray) -> "OutcomeSetPartition":
        y = np.asarray(y, dtype=np.float64)
        qs = np.quantile(y, np.linspace(0.0, 1.0, 11))
        cuts = list(np.unique(qs))
        cuts[-1] = np.nextafter(float(np.max(y)), np.inf)
        if len(cuts) < 2:
            cuts = [float(np.min(y)), np.nextafter(float(np.max(y)), np.inf)]
        return cls(tuple(cuts))

    @classmethod
    def auto(cls, y: np.ndarray) -> "OutcomeSetPartition":
        if np.unique(y).size <= _MAX_SUPPORT:
            return cls.from_support(y)
        return cls.from_deciles(y)


@dataclass(frozen=True)
class ValidityReport:
    test: str
    statistic: float
    p_value: float
    worst_set: str
    bootstrap_reps: int
    seed: int
    n_moments: int
    n_skipped: int
    method: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "worst_set": self.worst_set,
            "bootstrap_reps": self.bootstrap_reps,
            "seed": self.seed,
            "n_moments": self.n_moments,
            "n_skipped": self.n_skipped,
            **self.method,
        }


def _arm_stats(values: np.ndarray, idx: np.ndarray):
    v = values[idx]
    n = v.shape[0]
    mean = float(v.mean())
    var = float(v.var(ddof=1)) if n > 1 else 0.0
    return mean, var, n


def _max_violation_test(test_name, n_rows, moments, reps, seed, method):
    """Shared engine: moments is a list of (idx_a, idx_b, values, label).

    Each moment is the null hypothesis mean(values[idx_a]) >=
    mean(values[idx_b]). Moments whose arms are empty are skipped and
    counted; if nothing is left the test is undefined.
    """
    kept = []
    skipped = 0
    for idx_a, idx_b, values, label in moments:
        if idx_a.size == 0 or idx_b.size == 0:
            skipped += 1
            continue
        kept.append((idx_a, idx_b, values, label))
    if not kept:
        raise UndefinedTestError(
            f"{test_name}: every moment had an empty arm; nothing to test"
        )

    m = len(kept)
    mhat = np.empty(m)
    contrib = np.zeros((n_rows, m))
    labels = []
    for k, (idx_a, idx_b, values, label) in enumerate(kept):
        mean_a, var_a, n_a = _arm_stats(values, idx_a)
        mean_b, var_b, n_b = _arm_stats(values, idx_b)
        sigma = np.sqrt(var_a / n_a + var_b / n_b)
        sigma = max(sigma, _SIGMA_FLOOR)
        mhat[k] = (mean_a - mean_b) / sigma
        contrib[idx_a, k] += (values[idx_a] - mean_a) / (n_a * sigma)
        contrib[idx_b, k] -= (values[idx_b] - mean_b) / (n_b * sigma)
        labels.append(label)

    stat = float(np.max(-mhat))
    worst = labels[int(np.argmax(-mhat))]

    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(reps, n_rows)) * 2.0 - 1.0
    sims = signs @ contrib
    t_star = np.max(-sims, axis=1)
    p = float((1 + np.sum(t_star >= stat)) / (reps + 1))

    return ValidityReport(
        test=test_name, statistic=stat, p_value=p, worst_set=worst,
        bootstrap_reps=reps, seed=seed, n_moments=m, n_skipped=skipped,
        method=method,
    )


def _cell_groups(ds: Dataset, ct: CellTable | None):
    """(label, row-index) pairs: the retained cells, or everything at once."""
    if ct is None:
        return [("all", np.arange(ds.n))]
    groups = []
    for j in range(ct.n_cells):
        if ct.degenerate[j]:
            continue
        groups.append((ct.key_label(j), np.flatnonzero(ct.assignments == j)))
    return groups


def bp_test(
    ds: Dataset,
    ct: CellTable | None = None,
    partition: OutcomeSetPartition | None = None,
    reps: int = 999,
    seed: int = 0,
) -> ValidityReport:
    """Joint density inequalities over candidate outcome sets.

    For each candidate set A (and each retained cell, when a cell table is
    given) the tested moments are

        P(Y in A, D = 1 | Z = 1) - P(Y in A, D = 1 | Z = 0) >= 0
        P(Y in A, D = 0 | Z = 0) - P(Y in A, D = 0 | Z = 1) >= 0
    """
    if partition is None:
        partition = OutcomeSetPartition.auto(ds.y)
    partition = partition.ensure_covers(ds.y)
    moments = []
    for cell_label, rows in _cell_groups(ds, ct):
        z_row = ds.z[rows]
        idx_z1 = rows[z_row == 1]
        idx_z0 = rows[z_row == 0]
        for lo, hi, set_label in partition.candidates():
            in_a = (ds.y >= lo) & (ds.y < hi)
            f1 = (in_a & (ds.d == 1)).astype(np.float64)
            f0 = (in_a & (ds.d == 0)).astype(np.float64)
            tag = set_label if cell_label == "all" else f"{set_label} | {cell_label}"
            moments.append((idx_z1, idx_z0, f1, f"{tag}, treated"))
            moments.append((idx_z0, idx_z1, f0, f"{tag}, untreated"))
    return _max_violation_test(
        "bp_test", ds.n, moments, reps, seed,
        {"cut_points": list(partition.cut_points),
         "conditioning": "cells" if ct is not None else "none"},
    )


def mw_test(
    ds: Dataset,
    ct: CellTable | None = None,
    partition: OutcomeSetPartition | None = None,
    reps: int = 999,
    seed: int = 0,
) -> ValidityReport:
    """Treated-share monotonicity within outcome sets.

    Conditional on the outcome landing in a candidate set A (and on the
    cell), switching the instrument on cannot lower the share of treated
    rows. Candidate sets that are empty in one arm are skipped.
    """
    if partition is None:
        partition = OutcomeSetPartition.auto(ds.y)
    partition = partition.ensure_covers(ds.y)
    d_val = ds.d.astype(np.float64)
    moments = []
    for cell_label, rows in _cell_groups(ds, ct):
        z_row = ds.z[rows]
        for lo, hi, set_label in partition.candidates():
            in_a = (ds.y[rows] >= lo) & (ds.y[rows] < hi)
            idx_a = rows[in_a & (z_row == 1)]
            idx_b = rows[in_a & (z_row == 0)]
            tag = set_label if cell_label == "all" else f"{set_label} | {cell_label}"
            moments.append((idx_a, idx_b, d_val, tag))
    return _max_violation_test(
        "mw_test", ds.n, moments, reps, seed,
        {"cut_points": list(partition.cut_points),
         "conditioning": "cells" if ct is not None else "none"},
    )


def first_stage_nonneg_test(
    ct: CellTable,
    reps: int = 999,
    seed: int = 0,
) -> ValidityReport:
    """Cell-level first stages must be nonnegative under monotonicity."""
    ds = ct.source
    d_val = ds.d.astype(np.float64)
    moments = []
    for cell_label, rows in _cell_groups(ds, ct):
        z_row = ds.z[rows]
        moments.append((rows[z_row == 1], rows[z_row == 0], d_val, cell_label))
    return _max_violation_test(
        "first_stage_nonneg_test", ds.n, moments, reps, seed,
        {"conditioning": "cells"},
    )
