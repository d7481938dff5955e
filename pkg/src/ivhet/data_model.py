"""Observation-level data container, CSV ingestion, and basic validation.

A Dataset is immutable once built. Ingestion is strict about the binary
columns: the treatment and instrument must be written as "0", "1", "0.0"
or "1.0"; any other non-empty token raises rather than coerces, because a
silently mis-coded arm is the most expensive failure mode downstream. Rows
with a missing or non-numeric value in any mapped column are dropped and
counted instead.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, EmptyDataError

_BINARY_FORMS = {"0": 0, "1": 1, "0.0": 0, "1.0": 1}


@dataclass(frozen=True)
class ColumnMap:
    """Names of the columns that play each role."""

    outcome: str
    treatment: str
    instrument: str
    covariates: tuple[str, ...] = ()
    cluster: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        roles = [self.outcome, self.treatment, self.instrument, *self.covariates]
        if any(not isinstance(r, str) or not r for r in roles):
            raise ConfigError("column names must be non-empty strings")
        if len(set(roles)) != len(roles):
            raise ConfigError(
                "outcome, treatment, instrument and covariates must name distinct columns"
            )

    @classmethod
    def from_json(cls, path: str) -> "ColumnMap":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("column map file must hold a JSON object")
        known = {"outcome", "treatment", "instrument", "covariates", "cluster"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown keys in column map file: {sorted(extra)}")
        try:
            return cls(
                outcome=raw["outcome"],
                treatment=raw["treatment"],
                instrument=raw["instrument"],
                covariates=tuple(raw.get("covariates") or ()),
                cluster=raw.get("cluster"),
            )
        except KeyError as exc:
            raise ConfigError(f"column map file is missing key {exc}") from exc


@dataclass(frozen=True)
class Dataset:
    """Aligned observation arrays. All arrays share length n >= 2."""

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = ()
    cluster: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        d = np.ascontiguousarray(np.asarray(self.d, dtype=np.int64))
        z = np.ascontiguousarray(np.asarray(self.z, dtype=np.int64))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DomainError("covariate matrix must be two dimensional")
        n = y.shape[0]
        if n < 2:
            raise DomainError("a dataset needs at least 2 rows")
        if d.shape != (n,) or z.shape != (n,) or x.shape[0] != n:
            raise DomainError("column lengths differ")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
            raise DomainError("outcome and covariates must be finite")
        if not np.isin(d, (0, 1)).all():
            raise DomainError("treatment takes values outside {0, 1}")
        if not np.isin(z, (0, 1)).all():
            raise DomainError("instrument takes values outside {0, 1}")
        names = tuple(self.covariate_names)
        if not names:
            names = tuple(f"x{i + 1}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DomainError("covariate_names length does not match x")
        cluster = self.cluster
        if cluster is not None:
            cluster = np.ascontiguousarray(np.asarray(cluster, dtype=np.int64))
            if cluster.shape != (n,):
                raise DomainError("cluster column length differs")
            cluster.setflags(write=False)
        for arr in (y, d, z, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "cluster", cluster)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def subset(self, mask: np.ndarray) -> "Dataset":
        """New Dataset holding the rows selected by a boolean mask."""
        return Dataset(
            y=self.y[mask],
            d=self.d[mask],
            z=self.z[mask],
            x=self.x[mask],
            covariate_names=self.covariate_names,
            cluster=None if self.cluster is None else self.cluster[mask],
            dropped=self.dropped,
        )


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    errors: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "errors": list(self.errors),
            "warnings": list(self.warnings),
        }


def _parse_binary(token: str, column: str):
    token = token.strip()
    if not token:
        return None
    try:
        return _BINARY_FORMS[token]
    except KeyError:
        raise DomainError(
            f"column '{column}' holds '{token}'; only 0/1 (or 0.0/1.0) are accepted"
        ) from None


def _parse_real(token: str):
    token = token.strip()
    if not token:
        return None
    try:
        value = float(token)
    except ValueError:
        return None
    if not np.isfinite(value):
        return None
    return value


def load_dataset(path: str, cmap: ColumnMap) -> Dataset:
    """Read a comma-delimited UTF-8 file with a header row into a Dataset.

    Rows with a missing or unparseable value in any mapped column are
    dropped; the count lands in Dataset.dropped. Cluster labels may be
    arbitrary strings and are recoded to integers in order of first
    appearance.
    """
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        positions = {}
        wanted = [cmap.outcome, cmap.treatment, cmap.instrument, *cmap.covariates]
        if cmap.cluster is not None:
            wanted.append(cmap.cluster)
        for name in wanted:
            try:
                positions[name] = header.index(name)
            except ValueError:
                raise ConfigError(f"column '{name}' not found in {path}") from None

        ys, ds, zs = [], [], []
        xs: list[list[float]] = []
        clusters: list[str] = []
        raw_rows = 0
        dropped = 0
        max_pos = max(positions.values())
        for row in reader:
            if not row:
                continue
            raw_rows += 1
            if len(row) <= max_pos:
                dropped += 1
                continue
            y = _parse_real(row[positions[cmap.outcome]])
            d = _parse_binary(row[positions[cmap.treatment]], cmap.treatment)
            z = _parse_binary(row[positions[cmap.instrument]], cmap.instrument)
            covs = [_parse_real(row[positions[c]]) for c in cmap.covariates]
            label = None
            if cmap.cluster is not None:
                label = row[positions[cmap.cluster]].strip()
                if not label:
                    dropped += 1
                    continue
            if y is None or d is None or z is None or any(v is None for v in covs):
                dropped += 1
                continue
            ys.append(y)
            ds.append(d)
            zs.append(z)
            xs.append(covs)
            if label is not None:
                clusters.append(label)

    if not ys:
        raise EmptyDataError(f"no usable rows in {path}")
    if len(ys) < 2:
        raise EmptyDataError(f"only {len(ys)} usable row in {path}; need at least 2")

    cluster_codes = None
    if cmap.cluster is not None:
        seen: dict[str, int] = {}
        cluster_codes = np.array([seen.setdefault(c, len(seen)) for c in clusters],
                                 dtype=np.int64)

    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        x = np.empty((len(ys), 0))
    ds_out = Dataset(
        y=np.asarray(ys),
        d=np.asarray(ds),
        z=np.asarray(zs),
        x=x,
        covariate_names=cmap.covariates,
        cluster=cluster_codes,
        dropped=dropped,
    )
    assert ds_out.n + dropped == raw_rows
    return ds_out


def validate(ds: Dataset) -> ValidationReport:
    """Cheap sanity checks run before any estimation."""
    errors = []
    warnings = []
    if ds.z.min() == ds.z.max():
        errors.append("instrument has no variation")
    if ds.d.min() == ds.d.max():
        errors.append("treatment has no variation")
    for j, name in enumerate(ds.covariate_names):
        col = ds.x[:, j]
        if col.size and col.min() == col.max():
            warnings.append(f"covariate '{name}' is constant")
    return ValidationReport(passed=not errors, errors=tuple(errors),
                            warnings=tuple(warnings))
