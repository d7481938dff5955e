"""Command line interface.

Subcommands mirror the library: estimate, weights, reset, validity,
manyiv, simulate. Every subcommand can emit either a human-readable text
block or, with --json, a machine-readable payload with full-precision
numbers. Exit code 2 flags configuration problems (bad flags, bad column
maps), exit code 1 flags data problems (unreadable values, degenerate
designs), and 0 is success.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .cells import (
    DEFAULT_MIN_ARM_SIZE,
    DEFAULT_MIN_CELL_SIZE,
    build_cells,
    cell_stats_table,
)
from .data_model import ColumnMap, Dataset, load_dataset, validate
from .dgp import DGPSpec, brute_force_late, brute_force_weights, generate
from .errors import ConfigError, DataError, DomainError, LeverageError
from .estimators import (
    decompose_weights,
    estimate_beta_ai,
    estimate_beta_iv,
    estimate_beta_late_saturated,
)
from .many_iv import jive, many_tsls, ujive
from .propensity import fit_binary_index, ipw_late
from .regression import tsls
from .spec_tests import reset_binary_index, reset_linear
from .tables import fmt3, fmtp, format_table, json_safe
from .validity import (
    OutcomeSetPartition,
    bp_test,
    first_stage_nonneg_test,
    mw_test,
)

_MAX_LEVELS = 20


def _add_data_args(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="CSV file with the sample")
    p.add_argument("--config", help="JSON file mapping column roles to names")
    p.add_argument("--outcome", "-y", help="outcome column")
    p.add_argument("--treatment", "-d", help="treatment column (0/1)")
    p.add_argument("--instrument", "-z", help="instrument column (0/1)")
    p.add_argument("--covariates", "-x",
                   help="comma separated covariate columns")
    p.add_argument("--cluster", help="cluster label column")


def _add_cell_args(p: argparse.ArgumentParser):
    p.add_argument("--min-arm", type=int, default=DEFAULT_MIN_ARM_SIZE,
                   help="smallest instrument arm a usable cell may have "
                        f"(default {DEFAULT_MIN_ARM_SIZE})")
    p.add_argument("--min-cell", type=int, default=DEFAULT_MIN_CELL_SIZE,
                   help="smallest usable cell "
                        f"(default {DEFAULT_MIN_CELL_SIZE})")
    p.add_argument("--saturated", choices=("auto", "yes", "no"),
                   default="auto",
                   help="treat covariates as discrete cells (default: auto)")


def _add_output_args(p: argparse.ArgumentParser):
    p.add_argument("--json", action="store_true", help="emit JSON")
    p.add_argument("--output", help="write the report to this file")


def _column_map(args) -> ColumnMap:
    base = {}
    if args.config:
        cmap = ColumnMap.from_json(args.config)
        base = {
            "outcome": cmap.outcome,
            "treatment": cmap.treatment,
            "instrument": cmap.instrument,
            "covariates": cmap.covariates,
            "cluster": cmap.cluster,
        }
    if args.outcome:
        base["outcome"] = args.outcome
    if args.treatment:
        base["treatment"] = args.treatment
    if args.instrument:
        base["instrument"] = args.instrument
    if args.covariates is not None:
        base["covariates"] = tuple(
            c.strip() for c in args.covariates.split(",") if c.strip()
        )
    if args.cluster:
        base["cluster"] = args.cluster
    missing = [k for k in ("outcome", "treatment", "instrument")
               if not base.get(k)]
    if missing:
        raise ConfigError(
            f"missing column roles: {', '.join(missing)}; pass them as flags "
            "or in a --config file"
        )
    return ColumnMap(**base)


def _load(args):
    cmap = _column_map(args)
    ds = load_dataset(args.input, cmap)
    report = validate(ds)
    if report.errors:
        raise DataError("; ".join(report.errors))
    return ds, cmap, list(report.warnings)


def _is_saturated(ds: Dataset) -> bool:
    if ds.k == 0:
        return True
    for j in range(ds.k):
        col = ds.x[:, j]
        if not np.allclose(col, np.round(col), atol=1e-9):
            return False
        if np.unique(col).size > _MAX_LEVELS:
            return False
    n_cells = np.unique(ds.x, axis=0).shape[0]
    return n_cells <= max(1, ds.n // 4)


def _want_saturated(args, ds: Dataset, command: str) -> bool:
    if args.saturated == "yes":
        return True
    if args.saturated == "no":
        if command in ("weights", "manyiv"):
            raise ConfigError(
                f"{command} needs discrete covariate cells; "
                "rerun with --saturated yes if the covariates are discrete"
            )
        return False
    auto = _is_saturated(ds)
    if not auto and command in ("weights", "manyiv"):
        raise ConfigError(
            f"{command} needs discrete covariate cells, but the covariates "
            "do not look discrete; rerun with --saturated yes to override"
        )
    return auto


def _design_with_intercept(ds: Dataset) -> np.ndarray:
    return np.column_stack([np.ones(ds.n), ds.x]) if ds.k else np.ones((ds.n, 1))


def _parse_trim(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError("--trim expects two comma separated numbers")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ConfigError(f"--trim could not parse '{text}'") from exc
    return lo, hi


def _parse_powers(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"--powers could not parse '{text}'") from exc


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        out = json.dumps(json_safe(payload), indent=2, sort_keys=True)
    else:
        out = text
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    else:
        print(out)


def _payload(command: str, args, cmap: ColumnMap, warnings, results) -> dict:
    return {
        "command": command,
        "config_echo": {
            "input": args.input,
            "columns": {
                "outcome": cmap.outcome,
                "treatment": cmap.treatment,
                "instrument": cmap.instrument,
                "covariates": list(cmap.covariates),
                "cluster": cmap.cluster,
            },
        },
        "results": results,
        "warnings": list(warnings),
        "version": __version__,
    }


def _estimate_rows(reports) -> str:
    headers = ["estimand", "estimate", "se", "se_type", "n", "cells"]
    rows = []
    for rep in reports:
        d = rep.to_dict()
        rows.append([
            d["estimand"], fmt3(d["estimate"]), fmt3(d["se"]),
            str(d["se_type"]), str(d.get("n_used", "")),
            str(d.get("cells_used", d.get("n_trimmed", ""))),
        ])
    return format_table(headers, rows)


def _cmd_estimate(args) -> int:
    ds, cmap, warnings = _load(args)
    se_type = args.se
    results: dict = {}
    reports = []
    if _want_saturated(args, ds, "estimate"):
        ct = build_cells(ds, min_cell_size=args.min_cell,
                         min_arm_size=args.min_arm)
        warnings.extend(ct.warnings)
        reports = [
            estimate_beta_late_saturated(ct, se_type=se_type),
            estimate_beta_iv(ct, se_type=se_type),
            estimate_beta_ai(ct, se_type=se_type),
        ]
        results["mode"] = "saturated"
        if args.link:
            cell_ids = np.arange(ct.n_cells)
            dummies = (ct.assignments[:, None] == cell_ids[None, :]).astype(float)
            pf = fit_binary_index(ds.z, dummies, link=args.link)
            reports.append(ipw_late(ds, pf, trim=_parse_trim(args.trim)))
    else:
        results["mode"] = "linear"
        X = _design_with_intercept(ds)
        se = se_type or ("cluster" if ds.cluster is not None else "hc1")
        fit = tsls(ds.y, X, ds.d.astype(float), ds.z.astype(float),
                   se_type=se, cluster=ds.cluster)
        idx = fit.endog_index
        from .estimators import EstimateReport
        reports.append(EstimateReport(
            estimand="beta_iv", estimate=float(fit.coefficients[idx]),
            se=float(np.sqrt(fit.vcov[idx, idx])), se_type=se,
            n_used=ds.n, cells_used=0,
            metadata={"estimator": "2sls_linear"},
        ))
        link = args.link or "logit"
        pf = fit_binary_index(ds.z, ds.x, link=link)
        reports.append(ipw_late(ds, pf, trim=_parse_trim(args.trim)))
    results["estimates"] = [rep.to_dict() for rep in reports]
    payload = _payload("estimate", args, cmap, warnings, results)
    text = _estimate_rows(reports)
    if warnings:
        text += "\n" + "\n".join(f"note: {w}" for w in warnings)
    _emit(args, payload, text)
    return 0


def _cmd_weights(args) -> int:
    ds, cmap, warnings = _load(args)
    _want_saturated(args, ds, "weights")
    ct = build_cells(ds, min_cell_size=args.min_cell,
                     min_arm_size=args.min_arm)
    warnings.extend(ct.warnings)
    wt = decompose_weights(ct)
    stats = cell_stats_table(ct, weights=wt)
    reports = [
        estimate_beta_late_saturated(ct, se_type=args.se),
        estimate_beta_iv(ct, se_type=args.se),
        estimate_beta_ai(ct, se_type=args.se),
    ]
    results = {
        "cells": list(stats.records),
        "estimates": [rep.to_dict() for rep in reports],
        "weight_sums": {
            "late": wt.dot("late"), "iv": wt.dot("iv"), "ai": wt.dot("ai"),
        },
    }
    text = stats.to_text() + "\n\n" + _estimate_rows(reports)
    if warnings:
        text += "\n" + "\n".join(f"note: {w}" for w in warnings)
    _emit(args, _payload("weights", args, cmap, warnings, results), text)
    return 0


def _cmd_reset(args) -> int:
    ds, cmap, warnings = _load(args)
    equation = args.equation
    if equation is None:
        equation = "assignment" if args.link else "outcome"
    powers = _parse_powers(args.powers)
    if equation == "outcome":
        X = _design_with_intercept(ds)
        se = args.se or ("cluster" if ds.cluster is not None else "hc1")
        rep = reset_linear(ds.y, X, powers=powers, se_type=se,
                           cluster=ds.cluster)
    else:
        link = args.link or "logit"
        rep = reset_binary_index(ds.z, ds.x if ds.k else np.ones((ds.n, 1)),
                                 link=link, powers=powers)
    d = rep.to_dict()
    text = format_table(
        ["test", "statistic", "df", "p"],
        [[d["test"], fmt3(d["statistic"]),
          "x".join(str(v) for v in d["df"]), fmtp(d["p_value"])]],
    )
    if "note" in d:
        text += f"\nnote: {d['note']}"
    if "error" in d:
        text += f"\nerror: {d['error']}"
    _emit(args, _payload("reset", args, cmap, warnings, {"test": d}), text)
    return 0


def _parse_cuts(text: str, y: np.ndarray) -> OutcomeSetPartition | None:
    if text == "auto":
        return None
    if text == "deciles":
        return OutcomeSetPartition.from_deciles(y)
    if text == "support":
        return OutcomeSetPartition.from_support(y)
    try:
        cuts = tuple(float(c) for c in text.split(",") if c.strip())
    except ValueError as exc:
        raise ConfigError(f"--cuts could not parse '{text}'") from exc
    return OutcomeSetPartition(cuts)


def _cmd_validity(args) -> int:
    ds, cmap, warnings = _load(args)
    partition = _parse_cuts(args.cuts, ds.y)
    saturated = _want_saturated(args, ds, "validity")
    ct = None
    if saturated:
        ct = build_cells(ds, min_cell_size=args.min_cell,
                         min_arm_size=args.min_arm)
        warnings.extend(ct.warnings)
    reports = [bp_test(ds, ct, partition, reps=args.reps, seed=args.seed)]
    if ct is not None:
        reports.append(mw_test(ds, ct, partition, reps=args.reps,
                               seed=args.seed))
        reports.append(first_stage_nonneg_test(ct, reps=args.reps,
                                               seed=args.seed))
    else:
        reports.append(mw_test(ds, None, partition, reps=args.reps,
                               seed=args.seed))
        warnings.append(
            "first stage nonnegativity runs per cell; skipped because the "
            "covariates are not treated as discrete cells"
        )
    results = {"tests": [r.to_dict() for r in reports]}
    rows = [[r.test, fmt3(r.statistic), fmtp(r.p_value), r.worst_set,
             str(r.n_moments), str(r.n_skipped)] for r in reports]
    text = format_table(
        ["test", "statistic", "p", "worst set", "moments", "skipped"], rows)
    if warnings:
        text += "\n" + "\n".join(f"note: {w}" for w in warnings)
    _emit(args, _payload("validity", args, cmap, warnings, results), text)
    return 0


def _cmd_manyiv(args) -> int:
    ds, cmap, warnings = _load(args)
    _want_saturated(args, ds, "manyiv")
    ct = build_cells(ds, min_cell_size=args.min_cell,
                     min_arm_size=args.min_arm)
    warnings.extend(ct.warnings)
    fits = []
    errors = {}
    fits.append(many_tsls(ct, se_type=args.se))
    for fn in (jive, ujive):
        try:
            fits.append(fn(ct, se_type=args.se))
        except LeverageError as exc:
            errors[fn.__name__] = str(exc)
    results = {"estimates": [f.to_dict() for f in fits], "errors": errors}
    rows = [[f.estimator, fmt3(f.estimate), fmt3(f.se), str(f.n_instruments),
             fmt3(f.leverage_max)] for f in fits]
    text = format_table(
        ["estimator", "estimate", "se", "instruments", "max leverage"], rows)
    for name, msg in errors.items():
        text += f"\n{name}: {msg}"
    if warnings:
        text += "\n" + "\n".join(f"note: {w}" for w in warnings)
    _emit(args, _payload("manyiv", args, cmap, warnings, results), text)
    return 0


def _cmd_simulate(args) -> int:
    spec = DGPSpec.from_json(args.spec)
    ds, lt = generate(spec, args.n, seed=args.seed)
    with open(args.data, "w", encoding="utf-8", newline="") as fh:
        fh.write("y,d,z,cell\n")
        for i in range(ds.n):
            fh.write(f"{float(ds.y[i])!r},{int(ds.d[i])},{int(ds.z[i])},"
                     f"{float(ds.x[i, 0])!r}\n")
    messages = [f"wrote {ds.n} rows to {args.data}"]
    if args.latent:
        lt.to_csv(args.latent)
        messages.append(f"wrote latent table to {args.latent}")
    oracle = None
    if args.oracle:
        wt = brute_force_weights(lt)
        try:
            late = brute_force_late(lt)
        except DomainError:
            late = None
        oracle = {
            "late": late,
            "cells": wt.to_records(),
            "n": ds.n,
            "seed": args.seed if args.seed is not None else spec.seed,
        }
        with open(args.oracle, "w", encoding="utf-8") as fh:
            json.dump(json_safe(oracle), fh, indent=2, sort_keys=True)
        messages.append(f"wrote oracle to {args.oracle}")
    payload = {
        "command": "simulate",
        "config_echo": {"spec": args.spec, "n": args.n, "seed": args.seed},
        "results": {"messages": messages, "oracle": oracle},
        "warnings": [],
        "version": __version__,
    }
    _emit(args, payload, "\n".join(messages))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivhet",
        description="Instrumental variables with heterogeneous effects: "
                    "estimates, weight decompositions, and diagnostics.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="point estimates of the three "
                                            "IV estimands")
    _add_data_args(p_est)
    _add_cell_args(p_est)
    p_est.add_argument("--se", choices=("hc1", "cluster"), default=None)
    p_est.add_argument("--link", choices=("logit", "probit", "linear"),
                       default=None,
                       help="also report the propensity reweighted estimate")
    p_est.add_argument("--trim", default="0.01,0.99",
                       help="propensity trimming window (default 0.01,0.99)")
    _add_output_args(p_est)
    p_est.set_defaults(func=_cmd_estimate)

    p_w = sub.add_parser("weights", help="per-cell decomposition weights")
    _add_data_args(p_w)
    _add_cell_args(p_w)
    p_w.add_argument("--se", choices=("hc1", "cluster"), default=None)
    _add_output_args(p_w)
    p_w.set_defaults(func=_cmd_weights)

    p_r = sub.add_parser("reset", help="functional form checks")
    _add_data_args(p_r)
    p_r.add_argument("--equation", choices=("outcome", "assignment"),
                     default=None,
                     help="which equation to check (default: assignment "
                          "when --link is given, outcome otherwise)")
    p_r.add_argument("--link", choices=("logit", "probit"), default=None)
    p_r.add_argument("--powers", default="2,3",
                     help="comma separated powers (default 2,3)")
    p_r.add_argument("--se", choices=("hc1", "cluster"), default=None)
    _add_output_args(p_r)
    p_r.set_defaults(func=_cmd_reset)

    p_v = sub.add_parser("validity", help="testable implications of "
                                          "instrument validity")
    _add_data_args(p_v)
    _add_cell_args(p_v)
    p_v.add_argument("--cuts", default="auto",
                     help="auto, deciles, support, or comma separated cut "
                          "points (default auto)")
    p_v.add_argument("--reps", type=int, default=999)
    p_v.add_argument("--seed", type=int, default=0)
    _add_output_args(p_v)
    p_v.set_defaults(func=_cmd_validity)

    p_m = sub.add_parser("manyiv", help="interacted 2SLS and jackknife IV")
    _add_data_args(p_m)
    _add_cell_args(p_m)
    p_m.add_argument("--se", choices=("hc0", "hc1", "cluster"), default=None)
    _add_output_args(p_m)
    p_m.set_defaults(func=_cmd_manyiv)

    p_s = sub.add_parser("simulate", help="draw a sample from a latent-type "
                                          "population spec")
    p_s.add_argument("--spec", required=True, help="JSON population spec")
    p_s.add_argument("--n", type=int, required=True)
    p_s.add_argument("--seed", type=int, default=None,
                     help="override the seed in the spec file")
    p_s.add_argument("--data", required=True, help="output CSV path")
    p_s.add_argument("--oracle", help="write ground truth JSON here")
    p_s.add_argument("--latent", help="write the latent table CSV here")
    _add_output_args(p_s)
    p_s.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
