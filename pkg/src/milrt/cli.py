"""Command line interface.

Verbs:

* ``test``     - run one pooled test on a long-format dataset;
* ``impute``   - complete an observed dataset m times;
* ``simulate`` - run a JSON-configured Monte Carlo study;
* ``nulldist`` - tail rates of the limiting null statistic from flags.

Exit codes: 0 on success, 2 for unparseable inputs or invalid
configurations, 3 for structurally valid inputs that do not fit the
requested operation (wrong pattern, incompatible method, m < 2, ...).
All verbs are deterministic given their flags; results are emitted as a
human table on stdout plus a machine-readable JSON/CSV document.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .combine import run_test
from .dataio import (
    CountsData,
    MatrixData,
    ParseError,
    read_counts_csv,
    read_matrix_csv,
    write_counts_csv,
    write_matrix_csv,
)
from .exceptions import ConvergenceError, DegenerateDataError, FactorizationError
from .imputers import (
    impute_multinomial_dirichlet,
    impute_monotone_regression,
    impute_mvn_jeffreys,
)
from .models import Ar1Model, MultinomialModel, MvnModel
from .montecarlo import (
    ConfigError,
    ExperimentSpec,
    default_thread_count,
    run_experiment,
)
from .numkit import RngStream

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INCOMPATIBLE = 3

_MVN_PSI_MAPS = {"i": "identity", "ii": "noise_to_signal", "iii": "standardized"}
_MVN_THETA_MAPS = {"i": "difference", "ii": "ratio", "iii": "cubic"}
_TABLE_PSI_MAPS = {"i": "identity", "ii": "logit", "iii": "ratio"}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INCOMPATIBLE):
        super().__init__(message)
        self.code = code


def _fail(message, code):
    print(f"error: {message}", file=sys.stderr)
    return code


def _infer_format(model_tag, explicit):
    if explicit:
        return explicit
    return "counts" if model_tag == "multinomial_table" else "matrix"


def _resolve_map(tag, table, what):
    if tag is None:
        return "identity"
    if tag in table:
        return table[tag]
    if tag in table.values():
        return tag
    raise CliError(f"unknown {what} {tag!r}; expected i/ii/iii or one of {sorted(table.values())}")


def _build_model(args, data):
    if args.model == "multinomial_table":
        if not isinstance(data, CountsData):
            raise CliError("multinomial_table needs counts-format data")
        if len(data.shape) != 3:
            raise CliError("multinomial_table supports three-way tables")
        null = args.null or "full_independence"
        if null not in ("full_independence", "conditional_independence"):
            raise CliError(f"unknown null {null!r} for multinomial_table")
        given_axis = 0
        if args.given is not None:
            names = [name for name, _ in data.axes]
            if args.given not in names:
                raise CliError(f"--given must name one of the label columns {names}")
            given_axis = names.index(args.given)
        return MultinomialModel(shape=data.shape, null=null, given_axis=given_axis)
    if not isinstance(data, MatrixData):
        raise CliError(f"{args.model} needs matrix-format data")
    p = len(data.columns)
    if args.model == "mvn_common_mean":
        if p < 2:
            raise CliError("mvn_common_mean needs at least two variables")
        if args.null not in (None, "common_mean"):
            raise CliError(f"unknown null {args.null!r} for mvn_common_mean")
        return MvnModel(p, "common_mean")
    if args.model == "monotone_normal":
        if args.null not in (None, "zero_mean"):
            raise CliError(f"unknown null {args.null!r} for monotone_normal")
        return MvnModel(p, "zero_mean")
    if args.model == "ar1":
        if p != 1:
            raise CliError("ar1 needs exactly one variable column")
        if args.null not in (None, "zero_autocorrelation"):
            raise CliError(f"unknown null {args.null!r} for ar1")
        return Ar1Model()
    raise CliError(f"unknown model {args.model!r}")


def _matrix_datasets(data: MatrixData, flatten: bool):
    if flatten:
        return [block.ravel() for block in data.completed]
    return list(data.completed)


def _observed_dataset(data, model, flatten: bool):
    if isinstance(data, CountsData):
        if data.observed is None:
            raise CliError("no observed view in the data")
        if data.observed.unlabeled:
            raise CliError("complete-data test needs fully labeled counts")
        return data.observed.counts
    if data.observed is None:
        raise CliError("no observed view in the data")
    complete = data.observed[np.all(np.isfinite(data.observed), axis=1)]
    if complete.shape[0] == 0:
        raise CliError("no complete cases in the observed view")
    return complete.ravel() if flatten else complete


def _render_result(result, extra):
    doc = result.to_dict()
    doc.update(extra)
    lines = []
    shown = [
        ("method", doc["method"]),
        ("model", extra.get("model", "")),
        ("statistic", f"{result.statistic:.6g}"),
        ("k", result.k),
        ("df2", "inf" if math.isinf(result.df2) else f"{result.df2:.6g}"),
        ("p_value", f"{result.p_value:.6g}"),
    ]
    if result.r is not None:
        shown.append(("r", f"{result.r.value:.6g} ({result.r.method})"))
    for key, value in shown:
        lines.append(f"{key:<12}{value}")
    return "\n".join(lines), doc


def cmd_test(args) -> int:
    fmt = _infer_format(args.model, args.format)
    try:
        data = read_counts_csv(args.data) if fmt == "counts" else read_matrix_csv(args.data)
    except ParseError as err:
        return _fail(str(err), EXIT_PARSE)
    except OSError as err:
        return _fail(str(err), EXIT_PARSE)

    try:
        model = _build_model(args, data)
        flatten = args.model == "ar1"
        if args.model == "multinomial_table":
            psi_map = _resolve_map(args.psi_map, _TABLE_PSI_MAPS, "psi map")
            theta_map = None
        else:
            psi_map = _resolve_map(args.psi_map, _MVN_PSI_MAPS, "psi map")
            theta_map = (
                _resolve_map(args.theta_map, _MVN_THETA_MAPS, "theta map")
                if args.theta_map
                else None
            )
        if args.method.upper().replace("-", "") == "L0":
            payload = _observed_dataset(data, model, flatten)
        else:
            payload = (
                list(data.completed)
                if isinstance(data, CountsData)
                else _matrix_datasets(data, flatten)
            )
            if len(payload) < 2:
                raise CliError(f"method {args.method} needs m >= 2 completed datasets")
        result = run_test(
            args.method, model, payload,
            psi_map=psi_map, theta_map=theta_map, df_variant=args.df,
        )
    except CliError as err:
        return _fail(str(err), err.code)
    except (DegenerateDataError, FactorizationError, ConvergenceError, ValueError) as err:
        return _fail(str(err), EXIT_INCOMPATIBLE)

    table, doc = _render_result(
        result,
        {
            "model": args.model,
            "data": args.data,
            "psi_map": psi_map,
            "theta_map": theta_map,
            "alpha": args.alpha,
            "reject": bool(result.p_value <= args.alpha),
            "seed": args.seed,
            "milrt": __version__,
        },
    )
    table += f"\n{'reject':<12}{doc['reject']} (alpha {args.alpha:g})"
    print(table)
    payload = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(payload + "\n")
    else:
        print(payload)
    return EXIT_OK


def cmd_impute(args) -> int:
    if args.m < 2:
        return _fail(f"need m >= 2 imputations, got {args.m}", EXIT_INCOMPATIBLE)
    rng = RngStream(args.seed)
    try:
        if args.imputer == "multinomial_dirichlet":
            data = read_counts_csv(args.data)
            if data.observed is None:
                raise CliError("counts file has no observed view")
            completed = impute_multinomial_dirichlet(data.observed, args.m, rng)
            write_counts_csv(args.out, data.axes, data.observed, completed.datasets)
        else:
            data = read_matrix_csv(args.data)
            if data.observed is None:
                raise CliError("matrix file has no observed view")
            impute = {
                "mvn_jeffreys": impute_mvn_jeffreys,
                "monotone_regression": impute_monotone_regression,
            }[args.imputer]
            completed = impute(data.observed, args.m, rng)
            write_matrix_csv(args.out, data.columns, data.observed, completed.datasets)
    except ParseError as err:
        return _fail(str(err), EXIT_PARSE)
    except OSError as err:
        return _fail(str(err), EXIT_PARSE)
    except CliError as err:
        return _fail(str(err), err.code)
    except (DegenerateDataError, ValueError) as err:
        return _fail(str(err), EXIT_INCOMPATIBLE)
    print(f"wrote {args.m} completed copies to {args.out}")
    print(json.dumps(
        {"out": args.out, "m": args.m, "imputer": args.imputer, "seed": args.seed},
        sort_keys=True,
    ))
    return EXIT_OK


def _write_outputs(result, outdir, plots):
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, f"{result.spec.experiment}.csv")
    result.write_csv(csv_path)
    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as handle:
        json.dump(result.manifest(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    written = [csv_path, manifest_path]
    if plots:
        from .plots import write_plots

        written.extend(write_plots(result, os.path.join(outdir, "plots")))
    return written


def cmd_simulate(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as err:
        return _fail(str(err), EXIT_PARSE)
    except json.JSONDecodeError as err:
        return _fail(f"invalid JSON: {err}", EXIT_PARSE)
    try:
        spec = ExperimentSpec.from_dict(raw)
    except ConfigError as err:
        return _fail(str(err), EXIT_PARSE)
    result = run_experiment(spec, threads=args.threads)
    for path in _write_outputs(result, args.out, args.plots):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_nulldist(args) -> int:
    raw = {
        "experiment": "nulldist",
        "seed": args.seed,
        "draws": args.draws,
        "m": args.m,
        "k": args.k,
        "tau": args.tau,
        "fm": args.fm,
        "alpha": args.alpha,
        "basis": args.basis,
    }
    try:
        spec = ExperimentSpec.from_dict(raw)
    except ConfigError as err:
        return _fail(str(err), EXIT_PARSE)
    result = run_experiment(spec, threads=args.threads)
    for path in _write_outputs(result, args.out, args.plots):
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="milrt",
        description="Pooled Wald and likelihood-ratio tests for multiply imputed data.",
    )
    parser.add_argument("--version", action="version", version=f"milrt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run one pooled test on a long-format dataset")
    t.add_argument("--data", required=True)
    t.add_argument(
        "--model", required=True,
        choices=["mvn_common_mean", "monotone_normal", "multinomial_table", "ar1"],
    )
    t.add_argument("--method", required=True)
    t.add_argument("--null", default=None)
    t.add_argument(
        "--given", default=None,
        help="conditioning variable for conditional independence (counts data)",
    )
    t.add_argument("--format", choices=["matrix", "counts"], default=None)
    t.add_argument("--psi-map", dest="psi_map", default=None)
    t.add_argument("--theta-map", dest="theta_map", default=None)
    t.add_argument("--df", choices=["original", "proposed"], default=None)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default=None, help="write the JSON document here")
    t.set_defaults(func=cmd_test)

    i = sub.add_parser("impute", help="complete an observed dataset m times")
    i.add_argument("--data", required=True)
    i.add_argument(
        "--imputer", required=True,
        choices=["mvn_jeffreys", "monotone_regression", "multinomial_dirichlet"],
    )
    i.add_argument("--m", type=int, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_impute)

    s = sub.add_parser("simulate", help="run a JSON-configured Monte Carlo study")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=default_thread_count())
    s.add_argument("--plots", action="store_true")
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("nulldist", help="tail rates of the limiting null statistic")
    n.add_argument("--m", type=int, nargs="+", default=[3])
    n.add_argument("--k", type=int, nargs="+", default=[1, 2, 4, 8])
    n.add_argument("--tau", type=int, nargs="+", default=[1, 2, 3])
    n.add_argument("--fm", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3])
    n.add_argument("--alpha", type=float, nargs="+", default=[0.005, 0.05])
    n.add_argument("--draws", type=int, default=2**16)
    n.add_argument("--basis", choices=["parameter", "estimand"], default="parameter")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--threads", type=int, default=default_thread_count())
    n.add_argument("--out", required=True)
    n.add_argument("--plots", action="store_true")
    n.set_defaults(func=cmd_nulldist)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
