"""Monte Carlo studies: null-approximation error, size, power, FMI recovery.

An :class:`ExperimentSpec` is a validated JSON-shaped document selecting one
of the study families:

* ``nulldist`` - tail rates of the limiting null statistic under the two F
  approximations, over a grid of (m, k, tau = h/k, fm, alpha);
* ``size`` / ``power`` / ``fmi_mse`` / ``negative_proportions`` - the
  equicorrelated-normal common-mean studies (a grid over n, p, rho, f, m,
  delta and parametrizations);
* ``monotone`` - the monotone-missing zero-mean study with a logistic
  missingness propensity, comparing imputation-based tests against the
  complete-data and complete-case benchmarks.

Every study returns an :class:`ExperimentResult` holding long-form records
``(grid point, method, metric, value, mc_se, n_rep)``; rates always carry
the binomial Monte Carlo standard error.  Replicates are keyed by stable
derived random streams, so results are identical for any thread count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from . import __version__
from .combine import ALL_METHODS, NullDistSpec, df_denominator, normalize_method, run_test, sample_null_statistic
from .exceptions import ConvergenceError, DegenerateDataError, FactorizationError
from .imputers import (
    MonotoneExperimentConfig,
    MvnExperimentConfig,
    generate_monotone_experiment_data,
    generate_mvn_experiment_data,
    impute_monotone_regression,
    impute_mvn_jeffreys,
)
from .models import MvnModel
from .numkit import FDist, RngStream
from .combine import pool_moments

EXPERIMENTS = ("nulldist", "size", "power", "fmi_mse", "negative_proportions", "monotone")

#: parametrization tag -> (estimand map, full-parameter coordinate map)
MVN_PARAMETRIZATIONS = {
    "i": ("difference", "identity"),
    "ii": ("ratio", "noise_to_signal"),
    "iii": ("cubic", "standardized"),
}

_RETRY_CAP = 5


class ConfigError(ValueError):
    """Invalid experiment configuration; ``pointer`` locates the field."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer


# ---------------------------------------------------------------------------
# spec validation


def _want(options, key, kind, pointer, default=None, required=False):
    if key not in options:
        if required:
            raise ConfigError(f"{pointer}/{key}", "required field is missing")
        return default
    value = options[key]
    if kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{pointer}/{key}", f"expected an integer, got {value!r}")
    elif kind == "number":
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{pointer}/{key}", f"expected a number, got {value!r}")
    elif kind == "list":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{pointer}/{key}", "expected a non-empty list")
    elif kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{pointer}/{key}", f"expected a string, got {value!r}")
    return value


def _number_list(options, key, pointer, default, lo=None, hi=None, integral=False):
    values = _want(options, key, "list", pointer, default=None)
    if values is None:
        return list(default)
    out = []
    for i, v in enumerate(values):
        here = f"{pointer}/{key}/{i}"
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(here, f"expected a number, got {v!r}")
        if integral and int(v) != v:
            raise ConfigError(here, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(here, f"must be >= {lo}")
        if hi is not None and v >= hi:
            raise ConfigError(here, f"must be < {hi}")
        out.append(int(v) if integral else float(v))
    return out


@dataclass(frozen=True)
class ExperimentSpec:
    """One validated study description (see module docstring)."""

    experiment: str
    seed: int
    options: dict

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentSpec":
        if not isinstance(raw, dict):
            raise ConfigError("", "configuration must be a JSON object")
        experiment = _want(raw, "experiment", "str", "", required=True)
        if experiment not in EXPERIMENTS:
            raise ConfigError("/experiment", f"expected one of {EXPERIMENTS}, got {experiment!r}")
        seed = _want(raw, "seed", "int", "", default=0)

        opts: dict = {}
        if experiment == "nulldist":
            opts["draws"] = _want(raw, "draws", "int", "", default=2**16)
            if opts["draws"] < 1:
                raise ConfigError("/draws", "must be >= 1")
            opts["m"] = _number_list(raw, "m", "", [3], lo=2, integral=True)
            opts["k"] = _number_list(raw, "k", "", [1, 2, 4, 8], lo=1, integral=True)
            opts["tau"] = _number_list(raw, "tau", "", [1, 2, 3], lo=1, integral=True)
            opts["fm"] = _number_list(raw, "fm", "", [0.0, 0.1, 0.2, 0.3], lo=0.0, hi=1.0)
            opts["alpha"] = _number_list(raw, "alpha", "", [0.005, 0.05], lo=0.0, hi=1.0)
            basis = _want(raw, "basis", "str", "", default="parameter")
            if basis not in ("parameter", "estimand"):
                raise ConfigError("/basis", f"expected 'parameter' or 'estimand', got {basis!r}")
            opts["basis"] = basis
        elif experiment == "monotone":
            opts["replicates"] = _want(raw, "replicates", "int", "", default=256)
            opts["n"] = _want(raw, "n", "int", "", default=500)
            opts["p"] = _want(raw, "p", "int", "", default=5)
            opts["m"] = _number_list(raw, "m", "", [3, 5], lo=2, integral=True)
            propensity = raw.get("propensity", [[2.0, -1.0], [1.0, 0.0]])
            if not isinstance(propensity, list) or not propensity:
                raise ConfigError("/propensity", "expected a non-empty list of [a0, a1] pairs")
            pairs = []
            for i, pair in enumerate(propensity):
                if (
                    not isinstance(pair, list)
                    or len(pair) != 2
                    or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in pair)
                ):
                    raise ConfigError(f"/propensity/{i}", "expected an [a0, a1] number pair")
                pairs.append((float(pair[0]), float(pair[1])))
            opts["propensity"] = pairs
            opts["delta"] = _number_list(raw, "delta", "", [0.0, 0.2, 0.4, 0.6])
            methods = _want(raw, "methods", "list", "", default=None) or ["L4", "L5", "C1", "C2"]
            for i, name in enumerate(methods):
                if name not in ("C1", "C2") and normalize_method(str(name)) not in ALL_METHODS:
                    raise ConfigError(f"/methods/{i}", f"unknown method {name!r}")
            opts["methods"] = [str(v) for v in methods]
            opts["alphas"] = _number_list(raw, "alphas", "", [0.005, 0.05], lo=0.0, hi=1.0)
            opts["compute_fmi"] = bool(raw.get("compute_fmi", False))
        else:
            opts["replicates"] = _want(raw, "replicates", "int", "", default=1024)
            if opts["replicates"] < 1:
                raise ConfigError("/replicates", "must be >= 1")
            opts["n"] = _number_list(raw, "n", "", [100], lo=4, integral=True)
            opts["p"] = _number_list(raw, "p", "", [2], lo=2, integral=True)
            opts["rho"] = _number_list(raw, "rho", "", [0.4], lo=-1.0, hi=1.0)
            opts["f"] = _number_list(raw, "f", "", [0.5], lo=0.0, hi=1.0)
            opts["m"] = _number_list(raw, "m", "", [3], lo=2, integral=True)
            opts["sigma2"] = float(_want(raw, "sigma2", "number", "", default=5.0))
            default_delta = [0.0] if experiment in ("size", "negative_proportions") else [0.0, 1.0, 2.0, 3.0, 4.0]
            opts["delta"] = _number_list(raw, "delta", "", default_delta)
            mean_style = _want(
                raw, "mean_style", "str", "",
                default="ones" if experiment in ("size", "negative_proportions") else "delta",
            )
            if mean_style not in ("ones", "delta"):
                raise ConfigError("/mean_style", f"expected 'ones' or 'delta', got {mean_style!r}")
            opts["mean_style"] = mean_style
            default_methods = {
                "size": ["L5"],
                "power": ["L5", "W1"],
                "fmi_mse": ["L5", "L1"],
                "negative_proportions": ["L1", "L3"],
            }[experiment]
            methods = _want(raw, "methods", "list", "", default=None) or default_methods
            normalized = []
            for i, name in enumerate(methods):
                try:
                    normalized.append(normalize_method(str(name)))
                except ValueError:
                    raise ConfigError(f"/methods/{i}", f"unknown method {name!r}") from None
            opts["methods"] = normalized
            params = _want(raw, "parametrizations", "list", "", default=None) or ["ii"]
            for i, tag in enumerate(params):
                if tag not in MVN_PARAMETRIZATIONS:
                    raise ConfigError(f"/parametrizations/{i}", f"expected one of ('i', 'ii', 'iii'), got {tag!r}")
            opts["parametrizations"] = [str(v) for v in params]
            opts["alphas"] = _number_list(raw, "alphas", "", [0.005, 0.05], lo=0.0, hi=1.0)
            opts["true_r"] = float(_want(raw, "true_r", "number", "", default=1.0))
        return ExperimentSpec(experiment, seed, opts)

    @staticmethod
    def from_json(path) -> "ExperimentSpec":
        with open(path, "r", encoding="utf-8") as handle:
            return ExperimentSpec.from_dict(json.load(handle))

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment, "seed": self.seed}
        out.update(self.options)
        return out


@dataclass(frozen=True)
class ExperimentResult:
    """Long-form study records plus the study description that produced them."""

    spec: ExperimentSpec
    records: list = field(default_factory=list)

    def fieldnames(self) -> list:
        names: list = []
        for record in self.records:
            for key in record:
                if key not in names:
                    names.append(key)
        return names

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=self.fieldnames(), restval="")
            writer.writeheader()
            for record in self.records:
                writer.writerow({k: _csv_cell(v) for k, v in record.items()})

    def manifest(self) -> dict:
        import scipy

        return {
            "spec": self.spec.to_dict(),
            "records": len(self.records),
            "versions": {
                "milrt": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }

    def select(self, **conditions) -> list:
        return [
            record
            for record in self.records
            if all(record.get(key) == value for key, value in conditions.items())
        ]


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def default_thread_count() -> int:
    env = os.environ.get("MILRT_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _map_ordered(worker, items, threads):
    if threads <= 1:
        return [worker(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentResult:
    threads = default_thread_count() if threads is None else max(1, threads)
    if spec.experiment == "nulldist":
        return run_nulldist_study(spec, threads)
    if spec.experiment == "monotone":
        return run_monotone_study(spec, threads)
    return run_mvn_study(spec, threads)


# ---------------------------------------------------------------------------
# study 1: null-approximation tail rates


def run_nulldist_study(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Tail rates of the limiting null statistic under both F references."""
    opts = spec.options
    root = RngStream(spec.seed)
    points = [
        (m, k, tau, fm)
        for m in opts["m"]
        for k in opts["k"]
        for tau in opts["tau"]
        for fm in opts["fm"]
    ]

    def worker(point):
        m, k, tau, fm = point
        h = tau * k
        r_m = fm / (1.0 - fm)
        null = NullDistSpec(r_m=r_m, k=k, h=h, m=m, basis=opts["basis"])
        draws = sample_null_statistic(null, opts["draws"], root.derive("nulldist", point))
        rows = []
        for alpha in opts["alpha"]:
            for metric, kind in (("alpha_proposed", "proposed"), ("alpha_classic", "classic")):
                df2 = df_denominator(kind, r_m, h, m)
                cut = FDist(k, df2).quantile(1.0 - alpha)
                rate = float(np.mean(draws > cut))
                rows.append(
                    {
                        "experiment": "nulldist", "m": m, "k": k, "tau": tau,
                        "fm": fm, "alpha": alpha, "metric": metric, "value": rate,
                        "mc_se": math.sqrt(rate * (1.0 - rate) / opts["draws"]),
                        "n_rep": opts["draws"],
                    }
                )
        return rows

    records = [row for rows in _map_ordered(worker, points, threads) for row in rows]
    return ExperimentResult(spec, records)


# ---------------------------------------------------------------------------
# study 2: equicorrelated-normal common-mean studies


def _mvn_mean(style, p, delta):
    if style == "ones":
        return tuple(1.0 for _ in range(p))
    return tuple(-2.0 + (j + 1) * delta for j in range(p))


def _one_mvn_replicate(point, opts, rng):
    """Run all requested methods once; returns per-(method,param) results."""
    n, p, rho, f, m, delta = point
    model = MvnModel(p, "common_mean")
    config = MvnExperimentConfig(
        n=n, p=p, rho=rho, sigma2=opts["sigma2"], f=f,
        mu=_mvn_mean(opts["mean_style"], p, delta),
    )
    for attempt in range(_RETRY_CAP):
        try:
            gen_rng = rng.derive("gen", attempt)
            x, truth = generate_mvn_experiment_data(config, gen_rng)
            datasets = impute_mvn_jeffreys(x, m, rng.derive("imp", attempt))
            break
        except (DegenerateDataError, FactorizationError):
            continue
    else:
        return {"__failed__": True}

    out = {"__failed__": False}
    observed = x[: truth["n_obs"]]
    for tag in opts["parametrizations"]:
        theta_map, psi_map = MVN_PARAMETRIZATIONS[tag]
        for method in opts["methods"]:
            key = (method, tag)
            try:
                if method == "L0":
                    result = run_test("L0", model, observed)
                else:
                    result = run_test(
                        method, model, datasets, psi_map=psi_map, theta_map=theta_map
                    )
            except (DegenerateDataError, FactorizationError, ConvergenceError, ValueError):
                out[key] = None
                continue
            if method in ("W1", "W2", "W3", "W4", "W5", "W6") and result.diagnostics.get(
                "dropped_datasets", 0
            ):
                out[key] = None  # singular-variance replicate, removed from tallies
                continue
            out[key] = {
                "p": result.p_value,
                "statistic": result.statistic,
                "r": None if result.r is None else result.r.value,
                "r_signed": result.diagnostics.get("r_signed", None if result.r is None else result.r.value),
            }
    return out


def run_mvn_study(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Size / power / FMI-MSE / negative-share studies on the MVN design."""
    opts = spec.options
    root = RngStream(spec.seed)
    points = [
        (n, p, rho, f, m, delta)
        for n in opts["n"]
        for p in opts["p"]
        for rho in opts["rho"]
        for f in opts["f"]
        for m in opts["m"]
        for delta in opts["delta"]
    ]

    records = []
    rates: dict = {}
    for point in points:
        n, p, rho, f, m, delta = point
        reps = opts["replicates"]
        worker = lambda rep: _one_mvn_replicate(point, opts, root.derive(spec.experiment, point, rep))
        outcomes = _map_ordered(worker, range(reps), threads)
        failed = sum(1 for o in outcomes if o["__failed__"])

        base = {
            "experiment": spec.experiment, "n": n, "p": p, "rho": rho,
            "f": f, "m": m, "delta": delta,
        }
        if failed:
            records.append({**base, "metric": "failed_replicates", "value": failed, "n_rep": reps})

        for tag in opts["parametrizations"]:
            for method in opts["methods"]:
                key = (method, tag)
                cells = [o[key] for o in outcomes if not o["__failed__"] and o.get(key) is not None]
                dropped = sum(
                    1 for o in outcomes if not o["__failed__"] and o.get(key) is None
                )
                meta = {**base, "parametrization": tag, "method": method}
                if dropped:
                    records.append({**meta, "metric": "dropped_replicates", "value": dropped, "n_rep": reps})
                if not cells:
                    continue
                n_eff = len(cells)
                if spec.experiment in ("size", "power"):
                    for alpha in opts["alphas"]:
                        rate = float(np.mean([c["p"] <= alpha for c in cells]))
                        records.append(
                            {
                                **meta, "metric": f"rejection_rate@{alpha:g}",
                                "value": rate,
                                "mc_se": math.sqrt(rate * (1.0 - rate) / n_eff),
                                "n_rep": n_eff,
                            }
                        )
                        rates[(point[:5], tag, method, alpha, delta)] = rate
                elif spec.experiment == "fmi_mse":
                    r_m = (1.0 + 1.0 / m) * opts["true_r"]
                    f_m = r_m / (1.0 + r_m)
                    fhats = np.array([c["r"] / (1.0 + c["r"]) for c in cells])
                    records.append(
                        {
                            **meta, "metric": "fmi_mean", "value": float(fhats.mean()),
                            "mc_se": float(fhats.std(ddof=1) / math.sqrt(n_eff)),
                            "n_rep": n_eff, "true_fm": f_m,
                        }
                    )
                    sq = (fhats - f_m) ** 2
                    records.append(
                        {
                            **meta, "metric": "fmi_mse", "value": float(sq.mean()),
                            "mc_se": float(sq.std(ddof=1) / math.sqrt(n_eff)),
                            "n_rep": n_eff, "true_fm": f_m,
                        }
                    )
                else:  # negative_proportions
                    neg_r = float(np.mean([c["r_signed"] < 0 for c in cells]))
                    neg_d = float(np.mean([c["statistic"] < 0 for c in cells]))
                    for metric, rate in (("share_negative_r", neg_r), ("share_negative_statistic", neg_d)):
                        records.append(
                            {
                                **meta, "metric": metric, "value": rate,
                                "mc_se": math.sqrt(rate * (1.0 - rate) / n_eff),
                                "n_rep": n_eff,
                            }
                        )

    # Size-adjusted odds: power divided by the empirical size at delta = 0.
    if spec.experiment == "power" and 0.0 in opts["delta"]:
        for (head, tag, method, alpha, delta), rate in sorted(rates.items(), key=lambda kv: repr(kv[0])):
            size = rates.get((head, tag, method, alpha, 0.0))
            if not size or delta == 0.0:
                continue
            n, p, rho, f, m = head
            records.append(
                {
                    "experiment": spec.experiment, "n": n, "p": p, "rho": rho,
                    "f": f, "m": m, "delta": delta, "parametrization": tag,
                    "method": method, "metric": f"odds@{alpha:g}",
                    "value": rate / size, "n_rep": opts["replicates"],
                }
            )
    return ExperimentResult(spec, records)


# ---------------------------------------------------------------------------
# study 3: monotone missingness without equal missing information


def _one_monotone_replicate(config, m, methods, compute_fmi, rng):
    model = MvnModel(config.p, "zero_mean")
    for attempt in range(_RETRY_CAP):
        try:
            x, truth = generate_monotone_experiment_data(config, rng.derive("gen", attempt))
            datasets = impute_monotone_regression(x, m, rng.derive("imp", attempt))
            break
        except (DegenerateDataError, FactorizationError):
            continue
    else:
        return {"__failed__": True}

    out = {"__failed__": False}
    complete_cases = x[np.all(np.isfinite(x), axis=1)]
    for method in methods:
        try:
            if method == "C1":
                result = run_test("L0", model, truth["complete"])
            elif method == "C2":
                result = run_test("L0", model, complete_cases)
            else:
                result = run_test(method, model, datasets)
            out[method] = {"p": result.p_value}
        except (DegenerateDataError, FactorizationError, ConvergenceError, ValueError):
            out[method] = None
    if compute_fmi:
        comps = [model.wald_components(d, "identity") for d in datasets]
        pooled = pool_moments(comps)
        out["__moments__"] = (pooled.b, pooled.t)
    return out


def run_monotone_study(spec: ExperimentSpec, threads: int = 1) -> ExperimentResult:
    """Size/power of tests under monotone missingness (MCAR and MAR)."""
    opts = spec.options
    root = RngStream(spec.seed)
    records = []
    for alpha0, alpha1 in opts["propensity"]:
        mechanism = "mcar" if alpha1 == 0.0 else "mar"
        for m in opts["m"]:
            for delta in opts["delta"]:
                config = MonotoneExperimentConfig(
                    n=opts["n"], p=opts["p"], delta=delta, alpha0=alpha0, alpha1=alpha1
                )
                point = (alpha0, alpha1, m, delta)
                worker = lambda rep: _one_monotone_replicate(
                    config, m, opts["methods"], opts["compute_fmi"],
                    root.derive("monotone", point, rep),
                )
                outcomes = _map_ordered(worker, range(opts["replicates"]), threads)
                ok = [o for o in outcomes if not o["__failed__"]]
                base = {
                    "experiment": "monotone", "mechanism": mechanism,
                    "alpha0": alpha0, "alpha1": alpha1, "m": m, "delta": delta,
                }
                for method in opts["methods"]:
                    cells = [o[method] for o in ok if o.get(method) is not None]
                    if not cells:
                        continue
                    for alpha in opts["alphas"]:
                        rate = float(np.mean([c["p"] <= alpha for c in cells]))
                        records.append(
                            {
                                **base, "method": method,
                                "metric": f"rejection_rate@{alpha:g}",
                                "value": rate,
                                "mc_se": math.sqrt(rate * (1.0 - rate) / len(cells)),
                                "n_rep": len(cells),
                            }
                        )
                if opts["compute_fmi"]:
                    pairs = [o["__moments__"] for o in ok if "__moments__" in o]
                    if pairs:
                        b_avg = np.mean([pair[0] for pair in pairs], axis=0)
                        t_avg = np.mean([pair[1] for pair in pairs], axis=0)
                        fmis = np.sort(eigh(b_avg, t_avg, eigvals_only=True))
                        for j, value in enumerate(fmis):
                            records.append(
                                {
                                    **base, "method": "moments",
                                    "metric": "avg_fmi_eigenvalue",
                                    "variable": j, "value": float(value),
                                    "n_rep": len(pairs),
                                }
                            )
    return ExperimentResult(spec, records)
