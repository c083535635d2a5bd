"""Static SVG plots for study results."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .montecarlo import ExperimentResult


def _save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def write_plots(result: ExperimentResult, outdir) -> list:
    """Write the standard plot set for one study; returns the file paths."""
    os.makedirs(outdir, exist_ok=True)
    experiment = result.spec.experiment
    if experiment == "nulldist":
        return _nulldist_plots(result, outdir)
    if experiment == "monotone":
        return _rate_plots(result, outdir, x_key="delta", group_keys=("mechanism", "m"))
    if experiment in ("size", "power"):
        return _rate_plots(result, outdir, x_key="delta", group_keys=("parametrization", "m", "n"))
    if experiment == "fmi_mse":
        return _fmi_plots(result, outdir)
    return []


def _nulldist_plots(result, outdir):
    paths = []
    groups = defaultdict(list)
    for rec in result.records:
        groups[(rec["m"], rec["k"], rec["alpha"])].append(rec)
    for (m, k, alpha), recs in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        series = defaultdict(list)
        for rec in recs:
            series[(rec["tau"], rec["metric"])].append((rec["fm"], rec["value"]))
        for (tau, metric), points in sorted(series.items()):
            points.sort()
            style = "-" if metric == "alpha_proposed" else "--"
            ax.plot(*zip(*points), style, label=f"tau={tau} {metric.split('_')[1]}")
        ax.axhline(alpha, color="grey", lw=0.6)
        ax.set_xlabel("fraction of missing information")
        ax.set_ylabel("tail rate")
        ax.set_title(f"m={m}, k={k}, nominal {alpha:g}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, outdir, f"nulldist_m{m}_k{k}_a{alpha:g}.svg"))
    return paths


def _rate_plots(result, outdir, x_key, group_keys):
    paths = []
    groups = defaultdict(list)
    for rec in result.records:
        if not str(rec.get("metric", "")).startswith(("rejection_rate@", "odds@")):
            continue
        group = tuple(rec.get(key) for key in group_keys) + (rec["metric"],)
        groups[group].append(rec)
    for group, recs in sorted(groups.items(), key=lambda kv: repr(kv[0])):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        series = defaultdict(list)
        for rec in recs:
            series[rec["method"]].append((rec[x_key], rec["value"]))
        for method, points in sorted(series.items()):
            points.sort()
            ax.plot(*zip(*points), marker="o", ms=3, label=method)
        label = dict(zip(group_keys, group))
        metric = group[-1]
        ax.set_xlabel(x_key)
        ax.set_ylabel(metric)
        ax.set_title(", ".join(f"{k}={v}" for k, v in label.items()))
        ax.legend(fontsize=7)
        fig.tight_layout()
        name = "_".join(f"{k}{v}" for k, v in label.items())
        paths.append(_save(fig, outdir, f"{result.spec.experiment}_{name}_{metric.replace('@', '')}.svg"))
    return paths


def _fmi_plots(result, outdir):
    paths = []
    groups = defaultdict(list)
    for rec in result.records:
        if rec.get("metric") != "fmi_mse":
            continue
        groups[(rec["parametrization"], rec["m"], rec["n"])].append(rec)
    for (tag, m, n), recs in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        series = defaultdict(list)
        for rec in recs:
            series[rec["method"]].append((rec["delta"], rec["value"]))
        for method, points in sorted(series.items()):
            points.sort()
            ax.semilogy(*zip(*points), marker="o", ms=3, label=method)
        ax.set_xlabel("delta")
        ax.set_ylabel("MSE of estimated FMI")
        ax.set_title(f"parametrization {tag}, m={m}, n={n}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, outdir, f"fmi_mse_{tag}_m{m}_n{n}.svg"))
    return paths
