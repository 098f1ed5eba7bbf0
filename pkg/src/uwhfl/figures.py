"""Batch figure rendering from grid summary CSVs.

Reads the documented summary.csv schema (one row per method, scale, seed)
and writes six figure files. The numeric aggregation layer is separate from
the rendering so it can be tested without touching matplotlib.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

REQUIRED_COLUMNS = (
    "method", "n_sensors", "seed", "dirichlet_alpha",
    "direct_reachability", "fog_reachability", "participation",
    "f1", "pa_f1", "e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp",
    "e_round", "e_total",
)

FIGURE_FILES = (
    "reachability_vs_scale.png",
    "f1_vs_scale.png",
    "energy_per_sensor_vs_scale.png",
    "hfl_energy_bars.png",
    "noniid_comparison.png",
    "benchmark_bars.png",
)

_STR_COLUMNS = ("method",)
_INT_COLUMNS = ("n_sensors", "seed")


def load_summary(summary_dir: str | Path) -> list[dict]:
    """Read <summary_dir>/summary.csv into typed row dicts."""
    path = Path(summary_dir) / "summary.csv"
    if not path.is_file():
        raise ConfigError(f"missing summary file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ConfigError(f"{path}: missing columns: {', '.join(missing)}")
        rows = []
        for raw in reader:
            row: dict = {}
            for col, text in raw.items():
                if col in _STR_COLUMNS:
                    row[col] = text
                elif col in _INT_COLUMNS:
                    row[col] = int(text)
                else:
                    row[col] = float(text)
            rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return rows


def aggregate(rows: list[dict], key_fields: tuple[str, ...],
              value_fields: tuple[str, ...]) -> dict[tuple, dict[str, tuple[float, float]]]:
    """Per-group (mean, population std) over seeds for each value field."""
    out: dict[tuple, dict[str, tuple[float, float]]] = {}
    keys = sorted({tuple(r[f] for f in key_fields) for r in rows},
                  key=lambda k: tuple(str(x) for x in k))
    for key in keys:
        group = [r for r in rows if tuple(r[f] for f in key_fields) == key]
        out[key] = {
            field: (float(np.mean([g[field] for g in group])),
                    float(np.std([g[field] for g in group])))
            for field in value_fields
        }
    return out


def _methods_and_scales(rows: list[dict]) -> tuple[list[str], list[int]]:
    methods = sorted({r["method"] for r in rows})
    scales = sorted({r["n_sensors"] for r in rows})
    return methods, scales


def _lines_vs_scale(rows: list[dict], field: str, ax, ylabel: str,
                    per_sensor: bool = False) -> None:
    methods, scales = _methods_and_scales(rows)
    agg = aggregate(rows, ("method", "n_sensors"), (field,))
    for method in methods:
        xs, ys, es = [], [], []
        for n in scales:
            if (method, n) not in agg:
                continue
            mean, std = agg[(method, n)][field]
            if per_sensor:
                mean, std = mean / n, std / n
            xs.append(n)
            ys.append(mean)
            es.append(std)
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=method)
    ax.set_xlabel("sensors deployed")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)


def fig_reachability(rows: list[dict], path: Path) -> None:
    """Direct gateway reachability and fog participation against scale."""
    agg = aggregate(rows, ("n_sensors",), ("direct_reachability", "fog_reachability"))
    scales = sorted(k[0] for k in agg)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for field, label in (("direct_reachability", "direct to gateway"),
                         ("fog_reachability", "via nearest fog")):
        means = [agg[(n,)][field][0] for n in scales]
        stds = [agg[(n,)][field][1] for n in scales]
        ax.errorbar(scales, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xlabel("sensors deployed")
    ax.set_ylabel("reachable fraction")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_f1_vs_scale(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    _lines_vs_scale(rows, "pa_f1", ax, "point-adjusted F1")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_energy_per_sensor(rows: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    _lines_vs_scale(rows, "e_total", ax, "energy per sensor (J)", per_sensor=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_hfl_energy_bars(rows: list[dict], path: Path) -> None:
    """Stacked tier-energy bars per method at the largest scale, annotated
    with each method's point-adjusted F1."""
    _, scales = _methods_and_scales(rows)
    top = scales[-1]
    at_scale = [r for r in rows if r["n_sensors"] == top]
    methods = sorted({r["method"] for r in at_scale})
    tiers = ("e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp")
    agg = aggregate(at_scale, ("method",), tiers + ("pa_f1", "e_total"))
    fig, ax = plt.subplots(figsize=(6, 3.8))
    x = np.arange(len(methods))
    bottom = np.zeros(len(methods))
    for tier in tiers:
        heights = np.array([agg[(m,)][tier][0] for m in methods])
        ax.bar(x, heights, bottom=bottom, width=0.6, label=tier)
        bottom += heights
    for i, m in enumerate(methods):
        f1_mean = agg[(m,)]["pa_f1"][0]
        ax.text(x[i], bottom[i], f"F1={f1_mean:.2f}", ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(f"total energy (J), N={top}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_noniid(rows: list[dict], path: Path) -> None:
    """Detection quality grouped by data-heterogeneity level."""
    alphas = sorted({r["dirichlet_alpha"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    agg = aggregate(rows, ("method", "dirichlet_alpha"), ("pa_f1",))
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    width = 0.8 / max(len(alphas), 1)
    x = np.arange(len(methods))
    for j, alpha in enumerate(alphas):
        means = [agg.get((m, alpha), {"pa_f1": (np.nan, 0.0)})["pa_f1"][0] for m in methods]
        stds = [agg.get((m, alpha), {"pa_f1": (np.nan, 0.0)})["pa_f1"][1] for m in methods]
        ax.bar(x + (j - (len(alphas) - 1) / 2) * width, means, width=width,
               yerr=stds, capsize=3, label=f"alpha={alpha:g}")
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("point-adjusted F1")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8, title="heterogeneity")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_benchmark(rows: list[dict], path: Path) -> None:
    """Per-method detection bars next to total communication energy on a
    logarithmic axis."""
    methods = sorted({r["method"] for r in rows})
    agg = aggregate(rows, ("method",), ("pa_f1", "e_round"))
    fig, (ax_f1, ax_e) = plt.subplots(1, 2, figsize=(8, 3.5))
    x = np.arange(len(methods))
    f1_means = [agg[(m,)]["pa_f1"][0] for m in methods]
    f1_stds = [agg[(m,)]["pa_f1"][1] for m in methods]
    ax_f1.bar(x, f1_means, yerr=f1_stds, capsize=3, width=0.6)
    ax_f1.set_xticks(x)
    ax_f1.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax_f1.set_ylabel("point-adjusted F1")
    ax_f1.set_ylim(0.0, 1.05)
    e_means = [agg[(m,)]["e_round"][0] for m in methods]
    e_stds = [agg[(m,)]["e_round"][1] for m in methods]
    # Log axis cannot show zero-energy bars; clip to a small positive floor.
    floor = 1e-6
    ax_e.bar(x, np.maximum(e_means, floor), yerr=e_stds, capsize=3, width=0.6,
             color="tab:orange")
    ax_e.set_yscale("log")
    ax_e.set_xticks(x)
    ax_e.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
    ax_e.set_ylabel("communication energy (J, log scale)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_all(summary_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render every figure from <summary_dir>/summary.csv into out_dir."""
    rows = load_summary(summary_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    renderers = (
        fig_reachability, fig_f1_vs_scale, fig_energy_per_sensor,
        fig_hfl_energy_bars, fig_noniid, fig_benchmark,
    )
    paths = []
    for renderer, name in zip(renderers, FIGURE_FILES):
        target = out / name
        renderer(rows, target)
        paths.append(target)
    return paths
