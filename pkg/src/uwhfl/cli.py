"""Command-line entry point: single runs, method x scale x seed grids,
reachability Monte Carlo, topology dumps, and figure rendering.

Output layout for `grid`:
  <out>/<method>_n<scale>_s<seed>/rounds.csv   per-round ledger
  <out>/<method>_n<scale>_s<seed>/summary.json run summary
  <out>/summary.csv                            one row per (method, scale, seed)
  <out>/summary_agg.csv                        mean/std per (method, scale)
  <out>/failures.json                          only when cells failed
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (DEFAULT_OUTPUT_ENV, ExperimentConfig, grid_from_file,
                     parse_config, resolve_cell)
from .errors import ConfigError
from .federation import ALL_KINDS, ExperimentResult, run_experiment
from .metrics import CSV_COLUMNS, RoundReport
from .topology import (DeploymentConfig, build_graph, deploy,
                       direct_reachability, fog_reachability)

SUMMARY_COLUMNS = (
    "method", "n_sensors", "seed", "rounds", "dirichlet_alpha",
    "direct_reachability", "fog_reachability", "participation",
    "precision", "recall", "f1", "pa_f1",
    "e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp", "e_round", "e_total",
    "latency_s", "final_train_loss", "payload_bits_total",
)

# Columns aggregated into summary_agg.csv (everything numeric and per-seed).
AGG_COLUMNS = SUMMARY_COLUMNS[5:]


def _fmt(value) -> str:
    """Full-precision, round-trippable decimal text."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(reports: list[RoundReport], path: str | Path) -> None:
    """Write the per-round ledger with the fixed column set, UTF-8 and LF."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for report in reports:
            row = report.as_csv_row()
            fh.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")


def write_rows_csv(rows: list[dict], columns: tuple[str, ...], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def summarize(config: ExperimentConfig, result: ExperimentResult) -> dict:
    """Flatten one run into a grid summary row."""
    reports = result.reports
    row = {
        "method": config.method.kind,
        "n_sensors": config.deployment.n_sensors,
        "seed": config.seed,
        "rounds": len(reports),
        "dirichlet_alpha": config.synth.dirichlet_alpha,
        "direct_reachability": result.direct_reachability,
        "fog_reachability": result.fog_reachability,
        "participation": float(np.mean([r.participation for r in reports])) if reports else 0.0,
        "precision": result.evaluation["precision"],
        "recall": result.evaluation["recall"],
        "f1": result.evaluation["f1"],
        "pa_f1": result.evaluation["pa_f1"],
        "latency_s": float(sum(r.latency_s for r in reports)),
        "final_train_loss": reports[-1].mean_train_loss if reports else float("nan"),
        "payload_bits_total": int(sum(r.payload_bits_total for r in reports)),
    }
    for col in ("e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp", "e_round", "e_total"):
        row[col] = float(sum(getattr(r, col) for r in reports))
    return row


def write_summary_json(row: dict, result: ExperimentResult, path: str | Path) -> None:
    doc = {
        "method": row["method"],
        "n_sensors": row["n_sensors"],
        "seed": row["seed"],
        "rounds": row["rounds"],
        "reachability": {
            "direct": row["direct_reachability"],
            "fog": row["fog_reachability"],
        },
        "participation": row["participation"],
        "evaluation": result.evaluation,
        "energy_j": {k: row[k] for k in
                     ("e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp", "e_round", "e_total")},
        "latency_s": row["latency_s"],
        "payload_bits_total": row["payload_bits_total"],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_cell(config: ExperimentConfig, cell_dir: str | Path) -> dict:
    """Run one (method, scale, seed) cell and write its files."""
    result = run_experiment(config)
    row = summarize(config, result)
    cell_dir = Path(cell_dir)
    emit_csv(result.reports, cell_dir / "rounds.csv")
    write_summary_json(row, result, cell_dir / "summary.json")
    return row


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Mean/std (population) per (method, n_sensors) over seeds."""
    keys = sorted({(r["method"], r["n_sensors"]) for r in rows},
                  key=lambda k: (str(k[0]), k[1]))
    out = []
    for method, n_sensors in keys:
        group = [r for r in rows if r["method"] == method and r["n_sensors"] == n_sensors]
        agg = {"method": method, "n_sensors": n_sensors, "n_seeds": len(group)}
        for col in AGG_COLUMNS:
            vals = np.asarray([float(g[col]) for g in group])
            agg[f"{col}_mean"] = float(np.mean(vals))
            agg[f"{col}_std"] = float(np.std(vals))
        out.append(agg)
    return out


AGG_CSV_COLUMNS = ("method", "n_sensors", "n_seeds") + tuple(
    f"{c}_{stat}" for c in AGG_COLUMNS for stat in ("mean", "std"))


def _overrides_from_args(args) -> dict:
    mapping = {
        "seed": "experiment.seed",
        "method": "method.kind",
        "n_sensors": "deployment.n_sensors",
        "rounds": "experiment.rounds",
        "rho_s": "compression.rho_s",
        "out": "experiment.output_dir",
    }
    overrides = {}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[dotted] = value
    return overrides


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="INI-style config file")
    p.add_argument("--seed", type=int, help="base RNG seed")
    p.add_argument("--method", choices=ALL_KINDS, help="training method")
    p.add_argument("--n-sensors", dest="n_sensors", type=int, help="sensor count")
    p.add_argument("--rounds", type=int, help="federated rounds")
    p.add_argument("--rho-s", dest="rho_s", type=float, help="sparsification ratio")
    p.add_argument("--out", help=f"output directory (default ${DEFAULT_OUTPUT_ENV} or ./results)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwhfl",
        description="Underwater hierarchical federated learning simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single experiment cell")
    _add_common_flags(p_run)

    p_grid = sub.add_parser("grid", help="run a methods x scales x seeds sweep")
    _add_common_flags(p_grid)
    p_grid.add_argument("--methods", nargs="+", choices=ALL_KINDS, help="methods to sweep")
    p_grid.add_argument("--scales", nargs="+", type=int, help="sensor counts to sweep")
    p_grid.add_argument("--seeds", nargs="+", type=int, help="seeds to sweep")
    p_grid.add_argument("--jobs", type=int, default=1, help="concurrent grid cells")

    p_reach = sub.add_parser("reach", help="reachability-only Monte Carlo")
    p_reach.add_argument("--n-sensors", dest="n_sensors", type=int, default=200)
    p_reach.add_argument("--n-fogs", dest="n_fogs", type=int, default=None)
    p_reach.add_argument("--trials", type=int, default=10)
    p_reach.add_argument("--seed", type=int, default=0)
    p_reach.add_argument("--config", metavar="FILE", help="INI-style config file")

    p_dump = sub.add_parser("dump-topology", help="write node positions as JSON")
    p_dump.add_argument("--config", metavar="FILE", help="INI-style config file")
    p_dump.add_argument("--seed", type=int, help="base RNG seed")
    p_dump.add_argument("--n-sensors", dest="n_sensors", type=int, help="sensor count")
    p_dump.add_argument("--out", required=True, help="output JSON path")

    p_plot = sub.add_parser("plot-all", help="render all figures from grid summaries")
    p_plot.add_argument("summary_dir", help="directory holding summary.csv")
    p_plot.add_argument("out_dir", help="directory to write figure files")
    return parser


def cmd_run(args) -> int:
    config = parse_config(args.config, _overrides_from_args(args))
    out = Path(config.output_dir)
    row = run_cell(config, out)
    print(f"run complete: method={row['method']} n={row['n_sensors']} seed={row['seed']} "
          f"f1={row['f1']:.4f} pa_f1={row['pa_f1']:.4f} e_round={row['e_round']:.4f} J")
    print(f"wrote {out / 'rounds.csv'} and {out / 'summary.json'}")
    return 0


def cmd_grid(args) -> int:
    config = parse_config(args.config, _overrides_from_args(args))
    grid_overrides = {}
    if args.methods:
        grid_overrides["methods"] = tuple(args.methods)
    if args.scales:
        grid_overrides["scales"] = tuple(args.scales)
    if args.seeds:
        grid_overrides["seeds"] = tuple(args.seeds)
    methods, scales, seeds = grid_from_file(args.config, config, grid_overrides)
    out = Path(config.output_dir)
    cells = [
        (resolve_cell(config, method=m, n_sensors=n, seed=s),
         out / f"{m}_n{n}_s{s}")
        for m in methods for n in scales for s in seeds
    ]
    rows: list[dict] = []
    failures: list[dict] = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(run_cell, cfg, cdir): cdir for cfg, cdir in cells}
            for fut, cdir in futures.items():
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    failures.append({"cell": cdir.name, "error": f"{type(exc).__name__}: {exc}"})
    else:
        for cfg, cdir in cells:
            try:
                rows.append(run_cell(cfg, cdir))
            except Exception as exc:
                failures.append({"cell": cdir.name, "error": f"{type(exc).__name__}: {exc}"})
    rows.sort(key=lambda r: (str(r["method"]), r["n_sensors"], r["seed"]))
    write_rows_csv(rows, SUMMARY_COLUMNS, out / "summary.csv")
    write_rows_csv(aggregate_rows(rows), AGG_CSV_COLUMNS, out / "summary_agg.csv")
    print(f"grid complete: {len(rows)} cells ok, {len(failures)} failed; "
          f"summary at {out / 'summary.csv'}")
    if failures:
        manifest = out / "failures.json"
        with open(manifest, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"failure manifest at {manifest}", file=sys.stderr)
        return 1
    return 0


def cmd_reach(args) -> int:
    config = parse_config(args.config, {})
    deployment = DeploymentConfig(
        lx_m=config.deployment.lx_m, ly_m=config.deployment.ly_m,
        h_m=config.deployment.h_m, n_sensors=args.n_sensors,
        n_fogs=args.n_fogs, sensor_depth=config.deployment.sensor_depth,
        fog_depth=config.deployment.fog_depth,
        gateway_xy=config.deployment.gateway_xy)
    direct, fog = [], []
    for trial in range(args.trials):
        topo = deploy(deployment, np.random.default_rng([args.seed + trial, 3]))
        graph = build_graph(topo, config.acoustic)
        direct.append(direct_reachability(graph))
        fog.append(fog_reachability(graph))
    print(f"trials={args.trials} n_sensors={args.n_sensors} "
          f"n_fogs={deployment.resolved_n_fogs}")
    print(f"direct_mean={np.mean(direct):.4f} direct_std={np.std(direct):.4f}")
    print(f"fog_mean={np.mean(fog):.4f} fog_std={np.std(fog):.4f}")
    return 0


def cmd_dump_topology(args) -> int:
    config = parse_config(args.config, _overrides_from_args(args))
    deployment = replace(config.deployment, seed=config.seed)
    topo = deploy(deployment, np.random.default_rng([config.seed, 3]))
    topo.dump(args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_plot_all(args) -> int:
    from .figures import plot_all
    paths = plot_all(args.summary_dir, args.out_dir)
    for p in paths:
        print(f"wrote {p}")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "grid": cmd_grid,
    "reach": cmd_reach,
    "dump-topology": cmd_dump_topology,
    "plot-all": cmd_plot_all,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
