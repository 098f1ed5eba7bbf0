"""Experiment configuration: the full run description, an INI-style config
file parser with schema validation, and assembly of run inputs."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autoenc import DEFAULT_LAYER_SIZES, SgdConfig
from .channel import AcousticParams
from .compression import CompressionConfig
from .data import BenchmarkSpec, SynthConfig, load_benchmark, synth_generate
from .errors import ConfigError
from .federation import MethodSpec
from .topology import (DeploymentConfig, GaussMarkovState, MobilityConfig,
                       build_graph, deploy)

DEFAULT_OUTPUT_ENV = "UWHFL_OUT"


@dataclass(frozen=True)
class ExperimentConfig:
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    acoustic: AcousticParams = field(default_factory=AcousticParams)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    method: MethodSpec = field(default_factory=MethodSpec)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    data_kind: str = "synth"
    synth: SynthConfig = field(default_factory=SynthConfig)
    benchmark: BenchmarkSpec | None = None
    layer_sizes: tuple[int, ...] = DEFAULT_LAYER_SIZES
    rounds: int = 20
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    e_init: float = 500.0
    e_min: float = 0.0
    threshold_percentile: float = 99.0
    lambda_e: float = 0.0
    lambda_tau: float = 0.0
    mobility_enabled: bool = False
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    output_dir: str = field(
        default_factory=lambda: os.environ.get(DEFAULT_OUTPUT_ENV, "results"))

    def __post_init__(self) -> None:
        if self.data_kind not in ("synth", "benchmark"):
            raise ConfigError(f"data kind must be 'synth' or 'benchmark', got {self.data_kind!r}")
        if self.rounds < 0:
            raise ConfigError(f"rounds must be nonnegative, got {self.rounds}")
        if self.data_kind == "benchmark" and self.benchmark is None:
            raise ConfigError("benchmark data kind requires root and entities")


# section -> key -> value parser
_PAIR = lambda s: tuple(float(x) for x in s.split(","))
_INTS = lambda s: tuple(int(x) for x in s.split(","))
_STRS = lambda s: tuple(x.strip() for x in s.split(",") if x.strip())
_BOOL = lambda s: {"true": True, "1": True, "yes": True,
                   "false": False, "0": False, "no": False}[s.strip().lower()]

_SCHEMA: dict[str, dict[str, object]] = {
    "deployment": {
        "lx_m": float, "ly_m": float, "h_m": float, "n_sensors": int,
        "n_fogs": int, "sensor_depth": _PAIR, "fog_depth": _PAIR,
        "gateway_xy": _PAIR,
    },
    "acoustic": {
        "carrier_freq_khz": float, "bandwidth_hz": float, "spreading_factor": float,
        "sound_speed_mps": float, "wind_mps": float, "shipping": float,
        "target_snr_db": float, "impl_loss_db": float, "sl_max_db": float,
        "ea_efficiency": float, "circuit_tx_w": float, "circuit_rx_w": float,
        "water_density": float, "ref_pressure": float,
        "eps_op_j_per_flop": float, "compute_rate_flops": float,
    },
    "sgd": {"epochs": int, "lr": float, "batch_size": int},
    "method": {
        "kind": str, "prox_mu": float, "nearest_weights": _PAIR,
        "selective_weights": _PAIR, "selective_distance_quantile": float,
        "small_cluster_factor": float, "max_neighbours": int,
    },
    "compression": {"rho_s": float, "quantization": _BOOL},
    "data": {
        "kind": str, "n_train": int, "n_val": int, "n_test": int,
        "n_modes": int, "dirichlet_alpha": float, "anomaly_rate": float,
        "anomaly_magnitude": _PAIR, "root": str, "entities": _STRS, "dim": int,
    },
    "experiment": {
        "rounds": int, "seed": int, "seeds": _INTS, "e_init": float,
        "e_min": float, "threshold_percentile": float, "lambda_e": float,
        "lambda_tau": float, "output_dir": str, "mobility": _BOOL,
        "mobility_speed": float, "mobility_alpha": float, "mobility_dt": float,
    },
    "grid": {"methods": _STRS, "scales": _INTS, "seeds": _INTS},
}


def _line_of(text: str, token: str) -> int | None:
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(token) or stripped.startswith(f"[{token}]"):
            return lineno
    return None


def read_config_file(path: str | Path) -> dict[str, dict[str, object]]:
    """Parse and schema-check an INI config file into {section: {key: value}}."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            line = _line_of(text, section)
            raise ConfigError(
                f"{path}:{line}: unknown section [{section}]; valid sections: "
                + ", ".join(_SCHEMA))
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                line = _line_of(text, key)
                raise ConfigError(
                    f"{path}:{line}: unknown key {key!r} in [{section}]; valid keys: "
                    + ", ".join(_SCHEMA[section]))
            caster = _SCHEMA[section][key]
            try:
                out[section][key] = caster(raw)  # type: ignore[operator]
            except (ValueError, KeyError) as exc:
                line = _line_of(text, key)
                raise ConfigError(f"{path}:{line}: bad value for {key!r}: {raw!r}") from exc
    return out


def _build(section: dict[str, object], cls, **renames):
    kwargs = {renames.get(k, k): v for k, v in section.items()}
    return cls(**kwargs)


def config_from_sections(sections: dict[str, dict[str, object]]) -> ExperimentConfig:
    dep = _build(sections.get("deployment", {}), DeploymentConfig)
    acoustic = _build(sections.get("acoustic", {}), AcousticParams)
    sgd = _build(sections.get("sgd", {}), SgdConfig)
    method = _build(sections.get("method", {}), MethodSpec)
    comp = _build(sections.get("compression", {}), CompressionConfig)
    data_sec = dict(sections.get("data", {}))
    data_kind = str(data_sec.pop("kind", "synth"))
    benchmark = None
    if data_kind == "benchmark":
        root = data_sec.pop("root", None)
        entities = data_sec.pop("entities", ())
        dim = data_sec.pop("dim", None)
        if root is None or not entities or dim is None:
            raise ConfigError("[data] kind=benchmark requires root, entities, and dim")
        benchmark = BenchmarkSpec(str(root), tuple(entities), int(dim))
        if data_sec:
            raise ConfigError(f"keys not valid for benchmark data: {sorted(data_sec)}")
        synth = SynthConfig()
    else:
        for k in ("root", "entities", "dim"):
            if k in data_sec:
                raise ConfigError(f"[data] key {k!r} only valid with kind=benchmark")
        synth = _build(data_sec, SynthConfig)
    exp = dict(sections.get("experiment", {}))
    mobility = MobilityConfig(
        mean_speed_mps=float(exp.pop("mobility_speed", 0.5)),
        memory_alpha=float(exp.pop("mobility_alpha", 0.75)),
        dt_s=float(exp.pop("mobility_dt", 60.0)),
    )
    mobility_enabled = bool(exp.pop("mobility", False))
    kwargs = dict(
        deployment=dep, acoustic=acoustic, sgd=sgd, method=method,
        compression=comp, data_kind=data_kind, synth=synth, benchmark=benchmark,
        mobility=mobility, mobility_enabled=mobility_enabled,
    )
    kwargs.update(exp)
    return ExperimentConfig(**kwargs)


def parse_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from a file (all-default when absent) plus overrides.

    Precedence: override flags > file values > built-in defaults.
    `overrides` maps dotted keys like "method.kind" or "experiment.seed".
    """
    sections = read_config_file(path) if path is not None else {}
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override {dotted!r}")
        sections.setdefault(section, {})[key] = value
    sections.pop("grid", None)
    return config_from_sections(sections)


def grid_from_file(path: str | Path | None, config: ExperimentConfig,
                   overrides: dict | None = None) -> tuple[tuple[str, ...], tuple[int, ...], tuple[int, ...]]:
    """(methods, scales, seeds) for a grid sweep, falling back to the base
    config's method / sensor count / seed list."""
    sections = read_config_file(path) if path is not None else {}
    grid = dict(sections.get("grid", {}))
    grid.update(overrides or {})
    methods = tuple(grid.get("methods", (config.method.kind,)))
    scales = tuple(grid.get("scales", (config.deployment.n_sensors,)))
    seeds = tuple(grid.get("seeds", config.seeds))
    return methods, scales, seeds


def resolve_cell(config: ExperimentConfig, method: str | None = None,
                 n_sensors: int | None = None, seed: int | None = None) -> ExperimentConfig:
    """Specialise the base config for one grid cell."""
    out = config
    if method is not None:
        out = replace(out, method=replace(out.method, kind=method))
    if n_sensors is not None:
        out = replace(out, deployment=replace(out.deployment, n_sensors=n_sensors))
    if seed is not None:
        out = replace(out, seed=seed)
    return out


def build_inputs(config: ExperimentConfig):
    """Materialise datasets, topology, feasibility graph, and mobility state."""
    if config.data_kind == "benchmark":
        datasets = load_benchmark(config.benchmark)
        deployment = replace(
            config.deployment,
            n_sensors=len(datasets),
            n_fogs=config.deployment.n_fogs or max(2, len(datasets) // 10),
            seed=config.seed,
        )
    else:
        synth = replace(
            config.synth,
            n_sensors=config.deployment.n_sensors,
            dim=config.layer_sizes[0],
            seed=config.seed,
        )
        datasets = synth_generate(synth)
        deployment = replace(config.deployment, seed=config.seed)
    topo = deploy(deployment, np.random.default_rng([config.seed, 3]))
    graph = build_graph(topo, config.acoustic)
    mobility = None
    if config.mobility_enabled:
        state = GaussMarkovState.init(
            deployment.resolved_n_fogs, config.mobility, np.random.default_rng([config.seed, 6]))
        mobility = (config.mobility, state)
    return datasets, topo, graph, mobility
