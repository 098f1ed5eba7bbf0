"""Dataset construction: synthetic multivariate data with Dirichlet non-IID
mixing and injected anomaly segments, plus ingestion of benchmark-format
datasets laid out as `<root>/<entity>/{train,test,labels}.csv`."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoenc import LocalDataset
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class SynthConfig:
    n_sensors: int = 100
    dim: int = 32
    n_train: int = 600
    n_val: int = 200
    n_test: int = 400
    n_modes: int = 10
    dirichlet_alpha: float = 1.0
    anomaly_rate: float = 0.05
    anomaly_magnitude: tuple[float, float] = (3.0, 6.0)  # in units of mode sigma
    mode_sigma: float = 0.1
    anomaly_feature_frac: float = 0.25
    mean_segment_len: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise ConfigError("all splits must be positive")
        if self.dirichlet_alpha <= 0:
            raise ConfigError(f"dirichlet_alpha must be positive, got {self.dirichlet_alpha}")
        if not 0.0 <= self.anomaly_rate < 1.0:
            raise ConfigError(f"anomaly_rate must be in [0, 1), got {self.anomaly_rate}")
        if self.n_sensors < 1 or self.n_modes < 1 or self.dim < 1:
            raise ConfigError("n_sensors, n_modes, and dim must be >= 1")


@dataclass(frozen=True)
class BenchmarkSpec:
    root_path: str
    entities: tuple[str, ...]
    dim: int

    # Known benchmark feature dimensions, for load-time validation.
    KNOWN_DIMS = {"smd": 38, "smap": 25, "msl": 55}


def dirichlet_partition(
    n_modes: int, alpha: float, n_sensors: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-sensor mode-mixture weights: one Dirichlet(alpha) draw per sensor."""
    if alpha <= 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    return rng.dirichlet(np.full(n_modes, alpha), size=n_sensors)


def zscore_fit(train: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std from the train split; zero-variance features get std 1."""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def zscore_apply(x: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return (x - mu) / sd


def _draw_normal(
    n: int, weights: np.ndarray, modes: np.ndarray, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    which = rng.choice(len(modes), size=n, p=weights)
    return modes[which] + rng.normal(scale=sigma, size=(n, modes.shape[1]))


def _anomaly_segments(n_test: int, rate: float, mean_len: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean label vector with contiguous segments of geometric length."""
    labels = np.zeros(n_test, dtype=bool)
    target = int(round(rate * n_test))
    guard = 0
    while labels.sum() < target and guard < 10 * n_test:
        length = min(int(rng.geometric(1.0 / mean_len)), target - int(labels.sum()))
        start = int(rng.integers(0, max(n_test - length, 1)))
        labels[start:start + length] = True
        guard += 1
    return labels


def synth_generate(cfg: SynthConfig, rng: np.random.Generator | None = None) -> list[LocalDataset]:
    """Generate per-sensor datasets from a shared set of Gaussian modes.

    Train/val are normal-only; test rows inside anomaly segments get a
    random-sign offset of 3-6 mode-sigmas on a random quarter of the
    features. Each split is z-scored with the sensor's train statistics.
    The anomaly stream is seeded separately so changing only the anomaly
    draw leaves the normal samples untouched.
    """
    base = np.random.SeedSequence(cfg.seed)
    normal_rng = np.random.default_rng(base.spawn(1)[0]) if rng is None else rng
    anomaly_rng = np.random.default_rng([cfg.seed, 0xA])
    modes = normal_rng.uniform(-1.0, 1.0, size=(cfg.n_modes, cfg.dim))
    weights = dirichlet_partition(cfg.n_modes, cfg.dirichlet_alpha, cfg.n_sensors, normal_rng)
    lo, hi = cfg.anomaly_magnitude
    n_anom_feats = max(1, int(round(cfg.anomaly_feature_frac * cfg.dim)))
    datasets = []
    for i in range(cfg.n_sensors):
        train = _draw_normal(cfg.n_train, weights[i], modes, cfg.mode_sigma, normal_rng)
        val = _draw_normal(cfg.n_val, weights[i], modes, cfg.mode_sigma, normal_rng)
        test = _draw_normal(cfg.n_test, weights[i], modes, cfg.mode_sigma, normal_rng)
        labels = _anomaly_segments(cfg.n_test, cfg.anomaly_rate, cfg.mean_segment_len, anomaly_rng)
        for row in np.flatnonzero(labels):
            feats = anomaly_rng.choice(cfg.dim, size=n_anom_feats, replace=False)
            mag = anomaly_rng.uniform(lo, hi, size=n_anom_feats) * cfg.mode_sigma
            sign = anomaly_rng.choice([-1.0, 1.0], size=n_anom_feats)
            test[row, feats] += sign * mag
        mu, sd = zscore_fit(train)
        datasets.append(LocalDataset(
            train=zscore_apply(train, mu, sd),
            val=zscore_apply(val, mu, sd),
            test=zscore_apply(test, mu, sd),
            test_labels=labels,
            name=f"sensor{i:03d}",
        ))
    return datasets


def _read_matrix(path: Path, dim: int | None = None) -> np.ndarray:
    if not path.is_file():
        raise ConfigError(f"missing benchmark file: {path}")
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if dim is not None and mat.shape[1] != dim:
        raise ConfigError(
            f"{path}: expected {dim} features per row, found {mat.shape[1]}")
    return mat


def load_benchmark(spec: BenchmarkSpec) -> list[LocalDataset]:
    """Load `<root>/<entity>/{train,test,labels}.csv` per entity.

    Train rows are taken as a normal-only stream; the last quarter of the
    train file is held out as the validation window. All splits are
    z-scored with the entity's train statistics.
    """
    root = Path(spec.root_path)
    if not root.is_dir():
        raise ConfigError(f"benchmark root does not exist: {root}")
    datasets = []
    for entity in spec.entities:
        edir = root / entity
        train_full = _read_matrix(edir / "train.csv", spec.dim)
        test = _read_matrix(edir / "test.csv", spec.dim)
        labels = _read_matrix(edir / "labels.csv").ravel().astype(bool)
        if labels.size != test.shape[0]:
            raise ConfigError(
                f"{edir}: labels has {labels.size} rows but test has {test.shape[0]}")
        n_val = max(1, train_full.shape[0] // 4)
        train, val = train_full[:-n_val], train_full[-n_val:]
        if train.shape[0] == 0:
            raise ConfigError(f"{edir}: train split empty after validation holdout")
        mu, sd = zscore_fit(train)
        datasets.append(LocalDataset(
            train=zscore_apply(train, mu, sd),
            val=zscore_apply(val, mu, sd),
            test=zscore_apply(test, mu, sd),
            test_labels=labels,
            name=entity,
        ))
    return datasets


def dump_datasets(datasets: list[LocalDataset], root: str | Path) -> None:
    """Write datasets back out in the benchmark layout, for reproduction.

    Note the dumped train.csv holds the already-normalized train and val
    windows concatenated, matching what `load_benchmark` would re-split.
    """
    root = Path(root)
    for ds in datasets:
        edir = root / ds.name
        edir.mkdir(parents=True, exist_ok=True)
        np.savetxt(edir / "train.csv", np.vstack([ds.train, ds.val]), delimiter=",")
        np.savetxt(edir / "test.csv", ds.test, delimiter=",")
        np.savetxt(edir / "labels.csv", ds.test_labels.astype(int), fmt="%d", delimiter=",")
