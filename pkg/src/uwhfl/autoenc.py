"""The anomaly detector: a small symmetric autoencoder stored as one flat
parameter vector, with exact backprop gradients, local SGD (plain and
proximal), reconstruction scoring, and percentile threshold calibration.

Flat parameter layout (canonical, relied on by the compression module):
for each layer in order, the weight matrix W (shape n_in x n_out, row-major)
followed by the bias vector b (length n_out). Hidden layers apply ReLU,
the output layer is affine only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError

DEFAULT_LAYER_SIZES = (32, 16, 8, 16, 32)


@dataclass
class ModelParams:
    layer_sizes: tuple[int, ...]
    values: np.ndarray  # flat, float64

    @property
    def d_params(self) -> int:
        return self.values.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.layer_sizes, self.values.copy())


@dataclass
class LocalDataset:
    """One sensor's data. Train and val windows are normal-only; only the
    test window carries anomaly labels."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray  # bool, aligned with test rows
    name: str = ""


@dataclass(frozen=True)
class SgdConfig:
    epochs: int = 5
    lr: float = 0.01
    batch_size: int = 32
    prox_mu: float = 0.0  # 0 disables the proximal pull (plain FedAvg step)

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise DomainError(f"learning rate must be positive, got {self.lr}")
        if self.prox_mu < 0:
            raise DomainError(f"prox_mu must be nonnegative, got {self.prox_mu}")


def param_count(layer_sizes: tuple[int, ...]) -> int:
    return sum(n_in * n_out + n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_params(layer_sizes: tuple[int, ...], rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    chunks = []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-limit, limit, n_in * n_out))
        chunks.append(np.zeros(n_out))
    return ModelParams(tuple(layer_sizes), np.concatenate(chunks))


def _unpack(params: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views into the flat vector as (W, b) pairs; no copies."""
    layers = []
    offset = 0
    sizes = params.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = params.values[offset:offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = params.values[offset:offset + n_out]
        offset += n_out
        layers.append((w, b))
    if offset != params.values.size:
        raise DomainError(
            f"parameter vector length {params.values.size} does not match "
            f"layer sizes {sizes} (expected {offset})")
    return layers


def _forward_batch(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass on a batch; returns output and per-layer activations
    (inputs to each layer) for backprop."""
    layers = _unpack(params)
    acts = [x]
    h = x
    for idx, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.maximum(z, 0.0) if idx < len(layers) - 1 else z
        acts.append(h)
    return h, acts


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Reconstruct a single sample or a batch (last axis is the feature axis)."""
    single = x.ndim == 1
    out, _ = _forward_batch(params, np.atleast_2d(np.asarray(x, dtype=float)))
    return out[0] if single else out


def loss(params: ModelParams, batch: np.ndarray) -> float:
    """Mean squared reconstruction error: mean over samples of ||x - x_hat||^2."""
    out, _ = _forward_batch(params, np.atleast_2d(batch))
    diff = out - np.atleast_2d(batch)
    return float(np.mean(np.sum(diff * diff, axis=1)))


def gradient(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Exact backprop gradient of `loss` wrt the flat parameter vector.

    ReLU subgradient at exactly 0 is taken as 0.
    """
    x = np.atleast_2d(batch)
    n = x.shape[0]
    layers = _unpack(params)
    out, acts = _forward_batch(params, x)
    grad = np.empty_like(params.values)
    delta = 2.0 * (out - x) / n  # d(mean ||x - out||^2) / d(out)
    offset = params.values.size
    for idx in range(len(layers) - 1, -1, -1):
        w, _ = layers[idx]
        h_in = acts[idx]
        if idx < len(layers) - 1:
            delta = delta * (acts[idx + 1] > 0)  # ReLU mask on this layer's output
        gb = delta.sum(axis=0)
        gw = h_in.T @ delta
        offset -= gb.size
        grad[offset:offset + gb.size] = gb
        offset -= gw.size
        grad[offset:offset + gw.size] = gw.ravel()
        delta = delta @ w.T
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return grad


def local_sgd(
    start: ModelParams,
    data: LocalDataset,
    cfg: SgdConfig,
    rng: np.random.Generator,
) -> tuple[ModelParams, int]:
    """Run E epochs of shuffled mini-batch SGD from `start`.

    With prox_mu > 0 each step adds mu * (theta - theta_start) to the
    gradient (proximal local objective). Returns the updated parameters and
    the FLOP count used for computation-energy accounting (6 * d per sample
    seen: ~2d forward, ~4d backward multiply-accumulates).
    """
    if data.train.size == 0:
        raise DomainError(f"empty training split for sensor {data.name!r}")
    theta = start.copy()
    anchor = start.values
    n = data.train.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            batch = data.train[order[lo:lo + cfg.batch_size]]
            g = gradient(theta, batch)
            if cfg.prox_mu > 0:
                g = g + cfg.prox_mu * (theta.values - anchor)
            theta.values -= cfg.lr * g
    if not np.all(np.isfinite(theta.values)):
        raise NumericError(f"local SGD diverged for sensor {data.name!r}")
    flops = 6 * start.d_params * cfg.epochs * n
    return theta, flops


def scores(params: ModelParams, samples: np.ndarray) -> np.ndarray:
    """Per-sample squared reconstruction error."""
    x = np.atleast_2d(samples)
    out, _ = _forward_batch(params, x)
    diff = out - x
    return np.sum(diff * diff, axis=1)


def calibrate_threshold(errors: np.ndarray, p: float) -> float:
    """Nearest-rank p-th percentile: sort ascending, take element ceil(p/100*n)."""
    errs = np.asarray(errors, dtype=float).ravel()
    if errs.size == 0:
        raise DomainError("cannot calibrate a threshold on empty errors")
    if not 0.0 < p <= 100.0:
        raise DomainError(f"percentile must be in (0, 100], got {p}")
    rank = int(np.ceil(p / 100.0 * errs.size))  # 1-based
    return float(np.sort(errs)[rank - 1])


def flag(score_values: np.ndarray, threshold: float) -> np.ndarray:
    """Strictly-greater-than anomaly flags."""
    return np.asarray(score_values) > threshold
