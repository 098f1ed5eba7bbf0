"""Round-level accounting (energy ledger, latency, batteries, participation)
and detection quality metrics (point F1 and point-adjusted F1)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

CSV_COLUMNS = (
    "round", "e_s2f", "e_f2f", "e_f2g", "e_rx", "e_comp", "e_round",
    "e_total", "latency_s", "participation", "mean_train_loss",
    "battery_min", "battery_mean", "payload_bits_total",
)


@dataclass
class RoundReport:
    """One row of the per-run energy/latency/participation ledger.

    e_round is the three-uplink-tier sum (sensor upload + fog-to-fog +
    fog-to-gateway); e_total additionally folds in receive and computation
    energy so either notion of "total energy" can be reported.
    """

    round: int
    e_s2f: float = 0.0
    e_f2f: float = 0.0
    e_f2g: float = 0.0
    e_rx: float = 0.0
    e_comp: float = 0.0
    latency_s: float = 0.0
    participation: float = 0.0
    mean_train_loss: float = float("nan")
    battery_min: float = 0.0
    battery_mean: float = 0.0
    payload_bits_total: int = 0

    @property
    def e_round(self) -> float:
        return self.e_s2f + self.e_f2f + self.e_f2g

    @property
    def e_total(self) -> float:
        return self.e_round + self.e_rx + self.e_comp

    def as_csv_row(self) -> dict[str, float | int]:
        return {
            "round": self.round,
            "e_s2f": self.e_s2f,
            "e_f2f": self.e_f2f,
            "e_f2g": self.e_f2g,
            "e_rx": self.e_rx,
            "e_comp": self.e_comp,
            "e_round": self.e_round,
            "e_total": self.e_total,
            "latency_s": self.latency_s,
            "participation": self.participation,
            "mean_train_loss": self.mean_train_loss,
            "battery_min": self.battery_min,
            "battery_mean": self.battery_mean,
            "payload_bits_total": self.payload_bits_total,
        }


@dataclass
class BatteryState:
    """Per-sensor residual energy in joules."""

    residual: np.ndarray
    e_init: float = 500.0
    e_min: float = 0.0

    @classmethod
    def fresh(cls, n_sensors: int, e_init: float = 500.0, e_min: float = 0.0) -> "BatteryState":
        return cls(residual=np.full(n_sensors, float(e_init)), e_init=e_init, e_min=e_min)

    def can_afford(self, sensor: int, cost: float) -> bool:
        return self.residual[sensor] - cost >= self.e_min


def battery_step(state: BatteryState, costs: np.ndarray) -> tuple[BatteryState, np.ndarray]:
    """Subtract per-sensor costs; returns the new state and a below-reserve mask."""
    residual = state.residual - np.asarray(costs, dtype=float)
    new = BatteryState(residual=residual, e_init=state.e_init, e_min=state.e_min)
    return new, residual < state.e_min


def round_latency(link_times: list[list[float]], comp_time: float) -> float:
    """Slowest link across the parallel tiers, plus the computation time.

    `link_times` holds one list of per-link times (propagation + serialization)
    per tier; empty tiers contribute nothing.
    """
    tier_max = [max(times) for times in link_times if times]
    return (max(tier_max) if tier_max else 0.0) + comp_time


@dataclass
class DetectionResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _counts_to_result(tp: int, fp: int, fn: int, n_pred: int, n_actual: int) -> DetectionResult:
    # Vacuous perfection: nothing predicted and nothing to find.
    if n_pred == 0 and n_actual == 0:
        return DetectionResult(1.0, 1.0, 1.0, 0, 0, 0)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_actual if n_actual else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return DetectionResult(precision, recall, f1, tp, fp, fn)


def f1_point(pred: np.ndarray, labels: np.ndarray) -> DetectionResult:
    """Point-wise precision/recall/F1 over aligned boolean vectors."""
    pred = np.asarray(pred, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if pred.shape != labels.shape:
        raise DomainError(f"shape mismatch: {pred.shape} vs {labels.shape}")
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    return _counts_to_result(tp, fp, fn, tp + fp, tp + fn)


def adjust_predictions(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Point-adjustment: any hit inside a contiguous true segment credits the
    whole segment. Predictions outside segments are left untouched."""
    pred = np.asarray(pred, dtype=bool).copy()
    labels = np.asarray(labels, dtype=bool)
    if pred.shape != labels.shape:
        raise DomainError(f"shape mismatch: {pred.shape} vs {labels.shape}")
    n = labels.size
    i = 0
    while i < n:
        if labels[i]:
            j = i
            while j < n and labels[j]:
                j += 1
            if pred[i:j].any():
                pred[i:j] = True
            i = j
        else:
            i += 1
    return pred


def f1_point_adjusted(pred: np.ndarray, labels: np.ndarray) -> DetectionResult:
    """Point-adjusted F1: adjust per-segment, then score point-wise."""
    return f1_point(adjust_predictions(pred, labels), labels)


def pooled_detection(
    preds: list[np.ndarray],
    labels: list[np.ndarray],
    adjusted: bool,
    skip_label_free: bool = False,
) -> DetectionResult:
    """Pool confusion counts over per-sensor prediction streams.

    Point adjustment is applied within each stream so segments never span
    sensors. With `skip_label_free`, streams with zero true anomalies are
    excluded from the pooled counts (benchmark entities without labels).
    """
    tp = fp = fn = n_pred = n_actual = 0
    for p, y in zip(preds, labels):
        y = np.asarray(y, dtype=bool)
        if skip_label_free and not y.any():
            continue
        r = f1_point_adjusted(p, y) if adjusted else f1_point(p, y)
        tp += r.tp
        fp += r.fp
        fn += r.fn
        n_pred += r.tp + r.fp
        n_actual += r.tp + r.fn
    return _counts_to_result(tp, fp, fn, n_pred, n_actual)


def objective_value(
    final_loss: float,
    energy_series: list[float],
    latency_series: list[float],
    lambda_e: float,
    lambda_tau: float,
) -> float:
    """Reported scalar objective: final loss plus weighted energy and latency sums."""
    return final_loss + lambda_e * float(np.sum(energy_series)) + lambda_tau * float(np.sum(latency_series))
