"""Stratified 3-D deployment, feasibility-graph construction, reachability
statistics, and optional Gauss-Markov drift of the fog layer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import AcousticParams, LinkBudget, link_budget
from .errors import ConfigError


@dataclass(frozen=True)
class DeploymentConfig:
    """Geometry of the deployment volume and node counts.

    `n_fogs=None` resolves to max(1, n_sensors // 10). `gateway_xy=None`
    places the gateway at the area centre.
    """

    lx_m: float = 2000.0
    ly_m: float = 2000.0
    h_m: float = 1000.0
    n_sensors: int = 100
    n_fogs: int | None = None
    sensor_depth: tuple[float, float] = (500.0, 1000.0)
    fog_depth: tuple[float, float] = (100.0, 400.0)
    gateway_xy: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lx_m <= 0 or self.ly_m <= 0 or self.h_m <= 0:
            raise ConfigError("deployment volume dimensions must be positive")
        if self.n_sensors < 1:
            raise ConfigError(f"need at least one sensor, got {self.n_sensors}")
        if self.n_fogs is not None and self.n_fogs < 0:
            raise ConfigError(f"n_fogs must be nonnegative, got {self.n_fogs}")
        zf_lo, zf_hi = self.fog_depth
        zs_lo, zs_hi = self.sensor_depth
        if not (0 <= zf_lo <= zf_hi <= zs_lo <= zs_hi <= self.h_m):
            raise ConfigError(
                f"strata must satisfy 0 <= fog [{zf_lo},{zf_hi}] <= sensor "
                f"[{zs_lo},{zs_hi}] <= depth {self.h_m}")

    @property
    def resolved_n_fogs(self) -> int:
        if self.n_fogs is not None:
            return self.n_fogs
        return max(1, self.n_sensors // 10)

    @property
    def resolved_gateway_xy(self) -> tuple[float, float]:
        if self.gateway_xy is not None:
            return self.gateway_xy
        return (self.lx_m / 2.0, self.ly_m / 2.0)


@dataclass
class Topology:
    """Node positions in metres; gateway sits on the surface (z = 0)."""

    sensor_pos: np.ndarray  # (N, 3)
    fog_pos: np.ndarray     # (M, 3)
    gateway_pos: np.ndarray  # (3,)
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "sensor_pos": self.sensor_pos.tolist(),
            "fog_pos": self.fog_pos.tolist(),
            "gateway_pos": self.gateway_pos.tolist(),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        doc = json.loads(text)
        return cls(
            sensor_pos=np.asarray(doc["sensor_pos"], dtype=float),
            fog_pos=np.asarray(doc["fog_pos"], dtype=float),
            gateway_pos=np.asarray(doc["gateway_pos"], dtype=float),
            seed=int(doc.get("seed", 0)),
        )

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Topology":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class FeasibilityGraph:
    """All pairwise link budgets for one round's node positions."""

    s2f: list[list[LinkBudget]]  # N x M
    s2g: list[LinkBudget]        # N
    f2f: list[list[LinkBudget]]  # M x M, diagonal unused
    f2g: list[LinkBudget]        # M

    @property
    def n_sensors(self) -> int:
        return len(self.s2g)

    @property
    def n_fogs(self) -> int:
        return len(self.f2g)


def deploy(config: DeploymentConfig, rng: np.random.Generator) -> Topology:
    """Draw sensor and fog positions uniformly within their strata."""
    n, m = config.n_sensors, config.resolved_n_fogs
    zs_lo, zs_hi = config.sensor_depth
    zf_lo, zf_hi = config.fog_depth
    sensor_pos = np.column_stack([
        rng.uniform(0.0, config.lx_m, n),
        rng.uniform(0.0, config.ly_m, n),
        rng.uniform(zs_lo, zs_hi, n),
    ])
    fog_pos = np.column_stack([
        rng.uniform(0.0, config.lx_m, m),
        rng.uniform(0.0, config.ly_m, m),
        rng.uniform(zf_lo, zf_hi, m),
    ]) if m > 0 else np.zeros((0, 3))
    gx, gy = config.resolved_gateway_xy
    return Topology(
        sensor_pos=sensor_pos,
        fog_pos=fog_pos,
        gateway_pos=np.array([gx, gy, 0.0]),
        seed=config.seed,
    )


def build_graph(topo: Topology, params: AcousticParams) -> FeasibilityGraph:
    """Evaluate link budgets for every sensor-fog, sensor-gateway, fog-fog,
    and fog-gateway pair on Euclidean distance."""
    sp, fp, gp = topo.sensor_pos, topo.fog_pos, topo.gateway_pos
    s2f = [[link_budget(float(np.linalg.norm(s - f)), params) for f in fp] for s in sp]
    s2g = [link_budget(float(np.linalg.norm(s - gp)), params) for s in sp]
    f2f = [[link_budget(float(np.linalg.norm(a - b)), params) for b in fp] for a in fp]
    f2g = [link_budget(float(np.linalg.norm(f - gp)), params) for f in fp]
    return FeasibilityGraph(s2f=s2f, s2g=s2g, f2f=f2f, f2g=f2g)


def direct_reachability(graph: FeasibilityGraph) -> float:
    """Fraction of sensors with a feasible direct link to the gateway."""
    if graph.n_sensors == 0:
        return 0.0
    return sum(lb.feasible for lb in graph.s2g) / graph.n_sensors


def fog_reachability(graph: FeasibilityGraph) -> float:
    """Fraction of sensors with at least one feasible fog link."""
    if graph.n_sensors == 0:
        return 0.0
    return sum(any(lb.feasible for lb in row) for row in graph.s2f) / graph.n_sensors


@dataclass
class MobilityConfig:
    mean_speed_mps: float = 0.5
    memory_alpha: float = 0.75
    dt_s: float = 60.0
    # Per-axis std of the driving noise, as a fraction of mean speed.
    noise_frac: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.memory_alpha <= 1.0:
            raise ConfigError(f"memory_alpha must be in [0, 1], got {self.memory_alpha}")
        if self.mean_speed_mps < 0 or self.dt_s <= 0:
            raise ConfigError("mean speed must be nonnegative and dt positive")


@dataclass
class GaussMarkovState:
    """Per-fog velocity state for between-round drift."""

    velocity: np.ndarray       # (M, 3)
    mean_velocity: np.ndarray  # (M, 3), fixed random headings at mean speed

    @classmethod
    def init(cls, n_fogs: int, cfg: MobilityConfig, rng: np.random.Generator) -> "GaussMarkovState":
        headings = rng.normal(size=(n_fogs, 3))
        norms = np.linalg.norm(headings, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        mean_v = cfg.mean_speed_mps * headings / norms
        return cls(velocity=np.zeros((n_fogs, 3)), mean_velocity=mean_v)


def gauss_markov_step(
    fog_pos: np.ndarray,
    state: GaussMarkovState,
    cfg: MobilityConfig,
    deployment: DeploymentConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, GaussMarkovState]:
    """Advance fog positions one step of the Gauss-Markov recurrence.

    v' = a*v + (1-a)*v_mean + sqrt(1-a^2)*noise, then p' = p + v'*dt,
    clamped so fogs stay inside their stratum and the deployment area.
    """
    a = cfg.memory_alpha
    sigma = cfg.noise_frac * cfg.mean_speed_mps
    noise = rng.normal(scale=sigma, size=fog_pos.shape) if sigma > 0 else np.zeros_like(fog_pos)
    v_new = a * state.velocity + (1.0 - a) * state.mean_velocity + np.sqrt(max(1.0 - a * a, 0.0)) * noise
    pos = fog_pos + v_new * cfg.dt_s
    zf_lo, zf_hi = deployment.fog_depth
    pos[:, 0] = np.clip(pos[:, 0], 0.0, deployment.lx_m)
    pos[:, 1] = np.clip(pos[:, 1], 0.0, deployment.ly_m)
    pos[:, 2] = np.clip(pos[:, 2], zf_lo, zf_hi)
    return pos, GaussMarkovState(velocity=v_new, mean_velocity=state.mean_velocity)
