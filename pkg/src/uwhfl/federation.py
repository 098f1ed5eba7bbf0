"""Association and cooperation rules, fog/global aggregation, and the
per-round training loop for flat and hierarchical federated methods."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import autoenc, channel, compression
from .autoenc import LocalDataset, ModelParams, SgdConfig
from .channel import AcousticParams, comp_energy, rx_energy, tx_energy
from .compression import CompressionConfig, ErrorBuffer
from .errors import ConfigError, DomainError
from .metrics import BatteryState, RoundReport, battery_step, pooled_detection, round_latency
from .topology import (FeasibilityGraph, build_graph, direct_reachability,
                       fog_reachability, gauss_markov_step)

if TYPE_CHECKING:
    from .config import ExperimentConfig

FLAT_KINDS = ("fedavg", "fedprox")
HFL_KINDS = ("hfl_nocoop", "hfl_selective", "hfl_nearest")
ALL_KINDS = ("centralised",) + FLAT_KINDS + HFL_KINDS

FULL_PRECISION_BITS = 32  # per coordinate, fog-tier exchanges


@dataclass(frozen=True)
class MethodSpec:
    """Which training method runs, plus the cooperation-rule constants."""

    kind: str = "hfl_selective"
    prox_mu: float = 0.01
    nearest_weights: tuple[float, float] = (0.7, 0.3)
    selective_weights: tuple[float, float] = (0.8, 0.2)
    selective_distance_quantile: float = 0.25
    small_cluster_factor: float = 0.75
    max_neighbours: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ALL_KINDS:
            raise ConfigError(
                f"unknown method {self.kind!r}; valid kinds: {', '.join(ALL_KINDS)}")
        for w in (self.nearest_weights, self.selective_weights):
            if min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
                raise ConfigError(f"mixing weights must be nonnegative and sum to 1, got {w}")
        if self.max_neighbours < 0:
            raise ConfigError("max_neighbours must be nonnegative")
        if self.prox_mu < 0:
            raise ConfigError("prox_mu must be nonnegative")

    @property
    def is_flat(self) -> bool:
        return self.kind in FLAT_KINDS

    @property
    def is_hfl(self) -> bool:
        return self.kind in HFL_KINDS

    @property
    def local_prox_mu(self) -> float:
        return self.prox_mu if self.kind == "fedprox" else 0.0


@dataclass(frozen=True)
class CoopEdge:
    """Directed cooperation edge: fog `src` mixes in fog `neighbour`'s model."""

    src: int
    neighbour: int
    weights: tuple[float, float]  # (self, neighbour)


@dataclass
class RoundState:
    """Mutable cross-round state plus the last round's decisions (kept for
    reporting and tests)."""

    global_model: ModelParams
    batteries: BatteryState
    buffers: list[ErrorBuffer]
    round_idx: int = 0
    assignments: dict[int, int | None] = field(default_factory=dict)
    clusters: dict[int, list[int]] = field(default_factory=dict)
    coop_edges: list[CoopEdge] = field(default_factory=list)
    active_sensors: set[int] = field(default_factory=set)


def associate_flat(graph: FeasibilityGraph) -> set[int]:
    """Sensors allowed to participate in flat FL: feasible direct gateway link."""
    return {i for i, lb in enumerate(graph.s2g) if lb.feasible}


def associate_hfl(graph: FeasibilityGraph) -> dict[int, int | None]:
    """Nearest feasible fog per sensor (ties to the lower fog index);
    sensors with no feasible fog are inactive (None)."""
    assignments: dict[int, int | None] = {}
    for i, row in enumerate(graph.s2f):
        best: int | None = None
        best_d = np.inf
        for m, lb in enumerate(row):
            if lb.feasible and lb.distance_m < best_d:
                best, best_d = m, lb.distance_m
        assignments[i] = best
    return assignments


def clusters_from_assignments(assignments: dict[int, int | None], n_fogs: int) -> dict[int, list[int]]:
    clusters: dict[int, list[int]] = {m: [] for m in range(n_fogs)}
    for i in sorted(assignments):
        m = assignments[i]
        if m is not None:
            clusters[m].append(i)
    return clusters


def fog_aggregate(theta_t: ModelParams, cluster_updates: list[tuple[np.ndarray, int]]) -> ModelParams:
    """Data-weighted average of dense updates applied on top of the global model."""
    if not cluster_updates:
        raise DomainError("fog_aggregate called on an empty cluster")
    total = sum(n for _, n in cluster_updates)
    acc = np.zeros_like(theta_t.values)
    for delta, n in cluster_updates:
        acc += (n / total) * delta
    return ModelParams(theta_t.layer_sizes, theta_t.values + acc)


def _feasible_fog_neighbours(graph: FeasibilityGraph, m: int, candidates: list[int]) -> list[int]:
    return [j for j in candidates if j != m and graph.f2f[m][j].feasible]


def coop_select_nearest(graph: FeasibilityGraph, clusters: dict[int, list[int]],
                        spec: MethodSpec) -> list[CoopEdge]:
    """Always-on rule: every non-empty fog mixes with its nearest feasible
    non-empty fog, at the fixed nearest-cooperation weights."""
    non_empty = [m for m, members in clusters.items() if members]
    edges = []
    for m in non_empty:
        neighbours = _feasible_fog_neighbours(graph, m, non_empty)
        if not neighbours:
            continue
        j = min(neighbours, key=lambda j: (graph.f2f[m][j].distance_m, j))
        edges.append(CoopEdge(m, j, spec.nearest_weights))
    return edges


def _feasible_fog_distance_quantile(graph: FeasibilityGraph, q: float) -> float:
    """Nearest-rank quantile of all feasible fog-fog distances (unordered pairs)."""
    dists = sorted(
        graph.f2f[m][j].distance_m
        for m in range(graph.n_fogs)
        for j in range(m + 1, graph.n_fogs)
        if graph.f2f[m][j].feasible
    )
    if not dists:
        return 0.0
    rank = max(1, int(np.ceil(q * len(dists))))
    return dists[rank - 1]


def coop_select_selective(graph: FeasibilityGraph, clusters: dict[int, list[int]],
                          spec: MethodSpec) -> list[CoopEdge]:
    """Selective rule: only under-sized clusters cooperate, and only with the
    nearest feasible larger-cluster fog that is closer than the first
    quartile of feasible fog distances. No match means no cooperation."""
    sizes = {m: len(members) for m, members in clusters.items()}
    non_empty = [m for m, c in sizes.items() if c > 0]
    if not non_empty:
        return []
    mean_size = float(np.mean([sizes[m] for m in non_empty]))
    cutoff = _feasible_fog_distance_quantile(graph, spec.selective_distance_quantile)
    threshold = max(2.0, spec.small_cluster_factor * mean_size)
    edges = []
    for m in non_empty:
        if sizes[m] > threshold:
            continue
        candidates = [
            j for j in _feasible_fog_neighbours(graph, m, non_empty)
            if sizes[j] > sizes[m] and graph.f2f[m][j].distance_m < cutoff
        ]
        if not candidates:
            continue
        j = min(candidates, key=lambda j: (graph.f2f[m][j].distance_m, j))
        edges.append(CoopEdge(m, j, spec.selective_weights))
    return edges


def coop_select(graph: FeasibilityGraph, clusters: dict[int, list[int]],
                spec: MethodSpec) -> list[CoopEdge]:
    if spec.kind == "hfl_nearest":
        return coop_select_nearest(graph, clusters, spec)
    if spec.kind == "hfl_selective":
        return coop_select_selective(graph, clusters, spec)
    return []


def coop_mix(models: dict[int, ModelParams], edges: list[CoopEdge]) -> dict[int, ModelParams]:
    """Apply the cooperative mixing step; fogs without an edge pass through."""
    mixed = {m: theta for m, theta in models.items()}
    for edge in edges:
        w_self, w_neigh = edge.weights
        theta_m = models[edge.src]
        theta_j = models[edge.neighbour]
        mixed[edge.src] = ModelParams(
            theta_m.layer_sizes, w_self * theta_m.values + w_neigh * theta_j.values)
    return mixed


def global_aggregate(mixed: dict[int, ModelParams], clusters: dict[int, list[int]],
                     n_samples: dict[int, int]) -> ModelParams:
    """Gateway fusion: data-weighted mean over fogs with non-empty clusters."""
    weights = {m: sum(n_samples[i] for i in clusters[m]) for m in mixed if clusters.get(m)}
    total = sum(weights.values())
    if total == 0:
        raise DomainError("global_aggregate with no contributing sensors")
    first = next(iter(mixed.values()))
    acc = np.zeros_like(first.values)
    for m, w in weights.items():
        acc += (w / total) * mixed[m].values
    return ModelParams(first.layer_sizes, acc)


def _sensor_rng(seed: int, round_idx: int, sensor: int) -> np.random.Generator:
    # Stream depends only on (seed, round, sensor), never on scheduling.
    return np.random.default_rng([seed, 1, round_idx, sensor])


def run_round(
    state: RoundState,
    graph: FeasibilityGraph,
    datasets: list[LocalDataset],
    method: MethodSpec,
    sgd: SgdConfig,
    comp_cfg: CompressionConfig,
    params: AcousticParams,
    seed: int,
) -> tuple[RoundState, RoundReport]:
    """One federated round: associate, train, compress, aggregate, cooperate,
    fuse, and account energy/latency/batteries."""
    n = len(datasets)
    theta_t = state.global_model
    d = theta_t.d_params
    sgd_local = SgdConfig(sgd.epochs, sgd.lr, sgd.batch_size, method.local_prox_mu)
    report = RoundReport(round=state.round_idx)

    if method.is_flat:
        assignments: dict[int, int | None] = {
            i: -1 if i in associate_flat(graph) else None for i in range(n)}
        uplink = lambda i: graph.s2g[i]
    elif method.is_hfl:
        assignments = associate_hfl(graph)
        uplink = lambda i: graph.s2f[i][assignments[i]]
    else:
        raise ConfigError(f"run_round does not handle method kind {method.kind!r}")

    # Per-sensor known-in-advance round cost, for the battery reserve check.
    upload_bits = compression.upload_payload_bits(comp_cfg, d)
    flops_per_sensor = [6 * d * sgd.epochs * ds.train.shape[0] for ds in datasets]

    updates: dict[int, compression.CompressedUpdate] = {}
    active: set[int] = set()
    costs = np.zeros(n)
    uplink_times: list[float] = []
    train_losses: list[float] = []
    max_flops = 0
    for i in range(n):
        if assignments[i] is None:
            continue
        lb = uplink(i)
        e_up = tx_energy(upload_bits, lb, params)
        e_cpu = comp_energy(flops_per_sensor[i], params.eps_op_j_per_flop)
        if not state.batteries.can_afford(i, e_up + e_cpu):
            continue
        active.add(i)
        train_losses.append(autoenc.loss(theta_t, datasets[i].train))
        theta_i, flops = autoenc.local_sgd(
            theta_t, datasets[i], sgd_local, _sensor_rng(seed, state.round_idx, i))
        delta = theta_i.values - theta_t.values
        cu, state.buffers[i] = compression.compress(
            delta, state.buffers[i], comp_cfg.rho_s, datasets[i].train.shape[0],
            quantization=comp_cfg.quantization)
        updates[i] = cu
        costs[i] = e_up + e_cpu
        report.e_s2f += e_up
        report.e_rx += rx_energy(cu.payload_bits, lb, params)
        report.e_comp += e_cpu
        report.payload_bits_total += cu.payload_bits
        uplink_times.append(lb.prop_delay_s + cu.payload_bits / lb.rate_bps)
        max_flops = max(max_flops, flops)

    n_samples = {i: updates[i].n_samples for i in updates}
    f2f_times: list[float] = []
    f2g_times: list[float] = []
    coop_edges: list[CoopEdge] = []
    clusters: dict[int, list[int]] = {}

    if active:
        if method.is_flat:
            total = sum(n_samples.values())
            acc = np.zeros(d)
            for i in sorted(updates):
                acc += (n_samples[i] / total) * compression.decompress(
                    updates[i], comp_cfg.quantization)
            new_global = ModelParams(theta_t.layer_sizes, theta_t.values + acc)
        else:
            clusters = clusters_from_assignments(
                {i: assignments[i] for i in active}, graph.n_fogs)
            fog_models = {
                m: fog_aggregate(theta_t, [
                    (compression.decompress(updates[i], comp_cfg.quantization), n_samples[i])
                    for i in members])
                for m, members in clusters.items() if members
            }
            coop_edges = coop_select(graph, clusters, method)
            fog_bits = FULL_PRECISION_BITS * d
            for edge in coop_edges:
                lb = graph.f2f[edge.src][edge.neighbour]
                report.e_f2f += tx_energy(fog_bits, lb, params)
                report.e_rx += rx_energy(fog_bits, lb, params)
                f2f_times.append(lb.prop_delay_s + fog_bits / lb.rate_bps)
            mixed = coop_mix(fog_models, coop_edges)
            for m in fog_models:
                lb = graph.f2g[m]
                # Fogs outside direct gateway range still deliver their
                # aggregate (out-of-model control path); only feasible
                # acoustic uplinks are charged.
                if lb.feasible:
                    report.e_f2g += tx_energy(fog_bits, lb, params)
                    report.e_rx += rx_energy(fog_bits, lb, params)
                    f2g_times.append(lb.prop_delay_s + fog_bits / lb.rate_bps)
            new_global = global_aggregate(mixed, clusters, n_samples)
    else:
        new_global = theta_t.copy()

    new_batteries, _ = battery_step(state.batteries, costs)

    report.participation = len(active) / n if n else 0.0
    report.mean_train_loss = float(np.mean(train_losses)) if train_losses else float("nan")
    report.latency_s = round_latency(
        [uplink_times, f2f_times, f2g_times], max_flops / params.compute_rate_flops)
    report.battery_min = float(np.min(new_batteries.residual)) if n else 0.0
    report.battery_mean = float(np.mean(new_batteries.residual)) if n else 0.0

    new_state = RoundState(
        global_model=new_global,
        batteries=new_batteries,
        buffers=state.buffers,
        round_idx=state.round_idx + 1,
        assignments=assignments,
        clusters=clusters,
        coop_edges=coop_edges,
        active_sensors=active,
    )
    return new_state, report


@dataclass
class ExperimentResult:
    reports: list[RoundReport]
    final_model: ModelParams
    evaluation: dict
    direct_reachability: float
    fog_reachability: float


def evaluate_model(model: ModelParams, datasets: list[LocalDataset],
                   percentile: float = 99.0, skip_label_free: bool = False) -> dict:
    """Global-threshold evaluation: pool validation errors, calibrate the
    percentile threshold, then score pooled test predictions."""
    val_errors = np.concatenate([autoenc.scores(model, ds.val) for ds in datasets])
    tau = autoenc.calibrate_threshold(val_errors, percentile)
    preds = [autoenc.flag(autoenc.scores(model, ds.test), tau) for ds in datasets]
    labels = [ds.test_labels for ds in datasets]
    point = pooled_detection(preds, labels, adjusted=False, skip_label_free=skip_label_free)
    adjusted = pooled_detection(preds, labels, adjusted=True, skip_label_free=skip_label_free)
    return {
        "threshold": tau,
        "precision": point.precision,
        "recall": point.recall,
        "f1": point.f1,
        "pa_precision": adjusted.precision,
        "pa_recall": adjusted.recall,
        "pa_f1": adjusted.f1,
    }


def run_experiment(config: "ExperimentConfig") -> ExperimentResult:
    """Run T federated rounds for one (method, seed) cell, then calibrate the
    global threshold and evaluate on the pooled test windows."""
    from .config import build_inputs  # deferred: config imports this module

    datasets, topo, graph, mobility = build_inputs(config)
    if config.method.kind == "centralised":
        return run_centralised(config, datasets, graph)
    model = autoenc.init_params(config.layer_sizes, np.random.default_rng([config.seed, 2]))
    state = RoundState(
        global_model=model,
        batteries=BatteryState.fresh(len(datasets), config.e_init, config.e_min),
        buffers=[ErrorBuffer.zeros(model.d_params) for _ in datasets],
    )
    reports = []
    for t in range(config.rounds):
        state, report = run_round(
            state, graph, datasets, config.method, config.sgd,
            config.compression, config.acoustic, config.seed)
        reports.append(report)
        if mobility is not None:
            cfg_mob, mob_state = mobility
            topo.fog_pos, mob_state = gauss_markov_step(
                topo.fog_pos, mob_state, cfg_mob, config.deployment,
                np.random.default_rng([config.seed, 4, t]))
            mobility = (cfg_mob, mob_state)
            graph = build_graph(topo, config.acoustic)
    evaluation = evaluate_model(
        state.global_model, datasets, config.threshold_percentile,
        skip_label_free=config.data_kind == "benchmark")
    return ExperimentResult(
        reports=reports,
        final_model=state.global_model,
        evaluation=evaluation,
        direct_reachability=direct_reachability(graph),
        fog_reachability=fog_reachability(graph),
    )


def run_centralised(config: "ExperimentConfig", datasets: list[LocalDataset],
                    graph: FeasibilityGraph) -> ExperimentResult:
    """All-data oracle: pool every sensor's train split at the gateway and
    train one model with the same SGD budget (T rounds x E epochs).

    Energy is the one-time raw-data upload (32 bits per feature per training
    sample) over the direct sensor-gateway links; infeasible links deliver
    at zero modeled acoustic cost, matching the fog-delivery convention.
    """
    if not datasets:
        raise DomainError("centralised training needs at least one sensor")
    pooled = LocalDataset(
        train=np.vstack([ds.train for ds in datasets]),
        val=np.vstack([ds.val for ds in datasets]),
        test=np.vstack([ds.test for ds in datasets]),
        test_labels=np.concatenate([ds.test_labels for ds in datasets]),
        name="pooled",
    )
    model = autoenc.init_params(config.layer_sizes, np.random.default_rng([config.seed, 2]))
    total_epochs = SgdConfig(
        config.rounds * config.sgd.epochs, config.sgd.lr, config.sgd.batch_size, 0.0)
    trained, flops = autoenc.local_sgd(
        model, pooled, total_epochs, _sensor_rng(config.seed, 0, 0))
    report = RoundReport(round=0)
    dim = datasets[0].train.shape[1]
    for i, ds in enumerate(datasets):
        bits = 32 * dim * ds.train.shape[0]
        lb = graph.s2g[i]
        if lb.feasible:
            report.e_s2f += tx_energy(bits, lb, config.acoustic)
            report.e_rx += rx_energy(bits, lb, config.acoustic)
        report.payload_bits_total += bits
    report.e_comp = comp_energy(flops, config.acoustic.eps_op_j_per_flop)
    report.participation = 1.0
    report.mean_train_loss = autoenc.loss(trained, pooled.train)
    evaluation = evaluate_model(
        trained, datasets, config.threshold_percentile,
        skip_label_free=config.data_kind == "benchmark")
    return ExperimentResult(
        reports=[report],
        final_model=trained,
        evaluation=evaluation,
        direct_reachability=direct_reachability(graph),
        fog_reachability=fog_reachability(graph),
    )
