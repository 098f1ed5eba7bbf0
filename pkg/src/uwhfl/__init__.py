"""Energy-aware hierarchical federated learning simulator for underwater
acoustic sensor networks.

The package models the acoustic channel and its link budgets, deploys a
three-tier sensor/fog/gateway topology, trains a small autoencoder anomaly
detector with flat or hierarchical federated methods, compresses sensor
uplinks, and accounts energy, latency, and detection quality per round.
"""

__version__ = "0.1.0"

from .channel import AcousticParams, LinkBudget, link_budget
from .config import ExperimentConfig, build_inputs, parse_config
from .federation import ExperimentResult, MethodSpec, run_experiment
from .topology import DeploymentConfig, FeasibilityGraph, Topology, build_graph, deploy

__all__ = [
    "__version__",
    "AcousticParams",
    "LinkBudget",
    "link_budget",
    "ExperimentConfig",
    "build_inputs",
    "parse_config",
    "ExperimentResult",
    "MethodSpec",
    "run_experiment",
    "DeploymentConfig",
    "FeasibilityGraph",
    "Topology",
    "build_graph",
    "deploy",
]
