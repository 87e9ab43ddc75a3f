"""Deterministic simulator for cooperative federated learning over
heterogeneous edge/fog networks."""

from .engine import Policy, RunReport, SimulationRun, parse_policy, run_scenario
from .scenario import ScenarioConfig, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "Policy",
    "RunReport",
    "ScenarioConfig",
    "SimulationRun",
    "load_scenario",
    "parse_policy",
    "parse_scenario",
    "run_scenario",
    "__version__",
]
