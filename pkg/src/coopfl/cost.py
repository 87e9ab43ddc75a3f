"""Energy and delay accounting for computation and transmission events.

Receiving is free (the transmitter pays); idle time lengthens the round makespan
but consumes no energy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import ConfigError, NonComputeNodeError
from .topology import NodeProfile, Route


@dataclass(frozen=True)
class CostModel:
    cycles_per_sample_per_step: float
    aggregation_cycles_per_param: float
    bits_per_sample: int
    bits_per_param: int = 32

    def __post_init__(self):
        for name in ("cycles_per_sample_per_step", "aggregation_cycles_per_param",
                     "bits_per_sample", "bits_per_param"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0", path=f"cost.{name}")


@dataclass(frozen=True)
class RoundCost:
    comp_energy_j: float
    comm_energy_j: float
    round_delay_s: float
    bytes_transmitted: int

    @property
    def total_energy_j(self) -> float:
        return self.comp_energy_j + self.comm_energy_j


def compute_cost(node: NodeProfile, samples: int, steps: int,
                 model: CostModel) -> tuple[float, float]:
    """(joules, seconds) of processing `samples` for `steps` passes on `node`."""
    if node.cpu_rate <= 0:
        raise NonComputeNodeError(f"node {node.id} ({node.kind.value}) cannot compute")
    cycles = model.cycles_per_sample_per_step * samples * steps
    return cycles * node.energy_per_cycle, cycles / node.cpu_rate


def aggregation_compute_cost(node: NodeProfile, n_params: int, n_contributions: int,
                             model: CostModel) -> tuple[float, float]:
    """(joules, seconds) of folding `n_contributions` parameter sets at the server."""
    if node.cpu_rate <= 0:
        raise NonComputeNodeError(f"node {node.id} ({node.kind.value}) cannot aggregate")
    cycles = model.aggregation_cycles_per_param * n_params * n_contributions
    return cycles * node.energy_per_cycle, cycles / node.cpu_rate


def transmit_cost(path: Route) -> tuple[float, float]:
    """(joules, seconds) summed over the hops of a routed transfer."""
    energy = 0.0
    delay = 0.0
    for e in path.hop_energies:
        energy += e
    for d in path.hop_delays:
        delay += d
    return energy, delay


def round_makespan(participant_delays: Mapping[int, float],
                   upload_delays: Mapping[int, float],
                   server_compute_delay_s: float,
                   downlink_delays: Mapping[int, float]) -> float:
    """Wall-clock duration of one synchronous round.

    Participants run in parallel: the slowest (local delay + upload path) chain
    gates the aggregation, which is followed by the slowest downlink broadcast.
    """
    stage = 0.0
    for node in set(participant_delays) | set(upload_delays):
        total = participant_delays.get(node, 0.0) + upload_delays.get(node, 0.0)
        stage = max(stage, total)
    tail = max(downlink_delays.values()) if downlink_delays else 0.0
    return stage + server_compute_delay_s + tail
