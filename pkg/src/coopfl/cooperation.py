"""Decision procedures: D2D data-offload planning, D2S load balancing,
model-segment offload assignment, and floating aggregation-server selection.

All planners are pure functions of immutable snapshots with fully specified
tie-breaks, so plans are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .cost import CostModel
from .errors import StrandedDeviceError, UnreachableError
from .learning import SegmentSpec
from .topology import LinkKind, NetworkGraph, NodeKind, link_rate, route


@dataclass(frozen=True)
class DataMove:
    sender: int
    receiver: int
    sample_ids: tuple[int, ...]


@dataclass(frozen=True)
class SizedMove:
    """Planner output before sample selection: how many samples go where."""

    sender: int
    receiver: int
    count: int


@dataclass(frozen=True)
class TransferPlan:
    data_moves: tuple[DataMove, ...] = ()
    segment_assignments: dict[tuple[int, tuple[int, int]], int] = field(default_factory=dict)
    aggregation_server: int = -1


def _compute_delays(graph: NetworkGraph, sizes: Mapping[int, int],
                    model: CostModel) -> dict[int, float]:
    """Estimated compute delay of one local epoch per data-holding node."""
    delays = {}
    for nid, n in sizes.items():
        node = graph.node(nid)
        delays[nid] = n * model.cycles_per_sample_per_step / node.cpu_rate
    return delays


def _compute_energy(graph: NetworkGraph, sizes: Mapping[int, int],
                    model: CostModel) -> float:
    return sum(
        n * model.cycles_per_sample_per_step * graph.node(nid).energy_per_cycle
        for nid, n in sizes.items()
    )


def _coalesce(moves: list[tuple[int, int, int]]) -> list[SizedMove]:
    merged: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []
    for sender, receiver, count in moves:
        key = (sender, receiver)
        if key not in merged:
            merged[key] = 0
            order.append(key)
        merged[key] += count
    return [SizedMove(s, r, merged[(s, r)]) for s, r in order]


def _greedy_offload(graph: NetworkGraph, sizes: Mapping[int, int], model: CostModel,
                    candidates_for, transfer_cost_for, quantum: int,
                    amortization_rounds: int, lambda_energy: float) -> list[SizedMove]:
    """Shared greedy-descent core for the D2D and D2S planners.

    Each step moves one quantum of samples off the current bottleneck. Candidates
    are ranked by the resulting max compute delay, then by the receiver's own
    post-move completion time plus the amortized transfer delay (load the least
    loaded eligible helper), then by receiver id; the winning move is applied
    only if new max + amortized transfer strictly undercuts the current max.

    When no direct move helps, a paired step is considered: one relief move by
    another device (making room at a loaded helper) immediately followed by the
    bottleneck's best direct move, accepted only if the pair as a whole strictly
    reduces the max. Every applied step lowers the max compute delay, so the
    descent terminates; a total/quantum step cap bounds it regardless.
    """
    sizes = dict(sizes)
    delays = _compute_delays(graph, sizes, model)
    total = sum(sizes.values())
    max_steps = -(-total // quantum) if quantum else 0  # ceil
    moves: list[tuple[int, int, int]] = []
    steps = 0

    def best_direct(state, state_delays, extra_cost):
        """Best quantum move off the current bottleneck of `state`, or None."""
        bottleneck = max(state_delays, key=lambda n: (state_delays[n], -n))
        if state_delays[bottleneck] <= 0.0:
            return None
        if graph.node(bottleneck).kind is not NodeKind.DEVICE:
            return None
        count = min(quantum, state[bottleneck])
        if count == 0:
            return None
        best = None
        for receiver in candidates_for(bottleneck, state):
            trial = dict(state)
            trial[bottleneck] -= count
            trial[receiver] = trial.get(receiver, 0) + count
            trial_delays = _compute_delays(graph, trial, model)
            transfer_delay, transfer_energy = transfer_cost_for(bottleneck, receiver, count)
            amortized = transfer_delay / amortization_rounds + extra_cost
            primary = max(trial_delays.values())
            secondary = trial_delays[receiver] + amortized
            gate = primary + amortized
            if lambda_energy:
                energy_term = lambda_energy * (
                    _compute_energy(graph, trial, model)
                    + transfer_energy / amortization_rounds
                )
                primary += energy_term
                gate += energy_term
            key = (primary, secondary, receiver)
            if best is None or key < best[0]:
                best = (key, gate, (bottleneck, receiver, count), trial, trial_delays)
        return best

    while steps < max_steps:
        bottleneck = max(delays, key=lambda n: (delays[n], -n))
        current = delays[bottleneck]
        if lambda_energy:
            current += lambda_energy * _compute_energy(graph, sizes, model)
        direct = best_direct(sizes, delays, 0.0)
        if direct is not None and direct[1] < current:
            _, _, move, sizes, delays = direct
            moves.append(move)
            steps += 1
            continue

        paired = None
        for sender in sorted(sizes):
            if sender == bottleneck or sizes.get(sender, 0) == 0:
                continue
            if graph.node(sender).kind is not NodeKind.DEVICE:
                continue
            count = min(quantum, sizes[sender])
            for onward in candidates_for(sender, sizes):
                trial = dict(sizes)
                trial[sender] -= count
                trial[onward] = trial.get(onward, 0) + count
                trial_delays = _compute_delays(graph, trial, model)
                if max(trial_delays.values()) > delays[bottleneck]:
                    continue
                relief_delay, _ = transfer_cost_for(sender, onward, count)
                follow = best_direct(trial, trial_delays,
                                     relief_delay / amortization_rounds)
                if follow is None or follow[1] >= current:
                    continue
                key = follow[0] + (onward, sender)
                if paired is None or key < paired[0]:
                    paired = (key, (sender, onward, count), follow)
        if paired is None:
            break
        _, relief_move, follow = paired
        moves.append(relief_move)
        _, _, move, sizes, delays = follow
        moves.append(move)
        steps += 2
    return _coalesce(moves)


def plan_data_offload_d2d(graph: NetworkGraph, sizes: Mapping[int, int],
                          model: CostModel, *, clique_gating: bool, quantum: int,
                          amortization_rounds: int = 10,
                          lambda_energy: float = 0.0) -> list[SizedMove]:
    """Plan D2D data moves from straggling devices to directly linked peers.

    With gating enabled, a move is only eligible between devices that share a
    clique. Returns an empty plan when no strictly improving move exists.
    """
    device_sizes = {d: sizes.get(d, 0) for d in graph.device_ids()}

    def candidates(sender: int, _sizes) -> list[int]:
        out = []
        sender_node = graph.node(sender)
        for neighbor in graph.neighbors(sender):
            node = graph.node(neighbor)
            if node.kind is not NodeKind.DEVICE:
                continue
            if graph.link(sender, neighbor).kind is not LinkKind.D2D_WIRELESS:
                continue
            if clique_gating:
                if sender_node.clique_id is None or node.clique_id != sender_node.clique_id:
                    continue
            out.append(neighbor)
        return out

    def transfer_cost(sender: int, receiver: int, count: int) -> tuple[float, float]:
        bits = count * model.bits_per_sample
        rate = link_rate(graph, sender, receiver)
        delay = bits / rate * graph.node(receiver).congestion_factor
        return delay, graph.node(sender).tx_power * delay

    return _greedy_offload(graph, device_sizes, model, candidates, transfer_cost,
                           quantum, amortization_rounds, lambda_energy)


def plan_load_balance_d2s(graph: NetworkGraph, sizes: Mapping[int, int],
                          server_capacities: Mapping[int, int], model: CostModel, *,
                          quantum: int, amortization_rounds: int = 10,
                          lambda_energy: float = 0.0) -> list[SizedMove]:
    """Plan device-to-server data moves routed through the infrastructure.

    Servers train on what they host, so their compute delay joins the makespan
    estimate; capacity bounds the samples a server may hold. Devices that cannot
    reach any server are skipped, never errors.
    """
    sizes_now = {d: sizes.get(d, 0) for d in graph.device_ids()}
    for s in graph.server_ids():
        sizes_now[s] = sizes.get(s, 0)
    delays = _compute_delays(graph, sizes_now, model)
    total = sum(v for k, v in sizes_now.items() if graph.node(k).kind is NodeKind.DEVICE)
    max_steps = -(-total // quantum) if quantum else 0
    moves: list[tuple[int, int, int]] = []
    for _ in range(max_steps):
        bottleneck = max(delays, key=lambda n: (delays[n], -n))
        if delays[bottleneck] <= 0.0 or graph.node(bottleneck).kind is not NodeKind.DEVICE:
            break
        current = delays[bottleneck]
        if lambda_energy:
            current += lambda_energy * _compute_energy(graph, sizes_now, model)
        best = None
        for srv in graph.server_ids():
            cap_left = server_capacities.get(srv, 0) - sizes_now.get(srv, 0)
            count = min(quantum, sizes_now[bottleneck], cap_left)
            if count <= 0:
                continue
            try:
                path = route(graph, bottleneck, srv, count * model.bits_per_sample)
            except UnreachableError:
                continue
            trial = dict(sizes_now)
            trial[bottleneck] -= count
            trial[srv] += count
            trial_delays = _compute_delays(graph, trial, model)
            amortized = path.delay_s / amortization_rounds
            primary = max(trial_delays.values())
            secondary = trial_delays[srv] + amortized
            gate = primary + amortized
            if lambda_energy:
                energy_term = lambda_energy * (
                    _compute_energy(graph, trial, model)
                    + path.energy_j / amortization_rounds
                )
                primary += energy_term
                gate += energy_term
            key = (primary, secondary, srv)
            if best is None or key < best[0]:
                best = (key, gate, srv, count, trial, trial_delays)
        if best is None or best[1] >= current:
            break
        _, _, srv, count, sizes_now, delays = best
        moves.append((bottleneck, srv, count))
    return _coalesce(moves)


def plan_model_offload(graph: NetworkGraph, spec: SegmentSpec,
                       uplink_threshold_bps: float,
                       participating_devices: Sequence[int] | None = None,
                       ) -> dict[tuple[int, tuple[int, int]], int]:
    """Assign each (device, segment range) to an uploader.

    Devices whose best direct rate to a non-device node meets the threshold
    upload their own segments. A constrained device deals its segments
    round-robin over its qualifying D2D neighbors in ascending id order; a
    constrained device with no qualifying neighbor is stranded (error).
    """
    devices = list(participating_devices) if participating_devices is not None else list(
        graph.device_ids())

    def best_uplink(device: int) -> float:
        best = 0.0
        for neighbor in graph.neighbors(device):
            if graph.node(neighbor).kind is NodeKind.DEVICE:
                continue
            best = max(best, link_rate(graph, device, neighbor))
        return best

    qualified = {d for d in devices if best_uplink(d) >= uplink_threshold_bps}
    assignments: dict[tuple[int, tuple[int, int]], int] = {}
    for device in sorted(devices):
        if device in qualified:
            for rng in spec.boundaries:
                assignments[(device, rng)] = device
            continue
        helpers = [
            n for n in graph.neighbors(device)
            if n in qualified and graph.link(device, n).kind is LinkKind.D2D_WIRELESS
        ]
        helpers.sort()
        if not helpers:
            raise StrandedDeviceError(device)
        for i, rng in enumerate(spec.boundaries):
            assignments[(device, rng)] = helpers[i % len(helpers)]
    return assignments


def aggregation_total_cost(graph: NetworkGraph, server: int, uploaders: Sequence[int],
                           device_ids: Sequence[int], model_bits: int,
                           n_contributions: int, model: CostModel) -> float:
    """Total aggregation cost of placing the round's server at `server`:
    uplink route delays + downlink broadcast route delays + aggregation compute.

    Raises UnreachableError if some uploader or device cannot reach it.
    """
    total = 0.0
    for uploader in uploaders:
        if uploader == server:
            continue
        total += route(graph, uploader, server, model_bits).delay_s
    for device in device_ids:
        if device == server:
            continue
        total += route(graph, server, device, model_bits).delay_s
    n_params = model_bits // model.bits_per_param
    node = graph.node(server)
    cycles = model.aggregation_cycles_per_param * n_params * n_contributions
    total += cycles / node.cpu_rate
    return total


def select_aggregation_server(graph: NetworkGraph, uploaders: Sequence[int],
                              device_ids: Sequence[int], model_bits: int,
                              n_contributions: int, model: CostModel,
                              ) -> tuple[int, dict[int, float]]:
    """Pick the server minimizing aggregation_total_cost; ties go to the smallest
    id. Candidates unreachable from some uploader are excluded; if every
    candidate is excluded the round is unroutable."""
    costs: dict[int, float] = {}
    for server in graph.server_ids():
        try:
            costs[server] = aggregation_total_cost(
                graph, server, uploaders, device_ids, model_bits, n_contributions, model)
        except UnreachableError:
            continue
    if not costs:
        raise UnreachableError(uploaders[0] if uploaders else -1, -1)
    chosen = min(costs, key=lambda s: (costs[s], s))
    return chosen, costs
