"""Round-loop orchestration: executes a policy over a scenario and builds the
run report.

Round phases: plan, execute transfers, local training, model offload/upload,
aggregate, broadcast, evaluate. All randomness flows from streams keyed by
(root seed, purpose, node, round), so phase order never perturbs results and
equal inputs give byte-identical reports.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import cooperation, cost, data, learning, scenario as scenario_mod
from .aggregation import WeightedSegment, fedavg_aggregate, fednova_update, \
    finalize_from_partials, partial_combine
from .cooperation import DataMove, SizedMove, TransferPlan
from .cost import RoundCost
from .errors import SimulationError, SimulatorError
from .topology import NetworkGraph, NodeKind, route

_INIT_STREAM_TAG = 0x696E
_POOL_STREAM = 0
_EVAL_STREAM = 1


class Policy(str, Enum):
    FEDAVG_BASELINE = "fedavg_baseline"
    NOVA_BASELINE = "nova_baseline"
    CFL_D2D = "cfl_d2d"
    CFL_D2S = "cfl_d2s"
    CFL_FULL = "cfl_full"

    @property
    def uses_d2d_data_offload(self) -> bool:
        return self in (Policy.CFL_D2D, Policy.CFL_FULL)

    @property
    def uses_d2s_load_balance(self) -> bool:
        return self in (Policy.CFL_D2S, Policy.CFL_FULL)

    @property
    def uses_model_offload(self) -> bool:
        return self in (Policy.CFL_D2D, Policy.CFL_FULL)

    @property
    def uses_floating_aggregation(self) -> bool:
        return self in (Policy.CFL_D2S, Policy.CFL_FULL)


POLICY_ALIASES = {"fedavg": Policy.FEDAVG_BASELINE, "nova": Policy.NOVA_BASELINE}


def parse_policy(name: str) -> Policy:
    if name in POLICY_ALIASES:
        return POLICY_ALIASES[name]
    try:
        return Policy(name)
    except ValueError:
        valid = ", ".join([p.value for p in Policy] + sorted(POLICY_ALIASES))
        raise ValueError(f"unknown policy '{name}'; valid policies: {valid}")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    global_loss: float
    global_accuracy: float
    cost: RoundCost
    active_participants: int
    aggregation_server: int
    aggregation_cost_s: float
    aggregation_candidates: dict[int, float] | None
    data_moves: tuple[DataMove, ...]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "global_loss": self.global_loss,
            "global_accuracy": self.global_accuracy,
            "comp_energy_j": self.cost.comp_energy_j,
            "comm_energy_j": self.cost.comm_energy_j,
            "round_delay_s": self.cost.round_delay_s,
            "bytes_tx": self.cost.bytes_transmitted,
            "active_participants": self.active_participants,
            "aggregation_server": self.aggregation_server,
            "aggregation_cost_s": self.aggregation_cost_s,
            "aggregation_candidates": (
                {str(k): v for k, v in sorted(self.aggregation_candidates.items())}
                if self.aggregation_candidates is not None else None),
            "data_moves": [
                {"sender": m.sender, "receiver": m.receiver,
                 "sample_ids": list(m.sample_ids)}
                for m in self.data_moves],
        }


@dataclass(frozen=True)
class TargetHit:
    rounds: int
    delay_s: float
    energy_j: float


@dataclass
class RunReport:
    scenario_hash: str
    policy: str
    seed: int
    initial_loss: float
    initial_accuracy: float
    rounds: list[RoundMetrics] = field(default_factory=list)
    cumulative_energy_j: float = 0.0
    cumulative_delay_s: float = 0.0
    time_to_target: dict[float, TargetHit] = field(default_factory=dict)
    aborted: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "policy": self.policy,
            "seed": self.seed,
            "initial_loss": self.initial_loss,
            "initial_accuracy": self.initial_accuracy,
            "rounds": [m.to_dict() for m in self.rounds],
            "cumulative_energy_j": self.cumulative_energy_j,
            "cumulative_delay_s": self.cumulative_delay_s,
            "time_to_target": {
                f"{t:g}": {"rounds": h.rounds, "delay_s": h.delay_s, "energy_j": h.energy_j}
                for t, h in sorted(self.time_to_target.items())},
            "aborted": self.aborted,
            "error": self.error,
        }


class SimulationRun:
    """One (scenario, policy, seed) simulation with mutable round state."""

    def __init__(self, cfg: scenario_mod.ScenarioConfig, policy: Policy, seed: int):
        self.cfg = cfg
        self.policy = policy
        self.seed = int(seed)
        self.graph: NetworkGraph = scenario_mod.build_graph(cfg)
        self.cost_model = cfg.cost
        self.round_index = 0

        pool, eval_set = self._load_data()
        self.eval_set = eval_set
        self.num_classes = pool.num_classes
        self.feature_dim = pool.feature_dim
        self.datasets: dict[int, data.LocalDataset] = data.partition_noniid(
            pool, list(self.graph.device_ids()), cfg.data.partition)
        for server in self.graph.server_ids():
            self.datasets[server] = data.empty_dataset(server, self.feature_dim,
                                                       self.num_classes)
        self._initial_ids = self._all_sample_ids()

        init_seed = int(np.random.SeedSequence(
            [self.seed, _INIT_STREAM_TAG]).generate_state(1, np.uint64)[0])
        layer_sizes = [self.feature_dim, *cfg.training.hidden_layers, self.num_classes]
        self.global_model = learning.init_model(layer_sizes, init_seed)
        self.segment_spec = learning.default_segment_spec(self.global_model.layout)
        self.model_bits = self.global_model.n_params * self.cost_model.bits_per_param

    def _load_data(self) -> tuple[data.SampleSet, data.SampleSet]:
        dc = self.cfg.data
        if dc.generator is not None:
            g = dc.generator
            pool = data.make_gaussian_mixture(g.classes, g.feature_dim, g.samples,
                                              g.class_separation, g.covariance_scale,
                                              g.seed, stream=_POOL_STREAM)
            eval_set = data.make_gaussian_mixture(g.classes, g.feature_dim, g.eval_samples,
                                                  g.class_separation, g.covariance_scale,
                                                  g.seed, stream=_EVAL_STREAM)
            return pool, eval_set
        return data.load_dataset_bin(dc.file.path), data.load_dataset_bin(dc.file.eval_path)

    def _all_sample_ids(self) -> tuple[int, ...]:
        ids: list[int] = []
        for nid in sorted(self.datasets):
            ids.extend(int(i) for i in self.datasets[nid].sample_ids)
        return tuple(sorted(ids))

    def _check_conservation(self):
        if self._all_sample_ids() != self._initial_ids:
            raise SimulationError("sample conservation violated: ids lost or duplicated")

    def _sizes(self) -> dict[int, int]:
        return {nid: ds.size for nid, ds in self.datasets.items()}

    def _train_params(self, node_id: int) -> scenario_mod.TrainParams:
        if self.graph.node(node_id).kind is NodeKind.DEVICE:
            return self.cfg.training.params_for(node_id)
        return self.cfg.training.default

    def _fixed_server(self) -> int:
        if self.cfg.run.fixed_server is not None:
            return self.cfg.run.fixed_server
        return min(self.graph.server_ids())

    def _plan(self) -> tuple[list[SizedMove], dict, int, dict[int, float] | None, float]:
        """Phase 1: sized data moves, segment assignment, aggregation server."""
        coop_cfg = self.cfg.cooperation
        quantum = self.cfg.quantum()
        planned_sizes = self._sizes()
        sized_moves: list[SizedMove] = []
        if self.policy.uses_d2d_data_offload:
            moves = cooperation.plan_data_offload_d2d(
                self.graph, planned_sizes, self.cost_model,
                clique_gating=coop_cfg.clique_gating, quantum=quantum,
                amortization_rounds=coop_cfg.amortization_rounds,
                lambda_energy=coop_cfg.lambda_energy)
            for m in moves:
                planned_sizes[m.sender] -= m.count
                planned_sizes[m.receiver] = planned_sizes.get(m.receiver, 0) + m.count
            sized_moves.extend(moves)
        if self.policy.uses_d2s_load_balance:
            capacities = {s: coop_cfg.capacity_of(s) for s in self.graph.server_ids()}
            moves = cooperation.plan_load_balance_d2s(
                self.graph, planned_sizes, capacities, self.cost_model,
                quantum=quantum, amortization_rounds=coop_cfg.amortization_rounds,
                lambda_energy=coop_cfg.lambda_energy)
            for m in moves:
                planned_sizes[m.sender] -= m.count
                planned_sizes[m.receiver] = planned_sizes.get(m.receiver, 0) + m.count
            sized_moves.extend(moves)

        participants = sorted(n for n, s in planned_sizes.items() if s > 0)
        device_participants = [p for p in participants
                               if self.graph.node(p).kind is NodeKind.DEVICE]
        assignments: dict = {}
        if self.policy.uses_model_offload:
            assignments = cooperation.plan_model_offload(
                self.graph, self.segment_spec, coop_cfg.uplink_threshold_bps,
                participating_devices=device_participants)
            uploaders = sorted(set(assignments.values())
                               | {p for p in participants if p not in device_participants})
        else:
            uploaders = participants

        candidates = None
        if self.policy.uses_floating_aggregation:
            server, candidates = cooperation.select_aggregation_server(
                self.graph, uploaders, list(self.graph.device_ids()), self.model_bits,
                len(participants), self.cost_model)
            agg_cost = candidates[server]
        else:
            server = self._fixed_server()
            agg_cost = cooperation.aggregation_total_cost(
                self.graph, server, uploaders, list(self.graph.device_ids()),
                self.model_bits, len(participants), self.cost_model)
        return sized_moves, assignments, server, candidates, agg_cost

    def run_round(self) -> RoundMetrics:
        self.round_index += 1
        comp_energy = 0.0
        comm_energy = 0.0
        bits_tx = 0
        pre_delays: dict[int, float] = {}
        upload_delays: dict[int, float] = {}
        downlink_delays: dict[int, float] = {}

        def transfer(src: int, dst: int, bits: int) -> float:
            nonlocal comm_energy, bits_tx
            path = route(self.graph, src, dst, bits)
            energy, delay = cost.transmit_cost(path)
            comm_energy += energy
            bits_tx += bits
            return delay

        sized_moves, assignments, server_id, candidates, agg_cost = self._plan()

        # phase 2: execute data transfers (stratified selection picks the ids)
        executed: list[DataMove] = []
        for move in sized_moves:
            sender_ds = self.datasets[move.sender]
            strata = data.stratify(sender_ds)
            ids = data.select_offload_set(sender_ds, strata, move.count)
            new_sender, new_receiver = data.apply_data_transfer(
                sender_ds, self.datasets[move.receiver], ids)
            self.datasets[move.sender] = new_sender
            self.datasets[move.receiver] = new_receiver
            delay = transfer(move.sender, move.receiver,
                             move.count * self.cost_model.bits_per_sample)
            pre_delays[move.sender] = pre_delays.get(move.sender, 0.0) + delay
            pre_delays[move.receiver] = pre_delays.get(move.receiver, 0.0) + delay
            executed.append(DataMove(move.sender, move.receiver, tuple(ids)))

        # phase 3: local training on every data-holding node, servers included
        participants = sorted(n for n, ds in self.datasets.items() if ds.size > 0)
        local_models: dict[int, learning.ModelParams] = {}
        taus: dict[int, int] = {}
        weights: dict[int, int] = {}
        for node_id in participants:
            params = self._train_params(node_id)
            tc = learning.TrainConfig(params.learning_rate, params.local_epochs,
                                      params.batch_size, self.seed)
            model, stats = learning.local_train(
                self.global_model, self.datasets[node_id], tc, self.round_index,
                self.cost_model.cycles_per_sample_per_step)
            local_models[node_id] = model
            taus[node_id] = stats.tau
            weights[node_id] = self.datasets[node_id].size
            energy, delay = cost.compute_cost(self.graph.node(node_id),
                                              self.datasets[node_id].size,
                                              params.local_epochs, self.cost_model)
            comp_energy += energy
            pre_delays[node_id] = pre_delays.get(node_id, 0.0) + delay

        # phases 4-5: uploads and aggregation
        bits_per_param = self.cost_model.bits_per_param
        if self.policy.uses_model_offload:
            device_set = {p for p in participants
                          if self.graph.node(p).kind is NodeKind.DEVICE}
            segments = {d: {s.range: s for s in
                            learning.segment_model(local_models[d], self.segment_spec)}
                        for d in device_set}
            # D2D segment handoffs, one batched payload per (sender, helper) pair
            outgoing: dict[tuple[int, int], int] = {}
            for (dev, rng), uploader in sorted(assignments.items()):
                if uploader != dev:
                    key = (dev, uploader)
                    outgoing[key] = outgoing.get(key, 0) + (rng[1] - rng[0]) * bits_per_param
            for (dev, uploader), bits in sorted(outgoing.items()):
                delay = transfer(dev, uploader, bits)
                pre_delays[dev] = pre_delays.get(dev, 0.0) + delay
                pre_delays[uploader] = pre_delays.get(uploader, 0.0) + delay

            uploader_ids = sorted(set(assignments.values())
                                  | {p for p in participants if p not in device_set})
            server_participants = {p for p in participants if p not in device_set}
            for sp in server_participants:
                segments[sp] = {s.range: s for s in
                                learning.segment_model(local_models[sp], self.segment_spec)}
            partials: list[WeightedSegment] = []
            for uploader in uploader_ids:
                payload_bits = 0
                for rng in self.segment_spec.boundaries:
                    own = None
                    if uploader in segments and assignments.get((uploader, rng),
                                                                uploader) == uploader:
                        own = WeightedSegment(rng, segments[uploader][rng].values,
                                              float(weights[uploader]))
                    received = [
                        WeightedSegment(rng, segments[d][rng].values, float(weights[d]))
                        for d in sorted(device_set)
                        if d != uploader and assignments.get((d, rng)) == uploader]
                    if own is not None:
                        combined = partial_combine(own, received)
                    elif received:
                        combined = partial_combine(received[0], received[1:])
                    else:
                        continue
                    partials.append(combined)
                    payload_bits += (rng[1] - rng[0]) * bits_per_param
                if payload_bits and uploader != server_id:
                    upload_delays[uploader] = transfer(uploader, server_id, payload_bits)
            new_global = finalize_from_partials(partials, self.global_model.layout)
        else:
            for node_id in participants:
                if node_id != server_id:
                    upload_delays[node_id] = transfer(node_id, server_id, self.model_bits)
            ordered_models = [local_models[p] for p in participants]
            ordered_weights = [float(weights[p]) for p in participants]
            if self.policy is Policy.NOVA_BASELINE:
                new_global = fednova_update(self.global_model, ordered_models,
                                            [taus[p] for p in participants],
                                            ordered_weights)
            else:
                new_global = fedavg_aggregate(ordered_models, ordered_weights)

        agg_energy, agg_delay = cost.aggregation_compute_cost(
            self.graph.node(server_id), self.global_model.n_params,
            len(participants), self.cost_model)
        comp_energy += agg_energy

        # phase 6: broadcast to every device plus data-holding servers
        targets = sorted(set(self.graph.device_ids())
                         | {p for p in participants
                            if self.graph.node(p).kind is NodeKind.EDGE_SERVER})
        for target in targets:
            if target == server_id:
                continue
            downlink_delays[target] = transfer(server_id, target, self.model_bits)

        self.global_model = new_global
        self._check_conservation()

        makespan = cost.round_makespan(pre_delays, upload_delays, agg_delay,
                                       downlink_delays)
        loss, accuracy = learning.evaluate(self.global_model, self.eval_set)
        round_cost = RoundCost(comp_energy, comm_energy, makespan, bits_tx // 8)
        return RoundMetrics(self.round_index, loss, accuracy, round_cost,
                            len(participants), server_id, agg_cost, candidates,
                            tuple(executed))

    def run(self) -> RunReport:
        initial_loss, initial_accuracy = learning.evaluate(self.global_model, self.eval_set)
        report = RunReport(scenario_mod.scenario_hash(self.cfg), self.policy.value,
                           self.seed, initial_loss, initial_accuracy)
        targets = self.cfg.run.target_accuracies
        try:
            for _ in range(self.cfg.run.rounds):
                metrics = self.run_round()
                report.rounds.append(metrics)
                report.cumulative_energy_j += metrics.cost.total_energy_j
                report.cumulative_delay_s += metrics.cost.round_delay_s
                for t in targets:
                    if t not in report.time_to_target and metrics.global_accuracy >= t:
                        report.time_to_target[t] = TargetHit(
                            metrics.round, report.cumulative_delay_s,
                            report.cumulative_energy_j)
                if (self.cfg.run.early_stop and targets
                        and all(t in report.time_to_target for t in targets)):
                    break
        except SimulatorError as exc:
            report.aborted = True
            report.error = str(exc)
        return report


def run_scenario(cfg: scenario_mod.ScenarioConfig, policy: Policy | str,
                 seed: int) -> RunReport:
    if isinstance(policy, str):
        policy = parse_policy(policy)
    return SimulationRun(cfg, policy, seed).run()
