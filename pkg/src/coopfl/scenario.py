"""Scenario document parsing, strict validation, and canonical serialization.

Scenarios are JSON with exactly these top-level sections: nodes, links, data,
training, cooperation, run, cost. Unknown keys are rejected anywhere in the
document, and every semantic error names the offending key path.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .cost import CostModel
from .data import PartitionSpec, sample_payload_bits
from .errors import ConfigError
from .topology import Link, LinkKind, NetworkGraph, NodeKind, NodeProfile

_NODE_KINDS = {k.value for k in NodeKind}
_LINK_KINDS = {k.value for k in LinkKind}


@dataclass(frozen=True)
class GeneratorConfig:
    classes: int = 3
    feature_dim: int = 4
    samples: int = 600
    eval_samples: int = 150
    class_separation: float = 3.0
    covariance_scale: float = 1.0
    seed: int = 1


@dataclass(frozen=True)
class FileDataConfig:
    path: str
    eval_path: str


@dataclass(frozen=True)
class DataConfig:
    partition: PartitionSpec
    generator: GeneratorConfig | None = None
    file: FileDataConfig | None = None


@dataclass(frozen=True)
class TrainParams:
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int = 32


@dataclass(frozen=True)
class TrainingConfig:
    hidden_layers: tuple[int, ...] = (64,)
    default: TrainParams = field(default_factory=TrainParams)
    per_device: dict[int, TrainParams] = field(default_factory=dict)

    def params_for(self, device_id: int) -> TrainParams:
        return self.per_device.get(device_id, self.default)


@dataclass(frozen=True)
class CooperationConfig:
    clique_gating: bool = False
    uplink_threshold_bps: float = 0.0
    quantum: int | None = None  # None -> default training batch size
    amortization_rounds: int = 10
    lambda_energy: float = 0.0
    server_capacities: dict[int, int] = field(default_factory=dict)
    default_server_capacity: int = 0

    def capacity_of(self, server_id: int) -> int:
        return self.server_capacities.get(server_id, self.default_server_capacity)


@dataclass(frozen=True)
class RunConfig:
    rounds: int = 10
    target_accuracies: tuple[float, ...] = ()
    early_stop: bool = False
    fixed_server: int | None = None  # None -> smallest server id


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[NodeProfile, ...]
    links: tuple[Link, ...]
    data: DataConfig
    training: TrainingConfig
    cooperation: CooperationConfig
    run: RunConfig
    cost: CostModel

    def device_ids(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.kind is NodeKind.DEVICE))

    def server_ids(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.kind is NodeKind.EDGE_SERVER))

    def quantum(self) -> int:
        return self.cooperation.quantum or self.training.default.batch_size

    def feature_dim(self) -> int | None:
        return self.data.generator.feature_dim if self.data.generator else None


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    return obj


def _check_keys(obj: dict, allowed: set[str], path: str):
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}'", path)


def _get(obj: dict, key: str, path: str, required=False, default=None):
    if key not in obj:
        if required:
            raise ConfigError("missing required key", f"{path}.{key}" if path else key)
        return default
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path)
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", path)
    return value


def _boolean(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError("expected a boolean", path)
    return value


def _parse_node(obj, path: str) -> NodeProfile:
    _require_mapping(obj, path)
    _check_keys(obj, {"id", "kind", "position", "cpu_rate", "energy_per_cycle",
                      "tx_power", "clique_id", "congestion_factor"}, path)
    node_id = _integer(_get(obj, "id", path, required=True), f"{path}.id")
    kind_str = _get(obj, "kind", path, required=True)
    if kind_str not in _NODE_KINDS:
        raise ConfigError(f"unknown node kind '{kind_str}'", f"{path}.kind")
    kind = NodeKind(kind_str)

    pos_raw = _get(obj, "position", path, default=[0.0, 0.0])
    if not (isinstance(pos_raw, list) and len(pos_raw) == 2):
        raise ConfigError("expected [x, y]", f"{path}.position")
    position = (_number(pos_raw[0], f"{path}.position"), _number(pos_raw[1], f"{path}.position"))

    is_compute = kind in (NodeKind.DEVICE, NodeKind.EDGE_SERVER)
    default_cpu = {NodeKind.DEVICE: 1e9, NodeKind.EDGE_SERVER: 1e10}.get(kind, 0.0)
    cpu_rate = _number(_get(obj, "cpu_rate", path, default=default_cpu), f"{path}.cpu_rate")
    if is_compute and cpu_rate <= 0:
        raise ConfigError(f"must be > 0 for kind '{kind.value}'", f"{path}.cpu_rate")
    if not is_compute and cpu_rate != 0:
        raise ConfigError(f"must be 0 for kind '{kind.value}'", f"{path}.cpu_rate")

    default_epc = {NodeKind.DEVICE: 1e-9, NodeKind.EDGE_SERVER: 1e-10}.get(kind, 0.0)
    energy_per_cycle = _number(_get(obj, "energy_per_cycle", path, default=default_epc),
                               f"{path}.energy_per_cycle")
    if energy_per_cycle < 0:
        raise ConfigError("must be >= 0", f"{path}.energy_per_cycle")

    default_tx = 0.1 if kind is NodeKind.DEVICE else 0.0
    tx_power = _number(_get(obj, "tx_power", path, default=default_tx), f"{path}.tx_power")
    if kind is NodeKind.DEVICE and tx_power <= 0:
        raise ConfigError("must be > 0 for devices", f"{path}.tx_power")
    if tx_power < 0:
        raise ConfigError("must be >= 0", f"{path}.tx_power")

    clique_raw = _get(obj, "clique_id", path)
    clique_id = None
    if clique_raw is not None:
        if kind is not NodeKind.DEVICE:
            raise ConfigError("only devices belong to cliques", f"{path}.clique_id")
        clique_id = _integer(clique_raw, f"{path}.clique_id")

    congestion = _number(_get(obj, "congestion_factor", path, default=1.0),
                         f"{path}.congestion_factor")
    if congestion < 1.0:
        raise ConfigError("must be >= 1", f"{path}.congestion_factor")

    return NodeProfile(node_id, kind, position, cpu_rate, energy_per_cycle,
                       tx_power, clique_id, congestion)


def _parse_link(obj, path: str, nodes: dict[int, NodeProfile]) -> Link:
    _require_mapping(obj, path)
    _check_keys(obj, {"a", "b", "kind", "bandwidth_hz", "snr", "rate_bps",
                      "energy_per_bit"}, path)
    a = _integer(_get(obj, "a", path, required=True), f"{path}.a")
    b = _integer(_get(obj, "b", path, required=True), f"{path}.b")
    kind_str = _get(obj, "kind", path, required=True)
    if kind_str not in _LINK_KINDS:
        raise ConfigError(f"unknown link kind '{kind_str}'", f"{path}.kind")
    kind = LinkKind(kind_str)
    for end, key in ((a, "a"), (b, "b")):
        if end not in nodes:
            raise ConfigError(f"references unknown node {end}", f"{path}.{key}")
    if a == b:
        raise ConfigError("self-loops are not allowed", path)

    if kind is LinkKind.WIRED_BACKHAUL:
        for bad in ("bandwidth_hz", "snr"):
            if bad in obj:
                raise ConfigError("not a wired-link field", f"{path}.{bad}")
        rate = _number(_get(obj, "rate_bps", path, required=True), f"{path}.rate_bps")
        if rate <= 0:
            raise ConfigError("must be > 0", f"{path}.rate_bps")
        energy_per_bit = _number(_get(obj, "energy_per_bit", path, required=True),
                                 f"{path}.energy_per_bit")
        if energy_per_bit <= 0:
            raise ConfigError("must be > 0", f"{path}.energy_per_bit")
        return Link(a, b, kind, rate, None, energy_per_bit)

    for bad in ("rate_bps", "energy_per_bit"):
        if bad in obj:
            raise ConfigError("not a wireless-link field", f"{path}.{bad}")
    bandwidth = _number(_get(obj, "bandwidth_hz", path, required=True), f"{path}.bandwidth_hz")
    if bandwidth <= 0:
        raise ConfigError("must be > 0", f"{path}.bandwidth_hz")
    snr = _number(_get(obj, "snr", path, required=True), f"{path}.snr")
    if snr <= 0:
        raise ConfigError("must be > 0", f"{path}.snr")
    if kind is LinkKind.D2D_WIRELESS:
        for end, key in ((a, "a"), (b, "b")):
            if nodes[end].kind is not NodeKind.DEVICE:
                raise ConfigError(
                    f"d2d link endpoint {end} is not a device", f"{path}.{key}")
    return Link(a, b, kind, bandwidth, snr, None)


def _parse_partition(obj, path: str) -> PartitionSpec:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"scheme", "alpha", "shards_per_device", "seed"}, path)
    scheme = _get(obj, "scheme", path, default="dirichlet")
    seed = _integer(_get(obj, "seed", path, default=1), f"{path}.seed")
    if seed < 0:
        raise ConfigError("must be >= 0", f"{path}.seed")
    if scheme == "dirichlet":
        if "shards_per_device" in obj:
            raise ConfigError("not a dirichlet field", f"{path}.shards_per_device")
        alpha = _number(_get(obj, "alpha", path, default=1.0), f"{path}.alpha")
        if alpha <= 0:
            raise ConfigError("must be > 0", f"{path}.alpha")
        return PartitionSpec("dirichlet", seed, alpha=alpha)
    if scheme == "shards":
        if "alpha" in obj:
            raise ConfigError("not a shards field", f"{path}.alpha")
        spd = _integer(_get(obj, "shards_per_device", path, default=1),
                       f"{path}.shards_per_device")
        if spd < 1:
            raise ConfigError("must be >= 1", f"{path}.shards_per_device")
        return PartitionSpec("shards", seed, shards_per_device=spd)
    raise ConfigError(f"unknown scheme '{scheme}'", f"{path}.scheme")


def _parse_data(obj, path: str) -> DataConfig:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"generator", "file", "partition"}, path)
    partition = _parse_partition(obj.get("partition"), f"{path}.partition")
    if "generator" in obj and "file" in obj:
        raise ConfigError("declare either a generator or a file, not both", path)
    if "file" in obj:
        fobj = _require_mapping(obj["file"], f"{path}.file")
        _check_keys(fobj, {"path", "eval_path"}, f"{path}.file")
        fpath = _get(fobj, "path", f"{path}.file", required=True)
        epath = _get(fobj, "eval_path", f"{path}.file", required=True)
        if not isinstance(fpath, str) or not isinstance(epath, str):
            raise ConfigError("expected a string path", f"{path}.file")
        return DataConfig(partition, file=FileDataConfig(fpath, epath))
    gobj = obj.get("generator") or {}
    _require_mapping(gobj, f"{path}.generator")
    gpath = f"{path}.generator"
    _check_keys(gobj, {"classes", "feature_dim", "samples", "eval_samples",
                       "class_separation", "covariance_scale", "seed"}, gpath)
    gen = GeneratorConfig(
        classes=_integer(_get(gobj, "classes", gpath, default=3), f"{gpath}.classes"),
        feature_dim=_integer(_get(gobj, "feature_dim", gpath, default=4),
                             f"{gpath}.feature_dim"),
        samples=_integer(_get(gobj, "samples", gpath, default=600), f"{gpath}.samples"),
        eval_samples=_integer(_get(gobj, "eval_samples", gpath, default=150),
                              f"{gpath}.eval_samples"),
        class_separation=_number(_get(gobj, "class_separation", gpath, default=3.0),
                                 f"{gpath}.class_separation"),
        covariance_scale=_number(_get(gobj, "covariance_scale", gpath, default=1.0),
                                 f"{gpath}.covariance_scale"),
        seed=_integer(_get(gobj, "seed", gpath, default=1), f"{gpath}.seed"),
    )
    if gen.classes < 2:
        raise ConfigError("need at least 2 classes", f"{gpath}.classes")
    if gen.feature_dim < 1:
        raise ConfigError("must be >= 1", f"{gpath}.feature_dim")
    if gen.samples < 1:
        raise ConfigError("must be >= 1", f"{gpath}.samples")
    if gen.eval_samples < 1:
        raise ConfigError("must be >= 1", f"{gpath}.eval_samples")
    if gen.class_separation < 0 or gen.covariance_scale <= 0:
        raise ConfigError("separation must be >= 0 and covariance_scale > 0", gpath)
    if gen.seed < 0:
        raise ConfigError("must be >= 0", f"{gpath}.seed")
    return DataConfig(partition, generator=gen)


def _parse_train_params(obj, path: str, base: TrainParams) -> TrainParams:
    _require_mapping(obj, path)
    _check_keys(obj, {"learning_rate", "local_epochs", "batch_size"}, path)
    lr = _number(_get(obj, "learning_rate", path, default=base.learning_rate),
                 f"{path}.learning_rate")
    epochs = _integer(_get(obj, "local_epochs", path, default=base.local_epochs),
                      f"{path}.local_epochs")
    batch = _integer(_get(obj, "batch_size", path, default=base.batch_size),
                     f"{path}.batch_size")
    if lr < 0:
        raise ConfigError("must be >= 0", f"{path}.learning_rate")
    if epochs < 1:
        raise ConfigError("must be >= 1", f"{path}.local_epochs")
    if batch < 1:
        raise ConfigError("must be >= 1", f"{path}.batch_size")
    return TrainParams(lr, epochs, batch)


def _parse_training(obj, path: str, device_ids: set[int]) -> TrainingConfig:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"hidden_layers", "default", "per_device"}, path)
    hidden_raw = _get(obj, "hidden_layers", path, default=[64])
    if not isinstance(hidden_raw, list):
        raise ConfigError("expected a list of layer widths", f"{path}.hidden_layers")
    hidden = tuple(_integer(h, f"{path}.hidden_layers") for h in hidden_raw)
    if any(h < 1 for h in hidden):
        raise ConfigError("layer widths must be >= 1", f"{path}.hidden_layers")
    default = _parse_train_params(obj.get("default", {}), f"{path}.default", TrainParams())
    per_device = {}
    for raw_id, sub in _require_mapping(obj.get("per_device", {}), f"{path}.per_device").items():
        try:
            dev = int(raw_id)
        except ValueError:
            raise ConfigError(f"'{raw_id}' is not a device id", f"{path}.per_device")
        if dev not in device_ids:
            raise ConfigError(f"node {dev} is not a device", f"{path}.per_device.{raw_id}")
        per_device[dev] = _parse_train_params(sub, f"{path}.per_device.{raw_id}", default)
    return TrainingConfig(hidden, default, per_device)


def _parse_cooperation(obj, path: str, server_ids: set[int]) -> CooperationConfig:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"clique_gating", "uplink_threshold_bps", "quantum",
                      "amortization_rounds", "lambda_energy", "server_capacities",
                      "default_server_capacity"}, path)
    gating = _boolean(_get(obj, "clique_gating", path, default=False),
                      f"{path}.clique_gating")
    threshold = _number(_get(obj, "uplink_threshold_bps", path, default=0.0),
                        f"{path}.uplink_threshold_bps")
    if threshold < 0:
        raise ConfigError("must be >= 0", f"{path}.uplink_threshold_bps")
    quantum_raw = _get(obj, "quantum", path)
    quantum = None
    if quantum_raw is not None:
        quantum = _integer(quantum_raw, f"{path}.quantum")
        if quantum < 1:
            raise ConfigError("must be >= 1", f"{path}.quantum")
    amort = _integer(_get(obj, "amortization_rounds", path, default=10),
                     f"{path}.amortization_rounds")
    if amort < 1:
        raise ConfigError("must be >= 1", f"{path}.amortization_rounds")
    lam = _number(_get(obj, "lambda_energy", path, default=0.0), f"{path}.lambda_energy")
    if lam < 0:
        raise ConfigError("must be >= 0", f"{path}.lambda_energy")
    caps = {}
    for raw_id, cap in _require_mapping(obj.get("server_capacities", {}),
                                        f"{path}.server_capacities").items():
        try:
            sid = int(raw_id)
        except ValueError:
            raise ConfigError(f"'{raw_id}' is not a server id", f"{path}.server_capacities")
        if sid not in server_ids:
            raise ConfigError(f"node {sid} is not an edge server",
                              f"{path}.server_capacities.{raw_id}")
        capacity = _integer(cap, f"{path}.server_capacities.{raw_id}")
        if capacity < 0:
            raise ConfigError("must be >= 0", f"{path}.server_capacities.{raw_id}")
        caps[sid] = capacity
    default_cap = _integer(_get(obj, "default_server_capacity", path, default=0),
                           f"{path}.default_server_capacity")
    if default_cap < 0:
        raise ConfigError("must be >= 0", f"{path}.default_server_capacity")
    return CooperationConfig(gating, threshold, quantum, amort, lam, caps, default_cap)


def _parse_run(obj, path: str, server_ids: set[int]) -> RunConfig:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"rounds", "target_accuracies", "early_stop", "fixed_server"}, path)
    rounds = _integer(_get(obj, "rounds", path, default=10), f"{path}.rounds")
    if rounds < 0:
        raise ConfigError("must be >= 0", f"{path}.rounds")
    targets_raw = _get(obj, "target_accuracies", path, default=[])
    if not isinstance(targets_raw, list):
        raise ConfigError("expected a list", f"{path}.target_accuracies")
    targets = tuple(_number(t, f"{path}.target_accuracies") for t in targets_raw)
    if any(not (0.0 < t <= 1.0) for t in targets):
        raise ConfigError("targets must lie in (0, 1]", f"{path}.target_accuracies")
    early = _boolean(_get(obj, "early_stop", path, default=False), f"{path}.early_stop")
    fixed_raw = _get(obj, "fixed_server", path)
    fixed = None
    if fixed_raw is not None:
        fixed = _integer(fixed_raw, f"{path}.fixed_server")
        if fixed not in server_ids:
            raise ConfigError(f"node {fixed} is not an edge server", f"{path}.fixed_server")
    return RunConfig(rounds, targets, early, fixed)


def _parse_cost(obj, path: str, feature_dim: int | None) -> CostModel:
    obj = {} if obj is None else _require_mapping(obj, path)
    _check_keys(obj, {"cycles_per_sample_per_step", "aggregation_cycles_per_param",
                      "bits_per_param", "bits_per_sample"}, path)
    cycles = _number(_get(obj, "cycles_per_sample_per_step", path, default=1e6),
                     f"{path}.cycles_per_sample_per_step")
    agg_cycles = _number(_get(obj, "aggregation_cycles_per_param", path, default=10.0),
                         f"{path}.aggregation_cycles_per_param")
    bits_param = _integer(_get(obj, "bits_per_param", path, default=32),
                          f"{path}.bits_per_param")
    bits_sample_raw = _get(obj, "bits_per_sample", path)
    if bits_sample_raw is not None:
        bits_sample = _integer(bits_sample_raw, f"{path}.bits_per_sample")
    elif feature_dim is not None:
        bits_sample = sample_payload_bits(feature_dim)
    else:
        raise ConfigError("required when data comes from a file", f"{path}.bits_per_sample")
    for name, value in (("cycles_per_sample_per_step", cycles),
                        ("aggregation_cycles_per_param", agg_cycles),
                        ("bits_per_param", bits_param),
                        ("bits_per_sample", bits_sample)):
        if value <= 0:
            raise ConfigError("must be > 0", f"{path}.{name}")
    return CostModel(cycles, agg_cycles, bits_sample, bits_param)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document; raises ConfigError on any problem."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    _require_mapping(doc, "")
    _check_keys(doc, {"nodes", "links", "data", "training", "cooperation", "run", "cost"}, "")

    nodes_raw = _get(doc, "nodes", "", required=True)
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise ConfigError("expected a non-empty list", "nodes")
    nodes = []
    seen_ids = set()
    for i, obj in enumerate(nodes_raw):
        node = _parse_node(obj, f"nodes[{i}]")
        if node.id in seen_ids:
            raise ConfigError(f"duplicate node id {node.id}", f"nodes[{i}].id")
        seen_ids.add(node.id)
        nodes.append(node)
    by_id = {n.id: n for n in nodes}
    device_ids = {n.id for n in nodes if n.kind is NodeKind.DEVICE}
    server_ids = {n.id for n in nodes if n.kind is NodeKind.EDGE_SERVER}
    if not device_ids:
        raise ConfigError("scenario declares no devices", "nodes")
    if not server_ids:
        raise ConfigError("scenario declares no edge servers", "nodes")

    links_raw = _get(doc, "links", "", default=[])
    if not isinstance(links_raw, list):
        raise ConfigError("expected a list", "links")
    links = []
    seen_links = set()
    for i, obj in enumerate(links_raw):
        link = _parse_link(obj, f"links[{i}]", by_id)
        if link.key() in seen_links:
            raise ConfigError(f"duplicate link between {link.a} and {link.b}", f"links[{i}]")
        seen_links.add(link.key())
        links.append(link)

    data = _parse_data(doc.get("data"), "data")
    training = _parse_training(doc.get("training"), "training", device_ids)
    cooperation = _parse_cooperation(doc.get("cooperation"), "cooperation", server_ids)
    run = _parse_run(doc.get("run"), "run", server_ids)
    cost = _parse_cost(doc.get("cost"), "cost", data.generator.feature_dim
                       if data.generator else None)
    return ScenarioConfig(tuple(nodes), tuple(links), data, training, cooperation, run, cost)


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario: {exc}")
    return parse_scenario(text)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical dict form with every default materialized."""
    nodes = []
    for n in cfg.nodes:
        entry = {
            "id": n.id,
            "kind": n.kind.value,
            "position": [n.position[0], n.position[1]],
            "cpu_rate": n.cpu_rate,
            "energy_per_cycle": n.energy_per_cycle,
            "tx_power": n.tx_power,
            "congestion_factor": n.congestion_factor,
        }
        if n.clique_id is not None:
            entry["clique_id"] = n.clique_id
        nodes.append(entry)
    links = []
    for l in cfg.links:
        if l.kind is LinkKind.WIRED_BACKHAUL:
            links.append({"a": l.a, "b": l.b, "kind": l.kind.value,
                          "rate_bps": l.bandwidth, "energy_per_bit": l.energy_per_bit})
        else:
            links.append({"a": l.a, "b": l.b, "kind": l.kind.value,
                          "bandwidth_hz": l.bandwidth, "snr": l.snr})
    part = cfg.data.partition
    partition = {"scheme": part.scheme, "seed": part.seed}
    if part.scheme == "dirichlet":
        partition["alpha"] = part.alpha
    else:
        partition["shards_per_device"] = part.shards_per_device
    data: dict = {"partition": partition}
    if cfg.data.generator:
        g = cfg.data.generator
        data["generator"] = {
            "classes": g.classes, "feature_dim": g.feature_dim, "samples": g.samples,
            "eval_samples": g.eval_samples, "class_separation": g.class_separation,
            "covariance_scale": g.covariance_scale, "seed": g.seed,
        }
    else:
        data["file"] = {"path": cfg.data.file.path, "eval_path": cfg.data.file.eval_path}

    def train_params(p: TrainParams) -> dict:
        return {"learning_rate": p.learning_rate, "local_epochs": p.local_epochs,
                "batch_size": p.batch_size}

    training = {
        "hidden_layers": list(cfg.training.hidden_layers),
        "default": train_params(cfg.training.default),
        "per_device": {str(d): train_params(p)
                       for d, p in sorted(cfg.training.per_device.items())},
    }
    coop = {
        "clique_gating": cfg.cooperation.clique_gating,
        "uplink_threshold_bps": cfg.cooperation.uplink_threshold_bps,
        "amortization_rounds": cfg.cooperation.amortization_rounds,
        "lambda_energy": cfg.cooperation.lambda_energy,
        "server_capacities": {str(s): c for s, c in
                              sorted(cfg.cooperation.server_capacities.items())},
        "default_server_capacity": cfg.cooperation.default_server_capacity,
    }
    if cfg.cooperation.quantum is not None:
        coop["quantum"] = cfg.cooperation.quantum
    run: dict = {
        "rounds": cfg.run.rounds,
        "target_accuracies": list(cfg.run.target_accuracies),
        "early_stop": cfg.run.early_stop,
    }
    if cfg.run.fixed_server is not None:
        run["fixed_server"] = cfg.run.fixed_server
    cost = {
        "cycles_per_sample_per_step": cfg.cost.cycles_per_sample_per_step,
        "aggregation_cycles_per_param": cfg.cost.aggregation_cycles_per_param,
        "bits_per_param": cfg.cost.bits_per_param,
        "bits_per_sample": cfg.cost.bits_per_sample,
    }
    return {"nodes": nodes, "links": links, "data": data, "training": training,
            "cooperation": coop, "run": run, "cost": cost}


def serialize_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True)


def scenario_hash(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(scenario_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_graph(cfg: ScenarioConfig) -> NetworkGraph:
    return NetworkGraph(cfg.nodes, cfg.links)
