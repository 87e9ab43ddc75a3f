import json
from pathlib import Path

import numpy as np
import pytest

from coopfl.data import LocalDataset, SampleSet
from coopfl.topology import Link, LinkKind, NetworkGraph, NodeKind, NodeProfile

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def device(node_id, cpu=1e9, epc=1e-9, tx=0.5, clique=None, congestion=1.0):
    return NodeProfile(node_id, NodeKind.DEVICE, (0.0, 0.0), cpu, epc, tx,
                       clique, congestion)


def server(node_id, cpu=1e10, epc=1e-10, congestion=1.0):
    return NodeProfile(node_id, NodeKind.EDGE_SERVER, (0.0, 0.0), cpu, epc, 0.0,
                       None, congestion)


def base_station(node_id, tx=1.0, congestion=1.0):
    return NodeProfile(node_id, NodeKind.BASE_STATION, (0.0, 0.0), 0.0, 0.0, tx,
                       None, congestion)


def router(node_id, congestion=1.0):
    return NodeProfile(node_id, NodeKind.ROUTER, (0.0, 0.0), 0.0, 0.0, 0.0,
                       None, congestion)


def d2d(a, b, bandwidth=1e6, snr=3.0):
    return Link(a, b, LinkKind.D2D_WIRELESS, bandwidth, snr, None)


def d2s(a, b, bandwidth=1e6, snr=7.0):
    return Link(a, b, LinkKind.D2S_WIRELESS, bandwidth, snr, None)


def wired(a, b, rate=1e8, energy_per_bit=1e-8):
    return Link(a, b, LinkKind.WIRED_BACKHAUL, rate, None, energy_per_bit)


def make_dataset(owner, features, labels, ids=None, num_classes=None):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    labels = np.asarray(labels, dtype=np.int64)
    if ids is None:
        ids = np.arange(len(labels), dtype=np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 1
    return LocalDataset(owner, SampleSet(features, labels,
                                         np.asarray(ids, dtype=np.int64), num_classes))


@pytest.fixture(scope="session")
def d2d_scenario_path():
    return SCENARIO_DIR / "d2d_fig3.json"


@pytest.fixture(scope="session")
def d2s_scenario_path():
    return SCENARIO_DIR / "d2s_fig5.json"


def minimal_scenario_doc(**overrides):
    doc = {
        "nodes": [
            {"id": 0, "kind": "device", "clique_id": 0},
            {"id": 1, "kind": "device", "clique_id": 0},
            {"id": 10, "kind": "edge_server"},
        ],
        "links": [
            {"a": 0, "b": 1, "kind": "d2d_wireless", "bandwidth_hz": 1e6, "snr": 3.0},
            {"a": 0, "b": 10, "kind": "d2s_wireless", "bandwidth_hz": 1e6, "snr": 7.0},
            {"a": 1, "b": 10, "kind": "d2s_wireless", "bandwidth_hz": 1e6, "snr": 7.0},
        ],
    }
    doc.update(overrides)
    return doc


def scenario_text(**overrides):
    return json.dumps(minimal_scenario_doc(**overrides))
