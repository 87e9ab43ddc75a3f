"""Edge/fog network graph: node/link types, Shannon link rates, min-delay routing."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import ConfigError, NoSuchLinkError, UnreachableError


class NodeKind(str, Enum):
    DEVICE = "device"
    EDGE_SERVER = "edge_server"
    BASE_STATION = "base_station"
    ROUTER = "router"


class LinkKind(str, Enum):
    D2D_WIRELESS = "d2d_wireless"
    D2S_WIRELESS = "d2s_wireless"
    WIRED_BACKHAUL = "wired_backhaul"


COMPUTE_KINDS = (NodeKind.DEVICE, NodeKind.EDGE_SERVER)


@dataclass(frozen=True)
class NodeProfile:
    id: int
    kind: NodeKind
    position: tuple[float, float] = (0.0, 0.0)
    cpu_rate: float = 0.0  # cycles/s; must be 0 for base stations and routers
    energy_per_cycle: float = 0.0  # joules/cycle
    tx_power: float = 0.0  # watts; the transmitter pays for wireless hops
    clique_id: int | None = None  # devices only
    congestion_factor: float = 1.0  # >= 1, multiplies delay of hops INTO this node


@dataclass(frozen=True)
class Link:
    """Undirected link. `bandwidth` is Hz for wireless kinds, bits/s for wired."""

    a: int
    b: int
    kind: LinkKind
    bandwidth: float
    snr: float | None = None  # linear, wireless only
    energy_per_bit: float | None = None  # joules/bit, wired only

    def key(self) -> tuple[int, int]:
        return (self.a, self.b) if self.a < self.b else (self.b, self.a)


@dataclass(frozen=True)
class Route:
    """A routed transfer: node sequence plus its total and per-hop costs."""

    nodes: tuple[int, ...]
    delay_s: float
    energy_j: float
    hop_delays: tuple[float, ...]
    hop_energies: tuple[float, ...]


class NetworkGraph:
    """Immutable undirected network; safe for concurrent reads."""

    def __init__(self, nodes: Iterable[NodeProfile], links: Iterable[Link]):
        self.nodes: dict[int, NodeProfile] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise ConfigError(f"duplicate node id {node.id}")
            self.nodes[node.id] = node
        self._links: dict[tuple[int, int], Link] = {}
        adjacency: dict[int, set[int]] = {nid: set() for nid in self.nodes}
        for link in links:
            if link.a == link.b:
                raise ConfigError(f"link ({link.a}, {link.b}) is a self-loop")
            for end in (link.a, link.b):
                if end not in self.nodes:
                    raise ConfigError(
                        f"link ({link.a}, {link.b}) references unknown node {end}"
                    )
            if link.key() in self._links:
                raise ConfigError(f"duplicate link between {link.a} and {link.b}")
            if link.kind is LinkKind.D2D_WIRELESS:
                for end in (link.a, link.b):
                    if self.nodes[end].kind is not NodeKind.DEVICE:
                        raise ConfigError(
                            f"d2d link ({link.a}, {link.b}) touches non-device node {end}"
                        )
            self._links[link.key()] = link
            adjacency[link.a].add(link.b)
            adjacency[link.b].add(link.a)
        self._adjacency: dict[int, tuple[int, ...]] = {
            nid: tuple(sorted(neigh)) for nid, neigh in adjacency.items()
        }

    @property
    def links(self) -> tuple[Link, ...]:
        return tuple(self._links.values())

    def node(self, node_id: int) -> NodeProfile:
        if node_id not in self.nodes:
            raise ConfigError(f"unknown node id {node_id}")
        return self.nodes[node_id]

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        return self._adjacency.get(node_id, ())

    def link(self, a: int, b: int) -> Link:
        key = (a, b) if a < b else (b, a)
        if key not in self._links:
            raise NoSuchLinkError(f"no link between {a} and {b}")
        return self._links[key]

    def has_link(self, a: int, b: int) -> bool:
        key = (a, b) if a < b else (b, a)
        return key in self._links

    def ids_of_kind(self, kind: NodeKind) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes.values() if n.kind is kind))

    def device_ids(self) -> tuple[int, ...]:
        return self.ids_of_kind(NodeKind.DEVICE)

    def server_ids(self) -> tuple[int, ...]:
        return self.ids_of_kind(NodeKind.EDGE_SERVER)


def build_graph(scenario) -> NetworkGraph:
    """Build the network graph from a parsed scenario (anything with .nodes/.links)."""
    return NetworkGraph(scenario.nodes, scenario.links)


def link_rate(graph: NetworkGraph, a: int, b: int) -> float:
    """Achievable rate in bits/s: Shannon capacity for wireless, declared rate for wired."""
    link = graph.link(a, b)
    if link.kind is LinkKind.WIRED_BACKHAUL:
        return link.bandwidth
    return link.bandwidth * math.log2(1.0 + link.snr)


def hop_cost(graph: NetworkGraph, tx: int, rx: int, payload_bits: float) -> tuple[float, float]:
    """(delay_s, energy_j) of sending payload over the single link tx -> rx.

    Delay is payload/rate scaled by the receiver's congestion factor; energy is
    tx_power * delay on wireless hops and energy_per_bit * payload on wired hops
    (the transmitter pays, receiving is free).
    """
    link = graph.link(tx, rx)
    rate = link_rate(graph, tx, rx)
    delay = payload_bits / rate * graph.node(rx).congestion_factor
    if link.kind is LinkKind.WIRED_BACKHAUL:
        energy = link.energy_per_bit * payload_bits
    else:
        energy = graph.node(tx).tx_power * delay
    return delay, energy


def route(graph: NetworkGraph, src: int, dst: int, payload_bits: float) -> Route:
    """Minimum-delay path from src to dst for the given payload.

    Ties broken by fewer hops, then by the lexicographically smallest node-id
    sequence, so the result is fully deterministic. Both tie-break components are
    preserved under path extension, which keeps plain Dijkstra labels optimal.
    """
    if src == dst:
        raise ValueError("route requires src != dst")
    for nid in (src, dst):
        if nid not in graph.nodes:
            raise ConfigError(f"unknown node id {nid}")

    best: dict[int, tuple[float, int, tuple[int, ...]]] = {}
    start = (0.0, 0, (src,))
    heap: list[tuple[float, int, tuple[int, ...]]] = [start]
    best[src] = start
    while heap:
        delay, hops, path = heapq.heappop(heap)
        node = path[-1]
        if best.get(node) != (delay, hops, path):
            continue
        if node == dst:
            hop_delays = []
            hop_energies = []
            for tx, rx in zip(path, path[1:]):
                d, e = hop_cost(graph, tx, rx, payload_bits)
                hop_delays.append(d)
                hop_energies.append(e)
            total_delay = 0.0
            total_energy = 0.0
            for d in hop_delays:
                total_delay += d
            for e in hop_energies:
                total_energy += e
            return Route(path, total_delay, total_energy, tuple(hop_delays), tuple(hop_energies))
        for nxt in graph.neighbors(node):
            if nxt in path:
                continue
            d, _ = hop_cost(graph, node, nxt, payload_bits)
            label = (delay + d, hops + 1, path + (nxt,))
            if nxt not in best or label < best[nxt]:
                best[nxt] = label
                heapq.heappush(heap, label)
    raise UnreachableError(src, dst)
