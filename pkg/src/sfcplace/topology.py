"""Network model: nodes, servers, links, and delay-ranked path catalogs.

A topology is a directed graph of edge nodes plus (usually) one distant
cloud node.  Servers hang off nodes, links carry propagation delays that
can either be given explicitly or derived from node coordinates.  The
path catalog enumerates, for every ordered node pair, a small set of
candidate routes that the placement layers treat as the admissible set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import islice

import networkx as nx

EARTH_RADIUS_KM = 6371.0
# signals propagate at two thirds of the vacuum speed of light
FIBER_SPEED_KM_S = 299_792.458 * (2.0 / 3.0)

# default hourly cost figures for an edge server: flat cost while powered on,
# plus a linear term that reaches the second figure at full utilisation
E_IDLE_DEFAULT = 0.0184453
UTIL_COST_DEFAULT = 0.0095632


class TopologyError(ValueError):
    """Raised for malformed topology files or inconsistent models."""


class UnreachablePairError(TopologyError):
    """Raised when no path exists between a requested node pair."""


@dataclass(frozen=True)
class Node:
    id: int
    lat: float | None = None
    lon: float | None = None
    is_cloud: bool = False


@dataclass(frozen=True)
class Server:
    id: int
    node: int
    capacity_max: float
    is_cloud: bool = False
    idle_cost: float = E_IDLE_DEFAULT
    util_cost: float = UTIL_COST_DEFAULT
    fixed_cost: float = 0.0


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    capacity_max: float
    prop_delay: float

    @property
    def unbounded(self) -> bool:
        # cloud-side links are provisioned wide enough to never bind
        return math.isinf(self.capacity_max)


@dataclass(frozen=True)
class Path:
    id: int
    node_sequence: tuple[int, ...]
    link_sequence: tuple[int, ...]
    server_sequence: tuple[int, ...]
    total_prop_delay: float

    @property
    def src(self) -> int:
        return self.node_sequence[0]

    @property
    def dst(self) -> int:
        return self.node_sequence[-1]


def _coords(node) -> tuple[float, float]:
    lat = getattr(node, "lat", None)
    if lat is not None:
        return float(node.lat), float(node.lon)
    lat, lon = node
    return float(lat), float(lon)


def haversine_delay(node_a, node_b) -> float:
    """Great-circle propagation delay between two nodes in milliseconds.

    Accepts ``Node`` objects or plain ``(lat, lon)`` pairs.  The distance
    is the haversine arc on a spherical earth; the signal speed is fixed
    at two thirds of c, which is the usual figure for optical fiber.
    """
    lat1, lon1 = _coords(node_a)
    lat2, lon2 = _coords(node_b)
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    dist_km = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))
    return dist_km / FIBER_SPEED_KM_S * 1000.0


class NetworkModel:
    """Validated topology plus (after ``build_path_catalog``) its path sets."""

    def __init__(self, nodes, servers, links):
        self.nodes: list[Node] = sorted(nodes, key=lambda n: n.id)
        self.servers: list[Server] = sorted(servers, key=lambda s: s.id)
        self.links: list[Link] = sorted(links, key=lambda l: l.id)
        self.paths: list[Path] = []
        self.sfc_path_index: dict[tuple[int, int], tuple[int, ...]] = {}
        self.pairwise_sync_path_index: dict[tuple[int, int], tuple[int, ...]] = {}
        self.node_by_id = {n.id: n for n in self.nodes}
        self.server_by_id = {s.id: s for s in self.servers}
        self.link_by_id = {l.id: l for l in self.links}
        self._servers_at: dict[int, tuple[int, ...]] = {n.id: () for n in self.nodes}
        for s in self.servers:
            # tolerate a dangling node reference here; _check reports it
            self._servers_at[s.node] = self._servers_at.get(s.node, ()) + (s.id,)
        self._link_between = {(l.src, l.dst): l.id for l in self.links}
        self._check()

    def _check(self):
        if len(self.node_by_id) != len(self.nodes):
            raise TopologyError("duplicate node id")
        if len(self.server_by_id) != len(self.servers):
            raise TopologyError("duplicate server id")
        if len(self.link_by_id) != len(self.links):
            raise TopologyError("duplicate link id")
        if len(self._link_between) != len(self.links):
            raise TopologyError("parallel links between the same node pair")
        for s in self.servers:
            if s.node not in self.node_by_id:
                raise TopologyError(f"server {s.id} sits on unknown node {s.node}")
            if not s.capacity_max > 0:
                raise TopologyError(f"server {s.id} has non-positive capacity")
        for l in self.links:
            if l.src not in self.node_by_id or l.dst not in self.node_by_id:
                raise TopologyError(f"link {l.id} references unknown node")
            if l.src == l.dst:
                raise TopologyError(f"link {l.id} is a self-loop")
            if not l.capacity_max > 0:
                raise TopologyError(f"link {l.id} has non-positive capacity")
            if l.prop_delay < 0:
                raise TopologyError(f"link {l.id} has negative delay")

    # -- lookups ---------------------------------------------------------

    def servers_at(self, node_id: int) -> tuple[int, ...]:
        return self._servers_at.get(node_id, ())

    def link_between(self, src: int, dst: int) -> Link | None:
        lid = self._link_between.get((src, dst))
        return None if lid is None else self.link_by_id[lid]

    def edge_node_ids(self) -> list[int]:
        return [n.id for n in self.nodes if not n.is_cloud]

    def cloud_node_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.is_cloud]

    def is_cloud_server(self, server_id: int) -> bool:
        return self.server_by_id[server_id].is_cloud

    def path(self, path_id: int) -> Path:
        return self.paths[path_id]

    def paths_between(self, src: int, dst: int) -> list[Path]:
        ids = self.sfc_path_index.get((src, dst))
        if not ids:
            raise UnreachablePairError(f"no catalogued path from node {src} to node {dst}")
        return [self.paths[i] for i in ids]


def _parse_float(tok: str, what: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise TopologyError(f"line {lineno}: bad {what} value {tok!r}") from None


def load_topology(path) -> NetworkModel:
    """Read a topology file into a ``NetworkModel``.

    The format is line oriented with ``#`` comments and three sections::

        [nodes]    id  lat  lon  [cloud]
        [servers]  id  node  capacity  [idle_cost  util_cost  fixed_cost]
        [links]    src  dst  capacity  delay_ms

    ``-`` stands for an absent optional value.  Missing link delays are
    filled from the great-circle distance between the endpoint nodes,
    which then must both carry coordinates.  Capacities accept ``inf``
    for links that should never constrain a placement.
    """
    nodes: list[Node] = []
    servers: list[Server] = []
    links: list[Link] = []
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                section = line.strip("[]").strip().lower()
                if section not in ("nodes", "servers", "links"):
                    raise TopologyError(f"line {lineno}: unknown section {section!r}")
                continue
            toks = line.split()
            if section == "nodes":
                if len(toks) < 1:
                    raise TopologyError(f"line {lineno}: empty node record")
                nid = int(toks[0])
                lat = lon = None
                if len(toks) >= 3 and toks[1] != "-":
                    lat = _parse_float(toks[1], "latitude", lineno)
                    lon = _parse_float(toks[2], "longitude", lineno)
                cloud = len(toks) >= 4 and toks[3] == "cloud"
                nodes.append(Node(nid, lat, lon, cloud))
            elif section == "servers":
                if len(toks) < 3:
                    raise TopologyError(f"line {lineno}: server needs id, node, capacity")
                extra = {}
                for name, tok in zip(("idle_cost", "util_cost", "fixed_cost"), toks[3:6]):
                    if tok != "-":
                        extra[name] = _parse_float(tok, name, lineno)
                servers.append(
                    Server(int(toks[0]), int(toks[1]),
                           _parse_float(toks[2], "capacity", lineno), **extra)
                )
            elif section == "links":
                if len(toks) < 4:
                    raise TopologyError(f"line {lineno}: link needs src, dst, capacity, delay")
                delay = None if toks[3] == "-" else _parse_float(toks[3], "delay", lineno)
                links.append((int(toks[0]), int(toks[1]),
                              _parse_float(toks[2], "capacity", lineno), delay))
            else:
                raise TopologyError(f"line {lineno}: data before any section header")

    node_by_id = {n.id: n for n in nodes}
    # servers inherit cloudness from their node
    fixed_servers = []
    for s in servers:
        if s.node in node_by_id and node_by_id[s.node].is_cloud:
            s = Server(s.id, s.node, s.capacity_max, True, s.idle_cost, s.util_cost, s.fixed_cost)
        fixed_servers.append(s)
    fixed_links = []
    for lid, (src, dst, cap, delay) in enumerate(links):
        if delay is None:
            a, b = node_by_id.get(src), node_by_id.get(dst)
            if a is None or b is None:
                raise TopologyError(f"link {src}->{dst} references unknown node")
            if a.lat is None or b.lat is None:
                raise TopologyError(
                    f"link {src}->{dst} has no delay and endpoint coordinates are missing")
            delay = haversine_delay(a, b)
        fixed_links.append(Link(lid, src, dst, cap, delay))
    return NetworkModel(nodes, fixed_servers, fixed_links)


# -- path catalog --------------------------------------------------------


def _edge_subgraph(model: NetworkModel) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(model.edge_node_ids())
    for l in model.links:
        if not model.node_by_id[l.src].is_cloud and not model.node_by_id[l.dst].is_cloud:
            g.add_edge(l.src, l.dst, delay=l.prop_delay)
    return g


def _seq_delay(model: NetworkModel, seq) -> float:
    total = 0.0
    for a, b in zip(seq, islice(seq, 1, None)):
        total += model.link_between(a, b).prop_delay
    return total


def _k_shortest(model: NetworkModel, graph: nx.DiGraph, src: int, dst: int, k: int):
    """Up to k loop-free minimum-delay node sequences, ties settled lexically.

    The underlying enumeration yields paths in non-decreasing weight, so
    after k sequences we only need to keep pulling while the delay stays
    equal to the current k-th before cutting the list down.
    """
    found: list[tuple[float, tuple[int, ...]]] = []
    try:
        for seq in nx.shortest_simple_paths(graph, src, dst, weight="delay"):
            d = _seq_delay(model, seq)
            if len(found) < k or d == found[k - 1][0]:
                found.append((d, tuple(seq)))
            else:
                break
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return []
    found.sort()
    return found[:k]


def _through_cloud(model, edge_graph, edge_dist, src, dst, cloud):
    """Best simple route src -> ... -> cloud -> ... -> dst, or None.

    Composes a shortest approach to an ingress gateway with a shortest
    escape from an egress gateway, requiring the two edge segments to be
    node-disjoint so the whole walk stays loop free.  Gateway pairs are
    screened in lower-bound order and the scan stops once no remaining
    pair can beat the best realised delay.
    """
    gates_in = sorted(n for n in model.edge_node_ids() if model.link_between(n, cloud))
    gates_out = sorted(n for n in model.edge_node_ids() if model.link_between(cloud, n))
    cands = []
    for g1 in gates_in:
        d1 = 0.0 if g1 == src else edge_dist.get(src, {}).get(g1)
        if d1 is None:
            continue
        for g2 in gates_out:
            if g2 == g1:
                continue
            d2 = 0.0 if g2 == dst else edge_dist.get(g2, {}).get(dst)
            if d2 is None:
                continue
            bound = (d1 + model.link_between(g1, cloud).prop_delay
                     + model.link_between(cloud, g2).prop_delay + d2)
            cands.append((bound, g1, g2))
    cands.sort()
    best = None  # (delay, node_sequence)
    for bound, g1, g2 in cands:
        if best is not None and bound > best[0]:
            break
        for lead_in_first in (True, False):
            seq = _compose_disjoint(edge_graph, src, g1, g2, dst, lead_in_first)
            if seq is None:
                continue
            full = seq[0] + (cloud,) + seq[1]
            d = _seq_delay(model, full)
            if best is None or (d, full) < best:
                best = (d, full)
    return best


def _compose_disjoint(edge_graph, src, g1, g2, dst, lead_in_first):
    try:
        if lead_in_first:
            seg1 = tuple(nx.dijkstra_path(edge_graph, src, g1, weight="delay"))
            if g2 in seg1 or dst in seg1:
                return None
            rest = edge_graph.subgraph(n for n in edge_graph if n not in seg1)
            seg2 = tuple(nx.dijkstra_path(rest, g2, dst, weight="delay"))
        else:
            seg2 = tuple(nx.dijkstra_path(edge_graph, g2, dst, weight="delay"))
            if src in seg2 or g1 in seg2:
                return None
            rest = edge_graph.subgraph(n for n in edge_graph if n not in seg2)
            seg1 = tuple(nx.dijkstra_path(rest, src, g1, weight="delay"))
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None
    return seg1, seg2


def build_path_catalog(model: NetworkModel, k_edge: int = 3, include_cloud_path: bool = True):
    """Populate ``model.paths`` and the per-pair path indexes.

    For every ordered pair of distinct nodes (at most one of them cloud)
    the catalog holds up to ``k_edge`` minimum-delay loop-free paths that
    stay on edge nodes, plus, when ``include_cloud_path`` and a cloud
    node exists, one path detouring through it.  Pairs touching a cloud
    node directly get their ``k_edge`` best paths on the graph restricted
    to edge nodes plus that cloud.  Every pair's list is sorted by total
    propagation delay (ties by node sequence) and shared by SFC routing
    and state-sync routing alike.  Raises ``UnreachablePairError`` if a
    pair has no path at all.
    """
    edge_graph = _edge_subgraph(model)
    edge_dist = dict(nx.all_pairs_dijkstra_path_length(edge_graph, weight="delay"))
    cloud_ids = model.cloud_node_ids()
    cloud_graphs = {}
    for c in cloud_ids:
        g = edge_graph.copy()
        g.add_node(c)
        for l in model.links:
            if l.src == c or l.dst == c:
                if not (model.node_by_id[l.src].is_cloud and model.node_by_id[l.dst].is_cloud):
                    g.add_edge(l.src, l.dst, delay=l.prop_delay)
        cloud_graphs[c] = g

    paths: list[Path] = []
    index: dict[tuple[int, int], tuple[int, ...]] = {}
    all_ids = [n.id for n in model.nodes]
    for a in all_ids:
        for b in all_ids:
            if a == b:
                continue
            a_cloud = model.node_by_id[a].is_cloud
            b_cloud = model.node_by_id[b].is_cloud
            if a_cloud and b_cloud:
                continue
            if a_cloud or b_cloud:
                c = a if a_cloud else b
                entries = _k_shortest(model, cloud_graphs[c], a, b, k_edge)
            else:
                entries = _k_shortest(model, edge_graph, a, b, k_edge)
                if include_cloud_path:
                    best = None
                    for c in cloud_ids:
                        cand = _through_cloud(model, edge_graph, edge_dist, a, b, c)
                        if cand is not None and (best is None or cand < best):
                            best = cand
                    if best is not None:
                        entries.append(best)
            if not entries:
                raise UnreachablePairError(f"no catalogued path from node {a} to node {b}")
            entries.sort()
            ids = []
            for delay, seq in entries:
                link_seq = tuple(model.link_between(u, v).id
                                 for u, v in zip(seq, islice(seq, 1, None)))
                server_seq = tuple(s for n in seq for s in model.servers_at(n))
                pid = len(paths)
                paths.append(Path(pid, seq, link_seq, server_seq, delay))
                ids.append(pid)
            index[(a, b)] = tuple(ids)

    model.paths = paths
    model.sfc_path_index = index
    model.pairwise_sync_path_index = index
    return index


def sync_paths_between(model: NetworkModel, n: int, m: int) -> list[Path]:
    """Candidate routes for state-sync traffic between two nodes, best first."""
    ids = model.pairwise_sync_path_index.get((n, m))
    if not ids:
        raise UnreachablePairError(f"no catalogued path from node {n} to node {m}")
    return [model.paths[i] for i in ids]
