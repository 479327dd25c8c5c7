"""Placement state and its structural/capacity validators.

The state records only the decisions: which path each demand takes,
which server each (SFC, VNF slot, demand) triple lands on, which paths
carry state-sync traffic between instance replicas, and optionally a
snapshot of an earlier placement for migration accounting.  Everything
else (active instances, per-link and per-server load, replica counts)
is derived on demand, so the validators are pure recomputations and can
never drift from the decision variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .topology import NetworkModel, UnreachablePairError, sync_paths_between
from .workload import Scenario

# relative slack for capacity comparisons; sums like 1.2 * 10 carry float
# dust, and a server filled exactly to capacity must not be flagged
CAP_EPS = 1e-9


class StateError(ValueError):
    """Raised for state files that cannot be parsed or incomplete queries."""


@dataclass
class PlacementState:
    demand_route: dict[int, int] = field(default_factory=dict)
    vnf_assignment: dict[tuple[int, int, int], int] = field(default_factory=dict)
    sync_route: dict[tuple[int, int, int, int], int] = field(default_factory=dict)
    initial_snapshot: dict[tuple[int, int], frozenset[int]] | None = None

    def clone(self) -> "PlacementState":
        return PlacementState(dict(self.demand_route), dict(self.vnf_assignment),
                              dict(self.sync_route), self.initial_snapshot)


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: tuple
    detail: str

    def __str__(self):
        return f"[{self.kind}] {self.detail}"


@dataclass
class UtilizationReport:
    link_load: dict[int, float]
    link_util: dict[int, float]
    server_load: dict[int, float]
    server_util: dict[int, float]

    def avg_link_util(self, model: NetworkModel) -> float:
        vals = [u for lid, u in self.link_util.items() if not model.link_by_id[lid].unbounded]
        return sum(vals) / len(vals) if vals else 0.0

    def avg_edge_server_util(self, model: NetworkModel) -> float:
        vals = [u for sid, u in self.server_util.items() if not model.is_cloud_server(sid)]
        return sum(vals) / len(vals) if vals else 0.0


# -- derived views -------------------------------------------------------


def instance_map(state: PlacementState, scenario: Scenario):
    """(sfc, vnf slot) -> {server -> sorted demand ids} for live instances."""
    out: dict[tuple[int, int], dict[int, list[int]]] = {}
    for (s, v, d), x in sorted(state.vnf_assignment.items()):
        out.setdefault((s, v), {}).setdefault(x, []).append(d)
    return out

def instance_servers(state: PlacementState, sfc: int, vnf: int) -> set[int]:
    return {x for (s, v, _d), x in state.vnf_assignment.items() if s == sfc and v == vnf}

def active_paths(state: PlacementState, scenario: Scenario, sfc: int) -> set[int]:
    """Paths currently carrying at least one demand of the SFC."""
    return {state.demand_route[d.id] for d in scenario.sfc(sfc).demands
            if d.id in state.demand_route}

def routed_demand_count(state: PlacementState, scenario: Scenario, sfc: int) -> int:
    return sum(1 for d in scenario.sfc(sfc).demands if d.id in state.demand_route)


def sync_flows(state: PlacementState, scenario: Scenario):
    """Distinct (sfc, vnf, path) sync selections with their traffic volume.

    One flow unit per selected path, regardless of how many server pairs
    span the same node pair; volume is the VNF's sync ratio times the
    number of demands the SFC currently routes.
    """
    selected = {}
    for (s, v, _x, _y), p in state.sync_route.items():
        selected[(s, v, p)] = None
    flows = []
    for (s, v, p) in sorted(selected):
        vnf = scenario.sfc(s).vnf_chain[v]
        flows.append(((s, v, p), vnf.sync_ratio * routed_demand_count(state, scenario, s)))
    return flows


def link_loads(state: PlacementState, scenario: Scenario) -> dict[int, float]:
    model = scenario.network
    load = {l.id: 0.0 for l in model.links}
    for did, pid in state.demand_route.items():
        try:
            bw = scenario.demand(did).bandwidth
        except KeyError:
            continue  # flagged by validate_routing
        for lid in model.paths[pid].link_sequence:
            load[lid] += bw
    for (_s, _v, pid), vol in sync_flows(state, scenario):
        for lid in model.paths[pid].link_sequence:
            load[lid] += vol
    return load


def server_loads(state: PlacementState, scenario: Scenario) -> dict[int, float]:
    """Processing load per server: scaled demand bandwidth plus, for each
    live instance, the execution environment's overhead."""
    model = scenario.network
    load = {s.id: 0.0 for s in model.servers}
    for (s, v), per_server in instance_map(state, scenario).items():
        vnf = scenario.sfc(s).vnf_chain[v]
        for x, demands in per_server.items():
            if x not in load:
                continue  # flagged by validate_vnf_placement
            bw = sum(scenario.demand(d).bandwidth for d in demands
                     if d in scenario._demand_by_id)
            load[x] += vnf.load_ratio * bw + vnf.overhead
    return load


def utilization(state: PlacementState, scenario: Scenario) -> UtilizationReport:
    model = scenario.network
    ll = link_loads(state, scenario)
    sl = server_loads(state, scenario)
    lu = {lid: (0.0 if model.link_by_id[lid].unbounded else v / model.link_by_id[lid].capacity_max)
          for lid, v in ll.items()}
    su = {sid: v / model.server_by_id[sid].capacity_max for sid, v in sl.items()}
    return UtilizationReport(ll, lu, sl, su)


# -- validators ----------------------------------------------------------


def validate_routing(state: PlacementState, scenario: Scenario,
                     required=None) -> list[Violation]:
    """``required`` narrows which demands must be routed (default: all);
    anything that is routed gets checked either way."""
    need = set(required) if required is not None else {d.id for d in scenario.all_demands()}
    out = []
    for d in scenario.all_demands():
        pid = state.demand_route.get(d.id)
        if pid is None:
            if d.id in need:
                out.append(Violation("missing-route", (d.id,), f"demand {d.id} has no route"))
        elif pid not in scenario.sfc(d.sfc).admissible_paths:
            out.append(Violation("inadmissible-path", (d.id, pid),
                                 f"demand {d.id} routed on path {pid} outside its SFC's set"))
    for did in sorted(state.demand_route):
        if did not in scenario._demand_by_id:
            out.append(Violation("unknown-demand", (did,),
                                 f"route for demand {did} not in the scenario"))
    return out


def validate_vnf_placement(state: PlacementState, scenario: Scenario) -> list[Violation]:
    model = scenario.network
    out = []
    for d in scenario.all_demands():
        pid = state.demand_route.get(d.id)
        if pid is None:
            continue
        chain = scenario.sfc(d.sfc).vnf_chain
        on_path = set(model.paths[pid].server_sequence)
        for v in range(len(chain)):
            x = state.vnf_assignment.get((d.sfc, v, d.id))
            if x is None:
                out.append(Violation("missing-vnf", (d.sfc, v, d.id),
                                     f"demand {d.id} has no server for VNF {v}"))
            elif x not in model.server_by_id:
                out.append(Violation("unknown-server", (d.sfc, v, d.id, x),
                                     f"demand {d.id} VNF {v} on unknown server {x}"))
            elif x not in on_path:
                out.append(Violation("off-path-server", (d.sfc, v, d.id, x),
                                     f"demand {d.id} VNF {v} on server {x} off path {pid}"))
    known = set()
    for d in scenario.all_demands():
        if d.id in state.demand_route:
            for v in range(len(scenario.sfc(d.sfc).vnf_chain)):
                known.add((d.sfc, v, d.id))
    for key in sorted(state.vnf_assignment):
        if key not in known:
            out.append(Violation("stray-assignment", key,
                                 f"assignment {key} has no matching routed demand"))
    return out


def validate_sequence_order(state: PlacementState, scenario: Scenario) -> list[Violation]:
    """Each demand must traverse its VNFs in chain order along its path."""
    model = scenario.network
    out = []
    for d in scenario.all_demands():
        pid = state.demand_route.get(d.id)
        if pid is None:
            continue
        path = model.paths[pid]
        pos = {n: i for i, n in enumerate(path.node_sequence)}
        last = -1
        for v in range(len(scenario.sfc(d.sfc).vnf_chain)):
            x = state.vnf_assignment.get((d.sfc, v, d.id))
            if x is None or x not in model.server_by_id:
                continue
            node = model.server_by_id[x].node
            if node not in pos:
                continue
            if pos[node] < last:
                out.append(Violation("order", (d.sfc, v, d.id),
                                     f"demand {d.id} VNF {v} placed upstream of VNF {v - 1}"))
            last = max(last, pos[node])
    return out


def validate_replication_limit(state: PlacementState, scenario: Scenario) -> list[Violation]:
    """Replica count per (SFC, VNF) is bounded by the SFC's active path
    count; non-replicable VNF types must keep a single instance."""
    out = []
    for (s, v), per_server in sorted(instance_map(state, scenario).items()):
        try:
            sfc = scenario.sfc(s)
            vnf = sfc.vnf_chain[v]
        except (KeyError, IndexError):
            continue  # stray assignments already flagged
        n_inst = len(per_server)
        limit = len(active_paths(state, scenario, s))
        if not vnf.replicable:
            limit = min(limit, 1)
        if n_inst > limit:
            out.append(Violation("replication", (s, v),
                                 f"SFC {s} VNF {v} has {n_inst} instances, limit {limit}"))
    return out


def validate_capacities(state: PlacementState, scenario: Scenario) -> list[Violation]:
    model = scenario.network
    rep = utilization(state, scenario)
    out = []
    for lid in sorted(rep.link_util):
        if model.link_by_id[lid].unbounded:
            continue
        if rep.link_util[lid] > 1.0 + CAP_EPS:
            out.append(Violation("link-overload", (lid,),
                                 f"link {lid} at {rep.link_util[lid]:.4f} of capacity"))
    for sid in sorted(rep.server_util):
        if rep.server_util[sid] > 1.0 + CAP_EPS:
            out.append(Violation("server-overload", (sid,),
                                 f"server {sid} at {rep.server_util[sid]:.4f} of capacity"))
    return out


def validate_all(state: PlacementState, scenario: Scenario,
                 required=None) -> list[Violation]:
    return (validate_routing(state, scenario, required)
            + validate_vnf_placement(state, scenario)
            + validate_sequence_order(state, scenario)
            + validate_replication_limit(state, scenario)
            + validate_capacities(state, scenario))


# -- migrations, replications, snapshots ---------------------------------


def take_snapshot(state: PlacementState, scenario: Scenario) -> dict[tuple[int, int], frozenset[int]]:
    snap = {}
    for (s, v), per_server in instance_map(state, scenario).items():
        snap[(s, v)] = frozenset(per_server)
    return snap


def count_migrations(state: PlacementState, scenario: Scenario) -> int:
    """Snapshot servers that no longer host their instance."""
    if state.initial_snapshot is None:
        raise StateError("no initial snapshot recorded; cannot count migrations")
    n = 0
    for (s, v), old in state.initial_snapshot.items():
        now = instance_servers(state, s, v)
        n += sum(1 for x in old if x not in now)
    return n


def count_replications(state: PlacementState, scenario: Scenario) -> int:
    """Instances beyond the first for each (SFC, VNF)."""
    n = 0
    for (_sv, per_server) in instance_map(state, scenario).items():
        n += max(0, len(per_server) - 1)
    return n


def migrated_slots(state: PlacementState, scenario: Scenario, sfc: int) -> int:
    """Per-SFC variant of the migration count, used for downtime."""
    if state.initial_snapshot is None:
        return 0
    n = 0
    for (s, v), old in state.initial_snapshot.items():
        if s != sfc:
            continue
        now = instance_servers(state, s, v)
        n += sum(1 for x in old if x not in now)
    return n


# -- sync-route selection ------------------------------------------------


def plan_sync_routes(scenario: Scenario, sfc_id: int, servers_by_v: dict[int, set[int]],
                     routed_count: int, link_load: dict[int, float]):
    """Choose sync paths for one SFC against the given link loads.

    For every VNF slot with replicas on two or more distinct nodes, and
    for every ordered pair of those nodes, picks the candidate path that
    minimises the worst post-assignment utilisation over its bounded
    links (ties fall to the shorter, then lower-id path, which is the
    catalog order).  ``link_load`` is updated in place as flows commit,
    so later pairs see earlier choices.  Returns the sync entries and
    the worst utilisation over all committed flows; raises
    ``UnreachablePairError`` when a node pair has no catalogued path.
    """
    model = scenario.network
    sfc = scenario.sfc(sfc_id)
    entries: dict[tuple[int, int, int, int], int] = {}
    worst = 0.0
    for v in sorted(servers_by_v):
        vnf = sfc.vnf_chain[v]
        vol = vnf.sync_ratio * routed_count
        by_node: dict[int, list[int]] = {}
        for x in sorted(servers_by_v[v]):
            by_node.setdefault(model.server_by_id[x].node, []).append(x)
        nodes = sorted(by_node)
        for n in nodes:
            for m in nodes:
                if n == m:
                    continue
                best_pid, best_util = None, None
                for path in sync_paths_between(model, n, m):
                    u = 0.0
                    for lid in path.link_sequence:
                        link = model.link_by_id[lid]
                        if link.unbounded:
                            continue
                        u = max(u, (link_load[lid] + vol) / link.capacity_max)
                    if best_util is None or u < best_util:
                        best_pid, best_util = path.id, u
                if best_pid is None:
                    raise UnreachablePairError(
                        f"no sync path between nodes {n} and {m} for SFC {sfc_id}")
                for lid in model.paths[best_pid].link_sequence:
                    link_load[lid] += vol
                worst = max(worst, best_util)
                for x in by_node[n]:
                    for y in by_node[m]:
                        entries[(sfc_id, v, x, y)] = best_pid
    return entries, worst


def assign_sync_routes(state: PlacementState, scenario: Scenario,
                       sfc_ids=None) -> PlacementState:
    """(Re)select sync paths for the given SFCs (default: all).

    Existing selections for the targeted SFCs are dropped first; loads
    from demands and from other SFCs' sync flows are respected.  The
    choice is sequential and deterministic.  Overload is not an error
    here; ``validate_capacities`` reports it.
    """
    targets = sorted(sfc_ids) if sfc_ids is not None else [s.id for s in scenario.sfcs]
    target_set = set(targets)
    state.sync_route = {k: v for k, v in state.sync_route.items() if k[0] not in target_set}
    load = link_loads(state, scenario)
    for sid in targets:
        servers_by_v: dict[int, set[int]] = {}
        for (s, v, _d), x in state.vnf_assignment.items():
            if s == sid:
                servers_by_v.setdefault(v, set()).add(x)
        entries, _worst = plan_sync_routes(scenario, sid, servers_by_v,
                                           routed_demand_count(state, scenario, sid), load)
        state.sync_route.update(entries)
    return state


# -- state files ---------------------------------------------------------


def dump_state(state: PlacementState, path) -> None:
    """Write the raw decision variables; pairs with a specific topology
    and path-catalog configuration, since path ids are catalog indexes."""
    lines = ["[routes]", "# demand path"]
    for d, p in sorted(state.demand_route.items()):
        lines.append(f"{d} {p}")
    lines += ["", "[assignments]", "# sfc vnf demand server"]
    for (s, v, d), x in sorted(state.vnf_assignment.items()):
        lines.append(f"{s} {v} {d} {x}")
    lines += ["", "[sync]", "# sfc vnf server_x server_y path"]
    for (s, v, x, y), p in sorted(state.sync_route.items()):
        lines.append(f"{s} {v} {x} {y} {p}")
    if state.initial_snapshot is not None:
        lines += ["", "[snapshot]", "# sfc vnf servers..."]
        for (s, v), xs in sorted(state.initial_snapshot.items()):
            lines.append(f"{s} {v} " + " ".join(str(x) for x in sorted(xs)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_state(path) -> PlacementState:
    st = PlacementState()
    snapshot: dict[tuple[int, int], frozenset[int]] = {}
    saw_snapshot = False
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                section = line.strip("[]").strip().lower()
                if section not in ("routes", "assignments", "sync", "snapshot"):
                    raise StateError(f"line {lineno}: unknown section {section!r}")
                saw_snapshot = saw_snapshot or section == "snapshot"
                continue
            toks = line.split()
            try:
                if section == "routes":
                    st.demand_route[int(toks[0])] = int(toks[1])
                elif section == "assignments":
                    st.vnf_assignment[(int(toks[0]), int(toks[1]), int(toks[2]))] = int(toks[3])
                elif section == "sync":
                    st.sync_route[(int(toks[0]), int(toks[1]),
                                   int(toks[2]), int(toks[3]))] = int(toks[4])
                elif section == "snapshot":
                    snapshot[(int(toks[0]), int(toks[1]))] = frozenset(
                        int(t) for t in toks[2:])
                else:
                    raise StateError(f"line {lineno}: data before any section header")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, StateError):
                    raise
                raise StateError(f"line {lineno}: malformed record {line!r}") from None
    if saw_snapshot:
        st.initial_snapshot = snapshot
    return st
