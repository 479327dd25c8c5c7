"""Exact optimisation for small instances, plus MILP interchange.

``solve_exact`` runs a depth-first branch-and-bound over the discrete
decisions (demand -> path, (demand, slot) -> server): demands are
branched in bandwidth-descending order, paths in delay order, servers
in path order, with capacity and replica pruning plus a committed-cost
lower bound (edge activation + utilisation of used servers, cloud
charges of opened instances; penalties and sync traffic are only
priced at complete leaves, where the canonical sync-route selection
and the full validator battery run).  The search is sequential and
deterministic: nodes_explored is reproducible for identical inputs.

``export_milp`` writes the complete mixed-integer model of the same
problem in LP text format with documented, stable variable names (see
docs/lp-naming.md); ``import_solution`` maps a solved variable vector
back into a :class:`PlacementState`.  Both are deterministic.
"""

from __future__ import annotations

import math
import re
import time as _time
from dataclasses import dataclass

from .cost import CostBreakdown, total_cost
from .state import (CAP_EPS, PlacementState, assign_sync_routes, validate_all)
from .topology import UnreachablePairError
from .workload import Partition, Scenario

_BINARY_FAMILIES = ("z", "zl", "f", "fl", "fx", "fn", "g", "h")


class ExactGuardError(ValueError):
    """Instance too large for the exact search's combination guard."""


@dataclass
class ExactResult:
    """Outcome of the exact search.

    ``best_state is None`` with ``proven_optimal`` means the search
    completed and no feasible assignment exists; with
    ``proven_optimal`` False it means the budget ran out before any
    feasible leaf was reached.
    """

    best_state: PlacementState | None
    best_cost: CostBreakdown | None
    nodes_explored: int
    proven_optimal: bool
    leaves: int = 0
    census: float = 0.0

    @property
    def infeasible(self) -> bool:
        return self.best_state is None and self.proven_optimal


def _resolve_demands(scenario: Scenario, partition, snapshot, demands):
    if demands is not None:
        return sorted(demands)
    if partition is not None and snapshot is None:
        return sorted(partition.initial_ids())
    return [d.id for d in scenario.all_demands()]


def _ordered_chain_count(model, path, length: int) -> float:
    """Server chains of ``length`` slots along ``path`` that respect order.

    Node positions may never move backward; inside one node every server
    choice and order is admissible.  With node server-multiplicities
    m_1..m_k this is the complete homogeneous symmetric sum
    h_length(m_1..m_k), computed by a small DP.
    """
    mults: list[int] = []
    prev = None
    for xid in path.server_sequence:
        node = model.server_by_id[xid].node
        if node != prev:
            mults.append(0)
            prev = node
        mults[-1] += 1
    ways = [1.0] + [0.0] * length
    for m in mults:
        new = [0.0] * (length + 1)
        for have, w in enumerate(ways):
            if w == 0.0:
                continue
            powm = 1.0
            for extra in range(length + 1 - have):
                new[have + extra] += w * powm
                powm *= m
        ways = new
    return ways[length]


def assignment_census(scenario: Scenario, demands=None) -> float:
    """Number of complete (path, server-chain) assignments to enumerate.

    Per demand the path choice multiplies the count of order-respecting
    server chains on that path (see :func:`_ordered_chain_count`);
    demands multiply independently.  This is an upper bound when the
    replica limit prunes combinations.
    """
    ids = _resolve_demands(scenario, None, None, demands)
    model = scenario.network
    total = 1.0
    for did in ids:
        sfc = scenario.sfc(scenario.demand(did).sfc)
        length = len(sfc.vnf_chain)
        per = 0.0
        for pid in sfc.admissible_paths:
            per += _ordered_chain_count(model, model.paths[pid], length)
        total *= per
    return float(total)


def solve_exact(scenario: Scenario, partition: Partition | None = None,
                snapshot=None, *, demands=None, forbid_replication: bool = False,
                guard_limit: int = 1000, node_limit: int = 2_000_000,
                time_limit: float = 120.0) -> ExactResult:
    """Provably optimal placement of the given demands, if affordable.

    The coarse pre-guard refuses instances whose |demands| * chain
    length * |servers| product exceeds ``guard_limit`` (raises
    :class:`ExactGuardError` with the numbers).  Within the guard, the
    node and wall-clock budgets stop the search early with
    ``proven_optimal=False`` and the incumbent found so far.
    """
    ids = _resolve_demands(scenario, partition, snapshot, demands)
    model = scenario.network
    max_len = max((len(scenario.sfc(scenario.demand(d).sfc).vnf_chain) for d in ids),
                  default=0)
    bound = len(ids) * max_len * len(model.servers)
    if bound > guard_limit:
        raise ExactGuardError(
            f"combination bound {bound} (={len(ids)} demands x {max_len} slots x "
            f"{len(model.servers)} servers) exceeds guard limit {guard_limit}; "
            f"pass a smaller demand set or raise guard_limit consciously")

    order = sorted(ids, key=lambda d: (-scenario.demand(d).bandwidth, d))
    required = set(ids)
    census = assignment_census(scenario, demands=ids)

    # static per-demand branching data
    dinfo = []
    for did in order:
        dem = scenario.demand(did)
        sfc = scenario.sfc(dem.sfc)
        dinfo.append((did, dem.sfc, float(dem.bandwidth), sfc))
    # active paths at a leaf can never exceed either count, so this is a
    # safe mid-search replica ceiling; the leaf validator is exact
    path_cap_bound = {s.id: min(len(s.admissible_paths),
                                sum(1 for d in ids if scenario.demand(d).sfc == s.id))
                      for s in scenario.sfcs}

    route: dict[int, int] = {}
    assign: dict[tuple[int, int, int], int] = {}
    link_load = {l.id: 0.0 for l in model.links if not l.unbounded}
    server_load = {x.id: 0.0 for x in model.servers}
    inst: dict[tuple[int, int], dict[int, int]] = {}

    # chain order constrains node positions only; inside a node any server
    # order is admissible, so the next slot's window opens at the start of
    # the current server's node group, not at the current server itself
    group_start_cache: dict[int, list[int]] = {}

    def group_starts(path) -> list[int]:
        gs = group_start_cache.get(path.id)
        if gs is None:
            gs = []
            start, prev_node = 0, None
            for i, xid in enumerate(path.server_sequence):
                node = model.server_by_id[xid].node
                if node != prev_node:
                    start, prev_node = i, node
                gs.append(start)
            group_start_cache[path.id] = gs
        return gs

    best: dict = {"state": None, "cost": None, "total": math.inf}
    stats = {"nodes": 0, "leaves": 0, "stopped": False}
    t0 = _time.monotonic()

    edge_servers = [x for x in model.servers if not x.is_cloud]

    def lower_bound() -> float:
        # committed cost only: activation+utilisation of used edge servers
        # and charges of opened cloud instances; penalties and sync are
        # leaf-only, and loads never shrink, so this never overestimates
        used: set[int] = set()
        lb = 0.0
        for (s, v), per_server in inst.items():
            vnf = scenario.sfc(s).vnf_chain[v]
            for xid in per_server:
                if model.server_by_id[xid].is_cloud:
                    lb += vnf.cloud_price
                else:
                    used.add(xid)
        for x in edge_servers:
            if x.id in used:
                lb += x.idle_cost + x.fixed_cost + x.util_cost * (
                    server_load[x.id] / x.capacity_max)
        return lb

    def at_leaf():
        stats["leaves"] += 1
        state = PlacementState(dict(route), dict(assign), {}, snapshot)
        try:
            assign_sync_routes(state, scenario)
        except UnreachablePairError:
            return
        if validate_all(state, scenario, required=required):
            return
        cb = total_cost(state, scenario, validate=False)
        if cb.total < best["total"]:
            best["state"], best["cost"], best["total"] = state, cb, cb.total

    def out_of_budget() -> bool:
        if stats["nodes"] >= node_limit or _time.monotonic() - t0 > time_limit:
            stats["stopped"] = True
        return stats["stopped"]

    def place_slots(i: int, sfc, did: int, bw: float, path, v: int, w: int):
        if stats["stopped"]:
            return
        chain = sfc.vnf_chain
        if v == len(chain):
            descend(i + 1)
            return
        vnf = chain[v]
        seq = path.server_sequence
        gstart = group_starts(path)
        for idx in range(w, len(seq)):
            xid = seq[idx]
            server = model.server_by_id[xid]
            per = inst.get((sfc.id, v))
            opening = per is None or xid not in per
            if opening and per:
                if forbid_replication or not vnf.replicable:
                    continue
                if len(per) + 1 > path_cap_bound[sfc.id]:
                    continue
            added = vnf.load_ratio * bw + (vnf.overhead if opening else 0.0)
            if server_load[xid] + added > server.capacity_max * (1 + CAP_EPS):
                continue
            stats["nodes"] += 1
            if out_of_budget():
                return
            assign[(sfc.id, v, did)] = xid
            server_load[xid] += added
            inst.setdefault((sfc.id, v), {})
            inst[(sfc.id, v)][xid] = inst[(sfc.id, v)].get(xid, 0) + 1
            place_slots(i, sfc, did, bw, path, v + 1, gstart[idx])
            cnt = inst[(sfc.id, v)][xid]
            if cnt == 1:
                del inst[(sfc.id, v)][xid]
                if not inst[(sfc.id, v)]:
                    del inst[(sfc.id, v)]
            else:
                inst[(sfc.id, v)][xid] = cnt - 1
            server_load[xid] -= added
            del assign[(sfc.id, v, did)]

    def descend(i: int):
        if stats["stopped"]:
            return
        if lower_bound() >= best["total"] + 1e-9:
            return
        if i == len(dinfo):
            at_leaf()
            return
        did, sid, bw, sfc = dinfo[i]
        for pid in sfc.admissible_paths:
            path = model.paths[pid]
            ok = True
            for lid in path.link_sequence:
                if lid in link_load:
                    cap = model.link_by_id[lid].capacity_max
                    if link_load[lid] + bw > cap * (1 + CAP_EPS):
                        ok = False
                        break
            if not ok:
                continue
            stats["nodes"] += 1
            if out_of_budget():
                return
            route[did] = pid
            for lid in path.link_sequence:
                if lid in link_load:
                    link_load[lid] += bw
            place_slots(i, sfc, did, bw, path, 0, 0)
            for lid in path.link_sequence:
                if lid in link_load:
                    link_load[lid] -= bw
            del route[did]
            if stats["stopped"]:
                return

    descend(0)
    proven = not stats["stopped"]
    return ExactResult(best["state"], best["cost"], stats["nodes"], proven,
                       leaves=stats["leaves"], census=census)


# -- MILP export ---------------------------------------------------------


def _fmt(x: float) -> str:
    """Coefficient with 9 significant digits, no exponent surprises."""
    s = f"{x:.9g}"
    return s


class _Rows:
    """Accumulates LP rows with stable, prefix-tagged names."""

    def __init__(self):
        self.rows: list[str] = []
        self._n = 0

    def add(self, tag: str, terms: list[tuple[float, str]], sense: str, rhs: float):
        parts = []
        for coeff, var in terms:
            if coeff == 0:
                continue
            sign = "-" if coeff < 0 else "+"
            mag = abs(coeff)
            piece = var if mag == 1 else f"{_fmt(mag)} {var}"
            parts.append(f"{sign} {piece}")
        if not parts:
            return
        self._n += 1
        body = " ".join(parts)
        if body.startswith("+ "):
            body = body[2:]
        self.rows.append(f" c{self._n}_{tag}: {body} {sense} {_fmt(rhs)}")


def _wrap(expr_terms: list[str], width: int = 12) -> list[str]:
    lines = []
    for i in range(0, len(expr_terms), width):
        lines.append(" " + " ".join(expr_terms[i:i + width]))
    return lines


def export_milp(scenario: Scenario, partition: Partition | None = None,
                snapshot=None, *, demands=None) -> str:
    """The full placement model as deterministic LP-format text.

    Covers routing, path activation, instance activation, server
    usage, the replica bound, chain order, server and link loads with
    utilisation variables, replica-pair sync flows, processing and
    per-path delay linearisations, penalties, and (with a snapshot)
    downtime plus the migration/replication counters.  Variable naming
    and constraint prefixes are documented in docs/lp-naming.md.
    """
    model = scenario.network
    ids = _resolve_demands(scenario, partition, snapshot, demands)
    id_set = set(ids)
    sfcs = [s for s in scenario.sfcs if any(d.id in id_set for d in s.demands)]
    dem_of = {s.id: [d for d in s.demands if d.id in id_set] for s in sfcs}
    servers = model.servers
    total_slots = sum(len(s.vnf_chain) for s in sfcs)

    # which nodes can host instances and which ordered pairs can sync
    nodes_with_servers = sorted({x.node for x in servers})
    sync_pairs = [(n, m) for n in nodes_with_servers for m in nodes_with_servers
                  if n != m and model.pairwise_sync_path_index.get((n, m))]

    obj_terms: list[str] = []
    for x in servers:
        if x.is_cloud:
            continue
        obj_terms.append(f"+ {_fmt(x.idle_cost)} fx_x{x.id}")
        obj_terms.append(f"+ {_fmt(x.util_cost)} ux_x{x.id}")
        if x.fixed_cost:
            obj_terms.append(f"+ {_fmt(x.fixed_cost)} fx_x{x.id}")
    for s in sfcs:
        for v, vnf in enumerate(s.vnf_chain):
            for x in servers:
                if x.is_cloud:
                    obj_terms.append(f"+ {_fmt(vnf.cloud_price)} f_x{x.id}_v{v}_s{s.id}")
    for s in sfcs:
        for d in dem_of[s.id]:
            obj_terms.append(f"+ q_s{s.id}_l{d.id}")

    R = _Rows()
    binaries: list[str] = []
    bounds: list[str] = []

    def on_path_servers(path):
        return list(path.server_sequence)

    for s in sfcs:
        paths = [model.paths[p] for p in s.admissible_paths]
        length = len(s.vnf_chain)
        for p in paths:
            binaries.append(f"z_s{s.id}_p{p.id}")
        for d in dem_of[s.id]:
            # Each demand takes exactly one admissible path.
            R.add(f"route_l{d.id}",
                  [(1.0, f"zl_s{s.id}_l{d.id}_p{p.id}") for p in paths], "=", 1.0)
            for p in paths:
                binaries.append(f"zl_s{s.id}_l{d.id}_p{p.id}")
                R.add(f"pathact_l{d.id}_p{p.id}",
                      [(1.0, f"z_s{s.id}_p{p.id}"),
                       (-1.0, f"zl_s{s.id}_l{d.id}_p{p.id}")], ">=", 0.0)
        for p in paths:
            R.add(f"pathuse_s{s.id}_p{p.id}",
                  [(1.0, f"z_s{s.id}_p{p.id}")] +
                  [(-1.0, f"zl_s{s.id}_l{d.id}_p{p.id}") for d in dem_of[s.id]],
                  "<=", 0.0)
        for v, vnf in enumerate(s.vnf_chain):
            for x in servers:
                binaries.append(f"f_x{x.id}_v{v}_s{s.id}")
            for d in dem_of[s.id]:
                R.add(f"serve_l{d.id}_v{v}",
                      [(1.0, f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}") for x in servers],
                      "=", 1.0)
                for x in servers:
                    binaries.append(f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}")
                    carrying = [p for p in paths if x.id in p.server_sequence]
                    R.add(f"onpath_l{d.id}_v{v}_x{x.id}",
                          [(1.0, f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}")] +
                          [(-1.0, f"zl_s{s.id}_l{d.id}_p{p.id}") for p in carrying],
                          "<=", 0.0)
                    R.add(f"instact_l{d.id}_v{v}_x{x.id}",
                          [(1.0, f"f_x{x.id}_v{v}_s{s.id}"),
                           (-1.0, f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}")], ">=", 0.0)
            for x in servers:
                R.add(f"instuse_v{v}_s{s.id}_x{x.id}",
                      [(1.0, f"f_x{x.id}_v{v}_s{s.id}")] +
                      [(-1.0, f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}") for d in dem_of[s.id]],
                      "<=", 0.0)
            # replica bound: instances <= active paths (replicable) else 1
            if vnf.replicable:
                R.add(f"replica_v{v}_s{s.id}",
                      [(1.0, f"f_x{x.id}_v{v}_s{s.id}") for x in servers] +
                      [(-1.0, f"z_s{s.id}_p{p.id}") for p in paths], "<=", 0.0)
            else:
                R.add(f"replica_v{v}_s{s.id}",
                      [(1.0, f"f_x{x.id}_v{v}_s{s.id}") for x in servers], "<=", 1.0)
        # chain order along the selected path: node positions must not
        # move backward (any server order inside one node is admissible)
        for d in dem_of[s.id]:
            for p in paths:
                seq = on_path_servers(p)
                node_pos = {n: i for i, n in enumerate(p.node_sequence)}
                pos = {xid: node_pos[model.server_by_id[xid].node]
                       for xid in seq}
                big = (float(len(p.node_sequence) - 1)
                       if len(p.node_sequence) > 1 else 1.0)
                for v in range(length - 1):
                    terms = [(float(pos[xid]), f"fl_x{xid}_v{v}_s{s.id}_l{d.id}")
                             for xid in seq if pos[xid]]
                    terms += [(-float(pos[xid]), f"fl_x{xid}_v{v + 1}_s{s.id}_l{d.id}")
                              for xid in seq if pos[xid]]
                    terms.append((big, f"zl_s{s.id}_l{d.id}_p{p.id}"))
                    R.add(f"order_l{d.id}_p{p.id}_v{v}", terms, "<=", big)

    # server load / utilisation
    for x in servers:
        terms = [(x.capacity_max, f"ux_x{x.id}")]
        for s in sfcs:
            for v, vnf in enumerate(s.vnf_chain):
                for d in dem_of[s.id]:
                    terms.append((-vnf.load_ratio * d.bandwidth,
                                  f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}"))
                if vnf.overhead:
                    terms.append((-vnf.overhead, f"f_x{x.id}_v{v}_s{s.id}"))
        R.add(f"srvload_x{x.id}", terms, "=", 0.0)
        bounds.append(f" ux_x{x.id} <= 1")
        binaries.append(f"fx_x{x.id}")
        fterms = [(1.0, f"fx_x{x.id}")]
        for s in sfcs:
            for v in range(len(s.vnf_chain)):
                fterms.append((-1.0 / total_slots, f"f_x{x.id}_v{v}_s{s.id}"))
        R.add(f"usedlo_x{x.id}", fterms, ">=", 0.0)
        fterms = [(1.0, f"fx_x{x.id}")]
        for s in sfcs:
            for v in range(len(s.vnf_chain)):
                fterms.append((-1.0, f"f_x{x.id}_v{v}_s{s.id}"))
        R.add(f"usedhi_x{x.id}", fterms, "<=", 0.0)

    # replica-pair sync selection per (SFC, slot, ordered node pair)
    sync_vars = []
    for s in sfcs:
        vol_base = len(dem_of[s.id])
        for v, vnf in enumerate(s.vnf_chain):
            vol = vnf.sync_ratio * vol_base
            for n in nodes_with_servers:
                at_n = [x for x in servers if x.node == n]
                binaries.append(f"fn_s{s.id}_v{v}_n{n}")
                for x in at_n:
                    R.add(f"nodelo_s{s.id}_v{v}_n{n}_x{x.id}",
                          [(1.0, f"fn_s{s.id}_v{v}_n{n}"),
                           (-1.0, f"f_x{x.id}_v{v}_s{s.id}")], ">=", 0.0)
                R.add(f"nodehi_s{s.id}_v{v}_n{n}",
                      [(1.0, f"fn_s{s.id}_v{v}_n{n}")] +
                      [(-1.0, f"f_x{x.id}_v{v}_s{s.id}") for x in at_n], "<=", 0.0)
            for (n, m) in sync_pairs:
                g = f"g_s{s.id}_v{v}_n{n}_m{m}"
                binaries.append(g)
                R.add(f"pair1_s{s.id}_v{v}_n{n}_m{m}",
                      [(1.0, g), (-1.0, f"fn_s{s.id}_v{v}_n{n}")], "<=", 0.0)
                R.add(f"pair2_s{s.id}_v{v}_n{n}_m{m}",
                      [(1.0, g), (-1.0, f"fn_s{s.id}_v{v}_m{m}")], "<=", 0.0)
                R.add(f"pair3_s{s.id}_v{v}_n{n}_m{m}",
                      [(1.0, g), (-1.0, f"fn_s{s.id}_v{v}_n{n}"),
                       (-1.0, f"fn_s{s.id}_v{v}_m{m}")], ">=", -1.0)
                hs = []
                for pid in model.pairwise_sync_path_index[(n, m)]:
                    h = f"h_s{s.id}_v{v}_n{n}_m{m}_p{pid}"
                    binaries.append(h)
                    hs.append(h)
                    sync_vars.append((s.id, v, n, m, pid, vol, h))
                R.add(f"syncpath_s{s.id}_v{v}_n{n}_m{m}",
                      [(1.0, h) for h in hs] + [(-1.0, g)], "=", 0.0)

    # link load / utilisation (bounded links only)
    for link in model.links:
        if link.unbounded:
            continue
        terms = [(link.capacity_max, f"ul_e{link.id}")]
        for s in sfcs:
            for d in dem_of[s.id]:
                for pid in s.admissible_paths:
                    if link.id in model.paths[pid].link_sequence:
                        terms.append((-float(d.bandwidth),
                                      f"zl_s{s.id}_l{d.id}_p{pid}"))
        for (_s, _v, _n, _m, pid, vol, h) in sync_vars:
            if link.id in model.paths[pid].link_sequence:
                terms.append((-vol, h))
        R.add(f"linkload_e{link.id}", terms, "=", 0.0)
        bounds.append(f" ul_e{link.id} <= 1")

    # processing delay per possible instance, then per-demand selection
    snap = snapshot or {}
    for s in sfcs:
        length = len(s.vnf_chain)
        paths = [model.paths[p] for p in s.admissible_paths]
        whole_bw = sum(d.bandwidth for d in dem_of[s.id])
        m_pro = 0.0
        for v, vnf in enumerate(s.vnf_chain):
            cap = vnf.delay_queue * vnf.load_ratio * whole_bw / vnf.proc_capacity_max \
                + vnf.delay_min + vnf.delay_slope
            m_pro = max(m_pro, vnf.delay_max, cap)
        for v, vnf in enumerate(s.vnf_chain):
            for x in servers:
                dpro = f"dpro_x{x.id}_v{v}_s{s.id}"
                terms = [(1.0, dpro)]
                for d in dem_of[s.id]:
                    terms.append((-vnf.delay_queue * vnf.load_ratio * d.bandwidth
                                  / vnf.proc_capacity_max,
                                  f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}"))
                terms.append((-vnf.delay_min, f"f_x{x.id}_v{v}_s{s.id}"))
                terms.append((-vnf.delay_slope, f"ux_x{x.id}"))
                R.add(f"procdelay_x{x.id}_v{v}_s{s.id}", terms, "=", 0.0)
                for d in dem_of[s.id]:
                    dxl = f"dxl_x{x.id}_v{v}_s{s.id}_l{d.id}"
                    R.add(f"seldelay_x{x.id}_v{v}_s{s.id}_l{d.id}",
                          [(1.0, dxl), (-1.0, dpro),
                           (-m_pro, f"fl_x{x.id}_v{v}_s{s.id}_l{d.id}")],
                          ">=", -m_pro)
        # downtime from abandoned snapshot servers (phase 2 only)
        snap_slots = [(v, x0) for v in range(length)
                      for x0 in sorted(snap.get((s.id, v), ()))]
        dwt_terms: list[tuple[float, str]] = []
        dwt_const = 0.0
        if snap_slots:
            dwt_const = scenario.d_dwt * len(snap_slots)
            dwt_terms = [(scenario.d_dwt, f"f_x{x0}_v{v}_s{s.id}")
                         for (v, x0) in snap_slots if x0 in model.server_by_id]
            R.add(f"downtime_s{s.id}",
                  [(1.0, f"ddwt_s{s.id}")] + dwt_terms, "=", dwt_const)
        max_prop = max(p.total_prop_delay for p in paths)
        m_hat = max(s.d_hat_max, length * m_pro + max_prop +
                    (length * scenario.d_dwt if snap_slots else 0.0))
        for d in dem_of[s.id]:
            proc = [(-1.0, f"dxl_x{x.id}_v{v}_s{s.id}_l{d.id}")
                    for v in range(length) for x in servers]
            dwt_var = [(-1.0, f"ddwt_s{s.id}")] if snap_slots else []
            for p in paths:
                y = f"y_s{s.id}_l{d.id}_p{p.id}"
                zl = f"zl_s{s.id}_l{d.id}_p{p.id}"
                R.add(f"pathdelaylo_l{d.id}_p{p.id}",
                      [(1.0, y)] + proc + dwt_var + [(-m_hat, zl)],
                      ">=", p.total_prop_delay - m_hat)
                R.add(f"pathdelayhi_l{d.id}_p{p.id}",
                      [(1.0, y)] + proc + dwt_var + [(m_hat, zl)],
                      "<=", p.total_prop_delay + m_hat)
                R.add(f"pathdelaysel_l{d.id}_p{p.id}",
                      [(1.0, y), (-m_hat, zl)], "<=", 0.0)
            R.add(f"delay_l{d.id}",
                  [(1.0, f"d_s{s.id}_l{d.id}")] +
                  [(-1.0, f"y_s{s.id}_l{d.id}_p{p.id}") for p in paths], "=", 0.0)
            R.add(f"penalty_l{d.id}",
                  [(1.0, f"q_s{s.id}_l{d.id}"),
                   (-s.penalty_rate / s.d_max, f"d_s{s.id}_l{d.id}")],
                  ">=", -s.penalty_rate)

    # reporting counters
    if snap:
        terms = [(1.0, "nmgr")]
        const = 0.0
        for s in sfcs:
            for v in range(len(s.vnf_chain)):
                for x0 in sorted(snap.get((s.id, v), ())):
                    const += 1.0
                    if x0 in model.server_by_id:
                        terms.append((1.0, f"f_x{x0}_v{v}_s{s.id}"))
        R.add("migrations", terms, "=", const)
    terms = [(1.0, "nrep")]
    for s in sfcs:
        for v in range(len(s.vnf_chain)):
            for x in servers:
                terms.append((-1.0, f"f_x{x.id}_v{v}_s{s.id}"))
    R.add("replications", terms, "=", float(-total_slots))

    lines = [
        "\\ hybrid VM/container chain placement over an edge-cloud network",
        f"\\ mode={scenario.mode} chain_length={scenario.chain_length} "
        f"seed={scenario.rng_seed} demands={len(ids)} sfcs={len(sfcs)} "
        f"servers={len(servers)} snapshot={'yes' if snap else 'no'}",
        "Minimize",
        " obj:",
    ]
    lines += _wrap(obj_terms)
    lines.append("Subject To")
    lines += R.rows
    lines.append("Bounds")
    lines += bounds
    lines.append("Binaries")
    seen = set()
    uniq = [b for b in binaries if not (b in seen or seen.add(b))]
    lines += _wrap(uniq, width=8)
    lines.append("End")
    return "\n".join(lines) + "\n"


# -- solution import -----------------------------------------------------

_NAME_RE = {
    "zl": re.compile(r"^zl_s(\d+)_l(\d+)_p(\d+)$"),
    "fl": re.compile(r"^fl_x(\d+)_v(\d+)_s(\d+)_l(\d+)$"),
}
_KNOWN_PREFIX = re.compile(
    r"^(z|zl|f|fl|fx|fn|g|h|q|d|y|dpro|dxl|ddwt|ux|ul|nmgr|nrep|obj)(_|$)")


class SolutionImportError(ValueError):
    pass


def import_solution(source, scenario: Scenario, *, demands=None,
                    snapshot=None, binary_tol: float = 1e-4) -> PlacementState:
    """Rebuild a state from a solved variable vector.

    ``source`` is either a mapping {variable name: value} or text with
    one ``name value`` pair per line ('#'- and '\\'-prefixed lines are
    comments).  Binary variables must be within ``binary_tol`` of 0 or
    1; routing (zl) and placement (fl) families are thresholded at 0.5
    and checked for exactly-one-choice per demand and per (demand,
    slot).  Sync routes are re-derived with the canonical selection
    rule, so the imported state prices identically to a native one.
    """
    if isinstance(source, str):
        values: dict[str, float] = {}
        for raw in source.splitlines():
            line = raw.strip()
            if not line or line.startswith("#") or line.startswith("\\"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise SolutionImportError(f"expected 'name value', got {raw!r}")
            try:
                values[parts[0]] = float(parts[1])
            except ValueError as exc:
                raise SolutionImportError(f"bad value in {raw!r}") from exc
    else:
        values = dict(source)

    ids = set(_resolve_demands(scenario, None, snapshot, demands))
    route: dict[int, int] = {}
    assign: dict[tuple[int, int, int], int] = {}
    for name, val in values.items():
        if not _KNOWN_PREFIX.match(name):
            raise SolutionImportError(f"unrecognised variable name {name!r}")
        fam = name.split("_", 1)[0]
        if fam in _BINARY_FAMILIES:
            if not (abs(val) <= binary_tol or abs(val - 1) <= binary_tol):
                raise SolutionImportError(
                    f"binary variable {name} has fractional value {val!r}")
        m = _NAME_RE["zl"].match(name)
        if m and val > 0.5:
            _s, d, p = map(int, m.groups())
            if d in route:
                raise SolutionImportError(f"demand {d} routed on two paths")
            route[d] = p
        m = _NAME_RE["fl"].match(name)
        if m and val > 0.5:
            x, v, s, d = map(int, m.groups())
            key = (s, v, d)
            if key in assign:
                raise SolutionImportError(
                    f"demand {d} slot {v} assigned to two servers")
            assign[key] = x

    missing = sorted(d for d in ids if d not in route)
    if missing:
        raise SolutionImportError(f"no route selected for demands {missing}")
    for d in sorted(ids):
        sfc = scenario.sfc(scenario.demand(d).sfc)
        for v in range(len(sfc.vnf_chain)):
            if (sfc.id, v, d) not in assign:
                raise SolutionImportError(f"no server for demand {d} slot {v}")
    state = PlacementState(route, assign, {}, snapshot)
    assign_sync_routes(state, scenario)
    return state
