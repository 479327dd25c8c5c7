"""Independent reference implementations used only by the tests.

Everything here recomputes results from first principles and shares no
search or arithmetic code with the package:

* :func:`haversine_ms` — great-circle propagation delay from raw
  coordinates;
* :func:`reference_cost` — the full objective re-derived from a state's
  raw maps with its own load/delay/penalty arithmetic;
* :func:`optimum_by_enumeration` — ground-truth optimum by exhaustive
  enumeration over every (path, server-chain) combination, with only
  provably safe feasibility filters;
* :func:`parse_lp` / :func:`solve_lp` — a from-scratch LP-file reader
  and a mixed-integer solve via ``scipy.optimize.milp``, playing the
  role of the "external solver" for export/import cross-checks.

The enumeration deliberately walks demands in id order (the package
solver uses bandwidth order) and evaluates complete assignments with
the package's public evaluator, so agreement checks exercise the search
independently from the arithmetic; :func:`reference_cost` covers the
arithmetic side.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np

from sfcplace.cost import total_cost
from sfcplace.state import CAP_EPS, PlacementState, assign_sync_routes, validate_all
from sfcplace.topology import UnreachablePairError

EARTH_RADIUS_KM = 6371.0
FIBER_KM_PER_MS = 299_792.458 * (2.0 / 3.0) / 1000.0


def haversine_ms(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """One-way propagation delay between two coordinates in ms."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    dist_km = 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))
    return dist_km / FIBER_KM_PER_MS


# -- independent objective evaluation ------------------------------------


@dataclass
class RefCost:
    edge_opex: float
    cloud_charges: float
    penalties: float
    total: float
    n_mgr: int
    n_rep: int
    delays: dict[int, float]


def reference_cost(state: PlacementState, scenario) -> RefCost:
    """Recompute the objective directly from the raw state maps."""
    model = scenario.network
    routed = sorted(state.demand_route)
    bw = {d: scenario.demand(d).bandwidth for d in routed}
    routed_per_sfc = Counter(scenario.demand(d).sfc for d in routed)

    groups: dict[tuple[int, int, int], list[int]] = defaultdict(list)
    for (sid, v, did), x in state.vnf_assignment.items():
        if did in state.demand_route:
            groups[(sid, v, x)].append(did)

    server_load: dict[int, float] = defaultdict(float)
    for (sid, v, x), ds in groups.items():
        t = scenario.sfc(sid).vnf_chain[v]
        server_load[x] += t.load_ratio * sum(bw[d] for d in ds) + t.overhead

    link_load: dict[int, float] = defaultdict(float)
    for d in routed:
        for lid in model.paths[state.demand_route[d]].link_sequence:
            link_load[lid] += bw[d]
    pair_paths: dict[tuple[int, int, int, int], int] = {}
    for (sid, v, x, y), pid in state.sync_route.items():
        n, m = model.server_by_id[x].node, model.server_by_id[y].node
        pair_paths[(sid, v, n, m)] = pid
    for (sid, v, _n, _m), pid in pair_paths.items():
        t = scenario.sfc(sid).vnf_chain[v]
        vol = t.sync_ratio * routed_per_sfc.get(sid, 0)
        for lid in model.paths[pid].link_sequence:
            link_load[lid] += vol

    used = {x for (_s, _v, x) in groups}
    opex = 0.0
    for x in sorted(used):
        srv = model.server_by_id[x]
        if srv.is_cloud:
            continue
        opex += (srv.idle_cost + srv.fixed_cost
                 + srv.util_cost * server_load[x] / srv.capacity_max)
    cloud = 0.0
    for (sid, v, x) in sorted(groups):
        if model.server_by_id[x].is_cloud:
            cloud += scenario.sfc(sid).vnf_chain[v].cloud_price

    current: dict[tuple[int, int], set[int]] = defaultdict(set)
    for (sid, v, x) in groups:
        current[(sid, v)].add(x)
    n_mgr = 0
    downtime: dict[int, float] = defaultdict(float)
    if state.initial_snapshot:
        for (sid, v), snap in state.initial_snapshot.items():
            now = current.get((sid, v), set())
            moved = sum(1 for x in snap if x not in now)
            n_mgr += moved
            downtime[sid] += scenario.d_dwt * moved
    n_rep = sum(len(xs) - 1 for xs in current.values())

    penalties = 0.0
    delays: dict[int, float] = {}
    for d in routed:
        dem = scenario.demand(d)
        sfc = scenario.sfc(dem.sfc)
        total = (model.paths[state.demand_route[d]].total_prop_delay
                 + downtime[dem.sfc])
        for v, t in enumerate(sfc.vnf_chain):
            x = state.vnf_assignment[(dem.sfc, v, d)]
            srv = model.server_by_id[x]
            inst_bw = sum(bw[dd] for dd in groups[(dem.sfc, v, x)])
            total += (t.delay_queue * (t.load_ratio * inst_bw) / t.proc_capacity_max
                      + t.delay_min
                      + t.delay_slope * server_load[x] / srv.capacity_max)
        delays[d] = total
        over = total / sfc.d_max - 1.0
        if over > 0.0:
            penalties += sfc.penalty_rate * over
    return RefCost(opex, cloud, penalties, opex + cloud + penalties,
                   n_mgr, n_rep, delays)


# -- exhaustive ground-truth search --------------------------------------


def server_chains(model, path, length: int) -> list[tuple[int, ...]]:
    """All order-respecting server chains of ``length`` slots on a path.

    Node positions never move backward; inside one node any server and
    any order is admissible.
    """
    seq = path.server_sequence
    npos = {n: i for i, n in enumerate(path.node_sequence)}
    pos = [npos[model.server_by_id[x].node] for x in seq]
    out: list[tuple[int, ...]] = []

    def rec(v: int, minpos: int, prefix: list[int]):
        if v == length:
            out.append(tuple(prefix))
            return
        for i, x in enumerate(seq):
            if pos[i] >= minpos:
                prefix.append(x)
                rec(v + 1, pos[i], prefix)
                prefix.pop()

    rec(0, 0, [])
    return out


@dataclass
class EnumerationResult:
    best_total: float
    best_state: PlacementState | None
    complete: int
    feasible: int


def optimum_by_enumeration(scenario, demand_ids, snapshot=None,
                           forbid_replication: bool = False) -> EnumerationResult:
    """Ground-truth optimum by brute-force enumeration.

    Walks demands in ascending id order; per demand every admissible
    (path, server-chain) candidate is tried.  Mid-search filters reject
    only provably infeasible prefixes (link/server capacity with the
    validator's tolerance, replica ceilings that no completion can
    repair), so the surviving leaf set contains every feasible complete
    assignment; each leaf is validated and priced with the package's
    public evaluator.
    """
    model = scenario.network
    ids = sorted(demand_ids)
    required = set(ids)
    per_demand = []
    for did in ids:
        dem = scenario.demand(did)
        sfc = scenario.sfc(dem.sfc)
        cands = [(pid, chain)
                 for pid in sfc.admissible_paths
                 for chain in server_chains(model, model.paths[pid],
                                            len(sfc.vnf_chain))]
        per_demand.append((did, dem, sfc, cands))
    complete = 1
    for _d, _dem, _s, cands in per_demand:
        complete *= len(cands)

    # replicas can never exceed active paths, and active paths can never
    # exceed either the catalog or the demand count of the chain
    max_inst = {s.id: min(len(s.admissible_paths),
                          sum(1 for d in ids if scenario.demand(d).sfc == s.id))
                for s in scenario.sfcs}

    link_load: dict[int, float] = defaultdict(float)
    server_load: dict[int, float] = defaultdict(float)
    members: dict[tuple[int, int, int], int] = defaultdict(int)
    route: dict[int, int] = {}
    assign: dict[tuple[int, int, int], int] = {}
    best = {"total": math.inf, "state": None, "feasible": 0}

    def leaf():
        state = PlacementState(dict(route), dict(assign), {}, snapshot)
        try:
            assign_sync_routes(state, scenario)
        except UnreachablePairError:
            return
        if validate_all(state, scenario, required=required):
            return
        best["feasible"] += 1
        cb = total_cost(state, scenario, required=required, validate=False)
        if cb.total < best["total"]:
            best["total"], best["state"] = cb.total, state

    def rec(i: int):
        if i == len(per_demand):
            leaf()
            return
        did, dem, sfc, cands = per_demand[i]
        for pid, chain in cands:
            path = model.paths[pid]
            ok = True
            for lid in path.link_sequence:
                link = model.link_by_id[lid]
                if not link.unbounded and (link_load[lid] + dem.bandwidth
                                           > link.capacity_max * (1 + CAP_EPS)):
                    ok = False
                    break
            if not ok:
                continue
            deltas = []
            for v, x in enumerate(chain):
                t = sfc.vnf_chain[v]
                opening = members[(sfc.id, v, x)] == 0
                if opening:
                    count_now = sum(1 for (s2, v2, _x2), c in members.items()
                                    if s2 == sfc.id and v2 == v and c > 0)
                    if count_now >= 1 and (forbid_replication
                                           or not t.replicable
                                           or count_now + 1 > max_inst[sfc.id]):
                        ok = False
                        break
                add = t.load_ratio * dem.bandwidth + (t.overhead if opening else 0.0)
                srv = model.server_by_id[x]
                if server_load[x] + add > srv.capacity_max * (1 + CAP_EPS):
                    ok = False
                    break
                server_load[x] += add
                deltas.append((v, x, add))
            if ok:
                for lid in path.link_sequence:
                    link_load[lid] += dem.bandwidth
                route[did] = pid
                for v, x, _a in deltas:
                    assign[(sfc.id, v, did)] = x
                    members[(sfc.id, v, x)] += 1
                rec(i + 1)
                for v, x, _a in deltas:
                    del assign[(sfc.id, v, did)]
                    members[(sfc.id, v, x)] -= 1
                del route[did]
                for lid in path.link_sequence:
                    link_load[lid] -= dem.bandwidth
            for v, x, add in deltas:
                server_load[x] -= add

    rec(0)
    return EnumerationResult(best["total"], best["state"], complete,
                             best["feasible"])


# -- LP-format reader and external mixed-integer solve -------------------


def parse_lp(text: str):
    """Read an LP-format document into (objective, rows, binaries, bounds)."""
    section = None
    obj_tokens: list[str] = []
    rows: list[tuple[str, list[tuple[float, str]], str, float]] = []
    binaries: list[str] = []
    var_bounds: dict[str, tuple[float, float]] = {}
    cur: tuple[str, list[str]] | None = None

    def terms_of(tokens: list[str]) -> list[tuple[float, str]]:
        terms = []
        sign, coef = 1.0, None
        for t in tokens:
            if t == "+":
                sign, coef = 1.0, None
            elif t == "-":
                sign, coef = -1.0, None
            else:
                try:
                    coef = float(t)
                except ValueError:
                    terms.append((sign * (coef if coef is not None else 1.0), t))
                    sign, coef = 1.0, None
        return terms

    def flush():
        nonlocal cur
        if cur is None:
            return
        name, toks = cur
        for i, t in enumerate(toks):
            if t in ("<=", ">=", "="):
                rows.append((name, terms_of(toks[:i]), t, float(toks[i + 1])))
                break
        cur = None

    for raw in text.splitlines():
        line = raw.rstrip()
        if not line or line.lstrip().startswith("\\"):
            continue
        low = line.strip().lower()
        if low in ("minimize", "subject to", "bounds", "binaries", "end"):
            flush()
            section = low
            continue
        if section == "minimize":
            toks = line.split()
            if toks and toks[0].endswith(":"):
                toks = toks[1:]
            obj_tokens += toks
        elif section == "subject to":
            toks = line.split()
            if toks and toks[0].endswith(":"):
                flush()
                cur = (toks[0][:-1], [])
                toks = toks[1:]
            if cur is not None:
                cur[1].extend(toks)
        elif section == "bounds":
            m = re.match(r"\s*(\S+)\s*(<=|>=|=)\s*(\S+)", line)
            if m:
                v, op, val = m.groups()
                lo, hi = var_bounds.get(v, (0.0, math.inf))
                num = float(val)
                if op == "<=":
                    hi = num
                elif op == ">=":
                    lo = num
                else:
                    lo = hi = num
                var_bounds[v] = (lo, hi)
        elif section == "binaries":
            binaries += line.split()
    flush()
    obj: dict[str, float] = {}
    for coef, var in terms_of(obj_tokens):
        obj[var] = obj.get(var, 0.0) + coef
    return obj, rows, binaries, var_bounds


def solve_lp(text: str):
    """Solve a parsed LP with scipy's mixed-integer solver.

    Returns ({variable: value}, objective).  Raises ``RuntimeError`` for
    infeasible or failed solves.
    """
    from scipy import sparse
    from scipy.optimize import Bounds, LinearConstraint, milp

    obj, rows, binaries, var_bounds = parse_lp(text)
    names = sorted({v for v in obj}
                   | {v for _n, ts, _s, _r in rows for _c, v in ts}
                   | set(binaries) | set(var_bounds))
    idx = {v: i for i, v in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for v, coef in obj.items():
        c[idx[v]] = coef
    data, ri, ci, bl, bu = [], [], [], [], []
    for k, (_name, terms, sense, rhs) in enumerate(rows):
        for coef, v in terms:
            data.append(coef)
            ri.append(k)
            ci.append(idx[v])
        if sense == "<=":
            bl.append(-np.inf)
            bu.append(rhs)
        elif sense == ">=":
            bl.append(rhs)
            bu.append(np.inf)
        else:
            bl.append(rhs)
            bu.append(rhs)
    A = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    lo, hi = np.zeros(n), np.full(n, np.inf)
    integrality = np.zeros(n)
    for v in binaries:
        integrality[idx[v]] = 1
        hi[idx[v]] = 1.0
    for v, (l, h) in var_bounds.items():
        lo[idx[v]], hi[idx[v]] = l, h
    res = milp(c=c, constraints=LinearConstraint(A, np.array(bl), np.array(bu)),
               integrality=integrality, bounds=Bounds(lo, hi))
    if not res.success:
        raise RuntimeError(f"external solve failed: {res.message}")
    return {v: float(res.x[idx[v]]) for v in names}, float(res.fun)
