"""Constructive placement heuristics and the local search.

Three algorithms share one incremental engine.  ``ff`` walks candidate
paths in delay order and packs the chain first-fit; ``rf`` draws the
path and each fresh server uniformly among the options that still let
the rest of the chain complete; ``grd`` prefers whatever the initial
placement used (same path, same servers) before falling back, which is
what keeps migrations and replications down when later demands arrive.

Two rules hold for every algorithm.  First, a demand whose path already
carries an instance of the needed VNF shares it whenever chain order
and capacity allow; a fresh instance opens only if the replica count
afterwards still fits within the SFC's path count (and never for a
non-replicable VNF that is live elsewhere), which keeps the replica
bound satisfied by construction.  Second, every capacity check (links
and servers) happens before a commit, so engine states are always
feasible.

Initial placements run with ``forbid_replication=True``: each (SFC,
slot) keeps a single instance that all demands share, so the snapshot
taken afterwards is replica-free and later phases measure migrations
and replications against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostBreakdown
from .state import (CAP_EPS, PlacementState, link_loads, plan_sync_routes,
                    server_loads, sync_flows)
from .workload import Partition, Scenario

ALGORITHMS = ("ff", "rf", "grd")


class PlacementError(Exception):
    """A demand could not be allocated (or its sync traffic routed)."""

    def __init__(self, message, demand=None):
        super().__init__(message)
        self.demand = demand


@dataclass
class HeuristicConfig:
    algorithm: str = "grd"
    local_search_sweeps: int = 1


def _rng(seed, tag=0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, tag))))


class PlacementEngine:
    """Incremental feasibility bookkeeping around a ``PlacementState``.

    Keeps link loads, server loads, live instances and per-SFC path use
    in step with the state so that candidate checks are cheap.  The
    caches are redundant with the pure functions in ``state`` (tests
    assert they agree); mutations go through the methods here.
    """

    def __init__(self, scenario: Scenario, initial: PlacementState | None = None,
                 snapshot=None, forbid_replication: bool = False):
        self.sc = scenario
        self.model = scenario.network
        self.initial = initial
        self.forbid_replication = forbid_replication
        self.state = PlacementState(initial_snapshot=snapshot)
        self.link_load = {l.id: 0.0 for l in self.model.links}
        self.gamma = {s.id: 0.0 for s in self.model.servers}
        self.inst: dict[tuple[int, int], dict[int, set[int]]] = {}
        self.path_use: dict[int, dict[int, int]] = {s.id: {} for s in scenario.sfcs}
        self.routed: dict[int, int] = {s.id: 0 for s in scenario.sfcs}
        self.sync_vol: dict[tuple[int, int, int], float] = {}
        self._edge_servers = [s for s in self.model.servers if not s.is_cloud]
        # per-path node position lookups, built lazily
        self._node_pos: dict[int, dict[int, int]] = {}

    @classmethod
    def from_state(cls, scenario, state: PlacementState, initial=None,
                   forbid_replication=False) -> "PlacementEngine":
        eng = cls(scenario, initial=initial, snapshot=state.initial_snapshot,
                  forbid_replication=forbid_replication)
        eng.state = state.clone()
        eng.link_load = link_loads(state, scenario)
        eng.gamma = server_loads(state, scenario)
        for (s, v, d), x in state.vnf_assignment.items():
            eng.inst.setdefault((s, v), {}).setdefault(x, set()).add(d)
        for did, pid in state.demand_route.items():
            sid = scenario.demand(did).sfc
            eng.path_use[sid][pid] = eng.path_use[sid].get(pid, 0) + 1
            eng.routed[sid] += 1
        for (s, v, pid), vol in sync_flows(state, scenario):
            eng.sync_vol[(s, v, pid)] = vol
        return eng

    # -- geometry helpers ------------------------------------------------

    def node_pos(self, pid: int) -> dict[int, int]:
        pos = self._node_pos.get(pid)
        if pos is None:
            pos = {n: i for i, n in enumerate(self.model.paths[pid].node_sequence)}
            self._node_pos[pid] = pos
        return pos

    def _server_node_pos(self, pid: int, server: int) -> int:
        return self.node_pos(pid)[self.model.server_by_id[server].node]

    def _cloud_pos(self, pid: int):
        for i, n in enumerate(self.model.paths[pid].node_sequence):
            if self.model.node_by_id[n].is_cloud:
                return i
        return None

    # -- capacity checks -------------------------------------------------

    def link_free(self, pid: int, bw: float) -> bool:
        for lid in self.model.paths[pid].link_sequence:
            link = self.model.link_by_id[lid]
            if not link.unbounded and self.link_load[lid] + bw > link.capacity_max * (1.0 + CAP_EPS):
                return False
        return True

    def _fits(self, server: int, vnf, bw: float, reuse: bool, extra: dict) -> bool:
        add = vnf.load_ratio * bw + (0.0 if reuse else vnf.overhead)
        cap = self.model.server_by_id[server].capacity_max
        return self.gamma[server] + extra.get(server, 0.0) + add <= cap * (1.0 + CAP_EPS)

    # -- mutations -------------------------------------------------------

    def checkpoint(self):
        return (dict(self.state.demand_route), dict(self.state.vnf_assignment),
                dict(self.state.sync_route), dict(self.link_load), dict(self.gamma),
                {k: {x: set(ds) for x, ds in per.items()} for k, per in self.inst.items()},
                {s: dict(pu) for s, pu in self.path_use.items()}, dict(self.routed),
                dict(self.sync_vol))

    def restore(self, cp):
        (routes, assigns, sync, ll, gm, inst, pu, routed, sv) = cp
        self.state.demand_route = dict(routes)
        self.state.vnf_assignment = dict(assigns)
        self.state.sync_route = dict(sync)
        self.link_load = dict(ll)
        self.gamma = dict(gm)
        self.inst = {k: {x: set(ds) for x, ds in per.items()} for k, per in inst.items()}
        self.path_use = {s: dict(p) for s, p in pu.items()}
        self.routed = dict(routed)
        self.sync_vol = dict(sv)

    def _route(self, did: int, pid: int):
        d = self.sc.demand(did)
        self.state.demand_route[did] = pid
        for lid in self.model.paths[pid].link_sequence:
            self.link_load[lid] += d.bandwidth
        self.path_use[d.sfc][pid] = self.path_use[d.sfc].get(pid, 0) + 1
        self.routed[d.sfc] += 1

    def _place(self, sid: int, v: int, did: int, server: int):
        vnf = self.sc.sfc(sid).vnf_chain[v]
        bw = self.sc.demand(did).bandwidth
        per = self.inst.setdefault((sid, v), {})
        if server not in per:
            per[server] = set()
            self.gamma[server] += vnf.overhead
        per[server].add(did)
        self.gamma[server] += vnf.load_ratio * bw
        self.state.vnf_assignment[(sid, v, did)] = server

    def remove_demand(self, did: int):
        """Take a demand out entirely; sync is left stale until the next
        ``resync`` of its SFC."""
        d = self.sc.demand(did)
        pid = self.state.demand_route.pop(did, None)
        if pid is not None:
            for lid in self.model.paths[pid].link_sequence:
                self.link_load[lid] -= d.bandwidth
            use = self.path_use[d.sfc]
            use[pid] -= 1
            if not use[pid]:
                del use[pid]
            self.routed[d.sfc] -= 1
        for v in range(len(self.sc.sfc(d.sfc).vnf_chain)):
            key = (d.sfc, v, did)
            server = self.state.vnf_assignment.pop(key, None)
            if server is None:
                continue
            vnf = self.sc.sfc(d.sfc).vnf_chain[v]
            per = self.inst[(d.sfc, v)]
            per[server].discard(did)
            self.gamma[server] -= vnf.load_ratio * d.bandwidth
            if not per[server]:
                del per[server]
                self.gamma[server] -= vnf.overhead
            if not per:
                del self.inst[(d.sfc, v)]

    def resync(self, sid: int):
        """Drop and re-select the SFC's sync routes against current loads.

        Raises ``PlacementError`` if the best available choice would
        overload a link; the engine state is then mid-flight and the
        caller is expected to restore a checkpoint or abandon the run.
        """
        for key in [k for k in self.sync_vol if k[0] == sid]:
            (_s, _v, pid) = key
            vol = self.sync_vol.pop(key)
            for lid in self.model.paths[pid].link_sequence:
                self.link_load[lid] -= vol
        self.state.sync_route = {k: v for k, v in self.state.sync_route.items()
                                 if k[0] != sid}
        servers_by_v: dict[int, set[int]] = {}
        for (s, v), per in self.inst.items():
            if s == sid:
                servers_by_v[v] = set(per)
        count = self.routed[sid]
        entries, worst = plan_sync_routes(self.sc, sid, servers_by_v, count, self.link_load)
        self.state.sync_route.update(entries)
        sfc = self.sc.sfc(sid)
        for (s, v, _x, _y), pid in entries.items():
            self.sync_vol[(s, v, pid)] = sfc.vnf_chain[v].sync_ratio * count
        if worst > 1.0 + CAP_EPS:
            raise PlacementError(f"sync traffic overloads a link for SFC {sid}")

    def replication_ok(self, sid: int) -> bool:
        n_paths = len(self.path_use[sid])
        for (s, v), per in self.inst.items():
            if s != sid:
                continue
            limit = n_paths
            if not self.sc.sfc(s).vnf_chain[v].replicable:
                limit = min(limit, 1)
            if len(per) > limit:
                return False
        return True

    def evaluate(self) -> CostBreakdown:
        """Cost breakdown from the engine caches.

        Summation runs in sorted key order, so the result is a function
        of the state alone (not of mutation history) and matches the
        pure ``total_cost`` recomputation up to float rounding; the
        test suite holds the two together.
        """
        sc = self.sc
        model = self.model
        used: set[int] = set()
        cloud = 0.0
        proc: dict[tuple[int, int, int], float] = {}
        n_rep = 0
        for (s, v) in sorted(self.inst):
            per = self.inst[(s, v)]
            vnf = sc.sfc(s).vnf_chain[v]
            n_rep += max(0, len(per) - 1)
            for x in sorted(per):
                used.add(x)
                srv = model.server_by_id[x]
                if srv.is_cloud:
                    cloud += vnf.cloud_price
                load = vnf.load_ratio * sum(sc.demand(d).bandwidth for d in per[x])
                proc[(s, v, x)] = (vnf.delay_queue * load / vnf.proc_capacity_max
                                   + vnf.delay_min
                                   + vnf.delay_slope * self.gamma[x] / srv.capacity_max)
        opex = 0.0
        for srv in self._edge_servers:
            opex += srv.fixed_cost + srv.util_cost * self.gamma[srv.id] / srv.capacity_max
            if srv.id in used:
                opex += srv.idle_cost
        n_mgr = 0
        moved_by_sfc: dict[int, int] = {}
        if self.state.initial_snapshot is not None:
            for (s, v), old in sorted(self.state.initial_snapshot.items()):
                now = self.inst.get((s, v), {})
                moved = sum(1 for x in old if x not in now)
                n_mgr += moved
                moved_by_sfc[s] = moved_by_sfc.get(s, 0) + moved
        pens = 0.0
        for did in sorted(self.state.demand_route):
            d = sc.demand(did)
            sfc = sc.sfc(d.sfc)
            delay = model.paths[self.state.demand_route[did]].total_prop_delay
            delay += sc.d_dwt * moved_by_sfc.get(d.sfc, 0)
            for v in range(len(sfc.vnf_chain)):
                delay += proc[(d.sfc, v, self.state.vnf_assignment[(d.sfc, v, did)])]
            excess = delay / sfc.d_max - 1.0
            if excess > 0.0:
                pens += sfc.penalty_rate * excess
        return CostBreakdown(opex, cloud, pens, n_mgr, n_rep)

    # -- chain packing ---------------------------------------------------

    def _window(self, path, w: int):
        """Servers on the path at node position >= w, in path order."""
        np_ = self.node_pos(path.id)
        return [x for x in path.server_sequence
                if np_[self.model.server_by_id[x].node] >= w]

    def _reusable(self, sid: int, v: int, path, w: int):
        per = self.inst.get((sid, v))
        if not per:
            return [], False
        on_path = [x for x in self._window(path, w) if x in per]
        return on_path, bool(per)

    def _may_open(self, sid: int, v: int, path) -> bool:
        """Whether a fresh instance may open for this VNF on this path.

        Always fine for the first instance.  Further instances need the
        type to be replicable and the count after opening to stay within
        the SFC's path count including the candidate path, which is the
        replica bound checked point-wise.  In replication-free mode
        (initial placements) a second instance is never opened.
        """
        per = self.inst.get((sid, v))
        if not per:
            return True
        if self.forbid_replication:
            return False
        if not self.sc.sfc(sid).vnf_chain[v].replicable:
            return False
        paths_after = set(self.path_use[sid])
        paths_after.add(path.id)
        return len(per) + 1 <= len(paths_after)

    def _pack(self, sid: int, did: int, path, v: int, w: int, extra: dict, rng=None):
        """First-fit completion of the chain suffix from node position w.

        Returns [(slot, server), ...] or None.  Reuse of an in-window
        instance is mandatory when one exists; with ``rng`` the fresh
        server is drawn randomly among the candidates from which the
        remainder still completes (random-fit).
        """
        chain = self.sc.sfc(sid).vnf_chain
        if v == len(chain):
            return []
        vnf = chain[v]
        bw = self.sc.demand(did).bandwidth
        reusables, _any = self._reusable(sid, v, path, w)
        for x in reusables:
            if not self._fits(x, vnf, bw, True, extra):
                continue
            extra2 = dict(extra)
            extra2[x] = extra2.get(x, 0.0) + vnf.load_ratio * bw
            rest = self._pack(sid, did, path, v + 1, self._server_node_pos(path.id, x),
                              extra2, rng)
            if rest is not None:
                return [(v, x)] + rest
        if not self._may_open(sid, v, path):
            return None
        fresh = [x for x in self._window(path, w) if self._fits(x, vnf, bw, False, extra)]
        if rng is not None and len(fresh) > 1:
            fresh = [fresh[i] for i in rng.permutation(len(fresh))]
        for x in fresh:
            extra2 = dict(extra)
            extra2[x] = extra2.get(x, 0.0) + vnf.load_ratio * bw + vnf.overhead
            rest = self._pack(sid, did, path, v + 1, self._server_node_pos(path.id, x),
                              extra2, rng)
            if rest is not None:
                return [(v, x)] + rest
        return None

    # -- path candidate orders -------------------------------------------

    def _admissible(self, did: int):
        d = self.sc.demand(did)
        sfc = self.sc.sfc(d.sfc)
        return [p for p in sfc.admissible_paths if self.link_free(p, d.bandwidth)]

    def commit(self, did: int, pid: int, plan):
        d = self.sc.demand(did)
        self._route(did, pid)
        for v, x in plan:
            self._place(d.sfc, v, did, x)


def _delay_order(model, pids):
    return sorted(pids, key=lambda p: (model.paths[p].total_prop_delay, p))


def choose_path_greedy(engine: PlacementEngine, did: int) -> list[int]:
    """Candidate paths for the greedy pass, most preferred first.

    Order: the path this demand used in the initial placement, then
    paths its SFC used initially, then paths the SFC uses right now,
    then the rest, each group by propagation delay.
    """
    d = engine.sc.demand(did)
    admissible = engine._admissible(did)
    adm = set(admissible)
    order: list[int] = []

    def push(pids):
        for p in pids:
            if p in adm and p not in order:
                order.append(p)

    init = engine.initial
    if init is not None:
        p0 = init.demand_route.get(did)
        if p0 is not None:
            push([p0])
        sfc_init = sorted({init.demand_route[x.id] for x in engine.sc.sfc(d.sfc).demands
                           if x.id in init.demand_route})
        push(_delay_order(engine.model, sfc_init))
    push(_delay_order(engine.model, list(engine.path_use[d.sfc])))
    push(_delay_order(engine.model, admissible))
    return order


def choose_server_greedy(engine: PlacementEngine, did: int, v: int, path, w: int,
                         extra: dict):
    """One greedy server pick with a first-fit completion probe.

    Preference: the server this (VNF, demand) used initially; then a
    shared in-window instance, favouring initial-placement servers and
    positions before the path's cloud node; then opening on an initial
    server, again before the cloud; then plain first fit.  Returns
    (server, reuse_flag, packed_rest) or None.
    """
    sc = engine.sc
    d = sc.demand(did)
    vnf = sc.sfc(d.sfc).vnf_chain[v]
    window = engine._window(path, w)
    reusables, _ = engine._reusable(d.sfc, v, path, w)
    reusable_set = set(reusables)
    may_open = engine._may_open(d.sfc, v, path)
    cloud_pos = engine._cloud_pos(path.id)
    npos = engine.node_pos(path.id)

    def before_cloud(x):
        if cloud_pos is None:
            return True
        return npos[engine.model.server_by_id[x].node] < cloud_pos

    init_servers: set[int] = set()
    init_own = None
    if engine.initial is not None:
        init_own = engine.initial.vnf_assignment.get((d.sfc, v, did))
        for (s2, v2, _d2), x2 in engine.initial.vnf_assignment.items():
            if s2 == d.sfc and v2 == v:
                init_servers.add(x2)

    tiers: list[list[tuple[int, bool]]] = []
    if init_own is not None and init_own in window:
        if init_own in reusable_set:
            tiers.append([(init_own, True)])
        elif may_open:
            tiers.append([(init_own, False)])
    if reusable_set:
        tiers.append([(x, True) for x in reusables if x in init_servers and before_cloud(x)])
        tiers.append([(x, True) for x in reusables if before_cloud(x)])
        tiers.append([(x, True) for x in reusables])
    if may_open:
        tiers.append([(x, False) for x in window if x in init_servers and before_cloud(x)])
        tiers.append([(x, False) for x in window])

    seen = set()
    for tier in tiers:
        for x, reuse in tier:
            if (x, reuse) in seen:
                continue
            seen.add((x, reuse))
            if not engine._fits(x, vnf, d.bandwidth, reuse, extra):
                continue
            extra2 = dict(extra)
            extra2[x] = (extra2.get(x, 0.0) + vnf.load_ratio * d.bandwidth
                         + (0.0 if reuse else vnf.overhead))
            rest = engine._pack(d.sfc, did, path, v + 1,
                                npos[engine.model.server_by_id[x].node], extra2)
            if rest is not None:
                return x, reuse, extra2, rest
    return None


def _allocate(engine: PlacementEngine, did: int, algorithm: str, rng, resync: bool):
    """Route one demand and place its whole chain, or raise."""
    d = engine.sc.demand(did)
    if algorithm == "grd":
        path_order = choose_path_greedy(engine, did)
    else:
        path_order = _delay_order(engine.model, engine._admissible(did))
        if algorithm == "rf" and len(path_order) > 1:
            path_order = [path_order[i] for i in rng.permutation(len(path_order))]
    for pid in path_order:
        path = engine.model.paths[pid]
        if algorithm == "grd":
            plan = _greedy_plan(engine, did, path)
        else:
            plan = engine._pack(d.sfc, did, path, 0, 0, {},
                                rng if algorithm == "rf" else None)
        if plan is None:
            continue
        engine.commit(did, pid, plan)
        if resync:
            engine.resync(d.sfc)
        return
    raise PlacementError(f"no admissible placement for demand {did}", demand=did)


def _greedy_plan(engine: PlacementEngine, did: int, path):
    """Walk the chain slot by slot through the greedy server cascade."""
    d = engine.sc.demand(did)
    chain = engine.sc.sfc(d.sfc).vnf_chain
    plan = []
    w = 0
    extra: dict = {}
    for v in range(len(chain)):
        pick = choose_server_greedy(engine, did, v, path, w, extra)
        if pick is None:
            return None
        x, _reuse, extra, _rest = pick
        plan.append((v, x))
        w = engine._server_node_pos(path.id, x)
    return plan


def simple_placement(scenario: Scenario, algorithm: str, seed: int, *,
                     demands=None, forbid_replication: bool = False, snapshot=None,
                     initial=None, _engine_out=None) -> PlacementState:
    """First-fit or random-fit construction over the given demands.

    Demands are processed in id order (grouped by SFC); each allocation
    is followed by a refresh of its SFC's sync routes.  Raises
    ``PlacementError`` when some demand cannot be served.
    """
    if algorithm not in ("ff", "rf"):
        raise ValueError(f"simple_placement handles ff/rf, not {algorithm!r}")
    engine = PlacementEngine(scenario, initial=initial, snapshot=snapshot,
                             forbid_replication=forbid_replication)
    if _engine_out is not None:
        _engine_out.append(engine)
    rng = _rng(seed)
    order = sorted(demands) if demands is not None else [d.id for d in scenario.all_demands()]
    for did in order:
        _allocate(engine, did, algorithm, rng, resync=True)
    return engine.state


def greedy_place(scenario: Scenario, partition: Partition | None, seed: int,
                 config: HeuristicConfig | None = None, *, demands=None,
                 initial=None, snapshot=None, forbid_replication: bool = False,
                 _engine_out=None) -> PlacementState:
    """Greedy construction (initial demands first), then local search.

    With a partition, allocation runs all initial demands across SFCs
    before any later ones; sync routes refresh once per SFC after its
    later block.  ``config.local_search_sweeps`` rounds of the
    neighbourhood search follow (0 disables it).
    """
    config = config or HeuristicConfig()
    engine = PlacementEngine(scenario, initial=initial, snapshot=snapshot,
                             forbid_replication=forbid_replication)
    if _engine_out is not None:
        _engine_out.append(engine)
    if demands is None:
        demands = [d.id for d in scenario.all_demands()]
    dset = set(demands)
    if partition is not None:
        first = [d for s in scenario.sfcs for d in partition.initial.get(s.id, ())
                 if d in dset]
        later = {s.id: [d for d in partition.later.get(s.id, ()) if d in dset]
                 for s in scenario.sfcs}
    else:
        first = sorted(dset)
        later = {s.id: [] for s in scenario.sfcs}
    for did in first:
        _allocate(engine, did, "grd", None, resync=False)
    for s in scenario.sfcs:
        for did in later[s.id]:
            _allocate(engine, did, "grd", None, resync=False)
        engine.resync(s.id)
    if config.local_search_sweeps > 0:
        _local_search(engine, seed, config.local_search_sweeps)
    return engine.state


def find_new_incumbent(state: PlacementState, scenario: Scenario, seed: int,
                       sweeps: int = 1, *, initial=None) -> PlacementState:
    """Local search: re-place one demand at a time with random fit.

    Each move takes a demand out, re-allocates it randomly and keeps
    the result only if the total cost strictly improves and the replica
    bound still holds; otherwise the previous state is restored.  One
    sweep repeats the full demand pass once per SFC.  Deterministic for
    a given seed.
    """
    engine = PlacementEngine.from_state(scenario, state, initial=initial)
    _local_search(engine, seed, sweeps)
    return engine.state


def _local_search(engine: PlacementEngine, seed: int, sweeps: int):
    sc = engine.sc
    rng = _rng(seed, tag=1)
    best = engine.evaluate().total
    for _sweep in range(sweeps):
        for _rep in range(len(sc.sfcs)):
            for sfc in sc.sfcs:
                for d in sfc.demands:
                    if d.id not in engine.state.demand_route:
                        continue
                    cp = engine.checkpoint()
                    engine.remove_demand(d.id)
                    try:
                        _allocate(engine, d.id, "rf", rng, resync=True)
                        ok = engine.replication_ok(sfc.id)
                    except PlacementError:
                        ok = False
                    if ok:
                        cand = engine.evaluate().total
                        if cand < best:
                            best = cand
                            continue
                    engine.restore(cp)
                cp = engine.checkpoint()
                try:
                    engine.resync(sfc.id)
                except PlacementError:
                    engine.restore(cp)
