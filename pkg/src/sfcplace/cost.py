"""Delay model and the cost objective.

Total cost is the sum of edge operating expense (a flat cost per active
server plus a utilisation-proportional term), cloud usage charges (a
price per VNF instance hosted on a cloud server), and delay penalties.
A demand's delay combines propagation along its path, per-VNF processing
(queueing at the instance plus a server-utilisation term), and, when an
earlier placement snapshot is present, downtime for every migrated
instance of its chain.  Penalties kick in only above the SFC's delay
budget and grow linearly with the relative excess.
"""

from __future__ import annotations

from dataclasses import dataclass

from .state import (PlacementState, StateError, count_migrations, count_replications,
                    instance_map, migrated_slots, utilization, validate_all)
from .workload import Scenario


@dataclass(frozen=True)
class DelayBreakdown:
    propagation: float
    processing: float
    downtime: float

    @property
    def total(self) -> float:
        return self.propagation + self.processing + self.downtime


@dataclass(frozen=True)
class CostBreakdown:
    edge_opex: float
    cloud_charges: float
    penalties: float
    n_mgr: int
    n_rep: int

    @property
    def total(self) -> float:
        return self.edge_opex + self.cloud_charges + self.penalties


class InvalidStateError(ValueError):
    def __init__(self, violations):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} constraint violations: {head}{more}")


def _instance_load(scenario, sfc_id, vnf_idx, demands) -> float:
    vnf = scenario.sfc(sfc_id).vnf_chain[vnf_idx]
    return vnf.load_ratio * sum(scenario.demand(d).bandwidth for d in demands)


def processing_delay(state: PlacementState, scenario: Scenario, server: int,
                     sfc_id: int, vnf_idx: int, report=None, instances=None) -> float:
    """Delay through one VNF instance in ms.

    Queueing scales with the instance's assigned load against its own
    processing ceiling; on top sits a floor plus a term growing with the
    hosting server's overall utilisation.
    """
    if instances is None:
        instances = instance_map(state, scenario)
    inst = instances.get((sfc_id, vnf_idx), {})
    if server not in inst:
        raise StateError(f"no instance of SFC {sfc_id} VNF {vnf_idx} on server {server}")
    if report is None:
        report = utilization(state, scenario)
    vnf = scenario.sfc(sfc_id).vnf_chain[vnf_idx]
    load = _instance_load(scenario, sfc_id, vnf_idx, inst[server])
    queue = vnf.delay_queue * load / vnf.proc_capacity_max
    return queue + vnf.delay_min + vnf.delay_slope * report.server_util[server]


def downtime(state: PlacementState, scenario: Scenario, sfc_id: int) -> float:
    """Added delay for an SFC whose instances moved since the snapshot."""
    return scenario.d_dwt * migrated_slots(state, scenario, sfc_id)


def demand_delay(state: PlacementState, scenario: Scenario, demand_id: int,
                 report=None, _proc_cache=None, instances=None) -> DelayBreakdown:
    d = scenario.demand(demand_id)
    pid = state.demand_route.get(demand_id)
    if pid is None:
        raise StateError(f"demand {demand_id} is not routed")
    if report is None:
        report = utilization(state, scenario)
    if instances is None:
        instances = instance_map(state, scenario)
    prop = scenario.network.paths[pid].total_prop_delay
    proc = 0.0
    for v in range(len(scenario.sfc(d.sfc).vnf_chain)):
        x = state.vnf_assignment.get((d.sfc, v, demand_id))
        if x is None:
            raise StateError(f"demand {demand_id} has no server for VNF {v}")
        if _proc_cache is not None:
            key = (d.sfc, v, x)
            if key not in _proc_cache:
                _proc_cache[key] = processing_delay(state, scenario, x, d.sfc, v,
                                                    report, instances)
            proc += _proc_cache[key]
        else:
            proc += processing_delay(state, scenario, x, d.sfc, v, report, instances)
    return DelayBreakdown(prop, proc, downtime(state, scenario, d.sfc))


def service_delays(state: PlacementState, scenario: Scenario, report=None):
    """DelayBreakdown per routed demand."""
    if report is None:
        report = utilization(state, scenario)
    instances = instance_map(state, scenario)
    cache: dict = {}
    out = {}
    for d in scenario.all_demands():
        if d.id in state.demand_route:
            out[d.id] = demand_delay(state, scenario, d.id, report, cache, instances)
    return out


def penalty(state: PlacementState, scenario: Scenario, demand_id: int,
            delay: float | None = None, report=None) -> float:
    """Charge for exceeding the delay budget, zero at or under it."""
    d = scenario.demand(demand_id)
    sfc = scenario.sfc(d.sfc)
    if delay is None:
        delay = demand_delay(state, scenario, demand_id, report).total
    excess = delay / sfc.d_max - 1.0
    return sfc.penalty_rate * excess if excess > 0.0 else 0.0


def edge_opex(state: PlacementState, scenario: Scenario, report=None, instances=None):
    """Hourly cost per edge server and the total.

    A server that hosts at least one instance pays its idle cost; every
    server pays its utilisation share and any fixed maintenance figure.
    """
    model = scenario.network
    if report is None:
        report = utilization(state, scenario)
    if instances is None:
        instances = instance_map(state, scenario)
    used = set()
    for (_sv, per_server) in instances.items():
        used.update(per_server)
    per = {}
    total = 0.0
    for srv in model.servers:
        if srv.is_cloud:
            continue
        k = srv.fixed_cost + srv.util_cost * report.server_util[srv.id]
        if srv.id in used:
            k += srv.idle_cost
        per[srv.id] = k
        total += k
    return per, total


def cloud_charges(state: PlacementState, scenario: Scenario, instances=None) -> float:
    """Price per VNF instance hosted on a cloud server."""
    model = scenario.network
    if instances is None:
        instances = instance_map(state, scenario)
    total = 0.0
    for (s, v), per_server in sorted(instances.items()):
        vnf = scenario.sfc(s).vnf_chain[v]
        for x in sorted(per_server):
            if x in model.server_by_id and model.is_cloud_server(x):
                total += vnf.cloud_price
    return total


def total_cost(state: PlacementState, scenario: Scenario, *, required=None,
               validate: bool = True) -> CostBreakdown:
    """Full objective for a state.

    ``required`` narrows the demand set that must be routed (phase-1
    states only serve the initial arrivals); penalties always cover
    exactly the routed demands.  With ``validate`` on, any constraint
    violation raises ``InvalidStateError`` instead of pricing a state
    that the model would not admit.
    """
    if validate:
        violations = validate_all(state, scenario, required=required)
        if violations:
            raise InvalidStateError(violations)
    report = utilization(state, scenario)
    instances = instance_map(state, scenario)
    _per, opex = edge_opex(state, scenario, report, instances)
    cloud = cloud_charges(state, scenario, instances)
    pens = 0.0
    cache: dict = {}
    for d in scenario.all_demands():
        if d.id in state.demand_route:
            dd = demand_delay(state, scenario, d.id, report, cache, instances)
            pens += penalty(state, scenario, d.id, delay=dd.total)
    n_mgr = count_migrations(state, scenario) if state.initial_snapshot is not None else 0
    n_rep = count_replications(state, scenario)
    return CostBreakdown(opex, cloud, pens, n_mgr, n_rep)
