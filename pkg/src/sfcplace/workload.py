"""Workload model: VNF types, service chains, traffic demands, scenarios.

A scenario binds a network to a set of service function chains (SFCs).
Each SFC is an ordered chain of VNFs between a source and a destination
node and serves a handful of traffic demands.  VNFs run either in a
virtual machine, which costs a fixed processing overhead per instance,
or in a container, which has no overhead but rents at a higher cloud
price.  Random draws use dedicated substreams per SFC and purpose so
that the demand sets are identical across execution modes for the same
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .topology import NetworkModel

MODES = ("vm-only", "ct-only", "vm-ct")

# substream purposes for SeedSequence keys
_STREAM_CHAIN = 0
_STREAM_DEMANDS = 1
_STREAM_INITIAL = 2


@dataclass(frozen=True)
class VnfType:
    """Resource and delay profile of one VNF flavour.

    ``load_ratio`` scales demand bandwidth into processing load and
    ``overhead`` is the per-instance processing cost of the execution
    environment (zero for containers).  The delay figures describe a
    queueing term that reaches ``delay_queue`` ms when the instance's
    assigned load hits ``proc_capacity_max``, plus a floor of
    ``delay_min`` growing to ``delay_min + delay_slope`` as the hosting
    server fills up.  ``cloud_price`` is the hourly charge for running
    one instance in the cloud.
    """

    name: str
    exec_mode: str                  # "vm" or "ct"
    overhead: float
    load_ratio: float
    sync_ratio: float
    proc_capacity_max: float
    delay_queue: float
    delay_slope: float
    delay_min: float
    delay_max: float
    cloud_price: float
    replicable: bool = True


def default_vnf_catalog() -> dict[str, VnfType]:
    """The two stock VNF flavours; identical except overhead and price."""
    vm = VnfType("vm", "vm", overhead=7.0, load_ratio=1.2, sync_ratio=0.1,
                 proc_capacity_max=72.0, delay_queue=3.0, delay_slope=5.0,
                 delay_min=2.0, delay_max=10.0, cloud_price=0.0069)
    ct = VnfType("ct", "ct", overhead=0.0, load_ratio=1.2, sync_ratio=0.1,
                 proc_capacity_max=72.0, delay_queue=3.0, delay_slope=5.0,
                 delay_min=2.0, delay_max=10.0, cloud_price=0.1199988)
    return {"vm": vm, "ct": ct}


@dataclass
class TrafficDemand:
    id: int
    sfc: int
    bandwidth: float
    in_initial_set: bool = False


@dataclass
class Sfc:
    id: int
    src: int
    dst: int
    vnf_chain: tuple[VnfType, ...]
    demands: list[TrafficDemand] = field(default_factory=list)
    admissible_paths: tuple[int, ...] = ()
    d_max: float = 0.0        # delay budget: worst-case processing + network share
    d_hat_max: float = 0.0    # budget stretched by worst-case instance downtime
    penalty_rate: float = 0.0

    def demand_ids(self) -> tuple[int, ...]:
        return tuple(d.id for d in self.demands)


@dataclass
class Scenario:
    network: NetworkModel
    sfcs: list[Sfc]
    vnf_catalog: dict[str, VnfType]
    mode: str = "vm-only"
    chain_length: int = 1
    rng_seed: int = 0
    d_net: float = 5.0
    d_dwt: float = 27.5
    penalty_fraction: float = 0.1
    include_reverse: bool = True

    def __post_init__(self):
        self._sfc_by_id = {s.id: s for s in self.sfcs}
        self._demand_by_id = {d.id: d for s in self.sfcs for d in s.demands}

    def sfc(self, sid: int) -> Sfc:
        return self._sfc_by_id[sid]

    def demand(self, did: int) -> TrafficDemand:
        return self._demand_by_id[did]

    def all_demands(self) -> list[TrafficDemand]:
        return sorted(self._demand_by_id.values(), key=lambda d: d.id)

    def reindex(self):
        """Refresh the id lookups after demands were added or removed."""
        self.__post_init__()


@dataclass(frozen=True)
class Partition:
    """Split of each SFC's demands into an initial set and later arrivals."""

    initial: dict[int, tuple[int, ...]]
    later: dict[int, tuple[int, ...]]

    def initial_ids(self) -> frozenset[int]:
        return frozenset(d for ids in self.initial.values() for d in ids)


def _stream(seed: int, sfc_index: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, sfc_index, purpose))))


def _finalize_sfc(sfc: Sfc, scenario_like) -> None:
    d_net, d_dwt, rho = (scenario_like.d_net, scenario_like.d_dwt,
                         scenario_like.penalty_fraction)
    sfc.d_max = sum(t.delay_max for t in sfc.vnf_chain) + d_net
    sfc.d_hat_max = sfc.d_max + len(sfc.vnf_chain) * d_dwt
    sfc.penalty_rate = rho * sum(t.cloud_price for t in sfc.vnf_chain)


def generate_scenario(network: NetworkModel, chain_length: int, mode: str, seed: int,
                      *, d_net: float = 5.0, d_dwt: float = 27.5,
                      penalty_fraction: float = 0.1, include_reverse: bool = True,
                      vnf_catalog: dict[str, VnfType] | None = None) -> Scenario:
    """Build a scenario with one SFC per ordered edge-node pair.

    Every pair of distinct non-cloud nodes gets a chain of
    ``chain_length`` VNFs (both directions unless ``include_reverse`` is
    off) and between 1 and 3 demands with integer bandwidths in [1, 20].
    ``mode`` picks the execution environment: all VMs, all containers,
    or a per-VNF coin flip for ``vm-ct``.  Demand draws and mode draws
    use separate substreams, so two modes at the same seed serve exactly
    the same traffic.  Requires the network's path catalog to be built.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if chain_length < 1:
        raise ValueError("chain_length must be at least 1")
    if not network.sfc_path_index:
        raise ValueError("network has no path catalog; run build_path_catalog first")
    catalog = dict(vnf_catalog) if vnf_catalog is not None else default_vnf_catalog()

    edge_ids = network.edge_node_ids()
    node_pairs = [(a, b) for a in edge_ids for b in edge_ids if a != b]
    if not include_reverse:
        node_pairs = [(a, b) for a, b in node_pairs if a < b]
    node_pairs.sort()

    sc = Scenario(network, [], catalog, mode, chain_length, seed,
                  d_net, d_dwt, penalty_fraction, include_reverse)
    next_demand = 0
    for i, (src, dst) in enumerate(node_pairs):
        if mode == "vm-only":
            chain = tuple(catalog["vm"] for _ in range(chain_length))
        elif mode == "ct-only":
            chain = tuple(catalog["ct"] for _ in range(chain_length))
        else:
            flips = _stream(seed, i, _STREAM_CHAIN).integers(0, 2, size=chain_length)
            chain = tuple(catalog["vm"] if f else catalog["ct"] for f in flips)
        gen = _stream(seed, i, _STREAM_DEMANDS)
        n_dem = int(gen.integers(1, 4))
        bws = gen.integers(1, 21, size=n_dem)
        sfc = Sfc(i, src, dst, chain, admissible_paths=network.sfc_path_index[(src, dst)])
        for bw in bws:
            sfc.demands.append(TrafficDemand(next_demand, i, float(bw)))
            next_demand += 1
        _finalize_sfc(sfc, sc)
        sc.sfcs.append(sfc)
    sc.reindex()
    return sc


def select_initial_demands(scenario: Scenario, seed: int, prob: float = 0.3) -> Partition:
    """Mark each demand as initial with probability ``prob``.

    Guarantees at least one initial demand per SFC (falling back to a
    uniform pick), so every chain exists before later arrivals show up.
    Also stamps ``in_initial_set`` on the demand records.
    """
    initial: dict[int, tuple[int, ...]] = {}
    later: dict[int, tuple[int, ...]] = {}
    for sfc in scenario.sfcs:
        gen = _stream(seed, sfc.id, _STREAM_INITIAL)
        picks = [d.id for d in sfc.demands if gen.random() < prob]
        if not picks:
            picks = [sfc.demands[int(gen.integers(0, len(sfc.demands)))].id]
        chosen = frozenset(picks)
        for d in sfc.demands:
            d.in_initial_set = d.id in chosen
        initial[sfc.id] = tuple(sorted(chosen))
        later[sfc.id] = tuple(d.id for d in sfc.demands if d.id not in chosen)
    return Partition(initial, later)


def partition_from_flags(scenario: Scenario) -> Partition:
    """Rebuild the demand partition from the ``in_initial_set`` flags."""
    initial = {}
    later = {}
    for sfc in scenario.sfcs:
        initial[sfc.id] = tuple(d.id for d in sfc.demands if d.in_initial_set)
        later[sfc.id] = tuple(d.id for d in sfc.demands if not d.in_initial_set)
    return Partition(initial, later)


# -- scenario files ------------------------------------------------------


def save_scenario(scenario: Scenario, path) -> None:
    """Write a scenario in its explicit form (exact reload, no RNG replay)."""
    lines = [
        "[scenario]",
        f"mode {scenario.mode}",
        f"chain_length {scenario.chain_length}",
        f"seed {scenario.rng_seed}",
        f"d_net {scenario.d_net!r}",
        f"d_dwt {scenario.d_dwt!r}",
        f"penalty_fraction {scenario.penalty_fraction!r}",
        f"include_reverse {int(scenario.include_reverse)}",
        "",
        "[sfcs]",
        "# id src dst chain",
    ]
    for s in scenario.sfcs:
        chain = ",".join(t.name for t in s.vnf_chain)
        lines.append(f"{s.id} {s.src} {s.dst} {chain}")
    lines += ["", "[demands]", "# id sfc bandwidth initial"]
    for d in sorted(scenario.all_demands(), key=lambda d: d.id):
        lines.append(f"{d.id} {d.sfc} {d.bandwidth!r} {int(d.in_initial_set)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scenario(path, network: NetworkModel,
                  vnf_catalog: dict[str, VnfType] | None = None) -> Scenario:
    """Read a scenario file back against a network.

    Files with explicit ``[sfcs]``/``[demands]`` sections are rebuilt
    verbatim; files carrying only the ``[scenario]`` parameters replay
    the generator with them.
    """
    params: dict[str, str] = {}
    sfc_rows: list[list[str]] = []
    demand_rows: list[list[str]] = []
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                section = line.strip("[]").strip().lower()
                if section not in ("scenario", "sfcs", "demands"):
                    raise ValueError(f"line {lineno}: unknown section {section!r}")
                continue
            toks = line.split()
            if section == "scenario":
                params[toks[0]] = toks[1]
            elif section == "sfcs":
                sfc_rows.append(toks)
            elif section == "demands":
                demand_rows.append(toks)
            else:
                raise ValueError(f"line {lineno}: data before any section header")

    catalog = dict(vnf_catalog) if vnf_catalog is not None else default_vnf_catalog()
    common = dict(
        mode=params.get("mode", "vm-only"),
        chain_length=int(params.get("chain_length", 1)),
        seed=int(params.get("seed", 0)),
        d_net=float(params.get("d_net", 5.0)),
        d_dwt=float(params.get("d_dwt", 27.5)),
        penalty_fraction=float(params.get("penalty_fraction", 0.1)),
        include_reverse=bool(int(params.get("include_reverse", 1))),
    )
    if not sfc_rows:
        return generate_scenario(network, common["chain_length"], common["mode"],
                                 common["seed"], d_net=common["d_net"],
                                 d_dwt=common["d_dwt"],
                                 penalty_fraction=common["penalty_fraction"],
                                 include_reverse=common["include_reverse"],
                                 vnf_catalog=catalog)

    if not network.sfc_path_index:
        raise ValueError("network has no path catalog; run build_path_catalog first")
    sc = Scenario(network, [], catalog, common["mode"], common["chain_length"],
                  common["seed"], common["d_net"], common["d_dwt"],
                  common["penalty_fraction"], common["include_reverse"])
    for toks in sfc_rows:
        sid, src, dst = int(toks[0]), int(toks[1]), int(toks[2])
        try:
            chain = tuple(catalog[name] for name in toks[3].split(","))
        except KeyError as exc:
            raise ValueError(f"sfc {sid} references unknown VNF type {exc}") from None
        sfc = Sfc(sid, src, dst, chain,
                  admissible_paths=network.sfc_path_index[(src, dst)])
        _finalize_sfc(sfc, sc)
        sc.sfcs.append(sfc)
    sc.reindex()
    for toks in demand_rows:
        did, sid, bw = int(toks[0]), int(toks[1]), float(toks[2])
        flag = bool(int(toks[3])) if len(toks) > 3 else False
        sc.sfc(sid).demands.append(TrafficDemand(did, sid, bw, flag))
    sc.reindex()
    return sc
