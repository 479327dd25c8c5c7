"""Experiment driver: seeded two-phase placement sweeps and result tables.

A plan is a Cartesian grid of (chain length, execution mode, algorithm,
seed) cells.  Every cell runs the two-phase protocol: phase 1 places the
initial demand subset with replication disabled and no snapshot, phase 2
places the full demand set against the snapshot taken from phase 1, so
migrations and replications are counted relative to the bootstrap
placement.  Each phase yields one :class:`ResultRow`.

Reproducibility rules:

* one master seed per cell splits into (scenario, partition, algorithm)
  sub-seeds, so every mode and algorithm at the same master seed serves
  an identical workload;
* ``results.csv`` carries no wall-clock column and formats floats with a
  fixed precision, so re-running an identical plan is byte-identical
  (timings live in ``results.json`` only);
* rows are sorted by cell key, never by completion order, so the worker
  count (``SFCPLACE_WORKERS``) does not affect any output file.

Cells that cannot complete stay in the table: ``status`` records whether
a demand was unplaceable (with the tightest residual capacities in
``detail``), the exhaustive search refused the instance size, or a phase
was skipped because its predecessor failed.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cost import service_delays, total_cost
from .exact import ExactGuardError, solve_exact
from .heuristics import (ALGORITHMS, HeuristicConfig, PlacementError,
                         greedy_place, simple_placement)
from .state import take_snapshot, utilization
from .topology import NetworkModel, build_path_catalog, load_topology
from .workload import (MODES, Partition, Scenario, generate_scenario,
                       select_initial_demands)

__all__ = [
    "ExperimentPlan", "ResultRow", "PLAN_ALGORITHMS", "CSV_FIELDS", "SERIES",
    "split_seed", "run_two_phase", "run_plan", "write_results", "report",
    "load_network",
]

#: algorithms a plan may request: the three constructive heuristics plus
#: the exhaustive search (small instances only).
PLAN_ALGORITHMS = tuple(ALGORITHMS) + ("exact",)

#: column order of ``results.csv``; ``runtime`` is deliberately absent.
CSV_FIELDS = ("chain_length", "mode", "algorithm", "seed", "phase",
              "total", "edge_opex", "cloud_charges", "penalties",
              "n_mgr", "n_rep", "avg_link_util", "avg_server_util",
              "avg_service_delay", "status", "detail")

#: (file stem, ResultRow field) for the per-metric series files.
SERIES = (
    ("total_costs", "total"),
    ("edge_opex", "edge_opex"),
    ("cloud_charges", "cloud_charges"),
    ("penalties", "penalties"),
    ("migrations", "n_mgr"),
    ("replications", "n_rep"),
    ("link_utilization", "avg_link_util"),
    ("server_utilization", "avg_server_util"),
    ("service_delay", "avg_service_delay"),
)


# -- plan and rows -------------------------------------------------------


@dataclass
class ExperimentPlan:
    """Full description of one experiment grid.

    ``r_initial`` is the probability that a demand belongs to the
    phase-1 subset; ``penalty_fraction``, ``d_net`` and ``d_dwt``
    override the workload generator's delay-budget inputs; ``sweeps``
    sets the greedy algorithm's local-search rounds (0 = construction
    only); ``exact_guard`` bounds the instance size the exhaustive
    search accepts.
    """

    topology: str
    chain_lengths: tuple[int, ...]
    modes: tuple[str, ...] = tuple(MODES)
    algorithms: tuple[str, ...] = ("grd",)
    seeds: tuple[int, ...] = tuple(range(1, 11))
    r_initial: float = 0.3
    penalty_fraction: float = 0.1
    d_net: float = 5.0
    d_dwt: float = 27.5
    sweeps: int = 1
    exact_guard: int = 1000

    def __post_init__(self):
        self.topology = str(self.topology)
        self.chain_lengths = tuple(int(x) for x in self.chain_lengths)
        self.modes = tuple(self.modes)
        self.algorithms = tuple(self.algorithms)
        self.seeds = tuple(int(x) for x in self.seeds)
        for name in ("chain_lengths", "modes", "algorithms", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if any(l < 1 for l in self.chain_lengths):
            raise ValueError("chain lengths must be >= 1")
        bad = set(self.modes) - set(MODES)
        if bad:
            raise ValueError(f"unknown modes: {sorted(bad)}")
        bad = set(self.algorithms) - set(PLAN_ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms: {sorted(bad)}")
        if not 0.0 <= self.r_initial <= 1.0:
            raise ValueError("r_initial must lie in [0, 1]")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")

    def cells(self) -> list[tuple[int, str, str, int]]:
        return [(l, m, a, s)
                for l in self.chain_lengths for m in self.modes
                for a in self.algorithms for s in self.seeds]


@dataclass
class ResultRow:
    """One (cell, phase) measurement.

    ``status`` is ``ok`` for a completed, validated placement;
    ``infeasible`` when some demand could not be placed (``detail``
    names the first failing demand and the tightest residual server and
    link capacities); ``refused`` when the exhaustive search declined
    the instance size; ``skipped`` when phase 1 already failed; and
    ``error`` for unexpected faults.  Metric fields are ``None`` unless
    ``status == "ok"``.  Utilization averages cover edge links and edge
    servers only; the cloud server and its access links are excluded.
    """

    chain_length: int
    mode: str
    algorithm: str
    seed: int
    phase: int
    total: float | None = None
    edge_opex: float | None = None
    cloud_charges: float | None = None
    penalties: float | None = None
    n_mgr: int | None = None
    n_rep: int | None = None
    avg_link_util: float | None = None
    avg_server_util: float | None = None
    avg_service_delay: float | None = None
    runtime: float | None = None
    status: str = "ok"
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def key(self) -> tuple:
        return (self.chain_length, self.mode, self.algorithm,
                self.seed, self.phase)


def split_seed(master: int) -> tuple[int, int, int]:
    """Derive (scenario, partition, algorithm) sub-seeds from one master.

    The scenario sub-seed is the master itself: scenarios are then
    directly reproducible from the row's ``seed`` column, and all modes
    and algorithms at one master seed share the same workload.  The
    partition and algorithm draws run on independent derived streams so
    none of the three consumes another's randomness.
    """
    part, alg = (int(x) for x in
                 np.random.SeedSequence(master).generate_state(2, np.uint32))
    return int(master), part, alg


def load_network(path) -> NetworkModel:
    """Load a topology file and build its path catalog."""
    model = load_topology(path)
    build_path_catalog(model)
    return model


# -- two-phase protocol --------------------------------------------------


def _place(scenario: Scenario, algorithm: str, alg_seed: int, sweeps: int, *,
           demands=None, forbid_replication: bool = False, initial=None,
           snapshot=None, guard: int = 1000, engines: list | None = None):
    if algorithm == "exact":
        res = solve_exact(scenario, snapshot=snapshot, demands=demands,
                          forbid_replication=forbid_replication,
                          guard_limit=guard)
        if res.best_state is None:
            raise PlacementError("exhaustive search proved the cell infeasible"
                                 if res.proven_optimal else
                                 "exhaustive search hit its budget without a "
                                 "feasible placement")
        return res.best_state
    if algorithm == "grd":
        cfg = HeuristicConfig(algorithm="grd", local_search_sweeps=sweeps)
        return greedy_place(scenario, None, alg_seed, cfg, demands=demands,
                            initial=initial, snapshot=snapshot,
                            forbid_replication=forbid_replication,
                            _engine_out=engines)
    return simple_placement(scenario, algorithm, alg_seed, demands=demands,
                            initial=initial, snapshot=snapshot,
                            forbid_replication=forbid_replication,
                            _engine_out=engines)


def _diagnose(exc: PlacementError, engines: list, model: NetworkModel) -> str:
    """Compact infeasibility report: failing demand + tightest residuals."""
    parts = []
    if getattr(exc, "demand", None) is not None:
        parts.append(f"demand {exc.demand} unplaceable")
    parts.append(str(exc))
    if engines:
        eng = engines[-1]
        srv = sorted((model.server_by_id[s].capacity_max - load, s)
                     for s, load in eng.gamma.items()
                     if not model.is_cloud_server(s))
        lnk = sorted((model.link_by_id[l].capacity_max - load, l)
                     for l, load in eng.link_load.items()
                     if not model.link_by_id[l].unbounded)
        parts.append("tightest server residuals " +
                     " ".join(f"{s}:{r:.6g}" for r, s in srv[:3]))
        parts.append("tightest link residuals " +
                     " ".join(f"{l}:{r:.6g}" for r, l in lnk[:3]))
    return "; ".join(parts)


def _measure(state, scenario: Scenario, *, required, base: dict, phase: int,
             runtime: float) -> ResultRow:
    cb = total_cost(state, scenario, required=required, validate=True)
    rep = utilization(state, scenario)
    delays = service_delays(state, scenario, rep)
    avg_delay = (statistics.fmean(d.total for d in delays.values())
                 if delays else 0.0)
    model = scenario.network
    return ResultRow(phase=phase, total=cb.total, edge_opex=cb.edge_opex,
                     cloud_charges=cb.cloud_charges, penalties=cb.penalties,
                     n_mgr=cb.n_mgr, n_rep=cb.n_rep,
                     avg_link_util=rep.avg_link_util(model),
                     avg_server_util=rep.avg_edge_server_util(model),
                     avg_service_delay=avg_delay, runtime=runtime, **base)


def run_two_phase(scenario: Scenario, algorithm: str, seed: int, *,
                  r_initial: float = 0.3, sweeps: int = 1,
                  partition: Partition | None = None,
                  exact_guard: int = 1000) -> tuple[ResultRow, ResultRow]:
    """Run both placement phases for one cell and measure each.

    Phase 1 serves only the initial demand subset, with replication
    disabled and no snapshot, so its rows always show ``n_mgr == 0`` and
    ``n_rep == 0``.  Its instance locations become the snapshot that
    phase 2 — serving every demand — is charged against: keeping a slot
    on none of its snapshot servers counts as a migration and adds
    downtime to the chain's delays, and every extra instance counts as a
    replication with synchronization traffic on the links.

    ``seed`` is the cell's master seed; the partition and the
    algorithm's internal randomness use sub-seeds derived from it (see
    :func:`split_seed`).  An unplaceable demand turns into an
    ``infeasible`` row rather than an exception, and a phase-2 run after
    a failed phase 1 is reported as ``skipped``.
    """
    _, part_seed, alg_seed = split_seed(seed)
    if partition is None:
        partition = select_initial_demands(scenario, part_seed, prob=r_initial)
    init_ids = sorted(partition.initial_ids())
    base = dict(chain_length=scenario.chain_length, mode=scenario.mode,
                algorithm=algorithm, seed=seed)
    model = scenario.network

    engines: list = []
    t0 = time.perf_counter()
    try:
        st1 = _place(scenario, algorithm, alg_seed, sweeps, demands=init_ids,
                     forbid_replication=True, guard=exact_guard,
                     engines=engines)
        row1 = _measure(st1, scenario, required=set(init_ids), base=base,
                        phase=1, runtime=time.perf_counter() - t0)
    except PlacementError as exc:
        row1 = ResultRow(phase=1, status="infeasible",
                         detail=_diagnose(exc, engines, model),
                         runtime=time.perf_counter() - t0, **base)
    except ExactGuardError as exc:
        row1 = ResultRow(phase=1, status="refused", detail=str(exc),
                         runtime=time.perf_counter() - t0, **base)
    if not row1.ok:
        row2 = ResultRow(phase=2, status="skipped",
                         detail=f"phase 1 {row1.status}", runtime=0.0, **base)
        return row1, row2

    snapshot = take_snapshot(st1, scenario)
    engines = []
    t1 = time.perf_counter()
    try:
        st2 = _place(scenario, algorithm, alg_seed, sweeps, demands=None,
                     initial=st1, snapshot=snapshot, guard=exact_guard,
                     engines=engines)
        required = {d.id for d in scenario.all_demands()}
        row2 = _measure(st2, scenario, required=required, base=base,
                        phase=2, runtime=time.perf_counter() - t1)
    except PlacementError as exc:
        row2 = ResultRow(phase=2, status="infeasible",
                         detail=_diagnose(exc, engines, model),
                         runtime=time.perf_counter() - t1, **base)
    except ExactGuardError as exc:
        row2 = ResultRow(phase=2, status="refused", detail=str(exc),
                         runtime=time.perf_counter() - t1, **base)
    return row1, row2


# -- plan execution ------------------------------------------------------


def _run_cell(model: NetworkModel, plan: ExperimentPlan, length: int,
              mode: str, algorithm: str, seed: int,
              cache: dict | None) -> list[ResultRow]:
    scen_seed, _, _ = split_seed(seed)
    key = (length, mode, seed)
    scenario = cache.get(key) if cache is not None else None
    if scenario is None:
        scenario = generate_scenario(model, length, mode, scen_seed,
                                     d_net=plan.d_net, d_dwt=plan.d_dwt,
                                     penalty_fraction=plan.penalty_fraction)
        if cache is not None:
            cache[key] = scenario
    try:
        return list(run_two_phase(scenario, algorithm, seed,
                                  r_initial=plan.r_initial,
                                  sweeps=plan.sweeps,
                                  exact_guard=plan.exact_guard))
    except Exception as exc:  # cell failures never stop the sweep
        detail = f"{type(exc).__name__}: {exc}"
        base = dict(chain_length=length, mode=mode, algorithm=algorithm,
                    seed=seed)
        return [ResultRow(phase=1, status="error", detail=detail, **base),
                ResultRow(phase=2, status="skipped", detail="phase 1 error",
                          **base)]


_WORKER_MODELS: dict[str, NetworkModel] = {}


def _cell_worker(args) -> list[ResultRow]:
    topology, length, mode, algorithm, seed, overrides = args
    model = _WORKER_MODELS.get(topology)
    if model is None:
        model = load_network(topology)
        _WORKER_MODELS[topology] = model
    plan = ExperimentPlan(topology=topology, chain_lengths=(length,),
                          modes=(mode,), algorithms=(algorithm,),
                          seeds=(seed,), **overrides)
    return _run_cell(model, plan, length, mode, algorithm, seed, None)


def _overrides(plan: ExperimentPlan) -> dict:
    return dict(r_initial=plan.r_initial,
                penalty_fraction=plan.penalty_fraction,
                d_net=plan.d_net, d_dwt=plan.d_dwt, sweeps=plan.sweeps,
                exact_guard=plan.exact_guard)


def run_plan(plan: ExperimentPlan, *, workers: int | None = None,
             progress=None) -> list[ResultRow]:
    """Execute every cell of the plan and return the sorted row table.

    ``workers`` (default: the ``SFCPLACE_WORKERS`` environment variable,
    else 1) runs cells in separate processes; cells are independent and
    the returned order is always the cell-key order, so the worker count
    never changes the result.  ``progress``, if given, is called with
    each finished cell's rows.
    """
    if workers is None:
        workers = int(os.environ.get("SFCPLACE_WORKERS", "1") or 1)
    cells = plan.cells()
    rows: list[ResultRow] = []
    if workers > 1:
        args = [(plan.topology, l, m, a, s, _overrides(plan))
                for (l, m, a, s) in cells]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_rows in pool.map(_cell_worker, args):
                rows.extend(cell_rows)
                if progress is not None:
                    progress(cell_rows)
    else:
        model = load_network(plan.topology)
        cache: dict = {}
        for (l, m, a, s) in cells:
            cell_rows = _run_cell(model, plan, l, m, a, s, cache)
            rows.extend(cell_rows)
            if progress is not None:
                progress(cell_rows)
    rows.sort(key=lambda r: r.key())
    return rows


# -- writers -------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_results(rows: list[ResultRow], out_dir) -> Path:
    """Write ``results.csv`` and ``results.json``; return the CSV path.

    The CSV omits the runtime column and is byte-stable across reruns;
    the JSON keeps every field including runtimes.  Each completed row's
    total is re-checked against the sum of its components before
    anything is written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(rows, key=lambda r: r.key())
    for r in ordered:
        if r.ok and r.total != r.edge_opex + r.cloud_charges + r.penalties:
            raise ValueError(f"row {r.key()} total {r.total!r} does not equal "
                             "edge_opex + cloud_charges + penalties")
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in ordered:
            writer.writerow([_fmt(getattr(r, name)) for name in CSV_FIELDS])
    with open(out / "results.json", "w") as fh:
        json.dump([asdict(r) for r in ordered], fh, indent=1)
        fh.write("\n")
    return out / "results.csv"


def _series_groups(rows: list[ResultRow], phase: int):
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        if r.ok and r.phase == phase:
            groups.setdefault((r.chain_length, r.mode, r.algorithm),
                              []).append(r)
    return groups


def report(rows: list[ResultRow], out_dir, *, phase: int = 2) -> Path:
    """Write per-metric series files and ``summary.md``; return the latter.

    Each ``series/<metric>.csv`` aggregates the completed rows of the
    chosen phase (default 2 — the full placement) per (chain length,
    mode, algorithm): seed mean, sample standard deviation (0 for a
    single seed) and the number of seeds that completed.
    """
    out = Path(out_dir)
    series_dir = out / "series"
    series_dir.mkdir(parents=True, exist_ok=True)
    groups = _series_groups(rows, phase)
    for stem, attr in SERIES:
        with open(series_dir / f"{stem}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("chain_length", "mode", "algorithm",
                             "mean", "stddev", "seeds"))
            for key in sorted(groups):
                vals = [float(getattr(r, attr)) for r in groups[key]]
                mean = statistics.fmean(vals)
                sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
                writer.writerow((key[0], key[1], key[2],
                                 f"{mean:.12g}", f"{sd:.12g}", len(vals)))

    counts: dict[str, int] = {}
    for r in rows:
        counts[r.status] = counts.get(r.status, 0) + 1
    lines = ["# Experiment summary", ""]
    lines.append(f"- rows: {len(rows)} "
                 f"({', '.join(f'{k}: {v}' for k, v in sorted(counts.items()))})")
    lengths = sorted({r.chain_length for r in rows})
    modes = sorted({r.mode for r in rows})
    algs = sorted({r.algorithm for r in rows})
    seeds = sorted({r.seed for r in rows})
    lines.append(f"- grid: lengths {lengths}, modes {modes}, "
                 f"algorithms {algs}, {len(seeds)} seeds")
    lines += ["", f"## Seed-mean total cost (phase {phase})", "",
              "| chain_length | mode | algorithm | mean | stddev | seeds |",
              "| --- | --- | --- | --- | --- | --- |"]
    for key in sorted(groups):
        vals = [float(r.total) for r in groups[key]]
        mean = statistics.fmean(vals)
        sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
        lines.append(f"| {key[0]} | {key[1]} | {key[2]} "
                     f"| {mean:.6g} | {sd:.6g} | {len(vals)} |")
    bad = [r for r in rows if not r.ok]
    if bad:
        lines += ["", "## Incomplete cells", "",
                  "| chain_length | mode | algorithm | seed | phase "
                  "| status | detail |",
                  "| --- | --- | --- | --- | --- | --- | --- |"]
        for r in sorted(bad, key=lambda r: r.key()):
            detail = r.detail.replace("|", "/")
            lines.append(f"| {r.chain_length} | {r.mode} | {r.algorithm} "
                         f"| {r.seed} | {r.phase} | {r.status} | {detail} |")
    (out / "summary.md").write_text("\n".join(lines) + "\n")
    return out / "summary.md"
