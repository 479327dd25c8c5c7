"""Release acceptance suite: one numbered test per release gate.

In order: (1) validator fidelity on randomized valid/mutated states,
(2) exact-search optimality against exhaustive enumeration, (3)
heuristic cost ordering and optimality gap, (4) hand-derived cost
goldens, (5) the two-phase placement protocol, (6a-c) qualitative
cost/replication trends across chain lengths, (7) the linear-model
export/import round trip, and (8) byte-level determinism of the
command-line runner.  Tolerances are pinned next to each assertion.
"""

import dataclasses
import os
import random
import shutil
import subprocess
import time
from collections import Counter

import pytest

from sfcplace.cost import cloud_charges, demand_delay, edge_opex, total_cost
from sfcplace.exact import assignment_census, export_milp, import_solution, solve_exact
from sfcplace.harness import ExperimentPlan, run_plan
from sfcplace.heuristics import greedy_place, simple_placement
from sfcplace.state import (PlacementState, active_paths, instance_servers,
                            server_loads, validate_all)
from sfcplace.workload import MODES, default_vnf_catalog, generate_scenario

from .conftest import DATA, SMALL_EXACT_PATTERNS, make_scenario, tiny_instance
from .oracles import optimum_by_enumeration, reference_cost, solve_lp

NET7 = DATA / "net7.topo"


# -- gate 1: validators separate valid states from mutated ones ----------
#
# Each mutation below corrupts exactly one family of placement rules and
# names the violation kind the validators must report for it.


def _pick(ids, rng):
    return ids[rng.randrange(len(ids))]


def _mut_drop_route(st, sc, ids, rng):
    """A routed demand loses its path (its slots go with it)."""
    did = _pick(ids, rng)
    d = sc.demand(did)
    st2 = st.clone()
    del st2.demand_route[did]
    for v in range(len(sc.sfc(d.sfc).vnf_chain)):
        st2.vnf_assignment.pop((d.sfc, v, did), None)
    return st2, "missing-route"


def _mut_foreign_path(st, sc, ids, rng):
    """A demand is rerouted onto a path outside its own SFC's set."""
    did = _pick(ids, rng)
    own = set(sc.sfc(sc.demand(did).sfc).admissible_paths)
    for other in sc.sfcs:
        for p in other.admissible_paths:
            if p not in own:
                st2 = st.clone()
                st2.demand_route[did] = p
                return st2, "inadmissible-path"
    return None


def _mut_drop_slot(st, sc, ids, rng):
    """A demand loses the server assignment of its first slot."""
    did = _pick(ids, rng)
    st2 = st.clone()
    del st2.vnf_assignment[(sc.demand(did).sfc, 0, did)]
    return st2, "missing-vnf"


def _mut_unknown_server(st, sc, ids, rng):
    """A slot points at a server id the network does not contain."""
    did = _pick(ids, rng)
    st2 = st.clone()
    st2.vnf_assignment[(sc.demand(did).sfc, 0, did)] = 999_999
    return st2, "unknown-server"


def _mut_phantom_assignment(st, sc, ids, rng):
    """An assignment appears for a demand id the workload never issued."""
    did = _pick(ids, rng)
    s = sc.demand(did).sfc
    st2 = st.clone()
    st2.vnf_assignment[(s, 0, 999_999)] = st.vnf_assignment[(s, 0, did)]
    return st2, "stray-assignment"


def _mut_forced_replica(st, sc, ids, rng):
    """A second instance appears while the SFC activates a single path."""
    for did in ids:
        d = sc.demand(did)
        if len(sc.sfc(d.sfc).vnf_chain) != 1:
            continue  # single-slot chains keep the mutation order-neutral
        if len(active_paths(st, sc, d.sfc)) != 1:
            continue
        if not any(o != did and sc.demand(o).sfc == d.sfc for o in ids):
            continue
        x = st.vnf_assignment[(d.sfc, 0, did)]
        path = sc.network.paths[st.demand_route[did]]
        others = [y for y in path.server_sequence if y != x]
        if not others:
            continue
        st2 = st.clone()
        st2.vnf_assignment[(d.sfc, 0, did)] = others[0]
        return st2, "replication"
    return None


def _mut_off_path(st, sc, ids, rng):
    """A slot lands on a server whose node the chosen path never visits."""
    did = _pick(ids, rng)
    d = sc.demand(did)
    on = set(sc.network.paths[st.demand_route[did]].node_sequence)
    for srv in sc.network.servers:
        if srv.node not in on:
            st2 = st.clone()
            st2.vnf_assignment[(d.sfc, 0, did)] = srv.id
            return st2, "off-path-server"
    return None


def _mut_order_swap(st, sc, ids, rng):
    """Slot 0 moves downstream of slot 1 along the demand's path."""
    for did in ids:
        d = sc.demand(did)
        if len(sc.sfc(d.sfc).vnf_chain) < 2:
            continue
        nodes = sc.network.paths[st.demand_route[did]].node_sequence
        if len(set(nodes)) < 2:
            continue
        first = sc.network.servers_at(nodes[0])
        last = sc.network.servers_at(nodes[-1])
        if not first or not last:
            continue
        st2 = st.clone()
        st2.vnf_assignment[(d.sfc, 0, did)] = last[0]
        st2.vnf_assignment[(d.sfc, 1, did)] = first[0]
        return st2, "order"
    return None


MUTATIONS = (_mut_drop_route, _mut_foreign_path, _mut_drop_slot,
             _mut_unknown_server, _mut_phantom_assignment,
             _mut_forced_replica, _mut_off_path, _mut_order_swap)


def _two_path_base(net7, flavour):
    """One SFC, two admissible paths, one demand and instance on each."""
    cat = {flavour.name: flavour}
    sc = make_scenario(net7, [(0, 3, (flavour,))], [(0, 5.0), (0, 5.0)],
                       catalog=cat)
    sfc = sc.sfcs[0]
    for pa in sfc.admissible_paths:
        for pb in sfc.admissible_paths:
            if pa == pb:
                continue
            a = sc.network.paths[pa]
            b = sc.network.paths[pb]
            only_b = [y for y in b.server_sequence if y not in a.server_sequence]
            if not only_b:
                continue
            st = PlacementState(
                demand_route={0: pa, 1: pb},
                vnf_assignment={(0, 0, 0): a.server_sequence[0],
                                (0, 0, 1): only_b[0]})
            return sc, st, pa, only_b[0]
    raise AssertionError("no admissible path pair differs in servers")


def test_01_validators_separate_valid_from_mutated_states(net7):
    t0 = time.monotonic()
    rng = random.Random(20250825)
    n_valid = n_mutated = 0
    hits = Counter()
    i = 0
    for seed in range(1, 85):
        length = (seed - 1) % 3 + 1
        mode = MODES[(seed - 1) % 3]
        sc, ids = tiny_instance(net7, length, mode, seed, 3)
        need = set(ids)
        for alg, pseed in (("ff", 0), ("rf", 1), ("rf", 2),
                           ("rf", 3), ("rf", 4), ("rf", 5)):
            st = simple_placement(sc, alg, pseed, demands=ids)
            assert validate_all(st, sc, required=need) == []
            n_valid += 1
            for j in range(len(MUTATIONS)):
                out = MUTATIONS[(i + j) % len(MUTATIONS)](st, sc, ids, rng)
                if out is None:
                    continue
                st2, expect = out
                kinds = {v.kind for v in validate_all(st2, sc, required=need)}
                assert expect in kinds, (seed, alg, pseed, expect, kinds)
                hits[expect] += 1
                n_mutated += 1
                break
            else:
                pytest.fail(f"no applicable mutation for seed {seed}")
            i += 1

    # deterministic corner cases on a hand-built two-path layout
    vm = default_vnf_catalog()["vm"]
    need = {0, 1}

    # replicas on two live paths are fine; rerouting the second demand
    # away strands its instance and shrinks the live-path budget
    sc, st, pa, strand_srv = _two_path_base(net7, vm)
    assert validate_all(st, sc, required=need) == []
    n_valid += 1
    st2 = st.clone()
    st2.demand_route[1] = pa
    kinds = {v.kind for v in validate_all(st2, sc, required=need)}
    assert {"off-path-server", "replication"} <= kinds, kinds
    hits["replication"] += 1
    hits["off-path-server"] += 1
    n_mutated += 1

    # a flavour that must not replicate is capped at one instance even
    # with two live paths
    pinned = dataclasses.replace(vm, name="vmpin", replicable=False)
    sc, st, _pa, _srv = _two_path_base(net7, pinned)
    one_path = PlacementState(
        demand_route={0: st.demand_route[0], 1: st.demand_route[0]},
        vnf_assignment={(0, 0, 0): st.vnf_assignment[(0, 0, 0)],
                        (0, 0, 1): st.vnf_assignment[(0, 0, 0)]})
    assert validate_all(one_path, sc, required=need) == []
    n_valid += 1
    kinds = {v.kind for v in validate_all(st, sc, required=need)}
    assert "replication" in kinds, kinds
    hits["replication"] += 1
    n_mutated += 1

    # the instance view is recomputed from per-demand assignments, so a
    # phantom assignment surfaces in it and the validators reject it
    sc, st, pa, _srv = _two_path_base(net7, vm)
    ghost_srv = sc.network.paths[pa].server_sequence[-1]
    st2 = st.clone()
    st2.vnf_assignment[(0, 0, 999_999)] = ghost_srv
    assert ghost_srv in instance_servers(st2, 0, 0)
    kinds = {v.kind for v in validate_all(st2, sc, required=need)}
    assert "stray-assignment" in kinds, kinds
    hits["stray-assignment"] += 1
    n_mutated += 1

    elapsed = time.monotonic() - t0
    expected_kinds = {"missing-route", "inadmissible-path", "missing-vnf",
                      "unknown-server", "stray-assignment", "replication",
                      "off-path-server", "order"}
    assert set(hits) == expected_kinds
    assert all(hits[k] >= 1 for k in expected_kinds)
    assert n_valid + n_mutated >= 1000
    assert elapsed < 10.0, f"{elapsed:.2f}s over the 10 s budget"


# -- gate 2/3: shared enumeration fixture --------------------------------


@pytest.fixture(scope="module")
def small_optimal_instances(net7):
    """The 20 pinned enumerable instances with their proven optima."""
    t0 = time.monotonic()
    out = []
    for i, (length, mode, k) in enumerate(SMALL_EXACT_PATTERNS):
        seed = i + 1
        sc, ids = tiny_instance(net7, length, mode, seed, k)
        census = assignment_census(sc, ids)
        enum = optimum_by_enumeration(sc, ids)
        res = solve_exact(sc, demands=ids, guard_limit=200_000)
        out.append((sc, ids, seed, census, enum, res))
    return out, time.monotonic() - t0


def test_02_pruned_search_matches_exhaustive_enumeration(small_optimal_instances):
    instances, elapsed = small_optimal_instances
    assert len(instances) == 20
    for sc, ids, seed, census, enum, res in instances:
        assert census <= 100_000, (seed, census)
        assert enum.complete == census, (seed, enum.complete, census)
        assert res.proven_optimal and res.best_state is not None
        # exact equality: both searches price leaves with the same arithmetic
        assert res.best_cost.total == enum.best_total, (seed, res.best_cost.total,
                                                       enum.best_total)
        ref = reference_cost(res.best_state, sc)
        assert abs(ref.total - res.best_cost.total) <= 1e-9
    assert elapsed < 300.0, f"{elapsed:.1f}s over the 5 min budget"


def test_03_heuristic_cost_ordering_and_gap(small_optimal_instances):
    instances, _elapsed = small_optimal_instances
    within_quarter = 0
    for sc, ids, seed, _census, _enum, res in instances:
        need = set(ids)
        opt = res.best_cost.total
        grd = total_cost(greedy_place(sc, None, seed, demands=ids),
                         sc, required=need).total
        ff = total_cost(simple_placement(sc, "ff", seed, demands=ids),
                        sc, required=need).total
        rf = total_cost(simple_placement(sc, "rf", seed, demands=ids),
                        sc, required=need).total
        assert opt <= grd + 1e-9, (seed, opt, grd)
        assert grd <= min(ff, rf) + 1e-9, (seed, grd, ff, rf)
        if grd <= 1.25 * opt + 1e-12:
            within_quarter += 1
    assert within_quarter >= 16, f"only {within_quarter}/20 within 25% of optimal"


# -- gate 4: hand-derived cost goldens -----------------------------------


def test_04_hand_derived_cost_goldens(net7, toy_model):
    tol = 1e-12

    # delay budget of a 2-slot chain: 2*10 ms processing caps + 5 ms
    # network allowance; worst case adds one 27.5 ms downtime per slot
    for mode in MODES:
        sc = generate_scenario(net7, chain_length=2, mode=mode, seed=1)
        for s in sc.sfcs:
            assert abs(s.d_max - 25.0) <= tol
            assert abs(s.d_hat_max - 80.0) <= tol

    # one VM slot serving a 10-unit demand loads its host 1.2*10 + 7
    sc = make_scenario(toy_model, [(0, 1, ("vm",))], [(0, 10.0)])
    pid = sc.sfcs[0].admissible_paths[0]
    st = PlacementState(demand_route={0: pid}, vnf_assignment={(0, 0, 0): 0})
    assert validate_all(st, sc) == []
    assert abs(server_loads(st, sc)[0] - 19.0) <= tol

    # a used but load-free edge server pays exactly the idle charge
    hollow = dataclasses.replace(default_vnf_catalog()["vm"], name="v0",
                                 overhead=0.0, load_ratio=0.0)
    sc = make_scenario(toy_model, [(0, 1, (hollow,))], [(0, 10.0)],
                       catalog={"v0": hollow})
    pid = sc.sfcs[0].admissible_paths[0]
    st = PlacementState(demand_route={0: pid}, vnf_assignment={(0, 0, 0): 0})
    _per_server, opex = edge_opex(st, sc)
    assert abs(opex - 0.0184453) <= tol

    # one container instance rented in the cloud
    assert abs(default_vnf_catalog()["ct"].cloud_price - 0.1199988) <= tol
    sc = make_scenario(toy_model, [(0, 2, ("ct",))], [(0, 5.0)])
    cloudy = next(p for p in sc.sfcs[0].admissible_paths
                  if 3 in sc.network.paths[p].server_sequence)
    st = PlacementState(demand_route={0: cloudy}, vnf_assignment={(0, 0, 0): 3})
    assert validate_all(st, sc) == []
    assert abs(cloud_charges(st, sc) - 0.1199988) <= tol

    # one migrated slot stretches the demand's delay by exactly 27.5 ms
    sc = make_scenario(toy_model, [(0, 1, ("vm",))], [(0, 10.0)])
    assert abs(sc.d_dwt - 27.5) <= tol
    pid = sc.sfcs[0].admissible_paths[0]
    st = PlacementState(demand_route={0: pid}, vnf_assignment={(0, 0, 0): 1})
    before = demand_delay(st, sc, 0).total
    st2 = st.clone()
    st2.initial_snapshot = {(0, 0): frozenset({2})}
    after = demand_delay(st2, sc, 0).total
    assert abs((after - before) - 27.5) <= tol


# -- gate 5: two-phase protocol ------------------------------------------


def test_05_two_phase_protocol_is_clean_and_idempotent():
    t0 = time.monotonic()
    base = dict(topology=str(NET7), chain_lengths=(1, 2, 3, 4), modes=MODES,
                algorithms=("grd",), seeds=tuple(range(1, 11)), sweeps=0)

    # the restricted first phase never migrates or replicates
    rows_a = run_plan(ExperimentPlan(**base))
    phase1 = [r for r in rows_a if r.phase == 1]
    assert len(phase1) == 120
    assert all(r.ok for r in phase1)
    assert all(r.n_mgr == 0 and r.n_rep == 0 for r in phase1)

    # replaying the full demand set against its own snapshot moves nothing
    rows_b = run_plan(ExperimentPlan(**base, r_initial=1.0))
    done = [r for r in rows_b if r.phase == 2 and r.ok]
    assert done
    assert all(r.n_mgr == 0 for r in done)

    # capacity-bound cells are allowed only at the longest chains; report them
    bad = sorted({(r.chain_length, r.mode, r.seed)
                  for r in rows_b if not r.ok})
    for cell in bad:
        print(f"full-load placement infeasible at {cell}")
    assert all(length == 4 for length, _m, _s in bad), bad

    elapsed = time.monotonic() - t0
    assert elapsed < 120.0, f"{elapsed:.1f}s over the 2 min budget"


# -- gate 6: qualitative trends over chain length ------------------------


LENGTHS = tuple(range(1, 11))


@pytest.fixture(scope="module")
def trend_rows():
    plan = ExperimentPlan(topology=str(NET7), chain_lengths=LENGTHS,
                          modes=MODES, algorithms=("grd",),
                          seeds=tuple(range(1, 11)), sweeps=0)
    return [r for r in run_plan(plan) if r.phase == 2]


def _seed_mean(rows, mode, length, field):
    vals = [getattr(r, field) for r in rows
            if r.mode == mode and r.chain_length == length and r.ok]
    return sum(vals) / len(vals) if vals else None


def _saturation(rows, mode):
    """First length at which some seed fails to place every demand."""
    for length in LENGTHS:
        cells = [r for r in rows
                 if r.mode == mode and r.chain_length == length]
        if any(not r.ok for r in cells):
            return length
    return max(LENGTHS) + 1


def test_06a_containers_pay_more_cloud_at_the_longest_chains(trend_rows):
    feasible = [length for length in LENGTHS
                if _seed_mean(trend_rows, "vm-only", length, "cloud_charges") is not None
                and _seed_mean(trend_rows, "ct-only", length, "cloud_charges") is not None]
    top = max(feasible)
    ct = _seed_mean(trend_rows, "ct-only", top, "cloud_charges")
    vm = _seed_mean(trend_rows, "vm-only", top, "cloud_charges")
    print(f"length {top}: cloud charges ct {ct:.4f} vs vm {vm:.4f}")
    assert ct > vm


def test_06b_edge_opex_grows_with_length_and_vm_exceeds_ct(trend_rows):
    sat = {mode: _saturation(trend_rows, mode) for mode in MODES}
    for mode in MODES:
        means = [_seed_mean(trend_rows, mode, length, "edge_opex")
                 for length in LENGTHS if length <= sat[mode]]
        assert all(m is not None for m in means)
        for lo, hi in zip(means, means[1:]):
            assert hi >= lo - 1e-12, (mode, means)
    for length in LENGTHS:
        if length >= min(sat["vm-only"], sat["ct-only"]):
            break
        vm = _seed_mean(trend_rows, "vm-only", length, "edge_opex")
        ct = _seed_mean(trend_rows, "ct-only", length, "edge_opex")
        assert vm >= ct - 1e-12, (length, vm, ct)


def test_06c_vm_chains_replicate_no_more_than_ct_chains(trend_rows):
    common = [length for length in LENGTHS if length >= 5
              and _seed_mean(trend_rows, "vm-only", length, "n_rep") is not None
              and _seed_mean(trend_rows, "ct-only", length, "n_rep") is not None]
    assert common
    for length in common:
        vm = _seed_mean(trend_rows, "vm-only", length, "n_rep")
        ct = _seed_mean(trend_rows, "ct-only", length, "n_rep")
        assert vm <= ct + 1e-12, (
            f"length {length}: mean replications vm-only {vm:.2f} "
            f"> ct-only {ct:.2f}")


# -- gate 7: linear-model export/import round trip -----------------------


def test_07_linear_model_round_trip_reproduces_the_optimum(net7, toy_model):
    cases = []
    for length, mode, seed, k in ((1, "vm-only", 1, 1), (1, "ct-only", 2, 2),
                                  (2, "vm-ct", 3, 1)):
        sc, ids = tiny_instance(net7, length, mode, seed, k)
        cases.append((sc, ids, None))

    # a variant whose model carries migration terms
    sc, ids = tiny_instance(net7, 1, "vm-only", 4, 1)
    snap = {(sc.demand(ids[0]).sfc, 0): frozenset({6})}
    cases.append((sc, ids, snap))

    # a hand-built instance where one node offers two servers
    tsc = make_scenario(toy_model, [(0, 1, ("vm", "vm"))],
                        [(0, 10.0), (0, 6.0)])
    cases.append((tsc, [0, 1], None))

    for sc, ids, snap in cases:
        text = export_milp(sc, snapshot=snap, demands=ids)
        sol, objective = solve_lp(text)
        res = solve_exact(sc, snapshot=snap, demands=ids, guard_limit=10**6)
        assert res.best_state is not None
        assert abs(objective - res.best_cost.total) <= 1e-6
        st = import_solution(sol, sc, demands=ids, snapshot=snap)
        assert validate_all(st, sc, required=set(ids)) == []
        back = total_cost(st, sc, required=set(ids))
        assert abs(back.total - objective) <= 1e-6


# -- gate 8: CLI determinism ---------------------------------------------


def test_08_cli_reruns_write_byte_identical_results(tmp_path):
    exe = shutil.which("sfcplace")
    assert exe, "console script not installed"
    args = ["run", "--topology", str(NET7), "--lengths", "1..2",
            "--modes", "vm-only", "--alg", "grd,ff", "--seeds", "1..2",
            "--sweeps", "0"]
    blobs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--workers", "2"])):
        out = tmp_path / name
        proc = subprocess.run([exe, *args, *extra, "--out", str(out)],
                              capture_output=True, text=True, timeout=300,
                              env=dict(os.environ, SFCPLACE_WORKERS="1"))
        assert proc.returncode == 0, proc.stderr
        blobs.append((out / "results.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
