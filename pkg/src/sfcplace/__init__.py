"""Placement of hybrid VM/container service function chains on edge-cloud networks.

The package models an operator network (edge nodes with servers, one
unbounded cloud site), generates chained-VNF workloads between edge
pairs, and places chains with constructive heuristics, a greedy with
local search, or an exhaustive branch-and-bound — minimizing edge
operating expenses, cloud usage charges, and delay-budget penalties.
States can be exported as mixed-integer linear programs and solutions
imported back for cross-checking.  The harness runs seeded two-phase
experiments (bootstrap placement, then full placement against its
snapshot, which prices migrations and replications) across chain-length,
mode, algorithm, and seed grids.
"""

from .topology import (Link, NetworkModel, Node, Path, Server, TopologyError,
                       build_path_catalog, load_topology)
from .workload import (MODES, Partition, Scenario, Sfc, TrafficDemand,
                       VnfType, default_vnf_catalog, generate_scenario,
                       load_scenario, partition_from_flags, save_scenario,
                       select_initial_demands)
from .state import (PlacementState, StateError, UtilizationReport, Violation,
                    assign_sync_routes, count_migrations, count_replications,
                    dump_state, instance_map, link_loads, load_state,
                    server_loads, take_snapshot, utilization, validate_all)
from .cost import (CostBreakdown, DelayBreakdown, InvalidStateError,
                   demand_delay, downtime, edge_opex, cloud_charges, penalty,
                   processing_delay, service_delays, total_cost)
from .heuristics import (ALGORITHMS, HeuristicConfig, PlacementError,
                         find_new_incumbent, greedy_place, simple_placement)
from .exact import (ExactGuardError, ExactResult, SolutionImportError,
                    assignment_census, export_milp, import_solution,
                    solve_exact)
from .harness import (CSV_FIELDS, PLAN_ALGORITHMS, SERIES, ExperimentPlan,
                      ResultRow, load_network, report, run_plan,
                      run_two_phase, split_seed, write_results)

__version__ = "0.1.0"
