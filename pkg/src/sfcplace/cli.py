"""Command-line interface.

Four subcommands cover the artifact's workflows::

    sfcplace run         execute an experiment grid, write result tables
    sfcplace export-milp write an instance's linear model as an .lp file
    sfcplace validate    check a saved placement against its constraints
    sfcplace oracle      exhaustively solve a small instance

Integer list flags accept commas and ranges (``--lengths 1,3,5`` or
``--lengths 1..10``); mode and algorithm lists are comma-separated.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cost import total_cost
from .exact import ExactGuardError, assignment_census, export_milp, solve_exact
from .harness import (PLAN_ALGORITHMS, ExperimentPlan, load_network, report,
                      run_plan, write_results)
from .state import load_state, take_snapshot, validate_all
from .workload import MODES, generate_scenario

__all__ = ["main"]


def _int_list(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list: {text!r}")
    return tuple(out)


def _str_list(text: str) -> tuple[str, ...]:
    items = tuple(p.strip() for p in text.split(",") if p.strip())
    if not items:
        raise argparse.ArgumentTypeError(f"empty list: {text!r}")
    return items


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--topology", required=True, help="topology file")
    p.add_argument("--length", type=int, required=True,
                   help="VNFs per chain")
    p.add_argument("--mode", choices=MODES, required=True,
                   help="execution environment of the VNFs")
    p.add_argument("--seed", type=int, required=True, help="scenario seed")
    p.add_argument("--sfcs", type=int, default=0, metavar="N",
                   help="restrict to the demands of the first N chains "
                        "(0 = all)")
    p.add_argument("--d-net", type=float, default=5.0,
                   help="fixed network delay offset in ms")
    p.add_argument("--d-dwt", type=float, default=27.5,
                   help="downtime per migration in ms")
    p.add_argument("--penalty-fraction", type=float, default=0.1,
                   help="penalty rate as a fraction of the chain's selling price")


def _scenario_from(args):
    model = load_network(args.topology)
    scenario = generate_scenario(model, args.length, args.mode, args.seed,
                                 d_net=args.d_net, d_dwt=args.d_dwt,
                                 penalty_fraction=args.penalty_fraction)
    demands = None
    if args.sfcs:
        demands = [d.id for s in scenario.sfcs[:args.sfcs] for d in s.demands]
    return scenario, demands


def _cmd_run(args) -> int:
    plan = ExperimentPlan(topology=args.topology,
                          chain_lengths=args.lengths,
                          modes=args.modes,
                          algorithms=args.alg,
                          seeds=args.seeds,
                          r_initial=args.r_initial,
                          penalty_fraction=args.penalty_fraction,
                          d_net=args.d_net, d_dwt=args.d_dwt,
                          sweeps=args.sweeps,
                          exact_guard=args.exact_guard)
    rows = run_plan(plan, workers=args.workers)
    out = Path(args.out)
    csv_path = write_results(rows, out)
    summary = report(rows, out)
    bad = sum(1 for r in rows if not r.ok)
    print(f"{len(rows)} rows -> {csv_path}")
    print(f"summary -> {summary}" + (f" ({bad} incomplete rows)" if bad else ""))
    return 0


def _cmd_export_milp(args) -> int:
    scenario, demands = _scenario_from(args)
    snapshot = None
    if args.snapshot_state:
        snapshot = take_snapshot(load_state(args.snapshot_state), scenario)
    text = export_milp(scenario, snapshot=snapshot, demands=demands)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({len(text.splitlines())} lines)")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args) -> int:
    scenario, demands = _scenario_from(args)
    state = load_state(args.state)
    required = None
    if not args.partial:
        required = (set(demands) if demands is not None
                    else {d.id for d in scenario.all_demands()})
    violations = validate_all(state, scenario, required=required)
    if violations:
        for v in violations:
            print(v)
        print(f"INVALID: {len(violations)} violations")
        return 1
    cb = total_cost(state, scenario, required=required, validate=False)
    print(f"VALID: total {cb.total:.9g} $/h (edge {cb.edge_opex:.9g}, "
          f"cloud {cb.cloud_charges:.9g}, penalties {cb.penalties:.9g}), "
          f"{cb.n_mgr} migrations, {cb.n_rep} replications")
    return 0


def _cmd_oracle(args) -> int:
    scenario, demands = _scenario_from(args)
    census = assignment_census(scenario, demands=demands)
    print(f"assignment census: {census:.3g}")
    try:
        res = solve_exact(scenario, demands=demands,
                          forbid_replication=args.forbid_replication,
                          guard_limit=args.guard,
                          node_limit=args.node_limit,
                          time_limit=args.time_limit)
    except ExactGuardError as exc:
        print(f"refused: {exc}")
        return 2
    print(f"nodes explored: {res.nodes_explored}, leaves: {res.leaves}, "
          f"proven optimal: {res.proven_optimal}")
    if res.best_state is None:
        print("no feasible placement found")
        return 1
    cb = res.best_cost
    print(f"optimum {cb.total:.9g} $/h (edge {cb.edge_opex:.9g}, "
          f"cloud {cb.cloud_charges:.9g}, penalties {cb.penalties:.9g})")
    if args.out:
        from .state import dump_state
        dump_state(res.best_state, args.out)
        print(f"state -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfcplace",
        description="Placement of hybrid VM/container service chains on "
                    "edge-cloud networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an experiment grid")
    p.add_argument("--topology", required=True, help="topology file")
    p.add_argument("--lengths", type=_int_list, required=True,
                   help="chain lengths, e.g. 1..10 or 2,4,6")
    p.add_argument("--modes", type=_str_list, default=tuple(MODES),
                   help="comma-separated subset of " + ",".join(MODES))
    p.add_argument("--alg", type=_str_list, default=("grd",),
                   help="comma-separated subset of " +
                        ",".join(PLAN_ALGORITHMS))
    p.add_argument("--seeds", type=_int_list, default=tuple(range(1, 11)),
                   help="master seeds, e.g. 1..10")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--r-initial", type=float, default=0.3,
                   help="probability a demand is in the phase-1 subset")
    p.add_argument("--penalty-fraction", type=float, default=0.1)
    p.add_argument("--d-net", type=float, default=5.0)
    p.add_argument("--d-dwt", type=float, default=27.5)
    p.add_argument("--sweeps", type=int, default=1,
                   help="greedy local-search rounds (0 = construction only)")
    p.add_argument("--exact-guard", type=int, default=1000)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel cell workers (default: SFCPLACE_WORKERS "
                        "or 1)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("export-milp", help="write an instance's linear model")
    _add_scenario_args(p)
    p.add_argument("--snapshot-state", default=None,
                   help="phase-1 state file; enables migration and downtime "
                        "terms")
    p.add_argument("--out", default=None, help=".lp output file (default "
                   "stdout)")
    p.set_defaults(func=_cmd_export_milp)

    p = sub.add_parser("validate", help="check a saved placement")
    _add_scenario_args(p)
    p.add_argument("--state", required=True, help="placement state file")
    p.add_argument("--partial", action="store_true",
                   help="accept states that route only a subset of demands")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("oracle", help="exhaustively solve a small instance")
    _add_scenario_args(p)
    p.add_argument("--guard", type=int, default=1000,
                   help="refuse instances above this size product")
    p.add_argument("--node-limit", type=int, default=2_000_000)
    p.add_argument("--time-limit", type=float, default=120.0)
    p.add_argument("--forbid-replication", action="store_true",
                   help="restrict every chain slot to a single instance")
    p.add_argument("--out", default=None, help="write the optimal state here")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
