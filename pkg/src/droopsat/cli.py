"""Command-line interface: scenario generation, solving, simulation, comparison, verification."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import (BackendLookupError, ConfigError, ControllerInfeasibleError, DimensionError,
                     InvalidBoundsError, SolverResourceError, StateError)
from .harness import (comparison_csv, compare_controllers, closed_loop_simulate, dumps_scenario,
                      gen_synthetic_scenario, load_scenario, metrics_csv, plan_csv, solve_window,
                      trajectory_csv)
from .model import PRESETS
from .mpc import CLI_NAMES, ControllerConfig, build_problem
from .solver import SolveOptions, SubprocessBackend, available_backends, register_backend

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_RESOURCE = 3
EXIT_INPUT = 4

EXTERNAL_COMMAND = [sys.executable, "-m", "droopsat.external_solver", "{instance}", "{solution}"]


class InputError(Exception):
    pass


def _ensure_external_backend():
    if "external" not in available_backends():
        register_backend("external", SubprocessBackend(EXTERNAL_COMMAND, name="external"))


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _scenario(path):
    try:
        scenario, params, problems = load_scenario(path)
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise InputError(f"cannot load scenario {path}: {err}") from err
    if problems:
        raise InputError("invalid scenario: " + "; ".join(problems))
    return scenario, params


def _config(name, horizon):
    if name not in CLI_NAMES:
        raise InputError(f"unknown controller {name!r}; choose from {sorted(CLI_NAMES)}")
    return ControllerConfig(CLI_NAMES[name], horizon)


def _options(args):
    return SolveOptions(node_limit=args.node_limit, time_limit=args.time_limit)


def _read_trace(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                if rows:
                    raise InputError(f"non-numeric row in trace {path}: {line!r}")
    if not rows:
        raise InputError(f"trace {path} has no data rows")
    return np.array(rows, float)


# --- subcommands ---------------------------------------------------------


def cmd_gen_scenario(args):
    params = PRESETS[args.preset]()
    if args.ts is not None:
        params = params.replace(ts=args.ts)
    scenario = gen_synthetic_scenario(args.seed, args.days, params, args.width)
    _write(args.out, dumps_scenario(scenario, params))
    return EXIT_OK


def cmd_solve(args):
    scenario, params = _scenario(args.scenario)
    config = _config(args.controller, args.horizon)
    if scenario.horizon < args.horizon:
        raise InputError(f"scenario has {scenario.horizon} steps, horizon needs {args.horizon}")
    window = scenario.window(0, args.horizon)
    if args.export_mps:
        from .mps import write_mps

        write_mps(build_problem(config, window, params), args.export_mps)
    sol = solve_window(config, window, params, args.backend, _options(args))
    if not sol.feasible:
        print(f"{config.label}: {sol.status}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out, plan_csv(sol.plan))
    print(f"{config.label}: status={sol.status} predicted_cost={sol.predicted_cost!r}",
          file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args):
    scenario, params = _scenario(args.scenario)
    config = _config(args.controller, args.horizon)
    rule = args.realization
    if rule.startswith("trace:"):
        rule = _read_trace(rule[len("trace:"):])
    elif rule not in ("min", "max"):
        raise InputError("realization must be min, max or trace:<file>")
    try:
        record = closed_loop_simulate(config, scenario, params, rule, args.backend,
                                      _options(args), args.steps)
    except ControllerInfeasibleError as err:
        partial = getattr(err, "record", None)
        if partial is not None and partial.steps:
            _write(args.out, trajectory_csv(partial))
        print(str(err), file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(args.out, trajectory_csv(record))
    if args.metrics_out:
        _write(args.metrics_out, metrics_csv({record.controller: record.metrics()}))
    return EXIT_OK


def cmd_compare(args):
    scenario, params = _scenario(args.scenario)
    names = [n.strip() for n in args.controllers.split(",") if n.strip()]
    if not names:
        raise InputError("no controllers given")
    configs = [_config(n, args.horizon) for n in names]
    comp = compare_controllers(configs, scenario, params, args.backend, _options(args),
                               closed_loop=not args.open_loop_only, steps=args.steps)
    _write(args.out, comparison_csv(comp))
    if args.metrics_out:
        _write(args.metrics_out, metrics_csv(comp.metrics))
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_verification_suite

    report = run_verification_suite(seed=args.seed, mutation=args.mutation)
    _write(args.report, json.dumps(report, indent=1, sort_keys=True) + "\n")
    return EXIT_OK if report["all_passed"] else 1


# --- parser --------------------------------------------------------------


def _solver_args(p):
    p.add_argument("--backend", default="reference",
                   help="MILP backend: reference, highs or external")
    p.add_argument("--node-limit", type=int, default=200_000)
    p.add_argument("--time-limit", type=float, default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="droopsat", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenario", help="write a seeded synthetic scenario JSON")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--days", type=int, default=2)
    p.add_argument("--width", type=float, default=0.1)
    p.add_argument("--preset", choices=sorted(PRESETS), default="table1")
    p.add_argument("--ts", type=float, default=None, help="override sampling time in hours")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("solve", help="solve one open-loop problem at the scenario start")
    p.add_argument("--scenario", required=True)
    p.add_argument("--controller", required=True, choices=sorted(CLI_NAMES))
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--export-mps", default=None, help="also write the MILP instance here")
    p.add_argument("--out", default="-")
    _solver_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="closed-loop receding-horizon simulation")
    p.add_argument("--scenario", required=True)
    p.add_argument("--controller", required=True, choices=sorted(CLI_NAMES))
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--realization", default="min")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="-")
    p.add_argument("--metrics-out", default=None)
    _solver_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="open-loop comparison along a prescient closed loop")
    p.add_argument("--scenario", required=True)
    p.add_argument("--controllers", default="prescient,mm,sat-mm,res-mm,sat-res-mm",
                   help="comma-separated controller names")
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--open-loop-only", action="store_true")
    p.add_argument("--out", default="-")
    p.add_argument("--metrics-out", default=None)
    _solver_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the randomized property suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mutation", default=None, help="inject a known defect (flip-load-sign)")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "backend", None) == "external":
        _ensure_external_backend()
    try:
        if getattr(args, "horizon", 1) < 1:
            raise InputError("horizon must be >= 1")
        return args.func(args)
    except SolverResourceError as err:
        print(f"solver resource limit: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    except ControllerInfeasibleError as err:
        print(str(err), file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, ConfigError, DimensionError, InvalidBoundsError, StateError,
            BackendLookupError, OSError) as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
