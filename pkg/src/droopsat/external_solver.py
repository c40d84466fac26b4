"""Stand-alone MPS solver speaking the subprocess backend protocol.

Usage: ``python -m droopsat.external_solver INSTANCE.mps SOLUTION.json``.
Solves with HiGHS and writes ``{"status", "objective", "values"}``.
"""
from __future__ import annotations

import argparse
import json
import sys

from .mps import read_mps
from .solver import HighsMilpBackend, SolveOptions


def solve_file(instance_path: str, solution_path: str, time_limit: float | None = None) -> str:
    inst = read_mps(instance_path)
    sol = HighsMilpBackend().solve(inst, SolveOptions(time_limit=time_limit))
    payload = {"status": sol.status}
    if sol.x is not None:
        payload["objective"] = sol.objective
        payload["values"] = {n: float(v) for n, v in zip(inst.names, sol.x)}
    with open(solution_path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return sol.status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="droopsat-external-solver")
    ap.add_argument("instance")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args(argv)
    solve_file(args.instance, args.solution, args.time_limit)
    return 0


if __name__ == "__main__":
    sys.exit(main())
