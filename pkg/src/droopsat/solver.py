"""MILP backends: a reference branch-and-bound and a pluggable registry.

The reference backend is a best-first branch-and-bound on binary variables.
Each node solves the LP relaxation with HiGHS' dual simplex (via highspy),
warm-started from the parent basis. It has no cuts, presolve or primal
heuristics and is meant for desk-scale instances (a few hundred binaries
when switch decisions are branched on first).
"""
from __future__ import annotations

import heapq
import json
import os
import subprocess
import tempfile
import time
from dataclasses import dataclass

import numpy as np
import highspy
from scipy import optimize

from .errors import (BackendLookupError, DuplicateBackendError, NumericalError,
                     SolverResourceError)
from .milp import EQ, GE, LE, MilpInstance, MilpSolution


@dataclass(frozen=True)
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = float("nan")
    x: np.ndarray | None = None


@dataclass(frozen=True)
class SolveOptions:
    gap_abs: float = 1e-6
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    node_limit: int = 200_000
    time_limit: float | None = None
    branching: str = "most_fractional"
    keep_node_log: bool = False

    def __post_init__(self):
        if min(self.gap_abs, self.int_tol, self.feas_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.branching != "most_fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")


class LpEngine:
    """Reusable HiGHS dual-simplex model of an instance's LP relaxation.

    Only column bounds change between solves, so each solve can be
    warm-started from a parent basis.
    """

    def __init__(self, inst: MilpInstance, feas_tol: float = 1e-7):
        self.inst = inst
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("primal_feasibility_tolerance", feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", feas_tol)
        lp = highspy.HighsLp()
        lp.num_col_ = inst.n_vars
        lp.num_row_ = inst.n_rows
        lp.col_cost_ = np.asarray(inst.c, float)
        lp.col_lower_ = np.asarray(inst.lb, float)
        lp.col_upper_ = np.asarray(inst.ub, float)
        inf = highspy.kHighsInf
        row_lo = np.where(inst.sense == LE, -inf, inst.rhs)
        row_hi = np.where(inst.sense == GE, inf, inst.rhs)
        lp.row_lower_ = np.asarray(row_lo, float)
        lp.row_upper_ = np.asarray(row_hi, float)
        A = inst.A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        h.passModel(lp)
        self._h = h
        self._cols = np.arange(inst.n_vars, dtype=np.int32)

    def solve(self, lb=None, ub=None, basis=None):
        """Return ``(LpResult, basis)``; the basis is None unless optimal."""
        inst = self.inst
        lb = inst.lb if lb is None else lb
        ub = inst.ub if ub is None else ub
        if np.any(lb > ub):
            return LpResult("infeasible"), None
        h = self._h
        if inst.n_vars:
            h.changeColsBounds(inst.n_vars, self._cols, np.asarray(lb, float), np.asarray(ub, float))
        if basis is not None:
            h.setBasis(basis)
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kOptimal:
            x = np.asarray(h.getSolution().col_value, float)
            obj = float(inst.c @ x) + inst.objective_offset
            return LpResult("optimal", obj, x), h.getBasis()
        if status == highspy.HighsModelStatus.kInfeasible:
            return LpResult("infeasible"), None
        if status in (highspy.HighsModelStatus.kUnbounded,
                      highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # resolve the ambiguity from a cold start
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
            if status == highspy.HighsModelStatus.kInfeasible:
                return LpResult("infeasible"), None
            if status == highspy.HighsModelStatus.kOptimal:
                return self.solve(lb, ub)
            return LpResult("unbounded"), None
        raise NumericalError(f"LP solver failed with status {h.modelStatusToString(status)}")


def solve_lp(inst: MilpInstance, lb=None, ub=None, engine: LpEngine | None = None,
             feas_tol: float = 1e-7) -> LpResult:
    """Solve the LP relaxation of ``inst`` (integrality dropped)."""
    engine = engine or LpEngine(inst, feas_tol)
    return engine.solve(lb, ub)[0]


class ReferenceBackend:
    name = "reference"
    accepts_start = True

    def solve(self, inst: MilpInstance, options: SolveOptions | None = None,
              start=None) -> MilpSolution:
        return branch_and_bound(inst, options or SolveOptions(), start)


def _most_fractional(x, bin_idx, int_tol):
    if bin_idx.size == 0:
        return -1
    frac = x[bin_idx] - np.floor(x[bin_idx])
    dist = np.minimum(frac, 1.0 - frac)
    k = int(np.argmax(dist))  # first maximal entry -> lowest index on ties
    return int(bin_idx[k]) if dist[k] > int_tol else -1


def _branch_variable(x, classes, int_tol):
    """Most fractional binary of the highest priority class that has one."""
    for idx in classes:
        j = _most_fractional(x, idx, int_tol)
        if j >= 0:
            return j
    return -1


def accepts_start(inst: MilpInstance, x, tol: float = 1e-7) -> bool:
    """Whether ``x`` is a feasible, binary-integral point of ``inst``."""
    if x is None:
        return False
    x = np.asarray(x, float)
    if x.shape != (inst.n_vars,):
        return False
    b = x[inst.binary]
    return bool(np.all(np.abs(b - np.rint(b)) <= tol) and inst.violation(x) <= tol)


def branch_and_bound(inst: MilpInstance, options: SolveOptions, start=None) -> MilpSolution:
    """Best-first branch-and-bound over the binary variables of ``inst``.

    ``start`` is an optional known feasible point used as the first
    incumbent; it is ignored when infeasible.
    """
    t0 = time.perf_counter()
    engine = LpEngine(inst, options.feas_tol)
    bin_idx = np.flatnonzero(inst.binary)
    classes = [bin_idx[inst.priority[bin_idx] == p]
               for p in sorted(set(inst.priority[bin_idx].tolist()), reverse=True)]
    log = [] if options.keep_node_log else None

    root, root_basis = engine.solve()
    if root.status == "unbounded":
        raise NumericalError("LP relaxation unbounded; all variables must have finite bounds")
    if root.status == "infeasible":
        return MilpSolution("infeasible", nodes=1, backend="reference", node_log=log or [])

    best_x, best_obj = None, np.inf
    if start is not None and np.shape(start) == (inst.n_vars,):
        lb, ub = inst.lb.copy(), inst.ub.copy()
        r = np.clip(np.rint(np.asarray(start, float)[bin_idx]), lb[bin_idx], ub[bin_idx])
        lb[bin_idx] = ub[bin_idx] = r
        fixed, _ = engine.solve(lb, ub)
        if fixed.status == "optimal":
            best_x, best_obj = fixed.x, fixed.objective
    counter = 0

    def key(bound, depth):
        # best-first on the bound; bounds within the same gap_abs bucket are
        # treated as tied and the deeper node wins, which dives to incumbents
        return (np.floor(bound / options.gap_abs), -depth)

    heap = [(*key(root.objective, 0), counter, root.objective, 0, inst.lb.copy(), inst.ub.copy(), root, root_basis)]
    nodes = 1
    global_bound = root.objective
    status = "optimal"

    def polish(lb, ub, x):
        # fix binaries at their rounded values and re-solve for clean continuous values
        fixed_lb, fixed_ub = lb.copy(), ub.copy()
        r = np.rint(x[bin_idx])
        fixed_lb[bin_idx] = r
        fixed_ub[bin_idx] = r
        res, _ = engine.solve(fixed_lb, fixed_ub)
        if res.status == "optimal":
            return res.objective, res.x
        xr = x.copy()
        xr[bin_idx] = r
        return inst.objective(xr), xr

    while heap:
        item = heapq.heappop(heap)
        bound, depth, lb, ub, lp, basis = item[3:]
        global_bound = bound
        if bound >= best_obj - options.gap_abs:
            continue
        if nodes >= options.node_limit or (
                options.time_limit is not None and time.perf_counter() - t0 > options.time_limit):
            heapq.heappush(heap, item)
            status = "gap_limit"
            break
        j = _branch_variable(lp.x, classes, options.int_tol)
        if j < 0:
            obj, x = polish(lb, ub, lp.x)
            if obj < best_obj:
                best_obj, best_x = obj, x
            continue
        first = 1.0 if lp.x[j] >= 0.5 else 0.0
        for val in (first, 1.0 - first):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            child, cbasis = engine.solve(clb, cub, basis)
            nodes += 1
            if log is not None:
                log.append((bound, child.objective if child.status == "optimal" else np.inf))
            if child.status != "optimal" or child.objective >= best_obj - options.gap_abs:
                continue
            counter += 1
            heapq.heappush(heap, (*key(child.objective, depth + 1), counter, child.objective,
                                  depth + 1, clb, cub, child, cbasis))

    if best_x is None:
        if status == "gap_limit":
            raise SolverResourceError(f"node/time limit reached after {nodes} nodes without incumbent")
        return MilpSolution("infeasible", nodes=nodes, backend="reference", node_log=log or [])
    if status == "gap_limit":
        global_bound = min(h[3] for h in heap) if heap else best_obj
    else:
        global_bound = best_obj
    return MilpSolution(status, objective=best_obj, x=best_x, bound=global_bound,
                        nodes=nodes, backend="reference", node_log=log or [])


class HighsMilpBackend:
    """scipy's bundled HiGHS MILP solver, used as an in-process external backend."""

    name = "highs"

    def solve(self, inst: MilpInstance, options: SolveOptions | None = None) -> MilpSolution:
        options = options or SolveOptions()
        cons = []
        for code, lo_fn, hi_fn in ((LE, lambda r: -np.inf, lambda r: r),
                                   (GE, lambda r: r, lambda r: np.inf),
                                   (EQ, lambda r: r, lambda r: r)):
            rows = np.flatnonzero(inst.sense == code)
            if rows.size:
                r = inst.rhs[rows]
                cons.append(optimize.LinearConstraint(inst.A[rows], lo_fn(r), hi_fn(r)))
        milp_opts = {"mip_rel_gap": 0.0, "presolve": True}
        if options.time_limit is not None:
            milp_opts["time_limit"] = options.time_limit
        res = optimize.milp(inst.c, constraints=cons, integrality=inst.binary.astype(int),
                            bounds=optimize.Bounds(inst.lb, inst.ub), options=milp_opts)
        if res.status == 0:
            return MilpSolution("optimal", float(res.fun) + inst.objective_offset, np.asarray(res.x),
                                bound=float(res.fun) + inst.objective_offset, backend=self.name)
        if res.status == 2:
            return MilpSolution("infeasible", backend=self.name)
        if res.x is not None:
            return MilpSolution("gap_limit", float(res.fun) + inst.objective_offset,
                                np.asarray(res.x), backend=self.name)
        raise SolverResourceError(f"HiGHS stopped without incumbent: {res.message}")


class SubprocessBackend:
    """Delegate solving to an external program.

    ``command`` is an argv list in which ``{instance}`` and ``{solution}`` are
    replaced by file paths. The program reads the free-format MPS instance and
    writes a JSON solution ``{"status", "objective", "values": {name: value}}``.
    """

    def __init__(self, command: list[str], name: str = "subprocess", timeout: float | None = None):
        self.command = list(command)
        self.name = name
        self.timeout = timeout

    def solve(self, inst: MilpInstance, options: SolveOptions | None = None) -> MilpSolution:
        from .mps import write_mps

        with tempfile.TemporaryDirectory() as tmp:
            inst_path = os.path.join(tmp, "instance.mps")
            sol_path = os.path.join(tmp, "solution.json")
            write_mps(inst, inst_path)
            argv = [a.replace("{instance}", inst_path).replace("{solution}", sol_path)
                    for a in self.command]
            subprocess.run(argv, check=True, timeout=self.timeout)
            with open(sol_path) as fh:
                payload = json.load(fh)
        return solution_from_payload(inst, payload, self.name)


def solution_from_payload(inst: MilpInstance, payload: dict, backend: str) -> MilpSolution:
    status = payload["status"]
    if status == "infeasible":
        return MilpSolution("infeasible", backend=backend)
    values = payload["values"]
    x = np.array([float(values[n]) for n in inst.names])
    return MilpSolution(status, float(payload["objective"]), x, backend=backend)


_BACKENDS: dict[str, object] = {"reference": ReferenceBackend(), "highs": HighsMilpBackend()}


def register_backend(name: str, backend) -> str:
    if name in _BACKENDS:
        raise DuplicateBackendError(f"backend {name!r} already registered")
    if not callable(getattr(backend, "solve", None)):
        raise TypeError("backend must provide solve(instance, options)")
    _BACKENDS[name] = backend
    return name


def unregister_backend(name: str) -> None:
    if name in ("reference", "highs"):
        raise ValueError("built-in backends cannot be removed")
    _BACKENDS.pop(name, None)


def get_backend(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise BackendLookupError(f"no backend named {name!r}; known: {sorted(_BACKENDS)}") from None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def polish(inst: MilpInstance, sol: MilpSolution, feas_tol: float = 1e-9) -> MilpSolution:
    """Round binaries of an incumbent and re-solve the continuous part.

    Removes the slack that integrality tolerance leaves inside big-M rows.
    The original point is kept if the fixed LP fails or is worse.
    """
    if not sol.has_solution or not inst.binary.any():
        return sol
    bin_idx = np.flatnonzero(inst.binary)
    lb, ub = inst.lb.copy(), inst.ub.copy()
    r = np.clip(np.rint(sol.x[bin_idx]), lb[bin_idx], ub[bin_idx])
    lb[bin_idx] = ub[bin_idx] = r
    res = solve_lp(inst, lb, ub, feas_tol=feas_tol)
    if res.status != "optimal" or res.objective > sol.objective + 1e-7:
        return sol
    x = res.x.copy()
    x[bin_idx] = r
    return MilpSolution(sol.status, res.objective, x, min(sol.bound, res.objective)
                        if np.isfinite(sol.bound) else sol.bound, sol.nodes, sol.backend,
                        sol.node_log)


def solve_milp(inst: MilpInstance, options: SolveOptions | None = None,
               backend: str = "reference", start=None) -> MilpSolution:
    """Solve with a registered backend and polish the incumbent.

    ``start`` (a feasible point) is forwarded to backends that declare
    ``accepts_start``.
    """
    be = get_backend(backend)
    options = options or SolveOptions()
    if start is not None and getattr(be, "accepts_start", False):
        sol = be.solve(inst, options, start=start)
    else:
        sol = be.solve(inst, options)
    return polish(inst, sol)
