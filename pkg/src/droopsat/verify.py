"""Randomized property suites backing the ``verify`` command.

Each suite draws small random instances from a seeded generator, checks
one structural claim about the dispatch model or the endpoint MILP
reformulation, and reports counts plus serialized failing cases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import dispatch_step, solve_rho, storage_dynamic_limits_path, storage_transform_path
from .model import ControlPlan, CostWeights, MicrogridParams, Scenario, table1_params
from .mpc import ControllerConfig, build_problem, fix_controls, lift_plan
from .oracles import GridSpec, bisection_rho, grid_feasibility, grid_worst_cost
from .solver import SolveOptions, solve_milp

MUTATIONS = ("flip-load-sign",)


@dataclass
class SuiteResult:
    name: str
    instances: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)
    max_failures_kept: int = 5

    @property
    def failed(self) -> int:
        return self.instances - self.passed

    def record(self, ok: bool, case: dict | None = None) -> None:
        self.instances += 1
        if ok:
            self.passed += 1
        elif len(self.failures) < self.max_failures_kept and case is not None:
            self.failures.append(_jsonable(case))

    def to_dict(self) -> dict:
        return {"instances": self.instances, "passed": self.passed, "failed": self.failed,
                "failures": self.failures}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, MicrogridParams):
        return obj.to_dict()
    return obj


# --- random instances ----------------------------------------------------


def random_params(rng: np.random.Generator, n_conv=None, n_storage=None, n_renewable=None,
                  n_load: int = 1, ts=None) -> MicrogridParams:
    """Small random microgrid honoring the parameter sign conventions."""
    T = int(rng.integers(0, 3)) if n_conv is None else n_conv
    S = int(rng.integers(0, 3)) if n_storage is None else n_storage
    R = int(rng.integers(0, 3)) if n_renewable is None else n_renewable
    if T + S + R == 0:
        S = 1
    nu = T + S + R
    p_min = np.concatenate([rng.uniform(0.0, 0.4, T), -rng.uniform(0.3, 1.5, S), rng.uniform(0.0, 0.2, R)])
    p_max = np.concatenate([rng.uniform(0.6, 1.5, T), rng.uniform(0.3, 1.5, S), rng.uniform(0.5, 1.5, R)])
    cap = p_max[T + S:].copy()
    span = rng.uniform(0.5, 3.0, nu)
    chi = rng.uniform(0.2, 2.0, nu)
    chi[rng.random(nu) < 0.15] = 0.0
    if not np.any(chi > 0):
        chi[0] = 1.0
    x_max = rng.uniform(1.0, 6.0, S)
    return MicrogridParams(
        n_conv=T, n_storage=S, n_renewable=R, n_load=n_load,
        u_min=-span, u_max=span, p_min=p_min, p_max=p_max,
        x_min=np.zeros(S), x_max=x_max, chi=chi,
        ts=float(rng.choice([0.25, 0.5, 1.0])) if ts is None else ts,
        weights=CostWeights(c_t=rng.uniform(0.5, 1.5, T), c_on=rng.uniform(0.0, 0.4, T),
                            c_sw=rng.uniform(0.0, 0.5, T), c_s=rng.uniform(0.1, 1.0, S)),
        renewable_cap=cap,
    )


def random_step_inputs(rng: np.random.Generator, params: MicrogridParams):
    """Random ``(u, delta, x_prev, w)`` for one dispatch step."""
    u = rng.uniform(params.u_min, params.u_max)
    delta = rng.integers(0, 2, params.n_conv)
    x_prev = rng.uniform(params.x_min, params.x_max)
    if params.n_storage and rng.random() < 0.2:
        # exercise the energy boundaries
        x_prev = np.where(rng.random(params.n_storage) < 0.5, params.x_min, params.x_max)
    w_r = rng.uniform(0.0, params.renewable_cap)
    capacity = params.p_max.sum()
    w_d = -rng.uniform(0.0, 1.2 * capacity / params.n_load, params.n_load)
    return u, delta, x_prev, np.concatenate([w_r, w_d])


def flat_run_inputs(rng: np.random.Generator, params: MicrogridParams):
    """Inputs whose balance is exactly zero on an interval of rho.

    Every drooping unit is pushed to its upper limit and the load is set to
    absorb exactly that total.
    """
    from .dispatch import unit_terms

    u, delta, x_prev, w = random_step_inputs(rng, params)
    lo, hi, _, _, _ = unit_terms(u, delta, x_prev, w, params)
    w = w.copy()
    R = params.n_renewable
    w[R:] = 0.0
    w[R] = -float(hi.sum())
    return u, delta, x_prev, w


def _perturb_up(rng, params, x_prev, w):
    """A componentwise larger (x, w) pair, staying inside the admissible boxes."""
    x2 = x_prev + rng.uniform(0.0, 1.0, x_prev.shape) * (params.x_max - x_prev)
    w2 = w.copy()
    R = params.n_renewable
    w2[:R] = w[:R] + rng.uniform(0.0, 1.0, R) * (params.renewable_cap - w[:R])
    w2[R:] = w[R:] + rng.uniform(0.0, 1.0, w[R:].shape) * (-w[R:])
    # occasionally leave one side untouched to test each argument alone
    pick = rng.random()
    if pick < 0.25:
        x2 = x_prev.copy()
    elif pick < 0.5:
        w2 = w.copy()
    return x2, w2


def _mutated_rho(u, delta, x, w, params, mutation):
    if mutation == "flip-load-sign":
        w = np.asarray(w, float).copy()
        w[params.n_renewable:] *= -1.0
    return solve_rho(u, delta, x, w, params)[0]


# --- dispatch-level suites -----------------------------------------------


def _params_for(rng, params, k):
    return params if (params is not None and k % 2 == 0) else random_params(rng)


def rho_monotone_suite(rng, n: int = 1000, params=None, mutation=None, tol: float = 1e-9) -> SuiteResult:
    """rho is non-increasing in the storage energy and the disturbance."""
    res = SuiteResult("rho_monotone")
    for k in range(n):
        P = _params_for(rng, params, k)
        u, delta, x1, w1 = random_step_inputs(rng, P)
        x2, w2 = _perturb_up(rng, P, x1, w1)
        r1 = _mutated_rho(u, delta, x1, w1, P, mutation)
        r2 = _mutated_rho(u, delta, x2, w2, P, mutation)
        res.record(r2 <= r1 + tol, {"params": P, "u": u, "delta": delta, "x1": x1, "w1": w1,
                                    "x2": x2, "w2": w2, "rho1": r1, "rho2": r2})
    return res


def step_monotone_suite(rng, n: int = 1000, params=None, tol: float = 1e-9) -> SuiteResult:
    """With common controls, larger (x, w) gives lower rho and conventional power, higher energy."""
    res = SuiteResult("step_monotone")
    for k in range(n):
        P = _params_for(rng, params, k)
        u, delta, x1, w1 = random_step_inputs(rng, P)
        x2, w2 = _perturb_up(rng, P, x1, w1)
        a = dispatch_step(x1, u, delta, w1, P)
        b = dispatch_step(x2, u, delta, w2, P)
        ok = (b.rho <= a.rho + tol and np.all(b.p[P.conv] <= a.p[P.conv] + tol)
              and np.all(b.x >= a.x - tol))
        res.record(ok, {"params": P, "u": u, "delta": delta, "x1": x1, "w1": w1, "x2": x2, "w2": w2})
    return res


def rho_oracle_suite(rng, n: int = 1000, params=None, tol: float = 1e-9,
                     flat_fraction: float = 0.25) -> SuiteResult:
    """Breakpoint-scan root equals the bisection oracle, including flat runs."""
    res = SuiteResult("rho_oracle_agreement")
    for k in range(n):
        P = _params_for(rng, params, k)
        gen = flat_run_inputs if rng.random() < flat_fraction else random_step_inputs
        u, delta, x, w = gen(rng, P)
        a = solve_rho(u, delta, x, w, P)[0]
        b = bisection_rho(u, delta, x, w, P)
        res.record(abs(a - b) <= tol, {"params": P, "u": u, "delta": delta, "x": x, "w": w,
                                       "scan": a, "bisection": b})
    return res


def storage_path_suite(rng, n: int = 1000, params=None, tol: float = 1e-12) -> SuiteResult:
    """Dynamic-limit and demand/energy-clamp storage models agree."""
    res = SuiteResult("storage_path_equivalence")
    for k in range(n):
        P = _params_for(rng, params, k)
        if P.n_storage == 0:
            P = random_params(rng, n_storage=1)
        _, _, x_prev, _ = random_step_inputs(rng, P)
        u_s = rng.uniform(P.u_min[P.stor], P.u_max[P.stor])
        rho = rng.uniform(-8.0, 8.0)
        p1, x1 = storage_dynamic_limits_path(x_prev, u_s, rho, P)
        p2, x2 = storage_transform_path(x_prev, u_s, rho, P)
        err = max(np.abs(p1 - p2).max(), np.abs(x1 - x2).max())
        res.record(err <= tol, {"params": P, "x_prev": x_prev, "u_s": u_s, "rho": rho, "err": err})
    return res


# --- endpoint-reformulation suites ---------------------------------------


def small_grid_instance(rng, horizon=None, n_renewable=None):
    """Instance with at most two disturbance dimensions and horizon <= 3."""
    N = int(rng.integers(1, 4)) if horizon is None else horizon
    R = int(rng.integers(0, 2)) if n_renewable is None else n_renewable
    P = random_params(rng, n_conv=int(rng.integers(0, 2)), n_storage=1, n_renewable=R)
    capacity = float(P.p_max.sum())
    nominal = np.column_stack([rng.uniform(0.0, P.renewable_cap[0], N) if R else np.zeros((N, 0)),
                               -rng.uniform(0.1, 1.1 * capacity, N)])
    width = rng.uniform(0.0, 0.4)
    w_min = nominal.copy()
    w_max = nominal.copy()
    if R:
        w_min[:, 0] = nominal[:, 0] * (1 - width)
        w_max[:, 0] = np.minimum(nominal[:, 0] * (1 + width), P.renewable_cap[0])
    w_min[:, R] = nominal[:, R] * (1 + width)
    w_max[:, R] = nominal[:, R] * (1 - width)
    x0 = rng.uniform(P.x_min, P.x_max)
    scen = Scenario(w_min=w_min, w_max=w_max, x0=x0, delta0=rng.integers(0, 2, P.n_conv))
    return P, scen


def random_plan(rng, params, horizon) -> ControlPlan:
    return ControlPlan(u=rng.uniform(params.u_min, params.u_max, (horizon, params.n_units)),
                       delta=rng.integers(0, 2, (horizon, params.n_conv)))


def endpoint_feasible(plan, scen, params) -> bool:
    from .dispatch import simulate_horizon

    n = plan.horizon
    return all(o.feasible for w in (scen.w_min[:n], scen.w_max[:n])
               for o in simulate_horizon(w, plan, scen.x0, params))


def _endpoint_feasible_case(rng, max_tries: int = 200):
    for _ in range(max_tries):
        P, scen = small_grid_instance(rng)
        for _ in range(10):
            plan = random_plan(rng, P, scen.horizon)
            if endpoint_feasible(plan, scen, P):
                return P, scen, plan
    raise RuntimeError("could not draw an endpoint-feasible plan")


def endpoint_sufficiency_suite(rng, n: int = 200, grid: GridSpec = GridSpec(5)) -> SuiteResult:
    """Plans feasible at both endpoint sequences are feasible on the whole grid."""
    res = SuiteResult("endpoint_sufficiency")
    for _ in range(n):
        P, scen, plan = _endpoint_feasible_case(rng)
        ok, violation = grid_feasibility(plan, scen, grid, P)
        res.record(ok, {"params": P, "w_min": scen.w_min, "w_max": scen.w_max, "x0": scen.x0,
                        "u": plan.u, "delta": plan.delta, "violation": violation})
    return res


def worst_case_suite(rng, n: int = 200, grid: GridSpec = GridSpec(5), tol: float = 1e-6) -> SuiteResult:
    """The grid's worst horizon cost is attained at ``w_min``."""
    from .dispatch import simulate_horizon
    from .model import horizon_cost

    res = SuiteResult("worst_case_at_w_min")
    for _ in range(n):
        P, scen, plan = _endpoint_feasible_case(rng)
        worst, arg = grid_worst_cost(plan, scen, grid, P)
        at_min = horizon_cost(simulate_horizon(scen.w_min[:plan.horizon], plan, scen.x0, P),
                              plan, scen.delta0, P)
        res.record(abs(worst - at_min) <= tol,
                   {"params": P, "w_min": scen.w_min, "w_max": scen.w_max, "x0": scen.x0,
                    "u": plan.u, "delta": plan.delta, "grid_worst": worst, "cost_at_w_min": at_min,
                    "argmax": arg})
    return res


def _unsat_feasible_case(rng, max_tries: int = 5000):
    """Draw a plan feasible for the non-saturated encoding (both endpoints)."""
    cfg_unsat = None
    for _ in range(max_tries):
        N = int(rng.integers(1, 3))
        P = random_params(rng, n_conv=1, n_storage=1, n_renewable=int(rng.integers(0, 2)))
        R = P.n_renewable
        x0 = rng.uniform(0.3, 0.7) * P.x_max
        load = -rng.uniform(0.2, 0.8, N) * P.p_max[0]
        width = rng.uniform(0.0, 0.1)
        w_r = rng.uniform(0.2, 0.6, (N, R)) * P.renewable_cap
        w_min = np.column_stack([w_r * (1 - width), load * (1 + width)])
        w_max = np.column_stack([w_r * (1 + width), load * (1 - width)])
        scen = Scenario(w_min=w_min, w_max=w_max, x0=x0, delta0=[int(rng.integers(0, 2))])
        mid = 0.5 * (P.p_min + P.p_max)
        u = np.tile(mid, (N, 1)) + rng.uniform(-0.1, 0.1, (N, P.n_units))
        if R:
            u[:, P.ren] = rng.uniform(P.p_min[P.ren] + 0.2, 1.5) * np.ones((N, R))
        u = np.clip(u, P.u_min, P.u_max)
        plan = ControlPlan(u=u, delta=np.ones((N, 1), int))
        cfg_unsat = ControllerConfig("res_droop_mm", N)
        inst = build_problem(cfg_unsat, scen, P, simplify=False)
        x = lift_plan(inst, cfg_unsat, scen, P, plan)
        if inst.violation(x) <= 1e-9:
            return P, scen, plan, inst, x
    raise RuntimeError("could not draw a feasible point of the non-saturated encoding")


def inclusion_suite(rng, n: int = 100, tol: float = 1e-9) -> SuiteResult:
    """Points feasible without saturation stay feasible, at equal cost, with saturation."""
    res = SuiteResult("feasible_set_inclusion")
    for _ in range(n):
        P, scen, plan, inst1, x1 = _unsat_feasible_case(rng)
        cfg_sat = ControllerConfig("sat_res_droop_mm", plan.horizon)
        inst2 = build_problem(cfg_sat, scen, P, simplify=False)
        x2 = lift_plan(inst2, cfg_sat, scen, P, plan)
        viol = inst2.violation(x2)
        gap = abs(inst1.objective(x1) - inst2.objective(x2))
        res.record(viol <= tol and gap <= tol,
                   {"params": P, "w_min": scen.w_min, "w_max": scen.w_max, "x0": scen.x0,
                    "u": plan.u, "delta": plan.delta, "violation": viol, "cost_gap": gap})
    return res


def counterexample_instance():
    """Two-unit instance separating the saturated and non-saturated encodings.

    The conventional set-point sits at its minimum power and the storage
    set-point at its maximum; set-points are pinned by their bounds. Both
    load endpoints are servable only if one unit saturates.
    """
    P = MicrogridParams(
        n_conv=1, n_storage=1, n_renewable=0, n_load=1,
        u_min=[0.2, 1.0], u_max=[0.2, 1.0], p_min=[0.2, -1.0], p_max=[1.0, 1.0],
        x_min=[0.0], x_max=[6.0], chi=[1.0, 1.0], ts=0.25,
        weights=CostWeights(c_t=[1.0], c_on=[0.2], c_sw=[0.3], c_s=[0.9]),
        renewable_cap=np.zeros(0),
    )
    scen = Scenario(w_min=[[-1.4]], w_max=[[-1.0]], x0=[3.0], delta0=[1])
    return P, scen


def counterexample_check(backend: str = "reference") -> dict:
    P, scen = counterexample_instance()
    out = {}
    for variant in ("sat_res_droop_mm", "res_droop_mm"):
        cfg = ControllerConfig(variant, 1)
        sol = solve_milp(build_problem(cfg, scen, P), SolveOptions(), backend=backend)
        out[variant] = sol.status
    out["separates"] = out["sat_res_droop_mm"] == "optimal" and out["res_droop_mm"] == "infeasible"
    return out


# --- driver --------------------------------------------------------------


DEFAULT_SIZES = {"rho_monotone": 1000, "step_monotone": 1000, "rho_oracle": 1000,
                 "storage_paths": 1000, "endpoint_sufficiency": 200, "worst_case": 200,
                 "inclusion": 100}


def run_verification_suite(params: MicrogridParams | None = None, seed: int = 0,
                           mutation: str | None = None, sizes: dict | None = None) -> dict:
    """Run all property suites; returns a JSON-ready report (no timings)."""
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; known: {MUTATIONS}")
    params = params if params is not None else table1_params()
    n = dict(DEFAULT_SIZES, **(sizes or {}))
    root = np.random.SeedSequence(seed)
    rngs = dict(zip(n, (np.random.default_rng(s) for s in root.spawn(len(n)))))
    suites = [
        rho_monotone_suite(rngs["rho_monotone"], n["rho_monotone"], params, mutation),
        step_monotone_suite(rngs["step_monotone"], n["step_monotone"], params),
        rho_oracle_suite(rngs["rho_oracle"], n["rho_oracle"], params),
        storage_path_suite(rngs["storage_paths"], n["storage_paths"], params),
        endpoint_sufficiency_suite(rngs["endpoint_sufficiency"], n["endpoint_sufficiency"]),
        worst_case_suite(rngs["worst_case"], n["worst_case"]),
        inclusion_suite(rngs["inclusion"], n["inclusion"]),
    ]
    counter = counterexample_check()
    report = {
        "seed": seed,
        "mutation": mutation,
        "suites": {s.name: s.to_dict() for s in suites},
        "counterexample": counter,
    }
    report["all_passed"] = all(s.failed == 0 for s in suites) and counter["separates"]
    return report
