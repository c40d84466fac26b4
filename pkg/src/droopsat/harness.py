"""Receding-horizon simulation, controller comparison and scenario synthesis."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dispatch import dispatch_step
from .errors import ConfigError, ControllerInfeasibleError, DimensionError
from .model import (ControlPlan, MicrogridParams, Scenario, StepOutcome, stage_cost,
                    validate_scenario)
from .mpc import ControllerConfig, OpenLoopSolution, build_problem, extract_solution
from .solver import SolveOptions, solve_milp


# --- receding horizon ----------------------------------------------------


def solve_window(config: ControllerConfig, window: Scenario, params: MicrogridParams,
                 backend: str = "reference", options: SolveOptions | None = None,
                 endpoints=None) -> OpenLoopSolution:
    inst = build_problem(config, window, params, endpoints=endpoints)
    sol = solve_milp(inst, options, backend=backend)
    return extract_solution(sol, config, params, window, instance=inst)


def endpoint_diagnostics(config, window, params, backend="reference", options=None) -> dict:
    """Which endpoint scenarios are individually infeasible for ``config``."""
    labels = ("min", "max") if config.robust else ("min",)
    out = {}
    for label in labels:
        sol = solve_window(config, window, params, backend, options, endpoints=(label,))
        out[f"w_{label}"] = "feasible" if sol.feasible else sol.status
    return out


def mpc_step(config: ControllerConfig, x, delta_prev, forecast: Scenario, params: MicrogridParams,
             backend: str = "reference", options: SolveOptions | None = None):
    """Solve one receding-horizon problem; return ``(u, delta, open_loop)``.

    ``forecast`` supplies the disturbance bounds; its first ``horizon`` steps
    are used with ``x`` and ``delta_prev`` as initial conditions.
    """
    if forecast.horizon < config.horizon:
        raise DimensionError("forecast window shorter than prediction horizon")
    window = forecast.window(0, config.horizon, x0=x, delta0=delta_prev)
    sol = solve_window(config, window, params, backend, options)
    if not sol.feasible:
        diag = endpoint_diagnostics(config, window, params, backend, options)
        raise ControllerInfeasibleError(
            f"{config.label} problem is {sol.status}; endpoint checks: {diag}", diag)
    return sol.plan.u[0], sol.plan.delta[0], sol


@dataclass
class Metrics:
    per_sample_cost: float
    per_sample_res_energy: float
    per_sample_conventional_energy: float
    switching_count: int

    def to_dict(self) -> dict:
        return {
            "per_sample_cost": self.per_sample_cost,
            "per_sample_res_energy": self.per_sample_res_energy,
            "per_sample_conventional_energy": self.per_sample_conventional_energy,
            "switching_count": self.switching_count,
        }


@dataclass
class StepRecord:
    u: np.ndarray
    delta: np.ndarray
    w: np.ndarray
    outcome: StepOutcome
    stage_cost: float
    solve_seconds: float
    status: str
    predicted_cost: float


@dataclass
class SimRecord:
    controller: str
    params: MicrogridParams
    delta0: np.ndarray
    steps: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def metrics(self) -> Metrics:
        return compute_metrics(self)


def compute_metrics(record: SimRecord) -> Metrics:
    P = record.params
    ns = record.horizon
    if ns == 0:
        return Metrics(0.0, 0.0, 0.0, 0)
    cost = sum(s.stage_cost for s in record.steps)
    res = sum(float(s.outcome.p[P.ren].sum()) for s in record.steps) * P.ts
    conv = sum(float(s.outcome.p[P.conv].sum()) for s in record.steps) * P.ts
    prev = np.asarray(record.delta0, int)
    switches = 0
    for s in record.steps:
        switches += int(np.abs(s.delta - prev).sum())
        prev = s.delta
    return Metrics(cost / ns, res / ns, conv / ns, switches)


def _realization(rule, scenario: Scenario, k: int):
    if isinstance(rule, str):
        if rule == "min":
            return scenario.w_min[k]
        if rule == "max":
            return scenario.w_max[k]
        raise ConfigError(f"unknown realization rule {rule!r}")
    trace = np.asarray(rule, float)
    if trace.ndim != 2 or trace.shape[1] != scenario.w_min.shape[1] or trace.shape[0] <= k:
        raise DimensionError("realization trace does not cover the simulation horizon")
    return trace[k]


def closed_loop_simulate(config: ControllerConfig, scenario: Scenario, params: MicrogridParams,
                         realization="min", backend: str = "reference",
                         options: SolveOptions | None = None, steps: int | None = None) -> SimRecord:
    """Receding-horizon loop over ``Ns = scenario.horizon - Np`` steps.

    The plant runs the controller's effective droop gains. On controller
    infeasibility a :class:`ControllerInfeasibleError` is raised whose
    ``record`` attribute holds the steps simulated so far.
    """
    ns = scenario.horizon - config.horizon
    if ns < 1:
        raise DimensionError("scenario too short for one closed-loop step")
    if steps is not None:
        ns = min(ns, int(steps))
    plant = config.effective_params(params)
    record = SimRecord(config.label, plant, scenario.delta0.copy())
    x = scenario.x0.copy()
    delta_prev = scenario.delta0.copy()
    for k in range(ns):
        w = _realization(realization, scenario, k)
        start = time.perf_counter()
        try:
            u, delta, sol = mpc_step(config, x, delta_prev, scenario.window(k, config.horizon),
                                     params, backend, options)
        except ControllerInfeasibleError as err:
            record.aborted = True
            record.abort_reason = f"step {k}: {err}"
            err.record = record
            raise
        elapsed = time.perf_counter() - start
        out = dispatch_step(x, u, delta, w, plant)
        cost = stage_cost(out.p, delta, delta_prev, plant)
        record.steps.append(StepRecord(u.copy(), delta.copy(), np.asarray(w, float).copy(), out,
                                       cost, elapsed, sol.status, sol.predicted_cost))
        x = out.x
        delta_prev = delta
    return record


# --- open-loop comparison ------------------------------------------------


@dataclass
class ComparisonRow:
    index: int
    controller: str
    predicted_cost: float
    predicted_conventional_energy: float
    predicted_res_energy: float
    status: str


@dataclass
class Comparison:
    rows: list
    metrics: dict  # controller label -> Metrics (closed loop) or error string
    initial_conditions: list  # (x, delta_prev)

    def costs(self, controller: str) -> np.ndarray:
        return np.array([r.predicted_cost for r in self.rows if r.controller == controller])

    def mean_conventional_energy(self) -> dict:
        out = {}
        for label in dict.fromkeys(r.controller for r in self.rows):
            vals = [r.predicted_conventional_energy for r in self.rows
                    if r.controller == label and math.isfinite(r.predicted_conventional_energy)]
            out[label] = float(np.mean(vals)) if vals else float("nan")
        return out


def _predicted_energies(sol: OpenLoopSolution, params: MicrogridParams):
    if not sol.feasible:
        return float("nan"), float("nan")
    traj = sol.trajectories["min"]
    conv = sum(float(o.p[params.conv].sum()) for o in traj) * params.ts / len(traj)
    res = sum(float(o.p[params.ren].sum()) for o in traj) * params.ts / len(traj)
    return conv, res


def compare_controllers(configs, scenario: Scenario, params: MicrogridParams,
                        backend: str = "reference", options: SolveOptions | None = None,
                        closed_loop: bool = True, steps: int | None = None) -> Comparison:
    """Open-loop costs at initial conditions from a prescient closed loop.

    All configs must share the prediction horizon. Infeasible problems get
    ``inf`` predicted cost.
    """
    configs = list(configs)
    horizons = {c.horizon for c in configs}
    if len(horizons) != 1:
        raise ConfigError("compared controllers must share the prediction horizon")
    horizon = horizons.pop()
    reference = ControllerConfig("prescient", horizon)
    ref_record = closed_loop_simulate(reference, scenario, params, "min", backend, options, steps)
    ics = []
    x, d = scenario.x0.copy(), scenario.delta0.copy()
    for s in ref_record.steps:
        ics.append((x, d))
        x, d = s.outcome.x, s.delta
    rows = []
    for k, (x, d) in enumerate(ics):
        window = scenario.window(k, horizon, x0=x, delta0=d)
        for cfg in configs:
            sol = solve_window(cfg, window, params, backend, options)
            conv, res = _predicted_energies(sol, cfg.effective_params(params))
            rows.append(ComparisonRow(k, cfg.label, sol.predicted_cost if sol.feasible else math.inf,
                                      conv, res, sol.status))
    metrics = {}
    if closed_loop:
        for cfg in configs:
            try:
                rec = (ref_record if cfg.variant == "prescient"
                       else closed_loop_simulate(cfg, scenario, params, "min", backend, options, steps))
                metrics[cfg.label] = rec.metrics()
            except ControllerInfeasibleError as err:
                metrics[cfg.label] = f"infeasible: {err}"
    return Comparison(rows, metrics, ics)


# --- synthetic scenarios -------------------------------------------------


def gen_synthetic_scenario(seed: int, days: int, params: MicrogridParams, width: float,
                           delta0=None) -> Scenario:
    """Seeded PV / wind / load interval profiles at the params' sampling time.

    Renewable 0 is wind and renewable 1 PV (alternating beyond that; a single
    renewable is PV). PV follows a half-sine between 06:00 and 18:00 with a
    per-day amplitude; wind is a smoothed bounded random walk; each load has
    morning and evening peaks. Bounds are ``nominal * (1 -/+ width)`` clipped
    to the sign conventions and renewable caps.
    """
    if days < 1:
        raise ConfigError("days must be >= 1")
    if not (0.0 <= width <= 1.0) or not math.isfinite(width):
        raise ConfigError("uncertainty width must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    per_day = int(round(24.0 / params.ts))
    n = per_day * days
    hours = (np.arange(n) * params.ts) % 24.0
    day = np.arange(n) // per_day
    R, D = params.n_renewable, params.n_load
    cap = params.renewable_cap
    kinds = ["pv"] if R == 1 else ["wind" if r % 2 == 0 else "pv" for r in range(R)]
    nominal = np.zeros((n, R + D))
    for r, kind in enumerate(kinds):
        if kind == "pv":
            amp = rng.uniform(0.6, 1.0, size=days)
            shape = np.clip(np.sin(np.pi * (hours - 6.0) / 12.0), 0.0, None)
            shape[(hours < 6.0) | (hours >= 18.0)] = 0.0
            nominal[:, r] = 0.8 * cap[r] * amp[day] * shape
        else:
            steps = rng.normal(0.0, 0.04, size=n)
            level = np.empty(n)
            v = rng.uniform(0.2, 0.5)
            for k in range(n):
                v = min(max(v + steps[k], 0.05), 0.7)
                level[k] = v
            kernel = np.ones(5) / 5.0
            smooth = np.convolve(np.pad(level, 2, mode="edge"), kernel, mode="valid")
            nominal[:, r] = cap[r] * smooth
    # loads scale with firm conventional capacity so that short-horizon
    # controllers cannot strand the grid by draining storage before a peak
    capacity = float(params.p_max[params.conv].sum() if params.n_conv
                     else params.p_max[params.stor].sum())
    for l in range(D):
        base = (0.3 + 0.15 * np.exp(-((hours - 8.0) / 2.0) ** 2)
                + 0.2 * np.exp(-((hours - 19.0) / 2.5) ** 2))
        jitter = 1.0 + rng.uniform(-0.05, 0.05, size=n)
        nominal[:, R + l] = -capacity * base * jitter / D
    w_min = nominal.copy()
    w_max = nominal.copy()
    w_min[:, :R] = np.clip(nominal[:, :R] * (1.0 - width), 0.0, cap)
    w_max[:, :R] = np.clip(nominal[:, :R] * (1.0 + width), 0.0, cap)
    w_min[:, R:] = np.minimum(nominal[:, R:] * (1.0 + width), 0.0)
    w_max[:, R:] = np.minimum(nominal[:, R:] * (1.0 - width), 0.0)
    x0 = params.x_min + (params.x_max - params.x_min) / 3.0
    d0 = np.zeros(params.n_conv, int) if delta0 is None else delta0
    return Scenario(w_min=w_min, w_max=w_max, x0=x0, delta0=d0)


# --- files ---------------------------------------------------------------


def scenario_to_dict(scenario: Scenario, params: MicrogridParams) -> dict:
    return {
        "params": params.to_dict(),
        "horizon": scenario.horizon,
        "w_min": scenario.w_min.tolist(),
        "w_max": scenario.w_max.tolist(),
        "x0": scenario.x0.tolist(),
        "delta0": scenario.delta0.tolist(),
    }


def scenario_from_dict(d: dict):
    """Return ``(scenario, params)``; the renewable cap defaults to max ``w_max``."""
    w_max = np.asarray(d["w_max"], float)
    pd = d["params"]
    R = int(pd["n_renewable"])
    default_cap = (np.maximum(w_max[:, :R].max(axis=0), 1e-9) if R else np.zeros(0))
    params = MicrogridParams.from_dict(pd, renewable_cap=default_cap)
    n_conv = params.n_conv
    scenario = Scenario(w_min=d["w_min"], w_max=d["w_max"], x0=d["x0"],
                        delta0=d.get("delta0", [0] * n_conv))
    if "horizon" in d and int(d["horizon"]) != scenario.horizon:
        raise DimensionError(f"horizon {d['horizon']} does not match {scenario.horizon} rows")
    return scenario, params


def dumps_scenario(scenario: Scenario, params: MicrogridParams) -> str:
    return json.dumps(scenario_to_dict(scenario, params), indent=1, sort_keys=True) + "\n"


def load_scenario(path):
    with open(path) as fh:
        scenario, params = scenario_from_dict(json.load(fh))
    problems = validate_scenario(scenario, params)
    return scenario, params, problems


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trajectory_csv(record: SimRecord) -> str:
    P = record.params
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    header = (["step"] + [f"x{s}" for s in range(P.n_storage)] + [f"p{i}" for i in range(P.n_units)]
              + ["rho"] + [f"delta{i}" for i in range(P.n_conv)] + ["stage_cost", "feasible_flag"])
    wr.writerow(header)
    for k, s in enumerate(record.steps):
        wr.writerow([str(k)] + [_fmt(v) for v in s.outcome.x] + [_fmt(v) for v in s.outcome.p]
                    + [_fmt(s.outcome.rho)] + [_fmt(v) for v in s.delta]
                    + [_fmt(s.stage_cost), _fmt(s.outcome.feasible)])
    return buf.getvalue()


METRIC_COLUMNS = ["controller", "per_sample_cost", "per_sample_res_energy",
                  "per_sample_conventional_energy", "switching_count"]


def metrics_csv(metrics: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(METRIC_COLUMNS)
    for label, m in metrics.items():
        if isinstance(m, Metrics):
            wr.writerow([label, _fmt(m.per_sample_cost), _fmt(m.per_sample_res_energy),
                         _fmt(m.per_sample_conventional_energy), _fmt(m.switching_count)])
        else:
            wr.writerow([label, "nan", "nan", "nan", ""])
    return buf.getvalue()


def comparison_csv(comp: Comparison) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["initial_condition", "controller", "predicted_cost",
                 "predicted_conventional_energy", "predicted_res_energy", "status"])
    for r in comp.rows:
        wr.writerow([r.index, r.controller, _fmt(r.predicted_cost),
                     _fmt(r.predicted_conventional_energy), _fmt(r.predicted_res_energy), r.status])
    return buf.getvalue()


def plan_csv(plan: ControlPlan) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step"] + [f"u{i}" for i in range(plan.u.shape[1])]
                + [f"delta{i}" for i in range(plan.delta.shape[1])])
    for j in range(plan.horizon):
        wr.writerow([str(j)] + [_fmt(v) for v in plan.u[j]] + [_fmt(v) for v in plan.delta[j]])
    return buf.getvalue()
