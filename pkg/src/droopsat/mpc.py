"""Mixed-integer programs for the minimax MPC controller variants.

Robust variants keep one copy of the physical variables (rho, unit powers,
storage energies, region binaries) per endpoint disturbance sequence,
``w_min`` and ``w_max``; set-points and switch statuses are shared between
copies. The objective is the horizon cost of the ``w_min`` copy, which is
the worst case. The prescient controller uses a single ``w_min`` copy.

Saturated variants encode the droop laws with saturation (storage through
the static-bound demand/energy-clamp form). Non-saturated variants require
every droop expression to stay within its hard limits, with renewables
curtailed to their available power through ``min``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dispatch import FEAS_TOL, rho_bounds, simulate_horizon
from .errors import ConfigError, DimensionError, EncodingDefectError, InvalidBoundsError
from .milp import Lin, MilpBuilder, MilpInstance, MilpSolution
from .model import ControlPlan, MicrogridParams, Scenario, horizon_cost, saturate

VARIANTS = ("prescient", "mm", "sat_mm", "res_droop_mm", "sat_res_droop_mm")
CLI_NAMES = {
    "prescient": "prescient",
    "mm": "mm",
    "sat-mm": "sat_mm",
    "res-mm": "res_droop_mm",
    "sat-res-mm": "sat_res_droop_mm",
}
SAFETY = 1.1
AGREEMENT_TOL = 1e-6
SWITCH_PRIORITY = 1


@dataclass(frozen=True)
class ControllerConfig:
    variant: str
    horizon: int
    chi_override: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown controller variant {self.variant!r}; expected one of {VARIANTS}")
        if int(self.horizon) < 1:
            raise ConfigError("prediction horizon must be >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        if self.chi_override is not None:
            chi = tuple(float(v) for v in self.chi_override)
            if any(v < 0 for v in chi):
                raise ConfigError("chi_override entries must be non-negative")
            object.__setattr__(self, "chi_override", chi)

    @classmethod
    def from_name(cls, name: str, horizon: int, chi_override=None) -> "ControllerConfig":
        """Accept either a variant identifier or its CLI spelling."""
        variant = CLI_NAMES.get(name, name)
        return cls(variant, horizon, chi_override)

    @property
    def label(self) -> str:
        return {v: k for k, v in CLI_NAMES.items()}[self.variant]

    @property
    def saturated(self) -> bool:
        return self.variant in ("prescient", "sat_mm", "sat_res_droop_mm")

    @property
    def robust(self) -> bool:
        return self.variant != "prescient"

    def effective_params(self, params: MicrogridParams) -> MicrogridParams:
        """Parameters the controller (and the plant it drives) operates with."""
        if self.chi_override is not None:
            if len(self.chi_override) != params.n_units:
                raise ConfigError("chi_override length must equal the number of units")
            return params.replace(chi=np.array(self.chi_override))
        if self.variant in ("mm", "sat_mm"):
            return params.with_renewable_chi(0.0)
        return params


@dataclass(frozen=True)
class EncodingConstants:
    """Big-M constants per encoding role, one entry per unit of that kind.

    Roles: ``conv_sat``, ``stor_demand_sat``, ``stor_energy_sat``,
    ``ren_sat``, ``switch``, ``conv_unsat``, ``ren_min``.
    """

    big_m: dict
    eps_strict: float = 0.0

    def __post_init__(self):
        for role, vals in self.big_m.items():
            if np.any(np.asarray(vals) <= 0):
                raise InvalidBoundsError(f"big-M for {role} must be positive")
        if self.eps_strict < 0:
            raise InvalidBoundsError("eps_strict must be non-negative")


def saturation_m(expr_lo, expr_hi, lo, hi):
    """Smallest valid big-M for :func:`encode_saturation`, times the safety factor.

    Every constraint of the encoding must be slack in the inactive region,
    which needs ``M >= hi - expr_lo``, ``M >= expr_hi - lo`` and
    ``M >= hi - lo``.
    """
    m = np.maximum.reduce([np.asarray(hi) - expr_lo, expr_hi - np.asarray(lo),
                           np.asarray(hi) - np.asarray(lo)])
    return SAFETY * np.maximum(m, 1e-9)


def derive_big_m(params: MicrogridParams, window: Scenario) -> EncodingConstants:
    """Big-M values from interval arithmetic over the variable boxes.

    Droop expressions ``u + chi * rho`` range over ``u`` in its set-point box
    and ``rho`` in the rho interval; storage energy expressions over the
    energy box and the static power box.
    """
    b = rho_bounds(params)
    e_lo = params.u_min + params.chi * b.rho_min
    e_hi = params.u_max + params.chi * b.rho_max
    if not (np.all(np.isfinite(e_lo)) and np.all(np.isfinite(e_hi))):
        raise InvalidBoundsError("unbounded expression box")
    c, s, r = params.conv, params.stor, params.ren
    pmin, pmax = params.p_min, params.p_max
    ts = params.ts
    energy_lo = params.x_min - ts * pmax[s]
    energy_hi = params.x_max - ts * pmin[s]
    w_r = np.vstack([window.w_min[:, :params.n_renewable], window.w_max[:, :params.n_renewable]])
    if w_r.size:
        ren_lo = np.minimum(pmin[r], w_r)
        ren_sat = saturation_m(e_lo[r], e_hi[r], ren_lo, w_r).max(axis=0)
        ren_min = SAFETY * np.maximum(np.maximum(e_hi[r] - w_r, w_r - e_lo[r]), 1e-9).max(axis=0)
    else:
        ren_sat = ren_min = np.zeros(0)
    return EncodingConstants(big_m={
        "conv_sat": saturation_m(e_lo[c], e_hi[c], pmin[c], pmax[c]),
        "stor_demand_sat": saturation_m(e_lo[s], e_hi[s], pmin[s], pmax[s]),
        "stor_energy_sat": saturation_m(energy_lo, energy_hi, params.x_min, params.x_max),
        "ren_sat": ren_sat,
        "switch": SAFETY * np.maximum(np.maximum(np.abs(pmin[c]), np.abs(pmax[c])), 1e-9),
        "conv_unsat": SAFETY * np.maximum(np.maximum(np.abs(e_lo[c]), np.abs(e_hi[c])), 1e-9),
        "ren_min": ren_min,
    })


# --- encodings -----------------------------------------------------------


def encode_saturation(b: MilpBuilder, expr: Lin, lo: float, hi: float, m: float, name: str,
                      simplify: bool = False, eps: float = 0.0, role: str | None = None):
    """Add ``y = sat(lo, expr, hi)``; returns ``(y, z_lo, z_hi)``.

    ``z_lo`` / ``z_hi`` select the lower / upper saturated region. With
    ``simplify`` the binaries are skipped (returned as ``None``) when the
    expression box shows the region is already determined.
    """
    if lo > hi:
        raise InvalidBoundsError(f"{name}: saturation bounds lo={lo} > hi={hi}")
    if simplify:
        e_lo, e_hi = b.box(expr)
        if lo == hi or e_hi <= lo or e_lo >= hi:
            const = lo if (lo == hi or e_hi <= lo) else hi
            return b.add_var(name, const, const, role=role), None, None
        if lo <= e_lo and e_hi <= hi:
            y = b.add_var(name, lo, hi, role=role)
            b.eq(y, expr, f"{name}.pass")
            return y, None, None
    y = b.add_var(name, lo, hi, role=role)
    z_lo = b.add_binary(f"{name}.zlo", role=f"{role or name}, lower region")
    z_hi = b.add_binary(f"{name}.zhi", role=f"{role or name}, upper region")
    b.le(z_lo + z_hi, 1.0, f"{name}.one")
    b.le(y, expr + m * z_lo, f"{name}.y1")
    b.ge(y, expr - m * z_hi, f"{name}.y2")
    b.le(y, lo + m * (1 - z_lo), f"{name}.y3")
    b.ge(y, hi - m * (1 - z_hi), f"{name}.y4")
    b.le(expr, lo - eps + m * (1 - z_lo), f"{name}.r1")
    b.ge(expr, hi + eps - m * (1 - z_hi), f"{name}.r2")
    b.ge(expr, lo - m * (z_lo + z_hi), f"{name}.r3")
    b.le(expr, hi + m * (z_lo + z_hi), f"{name}.r4")
    return y, z_lo, z_hi


def encode_switch_product(b: MilpBuilder, delta: Lin, y: Lin, p_max: float, m: float, name: str,
                          role: str | None = None) -> Lin:
    """Add ``p = delta * y`` for binary ``delta`` and ``y`` in ``[p_min, p_max]``."""
    p = b.add_var(name, 0.0, p_max, role=role)
    b.le(p, y + m * (1 - delta), f"{name}.on1")
    b.ge(p, y - m * (1 - delta), f"{name}.on2")
    b.le(p, p_max * delta, f"{name}.off")
    return p


def encode_abs_switching(b: MilpBuilder, delta_j: Lin, delta_prev, name: str,
                         role: str | None = None) -> Lin:
    """Add ``s = |delta_j - delta_prev|``; ``delta_prev`` may be a constant."""
    s = b.add_var(name, 0.0, 1.0, role=role)
    b.ge(s, delta_j - delta_prev, f"{name}.a")
    b.ge(s, delta_prev - delta_j, f"{name}.b")
    b.le(s, delta_j + delta_prev, f"{name}.c")
    b.le(s, 2 - delta_j - delta_prev, f"{name}.d")
    return s


def encode_switched_droop(b: MilpBuilder, delta: Lin, expr: Lin, p_min: float, p_max: float,
                          m: float, name: str, role: str | None = None) -> Lin:
    """Add ``p = delta * expr`` with hard limits ``delta*p_min <= p <= delta*p_max``."""
    p = b.add_var(name, min(0.0, p_min), max(0.0, p_max), role=role)
    b.le(p, expr + m * (1 - delta), f"{name}.on1")
    b.ge(p, expr - m * (1 - delta), f"{name}.on2")
    b.ge(p, p_min * delta, f"{name}.lo")
    b.le(p, p_max * delta, f"{name}.hi")
    return p


def encode_min(b: MilpBuilder, expr: Lin, w: float, m: float, name: str,
               role: str | None = None):
    """Add ``p = min(expr, w)`` with one binary (1 selects ``w``)."""
    e_lo, _ = b.box(expr)
    p = b.add_var(name, min(e_lo, w), w, role=role)
    z = b.add_binary(f"{name}.z", role=f"{role or name}, curtailed")
    b.le(p, expr, f"{name}.m1")
    b.ge(p, expr - m * z, f"{name}.m2")
    b.ge(p, w - m * (1 - z), f"{name}.m3")
    return p, z


# --- problem assembly ----------------------------------------------------


def _endpoints(config: ControllerConfig, window: Scenario, n: int, endpoints=None):
    w_lo, w_hi = window.w_min[:n], window.w_max[:n]
    if endpoints is None:
        endpoints = ("min", "max") if config.robust else ("min",)
    out = []
    for label in endpoints:
        if label not in ("min", "max"):
            raise ConfigError(f"unknown endpoint {label!r}")
        w = w_lo if label == "min" else w_hi
        if label == "max" and "min" in endpoints and np.array_equal(w_lo, w_hi):
            continue  # identical copies add nothing
        out.append((label, w))
    return out


def build_problem(config: ControllerConfig, window: Scenario, params: MicrogridParams,
                  simplify: bool = True, endpoints=None) -> MilpInstance:
    """MILP for one receding-horizon step.

    ``endpoints`` restricts the scenario copies (e.g. ``("max",)``) for
    diagnostics; by default robust variants use both endpoints. The first
    copy listed carries the objective.
    """
    n = config.horizon
    if window.horizon < n:
        raise DimensionError(f"window has {window.horizon} steps, horizon needs {n}")
    if window.w_min.shape[1] != params.n_dist:
        raise DimensionError("window disturbance width does not match params")
    P = config.effective_params(params)
    T, S, R = P.n_conv, P.n_storage, P.n_renewable
    nu = P.n_units
    rb = rho_bounds(P)
    consts = derive_big_m(P, window.window(0, n))
    M = consts.big_m
    eps = consts.eps_strict
    wt = P.weights
    b = MilpBuilder()

    u = [[b.add_var(f"u[{j},{i}]", P.u_min[i], P.u_max[i], role=f"set-point, unit {i}, step {j}")
          for i in range(nu)] for j in range(n)]
    # switch decisions are branched on first: once they are fixed the
    # relaxation of the remaining region indicators is typically tight
    delta = [[b.add_binary(f"delta[{j},{i}]", role=f"switch status, unit {i}, step {j}",
                           priority=SWITCH_PRIORITY)
              for i in range(T)] for j in range(n)]
    sw = []
    for j in range(n):
        row = []
        for i in range(T):
            prev = float(window.delta0[i]) if j == 0 else delta[j - 1][i]
            row.append(encode_abs_switching(b, delta[j][i], prev, f"sw[{j},{i}]",
                                            role=f"switching indicator, unit {i}, step {j}"))
        sw.append(row)

    objective = Lin()
    copies = _endpoints(config, window, n, endpoints)
    for k, (c, w_seq) in enumerate(copies):
        x_prev = [Lin(const=float(v)) for v in window.x0]
        for j in range(n):
            tag = f"{c},{j}"
            where = f"scenario w_{c}, step {j}"
            rho = b.add_var(f"rho[{tag}]", rb.rho_min, rb.rho_max, role=f"rho, {where}")
            p = []
            for i in range(T):
                e = u[j][i] + P.chi[i] * rho
                name = f"p[{tag},{i}]"
                if config.saturated:
                    y, _, _ = encode_saturation(b, e, P.p_min[i], P.p_max[i], M["conv_sat"][i],
                                                f"ysat[{tag},{i}]", simplify, eps,
                                                role=f"saturated droop, unit {i}, {where}")
                    p.append(encode_switch_product(b, delta[j][i], y, P.p_max[i], M["switch"][i],
                                                   name, role=f"power, unit {i}, {where}"))
                else:
                    p.append(encode_switched_droop(b, delta[j][i], e, P.p_min[i], P.p_max[i],
                                                   M["conv_unsat"][i], name,
                                                   role=f"power, unit {i}, {where}"))
            x_next = []
            for s in range(S):
                i = T + s
                e = u[j][i] + P.chi[i] * rho
                name = f"p[{tag},{i}]"
                ps = b.add_var(name, P.p_min[i], P.p_max[i], role=f"power, unit {i}, {where}")
                if config.saturated:
                    demand, _, _ = encode_saturation(
                        b, e, P.p_min[i], P.p_max[i], M["stor_demand_sat"][s], f"pdem[{tag},{s}]",
                        simplify, eps, role=f"storage power demand, storage {s}, {where}")
                    xs, _, _ = encode_saturation(
                        b, x_prev[s] - P.ts * demand, P.x_min[s], P.x_max[s],
                        M["stor_energy_sat"][s], f"x[{tag},{s}]", simplify, eps,
                        role=f"energy, storage {s}, {where}")
                    b.eq(P.ts * ps, x_prev[s] - xs, f"{name}.energy")
                else:
                    b.eq(ps, e, f"{name}.droop")
                    xs = b.add_var(f"x[{tag},{s}]", P.x_min[s], P.x_max[s],
                                   role=f"energy, storage {s}, {where}")
                    b.eq(xs, x_prev[s] - P.ts * ps, f"x[{tag},{s}].dyn")
                p.append(ps)
                x_next.append(xs)
            for r in range(R):
                i = T + S + r
                e = u[j][i] + P.chi[i] * rho
                w_r = float(w_seq[j, r])
                name = f"p[{tag},{i}]"
                if config.saturated:
                    pr, _, _ = encode_saturation(b, e, min(P.p_min[i], w_r), w_r, M["ren_sat"][r],
                                                 name, simplify, eps,
                                                 role=f"power, unit {i}, {where}")
                else:
                    pr, _ = encode_min(b, e, w_r, M["ren_min"][r], name,
                                       role=f"power, unit {i}, {where}")
                    b.ge(pr, P.p_min[i], f"{name}.floor")
                p.append(pr)
            load = float(w_seq[j, R:].sum())
            b.eq(sum(p, Lin()), -load, f"balance[{tag}]")
            if k == 0:
                for i in range(T):
                    objective = (objective + wt.c_t[i] * p[i] + wt.c_on[i] * delta[j][i]
                                 + wt.c_sw[i] * sw[j][i])
                for s in range(S):
                    objective = objective + wt.c_s[s] * p[T + s]
            x_prev = x_next
    b.minimize(objective)
    inst = b.build()
    inst.annotations["_meta"] = {
        "variant": config.variant, "horizon": n, "copies": [c for c, _ in copies],
        "big_m": {k: np.asarray(v).tolist() for k, v in M.items()},
    }
    return inst


def fix_controls(inst: MilpInstance, plan: ControlPlan) -> MilpInstance:
    """Copy of ``inst`` with set-points and switch statuses fixed to ``plan``."""
    lb, ub = inst.lb.copy(), inst.ub.copy()
    for j in range(plan.horizon):
        for i, v in enumerate(plan.u[j]):
            k = inst.index(f"u[{j},{i}]")
            lb[k] = ub[k] = v
        for i, v in enumerate(plan.delta[j]):
            k = inst.index(f"delta[{j},{i}]")
            lb[k] = ub[k] = v
    return inst.with_bounds(lb, ub)


def lift_plan(inst: MilpInstance, config: ControllerConfig, window: Scenario,
              params: MicrogridParams, plan: ControlPlan) -> np.ndarray:
    """Full variable assignment induced by ``plan`` under droop dispatch.

    Region binaries are set from the strict region tests, ``rho`` is the
    dispatch root. The point satisfies the instance iff the plan is
    feasible for the encoded model.
    """
    P = config.effective_params(params)
    T, S, R = P.n_conv, P.n_storage, P.n_renewable
    n = config.horizon
    vals = {}
    prev = window.delta0.astype(float)
    for j in range(n):
        for i in range(P.n_units):
            vals[f"u[{j},{i}]"] = plan.u[j, i]
        for i in range(T):
            vals[f"delta[{j},{i}]"] = plan.delta[j, i]
            vals[f"sw[{j},{i}]"] = abs(plan.delta[j, i] - prev[i])
        prev = plan.delta[j].astype(float)

    def region(name, e, lo, hi):
        vals[f"{name}.zlo"] = float(e < lo)
        vals[f"{name}.zhi"] = float(e > hi)
        vals[name] = saturate(lo, e, hi)

    for c in inst.annotations["_meta"]["copies"]:
        w_seq = window.w_min if c == "min" else window.w_max
        outs = simulate_horizon(w_seq[:n], plan, window.x0, P)
        x_prev = window.x0
        for j, out in enumerate(outs):
            tag = f"{c},{j}"
            rho = out.rho
            vals[f"rho[{tag}]"] = rho
            e = plan.u[j] + P.chi * rho
            for i in range(P.n_units):
                vals[f"p[{tag},{i}]"] = out.p[i]
            for i in range(T):
                if config.saturated:
                    region(f"ysat[{tag},{i}]", e[i], P.p_min[i], P.p_max[i])
            for s in range(S):
                i = T + s
                if config.saturated:
                    region(f"pdem[{tag},{s}]", e[i], P.p_min[i], P.p_max[i])
                    region(f"x[{tag},{s}]", x_prev[s] - P.ts * vals[f"pdem[{tag},{s}]"],
                           P.x_min[s], P.x_max[s])
                else:
                    vals[f"x[{tag},{s}]"] = out.x[s]
            for r in range(R):
                i = T + S + r
                w_r = float(w_seq[j, r])
                if config.saturated:
                    region(f"p[{tag},{i}]", e[i], min(P.p_min[i], w_r), w_r)
                else:
                    vals[f"p[{tag},{i}].z"] = float(e[i] > w_r)
            x_prev = out.x
    x = np.zeros(inst.n_vars)
    for k, name in enumerate(inst.names):
        if name in vals:
            x[k] = vals[name]
        elif name.endswith((".zlo", ".zhi")) or inst.lb[k] == inst.ub[k]:
            x[k] = inst.lb[k]  # binaries dropped by simplification / fixed outputs
        else:
            raise EncodingDefectError(f"no value derived for variable {name}")
    return x


@dataclass
class OpenLoopSolution:
    plan: ControlPlan | None
    predicted_cost: float
    trajectories: dict = field(default_factory=dict)  # "min"/"max" -> list[StepOutcome]
    status: str = "optimal"
    milp_objective: float = float("nan")
    nodes: int = 0
    backend: str = ""

    @property
    def feasible(self) -> bool:
        return self.plan is not None


def extract_solution(sol: MilpSolution, config: ControllerConfig, params: MicrogridParams,
                     window: Scenario, instance: MilpInstance | None = None,
                     tol: float = AGREEMENT_TOL) -> OpenLoopSolution:
    """Read the control plan and cross-check it against droop dispatch.

    Both endpoint trajectories are recomputed with the dispatch simulator;
    unit powers and storage energies must match the MILP values within
    ``tol`` (rho may differ on flat runs). A mismatch means the encoding is
    wrong and raises :class:`EncodingDefectError`.
    """
    if not sol.has_solution:
        return OpenLoopSolution(None, float("inf"), status=sol.status, nodes=sol.nodes,
                                backend=sol.backend)
    inst = instance if instance is not None else build_problem(config, window, params)
    P = config.effective_params(params)
    n = config.horizon
    x = sol.x
    idx = inst.index
    u = np.array([[x[idx(f"u[{j},{i}]")] for i in range(P.n_units)] for j in range(n)])
    u = np.clip(u, P.u_min, P.u_max)
    delta = np.array([[x[idx(f"delta[{j},{i}]")] for i in range(P.n_conv)] for j in range(n)])
    plan = ControlPlan(u=u, delta=np.rint(delta).reshape(n, P.n_conv))

    trajectories = {}
    for c in inst.annotations["_meta"]["copies"]:
        w_seq = (window.w_min if c == "min" else window.w_max)[:n]
        outs = simulate_horizon(w_seq, plan, window.x0, P)
        for j, out in enumerate(outs):
            tag = f"{c},{j}"
            if not out.feasible:
                raise EncodingDefectError(
                    f"MILP-feasible plan infeasible under dispatch (scenario w_{c}, step {j}, "
                    f"rho={out.rho})")
            p_milp = np.array([x[idx(f"p[{tag},{i}]")] for i in range(P.n_units)])
            x_milp = np.array([x[idx(f"x[{tag},{s}]")] for s in range(P.n_storage)])
            err = max(np.abs(p_milp - out.p).max(initial=0.0), np.abs(x_milp - out.x).max(initial=0.0))
            if err > tol:
                raise EncodingDefectError(
                    f"dispatch disagrees with MILP by {err:.3g} (scenario w_{c}, step {j})")
        trajectories[c] = outs
    if "max" not in trajectories and config.robust and "min" in trajectories:
        trajectories["max"] = trajectories["min"]  # zero-width window
    ref = trajectories.get("min")
    if ref is None:
        predicted = float("nan")
    else:
        predicted = horizon_cost(ref, plan, window.delta0, P)
        if abs(predicted - inst.objective(x)) > tol:
            raise EncodingDefectError(
                f"objective {inst.objective(x)} differs from recomputed cost {predicted}")
    return OpenLoopSolution(plan, predicted, trajectories, sol.status, sol.objective,
                            sol.nodes, sol.backend)


__all__ = [
    "VARIANTS", "CLI_NAMES", "ControllerConfig", "EncodingConstants", "OpenLoopSolution",
    "build_problem", "derive_big_m", "encode_abs_switching", "encode_min", "encode_saturation",
    "encode_switch_product", "encode_switched_droop", "extract_solution", "fix_controls",
    "lift_plan", "saturation_m", "FEAS_TOL",
]
