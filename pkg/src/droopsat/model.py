"""Domain types, saturation, cost functions and storage-limit arithmetic.

Units are ordered ``[conventional (T), storage (S), renewable (R)]`` in every
per-unit vector. Disturbances are ordered ``[renewable infeed (R), load (D)]``;
renewable infeed is non-negative and load is non-positive. Powers are in pu,
energies in pu*h and time in hours.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidBoundsError, NoDroopError, StateError

# sat_flags values
AT_LOWER = -1
INTERIOR = 0
AT_UPPER = 1

_STATE_TOL = 1e-9


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostWeights:
    c_t: np.ndarray
    c_on: np.ndarray
    c_sw: np.ndarray
    c_s: np.ndarray

    def __post_init__(self):
        for name in ("c_t", "c_on", "c_sw", "c_s"):
            arr = _frozen(np.atleast_1d(getattr(self, name)))
            if np.any(arr < 0):
                raise InvalidBoundsError(f"cost weight {name} must be non-negative")
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("c_t", "c_on", "c_sw", "c_s")}

    @classmethod
    def from_dict(cls, d: dict) -> "CostWeights":
        return cls(d["c_t"], d["c_on"], d["c_sw"], d["c_s"])


@dataclass(frozen=True)
class MicrogridParams:
    n_conv: int
    n_storage: int
    n_renewable: int
    n_load: int
    u_min: np.ndarray
    u_max: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray
    chi: np.ndarray
    ts: float
    weights: CostWeights
    renewable_cap: np.ndarray

    def __post_init__(self):
        T, S, R = self.n_conv, self.n_storage, self.n_renewable
        nu = T + S + R
        for name, n in (("u_min", nu), ("u_max", nu), ("p_min", nu), ("p_max", nu),
                        ("x_min", S), ("x_max", S), ("chi", nu), ("renewable_cap", R)):
            arr = _frozen(np.atleast_1d(getattr(self, name))).reshape(-1)
            if arr.shape != (n,):
                raise DimensionError(f"{name} has length {arr.size}, expected {n}")
            object.__setattr__(self, name, arr)
        w = self.weights
        for name, n in (("c_t", T), ("c_on", T), ("c_sw", T), ("c_s", S)):
            if getattr(w, name).shape != (n,):
                raise DimensionError(f"weights.{name} must have length {n}")
        if min(T, S, R, self.n_load) < 0 or self.n_load < 1:
            raise DimensionError("unit counts must be non-negative and n_load >= 1")
        if np.any(self.u_min > self.u_max):
            raise InvalidBoundsError("u_min > u_max")
        if np.any(self.p_min > self.p_max):
            raise InvalidBoundsError("p_min > p_max")
        if np.any(self.x_min > self.x_max):
            raise InvalidBoundsError("x_min > x_max")
        if np.any(self.chi < 0):
            raise InvalidBoundsError("inverse droop gains must be non-negative")
        if np.any(self.p_min[self.conv] < 0) or np.any(self.p_min[self.ren] < 0):
            raise InvalidBoundsError("p_min must be >= 0 for conventional and renewable units")
        if np.any(self.p_min[self.stor] >= 0):
            raise InvalidBoundsError("storage p_min must be < 0")
        if np.any(self.p_max <= 0):
            raise InvalidBoundsError("p_max must be > 0")
        if np.any(self.renewable_cap <= 0):
            raise InvalidBoundsError("renewable_cap must be > 0")
        if not self.ts > 0:
            raise InvalidBoundsError("sampling time must be positive")
        if not np.any(self.chi > 0):
            raise NoDroopError("at least one unit needs a positive droop gain")
        object.__setattr__(self, "ts", float(self.ts))

    @property
    def n_units(self) -> int:
        return self.n_conv + self.n_storage + self.n_renewable

    @property
    def n_dist(self) -> int:
        return self.n_renewable + self.n_load

    @property
    def conv(self) -> slice:
        return slice(0, self.n_conv)

    @property
    def stor(self) -> slice:
        return slice(self.n_conv, self.n_conv + self.n_storage)

    @property
    def ren(self) -> slice:
        return slice(self.n_conv + self.n_storage, self.n_units)

    def p_max_effective(self) -> np.ndarray:
        """p_max with renewable entries replaced by ``renewable_cap``."""
        p = self.p_max.copy()
        p[self.ren] = self.renewable_cap
        return p

    def replace(self, **changes) -> "MicrogridParams":
        return dataclasses.replace(self, **changes)

    def with_renewable_chi(self, value: float) -> "MicrogridParams":
        chi = self.chi.copy()
        chi[self.ren] = value
        return self.replace(chi=chi)

    def to_dict(self) -> dict:
        return {
            "n_conv": self.n_conv,
            "n_storage": self.n_storage,
            "n_renewable": self.n_renewable,
            "n_load": self.n_load,
            "u_min": self.u_min.tolist(),
            "u_max": self.u_max.tolist(),
            "p_min": self.p_min.tolist(),
            "p_max": self.p_max.tolist(),
            "x_min": self.x_min.tolist(),
            "x_max": self.x_max.tolist(),
            "chi": self.chi.tolist(),
            "ts": self.ts,
            "cost_weights": self.weights.to_dict(),
            "renewable_cap": self.renewable_cap.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, renewable_cap=None) -> "MicrogridParams":
        cap = d.get("renewable_cap", renewable_cap)
        if cap is None:
            raise DimensionError("renewable_cap missing and no default supplied")
        return cls(
            n_conv=int(d["n_conv"]),
            n_storage=int(d["n_storage"]),
            n_renewable=int(d["n_renewable"]),
            n_load=int(d["n_load"]),
            u_min=d["u_min"],
            u_max=d["u_max"],
            p_min=d["p_min"],
            p_max=d["p_max"],
            x_min=d["x_min"],
            x_max=d["x_max"],
            chi=d["chi"],
            ts=d["ts"],
            weights=CostWeights.from_dict(d["cost_weights"]),
            renewable_cap=cap,
        )


def table1_params(renewable_cap=(1.0, 1.0)) -> MicrogridParams:
    """Case-study microgrid: one diesel, one battery, wind + PV, one load."""
    cap = np.broadcast_to(np.asarray(renewable_cap, float), (2,))
    return MicrogridParams(
        n_conv=1,
        n_storage=1,
        n_renewable=2,
        n_load=1,
        u_min=[-5.0, -5.0, -5.0, -5.0],
        u_max=[5.0, 5.0, 5.0, 5.0],
        p_min=[0.2, -1.0, 0.0, 0.0],
        p_max=[1.0, 1.0, cap[0], cap[1]],
        x_min=[0.0],
        x_max=[6.0],
        chi=[1.0, 1.0, 1.0, 1.0],
        ts=0.25,
        weights=CostWeights(c_t=[1.0], c_on=[0.2], c_sw=[0.3], c_s=[0.9]),
        renewable_cap=cap,
    )


def compact_params(ts: float = 1.0) -> MicrogridParams:
    """Three-unit variant (diesel, battery, PV) sized for quick closed-loop runs."""
    return MicrogridParams(
        n_conv=1,
        n_storage=1,
        n_renewable=1,
        n_load=1,
        u_min=[-5.0, -5.0, -5.0],
        u_max=[5.0, 5.0, 5.0],
        p_min=[0.2, -1.0, 0.0],
        p_max=[1.0, 1.0, 1.0],
        x_min=[0.0],
        x_max=[6.0],
        chi=[1.0, 1.0, 1.0],
        ts=ts,
        weights=CostWeights(c_t=[1.0], c_on=[0.2], c_sw=[0.3], c_s=[0.9]),
        renewable_cap=[1.0],
    )


PRESETS = {"table1": table1_params, "compact": compact_params}


@dataclass(frozen=True)
class Scenario:
    """Disturbance interval forecast plus initial state.

    ``w_min``/``w_max`` have shape ``(horizon, R + D)``.
    """

    w_min: np.ndarray
    w_max: np.ndarray
    x0: np.ndarray
    delta0: np.ndarray

    def __post_init__(self):
        w_min = _frozen(np.atleast_2d(self.w_min))
        w_max = _frozen(np.atleast_2d(self.w_max))
        if w_min.shape != w_max.shape:
            raise DimensionError("w_min and w_max shapes differ")
        object.__setattr__(self, "w_min", w_min)
        object.__setattr__(self, "w_max", w_max)
        object.__setattr__(self, "x0", _frozen(np.atleast_1d(self.x0)).reshape(-1))
        object.__setattr__(self, "delta0", _frozen(np.atleast_1d(self.delta0), dtype=int).reshape(-1))

    @property
    def horizon(self) -> int:
        return self.w_min.shape[0]

    def window(self, start: int, length: int, x0=None, delta0=None) -> "Scenario":
        if start < 0 or start + length > self.horizon:
            raise DimensionError(
                f"window [{start}, {start + length}) exceeds scenario horizon {self.horizon}")
        return Scenario(
            w_min=self.w_min[start:start + length],
            w_max=self.w_max[start:start + length],
            x0=self.x0 if x0 is None else x0,
            delta0=self.delta0 if delta0 is None else delta0,
        )


@dataclass(frozen=True)
class ControlPlan:
    u: np.ndarray      # (N, T+S+R)
    delta: np.ndarray  # (N, T), binary

    def __post_init__(self):
        u = _frozen(np.atleast_2d(self.u))
        delta = np.asarray(self.delta)
        if delta.ndim == 1:
            delta = delta.reshape(u.shape[0], -1)
        if delta.size == 0:
            delta = np.zeros((u.shape[0], 0), dtype=int)
        raw = np.asarray(delta, float)
        if np.any(np.minimum(np.abs(raw), np.abs(raw - 1.0)) > 1e-6):
            raise InvalidBoundsError("delta must be binary")
        delta = _frozen(np.rint(raw), dtype=int)
        if delta.shape[0] != u.shape[0]:
            raise DimensionError("u and delta horizons differ")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "delta", delta)

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    def check_bounds(self, params: MicrogridParams, tol: float = 1e-9) -> None:
        if self.u.shape[1] != params.n_units or self.delta.shape[1] != params.n_conv:
            raise DimensionError("plan dimensions do not match params")
        if np.any(self.u < params.u_min - tol) or np.any(self.u > params.u_max + tol):
            raise InvalidBoundsError("set-points outside [u_min, u_max]")


@dataclass(frozen=True)
class StepOutcome:
    p: np.ndarray
    x: np.ndarray
    rho: float
    sat_flags: np.ndarray
    feasible: bool = True
    total: float = 0.0  # augmented power balance residual at rho (0 when solved)

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "sat_flags", _frozen(self.sat_flags, dtype=int))


def saturate(lo, v, hi):
    """Clamp ``v`` to ``[lo, hi]`` (elementwise for arrays)."""
    lo_a, v_a, hi_a = np.asarray(lo, float), np.asarray(v, float), np.asarray(hi, float)
    if np.any(lo_a > hi_a):
        raise InvalidBoundsError("saturation requires lo <= hi")
    out = np.minimum(np.maximum(v_a, lo_a), hi_a)
    if out.ndim == 0:
        return float(out)
    return out


def stage_cost(p, delta, delta_prev, params: MicrogridParams) -> float:
    """Conventional fuel/fixed/switching cost plus storage power cost.

    Renewable powers carry no cost.
    """
    p = np.asarray(p, float)
    delta = np.asarray(delta, float).reshape(-1)
    delta_prev = np.asarray(delta_prev, float).reshape(-1)
    T = params.n_conv
    if p.shape != (params.n_units,) or delta.shape != (T,) or delta_prev.shape != (T,):
        raise DimensionError("stage_cost inputs do not match params dimensions")
    w = params.weights
    return float(
        w.c_t @ p[params.conv]
        + w.c_on @ delta
        + w.c_sw @ np.abs(delta - delta_prev)
        + w.c_s @ p[params.stor]
    )


def horizon_cost(outcomes: Sequence[StepOutcome], plan: ControlPlan, delta0,
                 params: MicrogridParams) -> float:
    if len(outcomes) != plan.horizon:
        raise DimensionError("trajectory length differs from plan horizon")
    total = 0.0
    prev = np.asarray(delta0)
    for j, out in enumerate(outcomes):
        total += stage_cost(out.p, plan.delta[j], prev, params)
        prev = plan.delta[j]
    return total


def dynamic_storage_limits(x_prev, params: MicrogridParams):
    """State-dependent storage power limits for one step.

    Returns ``(p_bar_min, p_bar_max)``: the static power limits tightened so
    the next energy level stays inside ``[x_min, x_max]``.
    """
    x_prev = np.asarray(x_prev, float).reshape(-1)
    if x_prev.shape != (params.n_storage,):
        raise DimensionError("x_prev length must equal number of storage units")
    if np.any(x_prev < params.x_min - _STATE_TOL) or np.any(x_prev > params.x_max + _STATE_TOL):
        raise StateError(f"storage energy {x_prev} outside [{params.x_min}, {params.x_max}]")
    ps = params.stor
    lo = np.maximum(params.p_min[ps], (x_prev - params.x_max) / params.ts)
    hi = np.minimum(params.p_max[ps], (x_prev - params.x_min) / params.ts)
    # clamping within _STATE_TOL can leave lo a hair above hi
    lo = np.minimum(lo, hi)
    return lo, hi


def validate_scenario(scenario: Scenario, params: MicrogridParams) -> list[str]:
    """Return human-readable violations; an empty list means valid."""
    problems = []
    R = params.n_renewable
    nd = params.n_dist
    if scenario.w_min.shape[1] != nd:
        problems.append(f"disturbance width {scenario.w_min.shape[1]} != R + D = {nd}")
        return problems
    bad = np.argwhere(scenario.w_min > scenario.w_max)
    for step, entry in bad:
        problems.append(f"w_min > w_max at step {step}, entry {entry}")
    for label, w in (("w_min", scenario.w_min), ("w_max", scenario.w_max)):
        for step, entry in np.argwhere(w[:, :R] < 0):
            problems.append(f"{label} renewable entry {entry} negative at step {step}")
        for step, entry in np.argwhere(w[:, R:] > 0):
            problems.append(f"{label} load entry {R + entry} positive at step {step}")
    for step, entry in np.argwhere(scenario.w_max[:, :R] > params.renewable_cap + 1e-12):
        problems.append(f"w_max renewable entry {entry} exceeds renewable_cap at step {step}")
    if scenario.x0.shape != (params.n_storage,):
        problems.append(f"x0 has length {scenario.x0.size}, expected {params.n_storage}")
    else:
        for i in np.flatnonzero((scenario.x0 < params.x_min) | (scenario.x0 > params.x_max)):
            problems.append(f"x0[{i}] = {scenario.x0[i]} outside [{params.x_min[i]}, {params.x_max[i]}]")
    if scenario.delta0.shape != (params.n_conv,):
        problems.append(f"delta0 has length {scenario.delta0.size}, expected {params.n_conv}")
    elif np.any((scenario.delta0 != 0) & (scenario.delta0 != 1)):
        problems.append("delta0 must be binary")
    return problems
