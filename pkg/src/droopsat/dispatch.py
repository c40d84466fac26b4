"""Steady-state response of the droop layer with saturation.

All droop laws are coupled through a scalar power-sharing variable ``rho``.
Given set-points, switch statuses, the previous storage energy and a
disturbance, the plant settles at the largest ``rho`` that balances the
(augmented) power function; the step is feasible when that ``rho`` lies in
the interval returned by :func:`rho_bounds`.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NoDroopError
from .model import (AT_LOWER, AT_UPPER, INTERIOR, ControlPlan, MicrogridParams,
                    StepOutcome, dynamic_storage_limits, saturate)

if os.environ.get("DROOPSAT_PURE_PYTHON"):
    from . import _pykernel as _kernel
    KERNEL = "python"
else:
    try:
        from . import _ckernel as _kernel
        KERNEL = "cython"
    except ImportError:  # extension not built
        from . import _pykernel as _kernel
        KERNEL = "python"

# tolerance on the rho interval when flagging feasibility; MILP solutions are
# only feasible to ~1e-7 so recomputed rho can overshoot a bound by that much
FEAS_TOL = 1e-6


@dataclass(frozen=True)
class RhoBounds:
    rho_min: float
    rho_max: float


@dataclass(frozen=True)
class Breakpoint:
    rho: float
    unit: int
    kind: str  # "lower" or "upper"


def rho_bounds(params: MicrogridParams) -> RhoBounds:
    """Interval outside which every drooping unit is saturated."""
    active = params.chi > 0
    if not np.any(active):
        raise NoDroopError("all inverse droop gains are zero")
    p_max = params.p_max_effective()
    chi = params.chi[active]
    lo = (params.p_min[active] - params.u_max[active]) / chi
    hi = (p_max[active] - params.u_min[active]) / chi
    return RhoBounds(float(lo.min()), float(hi.max()))


def _check_dims(u, delta, x_prev, w, params):
    u = np.asarray(u, float).reshape(-1)
    delta = np.asarray(delta, float).reshape(-1)
    x_prev = np.asarray(x_prev, float).reshape(-1)
    w = np.asarray(w, float).reshape(-1)
    if (u.shape != (params.n_units,) or delta.shape != (params.n_conv,)
            or x_prev.shape != (params.n_storage,) or w.shape != (params.n_dist,)):
        raise DimensionError("dispatch inputs do not match params dimensions")
    return u, delta, x_prev, w


def unit_terms(u, delta, x_prev, w, params: MicrogridParams):
    """Per-unit ``(lo, hi, offset, gain)`` and the load sum for one step.

    Unit ``i`` delivers ``sat(lo[i], offset[i] + gain[i] * rho, hi[i])``.
    """
    u, delta, x_prev, w = _check_dims(u, delta, x_prev, w, params)
    T, R = params.n_conv, params.n_renewable
    lo = params.p_min.copy()
    hi = params.p_max.copy()
    c = u.copy()
    chi = params.chi.copy()
    off = np.flatnonzero(delta < 0.5)
    lo[off] = hi[off] = c[off] = chi[off] = 0.0
    s_lo, s_hi = dynamic_storage_limits(x_prev, params)
    lo[params.stor] = s_lo
    hi[params.stor] = s_hi
    w_r = w[:R]
    lo[params.ren] = np.minimum(params.p_min[params.ren], w_r)
    hi[params.ren] = w_r
    return lo, hi, c, chi, float(w[R:].sum())


def augmented_total_power(u, delta, x_prev, w, rho, params: MicrogridParams,
                          bounds: RhoBounds | None = None) -> float:
    """Power balance residual at ``rho``, augmented outside the rho interval.

    Continuous, piecewise affine and non-decreasing in ``rho``; strictly
    increasing outside ``[rho_min, rho_max]``.
    """
    b = bounds or rho_bounds(params)
    lo, hi, c, chi, load = unit_terms(u, delta, x_prev, w, params)
    units = np.minimum(np.maximum(c + chi * rho, lo), hi).sum()
    return float(min(0.0, rho - b.rho_min) + max(0.0, rho - b.rho_max) + units + load)


def breakpoints(u, delta, x_prev, w, params: MicrogridParams) -> list[Breakpoint]:
    """Values of rho where some unit enters or leaves saturation, sorted."""
    lo, hi, c, chi, _ = unit_terms(u, delta, x_prev, w, params)
    out = []
    for i in np.flatnonzero((chi > 0) & (hi > lo)):
        out.append(Breakpoint(float((lo[i] - c[i]) / chi[i]), int(i), "lower"))
        out.append(Breakpoint(float((hi[i] - c[i]) / chi[i]), int(i), "upper"))
    out.sort(key=lambda bp: (bp.rho, bp.unit, bp.kind))
    return out


def solve_rho(u, delta, x_prev, w, params: MicrogridParams,
              bounds: RhoBounds | None = None) -> tuple[float, bool]:
    """Maximal root of :func:`augmented_total_power` and its feasibility flag."""
    b = bounds or rho_bounds(params)
    lo, hi, c, chi, load = unit_terms(u, delta, x_prev, w, params)
    rho = float(_kernel.max_root(lo, hi, c, chi, load, b.rho_min, b.rho_max))
    feasible = b.rho_min - FEAS_TOL <= rho <= b.rho_max + FEAS_TOL
    return rho, feasible


def _flags(lo, hi, v, tol=1e-9):
    flags = np.full(v.shape, INTERIOR, dtype=int)
    flags[v < lo - tol] = AT_LOWER
    flags[v > hi + tol] = AT_UPPER
    return flags


def dispatch_step(x_prev, u, delta, w, params: MicrogridParams,
                  bounds: RhoBounds | None = None) -> StepOutcome:
    """Realized unit powers and storage energies for one EMS sampling step.

    Infeasibility (rho outside its interval) is reported through
    ``StepOutcome.feasible`` so simulations can keep running.
    """
    b = bounds or rho_bounds(params)
    lo, hi, c, chi, load = unit_terms(u, delta, x_prev, w, params)
    rho = float(_kernel.max_root(lo, hi, c, chi, load, b.rho_min, b.rho_max))
    v = c + chi * rho
    p = np.minimum(np.maximum(v, lo), hi)
    x = np.asarray(x_prev, float).reshape(-1) - params.ts * p[params.stor]
    feasible = b.rho_min - FEAS_TOL <= rho <= b.rho_max + FEAS_TOL
    total = min(0.0, rho - b.rho_min) + max(0.0, rho - b.rho_max) + p.sum() + load
    return StepOutcome(p=p, x=x, rho=rho, sat_flags=_flags(lo, hi, v),
                       feasible=bool(feasible), total=float(total))


def storage_dynamic_limits_path(x_prev, u_s, rho, params: MicrogridParams):
    """Storage power/energy using state-dependent power limits."""
    chi_s = params.chi[params.stor]
    lo, hi = dynamic_storage_limits(x_prev, params)
    p_s = saturate(lo, np.asarray(u_s, float) + chi_s * rho, hi)
    return np.asarray(p_s, float), np.asarray(x_prev, float) - params.ts * np.asarray(p_s)


def storage_transform_path(x_prev, u_s, rho, params: MicrogridParams):
    """Storage power/energy via the static-bound demand/energy-clamp form.

    The power demand is clamped to the static power limits, the resulting
    energy to the energy limits, and the power recovered from the energy
    change. Agrees with :func:`storage_dynamic_limits_path`.
    """
    ps = params.stor
    x_prev = np.asarray(x_prev, float)
    demand = saturate(params.p_min[ps], np.asarray(u_s, float) + params.chi[ps] * rho, params.p_max[ps])
    x = saturate(params.x_min, x_prev - params.ts * np.asarray(demand), params.x_max)
    x = np.asarray(x, float)
    return (x_prev - x) / params.ts, x


def simulate_batch(U, DELTA, W, X0, params: MicrogridParams, bounds: RhoBounds | None = None):
    """Vectorized rollout over a batch of runs (see ``_pykernel.simulate_batch``).

    Inputs broadcast to ``(B, N, .)``; returns ``(rho, P, X, feasible, residual)``.
    """
    b = bounds or rho_bounds(params)
    arrays = [np.asarray(a, float) for a in (U, DELTA, W, X0)]
    N = arrays[2].shape[-2]
    B = max([a.shape[0] for a in arrays[:3] if a.ndim == 3]
            + [arrays[3].shape[0] if arrays[3].ndim == 2 else 1])

    def bcast(a, *shape):
        return np.ascontiguousarray(np.broadcast_to(a, (B, *shape)))

    U = bcast(arrays[0], N, params.n_units)
    DELTA = bcast(arrays[1], N, params.n_conv)
    W = bcast(arrays[2], N, params.n_dist)
    X0 = bcast(arrays[3], params.n_storage)
    return _kernel.simulate_batch(U, DELTA, W, X0, params.n_conv, params.n_storage,
                                  params.n_renewable, params.p_min, params.p_max,
                                  params.x_min, params.x_max, params.chi, params.ts,
                                  b.rho_min, b.rho_max, FEAS_TOL)


def simulate_horizon(w_seq, plan: ControlPlan, x0, params: MicrogridParams) -> list[StepOutcome]:
    """Chain :func:`dispatch_step` over the plan, threading storage energy."""
    w_seq = np.atleast_2d(np.asarray(w_seq, float))
    if w_seq.shape != (plan.horizon, params.n_dist):
        raise DimensionError(f"realization shape {w_seq.shape} does not match plan horizon "
                             f"{plan.horizon} x {params.n_dist}")
    b = rho_bounds(params)
    x = np.asarray(x0, float).reshape(-1)
    out = []
    for j in range(plan.horizon):
        step = dispatch_step(x, plan.u[j], plan.delta[j], w_seq[j], params, bounds=b)
        out.append(step)
        x = step.x
    return out
