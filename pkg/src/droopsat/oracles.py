"""Brute-force reference computations for tests and the verification suite.

:func:`bisection_rho` re-derives the plant's power-sharing variable from
scratch (its own limit arithmetic, bisection instead of a breakpoint scan).
The grid oracles enumerate the disturbance box and the control space; they
check the endpoint reformulation and the MILP layer, and use the batch
dispatch simulator to keep enumeration fast.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import GridCapError

DEFAULT_CAP = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    points: int = 5
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("grid needs at least 2 points per dimension")
        if self.cap < 1:
            raise ValueError("grid cap must be positive")


# --- independent rho oracle ---------------------------------------------


def _oracle_terms(u, delta, x_prev, w, params):
    T, S, R = params.n_conv, params.n_storage, params.n_renewable
    u = np.asarray(u, float).ravel()
    lo, hi, gain = [], [], []
    for i in range(T):
        on = float(delta[i]) > 0.5
        lo.append(params.p_min[i] if on else 0.0)
        hi.append(params.p_max[i] if on else 0.0)
        gain.append(params.chi[i] if on else 0.0)
    offs = [u[i] if float(delta[i]) > 0.5 else 0.0 for i in range(T)]
    for s in range(S):
        i = T + s
        xp = float(x_prev[s])
        hi_s = min(params.p_max[i], (xp - params.x_min[s]) / params.ts)
        lo_s = min(max(params.p_min[i], (xp - params.x_max[s]) / params.ts), hi_s)
        lo.append(lo_s)
        hi.append(hi_s)
        gain.append(params.chi[i])
        offs.append(u[i])
    for r in range(R):
        i = T + S + r
        avail = float(w[r])
        lo.append(min(params.p_min[i], avail))
        hi.append(avail)
        gain.append(params.chi[i])
        offs.append(u[i])
    load = float(np.sum(np.asarray(w, float)[R:]))
    return np.array(lo), np.array(hi), np.array(offs), np.array(gain), load


def _oracle_rho_interval(params):
    lows, highs = [], []
    cap = list(params.renewable_cap)
    first_ren = params.n_conv + params.n_storage
    for i in range(params.n_units):
        g = params.chi[i]
        if g <= 0:
            continue
        pmax = cap[i - first_ren] if i >= first_ren else params.p_max[i]
        lows.append((params.p_min[i] - params.u_max[i]) / g)
        highs.append((pmax - params.u_min[i]) / g)
    return min(lows), max(highs)


def bisection_rho(u, delta, x_prev, w, params, tol: float = 1e-10) -> float:
    """Maximal root of the augmented balance by bisection plus flat-run expansion."""
    lo, hi, off, gain, load = _oracle_terms(u, delta, x_prev, w, params)
    r_min, r_max = _oracle_rho_interval(params)

    def total(rho):
        units = 0.0
        for k in range(lo.size):
            units += min(max(off[k] + gain[k] * rho, lo[k]), hi[k])
        return min(0.0, rho - r_min) + max(0.0, rho - r_max) + units + load

    margin = 1.0 + float(np.abs(lo).sum() + np.abs(hi).sum()) + abs(load)
    a, b = r_min - margin, r_max + margin
    # leftmost point where the function reaches zero
    while b - a > tol:
        mid = 0.5 * (a + b)
        if total(mid) < 0.0:
            a = mid
        else:
            b = mid
    root = b
    zero_tol = 1e-12
    if abs(total(root)) > 1e-9:
        return root
    # expand right across a flat zero run, then bisect its right edge
    step = tol
    left = root
    while total(left + step) <= zero_tol:
        left += step
        step *= 2.0
    right = left + step
    while right - left > tol * 1e-2 and right - left > 4 * np.spacing(abs(right)):
        mid = 0.5 * (left + right)
        if total(mid) <= zero_tol:
            left = mid
        else:
            right = mid
    return left


# --- disturbance-box enumeration ----------------------------------------


def _grid_axes(w_min, w_max, points):
    """One axis per (step, entry); zero-width entries collapse to one value."""
    axes = []
    for lo, hi in zip(np.ravel(w_min), np.ravel(w_max)):
        axes.append(np.array([lo]) if lo == hi else np.linspace(lo, hi, points))
    return axes


def grid_size(w_min, w_max, grid: GridSpec) -> int:
    return int(np.prod([a.size for a in _grid_axes(w_min, w_max, grid.points)], dtype=object))


def grid_points(w_min, w_max, grid: GridSpec) -> np.ndarray:
    """All grid realizations, shape ``(G, N, R + D)`` in lexicographic order."""
    w_min = np.asarray(w_min, float)
    size = grid_size(w_min, w_max, grid)
    if size > grid.cap:
        raise GridCapError(f"grid has {size} points, cap is {grid.cap}")
    axes = _grid_axes(w_min, w_max, grid.points)
    mesh = np.array(list(itertools.product(*axes)), float)
    return mesh.reshape(-1, *w_min.shape)


def _batch_costs(P, plan, delta0, params):
    wt = params.weights
    T = params.n_conv
    fixed = 0.0
    prev = np.asarray(delta0, float)
    for j in range(plan.horizon):
        d = plan.delta[j].astype(float)
        fixed += float(wt.c_on @ d + wt.c_sw @ np.abs(d - prev))
        prev = d
    var = P[:, :, :T] @ wt.c_t + P[:, :, T:T + params.n_storage] @ wt.c_s
    return var.sum(axis=1) + fixed


def _simulate_grid(plan, scenario, grid, params):
    from .dispatch import simulate_batch

    n = plan.horizon
    W = grid_points(scenario.w_min[:n], scenario.w_max[:n], grid)
    rho, P, X, feas, _ = simulate_batch(plan.u[None], plan.delta[None].astype(float), W,
                                        scenario.x0[None], params)
    return W, P, np.asarray(feas, bool)


def grid_worst_cost(plan, scenario, grid: GridSpec, params):
    """Largest horizon cost over the grid and a maximizing realization."""
    W, P, _ = _simulate_grid(plan, scenario, grid, params)
    costs = _batch_costs(P, plan, scenario.delta0, params)
    k = int(np.argmax(costs))  # first maximum: lowest grid index
    return float(costs[k]), W[k]


def grid_feasibility(plan, scenario, grid: GridSpec, params):
    """``(all_feasible, first_violation)``; the violation is ``(realization, step)``."""
    W, _, feas = _simulate_grid(plan, scenario, grid, params)
    ok = feas.all(axis=1)
    if ok.all():
        return True, None
    k = int(np.flatnonzero(~ok)[0])
    step = int(np.flatnonzero(~feas[k])[0])
    return False, (W[k], step)


# --- control-space enumeration ------------------------------------------


def _unsaturated_ok(U, DELTA, rho, X, Pw, x0, params):
    """Mask of runs where no droop expression needed saturation."""
    T, S, R = params.n_conv, params.n_storage, params.n_renewable
    e = U + params.chi * rho[..., None]
    tol = 1e-9
    ok = np.ones(rho.shape, bool)
    on = DELTA > 0.5
    if T:
        c = e[..., :T]
        ok &= np.all(~on | ((c >= params.p_min[:T] - tol) & (c <= params.p_max[:T] + tol)), axis=-1)
    if S:
        s = e[..., T:T + S]
        ok &= np.all((s >= params.p_min[T:T + S] - tol) & (s <= params.p_max[T:T + S] + tol), axis=-1)
        x_prev = np.concatenate([np.broadcast_to(x0, (X.shape[0], 1, S)), X[:, :-1]], axis=1)
        x_next = x_prev - params.ts * s
        ok &= np.all((x_next >= params.x_min - tol) & (x_next <= params.x_max + tol), axis=-1)
    if R:
        # the realized power min(e, w) must also respect the hard floor
        floor = params.p_min[T + S:] - tol
        ok &= np.all((e[..., T + S:] >= floor) & (Pw[..., T + S:] >= floor), axis=-1)
    return ok


def enumerate_small_milp(config, window, params, u_grid_points: int = 5,
                         cap: int = DEFAULT_CAP, batch: int = 20000):
    """Best grid cost over all switch sequences and a set-point grid.

    Returns ``(best_cost, best_plan)``; ``best_cost`` is ``inf`` when no
    grid plan is feasible. This is an upper bound on the MILP optimum.
    """
    from .dispatch import simulate_batch
    from .model import ControlPlan

    P = config.effective_params(params)
    n = config.horizon
    T, nu = P.n_conv, P.n_units
    if T * n > 12:
        raise GridCapError("switch enumeration limited to 12 binaries")
    u_axes = [np.linspace(P.u_min[i], P.u_max[i], u_grid_points) for i in range(nu)] * n
    n_u = u_grid_points ** (nu * n)
    total = n_u * 2 ** (T * n)
    if total > cap:
        raise GridCapError(f"enumeration has {total} plans, cap is {cap}")
    endpoints = [window.w_min[:n]]
    if config.robust:
        endpoints.append(window.w_max[:n])
    best, best_plan = np.inf, None
    u_all = np.array(list(itertools.product(*u_axes)), float).reshape(-1, n, nu)
    for bits in itertools.product((0.0, 1.0), repeat=T * n):
        D = np.array(bits, float).reshape(1, n, T)
        fixed = 0.0
        prev = np.asarray(window.delta0, float)
        for j in range(n):
            fixed += float(P.weights.c_on @ D[0, j] + P.weights.c_sw @ np.abs(D[0, j] - prev))
            prev = D[0, j]
        for start in range(0, u_all.shape[0], batch):
            U = u_all[start:start + batch]
            ok = np.ones(U.shape[0], bool)
            cost = None
            for k, W in enumerate(endpoints):
                rho, Pw, X, feas, _ = simulate_batch(U, D, W[None], window.x0[None], P)
                feas = np.asarray(feas, bool)
                if not config.saturated:
                    feas = feas & _unsaturated_ok(U, D, rho, X, Pw, window.x0, P)
                ok &= feas.all(axis=1)
                if k == 0:
                    cost = (Pw[:, :, :T] @ P.weights.c_t
                            + Pw[:, :, T:T + P.n_storage] @ P.weights.c_s).sum(axis=1) + fixed
            if not ok.any():
                continue
            cand = np.where(ok, cost, np.inf)
            m = int(np.argmin(cand))
            if cand[m] < best:
                best = float(cand[m])
                best_plan = ControlPlan(u=U[m], delta=D[0].astype(int))
    return best, best_plan
