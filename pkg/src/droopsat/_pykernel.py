"""Pure-Python droop dispatch kernel.

Fallback for the compiled ``_ckernel`` module; both expose the same two
functions with the same semantics, and ``dispatch`` picks one at import.

Each unit contributes ``sat(lo_i, c_i + chi_i * rho, hi_i)`` to the power
balance. The balance function is augmented outside ``[rho_min, rho_max]`` so
that it is strictly increasing there, which makes a root always exist.
"""
import numpy as np

# breakpoints/residuals closer than this are treated as coincident/zero
ZERO_TOL = 1e-12


def _balance(rho, lo, hi, c, chi, const, rho_min, rho_max):
    total = const
    if rho < rho_min:
        total += rho - rho_min
    elif rho > rho_max:
        total += rho - rho_max
    for i in range(len(lo)):
        v = c[i] + chi[i] * rho
        if v < lo[i]:
            v = lo[i]
        elif v > hi[i]:
            v = hi[i]
        total += v
    return total


def max_root(lo, hi, c, chi, const, rho_min, rho_max):
    """Largest rho at which the augmented balance function vanishes."""
    n = len(lo)
    pts = [rho_min, rho_max]
    for i in range(n):
        if chi[i] > 0.0 and hi[i] > lo[i]:
            pts.append((lo[i] - c[i]) / chi[i])
            pts.append((hi[i] - c[i]) / chi[i])
    pts.sort()
    merged = [pts[0]]
    for b in pts[1:]:
        if b - merged[-1] > ZERO_TOL:
            merged.append(b)
    vals = [_balance(b, lo, hi, c, chi, const, rho_min, rho_max) for b in merged]

    k = -1
    for idx in range(len(merged) - 1, -1, -1):
        if vals[idx] <= ZERO_TOL:
            k = idx
            break
    if k == -1:
        # below every breakpoint only the augmentation term has slope (=1)
        return merged[0] - vals[0]
    if k == len(merged) - 1:
        return merged[k] - vals[k]
    f0, f1 = vals[k], vals[k + 1]
    if f0 >= 0.0:
        return merged[k]
    return merged[k] + (-f0) * (merged[k + 1] - merged[k]) / (f1 - f0)


def simulate_batch(U, DELTA, W, X0, n_conv, n_stor, n_ren, p_min, p_max,
                   x_min, x_max, chi, ts, rho_min, rho_max, rho_tol):
    """Roll out the saturated droop model for a batch of runs.

    Shapes: ``U (B, N, nu)``, ``DELTA (B, N, T)``, ``W (B, N, R + D)``,
    ``X0 (B, S)``. Returns ``rho (B, N)``, ``P (B, N, nu)``, ``X (B, N, S)``,
    ``feasible (B, N)`` and the balance residual ``RES (B, N)``.
    """
    U = np.asarray(U, float)
    B, N, nu = U.shape
    nd = W.shape[2]
    rho_out = np.empty((B, N))
    P = np.empty((B, N, nu))
    X = np.empty((B, N, n_stor))
    feas = np.empty((B, N), dtype=bool)
    res = np.empty((B, N))
    T, S, R = n_conv, n_stor, n_ren
    p_min = [float(v) for v in p_min]
    p_max = [float(v) for v in p_max]
    x_min = [float(v) for v in x_min]
    x_max = [float(v) for v in x_max]
    chi_l = [float(v) for v in chi]
    lo = [0.0] * nu
    hi = [0.0] * nu
    cc = [0.0] * nu
    ch = [0.0] * nu
    for b in range(B):
        x = [float(v) for v in X0[b]]
        for j in range(N):
            u = U[b, j].tolist()
            d = DELTA[b, j].tolist()
            w = W[b, j].tolist()
            for i in range(T):
                if d[i] > 0.5:
                    lo[i], hi[i], cc[i], ch[i] = p_min[i], p_max[i], u[i], chi_l[i]
                else:
                    lo[i] = hi[i] = cc[i] = ch[i] = 0.0
            for s in range(S):
                i = T + s
                a = max(p_min[i], (x[s] - x_max[s]) / ts)
                z = min(p_max[i], (x[s] - x_min[s]) / ts)
                lo[i], hi[i], cc[i], ch[i] = min(a, z), z, u[i], chi_l[i]
            for r in range(R):
                i = T + S + r
                wr = w[r]
                lo[i], hi[i], cc[i], ch[i] = min(p_min[i], wr), wr, u[i], chi_l[i]
            const = 0.0
            for q in range(R, nd):
                const += w[q]
            rho = max_root(lo, hi, cc, ch, const, rho_min, rho_max)
            rho_out[b, j] = rho
            for i in range(nu):
                v = cc[i] + ch[i] * rho
                if v < lo[i]:
                    v = lo[i]
                elif v > hi[i]:
                    v = hi[i]
                P[b, j, i] = v
            for s in range(S):
                x[s] = x[s] - ts * P[b, j, T + s]
                X[b, j, s] = x[s]
            feas[b, j] = (rho >= rho_min - rho_tol) and (rho <= rho_max + rho_tol)
            res[b, j] = _balance(rho, lo, hi, cc, ch, const, rho_min, rho_max)
    return rho_out, P, X, feas, res
