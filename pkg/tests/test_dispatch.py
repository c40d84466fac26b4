import numpy as np
import pytest
from hypothesis import given, strategies as st

from droopsat import _pykernel
from droopsat.dispatch import (FEAS_TOL, KERNEL, augmented_total_power, breakpoints,
                               dispatch_step, rho_bounds, simulate_batch, simulate_horizon,
                               solve_rho, storage_dynamic_limits_path, storage_transform_path)
from droopsat.errors import DimensionError, NoDroopError
from droopsat.model import ControlPlan
from droopsat.oracles import bisection_rho
from droopsat.verify import flat_run_inputs, random_params, random_step_inputs

from conftest import storage_only, three_unit

seeds = st.integers(0, 2**32 - 1)


def test_rho_bounds_table1(table1):
    b = rho_bounds(table1)
    assert (b.rho_min, b.rho_max) == (-6.0, 6.0)


def test_rho_bounds_storage_only(storage_params):
    b = rho_bounds(storage_params)
    assert (b.rho_min, b.rho_max) == (-6.0, 6.0)


def test_single_unit_without_droop():
    with pytest.raises(NoDroopError):
        storage_only().replace(chi=np.array([0.0]))


@pytest.mark.parametrize("w_d,rho,expected", [(-0.5, 0.5, 0.0), (-1.5, 6.1, -0.4), (0.0, 0.0, 0.0)])
def test_augmented_total_power(storage_params, w_d, rho, expected):
    val = augmented_total_power([0.0], [], [2.0], [w_d], rho, storage_params)
    assert val == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("w_d,rho,feasible", [(-0.5, 0.5, True), (-1.5, 6.5, False),
                                              (-1.0, 6.0, True)])
def test_solve_rho_storage_examples(storage_params, w_d, rho, feasible):
    r, ok = solve_rho([0.0], [], [2.0], [w_d], storage_params)
    assert r == pytest.approx(rho, abs=1e-12)
    assert ok is feasible
    assert bisection_rho([0.0], [], [2.0], [w_d], storage_params) == pytest.approx(rho, abs=1e-9)


def test_dispatch_step_renewable_saturates(toy_params):
    out = dispatch_step([2.0], [0.5, 0.0, 0.3], [1], [0.2, -1.0], toy_params)
    assert out.rho == pytest.approx(0.15)
    assert out.p == pytest.approx([0.65, 0.15, 0.2])
    assert out.x == pytest.approx([2.0 - 0.25 * 0.15])
    assert out.feasible
    assert out.sat_flags.tolist() == [0, 0, 1]


def test_dispatch_step_all_zero(toy_params):
    out = dispatch_step([2.0], [0.0, 0.0, 0.0], [0], [0.0, 0.0], toy_params)
    assert np.all(out.p == 0.0)
    assert out.x[0] == 2.0
    # the storage term is strictly increasing around zero, so the root is unique
    assert out.rho == pytest.approx(0.0, abs=1e-12)


def test_storage_paths_at_low_energy(table1):
    p1, x1 = storage_dynamic_limits_path([0.1], [1.0], 0.0, table1)
    p2, x2 = storage_transform_path([0.1], [1.0], 0.0, table1)
    assert p1 == pytest.approx([0.4]) and x1 == pytest.approx([0.0], abs=1e-15)
    assert p2 == pytest.approx([0.4]) and x2 == pytest.approx([0.0], abs=1e-15)


def test_simulate_horizon_storage_two_steps(storage_params):
    plan = ControlPlan(u=np.zeros((2, 1)), delta=np.zeros((2, 0)))
    outs = simulate_horizon([[-0.5], [-0.5]], plan, [2.0], storage_params)
    assert [o.x[0] for o in outs] == pytest.approx([1.875, 1.75])


def test_simulate_horizon_single_step_matches_dispatch(toy_params):
    plan = ControlPlan(u=[[0.5, 0.0, 0.3]], delta=[[1]])
    (out,) = simulate_horizon([[0.2, -1.0]], plan, [2.0], toy_params)
    ref = dispatch_step([2.0], [0.5, 0.0, 0.3], [1], [0.2, -1.0], toy_params)
    assert np.array_equal(out.p, ref.p) and out.rho == ref.rho


def test_simulate_horizon_flags_and_continues(storage_params):
    plan = ControlPlan(u=np.zeros((3, 1)), delta=np.zeros((3, 0)))
    outs = simulate_horizon([[-0.5], [-3.0], [-0.5]], plan, [2.0], storage_params)
    assert [o.feasible for o in outs] == [True, False, True]
    assert len(outs) == 3


def test_dimension_errors(toy_params):
    with pytest.raises(DimensionError):
        dispatch_step([2.0], [0.5, 0.0], [1], [0.2, -1.0], toy_params)
    plan = ControlPlan(u=np.zeros((2, 3)), delta=[[0], [0]])
    with pytest.raises(DimensionError):
        simulate_horizon([[0.2, -1.0]], plan, [2.0], toy_params)


def test_breakpoints_sorted(toy_params):
    bps = breakpoints([0.5, 0.0, 0.3], [1], [2.0], [0.2, -1.0], toy_params)
    assert [b.rho for b in bps] == sorted(b.rho for b in bps)
    assert len(bps) == 6


# --- properties -----------------------------------------------------------


@given(seeds)
def test_root_is_zero_and_maximal(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng)
    u, d, x, w = random_step_inputs(rng, P)
    rho, ok = solve_rho(u, d, x, w, P)
    assert abs(augmented_total_power(u, d, x, w, rho, P)) <= 1e-9
    # strictly positive just to the right: no larger root exists
    assert augmented_total_power(u, d, x, w, rho + 1e-6, P) > 0.0
    b = rho_bounds(P)
    assert ok == (b.rho_min - FEAS_TOL <= rho <= b.rho_max + FEAS_TOL)


@given(seeds)
def test_dispatch_balance_and_limits(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng)
    u, d, x, w = random_step_inputs(rng, P)
    out = dispatch_step(x, u, d, w, P)
    if out.feasible:
        assert abs(out.p.sum() + w[P.n_renewable:].sum()) <= 1e-6
    assert np.all(out.x >= P.x_min - 1e-12) and np.all(out.x <= P.x_max + 1e-12)
    assert np.all(out.p[P.conv][np.asarray(d) == 0] == 0.0)


@given(seeds)
def test_rho_matches_bisection_oracle(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng)
    gen = flat_run_inputs if seed % 3 == 0 else random_step_inputs
    u, d, x, w = gen(rng, P)
    assert solve_rho(u, d, x, w, P)[0] == pytest.approx(bisection_rho(u, d, x, w, P), abs=1e-9)


@given(seeds)
def test_rho_monotone(seed):
    from droopsat.verify import _perturb_up

    rng = np.random.default_rng(seed)
    P = random_params(rng)
    u, d, x1, w1 = random_step_inputs(rng, P)
    x2, w2 = _perturb_up(rng, P, x1, w1)
    assert solve_rho(u, d, x2, w2, P)[0] <= solve_rho(u, d, x1, w1, P)[0] + 1e-9


@given(seeds)
def test_storage_paths_agree(seed):
    rng = np.random.default_rng(seed)
    P = random_params(rng, n_storage=int(rng.integers(1, 3)))
    x = rng.uniform(P.x_min, P.x_max)
    u_s = rng.uniform(P.u_min[P.stor], P.u_max[P.stor])
    rho = rng.uniform(-8, 8)
    p1, x1 = storage_dynamic_limits_path(x, u_s, rho, P)
    p2, x2 = storage_transform_path(x, u_s, rho, P)
    assert np.max(np.abs(p1 - p2)) <= 1e-12 and np.max(np.abs(x1 - x2)) <= 1e-12


# --- kernel parity --------------------------------------------------------


@pytest.mark.skipif(KERNEL != "cython", reason="compiled kernel not built")
@given(seeds)
def test_kernels_agree(seed):
    from droopsat import _ckernel

    rng = np.random.default_rng(seed)
    P = random_params(rng)
    b = rho_bounds(P)
    N, B = 3, 4
    U = rng.uniform(P.u_min, P.u_max, (B, N, P.n_units))
    D = rng.integers(0, 2, (B, N, P.n_conv)).astype(float)
    W = np.concatenate([rng.uniform(0, P.renewable_cap, (B, N, P.n_renewable)),
                        -rng.uniform(0, 2, (B, N, P.n_load))], axis=2)
    X0 = rng.uniform(P.x_min, P.x_max, (B, P.n_storage))
    args = (U, D, W, X0, P.n_conv, P.n_storage, P.n_renewable, P.p_min, P.p_max, P.x_min,
            P.x_max, P.chi, P.ts, b.rho_min, b.rho_max, FEAS_TOL)
    for a, c in zip(_pykernel.simulate_batch(*args), _ckernel.simulate_batch(*args)):
        np.testing.assert_array_equal(np.asarray(a), np.asarray(c))


@given(seeds)
def test_batch_matches_scalar_path(seed):
    rng = np.random.default_rng(seed)
    P = three_unit()
    plan = ControlPlan(u=rng.uniform(P.u_min, P.u_max, (3, 3)), delta=rng.integers(0, 2, (3, 1)))
    w = np.column_stack([rng.uniform(0, 1, 3), -rng.uniform(0, 2, 3)])
    outs = simulate_horizon(w, plan, [3.0], P)
    rho, Pb, X, feas, _ = simulate_batch(plan.u[None], plan.delta[None].astype(float), w[None],
                                         np.array([[3.0]]), P)
    assert np.allclose(rho[0], [o.rho for o in outs], atol=1e-12)
    assert np.allclose(Pb[0], [o.p for o in outs], atol=1e-12)
    assert list(np.asarray(feas[0], bool)) == [o.feasible for o in outs]


def test_pure_python_selected_by_env():
    import os
    import subprocess
    import sys

    code = "import droopsat.dispatch as d; print(d.KERNEL)"
    env = dict(os.environ, DROOPSAT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
