import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from droopsat.errors import (BackendLookupError, DuplicateBackendError, InvalidBoundsError,
                             SolverResourceError)
from droopsat.milp import EQ, GE, LE, MilpBuilder
from droopsat.model import Scenario
from droopsat.mpc import ControllerConfig, build_problem
from droopsat.mps import mps_string, parse_mps, read_mps, write_mps
from droopsat.solver import (SolveOptions, SubprocessBackend, available_backends, branch_and_bound,
                             get_backend, register_backend, solve_lp, solve_milp,
                             unregister_backend)

from conftest import three_unit


def single_var(lo_row, lb=0.0, ub=1.0):
    b = MilpBuilder()
    x = b.add_var("x", lb, ub)
    b.ge(x, lo_row)
    b.minimize(x)
    return b.build()


def test_lp_simple_bound():
    res = solve_lp(single_var(0.3))
    assert res.status == "optimal" and res.objective == pytest.approx(0.3)


def test_lp_contradiction_infeasible():
    assert solve_lp(single_var(2.0)).status == "infeasible"


def test_lp_balance_toy():
    b = MilpBuilder()
    pt = b.add_var("pt", 0.2, 1.0)
    ps = b.add_var("ps", -1.0, 0.5)
    b.eq(pt + ps, 1.0)
    b.minimize(pt)
    res = solve_lp(b.build())
    assert res.objective == pytest.approx(0.5)


def test_builder_rejects_empty_domain():
    with pytest.raises(InvalidBoundsError):
        MilpBuilder().add_var("x", 1.0, 0.0)


def enumerate_binaries(inst):
    """Exhaustive oracle: LP (scipy.linprog) for every binary assignment."""
    bins = np.flatnonzero(inst.binary)
    A = inst.A.toarray()
    le, ge, eq = inst.sense == LE, inst.sense == GE, inst.sense == EQ
    A_ub = np.vstack([A[le], -A[ge]])
    b_ub = np.concatenate([inst.rhs[le], -inst.rhs[ge]])
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=bins.size):
        lb, ub = inst.lb.copy(), inst.ub.copy()
        lb[bins] = ub[bins] = bits
        if np.any(lb > ub):
            continue
        res = optimize.linprog(inst.c, A_ub=A_ub if A_ub.size else None,
                               b_ub=b_ub if A_ub.size else None,
                               A_eq=A[eq] if eq.any() else None, b_eq=inst.rhs[eq] if eq.any() else None,
                               bounds=list(zip(lb, ub)), method="highs")
        if res.status == 0:
            best = min(best, res.fun + inst.objective_offset)
    return best


def prescient_toy(w_r=0.3, w_d=-1.0, x0=2.0, delta0=0, simplify=False):
    P = three_unit()
    sc = Scenario(w_min=[[w_r, w_d]], w_max=[[w_r, w_d]], x0=[x0], delta0=[delta0])
    return build_problem(ControllerConfig("prescient", 1), sc, P, simplify=simplify)


def test_prescient_toy_matches_enumeration():
    inst = prescient_toy()
    assert inst.n_binaries == 9
    sol = solve_milp(inst)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(enumerate_binaries(inst), abs=1e-6)


@settings(max_examples=20)
@given(st.floats(0.0, 1.0), st.floats(-2.5, 0.0), st.floats(0.0, 6.0), st.integers(0, 1))
def test_toys_match_enumeration(w_r, w_d, x0, d0):
    inst = prescient_toy(w_r, w_d, x0, d0, simplify=True)
    expected = enumerate_binaries(inst)
    sol = solve_milp(inst)
    if np.isinf(expected):
        assert sol.status == "infeasible"
    else:
        assert sol.objective == pytest.approx(expected, abs=1e-6)


def test_integral_relaxation_single_node():
    b = MilpBuilder()
    z = b.add_binary("z")
    x = b.add_var("x", 0.0, 1.0)
    b.ge(x, 0.25)
    b.le(z, 0.0)
    b.minimize(x + z)
    sol = solve_milp(b.build())
    assert sol.nodes == 1 and sol.objective == pytest.approx(0.25)


def test_infeasible_overload():
    inst = prescient_toy(w_r=0.0, w_d=-5.0)
    assert solve_milp(inst).status == "infeasible"


def test_node_limit_without_incumbent_raises():
    inst = build_problem(ControllerConfig("sat_res_droop_mm", 4),
                         Scenario(w_min=[[0.2, -1.2]] * 4, w_max=[[0.4, -0.8]] * 4, x0=[3.0],
                                  delta0=[0]), three_unit())
    with pytest.raises(SolverResourceError):
        solve_milp(inst, SolveOptions(node_limit=1))


def test_determinism():
    inst = build_problem(ControllerConfig("sat_res_droop_mm", 3),
                         Scenario(w_min=[[0.2, -1.2]] * 3, w_max=[[0.4, -0.8]] * 3, x0=[3.0],
                                  delta0=[0]), three_unit())
    a, b = solve_milp(inst), solve_milp(inst)
    assert a.objective == b.objective
    np.testing.assert_array_equal(a.x, b.x)


def test_bound_monotone_along_tree():
    inst = build_problem(ControllerConfig("sat_res_droop_mm", 3),
                         Scenario(w_min=[[0.2, -1.2]] * 3, w_max=[[0.4, -0.8]] * 3, x0=[3.0],
                                  delta0=[0]), three_unit())
    sol = branch_and_bound(inst, SolveOptions(keep_node_log=True))
    assert sol.node_log
    for parent, child in sol.node_log:
        assert child >= parent - 1e-7


def test_start_point_used_as_incumbent():
    inst = build_problem(ControllerConfig("sat_res_droop_mm", 3),
                         Scenario(w_min=[[0.2, -1.2]] * 3, w_max=[[0.4, -0.8]] * 3, x0=[3.0],
                                  delta0=[0]), three_unit())
    ref = solve_milp(inst)
    warm = solve_milp(inst, start=ref.x)
    assert warm.objective == pytest.approx(ref.objective, abs=1e-9)
    assert warm.nodes <= ref.nodes


def test_highs_backend_agrees():
    inst = prescient_toy()
    assert solve_milp(inst, backend="highs").objective == pytest.approx(
        solve_milp(inst).objective, abs=1e-6)


def test_solve_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(gap_abs=0.0)
    with pytest.raises(ValueError):
        SolveOptions(branching="strong")


# --- registry -------------------------------------------------------------


def test_external_backend_round_trip(tmp_path):
    import sys

    cmd = [sys.executable, "-m", "droopsat.external_solver", "{instance}", "{solution}"]
    register_backend("ext-test", SubprocessBackend(cmd, name="ext-test"))
    try:
        for w_d in (-0.6, -1.0, -1.4):
            inst = prescient_toy(w_d=w_d)
            assert solve_milp(inst, backend="ext-test").objective == pytest.approx(
                solve_milp(inst).objective, abs=1e-6)
        with pytest.raises(DuplicateBackendError):
            register_backend("ext-test", SubprocessBackend(cmd))
    finally:
        unregister_backend("ext-test")
    assert "ext-test" not in available_backends()


def test_unknown_backend():
    with pytest.raises(BackendLookupError):
        get_backend("nope")
    with pytest.raises(BackendLookupError):
        solve_milp(prescient_toy(), backend="nope")


def test_reference_always_available():
    assert "reference" in available_backends()
    with pytest.raises(ValueError):
        unregister_backend("reference")


# --- MPS ------------------------------------------------------------------


def _same_instance(a, b):
    assert a.names == b.names
    np.testing.assert_array_equal(a.lb, b.lb)
    np.testing.assert_array_equal(a.ub, b.ub)
    np.testing.assert_array_equal(a.binary, b.binary)
    np.testing.assert_array_equal(a.c, b.c)
    np.testing.assert_array_equal(a.A.toarray(), b.A.toarray())
    np.testing.assert_array_equal(a.sense, b.sense)
    np.testing.assert_array_equal(a.rhs, b.rhs)
    assert a.objective_offset == b.objective_offset


def test_mps_round_trip(tmp_path):
    inst = build_problem(ControllerConfig("sat_res_droop_mm", 2),
                         Scenario(w_min=[[0.2, -1.2]] * 2, w_max=[[0.4, -0.8]] * 2, x0=[3.0],
                                  delta0=[1]), three_unit())
    path = tmp_path / "w.mps"
    write_mps(inst, path)
    back = read_mps(path)
    _same_instance(inst, back)
    assert solve_milp(back).objective == pytest.approx(solve_milp(inst).objective, abs=1e-9)


def test_mps_offset_and_markers():
    b = MilpBuilder()
    x = b.add_var("x", 0.0, 2.0)
    z = b.add_binary("z")
    b.le(x - z, 0.5, "r0")
    b.minimize(-x + 3.0)
    text = mps_string(b.build())
    assert "'INTORG'" in text and "'INTEND'" in text
    assert "RHS OBJ -3" in text.replace("  ", " ")
    back = parse_mps(text)
    assert back.objective_offset == 3.0
    assert solve_milp(back).objective == pytest.approx(1.5)
