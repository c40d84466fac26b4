import numpy as np
import pytest
from hypothesis import given, strategies as st

from droopsat.errors import DimensionError, InvalidBoundsError, NoDroopError, StateError
from droopsat.model import (ControlPlan, Scenario, StepOutcome, dynamic_storage_limits,
                            horizon_cost, saturate, stage_cost, validate_scenario)


@pytest.mark.parametrize("v,expected", [(0.5, 0.5), (0.1, 0.2), (1.3, 1.0)])
def test_saturate_examples(v, expected):
    assert saturate(0.2, v, 1.0) == expected


def test_saturate_rejects_inverted_bounds():
    with pytest.raises(InvalidBoundsError):
        saturate(1.0, 0.5, 0.2)


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(finite, finite, finite)
def test_saturate_idempotent_and_bounded(a, b, v):
    lo, hi = min(a, b), max(a, b)
    y = saturate(lo, v, hi)
    assert lo <= y <= hi
    assert saturate(lo, y, hi) == y


def _p(params, p_t=0.0, p_s=0.0, p_r=0.0):
    return np.array([p_t, p_s, p_r][: params.n_units])


def test_stage_cost_zero(toy_params):
    assert stage_cost(np.zeros(3), [0], [0], toy_params) == 0.0


def test_stage_cost_on_with_switch(toy_params):
    assert stage_cost(_p(toy_params, 0.6, -0.2), [1], [0], toy_params) == pytest.approx(0.92)


def test_stage_cost_storage_only_term(toy_params):
    assert stage_cost(_p(toy_params, 0.0, -0.2), [0], [0], toy_params) == pytest.approx(-0.18)


def test_stage_cost_ignores_renewable(toy_params):
    assert stage_cost(_p(toy_params, 0.0, 0.0, 0.7), [0], [0], toy_params) == 0.0


def test_stage_cost_dimension_error(toy_params):
    with pytest.raises(DimensionError):
        stage_cost(np.zeros(2), [0], [0], toy_params)


def _outcome(p):
    return StepOutcome(p=np.asarray(p, float), x=np.zeros(1), rho=0.0, sat_flags=np.zeros(3))


def test_horizon_cost_two_steps(toy_params):
    outs = [_outcome([0.6, -0.2, 0.0])] * 2
    plan = ControlPlan(u=np.zeros((2, 3)), delta=[[1], [1]])
    assert horizon_cost(outs, plan, [0], toy_params) == pytest.approx(1.54)


def test_horizon_cost_single_step_is_stage_cost(toy_params):
    plan = ControlPlan(u=np.zeros((1, 3)), delta=[[1]])
    p = [0.4, 0.1, 0.2]
    assert horizon_cost([_outcome(p)], plan, [1], toy_params) == pytest.approx(
        stage_cost(np.array(p), [1], [1], toy_params))


def test_horizon_cost_all_off_zero(toy_params):
    plan = ControlPlan(u=np.zeros((3, 3)), delta=[[0], [0], [0]])
    assert horizon_cost([_outcome([0, 0, 0])] * 3, plan, [0], toy_params) == 0.0


def test_horizon_cost_length_mismatch(toy_params):
    plan = ControlPlan(u=np.zeros((2, 3)), delta=[[0], [0]])
    with pytest.raises(DimensionError):
        horizon_cost([_outcome([0, 0, 0])], plan, [0], toy_params)


@pytest.mark.parametrize("x_prev,expected", [(2.0, (-1.0, 1.0)), (6.0, (0.0, 1.0)),
                                             (0.1, (-1.0, 0.4))])
def test_dynamic_storage_limits(table1, x_prev, expected):
    lo, hi = dynamic_storage_limits([x_prev], table1)
    assert (lo[0], hi[0]) == pytest.approx(expected)


def test_dynamic_storage_limits_rejects_out_of_range(table1):
    with pytest.raises(StateError):
        dynamic_storage_limits([7.0], table1)


def _scenario(**kw):
    base = dict(w_min=[[0.1, 0.1, -1.0]], w_max=[[0.2, 0.2, -0.8]], x0=[2.0], delta0=[0])
    base.update(kw)
    return Scenario(**base)


def test_validate_scenario_ok(table1):
    assert validate_scenario(_scenario(), table1) == []


def test_validate_scenario_inverted_interval(table1):
    report = validate_scenario(_scenario(w_min=[[0.3, 0.1, -1.0]]), table1)
    assert len(report) == 1
    assert "step 0" in report[0]


def test_validate_scenario_x0_above_max(table1):
    assert len(validate_scenario(_scenario(x0=[7.0]), table1)) == 1


def test_params_validation(table1):
    with pytest.raises(InvalidBoundsError):
        table1.replace(p_min=np.array([0.2, 0.5, 0.0, 0.0]))  # storage p_min must be < 0
    with pytest.raises(DimensionError):
        table1.replace(chi=np.array([1.0, 1.0]))
    with pytest.raises(NoDroopError):
        table1.replace(chi=np.zeros(4))


def test_params_dict_round_trip(table1):
    from droopsat.model import MicrogridParams

    assert MicrogridParams.from_dict(table1.to_dict()).to_dict() == table1.to_dict()


def test_control_plan_rejects_non_binary():
    with pytest.raises(InvalidBoundsError):
        ControlPlan(u=np.zeros((1, 2)), delta=[[0.5]])
