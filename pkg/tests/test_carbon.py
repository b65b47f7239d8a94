"""Carbon accounting: quota, actual emissions, tiered cost, MILP encoding."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iesdispatch.carbon import (
    FlowSchedule,
    actual_emissions,
    carbon_cost,
    emission_account,
    encode_carbon_cost,
    n_tiers,
    quota_total,
    tier_cost,
    tier_knee,
    tier_slope,
    traditional_cost,
)
from iesdispatch.milp_ir import EQ, MilpModel, as_expression
from iesdispatch.model_core import (
    MECHANISM_NONE,
    MECHANISM_TRADITIONAL,
    default_case_path,
    load_case,
)
from iesdispatch.solver import solve_milp


@pytest.fixture(scope="module")
def policy():
    return load_case(default_case_path()).carbon


def _flat(step_hours=1.0, **kw) -> FlowSchedule:
    fields = dict(p_e_buy=0.0, p_gt_e=0.0, p_gt_h=0.0, p_gb_h=0.0, p_g_load=0.0, p_p2g_g=0.0)
    fields.update(kw)
    return FlowSchedule(step_hours=step_hours, **{k: [v] * 24 for k, v in fields.items()})


# -- tiered cost curve -----------------------------------------------------------


def test_tier_cost_spot_values(policy):
    assert tier_cost(0.0, policy) == pytest.approx(0.0, abs=1e-9)
    assert tier_cost(2000.0, policy) == pytest.approx(502.0, abs=1e-9)
    assert tier_cost(5000.0, policy) == pytest.approx(1506.0, abs=1e-9)
    assert tier_cost(-1000.0, policy) == pytest.approx(-251.0, abs=1e-9)


def test_tier_cost_continuous_at_knees(policy):
    for k in range(1, n_tiers(policy)):
        knee = k * policy.interval_d
        below = tier_cost(knee - 1e-9, policy)
        above = tier_cost(knee + 1e-9, policy)
        assert above - below == pytest.approx(0.0, abs=1e-7)
        assert tier_cost(knee, policy) == pytest.approx(tier_knee(policy, k), abs=1e-9)


def test_tier_slopes_escalate(policy):
    slopes = [tier_slope(policy, k) for k in range(n_tiers(policy))]
    assert slopes[0] == pytest.approx(policy.lambda_base)
    assert slopes == sorted(slopes)
    assert slopes[-1] == pytest.approx(policy.lambda_base * (1 + 5 * policy.alpha_growth))


def test_traditional_cost(policy):
    assert traditional_cost(5000.0, policy) == pytest.approx(1255.0, abs=1e-9)
    assert traditional_cost(-1000.0, policy) == pytest.approx(-251.0, abs=1e-9)


def test_carbon_cost_dispatch(policy):
    assert carbon_cost(5000.0, policy) == tier_cost(5000.0, policy)
    trad = replace(policy, mechanism=MECHANISM_TRADITIONAL)
    assert carbon_cost(5000.0, trad) == traditional_cost(5000.0, trad)
    none = replace(policy, mechanism=MECHANISM_NONE)
    assert carbon_cost(5000.0, none) == 0.0


@settings(max_examples=200, deadline=None)
@given(share=st.floats(min_value=0.0, max_value=50_000.0, allow_nan=False))
def test_tier_cost_dominates_base_price(share):
    policy = load_case(default_case_path()).carbon
    assert tier_cost(share, policy) >= policy.lambda_base * share - 1e-9


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(min_value=-20_000.0, max_value=50_000.0),
    b=st.floats(min_value=-20_000.0, max_value=50_000.0),
)
def test_tier_cost_monotone_in_share(a, b):
    policy = load_case(default_case_path()).carbon
    lo, hi = min(a, b), max(a, b)
    assert tier_cost(lo, policy) <= tier_cost(hi, policy) + 1e-9


# -- accounting ------------------------------------------------------------------


def test_quota_purchased_power(policy):
    q = quota_total(_flat(p_e_buy=100.0), policy)
    assert q.e_buy == pytest.approx(1915.2)  # 0.798 * 100 kW * 24 h
    assert q.gt == q.gb == q.g_load == 0.0


def test_quota_heat_output(policy):
    q = quota_total(_flat(p_gt_h=25.0, p_gb_h=25.0), policy)
    assert q.gt + q.gb == pytest.approx(462.0)  # 0.385 * 50 kW * 24 h


def test_quota_weights_gt_power_by_sigma_eh(policy):
    only_e = quota_total(_flat(p_gt_e=10.0), policy)
    only_h = quota_total(_flat(p_gt_h=10.0), policy)
    assert only_e.gt == pytest.approx(policy.sigma_eh * only_h.gt)


def test_actual_linear_coal(policy):
    linear = replace(policy, coal_quad=(0.0, 1.0, 0.0))
    a = actual_emissions(_flat(p_e_buy=10.0), linear)
    assert a.e_buy == pytest.approx(240.0)  # 1.0 kg/kWh * 10 kW * 24 h


def test_actual_p2g_absorption(policy):
    a = actual_emissions(_flat(p_p2g_g=100.0), policy)
    assert a.p2g == pytest.approx(480.0)  # 0.2 * 100 kW * 24 h, subtracted
    acct = emission_account(_flat(p_p2g_g=100.0), policy)
    total = acct.actual.e_buy + acct.actual.gtgb + acct.actual.g_load - acct.actual.p2g
    assert total == pytest.approx(-480.0)


def test_actual_quadratic_terms(policy):
    a = actual_emissions(_flat(p_e_buy=100.0), policy)
    per_hour = 0.9 * 100.0 + 1e-4 * 100.0**2
    assert a.e_buy == pytest.approx(per_hour * 24.0)
    g = actual_emissions(_flat(p_gt_e=50.0, p_gt_h=30.0, p_gb_h=20.0), policy)
    q = 50.0 + 30.0 + 20.0
    assert g.gtgb == pytest.approx((0.48 * q + 8e-5 * q * q) * 24.0)


def test_step_hours_scales_energy(policy):
    one = quota_total(_flat(p_e_buy=100.0), policy)
    two = quota_total(_flat(step_hours=2.0, p_e_buy=100.0), policy)
    assert two.e_buy == pytest.approx(2.0 * one.e_buy)


# -- MILP encoding ---------------------------------------------------------------


def _encoded_cost(act_val, quo_val, policy):
    m = MilpModel()
    act = m.add_continuous(-20_000, 20_000, "act")
    quo = m.add_continuous(-20_000, 20_000, "quo")
    m.add_constraint(as_expression(act), EQ, act_val, "pin_a")
    m.add_constraint(as_expression(quo), EQ, quo_val, "pin_q")
    cost = encode_carbon_cost(
        m, policy, as_expression(act), as_expression(quo), 20_000.0, 20_000.0
    )
    m.set_objective(cost)
    res = solve_milp(m)
    return res.status, res.objective


def test_encoding_matches_tier_cost(policy):
    for share in (5000.0, 3141.5, 0.0, 123.4):
        status, obj = _encoded_cost(share, 0.0, policy)
        assert status == "optimal"
        assert obj == pytest.approx(tier_cost(share, policy), abs=1e-7)


def test_encoding_matches_at_knees(policy):
    for k in range(1, n_tiers(policy)):
        share = k * policy.interval_d
        status, obj = _encoded_cost(share, 0.0, policy)
        assert status == "optimal"
        assert obj == pytest.approx(tier_cost(share, policy), abs=1e-7)


def test_encoding_negative_share_subsidy(policy):
    # selling happens through surplus quota, actual stays non-negative
    status, obj = _encoded_cost(500.0, 1500.0, policy)
    assert status == "optimal"
    assert obj == pytest.approx(-251.0, abs=1e-7)


def test_encoding_rejects_negative_actual(policy):
    status, _ = _encoded_cost(-1000.0, 0.0, policy)
    assert status == "infeasible"


def test_encoding_traditional_and_none(policy):
    trad = replace(policy, mechanism=MECHANISM_TRADITIONAL)
    status, obj = _encoded_cost(5000.0, 0.0, trad)
    assert status == "optimal"
    assert obj == pytest.approx(1255.0, abs=1e-7)

    none = replace(policy, mechanism=MECHANISM_NONE)
    m = MilpModel()
    act = m.add_continuous(0, 10, "act")
    expr = encode_carbon_cost(m, none, as_expression(act), as_expression(0.0), 10.0, 0.0)
    assert not expr.coeffs and expr.constant == 0.0
