"""Dispatch model: scenario runs, verification, screening, sweeps."""

import dataclasses
from dataclasses import replace

import pytest

from iesdispatch.dispatch import (
    SCENARIO_IDS,
    SCENARIOS,
    DispatchOptions,
    StaticInfeasibleError,
    as_scenario,
    run_all_scenarios,
    run_scenario,
    sweep_interval,
    sweep_lambda,
    verify_solution,
)
from iesdispatch.model_core import default_case_path, load_case, reduce_case


def tiny_case(T, elec, gas, heat, wind, price=None, storages=None):
    """Small hand-built case reusing bundled devices and policies."""
    case = load_case(default_case_path())
    prices = price if price is not None else [0.49] * T
    return replace(
        case,
        horizon=replace(case.horizon, periods=T),
        loads={
            "electric": replace(case.loads["electric"], values=tuple(elec)),
            "gas": replace(case.loads["gas"], values=tuple(gas)),
            "heat": replace(case.loads["heat"], values=tuple(heat)),
        },
        wind_profile=tuple(wind),
        tariffs=replace(
            case.tariffs, electricity_price=tuple(prices), gas_price=(0.35,) * T
        ),
        storages=() if storages is None else storages,
    )


@pytest.fixture(scope="module")
def reduced_case():
    return reduce_case(load_case(default_case_path()), 2)


@pytest.fixture(scope="module")
def reduced_options():
    return DispatchOptions(pwl_segments=4)


@pytest.fixture(scope="module")
def reduced_report(reduced_case, reduced_options):
    return run_all_scenarios(reduced_case, reduced_options)


# -- scenario table ---------------------------------------------------------------


def test_scenario_catalog():
    assert SCENARIO_IDS == ("S1", "S2", "S3", "S4", "S5")
    assert not SCENARIOS["S1"].carbon_in_objective
    assert SCENARIOS["S2"].mechanism == "traditional"
    assert SCENARIOS["S3"].mechanism == "tiered"
    assert SCENARIOS["S4"].dr_shift and not SCENARIOS["S4"].dr_substitute
    assert SCENARIOS["S5"].dr_shift and SCENARIOS["S5"].dr_substitute
    assert as_scenario(SCENARIOS["S3"]) is SCENARIOS["S3"]
    with pytest.raises(ValueError, match="unknown scenario"):
        as_scenario("S9")


# -- single-period oracles ----------------------------------------------------------


def test_single_period_purchase_covers_residual_load():
    toy = tiny_case(1, [100.0], [0.0], [0.0], [40.0])
    sol = run_scenario(toy, "S1")
    assert sol.status == "optimal"
    assert sol.p_e_buy[0] == pytest.approx(60.0, abs=1e-6)
    assert sol.p_dg[0] == pytest.approx(40.0, abs=1e-6)


def test_single_period_all_scenarios_verified():
    toy = tiny_case(1, [100.0], [0.0], [0.0], [40.0])
    for sid in SCENARIO_IDS:
        sol = run_scenario(toy, sid)
        assert sol.status == "optimal"
        assert sol.verification is not None and sol.verification.passed


def test_screen_rejects_oversized_heat_load():
    big = tiny_case(1, [100.0], [0.0], [5000.0], [0.0])
    with pytest.raises(StaticInfeasibleError) as err:
        run_scenario(big, "S1")
    assert err.value.family == "heat_balance"
    assert "maximum heat supply" in str(err.value)


def test_ratio_bracket_outside_range_forces_chp_off():
    toy = tiny_case(1, [100.0], [0.0], [100.0], [0.0])
    narrowed = replace(toy, chp=replace(toy.chp, ratio_min=1.0, ratio_max=2.0))
    sol = run_scenario(narrowed, "S1")
    assert sol.p_gt_e[0] == pytest.approx(0.0, abs=1e-9)
    assert sol.p_gt_h[0] == pytest.approx(0.0, abs=1e-9)
    assert sol.p_gb_h[0] == pytest.approx(100.0 / 0.82 * 0.82, abs=1e-6)


def test_extraction_mode_relaxes_coupling():
    toy = tiny_case(1, [100.0], [50.0], [100.0], [0.0])
    fixed = run_scenario(toy, "S3")
    relaxed_case = replace(toy, chp=replace(toy.chp, extraction_mode=True))
    relaxed = run_scenario(relaxed_case, "S3")
    assert relaxed.verification.passed
    assert relaxed.objective <= fixed.objective + 1e-4 * max(1.0, abs(fixed.objective))


# -- demand-response behavior --------------------------------------------------------


def test_shift_moves_load_to_cheap_period():
    toy = tiny_case(2, [100.0, 100.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], price=[0.83, 0.17])
    sol = run_scenario(toy, "S4")
    shift = sol.dr_delta["electric"]["shift"]
    assert shift[0] == pytest.approx(-10.0, abs=1e-6)
    assert shift[0] == pytest.approx(-shift[1], abs=1e-9)
    assert sol.p_e_buy == pytest.approx((90.0, 110.0), abs=1e-6)
    assert sol.costs.dr == pytest.approx(0.2 * 20.0, abs=1e-6)
    assert sol.satisfaction >= 0.85


def test_dr_compensation_zero_without_dr(reduced_report):
    for sid in ("S1", "S2", "S3"):
        assert reduced_report.solutions[sid].costs.dr == 0.0
    assert reduced_report.solutions["S4"].costs.dr > 0.0


# -- objective composition -------------------------------------------------------------


def test_s1_objective_excludes_carbon_but_total_includes_it(reduced_report):
    sol = reduced_report.solutions["S1"]
    costs = sol.costs
    assert costs.carbon > 0.0
    assert sol.objective == pytest.approx(
        costs.purchase + costs.dr + costs.maintenance, rel=1e-6
    )
    assert costs.total == pytest.approx(
        costs.purchase + costs.carbon + costs.dr + costs.maintenance, rel=1e-9
    )
    assert sol.surrogate_actual_kg is None
    assert sol.surrogate_carbon_cost is None


def test_priced_scenarios_embed_carbon_in_objective(reduced_report):
    for sid in ("S3", "S4", "S5"):
        sol = reduced_report.solutions[sid]
        assert sol.surrogate_carbon_cost is not None
        assert sol.objective == pytest.approx(
            sol.costs.purchase + sol.costs.dr + sol.costs.maintenance
            + sol.surrogate_carbon_cost,
            rel=1e-6,
        )


# -- whole-report structure -------------------------------------------------------------


def test_report_rows_ordered_and_verified(reduced_case, reduced_report):
    assert [r.scenario_id for r in reduced_report.rows] == list(SCENARIO_IDS)
    for row in reduced_report.rows:
        assert row.status == "optimal"
        sol = reduced_report.solutions[row.scenario_id]
        rep = verify_solution(reduced_case, row.scenario_id, sol)
        assert rep.passed, rep.failures


def test_report_percentages_reference_first_row(reduced_report):
    base = reduced_report.rows[0]
    assert set(reduced_report.percentages) == {"S2", "S3", "S4", "S5"}
    pct = reduced_report.percentages["S5"]
    row5 = next(r for r in reduced_report.rows if r.scenario_id == "S5")
    assert pct["cost_drop_pct"] == pytest.approx(
        100.0 * (base.total_cost - row5.total_cost) / base.total_cost
    )
    assert pct["emission_drop_pct"] == pytest.approx(
        100.0 * (base.emissions_kg - row5.emissions_kg) / base.emissions_kg
    )


def test_carbon_pricing_lowers_cost_vs_unpriced(reduced_report):
    rows = {r.scenario_id: r for r in reduced_report.rows}
    assert rows["S3"].total_cost <= rows["S1"].total_cost + 1e-6


def test_no_purchase_while_wind_curtailed(reduced_report):
    # cheap wind is always preferred over any purchase price
    for sol in reduced_report.solutions.values():
        for t in range(sol.periods):
            curtailed = sol.wind_available[t] - sol.p_dg[t]
            assert not (sol.p_e_buy[t] > 1e-6 and curtailed > 1e-6), (
                sol.scenario_id,
                t,
                sol.p_e_buy[t],
                curtailed,
            )


def test_jobs_parallel_matches_serial(reduced_case, reduced_options, reduced_report):
    parallel = run_all_scenarios(reduced_case, reduced_options, jobs=2)
    for serial_row, par_row in zip(reduced_report.rows, parallel.rows):
        assert serial_row.scenario_id == par_row.scenario_id
        assert par_row.total_cost == pytest.approx(serial_row.total_cost, rel=1e-9)
        assert par_row.emissions_kg == pytest.approx(serial_row.emissions_kg, rel=1e-9)
        assert par_row.objective == pytest.approx(serial_row.objective, rel=1e-9)


# -- tamper detection ---------------------------------------------------------------


def test_verification_catches_tampered_balance():
    toy = tiny_case(1, [100.0], [0.0], [0.0], [40.0])
    sol = run_scenario(toy, "S1")
    tampered = dataclasses.replace(sol, p_e_buy=(61.0,))
    report = verify_solution(toy, "S1", tampered)
    assert not report.passed
    assert any(f.startswith("balance_electric") for f in report.failures)


def test_verification_catches_storage_tamper(reduced_case, reduced_report):
    sol = reduced_report.solutions["S3"]
    st = dict(sol.storage)
    sched = st["electric"]
    bent = dataclasses.replace(
        sched, soc=tuple(v + 5.0 for v in sched.soc)
    )
    st["electric"] = bent
    tampered = dataclasses.replace(sol, storage=st)
    report = verify_solution(reduced_case, "S3", tampered)
    assert not report.passed
    assert any("storage" in f for f in report.failures)


# -- linearization control -----------------------------------------------------------


def test_pwl_bound_scales_inverse_square(reduced_case):
    coarse = run_scenario(reduced_case, "S3", DispatchOptions(pwl_segments=2))
    fine = run_scenario(reduced_case, "S3", DispatchOptions(pwl_segments=16))
    assert coarse.pwl_bound_kg == pytest.approx(64.0 * fine.pwl_bound_kg, rel=1e-9)
    for sol in (coarse, fine):
        gap = abs(sol.emission.actual.total - sol.surrogate_actual_kg)
        assert gap <= sol.pwl_bound_kg + 1e-9
    assert fine.verification.passed and coarse.verification.passed


# -- sweeps ------------------------------------------------------------------------


def test_sweep_grid_validation(reduced_case):
    with pytest.raises(ValueError, match="strictly increasing"):
        sweep_lambda(reduced_case, "S3", [0.3, 0.2])
    with pytest.raises(ValueError, match="positive"):
        sweep_interval(reduced_case, "S3", [-1.0, 2.0])
    with pytest.raises(ValueError, match="empty"):
        sweep_lambda(reduced_case, "S3", [])


def test_single_point_lambda_sweep_matches_run(reduced_case, reduced_options):
    base = run_scenario(reduced_case, "S3", reduced_options)
    points = sweep_lambda(reduced_case, "S3", [0.251], reduced_options)
    assert len(points) == 1
    pt = points[0]
    assert pt.status == "optimal"
    assert pt.value == pytest.approx(0.251)
    assert pt.total_cost == pytest.approx(base.costs.total, rel=1e-9)
    assert pt.emissions_kg == pytest.approx(base.emission.actual.total, rel=1e-9)


def test_single_point_interval_sweep_matches_run(reduced_case, reduced_options):
    base = run_scenario(reduced_case, "S5", reduced_options)
    points = sweep_interval(reduced_case, "S5", [2000.0], reduced_options)
    assert len(points) == 1
    assert points[0].total_cost == pytest.approx(base.costs.total, rel=1e-9)
