"""Scenario assembly, optimization, and verification for the dispatch model.

The system buys electricity and gas under time-of-use tariffs and serves
electric, gas, and heat loads through a gas turbine with waste-heat
recovery (CHP), a gas boiler, power-to-gas, per-carrier storage, and wind.
The bundled scenarios differ in how carbon is priced and which
demand-response levers are active:

  S1  tiered carbon accounting reported but excluded from the objective
  S2  traditional single-price carbon cost in the objective
  S3  tiered carbon cost in the objective
  S4  S3 plus time-shift demand response
  S5  S4 plus cross-carrier load substitution

`build_model` emits the MILP for one scenario; `run_scenario` solves it and
refuses to return a solution that fails independent verification;
`run_all_scenarios` produces the five-row comparison table and
`sweep_lambda` / `sweep_interval` the carbon-policy sensitivity series.

Powers are kW, energies kWh, emissions kg, money in currency units.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from . import carbon as carbon_mod
from .carbon import FlowSchedule, emission_account
from .demand_response import (
    SHIFT,
    SUBSTITUTE,
    DrVarMap,
    build_dr_blocks,
    decompose_loads,
    satisfaction_index,
)
from .milp_ir import (
    EQ,
    GE,
    LE,
    LinearExpression,
    MilpModel,
    as_expression,
    pwl_convex,
    pwl_convex_error_bound,
    pwl_convex_value,
    quad_value,
)
from .model_core import (
    CARRIERS,
    MECHANISM_TIERED,
    MECHANISM_TRADITIONAL,
    CaseData,
    StorageParams,
)
from .solver import MilpOptions, get_backend, solve_milp

ELECTRIC, GAS, HEAT = CARRIERS


class DispatchError(Exception):
    pass


class StaticInfeasibleError(DispatchError):
    """A constraint family is unsatisfiable before any solve is attempted."""

    def __init__(self, family: str, message: str):
        super().__init__(f"{family}: {message}")
        self.family = family


class SolveFailedError(DispatchError):
    """The solver returned no usable incumbent."""

    def __init__(self, scenario_id: str, status: str, detail: str = ""):
        msg = f"scenario {scenario_id}: solver status {status!r}"
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.scenario_id = scenario_id
        self.status = status


class VerificationError(DispatchError):
    """An extracted solution failed independent recomputation."""

    def __init__(self, scenario_id: str, failures: list[str]):
        super().__init__(
            f"scenario {scenario_id}: {len(failures)} verification failure(s): "
            + "; ".join(failures[:5])
        )
        self.failures = failures


# -- scenarios -----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """One pricing/demand-response configuration.

    carbon_in_objective: whether the carbon trading cost is part of the
    minimized objective (it is always reported).  mechanism: how that cost
    is computed ("traditional" single price or "tiered" escalating prices).
    """

    id: str
    carbon_in_objective: bool
    mechanism: str
    dr_shift: bool
    dr_substitute: bool


SCENARIOS: dict[str, ScenarioSpec] = {
    "S1": ScenarioSpec("S1", False, MECHANISM_TIERED, False, False),
    "S2": ScenarioSpec("S2", True, MECHANISM_TRADITIONAL, False, False),
    "S3": ScenarioSpec("S3", True, MECHANISM_TIERED, False, False),
    "S4": ScenarioSpec("S4", True, MECHANISM_TIERED, True, False),
    "S5": ScenarioSpec("S5", True, MECHANISM_TIERED, True, True),
}
SCENARIO_IDS = tuple(SCENARIOS)


def as_scenario(scenario) -> ScenarioSpec:
    """Accept a ScenarioSpec or one of the bundled ids."""
    if isinstance(scenario, ScenarioSpec):
        return scenario
    try:
        return SCENARIOS[str(scenario)]
    except KeyError:
        raise ValueError(
            f"unknown scenario {scenario!r} (bundled: {', '.join(SCENARIO_IDS)})"
        ) from None


@dataclass(frozen=True)
class DispatchOptions:
    """Solver and approximation settings for scenario runs."""

    pwl_segments: int = 8
    gap_tol: float = 1e-4
    int_tol: float = 1e-6
    node_limit: int = 200_000
    time_limit: float | None = None
    backend: str = "embedded"  # embedded | scipy-milp | external
    lp_core: str = "scipy"  # LP relaxation core for the embedded branch and bound
    dive: bool = True

    def milp_options(self) -> MilpOptions:
        return MilpOptions(
            gap_tol=self.gap_tol,
            int_tol=self.int_tol,
            node_limit=self.node_limit,
            time_limit=self.time_limit,
            lp_core=self.lp_core,
            dive=self.dive,
        )


# -- model assembly --------------------------------------------------------------


def _sum_exprs(terms) -> LinearExpression:
    coeffs: dict[int, float] = {}
    const = 0.0
    for term in terms:
        e = as_expression(term)
        const += e.constant
        for vid, c in e.coeffs.items():
            coeffs[vid] = coeffs.get(vid, 0.0) + c
    return LinearExpression(coeffs, const)


_ZERO = LinearExpression()


@dataclass
class StorageBlock:
    params: StorageParams
    charge: list
    discharge: list
    soc: list
    gate: list


@dataclass
class VarMap:
    """Handles into the built model, per period unless noted."""

    scenario: ScenarioSpec
    options: DispatchOptions
    wind_available: tuple[float, ...]
    p_e_buy: list = field(default_factory=list)
    p_g_buy: list = field(default_factory=list)
    p_dg: list = field(default_factory=list)
    p_p2g_e: list = field(default_factory=list)
    p_p2g_g: list = field(default_factory=list)
    p_g_gt: list = field(default_factory=list)
    p_gt_e: list = field(default_factory=list)
    p_gt_h: list = field(default_factory=list)
    p_g_gb: list = field(default_factory=list)
    p_gb_h: list = field(default_factory=list)
    storage: dict[str, StorageBlock] = field(default_factory=dict)
    dr: DrVarMap | None = None
    cost_buy: LinearExpression = _ZERO
    cost_dr: LinearExpression = _ZERO
    cost_maint: LinearExpression = _ZERO
    carbon_cost: LinearExpression | None = None
    actual_expr: LinearExpression | None = None
    quota_expr: LinearExpression | None = None
    pwl_bound_kg: float = 0.0


def _chp_params(case: CaseData):
    """Composite CHP figures: electric and useful-heat efficiency per unit gas."""
    gt = case.converter("GT")
    whb = case.converter("WHB")
    eps_e = gt.efficiencies.get("electric", 0.0) if gt else 0.0
    eps_h_raw = gt.efficiencies.get("heat", 0.0) if gt else 0.0
    whb_eff = whb.efficiencies.get("heat", 0.0) if whb else 0.0
    gt_cap = gt.capacity_kw if gt else 0.0
    whb_cap = whb.capacity_kw if whb else 0.0
    return gt, whb, eps_e, eps_h_raw * whb_eff, gt_cap, whb_cap


def _dr_outflow(case: CaseData, scenario: ScenarioSpec, carrier: str, t: int,
                dec) -> float:
    """Largest load reduction demand response may deliver in one period."""
    out = 0.0
    if scenario.dr_shift and carrier in case.dr.shift_carriers:
        override = case.dr.shift_bounds.get(carrier)
        lo = -dec.shiftable_base[carrier][t] if override is None else override[0]
        out += max(0.0, -lo)
    if scenario.dr_substitute and carrier in case.dr.subst_carriers:
        out += dec.substitutable_base[carrier][t]
    return out


def _screen(case: CaseData, scenario: ScenarioSpec):
    """Reject loads no combination of devices could ever serve."""
    dec = decompose_loads(case)
    gt, whb, eps_e, eps_h, gt_cap, whb_cap = _chp_params(case)
    gb = case.converter("GB")
    p2g = case.converter("P2G")
    gb_heat_max = gb.efficiencies.get("heat", 0.0) * gb.capacity_kw if gb else 0.0
    p2g_gas_max = p2g.efficiencies.get("gas", 0.0) * p2g.capacity_kw if p2g else 0.0
    gt_heat_max = min(eps_h * gt_cap, whb_cap) if whb else 0.0

    def dis_max(carrier):
        sto = case.storage(carrier)
        return sto.power_limit_fraction * sto.capacity_kwh if sto else 0.0

    cap_e, cap_g = case.purchase_caps
    for t in range(case.horizon.periods):
        avail = min(case.wind_profile[t], case.wind_max_kw)
        supply = {
            ELECTRIC: cap_e + avail + eps_e * gt_cap + dis_max(ELECTRIC),
            GAS: cap_g + p2g_gas_max + dis_max(GAS),
            HEAT: gt_heat_max + gb_heat_max + dis_max(HEAT),
        }
        for carrier in CARRIERS:
            need = case.loads[carrier].values[t] - _dr_outflow(case, scenario, carrier, t, dec)
            if need > supply[carrier] + 1e-9:
                raise StaticInfeasibleError(
                    f"{carrier}_balance",
                    f"period {t}: load {need:.1f} kW exceeds maximum "
                    f"{carrier} supply {supply[carrier]:.1f} kW",
                )


def build_model(case: CaseData, scenario, options: DispatchOptions | None = None):
    """Assemble the MILP for one scenario; returns (model, VarMap)."""
    scenario = as_scenario(scenario)
    options = options or DispatchOptions()
    _screen(case, scenario)
    periods = case.horizon.periods
    dt = case.horizon.step_hours
    model = MilpModel(name=f"dispatch_{scenario.id}")
    avail = tuple(min(f, case.wind_max_kw) for f in case.wind_profile)
    vm = VarMap(scenario=scenario, options=options, wind_available=avail)

    cap_e, cap_g = case.purchase_caps
    for t in range(periods):
        vm.p_e_buy.append(as_expression(model.add_continuous(0.0, cap_e, f"p_e_buy_t{t:02d}")))
        vm.p_g_buy.append(as_expression(model.add_continuous(0.0, cap_g, f"p_g_buy_t{t:02d}")))
        vm.p_dg.append(as_expression(model.add_continuous(0.0, avail[t], f"p_dg_t{t:02d}")))

    def add_ramp(name, inputs, cap, frac):
        step = frac * cap
        for t in range(1, periods):
            model.add_constraint(inputs[t] - inputs[t - 1], LE, step, f"ramp_{name}_up_t{t:02d}")
            model.add_constraint(inputs[t - 1] - inputs[t], LE, step, f"ramp_{name}_dn_t{t:02d}")

    p2g = case.converter("P2G")
    if p2g and p2g.capacity_kw > 0:
        eta = p2g.efficiencies.get("gas", 0.0)
        for t in range(periods):
            v = model.add_continuous(p2g.min_output_kw, p2g.capacity_kw, f"p_p2g_e_t{t:02d}")
            vm.p_p2g_e.append(as_expression(v))
            vm.p_p2g_g.append(eta * v)
        add_ramp("p2g", vm.p_p2g_e, p2g.capacity_kw, p2g.ramp_fraction)
    else:
        vm.p_p2g_e = [_ZERO] * periods
        vm.p_p2g_g = [_ZERO] * periods

    gt, whb, eps_e, eps_h, gt_cap, whb_cap = _chp_params(case)
    if gt and gt_cap > 0:
        for t in range(periods):
            g = model.add_continuous(gt.min_output_kw, gt_cap, f"p_g_gt_t{t:02d}")
            vm.p_g_gt.append(as_expression(g))
            if case.chp.extraction_mode:
                pe = model.add_continuous(0.0, eps_e * gt_cap, f"p_gt_e_t{t:02d}")
                ph_cap = min(eps_h * gt_cap, whb_cap) if whb else 0.0
                ph = model.add_continuous(0.0, ph_cap, f"p_gt_h_t{t:02d}")
                model.add_constraint(pe - eps_e * g, LE, 0.0, f"chp_e_fuel_t{t:02d}")
                model.add_constraint(ph - eps_h * g, LE, 0.0, f"chp_h_fuel_t{t:02d}")
                vm.p_gt_e.append(as_expression(pe))
                vm.p_gt_h.append(as_expression(ph))
            else:
                vm.p_gt_e.append(eps_e * g)
                vm.p_gt_h.append(eps_h * g)
                if whb and eps_h * gt_cap > whb_cap:
                    model.add_constraint(vm.p_gt_h[t], LE, whb_cap, f"chp_whb_cap_t{t:02d}")
            # heat-to-power corridor; outside it the unit is forced off
            lo_row = case.chp.ratio_min * vm.p_gt_e[t] - vm.p_gt_h[t]
            hi_row = vm.p_gt_h[t] - case.chp.ratio_max * vm.p_gt_e[t]
            if lo_row.coeffs:
                model.add_constraint(lo_row, LE, 0.0, f"chp_ratio_lo_t{t:02d}")
            if hi_row.coeffs:
                model.add_constraint(hi_row, LE, 0.0, f"chp_ratio_hi_t{t:02d}")
        add_ramp("gt", vm.p_g_gt, gt_cap, gt.ramp_fraction)
    else:
        vm.p_g_gt = [_ZERO] * periods
        vm.p_gt_e = [_ZERO] * periods
        vm.p_gt_h = [_ZERO] * periods

    gb = case.converter("GB")
    if gb and gb.capacity_kw > 0:
        phi = gb.efficiencies.get("heat", 0.0)
        for t in range(periods):
            g = model.add_continuous(gb.min_output_kw, gb.capacity_kw, f"p_g_gb_t{t:02d}")
            vm.p_g_gb.append(as_expression(g))
            vm.p_gb_h.append(phi * g)
        add_ramp("gb", vm.p_g_gb, gb.capacity_kw, gb.ramp_fraction)
    else:
        vm.p_g_gb = [_ZERO] * periods
        vm.p_gb_h = [_ZERO] * periods

    for sto in case.storages:
        cap = sto.capacity_kwh
        plim = sto.power_limit_fraction * cap
        k = sto.carrier
        blk = StorageBlock(sto, [], [], [], [])
        for t in range(periods):
            blk.charge.append(model.add_continuous(0.0, plim, f"st_{k}_ch_t{t:02d}"))
            blk.discharge.append(model.add_continuous(0.0, plim, f"st_{k}_dis_t{t:02d}"))
            blk.soc.append(
                model.add_continuous(sto.soc_min_frac * cap, sto.soc_max_frac * cap, f"st_{k}_soc_t{t:02d}")
            )
            u = model.add_binary(f"st_{k}_gate_t{t:02d}")
            blk.gate.append(u)
            model.add_constraint(blk.charge[t] - plim * u, LE, 0.0, f"storage_{k}_gate_ch_t{t:02d}")
            model.add_constraint(blk.discharge[t] + plim * u, LE, plim, f"storage_{k}_gate_dis_t{t:02d}")
            prev = sto.soc_initial_frac * cap if t == 0 else blk.soc[t - 1]
            step = sto.charge_eff * dt * blk.charge[t] - (dt / sto.discharge_eff) * blk.discharge[t]
            model.add_constraint(blk.soc[t] - step - prev, EQ, 0.0, f"storage_{k}_soc_t{t:02d}")
        model.add_constraint(
            as_expression(blk.soc[-1]), EQ, sto.soc_initial_frac * cap, f"storage_{k}_terminal"
        )
        vm.storage[k] = blk

    vm.dr = build_dr_blocks(case, scenario, model)

    def net_storage(carrier, t):
        blk = vm.storage.get(carrier)
        if blk is None:
            return _ZERO
        return blk.discharge[t] - blk.charge[t]

    for t in range(periods):
        supply_e = (
            vm.p_e_buy[t] + vm.p_dg[t] + vm.p_gt_e[t] + net_storage(ELECTRIC, t) - vm.p_p2g_e[t]
        )
        model.add_constraint(
            supply_e - vm.dr.adjusted[ELECTRIC][t], EQ, 0.0, f"balance_electric_t{t:02d}"
        )
        supply_g = (
            vm.p_g_buy[t] + vm.p_p2g_g[t] + net_storage(GAS, t) - vm.p_g_gt[t] - vm.p_g_gb[t]
        )
        model.add_constraint(
            supply_g - vm.dr.adjusted[GAS][t], EQ, 0.0, f"balance_gas_t{t:02d}"
        )
        supply_h = vm.p_gt_h[t] + vm.p_gb_h[t] + net_storage(HEAT, t)
        model.add_constraint(
            supply_h - vm.dr.adjusted[HEAT][t], EQ, 0.0, f"balance_heat_t{t:02d}"
        )

    tariffs = case.tariffs
    vm.cost_buy = _sum_exprs(
        dt * (tariffs.electricity_price[t] * vm.p_e_buy[t] + tariffs.gas_price[t] * vm.p_g_buy[t])
        for t in range(periods)
    )
    vm.cost_dr = vm.dr.compensation
    omega = case.maintenance
    maint_terms = []
    for t in range(periods):
        term = (
            omega.get("wind", 0.0) * vm.p_dg[t]
            + omega.get("P2G", 0.0) * vm.p_p2g_g[t]
            + omega.get("GT", 0.0) * vm.p_gt_e[t]
            + omega.get("WHB", 0.0) * vm.p_gt_h[t]
            + omega.get("GB", 0.0) * vm.p_gb_h[t]
        )
        for k, blk in vm.storage.items():
            term = term + omega.get(f"storage_{k}", 0.0) * (blk.charge[t] + blk.discharge[t])
        maint_terms.append(dt * term)
    vm.cost_maint = _sum_exprs(maint_terms)

    objective = vm.cost_buy + vm.cost_dr + vm.cost_maint
    if scenario.carbon_in_objective:
        policy = replace(case.carbon, mechanism=scenario.mechanism)
        vm.carbon_cost, vm.actual_expr, vm.quota_expr, vm.pwl_bound_kg = _encode_carbon(
            case, scenario, options, model, vm, policy
        )
        objective = objective + vm.carbon_cost
    model.set_objective(objective)
    return model, vm


def _gas_unit_heat_rate_max(case: CaseData) -> float:
    """Largest combined useful output of the gas-fired units in one period."""
    gt, whb, eps_e, eps_h, gt_cap, whb_cap = _chp_params(case)
    gb = case.converter("GB")
    gb_heat_max = gb.efficiencies.get("heat", 0.0) * gb.capacity_kw if gb else 0.0
    gt_heat_max = min(eps_h * gt_cap, whb_cap) if whb else 0.0
    return eps_e * gt_cap + gt_heat_max + gb_heat_max


def _adjusted_gas_max(case: CaseData, scenario: ScenarioSpec, dec, t: int) -> float:
    """Upper bound on the reshaped gas load in one period."""
    inflow = 0.0
    if scenario.dr_shift and GAS in case.dr.shift_carriers:
        override = case.dr.shift_bounds.get(GAS)
        hi = dec.shiftable_base[GAS][t] if override is None else override[1]
        inflow += max(0.0, hi)
    if scenario.dr_substitute and GAS in case.dr.subst_carriers:
        inflow += dec.substitutable_base[GAS][t]
    return case.loads[GAS].values[t] + inflow


def _encode_carbon(case, scenario, options, model, vm, policy):
    """Emission accounting expressions plus the trading-cost encoding.

    Actual emissions are quadratic in purchased power and in the combined
    gas-unit output; each quadratic is replaced per period by its tangent
    envelope (a guaranteed underestimator with a quadratic error law), so
    the model stays linear.  The quota and the remaining emission terms are
    affine and exact.
    """
    periods = case.horizon.periods
    dt = case.horizon.step_hours
    dec = decompose_loads(case)
    cap_e = case.purchase_caps[0]
    q_max = _gas_unit_heat_rate_max(case)
    n = options.pwl_segments

    actual_terms = []
    quota_terms = []
    bound = 0.0
    for t in range(periods):
        if cap_e > 0:
            y_coal = pwl_convex(model, vm.p_e_buy[t], policy.coal_quad, cap_e, n, f"em_coal_t{t:02d}")
            bound += pwl_convex_error_bound(policy.coal_quad[2], cap_e, n) * dt
        else:
            y_coal = quad_value(policy.coal_quad, 0.0)
        q_expr = vm.p_gt_e[t] + vm.p_gt_h[t] + vm.p_gb_h[t]
        if q_max > 0:
            y_gas = pwl_convex(model, q_expr, policy.gas_quad, q_max, n, f"em_gas_t{t:02d}")
            bound += pwl_convex_error_bound(policy.gas_quad[2], q_max, n) * dt
        else:
            y_gas = quad_value(policy.gas_quad, 0.0)
        gas_load = vm.dr.adjusted[GAS][t]
        actual_terms.append(
            dt * (as_expression(y_coal) + y_gas + policy.delta_gasload * gas_load
                  - policy.theta_p2g * vm.p_p2g_g[t])
        )
        quota_terms.append(
            dt * (policy.sigma_e * vm.p_e_buy[t]
                  + policy.sigma_h * (policy.sigma_eh * vm.p_gt_e[t] + vm.p_gt_h[t])
                  + policy.sigma_h * vm.p_gb_h[t]
                  + policy.sigma_gload * gas_load)
        )
    actual = _sum_exprs(actual_terms)
    quota = _sum_exprs(quota_terms)

    m_actual = 0.0
    m_quota = 0.0
    gt, whb, eps_e, eps_h, gt_cap, whb_cap = _chp_params(case)
    gt_heat_max = min(eps_h * gt_cap, whb_cap) if whb else 0.0
    gb = case.converter("GB")
    gb_heat_max = gb.efficiencies.get("heat", 0.0) * gb.capacity_kw if gb else 0.0
    for t in range(periods):
        g_hi = _adjusted_gas_max(case, scenario, dec, t)
        m_actual += dt * (
            quad_value(policy.coal_quad, cap_e)
            + quad_value(policy.gas_quad, q_max)
            + policy.delta_gasload * g_hi
        )
        m_quota += dt * (
            policy.sigma_e * cap_e
            + policy.sigma_h * (policy.sigma_eh * eps_e * gt_cap + gt_heat_max)
            + policy.sigma_h * gb_heat_max
            + policy.sigma_gload * g_hi
        )
    cost = carbon_mod.encode_carbon_cost(model, policy, actual, quota, m_actual, m_quota)
    return cost, actual, quota, bound


# -- solutions ---------------------------------------------------------------------


@dataclass(frozen=True)
class StorageSchedule:
    charge: tuple[float, ...]
    discharge: tuple[float, ...]
    soc: tuple[float, ...]


@dataclass(frozen=True)
class CostBreakdown:
    purchase: float
    carbon: float
    dr: float
    maintenance: float
    total: float


@dataclass
class DispatchSolution:
    """Per-period schedules plus cost/emission summary for one scenario run.

    `costs.carbon` and `emission` use the exact quadratic accounting of the
    final schedule; `surrogate_actual_kg` / `surrogate_carbon_cost` are the
    linearized figures the optimizer priced (None when carbon was excluded
    from the objective).  `objective` is the solver objective, which covers
    purchase, maintenance, compensation, and (when priced) the surrogate
    carbon cost.
    """

    scenario_id: str
    periods: int
    step_hours: float
    p_e_buy: tuple[float, ...]
    p_g_buy: tuple[float, ...]
    p_dg: tuple[float, ...]
    wind_available: tuple[float, ...]
    p_p2g_e: tuple[float, ...]
    p_p2g_g: tuple[float, ...]
    p_g_gt: tuple[float, ...]
    p_gt_e: tuple[float, ...]
    p_gt_h: tuple[float, ...]
    p_g_gb: tuple[float, ...]
    p_gb_h: tuple[float, ...]
    storage: dict[str, StorageSchedule]
    dr_delta: dict[str, dict[str, tuple[float, ...]]]
    adjusted_loads: dict[str, tuple[float, ...]]
    costs: CostBreakdown
    emission: object
    satisfaction: float
    surrogate_actual_kg: float | None
    surrogate_carbon_cost: float | None
    pwl_bound_kg: float
    pwl_segments: int
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    status: str
    verification: "VerificationReport | None" = None


def _snap(v: float, eps: float = 1e-9) -> float:
    return 0.0 if abs(v) < eps else float(v)


def _values(exprs, x) -> tuple[float, ...]:
    return tuple(_snap(as_expression(e).value(x)) for e in exprs)


def _extract(case: CaseData, scenario: ScenarioSpec, vm: VarMap, res) -> DispatchSolution:
    x = res.x
    periods = case.horizon.periods
    dt = case.horizon.step_hours
    storage = {
        k: StorageSchedule(
            _values(blk.charge, x), _values(blk.discharge, x),
            tuple(as_expression(s).value(x) for s in blk.soc),
        )
        for k, blk in vm.storage.items()
    }
    dr_delta: dict[str, dict[str, tuple[float, ...]]] = {}
    for (k, dtype), deltas in vm.dr.delta.items():
        dr_delta.setdefault(k, {})[dtype] = tuple(d.value(x) for d in deltas)
    adjusted = {k: tuple(e.value(x) for e in vm.dr.adjusted[k]) for k in CARRIERS}

    schedule = FlowSchedule(
        step_hours=dt,
        p_e_buy=_values(vm.p_e_buy, x),
        p_gt_e=_values(vm.p_gt_e, x),
        p_gt_h=_values(vm.p_gt_h, x),
        p_gb_h=_values(vm.p_gb_h, x),
        p_g_load=adjusted[GAS],
        p_p2g_g=_values(vm.p_p2g_g, x),
    )
    policy = replace(case.carbon, mechanism=scenario.mechanism)
    account = emission_account(schedule, policy)
    carbon_exact = carbon_mod.carbon_cost(account.trading_share, policy)
    buy = vm.cost_buy.value(x)
    dr_cost = vm.cost_dr.value(x)
    maint = vm.cost_maint.value(x)
    costs = CostBreakdown(
        purchase=buy, carbon=carbon_exact, dr=dr_cost, maintenance=maint,
        total=buy + carbon_exact + dr_cost + maint,
    )
    original = {k: case.loads[k].values for k in CARRIERS}
    return DispatchSolution(
        scenario_id=scenario.id,
        periods=periods,
        step_hours=dt,
        p_e_buy=schedule.p_e_buy,
        p_g_buy=_values(vm.p_g_buy, x),
        p_dg=_values(vm.p_dg, x),
        wind_available=vm.wind_available,
        p_p2g_e=_values(vm.p_p2g_e, x),
        p_p2g_g=schedule.p_p2g_g,
        p_g_gt=_values(vm.p_g_gt, x),
        p_gt_e=schedule.p_gt_e,
        p_gt_h=schedule.p_gt_h,
        p_g_gb=_values(vm.p_g_gb, x),
        p_gb_h=schedule.p_gb_h,
        storage=storage,
        dr_delta=dr_delta,
        adjusted_loads=adjusted,
        costs=costs,
        emission=account,
        satisfaction=satisfaction_index(original, adjusted),
        surrogate_actual_kg=None if vm.actual_expr is None else vm.actual_expr.value(x),
        surrogate_carbon_cost=None if vm.carbon_cost is None else vm.carbon_cost.value(x),
        pwl_bound_kg=vm.pwl_bound_kg,
        pwl_segments=vm.options.pwl_segments,
        objective=res.objective,
        bound=res.bound,
        gap=res.gap,
        nodes=res.nodes,
        wall_time=res.wall_time,
        status=res.status,
    )


# -- verification ---------------------------------------------------------------


@dataclass
class VerificationReport:
    """Residuals of every identity recomputed from the schedules alone."""

    passed: bool
    checks: list[tuple[str, float, float]]
    failures: list[str]

    def residual(self, name: str) -> float:
        for check_name, res, _tol in self.checks:
            if check_name == name:
                return res
        raise KeyError(name)


def verify_solution(case: CaseData, scenario, sol: DispatchSolution) -> VerificationReport:
    """Recompute every model identity from the schedules and case data.

    Covers carrier balances, device couplings and limits, ramps, storage
    dynamics, demand-response arithmetic, the satisfaction floor, the cost
    breakdown, and the exact-vs-linearized emission gap.  Each check records
    (name, residual, tolerance); the report passes iff all residuals are
    within tolerance.
    """
    scenario = as_scenario(scenario)
    periods = case.horizon.periods
    dt = case.horizon.step_hours
    checks: list[tuple[str, float, float]] = []
    failures: list[str] = []

    def check(name: str, residual: float, tol: float):
        checks.append((name, residual, tol))
        if not (residual <= tol):
            failures.append(f"{name}: residual {residual:.3e} exceeds {tol:.3e}")

    def over(value, limit):
        return max(0.0, value - limit)

    # demand-response deltas and reshaped loads
    adjusted = {}
    for k in CARRIERS:
        base = case.loads[k].values
        deltas = sol.dr_delta.get(k, {})
        adjusted[k] = tuple(
            base[t] + sum(series[t] for series in deltas.values()) for t in range(periods)
        )
    for k in CARRIERS:
        peak = max(max(case.loads[k].values), 1.0)
        drift = max(abs(a - b) for a, b in zip(adjusted[k], sol.adjusted_loads[k]))
        check(f"adjusted_load_{k}", drift, 1e-6 * peak)

    # carrier balances
    def net_storage(k, t):
        sched = sol.storage.get(k)
        return sched.discharge[t] - sched.charge[t] if sched else 0.0

    for k, supply in (
        (ELECTRIC, lambda t: sol.p_e_buy[t] + sol.p_dg[t] + sol.p_gt_e[t]
         + net_storage(ELECTRIC, t) - sol.p_p2g_e[t]),
        (GAS, lambda t: sol.p_g_buy[t] + sol.p_p2g_g[t] + net_storage(GAS, t)
         - sol.p_g_gt[t] - sol.p_g_gb[t]),
        (HEAT, lambda t: sol.p_gt_h[t] + sol.p_gb_h[t] + net_storage(HEAT, t)),
    ):
        peak = max(max(case.loads[k].values), 1.0)
        residual = max(abs(supply(t) - adjusted[k][t]) for t in range(periods))
        check(f"balance_{k}", residual, 1e-6 * peak)

    # device couplings, limits, ramps
    gt, whb, eps_e, eps_h, gt_cap, whb_cap = _chp_params(case)
    gb = case.converter("GB")
    p2g = case.converter("P2G")

    def ramp_residual(series, cap, frac):
        if periods < 2:
            return 0.0
        return max(
            over(abs(series[t] - series[t - 1]), frac * cap) for t in range(1, periods)
        )

    if p2g:
        eta = p2g.efficiencies.get("gas", 0.0)
        scale = max(p2g.capacity_kw, 1.0)
        check(
            "p2g_coupling",
            max(abs(sol.p_p2g_g[t] - eta * sol.p_p2g_e[t]) for t in range(periods)),
            1e-6 * scale,
        )
        check("p2g_capacity", max(over(v, p2g.capacity_kw) for v in sol.p_p2g_e), 1e-6 * scale)
        check("p2g_ramp", ramp_residual(sol.p_p2g_e, p2g.capacity_kw, p2g.ramp_fraction), 1e-6 * scale)
    if gt:
        scale = max(gt_cap, 1.0)
        if case.chp.extraction_mode:
            check(
                "chp_e_fuel",
                max(over(sol.p_gt_e[t], eps_e * sol.p_g_gt[t]) for t in range(periods)),
                1e-6 * scale,
            )
            check(
                "chp_h_fuel",
                max(over(sol.p_gt_h[t], eps_h * sol.p_g_gt[t]) for t in range(periods)),
                1e-6 * scale,
            )
        else:
            check(
                "chp_e_coupling",
                max(abs(sol.p_gt_e[t] - eps_e * sol.p_g_gt[t]) for t in range(periods)),
                1e-6 * scale,
            )
            check(
                "chp_h_coupling",
                max(abs(sol.p_gt_h[t] - eps_h * sol.p_g_gt[t]) for t in range(periods)),
                1e-6 * scale,
            )
        check(
            "chp_ratio",
            max(
                max(over(case.chp.ratio_min * sol.p_gt_e[t], sol.p_gt_h[t]),
                    over(sol.p_gt_h[t], case.chp.ratio_max * sol.p_gt_e[t]))
                for t in range(periods)
            ),
            1e-6 * scale,
        )
        check("chp_fuel_capacity", max(over(v, gt_cap) for v in sol.p_g_gt), 1e-6 * scale)
        if whb:
            check("chp_whb_capacity", max(over(v, whb_cap) for v in sol.p_gt_h), 1e-6 * scale)
        check("chp_ramp", ramp_residual(sol.p_g_gt, gt_cap, gt.ramp_fraction), 1e-6 * scale)
    if gb:
        phi = gb.efficiencies.get("heat", 0.0)
        scale = max(gb.capacity_kw, 1.0)
        check(
            "gb_coupling",
            max(abs(sol.p_gb_h[t] - phi * sol.p_g_gb[t]) for t in range(periods)),
            1e-6 * scale,
        )
        check("gb_capacity", max(over(v, gb.capacity_kw) for v in sol.p_g_gb), 1e-6 * scale)
        check("gb_ramp", ramp_residual(sol.p_g_gb, gb.capacity_kw, gb.ramp_fraction), 1e-6 * scale)

    check(
        "wind_availability",
        max(over(sol.p_dg[t], sol.wind_available[t]) for t in range(periods)),
        1e-6 * max(case.wind_max_kw, 1.0),
    )
    check("purchase_cap_electric", max(over(v, case.purchase_caps[0]) for v in sol.p_e_buy),
          1e-6 * max(case.purchase_caps[0], 1.0))
    check("purchase_cap_gas", max(over(v, case.purchase_caps[1]) for v in sol.p_g_buy),
          1e-6 * max(case.purchase_caps[1], 1.0))

    for k, sched in sol.storage.items():
        sto = case.storage(k)
        cap = sto.capacity_kwh
        plim = sto.power_limit_fraction * cap
        tol = 1e-6 * max(cap, 1.0)
        soc_prev = sto.soc_initial_frac * cap
        recursion = 0.0
        for t in range(periods):
            expect = soc_prev + sto.charge_eff * dt * sched.charge[t] - dt / sto.discharge_eff * sched.discharge[t]
            recursion = max(recursion, abs(sched.soc[t] - expect))
            soc_prev = sched.soc[t]
        check(f"storage_{k}_recursion", recursion, tol)
        check(f"storage_{k}_terminal", abs(sched.soc[-1] - sto.soc_initial_frac * cap), tol)
        check(
            f"storage_{k}_soc_bounds",
            max(max(over(s, sto.soc_max_frac * cap), over(sto.soc_min_frac * cap, s)) for s in sched.soc),
            tol,
        )
        check(
            f"storage_{k}_power",
            max(max(over(c, plim), over(d, plim)) for c, d in zip(sched.charge, sched.discharge)),
            tol,
        )
        check(
            f"storage_{k}_exclusive",
            max(min(c, d) for c, d in zip(sched.charge, sched.discharge)),
            tol,
        )

    # demand-response arithmetic
    dec = decompose_loads(case)
    for k, per_type in sol.dr_delta.items():
        load_sum = max(sum(case.loads[k].values), 1.0)
        for dtype, series in per_type.items():
            base = dec.shiftable_base[k] if dtype == SHIFT else dec.substitutable_base[k]
            override = case.dr.shift_bounds.get(k) if dtype == SHIFT else None
            window = 0.0
            for t in range(periods):
                lo, hi = (-base[t], base[t]) if override is None else override
                window = max(window, over(series[t], hi), over(lo, series[t]))
            check(f"dr_window_{dtype}_{k}", window, 1e-6 * load_sum)
            if dtype == SHIFT or case.dr.literal_eq2:
                check(f"dr_net_{dtype}_{k}", abs(sum(series)), 1e-6 * load_sum)
    if not case.dr.literal_eq2:
        subst = {k: per_type[SUBSTITUTE] for k, per_type in sol.dr_delta.items() if SUBSTITUTE in per_type}
        if subst:
            scale = max(sum(max(case.loads[k].values) for k in subst), 1.0)
            residual = max(
                abs(sum(case.dr.subst_conversion.get(k, 1.0) * subst[k][t] for k in subst))
                for t in range(periods)
            )
            check("dr_subst_coupling", residual, 1e-6 * scale)
    original = {k: case.loads[k].values for k in CARRIERS}
    index = satisfaction_index(original, adjusted)
    check("satisfaction_floor", over(case.dr.satisfaction_min, index), 1e-9)
    check("satisfaction_value", abs(index - sol.satisfaction), 1e-9)

    # cost breakdown
    buy = dt * sum(
        case.tariffs.electricity_price[t] * sol.p_e_buy[t]
        + case.tariffs.gas_price[t] * sol.p_g_buy[t]
        for t in range(periods)
    )
    dr_cost = 0.0
    for k, per_type in sol.dr_delta.items():
        for dtype, series in per_type.items():
            mu = case.dr.mu_shift if dtype == SHIFT else case.dr.mu_subst
            dr_cost += mu * dt * sum(abs(v) for v in series)
    omega = case.maintenance
    maint = dt * sum(
        omega.get("wind", 0.0) * sol.p_dg[t]
        + omega.get("P2G", 0.0) * sol.p_p2g_g[t]
        + omega.get("GT", 0.0) * sol.p_gt_e[t]
        + omega.get("WHB", 0.0) * sol.p_gt_h[t]
        + omega.get("GB", 0.0) * sol.p_gb_h[t]
        + sum(
            omega.get(f"storage_{k}", 0.0) * (sched.charge[t] + sched.discharge[t])
            for k, sched in sol.storage.items()
        )
        for t in range(periods)
    )
    policy = replace(case.carbon, mechanism=scenario.mechanism)
    schedule = FlowSchedule(
        step_hours=dt,
        p_e_buy=sol.p_e_buy,
        p_gt_e=sol.p_gt_e,
        p_gt_h=sol.p_gt_h,
        p_gb_h=sol.p_gb_h,
        p_g_load=adjusted[GAS],
        p_p2g_g=sol.p_p2g_g,
    )
    account = emission_account(schedule, policy)
    carbon_exact = carbon_mod.carbon_cost(account.trading_share, policy)

    def rel(name, got, want, scale=None):
        check(name, abs(got - want), 1e-6 * max(1.0, abs(want) if scale is None else scale))

    rel("cost_purchase", sol.costs.purchase, buy)
    rel("cost_dr", sol.costs.dr, dr_cost)
    rel("cost_maintenance", sol.costs.maintenance, maint)
    rel("cost_carbon_exact", sol.costs.carbon, carbon_exact)
    rel("emission_actual", sol.emission.actual.total, account.actual.total)
    rel("emission_quota", sol.emission.quota.total, account.quota.total)
    rel(
        "cost_total",
        sol.costs.total,
        sol.costs.purchase + sol.costs.carbon + sol.costs.dr + sol.costs.maintenance,
    )

    # linearized emission surrogate and objective identity
    carbon_priced = sol.surrogate_actual_kg is not None
    if carbon_priced:
        cap_e = case.purchase_caps[0]
        q_max = _gas_unit_heat_rate_max(case)
        n = sol.pwl_segments
        surrogate = 0.0
        for t in range(periods):
            coal = (
                pwl_convex_value(policy.coal_quad, cap_e, n, sol.p_e_buy[t])
                if cap_e > 0 else quad_value(policy.coal_quad, 0.0)
            )
            q_t = sol.p_gt_e[t] + sol.p_gt_h[t] + sol.p_gb_h[t]
            gas = (
                pwl_convex_value(policy.gas_quad, q_max, n, q_t)
                if q_max > 0 else quad_value(policy.gas_quad, 0.0)
            )
            surrogate += dt * (
                coal + gas + policy.delta_gasload * adjusted[GAS][t]
                - policy.theta_p2g * sol.p_p2g_g[t]
            )
        rel("surrogate_actual", sol.surrogate_actual_kg, surrogate,
            scale=max(abs(surrogate), account.actual.total, 1.0))
        check(
            "pwl_gap",
            abs(account.actual.total - surrogate),
            sol.pwl_bound_kg + 1e-9,
        )
        surrogate_share = surrogate - account.quota.total
        surrogate_cost = carbon_mod.carbon_cost(surrogate_share, policy)
        rel("surrogate_carbon_cost", sol.surrogate_carbon_cost, surrogate_cost,
            scale=max(abs(surrogate_cost), 1.0))
        expected_obj = buy + dr_cost + maint + surrogate_cost
    else:
        expected_obj = buy + dr_cost + maint
    check("objective_identity", abs(sol.objective - expected_obj), 1e-6 * max(1.0, abs(expected_obj)))

    return VerificationReport(passed=not failures, checks=checks, failures=failures)


# -- runners -----------------------------------------------------------------------


def run_scenario(case: CaseData, scenario, options: DispatchOptions | None = None) -> DispatchSolution:
    """Build, solve, extract, and verify one scenario.

    Raises StaticInfeasibleError / SolveFailedError / VerificationError
    rather than returning a solution that cannot be trusted.
    """
    scenario = as_scenario(scenario)
    options = options or DispatchOptions()
    model, vm = build_model(case, scenario, options)
    if options.backend == "embedded":
        res = solve_milp(model, options.milp_options())
    else:
        res = get_backend(options.backend).solve(model, options.milp_options())
    if res.x is None:
        raise SolveFailedError(scenario.id, res.status, f"bound {res.bound}, nodes {res.nodes}")
    sol = _extract(case, scenario, vm, res)
    report = verify_solution(case, scenario, sol)
    if not report.passed:
        raise VerificationError(scenario.id, report.failures)
    sol.verification = report
    return sol


@dataclass
class ScenarioRow:
    """One line of the scenario comparison table."""

    scenario_id: str
    status: str
    error: str | None = None
    total_cost: float | None = None
    purchase_cost: float | None = None
    carbon_cost: float | None = None
    maintenance_cost: float | None = None
    dr_compensation: float | None = None
    emissions_kg: float | None = None
    quota_kg: float | None = None
    trading_share_kg: float | None = None
    satisfaction: float | None = None
    objective: float | None = None
    gap: float | None = None
    wall_time: float | None = None


@dataclass
class ScenarioReport:
    rows: list[ScenarioRow]
    solutions: dict[str, DispatchSolution]
    percentages: dict[str, dict[str, float]]


def _row_from_solution(sol: DispatchSolution) -> ScenarioRow:
    return ScenarioRow(
        scenario_id=sol.scenario_id,
        status=sol.status,
        total_cost=sol.costs.total,
        purchase_cost=sol.costs.purchase,
        carbon_cost=sol.costs.carbon,
        maintenance_cost=sol.costs.maintenance,
        dr_compensation=sol.costs.dr,
        emissions_kg=sol.emission.actual.total,
        quota_kg=sol.emission.quota.total,
        trading_share_kg=sol.emission.trading_share,
        satisfaction=sol.satisfaction,
        objective=sol.objective,
        gap=sol.gap,
        wall_time=sol.wall_time,
    )


def _scenario_task(args):
    case, scenario_id, options = args
    try:
        sol = run_scenario(case, scenario_id, options)
        return scenario_id, _row_from_solution(sol), sol
    except StaticInfeasibleError as exc:
        return scenario_id, ScenarioRow(scenario_id, "infeasible", error=str(exc)), None
    except SolveFailedError as exc:
        return scenario_id, ScenarioRow(scenario_id, exc.status, error=str(exc)), None
    except VerificationError as exc:
        return scenario_id, ScenarioRow(scenario_id, "verification_failed", error=str(exc)), None


def _run_tasks(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_scenario_task, tasks))
    return [_scenario_task(t) for t in tasks]


def run_all_scenarios(
    case: CaseData,
    options: DispatchOptions | None = None,
    scenario_ids=SCENARIO_IDS,
    jobs: int = 1,
) -> ScenarioReport:
    """Run the scenario set and derive the comparison table.

    Failures are recorded per row; the report always has one row per
    requested scenario, in request order.  Percentages compare each
    scenario's total cost and actual emissions against the first requested
    scenario (drops are positive).
    """
    options = options or DispatchOptions()
    tasks = [(case, sid, options) for sid in scenario_ids]
    results = _run_tasks(tasks, jobs)
    rows = [row for _sid, row, _sol in results]
    solutions = {sid: sol for sid, _row, sol in results if sol is not None}
    percentages: dict[str, dict[str, float]] = {}
    base = rows[0] if rows else None
    if base and base.total_cost:
        for row in rows[1:]:
            if row.total_cost is None:
                continue
            percentages[row.scenario_id] = {
                "cost_drop_pct": 100.0 * (base.total_cost - row.total_cost) / base.total_cost,
                "emission_drop_pct": (
                    100.0 * (base.emissions_kg - row.emissions_kg) / base.emissions_kg
                    if base.emissions_kg else 0.0
                ),
            }
    return ScenarioReport(rows=rows, solutions=solutions, percentages=percentages)


@dataclass
class SweepPoint:
    value: float
    status: str
    error: str | None = None
    emissions_kg: float | None = None
    carbon_cost: float | None = None
    total_cost: float | None = None
    dr_compensation: float | None = None
    objective: float | None = None
    gap: float | None = None


def _check_grid(grid):
    values = [float(v) for v in grid]
    if not values:
        raise ValueError("empty sweep grid")
    if any(v <= 0 for v in values):
        raise ValueError("sweep grid values must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep grid must be strictly increasing")
    return values


def _sweep(case, scenario, values, options, jobs, override):
    scenario = as_scenario(scenario)
    tasks = []
    for v in values:
        tasks.append((replace(case, carbon=replace(case.carbon, **{override: v})), scenario.id, options))
    points = []
    for v, (_sid, row, sol) in zip(values, _run_tasks(tasks, jobs)):
        points.append(
            SweepPoint(
                value=v,
                status=row.status,
                error=row.error,
                emissions_kg=row.emissions_kg,
                carbon_cost=row.carbon_cost,
                total_cost=row.total_cost,
                dr_compensation=row.dr_compensation,
                objective=row.objective,
                gap=row.gap,
            )
        )
    return points


def sweep_lambda(case, scenario, grid, options=None, jobs: int = 1) -> list[SweepPoint]:
    """Re-solve along an increasing carbon base-price grid."""
    return _sweep(case, scenario, _check_grid(grid), options or DispatchOptions(), jobs, "lambda_base")


def sweep_interval(case, scenario, grid, options=None, jobs: int = 1) -> list[SweepPoint]:
    """Re-solve along an increasing tier-width grid."""
    return _sweep(case, scenario, _check_grid(grid), options or DispatchOptions(), jobs, "interval_d")
