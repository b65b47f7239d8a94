"""Carbon accounting: free quota, actual emissions, and trading cost.

Quota side: purchased electricity, CHP output (electric counted via the
sigma_eh conversion), boiler heat, and gas load each earn a free allowance
per kWh.  Actual side: quadratic emission curves over purchased power and
over the combined CHP+boiler useful output, a linear gas-load term, and a
credit for CO2 absorbed by power-to-gas.  The trading share is actual minus
quota; positive shares are bought on a tiered price ladder (every further
interval_d kilograms cost a factor (1+alpha) more), negative shares are sold
at the base price.

All Sum-over-t terms multiply by step_hours so accounting is in energy
(kWh / kg) regardless of period length.  Scalar evaluators here are exact
and serve as the oracle for the MILP's piecewise-linear surrogate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .milp_ir import EQ, GE, LE, LinearExpression, MilpModel, as_expression, quad_value


class EncodingError(Exception):
    """The MILP cost encoding cannot derive a required static bound."""


@dataclass(frozen=True)
class FlowSchedule:
    """The per-period flows carbon accounting reads (all kW, length T)."""

    step_hours: float
    p_e_buy: tuple[float, ...]
    p_gt_e: tuple[float, ...]
    p_gt_h: tuple[float, ...]  # useful heat after the waste-heat boiler
    p_gb_h: tuple[float, ...]
    p_g_load: tuple[float, ...]  # gas load after any demand response
    p_p2g_g: tuple[float, ...]  # gas produced by power-to-gas


@dataclass(frozen=True)
class QuotaAccount:
    e_buy: float
    gt: float
    gb: float
    g_load: float

    @property
    def total(self) -> float:
        return self.e_buy + self.gt + self.gb + self.g_load


@dataclass(frozen=True)
class ActualAccount:
    e_buy: float
    gtgb: float
    g_load: float
    p2g: float  # absorbed, enters the total with a minus sign

    @property
    def total(self) -> float:
        return self.e_buy + self.gtgb + self.g_load - self.p2g


@dataclass(frozen=True)
class EmissionAccount:
    quota: QuotaAccount
    actual: ActualAccount

    @property
    def trading_share(self) -> float:
        return self.actual.total - self.quota.total


def quota_total(schedule: FlowSchedule, policy) -> QuotaAccount:
    """Free allowance from purchases, CHP, boiler heat, and gas load (kg)."""
    dt = schedule.step_hours
    return QuotaAccount(
        e_buy=policy.sigma_e * sum(schedule.p_e_buy) * dt,
        gt=policy.sigma_h
        * sum(policy.sigma_eh * pe + ph for pe, ph in zip(schedule.p_gt_e, schedule.p_gt_h))
        * dt,
        gb=policy.sigma_h * sum(schedule.p_gb_h) * dt,
        g_load=policy.sigma_gload * sum(schedule.p_g_load) * dt,
    )


def actual_emissions(schedule: FlowSchedule, policy) -> ActualAccount:
    """Exact quadratic emissions (kg); oracle for the PWL surrogate."""
    dt = schedule.step_hours
    e_buy = sum(quad_value(policy.coal_quad, p) for p in schedule.p_e_buy) * dt
    q_out = [pe + ph + pb for pe, ph, pb in zip(schedule.p_gt_e, schedule.p_gt_h, schedule.p_gb_h)]
    gtgb = sum(quad_value(policy.gas_quad, q) for q in q_out) * dt
    return ActualAccount(
        e_buy=e_buy,
        gtgb=gtgb,
        g_load=policy.delta_gasload * sum(schedule.p_g_load) * dt,
        p2g=policy.theta_p2g * sum(schedule.p_p2g_g) * dt,
    )


def emission_account(schedule: FlowSchedule, policy) -> EmissionAccount:
    return EmissionAccount(quota_total(schedule, policy), actual_emissions(schedule, policy))


# -- trading cost ----------------------------------------------------------------


def tier_knee(policy, k: int) -> float:
    """Cost at share k*interval_d; the branch constants telescope to this."""
    lam, alpha, d = policy.lambda_base, policy.alpha_growth, policy.interval_d
    return lam * d * (k + alpha * k * (k - 1) / 2.0)


def tier_slope(policy, k: int) -> float:
    """Price inside segment k (segment 0 ends at interval_d)."""
    return policy.lambda_base * (1.0 + k * policy.alpha_growth)


def n_tiers(policy) -> int:
    """Number of priced segments; the printed ladder has 6."""
    return 6 + int(getattr(policy, "extra_tiers", 0))


def tier_cost(share: float, policy) -> float:
    """Tiered trading cost; negative shares earn the base-price subsidy."""
    d = policy.interval_d
    if d <= 0:
        raise ValueError("interval_d must be > 0")
    if share <= d:
        return policy.lambda_base * share
    k = min(int(math.ceil(share / d)) - 1, n_tiers(policy) - 1)
    return tier_knee(policy, k) + tier_slope(policy, k) * (share - k * d)


def traditional_cost(share: float, policy) -> float:
    """Single-price mechanism: base price times the share, either sign."""
    return policy.lambda_base * share


def carbon_cost(share: float, policy) -> float:
    if policy.mechanism == "tiered":
        return tier_cost(share, policy)
    if policy.mechanism == "traditional":
        return traditional_cost(share, policy)
    return 0.0


# -- MILP encoding ------------------------------------------------------------------


def encode_carbon_cost(
    model: MilpModel,
    policy,
    actual_expr,
    quota_expr,
    m_actual: float,
    m_quota: float,
    name: str = "carbon",
) -> LinearExpression:
    """Add the trading-cost structure for affine emission expressions.

    `m_actual` / `m_quota` are static upper bounds on the actual and quota
    totals derived from device capacities; they close the open top segment
    and floor the subsidy side (a system cannot sell more than its quota,
    so the share is bounded below by -m_quota and the actual total is kept
    non-negative).

    tiered: one binary and one segment-local share variable per price
    segment; exactly one segment is active and carries the whole share, so
    the returned expression equals tier_cost(share) at every feasible point.
    traditional: lambda * share, no variables.  none: zero.
    """
    actual_expr = as_expression(actual_expr)
    quota_expr = as_expression(quota_expr)
    if policy.mechanism == "none":
        return LinearExpression()
    if not (math.isfinite(m_actual) and math.isfinite(m_quota)):
        raise EncodingError(
            f"cannot bound the trading share: m_actual={m_actual}, m_quota={m_quota}"
        )
    share = actual_expr - quota_expr
    model.add_constraint(actual_expr, GE, 0.0, f"{name}_actual_floor")
    if policy.mechanism == "traditional":
        return policy.lambda_base * share

    K = n_tiers(policy)
    d = policy.interval_d
    lo0 = min(-m_quota, 0.0)
    hi_top = max(m_actual, (K - 1) * d + d)
    cost = LinearExpression()
    pick = LinearExpression()
    total = LinearExpression()
    for k in range(K):
        lo = lo0 if k == 0 else k * d
        hi = (k + 1) * d if k < K - 1 else hi_top
        z = model.add_binary(f"{name}_z{k}")
        e = model.add_continuous(min(lo, 0.0), max(hi, 0.0), f"{name}_e{k}")
        # e_k lives in [lo, hi] when its segment is picked, else at 0
        model.add_constraint(e - lo * z, GE, 0.0, f"{name}_e{k}_lo")
        model.add_constraint(e - hi * z, LE, 0.0, f"{name}_e{k}_hi")
        pick = pick + z
        total = total + e
        cost = cost + (tier_knee(policy, k) - tier_slope(policy, k) * k * d) * z
        cost = cost + tier_slope(policy, k) * e
    model.add_constraint(pick, EQ, 1.0, f"{name}_pick")
    model.add_constraint(total - share, EQ, 0.0, f"{name}_share")
    return cost
