"""Demand-response load reshaping for the dispatch model.

Each load profile splits into fixed, shiftable, and substitutable parts.
Reshaping moves flexible energy between periods (shift: net-zero over the
horizon per carrier) or between carriers (substitution: energy-equivalent
across carriers per period).  Every per-period adjustment is decomposed
into non-negative inflow/outflow magnitudes gated by a binary pair, so the
absolute deviation is available as a linear expression; the deviations feed
a consumer-satisfaction floor and a per-kWh compensation cost.

Powers are kW, energies kWh, compensation coefficients currency per kWh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .milp_ir import EQ, GE, LE, LinearExpression, MilpModel, Variable
from .model_core import CARRIERS, CaseData

SHIFT = "shift"
SUBSTITUTE = "substitute"
DR_TYPES = (SHIFT, SUBSTITUTE)


class DrBoundError(ValueError):
    """Raised when a per-period adjustment window is empty or negative-only."""


class DegenerateLoadError(ValueError):
    """Raised when a zero-energy carrier shows a nonzero deviation."""


@dataclass(frozen=True)
class LoadDecomposition:
    """Per-carrier split of each load profile into fixed/flexible parts, kW."""

    fixed: dict[str, tuple[float, ...]]
    shiftable_base: dict[str, tuple[float, ...]]
    substitutable_base: dict[str, tuple[float, ...]]


def _exact_remainder(total: float, part_a: float, part_b: float) -> float:
    # remainder r with (r + part_a) + part_b == total bit-exact; the error is
    # ulp-scale so the correction settles within a couple of rounds
    r = total - part_a - part_b
    for _ in range(4):
        err = (r + part_a + part_b) - total
        if err == 0.0:
            break
        r -= err
    return r


def decompose_loads(case: CaseData) -> LoadDecomposition:
    """Split every load profile by the configured flexible fractions.

    The shiftable and substitutable parts are the configured fractions of
    each period's load; the fixed part is the remainder, corrected so the
    float sum reproduces the input exactly.  A negative remainder (possible
    only when the fractions sum to 1 within rounding) rolls into the
    substitutable part so all components stay non-negative.
    """
    fixed: dict[str, tuple[float, ...]] = {}
    shiftable: dict[str, tuple[float, ...]] = {}
    substitutable: dict[str, tuple[float, ...]] = {}
    for carrier in CARRIERS:
        load = case.loads[carrier].values
        f_p = case.dr.shiftable_fraction.get(carrier, 0.0)
        f_c = case.dr.substitutable_fraction.get(carrier, 0.0)
        fx, sh, su = [], [], []
        for p in load:
            a = f_p * p
            b = f_c * p
            r = _exact_remainder(p, a, b)
            if r < 0.0:
                r = 0.0
                b = _exact_remainder(p, a, 0.0)
            fx.append(r)
            sh.append(a)
            su.append(b)
        fixed[carrier] = tuple(fx)
        shiftable[carrier] = tuple(sh)
        substitutable[carrier] = tuple(su)
    return LoadDecomposition(fixed, shiftable, substitutable)


@dataclass
class DrVarMap:
    """Model handles for the reshaping blocks of one scenario build.

    Keys of the per-type maps are (carrier, type) with type in DR_TYPES.
    `adjusted` holds the reshaped load expression per carrier and period
    (the input load plus all enabled adjustments); `deviation` the matching
    absolute-deviation expressions; `compensation` the total compensation
    cost in currency (already scaled by the period length).
    """

    p_in: dict[tuple[str, str], list[Variable]] = field(default_factory=dict)
    p_out: dict[tuple[str, str], list[Variable]] = field(default_factory=dict)
    v_in: dict[tuple[str, str], list[Variable]] = field(default_factory=dict)
    v_out: dict[tuple[str, str], list[Variable]] = field(default_factory=dict)
    delta: dict[tuple[str, str], list[LinearExpression]] = field(default_factory=dict)
    adjusted: dict[str, list[LinearExpression]] = field(default_factory=dict)
    deviation: dict[str, list[LinearExpression]] = field(default_factory=dict)
    compensation: LinearExpression = field(default_factory=LinearExpression)
    decomposition: LoadDecomposition | None = None

    @property
    def empty(self) -> bool:
        return not self.p_in


def _adjustment_window(
    base: Sequence[float],
    override: tuple[float, float] | None,
    label: str,
) -> tuple[list[float], list[float]]:
    lows, highs = [], []
    for t, b in enumerate(base):
        lo, hi = (-b, b) if override is None else override
        if hi < 0.0:
            raise DrBoundError(f"{label}: negative upper adjustment {hi} at period {t}")
        if lo > hi:
            raise DrBoundError(f"{label}: empty adjustment window [{lo}, {hi}] at period {t}")
        lows.append(float(lo))
        highs.append(float(hi))
    return lows, highs


def build_dr_blocks(case: CaseData, scenario, model: MilpModel) -> DrVarMap:
    """Add reshaping variables and constraints; return the handle map.

    Per enabled (carrier, type, period): magnitudes P_in, P_out >= 0 gated
    by binaries with v_in + v_out = 1 and P_in <= M v_in, P_out <= M v_out,
    so the signed adjustment is P_in - P_out and its absolute value the sum
    P_in + P_out.  Shift adjustments cancel over the horizon per carrier;
    substitution adjustments cancel across carriers per period under the
    configured energy-equivalence weights (dr.literal_eq2 switches to the
    per-carrier net-zero reading instead).  The satisfaction floor bounds
    the summed relative deviations of all carriers.

    The scenario only contributes its dr_shift / dr_substitute flags;
    carriers are filtered by the case's dr.shift_carriers / subst_carriers.
    """
    dr = case.dr
    periods = case.horizon.periods
    dt = case.horizon.step_hours
    dec = decompose_loads(case)
    vm = DrVarMap(decomposition=dec)

    enabled: list[tuple[str, str]] = []
    if scenario.dr_shift:
        enabled += [(k, SHIFT) for k in CARRIERS if k in dr.shift_carriers]
    if scenario.dr_substitute:
        enabled += [(k, SUBSTITUTE) for k in CARRIERS if k in dr.subst_carriers]

    comp = LinearExpression()
    for carrier, dtype in enabled:
        base = dec.shiftable_base[carrier] if dtype == SHIFT else dec.substitutable_base[carrier]
        override = dr.shift_bounds.get(carrier) if dtype == SHIFT else None
        lows, highs = _adjustment_window(base, override, f"{dtype} {carrier}")
        # one gate magnitude per (carrier, type): any window value is reachable
        big_m = max(max((-lo for lo in lows), default=0.0), max(highs, default=0.0), 0.0)
        mu = dr.mu_shift if dtype == SHIFT else dr.mu_subst
        p_in, p_out, v_in, v_out, deltas = [], [], [], [], []
        for t in range(periods):
            tag = f"dr_{dtype}_{carrier}_t{t:02d}"
            pi = model.add_continuous(0.0, max(highs[t], 0.0), f"{tag}_in")
            po = model.add_continuous(0.0, max(-lows[t], 0.0), f"{tag}_out")
            vi = model.add_binary(f"{tag}_vin")
            vo = model.add_binary(f"{tag}_vout")
            model.add_constraint(pi - big_m * vi, LE, 0.0, f"{tag}_in_link")
            model.add_constraint(po - big_m * vo, LE, 0.0, f"{tag}_out_link")
            model.add_constraint(vi + vo, EQ, 1.0, f"{tag}_pick")
            if lows[t] > 0.0:
                # forced minimum inflow: the variable bounds alone cannot carry it
                model.add_constraint(pi - po, GE, lows[t], f"{tag}_floor")
            p_in.append(pi)
            p_out.append(po)
            v_in.append(vi)
            v_out.append(vo)
            deltas.append(pi - po)
            comp = comp + (mu * dt) * (pi + po)
        key = (carrier, dtype)
        vm.p_in[key] = p_in
        vm.p_out[key] = p_out
        vm.v_in[key] = v_in
        vm.v_out[key] = v_out
        vm.delta[key] = deltas
        if dtype == SHIFT or dr.literal_eq2:
            net = LinearExpression()
            for d in deltas:
                net = net + d
            model.add_constraint(net, EQ, 0.0, f"dr_{dtype}_{carrier}_net")
    vm.compensation = comp

    subst_keys = [k for k in vm.delta if k[1] == SUBSTITUTE]
    if subst_keys and not dr.literal_eq2:
        for t in range(periods):
            row = LinearExpression()
            for carrier, dtype in subst_keys:
                row = row + dr.subst_conversion.get(carrier, 1.0) * vm.delta[(carrier, dtype)][t]
            model.add_constraint(row, EQ, 0.0, f"dr_subst_couple_t{t:02d}")

    for carrier in CARRIERS:
        load = case.loads[carrier].values
        adj, dev = [], []
        for t in range(periods):
            expr = LinearExpression(constant=load[t])
            dv = LinearExpression()
            for dtype in DR_TYPES:
                key = (carrier, dtype)
                if key in vm.delta:
                    expr = expr + vm.delta[key][t]
                    dv = dv + vm.p_in[key][t] + vm.p_out[key][t]
            adj.append(expr)
            dev.append(dv)
        vm.adjusted[carrier] = adj
        vm.deviation[carrier] = dev

    if enabled:
        total = LinearExpression()
        for carrier in CARRIERS:
            energy = float(sum(case.loads[carrier].values))
            dev_sum = LinearExpression()
            for d in vm.deviation[carrier]:
                dev_sum = dev_sum + d
            if energy > 0.0:
                total = total + (1.0 / energy) * dev_sum
            elif dev_sum.coeffs:
                # a zero-energy carrier cannot deviate without destroying
                # satisfaction, so pin its deviation instead of dividing
                model.add_constraint(dev_sum, LE, 0.0, f"dr_nodev_{carrier}")
        slack = len(CARRIERS) * (1.0 - dr.satisfaction_min)
        model.add_constraint(total, LE, slack, "dr_satisfaction")
    return vm


def satisfaction_index(
    original: dict[str, Sequence[float]],
    adjusted: dict[str, Sequence[float]],
) -> float:
    """Mean per-carrier satisfaction: one minus the relative absolute deviation.

    A carrier with zero total load and zero deviation contributes a full
    term (no deviation was possible); zero load with nonzero deviation has
    no defined relative deviation and raises DegenerateLoadError.
    """
    if sorted(original) != sorted(adjusted):
        raise ValueError("carrier sets differ between original and adjusted loads")
    terms = []
    for carrier in sorted(original):
        orig = original[carrier]
        adj = adjusted[carrier]
        if len(orig) != len(adj):
            raise ValueError(f"{carrier}: horizon mismatch {len(orig)} vs {len(adj)}")
        energy = float(sum(orig))
        dev = float(sum(abs(a - o) for o, a in zip(orig, adj)))
        if energy == 0.0:
            if dev > 0.0:
                raise DegenerateLoadError(
                    f"{carrier}: deviation {dev} on a zero-energy profile"
                )
            terms.append(1.0)
        else:
            terms.append(1.0 - dev / energy)
    return sum(terms) / len(terms)
