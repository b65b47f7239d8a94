"""Domain data model, case-file ingestion, and validation.

A case is a single UTF-8 JSON document.  Required top-level keys: `loads`,
`wind`, `tariffs`.  Optional keys (documented defaults applied when absent):
`horizon`, `converters`, `storages`, `carbon`, `dr`, `purchase_caps`,
`maintenance`, `chp`, `gas_kwh_per_m3`, `sources`.  Unknown keys are an
error so typos cannot silently change a study.

All powers are kW (gas as kW-equivalent thermal; `gas_kwh_per_m3` is the
conversion constant for callers holding volumetric data), energies kWh,
emission factors kg/kWh, prices currency per kWh or per kg.

Construction never raises on bad numbers: `validate_case` returns a report
so partially-wrong cases can be inspected.  `load_case` runs the same
validation and raises `UnitError` on the first hard error.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

CARRIERS = ("electric", "gas", "heat")
CONVERTER_NAMES = ("P2G", "GT", "WHB", "GB")

MECHANISM_NONE = "none"
MECHANISM_TRADITIONAL = "traditional"
MECHANISM_TIERED = "tiered"


class CaseError(Exception):
    """Base for case-document failures; `locator` points at the bad field."""

    def __init__(self, message: str, locator: str = ""):
        super().__init__(f"{locator}: {message}" if locator else message)
        self.locator = locator


class ParseError(CaseError):
    pass


class SchemaError(CaseError):
    pass


class UnitError(CaseError):
    pass


# -- domain types ------------------------------------------------------------


@dataclass(frozen=True)
class Horizon:
    periods: int = 24
    step_hours: float = 1.0


@dataclass(frozen=True)
class CarrierProfile:
    carrier: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class TariffProfile:
    electricity_price: tuple[float, ...]
    gas_price: tuple[float, ...]


@dataclass(frozen=True)
class ConverterParams:
    name: str
    capacity_kw: float
    efficiencies: dict[str, float]
    ramp_fraction: float = 0.2
    min_output_kw: float = 0.0


@dataclass(frozen=True)
class StorageParams:
    carrier: str
    capacity_kwh: float
    soc_min_frac: float = 0.1
    soc_max_frac: float = 0.9
    power_limit_fraction: float = 0.2
    charge_eff: float = 0.95
    discharge_eff: float = 0.95
    soc_initial_frac: float = 0.5


@dataclass(frozen=True)
class CarbonPolicy:
    mechanism: str = MECHANISM_TIERED
    sigma_e: float = 0.798
    sigma_h: float = 0.385
    sigma_gload: float = 0.180
    sigma_eh: float = 2.0
    lambda_base: float = 0.251
    alpha_growth: float = 0.25
    interval_d: float = 2000.0
    coal_quad: tuple[float, float, float] = (0.0, 0.9, 1.0e-4)
    gas_quad: tuple[float, float, float] = (0.0, 0.48, 8.0e-5)
    delta_gasload: float = 0.20
    theta_p2g: float = 0.2
    extra_tiers: int = 0


@dataclass(frozen=True)
class DrPolicy:
    shiftable_fraction: dict[str, float] = field(
        default_factory=lambda: {k: 0.10 for k in CARRIERS}
    )
    substitutable_fraction: dict[str, float] = field(
        default_factory=lambda: {k: 0.05 for k in CARRIERS}
    )
    mu_shift: float = 0.2
    mu_subst: float = 0.3
    satisfaction_min: float = 0.85
    # per-carrier (min, max) per-period adjustment; None = +/- that period's base
    shift_bounds: dict[str, tuple[float, float] | None] = field(
        default_factory=lambda: {k: None for k in CARRIERS}
    )
    subst_conversion: dict[str, float] = field(
        default_factory=lambda: {k: 1.0 for k in CARRIERS}
    )
    literal_eq2: bool = False
    shift_carriers: tuple[str, ...] = CARRIERS
    subst_carriers: tuple[str, ...] = CARRIERS


@dataclass(frozen=True)
class ChpOptions:
    extraction_mode: bool = False
    ratio_min: float = 2.0
    ratio_max: float = 3.0


@dataclass(frozen=True)
class CaseData:
    horizon: Horizon
    loads: dict[str, CarrierProfile]
    wind_profile: tuple[float, ...]
    wind_max_kw: float
    tariffs: TariffProfile
    converters: tuple[ConverterParams, ...]
    storages: tuple[StorageParams, ...]
    carbon: CarbonPolicy
    dr: DrPolicy
    purchase_caps: tuple[float, float]  # (electric, gas) kW
    maintenance: dict[str, float]
    chp: ChpOptions = ChpOptions()
    gas_kwh_per_m3: float = 10.0
    sources: dict[str, str] = field(default_factory=dict)

    def converter(self, name: str) -> ConverterParams | None:
        for conv in self.converters:
            if conv.name == name:
                return conv
        return None

    def storage(self, carrier: str) -> StorageParams | None:
        for sto in self.storages:
            if sto.carrier == carrier:
                return sto
        return None


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors


# -- defaults ------------------------------------------------------------------

# Table-style device defaults: P2G 500 kW at 60%, GT 1000 kW gas input at
# 22% electric / 72% heat, WHB 600 kW at 80%, GB 800 kW at 82%, ramp 20%.
DEFAULT_CONVERTERS = (
    ConverterParams("P2G", 500.0, {"gas": 0.60}),
    ConverterParams("GT", 1000.0, {"electric": 0.22, "heat": 0.72}),
    ConverterParams("WHB", 600.0, {"heat": 0.80}),
    ConverterParams("GB", 800.0, {"heat": 0.82}),
)

DEFAULT_STORAGES = (
    StorageParams("electric", 450.0),
    StorageParams("heat", 500.0),
    StorageParams("gas", 300.0),
)

# per-kWh-output upkeep prices; storage entries charge per kWh of throughput
DEFAULT_MAINTENANCE = {
    "wind": 0.02,
    "P2G": 0.025,
    "GT": 0.03,
    "WHB": 0.015,
    "GB": 0.02,
    "storage_electric": 0.01,
    "storage_gas": 0.01,
    "storage_heat": 0.01,
}


def default_case_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "default_case.json")


# -- ingestion helpers ---------------------------------------------------------


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaError("missing required field", f"{path}.{key}" if path else key)
    return obj[key]


def _check_keys(obj: dict, allowed: set[str], path: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"unknown keys {unknown}", path or "top level")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {type(value).__name__}", path)
    return float(value)


def _array(value, path: str) -> list[float]:
    if not isinstance(value, list):
        raise SchemaError(f"expected an array, got {type(value).__name__}", path)
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _per_carrier(value, path: str, default: dict[str, float]) -> dict[str, float]:
    """Accept one scalar for all carriers or a per-carrier map."""
    if value is None:
        return dict(default)
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return {k: float(value) for k in CARRIERS}
    if isinstance(value, dict):
        _check_keys(value, set(CARRIERS), path)
        out = dict(default)
        for k, v in value.items():
            out[k] = _number(v, f"{path}.{k}")
        return out
    raise SchemaError("expected a number or per-carrier map", path)


def _parse_horizon(doc) -> Horizon:
    if doc is None:
        return Horizon()
    _check_keys(doc, {"periods", "step_hours"}, "horizon")
    periods = doc.get("periods", 24)
    if isinstance(periods, bool) or not isinstance(periods, int):
        raise SchemaError("periods must be an integer", "horizon.periods")
    return Horizon(periods, _number(doc.get("step_hours", 1.0), "horizon.step_hours"))


def _parse_loads(doc) -> dict[str, CarrierProfile]:
    if not isinstance(doc, dict):
        raise SchemaError("loads must map carrier to array", "loads")
    _check_keys(doc, set(CARRIERS), "loads")
    loads = {}
    for k in CARRIERS:
        loads[k] = CarrierProfile(k, tuple(_array(_require(doc, k, "loads"), f"loads.{k}")))
    return loads


def _parse_converters(doc) -> tuple[ConverterParams, ...]:
    if doc is None:
        return DEFAULT_CONVERTERS
    if not isinstance(doc, list):
        raise SchemaError("converters must be an array of objects", "converters")
    by_name = {c.name: c for c in DEFAULT_CONVERTERS}
    seen = []
    for i, item in enumerate(doc):
        path = f"converters[{i}]"
        if not isinstance(item, dict):
            raise SchemaError("expected an object", path)
        name = _require(item, "name", path)
        path = f"converters[{name}]"
        _check_keys(
            item,
            {"name", "capacity_kw", "efficiencies", "ramp_fraction", "min_output_kw"},
            path,
        )
        base = by_name.get(name)
        if base is None:
            raise SchemaError(f"unknown converter {name!r} (known: {CONVERTER_NAMES})", path)
        eff = item.get("efficiencies")
        if eff is not None:
            if not isinstance(eff, dict):
                raise SchemaError("efficiencies must map carrier to fraction", f"{path}.efficiencies")
            _check_keys(eff, set(CARRIERS), f"{path}.efficiencies")
            eff = {k: _number(v, f"{path}.efficiencies.{k}") for k, v in eff.items()}
        by_name[name] = ConverterParams(
            name=name,
            capacity_kw=_number(item.get("capacity_kw", base.capacity_kw), f"{path}.capacity_kw"),
            efficiencies=eff if eff is not None else dict(base.efficiencies),
            ramp_fraction=_number(item.get("ramp_fraction", base.ramp_fraction), f"{path}.ramp_fraction"),
            min_output_kw=_number(item.get("min_output_kw", base.min_output_kw), f"{path}.min_output_kw"),
        )
        seen.append(name)
    if len(seen) != len(set(seen)):
        raise SchemaError("duplicate converter entries", "converters")
    return tuple(by_name[n] for n in CONVERTER_NAMES)


def _parse_storages(doc) -> tuple[StorageParams, ...]:
    if doc is None:
        return DEFAULT_STORAGES
    if not isinstance(doc, list):
        raise SchemaError("storages must be an array of objects", "storages")
    defaults = {s.carrier: s for s in DEFAULT_STORAGES}
    out = []
    for i, item in enumerate(doc):
        path = f"storages[{i}]"
        if not isinstance(item, dict):
            raise SchemaError("expected an object", path)
        carrier = _require(item, "carrier", path)
        path = f"storages[{carrier}]"
        fields = {
            "carrier",
            "capacity_kwh",
            "soc_min_frac",
            "soc_max_frac",
            "power_limit_fraction",
            "charge_eff",
            "discharge_eff",
            "soc_initial_frac",
        }
        _check_keys(item, fields, path)
        base = defaults.get(carrier, StorageParams(str(carrier), 0.0))
        kwargs = {"carrier": carrier}
        for f in fields - {"carrier"}:
            kwargs[f] = _number(item.get(f, getattr(base, f)), f"{path}.{f}")
        out.append(StorageParams(**kwargs))
    return tuple(out)


def _parse_carbon(doc) -> CarbonPolicy:
    if doc is None:
        return CarbonPolicy()
    fields = {
        "mechanism",
        "sigma_e",
        "sigma_h",
        "sigma_gload",
        "sigma_eh",
        "lambda_base",
        "alpha_growth",
        "interval_d",
        "coal_quad",
        "gas_quad",
        "delta_gasload",
        "theta_p2g",
        "extra_tiers",
    }
    _check_keys(doc, fields, "carbon")
    base = CarbonPolicy()
    kwargs = {}
    mech = doc.get("mechanism", base.mechanism)
    if mech not in (MECHANISM_NONE, MECHANISM_TRADITIONAL, MECHANISM_TIERED):
        raise SchemaError(f"unknown mechanism {mech!r}", "carbon.mechanism")
    kwargs["mechanism"] = mech
    for f in ("sigma_e", "sigma_h", "sigma_gload", "sigma_eh", "lambda_base",
              "alpha_growth", "interval_d", "delta_gasload", "theta_p2g"):
        kwargs[f] = _number(doc.get(f, getattr(base, f)), f"carbon.{f}")
    for f in ("coal_quad", "gas_quad"):
        raw = doc.get(f)
        if raw is None:
            kwargs[f] = getattr(base, f)
        else:
            arr = _array(raw, f"carbon.{f}")
            if len(arr) != 3:
                raise SchemaError("quadratic needs exactly 3 coefficients", f"carbon.{f}")
            kwargs[f] = tuple(arr)
    extra = doc.get("extra_tiers", base.extra_tiers)
    if isinstance(extra, bool) or not isinstance(extra, int):
        raise SchemaError("extra_tiers must be an integer", "carbon.extra_tiers")
    kwargs["extra_tiers"] = extra
    return CarbonPolicy(**kwargs)


def _parse_dr(doc) -> DrPolicy:
    if doc is None:
        return DrPolicy()
    fields = {
        "shiftable_fraction",
        "substitutable_fraction",
        "mu_shift",
        "mu_subst",
        "satisfaction_min",
        "shift_bounds",
        "subst_conversion",
        "literal_eq2",
        "shift_carriers",
        "subst_carriers",
    }
    _check_keys(doc, fields, "dr")
    base = DrPolicy()
    shift_bounds: dict[str, tuple[float, float] | None] = {k: None for k in CARRIERS}
    raw_bounds = doc.get("shift_bounds")
    if raw_bounds is not None:
        if not isinstance(raw_bounds, dict):
            raise SchemaError("shift_bounds must map carrier to [min, max]", "dr.shift_bounds")
        _check_keys(raw_bounds, set(CARRIERS), "dr.shift_bounds")
        for k, v in raw_bounds.items():
            if v is None:
                continue
            pair = _array(v, f"dr.shift_bounds.{k}")
            if len(pair) != 2:
                raise SchemaError("expected [min, max]", f"dr.shift_bounds.{k}")
            shift_bounds[k] = (pair[0], pair[1])

    def carrier_list(key, default):
        raw = doc.get(key)
        if raw is None:
            return default
        if not isinstance(raw, list) or not all(c in CARRIERS for c in raw):
            raise SchemaError(f"expected a subset of {list(CARRIERS)}", f"dr.{key}")
        return tuple(raw)

    literal = doc.get("literal_eq2", base.literal_eq2)
    if not isinstance(literal, bool):
        raise SchemaError("literal_eq2 must be a boolean", "dr.literal_eq2")
    return DrPolicy(
        shiftable_fraction=_per_carrier(
            doc.get("shiftable_fraction"), "dr.shiftable_fraction", base.shiftable_fraction
        ),
        substitutable_fraction=_per_carrier(
            doc.get("substitutable_fraction"),
            "dr.substitutable_fraction",
            base.substitutable_fraction,
        ),
        mu_shift=_number(doc.get("mu_shift", base.mu_shift), "dr.mu_shift"),
        mu_subst=_number(doc.get("mu_subst", base.mu_subst), "dr.mu_subst"),
        satisfaction_min=_number(
            doc.get("satisfaction_min", base.satisfaction_min), "dr.satisfaction_min"
        ),
        shift_bounds=shift_bounds,
        subst_conversion=_per_carrier(
            doc.get("subst_conversion"), "dr.subst_conversion", base.subst_conversion
        ),
        literal_eq2=literal,
        shift_carriers=carrier_list("shift_carriers", base.shift_carriers),
        subst_carriers=carrier_list("subst_carriers", base.subst_carriers),
    )


def _parse_chp(doc) -> ChpOptions:
    if doc is None:
        return ChpOptions()
    _check_keys(doc, {"extraction_mode", "ratio_min", "ratio_max"}, "chp")
    mode = doc.get("extraction_mode", False)
    if not isinstance(mode, bool):
        raise SchemaError("extraction_mode must be a boolean", "chp.extraction_mode")
    return ChpOptions(
        extraction_mode=mode,
        ratio_min=_number(doc.get("ratio_min", 2.0), "chp.ratio_min"),
        ratio_max=_number(doc.get("ratio_max", 3.0), "chp.ratio_max"),
    )


_TOP_KEYS = {
    "horizon",
    "loads",
    "wind",
    "tariffs",
    "converters",
    "storages",
    "carbon",
    "dr",
    "purchase_caps",
    "maintenance",
    "chp",
    "gas_kwh_per_m3",
    "sources",
}


def case_from_dict(doc: dict) -> CaseData:
    """Build a CaseData from a parsed JSON document, applying defaults."""
    if not isinstance(doc, dict):
        raise SchemaError("case document must be a JSON object", "top level")
    _check_keys(doc, _TOP_KEYS, "")
    horizon = _parse_horizon(doc.get("horizon"))
    loads = _parse_loads(_require(doc, "loads", ""))

    wind = _require(doc, "wind", "")
    if not isinstance(wind, dict):
        raise SchemaError("wind must be an object", "wind")
    _check_keys(wind, {"profile", "max_kw"}, "wind")
    wind_profile = tuple(_array(_require(wind, "profile", "wind"), "wind.profile"))
    wind_max = _number(_require(wind, "max_kw", "wind"), "wind.max_kw")

    tariffs_doc = _require(doc, "tariffs", "")
    if not isinstance(tariffs_doc, dict):
        raise SchemaError("tariffs must be an object", "tariffs")
    _check_keys(tariffs_doc, {"electricity", "gas"}, "tariffs")
    tariffs = TariffProfile(
        tuple(_array(_require(tariffs_doc, "electricity", "tariffs"), "tariffs.electricity")),
        tuple(_array(_require(tariffs_doc, "gas", "tariffs"), "tariffs.gas")),
    )

    caps_doc = doc.get("purchase_caps")
    if caps_doc is None:
        peak_e = max(loads["electric"].values, default=0.0)
        peak_g = max(loads["gas"].values, default=0.0)
        caps = (1.5 * peak_e, 1.5 * peak_g)
    else:
        pair = _array(caps_doc, "purchase_caps")
        if len(pair) != 2:
            raise SchemaError("expected [electric_cap, gas_cap]", "purchase_caps")
        caps = (pair[0], pair[1])

    maint = dict(DEFAULT_MAINTENANCE)
    maint_doc = doc.get("maintenance")
    if maint_doc is not None:
        if not isinstance(maint_doc, dict):
            raise SchemaError("maintenance must map device to price", "maintenance")
        _check_keys(maint_doc, set(DEFAULT_MAINTENANCE), "maintenance")
        for k, v in maint_doc.items():
            maint[k] = _number(v, f"maintenance.{k}")

    sources = doc.get("sources", {})
    if not isinstance(sources, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in sources.items()
    ):
        raise SchemaError("sources must map field to provenance string", "sources")

    return CaseData(
        horizon=horizon,
        loads=loads,
        wind_profile=wind_profile,
        wind_max_kw=wind_max,
        tariffs=tariffs,
        converters=_parse_converters(doc.get("converters")),
        storages=_parse_storages(doc.get("storages")),
        carbon=_parse_carbon(doc.get("carbon")),
        dr=_parse_dr(doc.get("dr")),
        purchase_caps=caps,
        maintenance=maint,
        chp=_parse_chp(doc.get("chp")),
        gas_kwh_per_m3=_number(doc.get("gas_kwh_per_m3", 10.0), "gas_kwh_per_m3"),
        sources=dict(sources),
    )


def load_case(path: str) -> CaseData:
    """Load, default-fill, and validate a case file."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}", path) from None
    case = case_from_dict(doc)
    report = validate_case(case)
    if report.errors:
        raise UnitError("; ".join(report.errors[:3]), report.errors[0].split(":")[0])
    return case


def case_to_dict(case: CaseData) -> dict:
    """Inverse of case_from_dict (field-for-field)."""
    return {
        "horizon": {"periods": case.horizon.periods, "step_hours": case.horizon.step_hours},
        "loads": {k: list(case.loads[k].values) for k in CARRIERS},
        "wind": {"profile": list(case.wind_profile), "max_kw": case.wind_max_kw},
        "tariffs": {
            "electricity": list(case.tariffs.electricity_price),
            "gas": list(case.tariffs.gas_price),
        },
        "converters": [
            {
                "name": c.name,
                "capacity_kw": c.capacity_kw,
                "efficiencies": dict(c.efficiencies),
                "ramp_fraction": c.ramp_fraction,
                "min_output_kw": c.min_output_kw,
            }
            for c in case.converters
        ],
        "storages": [asdict(s) for s in case.storages],
        "carbon": {
            **{
                f: getattr(case.carbon, f)
                for f in (
                    "mechanism",
                    "sigma_e",
                    "sigma_h",
                    "sigma_gload",
                    "sigma_eh",
                    "lambda_base",
                    "alpha_growth",
                    "interval_d",
                    "delta_gasload",
                    "theta_p2g",
                    "extra_tiers",
                )
            },
            "coal_quad": list(case.carbon.coal_quad),
            "gas_quad": list(case.carbon.gas_quad),
        },
        "dr": {
            "shiftable_fraction": dict(case.dr.shiftable_fraction),
            "substitutable_fraction": dict(case.dr.substitutable_fraction),
            "mu_shift": case.dr.mu_shift,
            "mu_subst": case.dr.mu_subst,
            "satisfaction_min": case.dr.satisfaction_min,
            "shift_bounds": {
                k: (list(v) if v is not None else None)
                for k, v in case.dr.shift_bounds.items()
            },
            "subst_conversion": dict(case.dr.subst_conversion),
            "literal_eq2": case.dr.literal_eq2,
            "shift_carriers": list(case.dr.shift_carriers),
            "subst_carriers": list(case.dr.subst_carriers),
        },
        "purchase_caps": list(case.purchase_caps),
        "maintenance": dict(case.maintenance),
        "chp": {
            "extraction_mode": case.chp.extraction_mode,
            "ratio_min": case.chp.ratio_min,
            "ratio_max": case.chp.ratio_max,
        },
        "gas_kwh_per_m3": case.gas_kwh_per_m3,
        "sources": dict(case.sources),
    }


def save_case(case: CaseData, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(case_to_dict(case), fh, indent=2, sort_keys=True)
        fh.write("\n")


def case_hash(case: CaseData) -> str:
    blob = json.dumps(case_to_dict(case), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- validation ---------------------------------------------------------------


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_case(case: CaseData) -> ValidationReport:
    """Check every type invariant; returns a report instead of raising."""
    rep = ValidationReport()
    err, warn = rep.errors.append, rep.warnings.append
    T = case.horizon.periods

    if T < 1:
        err("horizon.periods: must be >= 1")
    if not case.horizon.step_hours > 0:
        err("horizon.step_hours: must be > 0")

    for k in CARRIERS:
        prof = case.loads.get(k)
        if prof is None:
            err(f"loads.{k}: missing carrier profile")
            continue
        if len(prof.values) != T:
            err(f"loads.{k}: length {len(prof.values)} != horizon.periods {T}")
        if any(v < 0 for v in prof.values):
            err(f"loads.{k}: negative load value")

    if len(case.wind_profile) != T:
        err(f"wind.profile: length {len(case.wind_profile)} != horizon.periods {T}")
    if any(v < 0 for v in case.wind_profile):
        err("wind.profile: negative value")
    if case.wind_max_kw < 0:
        err("wind.max_kw: must be >= 0")

    for name, prices in (
        ("tariffs.electricity", case.tariffs.electricity_price),
        ("tariffs.gas", case.tariffs.gas_price),
    ):
        if len(prices) != T:
            err(f"{name}: length {len(prices)} != horizon.periods {T}")
        if any(p < 0 for p in prices):
            err(f"{name}: negative price")

    seen_conv = set()
    for conv in case.converters:
        path = f"converters[{conv.name}]"
        if conv.name in seen_conv:
            err(f"{path}: duplicate converter")
        seen_conv.add(conv.name)
        if not conv.capacity_kw > 0 or not _finite(conv.capacity_kw):
            err(f"{path}.capacity_kw: must be > 0 (got {conv.capacity_kw})")
        for carrier, eff in conv.efficiencies.items():
            if not 0 < eff <= 1:
                err(f"{path}.efficiencies.{carrier}: must be in (0, 1] (got {eff})")
        if not 0 < conv.ramp_fraction <= 1:
            err(f"{path}.ramp_fraction: must be in (0, 1] (got {conv.ramp_fraction})")
        if not 0 <= conv.min_output_kw <= max(conv.capacity_kw, 0.0):
            err(f"{path}.min_output_kw: must be in [0, capacity]")

    seen_sto = set()
    for sto in case.storages:
        path = f"storages[{sto.carrier}]"
        if sto.carrier not in CARRIERS:
            err(f"{path}: unknown carrier")
        if sto.carrier in seen_sto:
            err(f"{path}: at most one storage per carrier")
        seen_sto.add(sto.carrier)
        if not sto.capacity_kwh > 0:
            err(f"{path}.capacity_kwh: must be > 0 (got {sto.capacity_kwh})")
        if not 0 <= sto.soc_min_frac < sto.soc_max_frac <= 1:
            err(f"{path}: soc bounds inverted or outside [0, 1]")
        elif not sto.soc_min_frac <= sto.soc_initial_frac <= sto.soc_max_frac:
            err(f"{path}.soc_initial_frac: outside [soc_min_frac, soc_max_frac]")
        if not 0 < sto.power_limit_fraction <= 1:
            err(f"{path}.power_limit_fraction: must be in (0, 1]")
        for fname in ("charge_eff", "discharge_eff"):
            v = getattr(sto, fname)
            if not 0 < v <= 1:
                err(f"{path}.{fname}: must be in (0, 1] (got {v})")

    cb = case.carbon
    if cb.mechanism not in (MECHANISM_NONE, MECHANISM_TRADITIONAL, MECHANISM_TIERED):
        err(f"carbon.mechanism: unknown {cb.mechanism!r}")
    if cb.lambda_base < 0:
        err("carbon.lambda_base: must be >= 0")
    if cb.alpha_growth < 0:
        err("carbon.alpha_growth: must be >= 0")
    if not cb.interval_d > 0:
        err("carbon.interval_d: must be > 0")
    if cb.coal_quad[2] < 0:
        err("carbon.coal_quad: quadratic coefficient must be >= 0 (convex)")
    if cb.gas_quad[2] < 0:
        err("carbon.gas_quad: quadratic coefficient must be >= 0 (convex)")
    for f in ("sigma_e", "sigma_h", "sigma_gload", "sigma_eh", "delta_gasload", "theta_p2g"):
        if getattr(cb, f) < 0:
            err(f"carbon.{f}: must be >= 0")
    if cb.extra_tiers < 0:
        err("carbon.extra_tiers: must be >= 0")

    dr = case.dr
    for k in CARRIERS:
        sf = dr.shiftable_fraction.get(k, 0.0)
        cf = dr.substitutable_fraction.get(k, 0.0)
        if not 0 <= sf <= 1:
            err(f"dr.shiftable_fraction.{k}: must be in [0, 1]")
        if not 0 <= cf <= 1:
            err(f"dr.substitutable_fraction.{k}: must be in [0, 1]")
        if sf + cf > 1:
            err(f"dr.{k}: DR fractions exceed 1 ({sf} + {cf})")
        bounds = dr.shift_bounds.get(k)
        if bounds is not None and bounds[0] > bounds[1]:
            err(f"dr.shift_bounds.{k}: min > max")
        if dr.subst_conversion.get(k, 1.0) <= 0:
            err(f"dr.subst_conversion.{k}: must be > 0")
    if not 0 <= dr.satisfaction_min <= 1:
        err("dr.satisfaction_min: must be in [0, 1]")
    if dr.mu_shift < 0 or dr.mu_subst < 0:
        err("dr: compensation coefficients must be >= 0")

    if case.purchase_caps[0] < 0 or case.purchase_caps[1] < 0:
        err("purchase_caps: must be >= 0")
    for k, v in case.maintenance.items():
        if v < 0:
            err(f"maintenance.{k}: must be >= 0")
    if not case.gas_kwh_per_m3 > 0:
        err("gas_kwh_per_m3: must be > 0")
    if not case.chp.ratio_min <= case.chp.ratio_max:
        err("chp: ratio_min > ratio_max")

    # warnings: legal but suspicious
    gt, whb = case.converter("GT"), case.converter("WHB")
    if gt and whb and not case.chp.extraction_mode:
        eff_e = gt.efficiencies.get("electric", 0.0)
        eff_h = gt.efficiencies.get("heat", 0.0) * whb.efficiencies.get("heat", 0.0)
        if eff_e > 0:
            ratio = eff_h / eff_e
            if not case.chp.ratio_min <= ratio <= case.chp.ratio_max:
                warn(
                    f"chp: fixed heat-to-power ratio {ratio:.3f} outside "
                    f"[{case.chp.ratio_min}, {case.chp.ratio_max}]; CHP will be forced off"
                )
    if case.loads.get("electric") and len(case.wind_profile) == T and T > 0:
        el = case.loads["electric"].values
        if len(el) == T and all(w >= l for w, l in zip(case.wind_profile, el)):
            warn("wind.profile: forecast exceeds electric load in every period")
    return rep


def scale_profiles(case: CaseData, factors: dict[str, float]) -> CaseData:
    """New case with per-carrier load profiles scaled (used by perturbation runs)."""
    loads = {
        k: CarrierProfile(k, tuple(v * factors.get(k, 1.0) for v in case.loads[k].values))
        for k in CARRIERS
    }
    wind = tuple(v * factors.get("wind", 1.0) for v in case.wind_profile)
    return replace(case, loads=loads, wind_profile=wind)


def reduce_case(case: CaseData, factor: int = 2) -> CaseData:
    """Coarsen the horizon by averaging consecutive blocks of `factor` periods.

    Period count divides by `factor` and the step length multiplies by it,
    so total served energy is preserved.  Per-period device limits (ramps,
    storage power) keep their per-period meaning at the coarser step.
    """
    periods = case.horizon.periods
    if factor < 1 or periods % factor != 0:
        raise ValueError(f"factor {factor} does not divide {periods} periods")

    def block_mean(seq):
        return tuple(
            sum(seq[i * factor : (i + 1) * factor]) / factor
            for i in range(periods // factor)
        )

    loads = {k: CarrierProfile(k, block_mean(p.values)) for k, p in case.loads.items()}
    tariffs = TariffProfile(
        block_mean(case.tariffs.electricity_price),
        block_mean(case.tariffs.gas_price),
    )
    horizon = Horizon(periods // factor, case.horizon.step_hours * factor)
    return replace(
        case,
        horizon=horizon,
        loads=loads,
        wind_profile=block_mean(case.wind_profile),
        tariffs=tariffs,
    )
