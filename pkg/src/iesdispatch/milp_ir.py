"""Solver-agnostic mixed-integer linear model representation.

A ``MilpModel`` is a plain container of variables, linear constraints and a
minimization objective.  It knows nothing about solving; the ``solver``
package consumes the dense arrays produced by :meth:`MilpModel.to_dense`.

The module also carries the linearization toolkit used by the dispatch
model: epigraph cuts for convex quadratics, an exact incremental piecewise
formulation for general curves, and big-M indicator links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LE = "<="
EQ = "="
GE = ">="

_RELATIONS = (LE, EQ, GE)

INF = math.inf


class ModelError(Exception):
    """Base class for model construction errors."""


class BoundError(ModelError):
    """Variable bounds are inverted or non-finite where finiteness is required."""


class DuplicateNameError(ModelError):
    """A variable or constraint name was registered twice."""


class TriviallyInfeasibleError(ModelError):
    """A constraint with no variables contradicts its own right-hand side."""


class ConvexityError(ModelError):
    """pwl_convex was asked to linearize a concave quadratic."""


class PwlRangeError(ModelError):
    """The argument variable can leave the breakpoint span."""


class BigMError(ModelError):
    """The big-M constant would cut feasible space."""


class FrozenModelError(ModelError):
    """Attempted to mutate a finalized model."""


@dataclass(frozen=True)
class Variable:
    """Handle into a MilpModel; ids are dense 0..n-1 in creation order."""

    id: int
    kind: str
    lower: float
    upper: float
    name: str

    def __mul__(self, scalar):
        return LinearExpression({self.id: float(scalar)})

    __rmul__ = __mul__

    def __add__(self, other):
        return LinearExpression({self.id: 1.0}) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinearExpression({self.id: 1.0}) - other

    def __rsub__(self, other):
        return (-1.0 * self) + other

    def __neg__(self):
        return LinearExpression({self.id: -1.0})


class LinearExpression:
    """Sparse affine expression: sum of coefficient*variable plus a constant."""

    __slots__ = ("coeffs", "constant")

    def __init__(self, coeffs=None, constant=0.0):
        self.coeffs: dict[int, float] = {}
        if coeffs:
            for vid, c in coeffs.items():
                c = float(c)
                if not math.isfinite(c):
                    raise ModelError(f"non-finite coefficient for variable {vid}")
                if c != 0.0:
                    self.coeffs[vid] = c
        self.constant = float(constant)

    @staticmethod
    def _as_expr(other) -> "LinearExpression":
        if isinstance(other, LinearExpression):
            return other
        if isinstance(other, Variable):
            return LinearExpression({other.id: 1.0})
        return LinearExpression(constant=float(other))

    def __add__(self, other):
        other = self._as_expr(other)
        coeffs = dict(self.coeffs)
        for vid, c in other.coeffs.items():
            coeffs[vid] = coeffs.get(vid, 0.0) + c
        return LinearExpression(coeffs, self.constant + other.constant)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (self._as_expr(other) * -1.0)

    def __rsub__(self, other):
        return self._as_expr(other) + (self * -1.0)

    def __mul__(self, scalar):
        scalar = float(scalar)
        return LinearExpression(
            {vid: c * scalar for vid, c in self.coeffs.items()},
            self.constant * scalar,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def value(self, x) -> float:
        """Evaluate at a point; x is indexable by variable id."""
        return self.constant + sum(c * float(x[vid]) for vid, c in self.coeffs.items())

    def __repr__(self):
        terms = " + ".join(f"{c:g}*x{vid}" for vid, c in sorted(self.coeffs.items()))
        return f"LinearExpression({terms or '0'} + {self.constant:g})"


def as_expression(term) -> LinearExpression:
    """Coerce a Variable, number, or expression to a LinearExpression."""
    return LinearExpression._as_expr(term)


@dataclass(frozen=True)
class Constraint:
    """Row ``expr rel rhs``; the expression constant is folded into rhs."""

    id: int
    coeffs: dict[int, float]
    relation: str
    rhs: float
    name: str


class MilpModel:
    """Mutable model builder; freeze() renders it immutable for sharing."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []
        self.objective = LinearExpression()
        self._var_by_name: dict[str, int] = {}
        self._con_by_name: dict[str, int] = {}
        self._frozen = False

    # -- construction ------------------------------------------------------

    def _check_mutable(self):
        if self._frozen:
            raise FrozenModelError("model is frozen")

    def add_variable(self, kind: str, lower: float, upper: float, name: str) -> Variable:
        self._check_mutable()
        if kind not in (CONTINUOUS, BINARY):
            raise ModelError(f"unknown variable kind {kind!r}")
        if name in self._var_by_name:
            raise DuplicateNameError(f"variable name {name!r} already used")
        lower, upper = float(lower), float(upper)
        if kind == BINARY:
            # clamp into [0,1]; callers may pass wider bounds
            lower = max(lower, 0.0)
            upper = min(upper, 1.0)
        if lower > upper:
            raise BoundError(f"variable {name!r}: lower {lower} > upper {upper}")
        if math.isnan(lower) or math.isnan(upper):
            raise BoundError(f"variable {name!r}: NaN bound")
        var = Variable(len(self.variables), kind, lower, upper, name)
        self.variables.append(var)
        self._var_by_name[name] = var.id
        return var

    def add_continuous(self, lower: float, upper: float, name: str) -> Variable:
        return self.add_variable(CONTINUOUS, lower, upper, name)

    def add_binary(self, name: str) -> Variable:
        return self.add_variable(BINARY, 0.0, 1.0, name)

    def add_constraint(self, expr, relation: str, rhs: float, name: str | None = None) -> int:
        self._check_mutable()
        if relation not in _RELATIONS:
            raise ModelError(f"unknown relation {relation!r}")
        expr = as_expression(expr)
        rhs = float(rhs) - expr.constant
        if not math.isfinite(rhs):
            raise ModelError(f"constraint {name!r}: non-finite right-hand side")
        cid = len(self.constraints)
        if name is None:
            name = f"c{cid}"
        if name in self._con_by_name:
            raise DuplicateNameError(f"constraint name {name!r} already used")
        for vid in expr.coeffs:
            if vid >= len(self.variables):
                raise ModelError(f"constraint {name!r} references unknown variable {vid}")
        if not expr.coeffs:
            ok = (
                (relation == LE and 0.0 <= rhs + 1e-12)
                or (relation == GE and 0.0 >= rhs - 1e-12)
                or (relation == EQ and abs(rhs) <= 1e-12)
            )
            if not ok:
                raise TriviallyInfeasibleError(
                    f"constraint {name!r} has no variables and is violated: 0 {relation} {rhs}"
                )
        con = Constraint(cid, dict(expr.coeffs), relation, rhs, name)
        self.constraints.append(con)
        self._con_by_name[name] = cid
        return cid

    def set_objective(self, expr) -> None:
        """Set the minimization objective."""
        self._check_mutable()
        expr = as_expression(expr)
        for vid, c in expr.coeffs.items():
            if not math.isfinite(c):
                raise ModelError(f"objective coefficient for variable {vid} not finite")
            if vid >= len(self.variables):
                raise ModelError(f"objective references unknown variable {vid}")
        self.objective = expr

    def freeze(self) -> "MilpModel":
        self._frozen = True
        return self

    # -- introspection -----------------------------------------------------

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def variable(self, name: str) -> Variable:
        return self.variables[self._var_by_name[name]]

    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.kind == BINARY]

    def to_dense(self):
        """Dense arrays (c, c0, A, relations, rhs, lb, ub, is_binary).

        A has one row per constraint in registration order.  Intended for
        the embedded solver and the scipy adapter; fine at dispatch scale.
        """
        n = len(self.variables)
        m = len(self.constraints)
        c = np.zeros(n)
        for vid, coef in self.objective.coeffs.items():
            c[vid] = coef
        A = np.zeros((m, n))
        rhs = np.zeros(m)
        relations = []
        for i, con in enumerate(self.constraints):
            for vid, coef in con.coeffs.items():
                A[i, vid] = coef
            rhs[i] = con.rhs
            relations.append(con.relation)
        lb = np.array([v.lower for v in self.variables])
        ub = np.array([v.upper for v in self.variables])
        is_binary = np.array([v.kind == BINARY for v in self.variables])
        return c, self.objective.constant, A, relations, rhs, lb, ub, is_binary

    def check_solution(self, x, tol: float = 1e-6) -> list[str]:
        """Names of constraints/bounds violated by x beyond tol."""
        bad = []
        for v in self.variables:
            if x[v.id] < v.lower - tol or x[v.id] > v.upper + tol:
                bad.append(f"bound:{v.name}")
        for con in self.constraints:
            lhs = sum(c * x[vid] for vid, c in con.coeffs.items())
            if con.relation == LE and lhs > con.rhs + tol:
                bad.append(con.name)
            elif con.relation == GE and lhs < con.rhs - tol:
                bad.append(con.name)
            elif con.relation == EQ and abs(lhs - con.rhs) > tol:
                bad.append(con.name)
        return bad


# -- linearization toolkit ---------------------------------------------------


def quad_value(quad, x: float) -> float:
    """Evaluate a + b*x + c*x**2."""
    a, b, c = quad
    return a + b * x + c * x * x


def pwl_convex_error_bound(c: float, x_max: float, segments: int) -> float:
    """Worst-case gap between the tangent envelope and the quadratic."""
    return c * (x_max / segments) ** 2 / 4.0


def pwl_convex_value(quad, x_max: float, segments: int, x: float) -> float:
    """Value of the pwl_convex tangent envelope at a point.

    This is what the model variable equals under downward objective
    pressure; verification recomputes it from a schedule without a model.
    """
    a, b, c = (float(v) for v in quad)
    best = -math.inf
    for i in range(segments + 1):
        xi = x_max * i / segments
        slope = b + 2.0 * c * xi
        best = max(best, quad_value(quad, xi) + slope * (x - xi))
    return best


def pwl_convex(model: MilpModel, x, quad, x_max: float, segments: int,
               name: str) -> Variable:
    """Underestimator y for the convex quadratic f(x) = a + b x + c x^2 on [0, x_max].

    Adds tangent (epigraph) cuts at segments+1 uniform breakpoints.  Under
    downward objective pressure on y the optimum satisfies
    |y - f(x)| <= c * (x_max/segments)^2 / 4.  No binaries are introduced.
    ``x`` may be a Variable or any affine expression bounded within [0, x_max].
    """
    a, b, c = (float(v) for v in quad)
    if c < 0.0:
        raise ConvexityError(f"pwl_convex requires c >= 0, got {c} (use pwl_general)")
    if segments < 1:
        raise ModelError("segments must be >= 1")
    if x_max <= 0.0:
        raise ModelError("x_max must be > 0")
    xe = as_expression(x)
    # c == 0 still works: every tangent is the same exact line y >= a + b*x
    vertex = min(max(-b / (2.0 * c), 0.0), x_max) if c > 0.0 else 0.0
    f_lo = min(quad_value(quad, t) for t in (0.0, x_max, vertex))
    f_hi = max(quad_value(quad, 0.0), quad_value(quad, x_max))
    gap = pwl_convex_error_bound(c, x_max, segments)
    y = model.add_continuous(f_lo - gap, f_hi, name)
    for i in range(segments + 1):
        xi = x_max * i / segments
        fi = quad_value(quad, xi)
        slope = b + 2.0 * c * xi
        # y >= fi + slope*(x - xi)
        model.add_constraint(y - slope * xe, GE, fi - slope * xi, f"{name}_cut{i}")
    return y


def pwl_general(model: MilpModel, x: Variable, breakpoints, values,
                name: str) -> Variable:
    """Exact piecewise-linear y = interp(x) via the incremental formulation.

    n breakpoints yield n-1 segment-fill variables and n-2 ordering binaries;
    two breakpoints reduce to an affine relation with no binaries.
    """
    bp = [float(v) for v in breakpoints]
    vals = [float(v) for v in values]
    if len(bp) < 2 or len(bp) != len(vals):
        raise ModelError("need >= 2 breakpoints with matching values")
    if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
        raise ModelError("breakpoints must be strictly increasing")
    if x.lower < bp[0] - 1e-9 or x.upper > bp[-1] + 1e-9:
        raise PwlRangeError(
            f"variable {x.name!r} bounds [{x.lower}, {x.upper}] exceed "
            f"breakpoint span [{bp[0]}, {bp[-1]}]"
        )
    nseg = len(bp) - 1
    y = model.add_continuous(min(vals), max(vals), name)
    deltas = [model.add_continuous(0.0, 1.0, f"{name}_d{i}") for i in range(nseg)]
    # x = bp0 + sum_i delta_i * width_i ; y likewise over value increments
    x_expr = LinearExpression({d.id: bp[i + 1] - bp[i] for i, d in enumerate(deltas)}, bp[0])
    y_expr = LinearExpression({d.id: vals[i + 1] - vals[i] for i, d in enumerate(deltas)}, vals[0])
    model.add_constraint(x - x_expr, EQ, 0.0, f"{name}_x")
    model.add_constraint(y - y_expr, EQ, 0.0, f"{name}_y")
    # fill order: segment i+1 may open only once segment i is full
    for i in range(nseg - 1):
        z = model.add_binary(f"{name}_z{i}")
        model.add_constraint(deltas[i + 1] - z, LE, 0.0, f"{name}_ord_lo{i}")
        model.add_constraint(z - deltas[i], LE, 0.0, f"{name}_ord_hi{i}")
    return y


def bigm_indicator(model: MilpModel, flag: Variable, x: Variable, big_m: float) -> None:
    """Add x <= big_m * flag, forcing x to 0 when the binary flag is off."""
    if flag.kind != BINARY:
        raise ModelError(f"flag {flag.name!r} must be binary")
    if not math.isfinite(big_m) or not math.isfinite(x.upper):
        raise BigMError(f"big-M link for {x.name!r} needs finite M and x upper bound")
    if big_m < x.upper - 1e-12:
        raise BigMError(
            f"big-M {big_m} smaller than upper bound {x.upper} of {x.name!r}; "
            "would silently cut feasible space"
        )
    model.add_constraint(x - big_m * flag, LE, 0.0, f"{x.name}_le_M_{flag.name}")
