"""Shared brute-force MILP oracle used by the acceptance gate.

The reference optimum enumerates every binary assignment and solves the
remaining LP with an independent solver (scipy HiGHS), so agreement is a
genuine cross-check rather than a self-comparison.
"""

import itertools
import random

import numpy as np
from scipy.optimize import linprog

from iesdispatch.milp_ir import GE, LE, MilpModel, as_expression


def random_milp(rng: random.Random, n_binaries: int) -> MilpModel:
    """Small mixed model with bounded continuous tail and random rows."""
    m = MilpModel()
    nc = rng.randint(1, 4)
    xs = [m.add_binary(f"b{i}") for i in range(n_binaries)]
    xs += [m.add_continuous(0.0, rng.choice([1.0, 10.0]), f"x{i}") for i in range(nc)]
    for j in range(rng.randint(1, 6)):
        expr = as_expression(0.0)
        for v in rng.sample(xs, rng.randint(1, len(xs))):
            expr = expr + rng.choice([-2.0, -1.0, 1.0, 3.0]) * v
        if expr.coeffs:
            m.add_constraint(expr, rng.choice([LE, GE]), rng.uniform(-2, 5), f"r{j}")
    obj = as_expression(0.0)
    for v in xs:
        obj = obj + rng.uniform(-3, 3) * v
    m.set_objective(obj)
    return m


def brute_force_milp(model: MilpModel):
    """(status, objective) via exhaustive binary enumeration + LP per leaf."""
    bids = model.binary_ids()
    c, c0, A, relations, rhs, lb, ub, _ = model.to_dense()
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, rel, b in zip(A, relations, rhs):
        if rel == LE:
            A_ub.append(row)
            b_ub.append(b)
        elif rel == GE:
            A_ub.append(-row)
            b_ub.append(-b)
        else:
            A_eq.append(row)
            b_eq.append(b)
    A_ub = np.array(A_ub) if A_ub else None
    b_ub = np.array(b_ub) if b_ub else None
    A_eq = np.array(A_eq) if A_eq else None
    b_eq = np.array(b_eq) if b_eq else None

    best = None
    feasible = False
    for bits in itertools.product((0.0, 1.0), repeat=len(bids)):
        lo, hi = lb.copy(), ub.copy()
        for j, bit in zip(bids, bits):
            lo[j] = hi[j] = bit
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=list(zip(lo, hi)),
            method="highs",
        )
        if res.status == 0:
            feasible = True
            if best is None or res.fun < best:
                best = res.fun
        elif res.status == 3:
            return "unbounded", None
    if not feasible:
        return "infeasible", None
    return "optimal", best + c0
