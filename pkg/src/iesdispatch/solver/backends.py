"""Solver backends behind a single contract: solve(model, options) -> MilpSolution.

- "embedded": this package's branch-and-bound (LP core chosen by
  MilpOptions.lp_core).
- "scipy-milp": scipy.optimize.milp (HiGHS branch-and-cut), used as an
  independent cross-check.
- "external": runs a user-supplied command on the LP-format export.  The
  command comes from the IESDISPATCH_EXTERNAL_SOLVER environment variable and
  receives the LP path and the solution path as arguments.  The solution file
  is plain ``key=value`` lines: a ``status=`` line, an ``objective=`` line,
  then one ``<variable>=<value>`` line per variable (LP-sanitized names).
"""

from __future__ import annotations

import os
import subprocess
import tempfile

import numpy as np

from ..lp_format import sanitized_names, write_lp
from ..milp_ir import EQ, GE, LE, MilpModel
from .branch_bound import (
    MILP_FEASIBLE,
    MILP_INFEASIBLE,
    MILP_LIMIT,
    MILP_OPTIMAL,
    MILP_UNBOUNDED,
    MilpOptions,
    MilpSolution,
    solve_milp,
)

ENV_EXTERNAL = "IESDISPATCH_EXTERNAL_SOLVER"


class BackendUnavailableError(Exception):
    def __init__(self, name: str, reason: str):
        super().__init__(f"backend {name!r} unavailable: {reason}")
        self.backend = name


class Backend:
    name = "abstract"

    def solve(self, model: MilpModel, options: MilpOptions) -> MilpSolution:
        raise NotImplementedError


class EmbeddedBackend(Backend):
    name = "embedded"

    def solve(self, model: MilpModel, options: MilpOptions) -> MilpSolution:
        return solve_milp(model, options)


class ScipyMilpBackend(Backend):
    name = "scipy-milp"

    def solve(self, model: MilpModel, options: MilpOptions) -> MilpSolution:
        try:
            from scipy.optimize import Bounds, LinearConstraint, milp
        except ImportError as exc:  # pragma: no cover
            raise BackendUnavailableError(self.name, str(exc))
        import time

        c, c0, A, relations, rhs, lb, ub, is_binary = model.to_dense()
        lo = np.where([r == LE for r in relations], -np.inf, rhs)
        hi = np.where([r == GE for r in relations], np.inf, rhs)
        kw = {"mip_rel_gap": options.gap_tol, "node_limit": options.node_limit}
        if options.time_limit is not None:
            kw["time_limit"] = options.time_limit
        t0 = time.perf_counter()
        cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
        res = milp(
            c=c,
            constraints=cons,
            integrality=is_binary.astype(int),
            bounds=Bounds(lb, ub),
            options=kw,
        )
        wall = time.perf_counter() - t0
        status = {
            0: MILP_OPTIMAL,
            1: MILP_LIMIT,
            2: MILP_INFEASIBLE,
            3: MILP_UNBOUNDED,
        }.get(res.status, MILP_LIMIT)
        x = obj = None
        bound, gap, nodes = -np.inf, np.inf, 0
        if res.x is not None:
            x = np.asarray(res.x, dtype=float)
            x[is_binary] = np.round(x[is_binary])
            obj = float(c @ x) + c0
            if status == MILP_LIMIT:
                status = MILP_FEASIBLE
        if getattr(res, "mip_dual_bound", None) is not None:
            bound = float(res.mip_dual_bound) + c0
        elif status == MILP_OPTIMAL and obj is not None:
            bound = obj
        if obj is not None:
            gap = max((obj - bound) / max(1.0, abs(obj)), 0.0)
        if getattr(res, "mip_node_count", None) is not None:
            nodes = int(res.mip_node_count)
        return MilpSolution(
            status=status,
            objective=obj,
            x=x,
            bound=bound,
            gap=gap,
            nodes=max(nodes, 1),
            wall_time=wall,
        )


class ExternalBackend(Backend):
    name = "external"

    def __init__(self, command: str | None = None):
        self.command = command if command is not None else os.environ.get(ENV_EXTERNAL)

    def solve(self, model: MilpModel, options: MilpOptions) -> MilpSolution:
        import time

        if not self.command:
            raise BackendUnavailableError(self.name, f"{ENV_EXTERNAL} is not set")
        names = sanitized_names(model)
        t0 = time.perf_counter()
        with tempfile.TemporaryDirectory(prefix="iesdispatch_") as tmp:
            lp_path = os.path.join(tmp, "model.lp")
            sol_path = os.path.join(tmp, "model.sol")
            with open(lp_path, "w", encoding="utf-8") as fh:
                fh.write(write_lp(model))
            argv = self.command.split() + [lp_path, sol_path]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise BackendUnavailableError(
                    self.name, f"command failed ({proc.returncode}): {proc.stderr.strip()}"
                )
            with open(sol_path, encoding="utf-8") as fh:
                pairs = dict(
                    line.strip().split("=", 1)
                    for line in fh
                    if "=" in line and line.strip()
                )
        wall = time.perf_counter() - t0
        status = pairs.pop("status", "limit")
        objective = pairs.pop("objective", None)
        x = obj = None
        if status in (MILP_OPTIMAL, MILP_FEASIBLE) and objective is not None:
            obj = float(objective)
            x = np.zeros(model.num_variables)
            for vid, name in enumerate(names):
                if name in pairs:
                    x[vid] = float(pairs[name])
        bound = obj if status == MILP_OPTIMAL and obj is not None else -np.inf
        gap = 0.0 if status == MILP_OPTIMAL and obj is not None else np.inf
        return MilpSolution(
            status=status,
            objective=obj,
            x=x,
            bound=bound,
            gap=gap,
            nodes=1,
            wall_time=wall,
        )


_BACKENDS = {
    EmbeddedBackend.name: EmbeddedBackend,
    ScipyMilpBackend.name: ScipyMilpBackend,
    ExternalBackend.name: ExternalBackend,
}


def get_backend(name: str) -> Backend:
    if name not in _BACKENDS:
        raise BackendUnavailableError(name, f"unknown backend; known: {sorted(_BACKENDS)}")
    return _BACKENDS[name]()


def available_backends() -> list[str]:
    names = ["embedded", "scipy-milp"]
    if os.environ.get(ENV_EXTERNAL):
        names.append("external")
    return names
