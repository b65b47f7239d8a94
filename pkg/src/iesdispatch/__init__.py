"""Low-carbon optimal dispatch for an electricity-gas-heat energy system.

Library layout:

- model_core: case data model, JSON ingestion, validation
- demand_response: load decomposition, shift/substitute blocks, satisfaction
- carbon: quota/actual emission accounting, tiered trading cost
- milp_ir: solver-agnostic MILP representation and linearization helpers
- solver: simplex + branch-and-bound behind a backend contract
- dispatch: scenario assembly, solving, verification, sweeps
- cli: command-line entry points
"""

__version__ = "0.1.0"
