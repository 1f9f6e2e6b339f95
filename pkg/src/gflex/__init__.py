"""Aggregate flexibility of distributed energy resources as g-polymatroids.

Devices with power and cumulative-energy bounds are described by a pair of
set functions; their sums describe a population exactly.  Linear costs are
minimized by a greedy ordering, coupled problems by column generation, and
optimal aggregate profiles are split back into per-device schedules.
"""

from .aggregate import (AggregateOracle, EVFleetOracle, build_ev_fleet, eval_aggregate,
                        eval_ev_fleet, ev_device, population_oracle)
from .core_model import (Device, DeviceParams, Population, ValidationError, build_ess, build_ev,
                         build_fixed_load, build_generation, check_membership, validate)
from .disaggregate import DisaggregationResult, disaggregate, verify_disaggregation
from .optimize import (CouplingConstraints, InfeasibleError, SolveResult, Vertex,
                       caratheodory_reduce, frank_wolfe, greedy_lp, solve_lp_coupled,
                       solve_many_coupled, vertex_from_permutation)
from .setfn import (IndividualOracle, StackedOracle, check_paramodular, eval_individual,
                    eval_naive)

__version__ = "0.1.0"

__all__ = [
    "AggregateOracle", "CouplingConstraints", "Device", "DeviceParams", "DisaggregationResult",
    "EVFleetOracle", "IndividualOracle", "InfeasibleError", "Population", "SolveResult",
    "StackedOracle", "ValidationError", "Vertex", "build_ess", "build_ev", "build_ev_fleet",
    "build_fixed_load", "build_generation", "caratheodory_reduce", "check_membership",
    "check_paramodular", "disaggregate", "eval_aggregate", "eval_ev_fleet", "eval_individual",
    "eval_naive", "ev_device", "frank_wolfe", "greedy_lp", "population_oracle",
    "solve_lp_coupled", "solve_many_coupled", "validate", "verify_disaggregation",
    "vertex_from_permutation",
]
