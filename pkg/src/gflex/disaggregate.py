"""Split an aggregate profile into feasible per-device profiles.

Every aggregate vertex is labeled by an ordering of the lifted ground set;
the same ordering applied to each device yields device vertices that sum to
the aggregate one.  Reusing the convex weights of the aggregate solution on
those device vertices gives each device a profile inside its own
flexibility set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_model import DeviceParams, Population, check_membership, membership_violation
from .optimize import Vertex, caratheodory_reduce, member_vertices, vertex_from_permutation
from .setfn import ParamodularOracle, StackedOracle

WEIGHT_TOL = 1e-9
FEAS_TOL = 1e-9


@dataclass
class DisaggregationResult:
    profiles: np.ndarray  # (N, T)
    residual: float
    feasible: list[bool]
    ids: list[str]
    atoms: list[tuple[float, tuple[int, ...]]]
    oracle_evals: int = 0

    @property
    def ok(self) -> bool:
        return self.residual <= FEAS_TOL and all(self.feasible)

    def total(self) -> np.ndarray:
        return self.profiles.sum(axis=0)


def _normalize_atoms(atoms) -> list[tuple[float, tuple[int, ...], np.ndarray | None]]:
    out = []
    for w, item in atoms:
        if isinstance(item, Vertex):
            out.append((float(w), item.label, item.u))
        elif item is None:
            raise ValueError("atom without permutation label")
        else:
            out.append((float(w), tuple(int(x) for x in item), None))
    return out


def disaggregate(devices: Population | Sequence[DeviceParams] | Sequence[ParamodularOracle],
                 atoms: Sequence, target=None) -> DisaggregationResult:
    """Per-device profiles for an aggregate point given as labeled atoms.

    Args:
        devices: the population, its device parameters, or one oracle per
            device (feasibility flags are only computed when parameters are
            known).
        atoms: ``(weight, Vertex)`` or ``(weight, label)`` pairs with weights
            summing to one.
        target: aggregate profile to measure the residual against; defaults
            to the weighted sum of aggregate atom vertices.
    """
    ids: list[str]
    params: list[DeviceParams] | None
    if isinstance(devices, Population):
        ids = [d.id for d in devices]
        params = devices.params
        oracles = None
    else:
        devices = list(devices)
        if devices and all(isinstance(d, DeviceParams) for d in devices):
            params, oracles = devices, None
        else:
            params, oracles = None, devices
        ids = [str(i) for i in range(len(devices))]
    if not ids:
        raise ValueError("no devices to disaggregate to")
    T = params[0].T if params is not None else oracles[0].T

    norm = _normalize_atoms(atoms)
    if not norm:
        raise ValueError("no atoms")
    weights = np.array([w for w, _, _ in norm])
    if (weights < -WEIGHT_TOL).any() or abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"atom weights must be nonnegative and sum to 1 (sum={weights.sum()})")

    stacked = StackedOracle(params, check=False) if params is not None else None

    def aggregate_vertex(label) -> np.ndarray:
        if stacked is not None:
            return vertex_from_permutation(stacked, label).u
        return sum(vertex_from_permutation(o, label).u for o in oracles)

    if len(norm) > T + 1:
        reduced = caratheodory_reduce(
            [(w, Vertex(aggregate_vertex(lab) if u is None else u, lab)) for w, lab, u in norm], T)
        norm = [(w, v.label, v.u) for w, v in reduced]

    N = len(ids)
    profiles = np.zeros((N, T))
    evals = 0
    for w, label, _ in norm:
        if stacked is not None:
            verts = member_vertices(stacked, label)
        else:
            verts = np.array([vertex_from_permutation(o, label).u for o in oracles])
        evals += N * (T + 1)
        profiles += w * verts

    if target is None:
        target = sum(w * (aggregate_vertex(lab) if u is None else u) for w, lab, u in norm)
    residual = float(np.max(np.abs(np.asarray(target) - profiles.sum(axis=0)), initial=0.0))
    if params is not None:
        feasible = [check_membership(p, u, FEAS_TOL) for p, u in zip(params, profiles)]
    else:
        feasible = [True] * N
    return DisaggregationResult(profiles, residual, feasible, ids,
                                [(w, lab) for w, lab, _ in norm], oracle_evals=evals)


@dataclass
class VerificationReport:
    residual: float
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "residual": self.residual, "violations": self.violations}


def verify_disaggregation(population: Population, profiles, u_target,
                          tol: float = FEAS_TOL) -> VerificationReport:
    """Recheck the sum and every device's constraints from scratch."""
    if isinstance(profiles, DisaggregationResult):
        profiles = profiles.profiles
    profiles = np.asarray(profiles, dtype=float)
    if profiles.shape != (len(population), population.T):
        raise ValueError("profiles do not match the population")
    residual = float(np.max(np.abs(np.asarray(u_target) - profiles.sum(axis=0)), initial=0.0))
    report = VerificationReport(residual)
    if residual > tol:
        report.violations.append({"device_id": None, "kind": "residual", "magnitude": residual})
    for dev, u in zip(population, profiles):
        if not check_membership(dev.params, u, tol):
            report.violations.append({"device_id": dev.id, "kind": "membership",
                                      "magnitude": membership_violation(dev.params, u)})
    return report
