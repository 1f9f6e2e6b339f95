"""Brute-force reference computations.

Nothing here uses the prefix sweep or the greedy ordering logic being
checked: explicit constraint enumeration, total vertex enumeration and LPs
stated directly on device constraints.  All routines refuse sizes where
enumeration is impractical instead of silently sampling.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core_model import DeviceParams, ValidationError
from .optimize import CouplingConstraints, InfeasibleError
from .setfn import ParamodularOracle, all_masks, as_mask
from .simplex import INFEASIBLE, OPTIMAL, LPResult, simplex_solve

MAX_HREP_T = 12
MAX_BRUTE_T = 7
MAX_SUPPORT_T = 6
MAX_COUPLED_T = 5


def _guard(T: int, limit: int, what: str):
    if T > limit:
        raise ValueError(f"{what} is limited to T <= {limit} (got {T})")


@dataclass
class HRep:
    """Rows ``sense * u(A) <= sense * value``: ``sense`` is -1 for ``u(A) >= p(A)``."""

    masks: np.ndarray
    senses: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    def as_ub(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.senses.astype(float)
        return s[:, None] * self.masks.astype(float), s * self.values

    def violation(self, u) -> float:
        A, rhs = self.as_ub()
        return max(0.0, float(np.max(A @ np.asarray(u) - rhs, initial=0.0)))


def enumerate_constraints(oracle: ParamodularOracle, T: int | None = None) -> HRep:
    """All finite rows ``p(A) <= u(A) <= b(A)`` over nonempty ``A``."""
    T = oracle.T if T is None else T
    _guard(T, MAX_HREP_T, "constraint enumeration")
    masks = all_masks(T)[1:]
    p, b = oracle.eval_many(masks)
    rows_m, rows_s, rows_v = [], [], []
    for sense, vals in ((-1, p), (1, b)):
        keep = np.isfinite(vals)
        rows_m.append(masks[keep])
        rows_s.append(np.full(keep.sum(), sense))
        rows_v.append(vals[keep])
    return HRep(np.concatenate(rows_m), np.concatenate(rows_s), np.concatenate(rows_v))


def brute_lp(oracle: ParamodularOracle, c) -> tuple[np.ndarray, float]:
    """Cheapest vertex over all ``(T + 1)!`` orderings of the lifted ground set.

    The lifted function is tabulated over all ``2**(T + 1)`` subsets first;
    every ordering then reads its prefix values from the table.
    """
    T = oracle.T
    _guard(T, MAX_BRUTE_T, "vertex enumeration")
    c = np.asarray(c, dtype=float)
    lifted = all_masks(T + 1)
    has_aux = lifted[:, 0]
    real = lifted[:, 1:]
    p, b = oracle.eval_many(np.where(has_aux[:, None], ~real, real))
    table = np.where(has_aux, -p, b)
    perms = np.array(list(itertools.permutations(range(T + 1))))
    codes = np.cumsum(1 << perms, axis=1)
    values = table[codes]
    steps = np.diff(values, prepend=0.0, axis=1)
    points = np.zeros((len(perms), T + 1))
    np.put_along_axis(points, perms, steps, axis=1)
    objs = points[:, 1:] @ c
    best = int(np.argmin(objs))
    return points[best, 1:], float(objs[best])


def hrep_lp(hrep: HRep, c, coupling: CouplingConstraints | None = None) -> LPResult:
    A, rhs = hrep.as_ub()
    if coupling is not None and coupling.m:
        A = np.vstack([A, coupling.C])
        rhs = np.concatenate([rhs, coupling.d])
    return simplex_solve(c, A, rhs, bounds=(None, None))


def device_constraints(params: DeviceParams) -> tuple[np.ndarray, np.ndarray, list]:
    """Inequalities of the flexibility set written directly from the bounds."""
    T = params.T
    L = np.tril(np.ones((T, T)))
    rows, rhs = [], []
    for t in range(T):
        if np.isfinite(params.x_hi[t]):
            rows.append(L[t])
            rhs.append(params.x_hi[t])
        if np.isfinite(params.x_lo[t]):
            rows.append(-L[t])
            rhs.append(-params.x_lo[t])
    A = np.array(rows).reshape(-1, T)
    return A, np.array(rhs), list(zip(params.u_lo, params.u_hi))


def support_lp(devices: DeviceParams | Sequence[DeviceParams], A, sense: str) -> float:
    """``min`` or ``max`` of ``u(A)`` over a device or a Minkowski sum of devices.

    For several devices every member gets its own variables and the
    objective sums their consumption in ``A``.
    """
    if isinstance(devices, DeviceParams):
        devices = [devices]
    devices = list(devices)
    T = devices[0].T
    _guard(T, MAX_SUPPORT_T, "support LP")
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    mask = as_mask(A, T).astype(float)
    blocks, rhs, bounds = [], [], []
    for params in devices:
        Ai, bi, bnds = device_constraints(params)
        blocks.append(Ai)
        rhs.append(bi)
        bounds.extend(bnds)
    n = T * len(devices)
    A_ub = np.zeros((sum(len(b) for b in rhs), n))
    r = 0
    for k, Ai in enumerate(blocks):
        A_ub[r:r + len(Ai), k * T:(k + 1) * T] = Ai
        r += len(Ai)
    c = np.tile(mask, len(devices)) * (1.0 if sense == "min" else -1.0)
    res = simplex_solve(c, A_ub, np.concatenate(rhs), bounds=bounds)
    if res.status == INFEASIBLE:
        raise ValidationError("infeasible_device", "empty flexibility set")
    if res.status != OPTIMAL:
        raise RuntimeError(f"support LP failed: {res.status}")
    return res.objective if sense == "min" else -res.objective


def feasible_by_simplex(params: DeviceParams) -> bool:
    A, b, bounds = device_constraints(params)
    if any(lo > hi for lo, hi in bounds):
        return False
    return simplex_solve(np.zeros(params.T), A, b, bounds=bounds).status == OPTIMAL


def coupled_reference(oracle: ParamodularOracle, c, coupling: CouplingConstraints | None = None
                      ) -> LPResult:
    """LP on the enumerated constraints plus coupling rows.

    Raises :class:`InfeasibleError` when the combined system is empty.
    """
    _guard(oracle.T, MAX_COUPLED_T, "coupled reference")
    res = hrep_lp(enumerate_constraints(oracle), c, coupling)
    if res.status == INFEASIBLE:
        raise InfeasibleError("reference LP infeasible")
    if res.status != OPTIMAL:
        raise RuntimeError(f"reference LP failed: {res.status}")
    return res
