"""Super/submodular set-function pairs describing device flexibility sets.

Subsets of the horizon are boolean masks of length ``T``; :func:`as_mask`
also accepts collections of 1-based step numbers.  Every oracle evaluates a
whole batch of masks at once through ``eval_many`` which returns the lower
function ``p`` and the upper function ``b`` for each row.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from typing import Iterable, Sequence

import numpy as np

from ._jit import ENABLED as JIT_ENABLED, jit
from .core_model import DeviceParams, ValidationError, validate

PARAMODULAR_TOL = 1e-9
MAX_EXHAUSTIVE_T = 12


def as_mask(A, T: int) -> np.ndarray:
    """Boolean mask of length ``T`` from a mask or a collection of 1-based steps."""
    arr = np.asarray(list(A) if isinstance(A, (set, frozenset)) else A)
    if arr.dtype == bool:
        if arr.shape != (T,):
            raise ValueError(f"mask has shape {arr.shape}, expected ({T},)")
        return arr
    mask = np.zeros(T, dtype=bool)
    steps = arr.astype(int).reshape(-1)
    if steps.size and (steps.min() < 1 or steps.max() > T):
        raise ValueError(f"steps {sorted(steps.tolist())} outside 1..{T}")
    mask[steps - 1] = True
    return mask


def all_masks(T: int) -> np.ndarray:
    """All ``2**T`` subsets; row ``i`` has step ``t+1`` iff bit ``t`` of ``i`` is set."""
    codes = np.arange(2 ** T)[:, None]
    return ((codes >> np.arange(T)) & 1).astype(bool)


class ParamodularOracle(ABC):
    """Evaluator of a pair ``(p, b)`` over subsets of ``{1..T}``."""

    T: int

    @abstractmethod
    def eval_many(self, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate ``(p(A), b(A))`` for every row ``A`` of a ``(k, T)`` mask array."""

    def eval(self, A) -> tuple[float, float]:
        p, b = self.eval_many(as_mask(A, self.T)[None, :])
        return float(p[0]), float(b[0])

    def p(self, A) -> float:
        return self.eval(A)[0]

    def b(self, A) -> float:
        return self.eval(A)[1]


def prefix_sweep(u_lo, u_hi, x_lo, x_hi, masks) -> tuple[np.ndarray, np.ndarray]:
    """Per-device ``(p_T(A), b_T(A))`` by one forward pass over the horizon.

    Bounds are ``(N, T)`` arrays and both outputs are ``(k, N)``.  ``masks``
    is ``(k, T)`` (the same sets for every device) or ``(k, N, T)`` (one set
    per device and row).  After processing step ``s`` the four states hold
    the values of ``p_s, b_s`` restricted to ``[s]`` for ``A`` and for its
    complement; the part beyond ``s`` is modular, so only these prefix
    values are needed.
    """
    masks = np.asarray(masks, dtype=bool)
    N = u_lo.shape[0]
    if masks.ndim == 3 and masks.shape[1] != N:
        raise ValueError(f"per-device masks need {N} rows per set")
    if JIT_ENABLED:
        per_device = masks if masks.ndim == 3 else masks[:, None, :]
        return _sweep_kernel(*(np.ascontiguousarray(a, dtype=float)
                               for a in (u_lo, u_hi, x_lo, x_hi)),
                             np.ascontiguousarray(per_device))
    return _sweep_numpy(u_lo, u_hi, x_lo, x_hi, masks)


def _sweep_numpy(u_lo, u_hi, x_lo, x_hi, masks) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized over sets and devices, sequential over steps."""
    k, T = masks.shape[0], masks.shape[-1]
    N = u_lo.shape[0]
    shared = masks.ndim == 2
    P = np.zeros((k, N))
    B = np.zeros((k, N))
    Pc = np.zeros((k, N))
    Bc = np.zeros((k, N))
    for s in range(T):
        inside = masks[:, s:s + 1] if shared else masks[:, :, s]
        lo, hi = u_lo[:, s], u_hi[:, s]
        zero = np.zeros_like(lo)
        lo_in = np.where(inside, lo, zero)
        hi_in = np.where(inside, hi, zero)
        lo_out = lo - lo_in
        hi_out = hi - hi_in
        P_new = np.maximum(P + lo_in, x_lo[:, s] - (Bc + hi_out))
        B_new = np.minimum(B + hi_in, x_hi[:, s] - (Pc + lo_out))
        Pc_new = np.maximum(Pc + lo_out, x_lo[:, s] - (B + hi_in))
        Bc_new = np.minimum(Bc + hi_out, x_hi[:, s] - (P + lo_in))
        P, B, Pc, Bc = P_new, B_new, Pc_new, Bc_new
    return P, B


@jit
def _sweep_kernel(u_lo, u_hi, x_lo, x_hi, masks):
    """Same recursion one (set, device) pair at a time; ``masks`` is ``(k, 1 or N, T)``."""
    k, n_masks, T = masks.shape
    N = u_lo.shape[0]
    P_out = np.empty((k, N))
    B_out = np.empty((k, N))
    for q in range(k):
        for i in range(N):
            mi = 0 if n_masks == 1 else i
            P = 0.0
            B = 0.0
            Pc = 0.0
            Bc = 0.0
            for s in range(T):
                lo = u_lo[i, s]
                hi = u_hi[i, s]
                if masks[q, mi, s]:
                    lo_in = lo
                    hi_in = hi
                else:
                    lo_in = 0.0
                    hi_in = 0.0
                lo_out = lo - lo_in
                hi_out = hi - hi_in
                P_new = max(P + lo_in, x_lo[i, s] - (Bc + hi_out))
                B_new = min(B + hi_in, x_hi[i, s] - (Pc + lo_out))
                Pc_new = max(Pc + lo_out, x_lo[i, s] - (B + hi_in))
                Bc_new = min(Bc + hi_out, x_hi[i, s] - (P + lo_in))
                P, B, Pc, Bc = P_new, B_new, Pc_new, Bc_new
            P_out[q, i] = P
            B_out[q, i] = B
    return P_out, B_out


class StackedOracle(ParamodularOracle):
    """Sum of the individual set functions of several devices.

    Evaluation is vectorized across devices; :meth:`eval_members` exposes the
    per-device values.
    """

    def __init__(self, params: Sequence[DeviceParams], check: bool = True):
        params = list(params)
        if not params:
            raise ValueError("need at least one device")
        T = params[0].T
        if any(p.T != T for p in params):
            raise ValidationError("bad_input", "horizon mismatch between devices")
        if check:
            for p in params:
                validate(p)
        self.T = T
        self.params = params
        self.u_lo = np.stack([p.u_lo for p in params])
        self.u_hi = np.stack([p.u_hi for p in params])
        self.x_lo = np.stack([p.x_lo for p in params])
        self.x_hi = np.stack([p.x_hi for p in params])

    @property
    def n_members(self) -> int:
        return len(self.params)

    def eval_members(self, masks) -> tuple[np.ndarray, np.ndarray]:
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim not in (2, 3) or masks.shape[-1] != self.T:
            raise ValueError(f"masks must have shape (k, {self.T}) or (k, N, {self.T})")
        return prefix_sweep(self.u_lo, self.u_hi, self.x_lo, self.x_hi, masks)

    def eval_many(self, masks):
        P, B = self.eval_members(masks)
        return P.sum(axis=1), B.sum(axis=1)


class IndividualOracle(StackedOracle):
    """Set-function pair of a single device."""

    def __init__(self, params: DeviceParams, check: bool = True):
        super().__init__([params], check=check)

    @property
    def device(self) -> DeviceParams:
        return self.params[0]


def eval_individual(params: DeviceParams, A) -> tuple[float, float]:
    return IndividualOracle(params).eval(A)


def eval_naive(params: DeviceParams, A) -> tuple[float, float]:
    """Reference evaluation by direct expansion of the recursion.

    Exponential in ``T``; intended for cross-checking only.
    """
    validate(params)
    T = params.T
    full = frozenset(range(T))
    A = frozenset(np.flatnonzero(as_mask(A, T)).tolist())
    u_lo, u_hi, x_lo, x_hi = (getattr(params, n).tolist()
                              for n in ("u_lo", "u_hi", "x_lo", "x_hi"))

    def p(s: int, X: frozenset) -> float:
        if s == 0:
            return sum(u_lo[t] for t in X)
        S = frozenset(range(s))
        head = max(p(s - 1, X & S), x_lo[s - 1] - b(s - 1, (full - X) & S))
        return head + sum(u_lo[t] for t in X - S)

    def b(s: int, X: frozenset) -> float:
        if s == 0:
            return sum(u_hi[t] for t in X)
        S = frozenset(range(s))
        head = min(b(s - 1, X & S), x_hi[s - 1] - p(s - 1, (full - X) & S))
        return head + sum(u_hi[t] for t in X - S)

    return float(p(T, A)), float(b(T, A))


class TableOracle(ParamodularOracle):
    """Set functions given explicitly as tables indexed by subset bit code."""

    def __init__(self, p_values: Sequence[float], b_values: Sequence[float]):
        p_values = np.asarray(p_values, dtype=float)
        b_values = np.asarray(b_values, dtype=float)
        T = int(round(np.log2(len(p_values))))
        if len(p_values) != 2 ** T or len(b_values) != 2 ** T:
            raise ValueError("tables need 2**T entries")
        self.T = T
        self.p_values = p_values
        self.b_values = b_values

    def eval_many(self, masks):
        codes = np.asarray(masks, dtype=np.int64) @ (1 << np.arange(self.T))
        return self.p_values[codes], self.b_values[codes]


def tabulate(oracle: ParamodularOracle) -> tuple[np.ndarray, np.ndarray]:
    """``(p, b)`` over all subsets, indexed by bit code."""
    if oracle.T > MAX_EXHAUSTIVE_T:
        raise ValueError(f"T={oracle.T} exceeds the exhaustive limit {MAX_EXHAUSTIVE_T}")
    return oracle.eval_many(all_masks(oracle.T))


def check_paramodular(oracle: ParamodularOracle, T: int | None = None,
                      tol: float = PARAMODULAR_TOL) -> bool:
    """Exhaustively verify that ``(p, b)`` is a paramodular pair.

    Checks normalization, ``p <= b``, submodularity of ``b``,
    supermodularity of ``p`` and the cross-inequality over all pairs of
    subsets.
    """
    T = oracle.T if T is None else T
    if T != oracle.T:
        raise ValueError("T does not match the oracle")
    if T > MAX_EXHAUSTIVE_T:
        raise ValueError(f"T={T} exceeds the exhaustive limit {MAX_EXHAUSTIVE_T}")
    p, b = tabulate(oracle)
    if abs(p[0]) > tol or abs(b[0]) > tol:
        return False
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(p) & np.isfinite(b)
        if (p[finite] > b[finite] + tol).any():
            return False
        n = 2 ** T
        codes = np.arange(n)
        for a in range(n):
            meet = a & codes
            join = a | codes
            if (b[a] + b < b[meet] + b[join] - tol).any():
                return False
            if (p[a] + p > p[meet] + p[join] + tol).any():
                return False
            # b(A) - p(B) >= b(A \ B) - p(B \ A)
            lhs = b[a] - p
            rhs = b[a & ~codes] - p[codes & ~a]
            if (lhs < rhs - tol).any():
                return False
    return True


def subsets(T: int) -> Iterable[frozenset]:
    """All subsets of ``{1..T}`` as frozensets of steps."""
    steps = range(1, T + 1)
    for r in range(T + 1):
        for combo in itertools.combinations(steps, r):
            yield frozenset(combo)
