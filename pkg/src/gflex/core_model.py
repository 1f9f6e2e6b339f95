"""Device parameterization, flexibility-set membership and populations.

A device is described by per-step power bounds ``u_lo <= u(t) <= u_hi`` and
bounds on its cumulative consumption (state of charge relative to the
initial state) ``x_lo(t) <= u(1) + ... + u(t) <= x_hi(t)``.  Time steps have
unit length, so power and energy share units.

Time steps are numbered ``1..T`` in every public argument (EV arrival and
departure steps, subsets given as step collections, permutation labels);
arrays are indexed ``0..T-1`` as usual.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

KINDS = ("ev", "ess", "generation", "fixed_load", "raw")


class ValidationError(ValueError):
    """Raised when device parameters are malformed or describe an empty set.

    ``reason`` is one of ``"bound_order_violation"``, ``"infeasible_device"``
    or ``"bad_input"``.
    """

    def __init__(self, reason: str, message: str = ""):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if np.isnan(arr).any():
        raise ValidationError("bad_input", f"{name} contains NaN")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DeviceParams:
    """Power and cumulative-energy bounds of one device over the horizon.

    ``x_lo``/``x_hi`` may hold ``-inf``/``+inf``; the power bounds must be
    finite.
    """

    u_lo: np.ndarray
    u_hi: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray

    def __post_init__(self):
        for name in ("u_lo", "u_hi", "x_lo", "x_hi"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        T = len(self.u_lo)
        if T < 1:
            raise ValidationError("bad_input", "horizon must have T >= 1")
        if any(len(getattr(self, n)) != T for n in ("u_hi", "x_lo", "x_hi")):
            raise ValidationError("bad_input", "all bound vectors need length T")
        if not (np.isfinite(self.u_lo).all() and np.isfinite(self.u_hi).all()):
            raise ValidationError("bad_input", "power bounds must be finite")

    @property
    def T(self) -> int:
        return len(self.u_lo)

    def __eq__(self, other):
        if not isinstance(other, DeviceParams):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("u_lo", "u_hi", "x_lo", "x_hi")
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {n: [_encode_float(v) for v in getattr(self, n)]
                for n in ("u_lo", "u_hi", "x_lo", "x_hi")}

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        try:
            return cls(**{n: [_decode_float(v) for v in data[n]]
                          for n in ("u_lo", "u_hi", "x_lo", "x_hi")})
        except KeyError as exc:
            raise ValidationError("bad_input", f"missing field {exc}") from None


def _encode_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _decode_float(v) -> float:
    if isinstance(v, str):
        if v in ("inf", "-inf"):
            return float(v)
        raise ValidationError("bad_input", f"unexpected string {v!r}")
    return float(v)


# -- builders -----------------------------------------------------------------

def build_ev(a: int, d: int, m_lo: float, m_hi: float, e0: float, cap: float,
             e_lo: float, e_hi: float, T: int) -> DeviceParams:
    """EV plugged in from the start of step ``a`` to the end of step ``d``.

    The vehicle draws between ``m_lo`` and ``m_hi`` while plugged in (``m_lo``
    may be negative for vehicle-to-grid), arrives holding ``e0`` of a battery
    of size ``cap`` and must leave holding between ``e_lo`` and ``e_hi``.
    """
    if not (1 <= a <= d <= T):
        raise ValidationError("bad_input", f"window [{a}, {d}] outside 1..{T}")
    if m_lo > m_hi:
        raise ValidationError("bound_order_violation", "m_lo > m_hi")
    if not (0 <= e0 <= cap):
        raise ValidationError("bad_input", "need 0 <= e0 <= cap")
    if not (e_lo <= e_hi <= cap):
        raise ValidationError("bad_input", "need e_lo <= e_hi <= cap")
    steps = np.arange(1, T + 1)
    window = (steps >= a) & (steps <= d)
    before = steps < d
    return DeviceParams(
        u_lo=np.where(window, m_lo, 0.0),
        u_hi=np.where(window, m_hi, 0.0),
        x_lo=np.where(before, -e0, e_lo - e0),
        x_hi=np.where(before, cap - e0, e_hi - e0),
    )


def build_ess(m_lo: float, m_hi: float, e0: float, cap: float, T: int) -> DeviceParams:
    """Stationary battery available over the whole horizon."""
    if cap < 0:
        raise ValidationError("bad_input", "negative capacity")
    if m_lo > m_hi:
        raise ValidationError("bound_order_violation", "m_lo > m_hi")
    if not (0 <= e0 <= cap):
        raise ValidationError("bad_input", "need 0 <= e0 <= cap")
    return DeviceParams(
        u_lo=np.full(T, float(m_lo)),
        u_hi=np.full(T, float(m_hi)),
        x_lo=np.full(T, -float(e0)),
        x_hi=np.full(T, float(cap - e0)),
    )


def build_generation(g_max: Sequence[float], T: int | None = None) -> DeviceParams:
    """Curtailable generator producing at most ``g_max[t]`` in each step."""
    g = np.asarray(g_max, dtype=float)
    if T is not None and len(g) != T:
        raise ValidationError("bad_input", "g_max length differs from T")
    if (g < 0).any():
        raise ValidationError("bad_input", "negative g_max entry")
    n = len(g)
    return DeviceParams(u_lo=-g, u_hi=np.zeros(n),
                        x_lo=np.full(n, -np.inf), x_hi=np.full(n, np.inf))


def build_fixed_load(load: Sequence[float]) -> DeviceParams:
    load = np.asarray(load, dtype=float)
    n = len(load)
    return DeviceParams(u_lo=load, u_hi=load,
                        x_lo=np.full(n, -np.inf), x_hi=np.full(n, np.inf))


# -- feasibility ----------------------------------------------------------------

def check_membership(params: DeviceParams, u, tol: float = 1e-9) -> bool:
    """True iff ``u`` satisfies every power and cumulative bound within ``tol``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (params.T,):
        raise ValueError(f"profile has shape {u.shape}, expected ({params.T},)")
    x = np.cumsum(u)
    return bool(
        (u >= params.u_lo - tol).all() and (u <= params.u_hi + tol).all()
        and (x >= params.x_lo - tol).all() and (x <= params.x_hi + tol).all()
    )


def membership_violation(params: DeviceParams, u) -> float:
    """Largest amount by which ``u`` violates a bound (0 for members)."""
    u = np.asarray(u, dtype=float)
    x = np.cumsum(u)
    parts = [params.u_lo - u, u - params.u_hi, params.x_lo - x, x - params.x_hi]
    return max(0.0, max(float(np.max(p)) for p in parts))


EMPTY_TOL = 1e-12


def _pinch(lo: float, hi: float, t: int) -> tuple[float, float]:
    """Accept intervals inverted by rounding only; they collapse to a point."""
    if lo <= hi:
        return lo, hi
    if lo - hi > EMPTY_TOL * (1.0 + abs(lo) + abs(hi)):
        raise ValidationError("infeasible_device", f"no reachable state at step {t + 1}")
    mid = 0.5 * (lo + hi)
    return mid, mid


def reachable_soc(params: DeviceParams) -> tuple[np.ndarray, np.ndarray]:
    """Interval of reachable cumulative energy after every step.

    Returns the tightened ``(lo, hi)`` bounds after a forward and a backward
    pass.  Raises :class:`ValidationError` when some interval is empty.
    """
    T = params.T
    lo = np.empty(T)
    hi = np.empty(T)
    r_lo = r_hi = 0.0
    for t in range(T):
        r_lo = max(params.x_lo[t], r_lo + params.u_lo[t])
        r_hi = min(params.x_hi[t], r_hi + params.u_hi[t])
        r_lo, r_hi = _pinch(r_lo, r_hi, t)
        lo[t], hi[t] = r_lo, r_hi
    # states must also be able to reach the next interval
    for t in range(T - 2, -1, -1):
        lo[t] = max(lo[t], lo[t + 1] - params.u_hi[t + 1])
        hi[t] = min(hi[t], hi[t + 1] - params.u_lo[t + 1])
        lo[t], hi[t] = _pinch(lo[t], hi[t], t)
    return lo, hi


def validate(params: DeviceParams) -> None:
    """Raise :class:`ValidationError` unless the flexibility set is nonempty."""
    if (params.u_lo > params.u_hi).any():
        raise ValidationError("bound_order_violation", "u_lo > u_hi")
    if (params.x_lo > params.x_hi).any():
        raise ValidationError("bound_order_violation", "x_lo > x_hi")
    reachable_soc(params)


def is_valid(params: DeviceParams) -> bool:
    try:
        validate(params)
    except ValidationError:
        return False
    return True


# -- populations ----------------------------------------------------------------

@dataclass(frozen=True)
class Device:
    """A population member.

    ``spec`` keeps the builder arguments when known (the EV fleet oracle
    needs them) and ``group`` tags devices sharing a household.
    """

    id: str
    kind: str
    params: DeviceParams
    group: str | None = None
    spec: dict | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("bad_input", f"unknown device kind {self.kind!r}")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"id": self.id, "kind": self.kind,
                               "params": self.params.to_dict()}
        if self.group is not None:
            out["group"] = self.group
        if self.spec is not None:
            out["spec"] = self.spec
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Device":
        return cls(id=str(data["id"]), kind=data["kind"],
                   params=DeviceParams.from_dict(data["params"]),
                   group=data.get("group"), spec=data.get("spec"))


@dataclass(frozen=True)
class Population:
    T: int
    devices: tuple[Device, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        if self.T < 1:
            raise ValidationError("bad_input", "T must be >= 1")
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValidationError("bad_input", "device ids must be unique")
        for d in self.devices:
            if d.params.T != self.T:
                raise ValidationError("bad_input", f"device {d.id} has horizon {d.params.T}")

    def __len__(self):
        return len(self.devices)

    def __iter__(self):
        return iter(self.devices)

    @property
    def params(self) -> list[DeviceParams]:
        return [d.params for d in self.devices]

    def groups(self) -> dict[str, list[Device]]:
        out: dict[str, list[Device]] = {}
        for d in self.devices:
            if d.group is not None:
                out.setdefault(d.group, []).append(d)
        return out

    def validate(self) -> None:
        for d in self.devices:
            try:
                validate(d.params)
            except ValidationError as exc:
                raise ValidationError(exc.reason, f"device {d.id}: {exc}") from None

    def to_dict(self) -> dict:
        return {"horizon": {"T": self.T},
                "devices": [d.to_dict() for d in self.devices]}

    @classmethod
    def from_dict(cls, data: dict) -> "Population":
        try:
            T = int(data["horizon"]["T"])
            devices = [Device.from_dict(d) for d in data.get("devices", [])]
        except (KeyError, TypeError) as exc:
            raise ValidationError("bad_input", f"malformed population: {exc}") from None
        return cls(T=T, devices=tuple(devices))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "Population":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")


def make_population(T: int, entries: Iterable[tuple]) -> Population:
    """Convenience constructor from ``(id, kind, params)`` tuples."""
    return Population(T=T, devices=tuple(Device(i, k, p) for i, k, p in entries))
