"""Aggregate set functions of device populations.

The set functions of a population are the sums of those of its members.
Charging-only EVs admit a compact form: per (arrival, departure) bucket the
functions only depend on how many steps of the plug-in window a subset
covers, so a bucket is fully described by two prefix-sum tables.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core_model import Device, Population, ValidationError, build_ev
from .setfn import ParamodularOracle, StackedOracle, as_mask

EV_KEYS = ("a", "d", "m_lo", "m_hi", "e0", "cap", "e_lo", "e_hi")


class AggregateOracle(ParamodularOracle):
    """Componentwise sum of member oracles."""

    def __init__(self, members: Sequence[ParamodularOracle], T: int | None = None):
        members = list(members)
        if not members and T is None:
            raise ValueError("empty aggregate needs an explicit horizon")
        self.T = members[0].T if T is None else T
        if any(m.T != self.T for m in members):
            raise ValidationError("bad_input", "horizon mismatch between members")
        self.members = members

    def eval_many(self, masks):
        masks = np.asarray(masks, dtype=bool)
        p = np.zeros(masks.shape[0])
        b = np.zeros(masks.shape[0])
        for member in self.members:  # fixed order keeps sums reproducible
            mp, mb = member.eval_many(masks)
            p += mp
            b += mb
        return p, b


def eval_aggregate(oracles: Sequence[ParamodularOracle], A) -> tuple[float, float]:
    return AggregateOracle(oracles).eval(A)


# -- charging-only EVs ---------------------------------------------------------------

def ev_spec(a, d, m_lo, m_hi, e0, cap, e_lo, e_hi) -> dict:
    return dict(a=int(a), d=int(d), m_lo=float(m_lo), m_hi=float(m_hi), e0=float(e0),
                cap=float(cap), e_lo=float(e_lo), e_hi=float(e_hi))


def ev_device(id: str, T: int, group: str | None = None, **spec) -> Device:
    """EV device carrying its builder arguments."""
    spec = ev_spec(**spec)
    return Device(id, "ev", build_ev(T=T, **spec), group=group, spec=spec)


def _charging_only(spec: Mapping) -> tuple[int, int, float, float, float]:
    """``(a, d, m, lower energy, upper energy)`` with energies net of the arrival SoC."""
    missing = [k for k in EV_KEYS if k not in spec]
    if missing:
        raise ValidationError("bad_input", f"EV spec lacks {missing}")
    if spec["m_lo"] != 0:
        raise ValidationError("bad_input", "EV fleet form requires m_lo = 0 (no discharging)")
    a, d, m = int(spec["a"]), int(spec["d"]), float(spec["m_hi"])
    L = d - a + 1
    e_lo = max(float(spec["e_lo"]) - float(spec["e0"]), 0.0)
    e_hi = float(spec["e_hi"]) - float(spec["e0"])
    if e_hi < 0 or e_lo > L * m:
        raise ValidationError("infeasible_device", "EV energy target unreachable")
    return a, d, m, e_lo, min(e_hi, L * m)


def ev_extremal_profiles(spec: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Latest-charging and earliest-charging profiles over the plug-in window.

    Both have length ``d - a + 1``.  The late profile charges ``m`` in the
    last ``floor(e_lo / m)`` steps and the remainder in the step before; the
    early profile charges ``m`` in the first ``floor(e_hi / m)`` steps and
    the remainder right after.
    """
    a, d, m, e_lo, e_hi = _charging_only(spec)
    L = d - a + 1
    late = np.zeros(L)
    early = np.zeros(L)
    if m > 0:
        q = min(int(math.floor(e_lo / m)), L)
        late[L - q:] = m
        if q < L:
            late[L - q - 1] = e_lo - q * m
        q = min(int(math.floor(e_hi / m)), L)
        early[:q] = m
        if q < L:
            early[q] = e_hi - q * m
    return late, early


def ev_closed_form(spec: Mapping, A, T: int) -> tuple[float, float]:
    """``(p(A), b(A))`` of one charging-only EV without any recursion."""
    a, d, m, e_lo, e_hi = _charging_only(spec)
    mask = as_mask(A, T)
    covered = int(mask[a - 1:d].sum())
    missed = (d - a + 1) - covered
    return max(e_lo - missed * m, 0.0), min(covered * m, e_hi)


class EVFleetOracle(ParamodularOracle):
    """Bucketed set functions of a charging-only EV fleet.

    Storage is one pair of prefix-sum tables per nonempty (arrival,
    departure) bucket, independent of how many vehicles share it.
    """

    def __init__(self, T: int, buckets: Mapping[tuple[int, int], tuple[np.ndarray, np.ndarray]]):
        self.T = T
        self.buckets = {k: (np.asarray(lo, float), np.asarray(hi, float))
                        for k, (lo, hi) in sorted(buckets.items())}
        keys = sorted(self.buckets)
        self._a = np.array([k[0] for k in keys], dtype=int)
        self._d = np.array([k[1] for k in keys], dtype=int)
        width = max((d - a + 1 for a, d in keys), default=0) + 1
        self._cum_lo = np.zeros((len(keys), width))
        self._cum_hi = np.zeros((len(keys), width))
        for i, key in enumerate(keys):
            lo, hi = self.buckets[key]
            self._cum_lo[i, 1:len(lo) + 1] = np.cumsum(lo)
            self._cum_hi[i, 1:len(hi) + 1] = np.cumsum(hi)

    def eval_many(self, masks):
        masks = np.asarray(masks, dtype=bool)
        k = masks.shape[0]
        if not len(self._a):
            return np.zeros(k), np.zeros(k)
        counts = np.zeros((k, self.T + 1), dtype=int)
        np.cumsum(masks, axis=1, out=counts[:, 1:])
        covered = counts[:, self._d] - counts[:, self._a - 1]
        rows = np.arange(len(self._a))
        return (self._cum_lo[rows, covered].sum(axis=1),
                self._cum_hi[rows, covered].sum(axis=1))


def build_ev_fleet(fleet: Population | Iterable, T: int | None = None) -> EVFleetOracle:
    """Bucket a charging-only EV fleet.

    ``fleet`` is a :class:`Population` of EV devices carrying builder specs,
    or an iterable of spec mappings together with ``T``.
    """
    if isinstance(fleet, Population):
        T = fleet.T
        specs = []
        for dev in fleet:
            if dev.kind != "ev" or dev.spec is None:
                raise ValidationError("bad_input", f"device {dev.id} is not a specified EV")
            specs.append(dev.spec)
    else:
        specs = list(fleet)
        if T is None:
            raise ValueError("T is required when passing raw specs")
    sums: dict[tuple[int, int], list[np.ndarray]] = {}
    for spec in specs:
        a, d = int(spec["a"]), int(spec["d"])
        if not (1 <= a <= d <= T):
            raise ValidationError("bad_input", f"window [{a}, {d}] outside 1..{T}")
        late, early = ev_extremal_profiles(spec)
        if (a, d) in sums:
            sums[(a, d)][0] += late
            sums[(a, d)][1] += early
        else:
            sums[(a, d)] = [late, early]
    return EVFleetOracle(T, {k: (v[0], v[1]) for k, v in sums.items()})


def eval_ev_fleet(oracle: EVFleetOracle, A) -> tuple[float, float]:
    return oracle.eval(A)


def is_fleet_ev(dev: Device) -> bool:
    """True for EVs that the bucketed form can represent."""
    if dev.kind != "ev" or dev.spec is None:
        return False
    try:
        _charging_only(dev.spec)
    except ValidationError:
        return False
    return True


def population_oracle(pop: Population, ev_fleet: bool = True) -> ParamodularOracle:
    """Aggregate oracle of a whole population.

    With ``ev_fleet`` the charging-only EVs go through the bucketed form and
    every other device through one vectorized stack.
    """
    fleet = [d for d in pop if ev_fleet and is_fleet_ev(d)]
    rest = [d for d in pop if not (ev_fleet and is_fleet_ev(d))]
    members: list[ParamodularOracle] = []
    if rest:
        members.append(StackedOracle([d.params for d in rest]))
    if fleet:
        members.append(build_ev_fleet(Population(pop.T, tuple(fleet))))
    if len(members) == 1:
        return members[0]
    return AggregateOracle(members, T=pop.T)
