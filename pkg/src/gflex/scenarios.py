"""Random populations, prices and the baseline used by the benchmark and case study.

Sampling ranges are configuration defaults chosen to look like residential
devices at hourly resolution; they are not fitted to any data set.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .aggregate import ev_device, population_oracle
from .core_model import (Device, Population, ValidationError, build_ess, build_fixed_load,
                         build_generation)
from .optimize import (CouplingConstraints, SolveResult, greedy_lp, solve_lp_coupled,
                       solve_many_coupled, vertex_from_permutation)
from .setfn import IndividualOracle, StackedOracle

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "ev_rate": (3.7, 11.0),          # charger power per step
    "ev_capacity": (40.0, 80.0),
    "ev_initial_frac": (0.1, 0.5),   # arrival energy as a share of capacity
    "ev_upper_frac": (0.8, 1.0),     # departure ceiling as a share of capacity
    "ev_need_frac": (0.3, 0.9),      # share of the reachable gain that is mandatory
    "ev_window": (4.0, 16.0),        # plug-in length in hours
    "ess_rate": (2.0, 5.0),
    "ess_capacity": (5.0, 13.5),
    "ess_initial_frac": (0.2, 0.8),
    "pv_peak": (1.0, 5.0),
    "load_base": (0.2, 0.6),
    "load_peak": (0.5, 2.0),
    "price_mean": (0.15, 0.35),      # daily mean price
}


@dataclass
class ScenarioConfig:
    """What to sample.

    Args:
        T: steps per day.
        n_ev: number of EVs.
        v2g_fraction: share of EVs that may discharge.
        n_households: households made of a load, a PV generator and a battery.
        n_ess, n_generation, n_fixed_load: standalone devices.
        ranges: uniform sampling bounds overriding :data:`DEFAULT_RANGES`.
        seed: RNG seed.
        coupling_rows: number of random coupling rows.
        coupling_margin: slack added to the coupling right-hand side, as a
            multiple of the typical row magnitude.
        price_file: CSV with ``day,t,price`` rows.
    """

    T: int = 24
    n_ev: int = 0
    v2g_fraction: float = 0.5
    n_households: int = 0
    n_ess: int = 0
    n_generation: int = 0
    n_fixed_load: int = 0
    ranges: dict = field(default_factory=dict)
    seed: int = 0
    coupling_rows: int = 0
    coupling_margin: float = 0.1
    price_file: str | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("bad_input", "T must be >= 1")
        counts = (self.n_ev, self.n_households, self.n_ess, self.n_generation,
                  self.n_fixed_load, self.coupling_rows)
        if any(int(n) != n or n < 0 for n in counts):
            raise ValidationError("bad_input", "device and row counts must be nonnegative integers")
        if not 0.0 <= self.v2g_fraction <= 1.0:
            raise ValidationError("bad_input", "v2g_fraction must lie in [0, 1]")
        if self.coupling_margin < 0:
            raise ValidationError("bad_input", "coupling_margin must be nonnegative")
        self.ranges = {k: (float(v[0]), float(v[1])) for k, v in self.ranges.items()}
        unknown = set(self.ranges) - set(DEFAULT_RANGES)
        if unknown:
            raise ValidationError("bad_input", f"unknown ranges {sorted(unknown)}")
        for name, (lo, hi) in self.bounds().items():
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ValidationError("bad_input", f"range {name} = ({lo}, {hi}) is empty")
            if lo < 0:
                raise ValidationError("bad_input", f"range {name} must be nonnegative")
        b = self.bounds()
        for name in ("ev_initial_frac", "ev_upper_frac", "ev_need_frac", "ess_initial_frac"):
            if b[name][1] > 1:
                raise ValidationError("bad_input", f"range {name} must lie within [0, 1]")
        if b["ev_initial_frac"][1] > b["ev_upper_frac"][0]:
            raise ValidationError("bad_input", "EV arrival energy may exceed the departure ceiling")

    def bounds(self) -> dict[str, tuple[float, float]]:
        out = dict(DEFAULT_RANGES)
        out.update(self.ranges)
        return out

    @property
    def n_devices(self) -> int:
        return self.n_ev + 3 * self.n_households + self.n_ess + self.n_generation + self.n_fixed_load

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ranges"] = {k: list(v) for k, v in self.ranges.items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValidationError("bad_input", f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def case_study(cls, **overrides) -> "ScenarioConfig":
        """50 EVs (half may discharge) and 100 households."""
        base = dict(T=24, n_ev=50, v2g_fraction=0.5, n_households=100)
        base.update(overrides)
        return cls(**base)


# -- device sampling ----------------------------------------------------------------

def _u(rng: np.random.Generator, bounds, name: str) -> float:
    lo, hi = bounds[name]
    return float(rng.uniform(lo, hi))


def _hours(T: int) -> np.ndarray:
    """Hour of day at the middle of each step."""
    return (np.arange(T) + 0.5) * 24.0 / T


def sample_ev(rng: np.random.Generator, T: int, bounds, v2g: bool, id: str) -> Device:
    dt = 24.0 / T
    length = max(1, min(T, int(round(_u(rng, bounds, "ev_window") / dt))))
    a = int(rng.integers(1, T - length + 2))
    d = a + length - 1
    rate = _u(rng, bounds, "ev_rate") * dt
    cap = _u(rng, bounds, "ev_capacity")
    e0 = cap * _u(rng, bounds, "ev_initial_frac")
    e_hi = max(cap * _u(rng, bounds, "ev_upper_frac"), e0)
    reachable = min(e_hi, e0 + length * rate)
    e_lo = e0 + _u(rng, bounds, "ev_need_frac") * (reachable - e0)
    return ev_device(id, T, a=a, d=d, m_lo=-rate if v2g else 0.0, m_hi=rate, e0=e0,
                     cap=cap, e_lo=e_lo, e_hi=e_hi)


def sample_ess(rng: np.random.Generator, T: int, bounds, id: str, group=None) -> Device:
    dt = 24.0 / T
    rate = _u(rng, bounds, "ess_rate") * dt
    cap = _u(rng, bounds, "ess_capacity")
    e0 = cap * _u(rng, bounds, "ess_initial_frac")
    spec = dict(m_lo=-rate, m_hi=rate, e0=e0, cap=cap)
    return Device(id, "ess", build_ess(T=T, **spec), group=group, spec=spec)


def sample_generation(rng: np.random.Generator, T: int, bounds, id: str, group=None) -> Device:
    dt = 24.0 / T
    shape = np.clip(np.sin(np.pi * (_hours(T) - 6.0) / 12.0), 0.0, None)
    g_max = _u(rng, bounds, "pv_peak") * dt * shape
    return Device(id, "generation", build_generation(g_max), group=group)


def sample_load(rng: np.random.Generator, T: int, bounds, id: str, group=None) -> Device:
    dt = 24.0 / T
    h = _hours(T)
    evening = np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
    morning = 0.5 * np.exp(-0.5 * ((h - 8.0) / 1.5) ** 2)
    load = (_u(rng, bounds, "load_base") + _u(rng, bounds, "load_peak") * (evening + morning)) * dt
    return Device(id, "fixed_load", build_fixed_load(load), group=group)


def sample_population(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Population:
    """Draw every device of ``config`` from ``rng`` (default: seeded from the config)."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    T, bounds = config.T, config.bounds()
    n_v2g = int(round(config.v2g_fraction * config.n_ev))
    devices: list[Device] = []
    for i in range(config.n_ev):
        devices.append(sample_ev(rng, T, bounds, v2g=i < n_v2g, id=f"ev{i:03d}"))
    for h in range(config.n_households):
        g = f"h{h:03d}"
        devices.append(sample_load(rng, T, bounds, f"{g}-load", group=g))
        devices.append(sample_generation(rng, T, bounds, f"{g}-pv", group=g))
        devices.append(sample_ess(rng, T, bounds, f"{g}-ess", group=g))
    for i in range(config.n_ess):
        devices.append(sample_ess(rng, T, bounds, f"ess{i:03d}"))
    for i in range(config.n_generation):
        devices.append(sample_generation(rng, T, bounds, f"gen{i:03d}"))
    for i in range(config.n_fixed_load):
        devices.append(sample_load(rng, T, bounds, f"load{i:03d}"))
    pop = Population(T, tuple(devices))
    pop.validate()
    return pop


def random_mix(T: int, N: int, rng: np.random.Generator, ranges: dict | None = None) -> Population:
    """``N`` standalone devices: 40% EVs (half of them V2G), 30% batteries,
    15% PV and 15% fixed loads."""
    n_ev = int(round(0.4 * N))
    n_ess = int(round(0.3 * N))
    n_gen = int(round(0.15 * N))
    cfg = ScenarioConfig(T=T, n_ev=n_ev, n_ess=n_ess, n_generation=n_gen,
                         n_fixed_load=N - n_ev - n_ess - n_gen, ranges=ranges or {})
    return sample_population(cfg, rng)


# -- coupling -----------------------------------------------------------------------

def random_coupling(oracle, m: int, rng: np.random.Generator, margin: float = 0.1,
                    n_anchor: int = 3) -> CouplingConstraints:
    """``m`` random rows that a known feasible point satisfies.

    The anchor is the average of a few greedy vertices at random costs; the
    right-hand side is ``C u_ref`` plus ``margin`` times the row's typical
    magnitude, so the instance is feasible by construction.
    """
    T = oracle.T
    if m == 0:
        return CouplingConstraints.empty(T)
    anchors = [greedy_lp(oracle, rng.normal(size=T)).u for _ in range(n_anchor)]
    u_ref = np.mean(anchors, axis=0)
    C = rng.normal(size=(m, T))
    scale = np.abs(C) @ (np.abs(u_ref) + 1.0) / T
    d = C @ u_ref + margin * scale
    return CouplingConstraints(C, d)


# -- prices -------------------------------------------------------------------------

@dataclass
class PriceSeries:
    """``prices[day]`` is the length-``T`` price vector of that day."""

    T: int
    prices: dict[int, np.ndarray]

    def __post_init__(self):
        for day, vec in self.prices.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.T,) or not np.isfinite(vec).all():
                raise ValidationError("bad_input", f"day {day} needs {self.T} finite prices")
            self.prices[day] = vec

    @property
    def days(self) -> list[int]:
        return sorted(self.prices)

    def day(self, day: int) -> np.ndarray:
        if day not in self.prices:
            raise ValidationError("bad_input", f"no prices for day {day}")
        return self.prices[day]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day", "t", "price"])
        for day in self.days:
            for t, c in enumerate(self.prices[day], start=1):
                w.writerow([day, t, repr(float(c))])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, T: int | None = None) -> "PriceSeries":
        rows: dict[int, dict[int, float]] = {}
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or not {"day", "t", "price"} <= set(reader.fieldnames):
            raise ValidationError("bad_input", "price CSV needs a day,t,price header")
        for row in reader:
            try:
                day, t, c = int(row["day"]), int(row["t"]), float(row["price"])
            except (TypeError, ValueError):
                raise ValidationError("bad_input", f"malformed price row {row}") from None
            if t in rows.setdefault(day, {}):
                raise ValidationError("bad_input", f"duplicate price for day {day}, step {t}")
            rows[day][t] = c
        if T is None:
            T = max((len(v) for v in rows.values()), default=0)
        prices = {}
        for day, by_t in rows.items():
            if sorted(by_t) != list(range(1, T + 1)):
                raise ValidationError("bad_input", f"day {day} must list steps 1..{T}")
            prices[day] = np.array([by_t[t] for t in range(1, T + 1)])
        return cls(T, prices)

    @classmethod
    def load(cls, path, T: int | None = None) -> "PriceSeries":
        return cls.from_csv(Path(path).read_text(), T)


def synthetic_prices(T: int, days: int, seed: int = 0, sigma: float = 0.15,
                     ranges: dict | None = None) -> PriceSeries:
    """Nonnegative prices: lognormal noise around a two-peak daily shape."""
    rng = np.random.default_rng(seed)
    lo, hi = (ranges or DEFAULT_RANGES)["price_mean"]
    h = _hours(T)
    shape = (0.7 + 0.25 * np.exp(-0.5 * ((h - 8.0) / 2.0) ** 2)
             + 0.6 * np.exp(-0.5 * ((h - 18.5) / 2.0) ** 2))
    shape /= shape.mean()
    prices = {}
    for day in range(1, days + 1):
        mean = rng.uniform(lo, hi)
        prices[day] = mean * shape * rng.lognormal(-0.5 * sigma ** 2, sigma, size=T)
    return PriceSeries(T, prices)


# -- baseline -----------------------------------------------------------------------

def front_loaded_profile(device: Device) -> np.ndarray:
    """Consume as much as possible as early as possible.

    This is the vertex of the ordering ``1, ..., T`` followed by the lifted
    element: every prefix of steps holds its maximum cumulative energy.
    For charging-only EVs it is the early extremal charging profile.
    """
    T = device.params.T
    label = tuple(range(1, T + 1)) + (0,)
    return vertex_from_permutation(IndividualOracle(device.params), label).u.copy()


def _l1_model(T: int):
    eye = np.eye(T)
    coupling = CouplingConstraints(np.vstack([eye, -eye]), np.zeros(2 * T))
    return coupling, np.ones(T), np.vstack([-eye, -eye])


def household_l1(devices: Iterable[Device], eps: float = 1e-9) -> SolveResult:
    """Minimize ``sum_t |u(t)|`` of a household's net consumption.

    Auxiliary variables ``s`` enter the column-generation master only, with
    coupling rows ``u - s <= 0`` and ``-u - s <= 0``.
    """
    params = [d.params for d in devices]
    T = params[0].T
    coupling, aux_cost, aux_C = _l1_model(T)
    return solve_lp_coupled(StackedOracle(params, check=False), np.zeros(T), coupling, eps=eps,
                            aux_cost=aux_cost, aux_C=aux_C)


def households_l1(households: list[list[Device]], eps: float = 1e-9) -> list[SolveResult]:
    """:func:`household_l1` for many households, priced jointly."""
    if not households:
        return []
    T = households[0][0].params.T
    coupling, aux_cost, aux_C = _l1_model(T)
    n = len(households)
    return solve_many_coupled([[d.params for d in h] for h in households], [np.zeros(T)] * n,
                              [coupling] * n, eps=eps, aux_costs=[aux_cost] * n,
                              aux_Cs=[aux_C] * n)


@dataclass
class Baseline:
    total: np.ndarray
    profiles: dict[str, np.ndarray]       # per EV and per household group
    l1: dict[str, float]                  # household l1 costs

    def cost(self, prices) -> float:
        return float(np.asarray(prices, dtype=float) @ self.total)


def baseline(pop: Population, eps: float = 1e-9) -> Baseline:
    """EVs charge as early as possible; every household minimizes its l1 consumption.

    Raises :class:`ValidationError` for non-EV devices without a household
    group.
    """
    T = pop.T
    loose = [d.id for d in pop if d.kind != "ev" and d.group is None]
    if loose:
        raise ValidationError("bad_input", f"devices without household grouping: {loose[:5]}")
    profiles: dict[str, np.ndarray] = {}
    l1: dict[str, float] = {}
    for dev in pop:
        if dev.kind == "ev" and dev.group is None:
            profiles[dev.id] = front_loaded_profile(dev)
    groups = sorted(pop.groups().items())
    for (group, _), res in zip(groups, households_l1([m for _, m in groups], eps=eps)):
        profiles[group] = res.u_star
        l1[group] = float(np.abs(res.u_star).sum())
    total = np.zeros(T)
    for key in sorted(profiles):
        total += profiles[key]
    return Baseline(total, profiles, l1)


# -- case study and benchmark ---------------------------------------------------------

def solve_uncoupled(pop: Population, prices) -> SolveResult:
    return solve_lp_coupled(population_oracle(pop), prices)


@dataclass
class DayResult:
    day: int
    optimized: float
    baseline: float
    seconds: float


def case_study(config: ScenarioConfig, prices: PriceSeries, days: int,
               callback=None) -> list[DayResult]:
    """Per day: fresh population, baseline cost and optimized cost.

    Day ``k`` draws its population from ``default_rng([seed, k])``.
    """
    if days < 0:
        raise ValidationError("bad_input", "days must be nonnegative")
    available = prices.days
    if len(available) < days:
        raise ValidationError("bad_input",
                              f"price file covers {len(available)} days, {days} requested")
    if prices.T != config.T:
        raise ValidationError("bad_input", f"prices have {prices.T} steps, config has {config.T}")
    out = []
    for day in available[:days]:
        start = time.perf_counter()
        pop = sample_population(config, np.random.default_rng([config.seed, day]))
        c = prices.day(day)
        base = baseline(pop).cost(c)
        opt = solve_uncoupled(pop, c).objective
        res = DayResult(day, opt, base, time.perf_counter() - start)
        out.append(res)
        if callback is not None:
            callback(res)
    return out


def case_study_csv(results: list[DayResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["day", "optimized", "baseline", "cumulative_optimized", "cumulative_baseline"])
    cum_o = cum_b = 0.0
    for r in results:
        cum_o += r.optimized
        cum_b += r.baseline
        w.writerow([r.day, repr(r.optimized), repr(r.baseline), repr(cum_o), repr(cum_b)])
    return buf.getvalue()


BENCH_METHODS = ("greedy", "dw")


def bench_instance(T: int, N: int, m: int, instance: int, seed: int, methods=BENCH_METHODS
                   ) -> list[tuple[int, int, str, int, float]]:
    """Time the solvers on one sampled instance; rows ``(T, N, method, instance, wall_us)``."""
    rng = np.random.default_rng([seed, T, N, instance])
    pop = random_mix(T, N, rng)
    oracle = StackedOracle(pop.params, check=False)
    c = rng.normal(size=T)
    coupling = random_coupling(oracle, m, rng)
    rows = []
    for method in methods:
        start = time.perf_counter()
        if method == "greedy":
            greedy_lp(oracle, c)
        elif method == "dw":
            solve_lp_coupled(oracle, c, coupling)
        else:
            raise ValueError(f"unknown method {method!r}")
        rows.append((T, N, method, instance, (time.perf_counter() - start) * 1e6))
    return rows


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T", "N", "method", "instance", "wall_us"])
    for T, N, method, instance, us in sorted(rows, key=lambda r: (r[0], r[1], r[3],
                                                                BENCH_METHODS.index(r[2])
                                                                if r[2] in BENCH_METHODS else 99)):
        w.writerow([T, N, method, instance, f"{us:.1f}"])
    return buf.getvalue()
