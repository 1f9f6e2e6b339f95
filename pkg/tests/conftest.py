"""Shared fixtures and random instance generators."""

from __future__ import annotations

import numpy as np
import pytest

from gflex.aggregate import ev_device
from gflex.core_model import (Device, Population, build_ess, build_ev, build_fixed_load,
                              build_generation, is_valid)
from gflex.core_model import DeviceParams


def e1_params() -> DeviceParams:
    """EV plugged in for all three steps, charging 2 units at rate 1."""
    return build_ev(a=1, d=3, m_lo=0, m_hi=1, e0=0, cap=2, e_lo=2, e_hi=2, T=3)


@pytest.fixture
def e1() -> DeviceParams:
    return e1_params()


def _round(x, rng, dyadic):
    return np.round(x * 4) / 4 if dyadic else x


def random_ev_spec(rng: np.random.Generator, T: int, v2g: bool | None = None,
                   dyadic: bool = False) -> dict:
    a = int(rng.integers(1, T + 1))
    d = int(rng.integers(a, T + 1))
    m_hi = float(_round(rng.uniform(0.5, 3.0), rng, dyadic))
    if v2g is None:
        v2g = bool(rng.random() < 0.5)
    m_lo = -float(_round(rng.uniform(0.25, m_hi), rng, dyadic)) if v2g else 0.0
    cap = float(_round(rng.uniform(2.0, 8.0), rng, dyadic))
    e0 = float(_round(rng.uniform(0, 0.5) * cap, rng, dyadic))
    reach = min(cap, e0 + (d - a + 1) * m_hi)
    e_hi = float(_round(rng.uniform(e0, reach), rng, dyadic))
    e_hi = min(max(e_hi, e0), reach)
    e_lo = float(_round(rng.uniform(max(e0 + (d - a + 1) * m_lo, 0.0), e_hi), rng, dyadic))
    e_lo = min(max(e_lo, 0.0), e_hi)
    return dict(a=a, d=d, m_lo=m_lo, m_hi=m_hi, e0=e0, cap=cap, e_lo=e_lo, e_hi=e_hi)


def random_charging_spec(rng: np.random.Generator, T: int, dyadic: bool = False) -> dict:
    """Charging-only EV with a single energy target."""
    spec = random_ev_spec(rng, T, v2g=False, dyadic=dyadic)
    spec["e_lo"] = spec["e_hi"]
    return spec


def random_raw(rng: np.random.Generator, T: int) -> DeviceParams:
    """Arbitrary bounds, resampled until the set is nonempty."""
    while True:
        u_lo = rng.uniform(-2, 1, T)
        u_hi = u_lo + rng.uniform(0, 2, T)
        ref = np.cumsum(rng.uniform(u_lo, u_hi))
        x_lo = ref - rng.uniform(0, 2, T)
        x_hi = ref + rng.uniform(0, 2, T)
        x_lo[rng.random(T) < 0.25] = -np.inf
        x_hi[rng.random(T) < 0.25] = np.inf
        params = DeviceParams(u_lo, u_hi, x_lo, x_hi)
        if is_valid(params):
            return params


def random_params(rng: np.random.Generator, T: int, kind: str | None = None) -> DeviceParams:
    kind = kind or rng.choice(["ev", "ess", "generation", "fixed_load", "raw"])
    if kind == "ev":
        return build_ev(T=T, **random_ev_spec(rng, T))
    if kind == "ess":
        cap = rng.uniform(1, 6)
        rate = rng.uniform(0.5, 3)
        return build_ess(-rate, rate, rng.uniform(0, cap), cap, T)
    if kind == "generation":
        return build_generation(rng.uniform(0, 3, T))
    if kind == "fixed_load":
        return build_fixed_load(rng.uniform(-1, 3, T))
    return random_raw(rng, T)


def random_population(rng: np.random.Generator, T: int, N: int) -> Population:
    devices = []
    for i in range(N):
        kind = str(rng.choice(["ev", "ess", "generation", "fixed_load", "raw"]))
        if kind == "ev":
            devices.append(ev_device(f"d{i}", T, **random_ev_spec(rng, T)))
        else:
            devices.append(Device(f"d{i}", kind, random_params(rng, T, kind)))
    return Population(T, tuple(devices))


# -- acceptance report ---------------------------------------------------------------

_CRITERIA: list[tuple[int, str, bool, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _CRITERIA.append((mark.args[0], mark.args[1], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_CRITERIA):
        line = f"C{number:02d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
