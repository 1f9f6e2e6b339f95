"""Command-line interface.

Subcommands: ``gen``, ``solve``, ``disagg``, ``baseline``, ``bench`` and
``case-study``.  Exit codes: 0 ok, 2 infeasible, 3 validation error (also
failed verification or a stale result file), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .aggregate import population_oracle
from .core_model import Population, ValidationError
from .disaggregate import disaggregate, verify_disaggregation
from .optimize import CouplingConstraints, InfeasibleError, solve_lp_coupled, vertex_from_permutation
from .scenarios import (BENCH_METHODS, PriceSeries, ScenarioConfig, baseline, bench_csv,
                        bench_instance, case_study, case_study_csv, random_coupling,
                        sample_population, synthetic_prices)
from .setfn import StackedOracle

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4

log = logging.getLogger("gflex")


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- I/O helpers --------------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _read_json(path: str):
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CLIError(EXIT_IO, f"{path} is not valid JSON: {exc}") from None


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _dump_json(data) -> str:
    return json.dumps(data, indent=1, sort_keys=True) + "\n"


def _load_population(path: str | None) -> Population:
    if path is None:
        raise CLIError(EXIT_IO, "--input population file is required")
    pop = Population.from_dict(_read_json(path))
    pop.validate()
    return pop


def population_hash(pop: Population) -> str:
    return hashlib.sha256(pop.dumps().encode()).hexdigest()


def _prices(args, T: int) -> np.ndarray | None:
    if args.prices is not None:
        try:
            c = np.array([float(x) for x in args.prices.split(",")])
        except ValueError:
            raise ValidationError("bad_input", "--prices must be comma-separated numbers") from None
    elif args.price_file is not None:
        series = PriceSeries.from_csv(_read_text(args.price_file), T)
        day = args.day if args.day is not None else series.days[0] if series.days else None
        if day is None:
            raise ValidationError("bad_input", "price file is empty")
        c = series.day(day)
    else:
        return None
    if c.shape != (T,) or not np.isfinite(c).all():
        raise ValidationError("bad_input", f"need {T} finite prices, got {c.size}")
    return c


def _config(args) -> ScenarioConfig:
    data = _read_json(args.config) if getattr(args, "config", None) else {}
    overrides = {
        "T": args.T, "n_ev": args.n_ev, "v2g_fraction": args.v2g_fraction,
        "n_households": args.households, "n_ess": args.n_ess,
        "n_generation": args.n_generation, "n_fixed_load": args.n_load,
        "coupling_rows": args.coupling_rows,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    data["seed"] = args.seed
    return ScenarioConfig.from_dict(data)


# -- commands -----------------------------------------------------------------------

def cmd_gen(args) -> int:
    config = _config(args)
    rng = np.random.default_rng(config.seed)
    pop = sample_population(config, rng)
    _write(args.output, pop.dumps() + "\n")
    if args.coupling_output:
        oracle = population_oracle(pop) if len(pop) else None
        if oracle is None:
            coupling = CouplingConstraints.empty(config.T)
        else:
            coupling = random_coupling(oracle, config.coupling_rows, rng, config.coupling_margin)
        _write(args.coupling_output, _dump_json(coupling.to_dict()))
    if args.prices_output:
        _write(args.prices_output, synthetic_prices(config.T, args.days, seed=config.seed).to_csv())
    return EXIT_OK


def solve_population(pop: Population, c, coupling: CouplingConstraints | None, eps: float,
                     workers: int = 1, timing: bool = True) -> dict:
    """Result document of one solve: aggregate optimum plus labeled atoms."""
    if not len(pop):
        raise ValidationError("bad_input", "population is empty")
    oracle = population_oracle(pop)
    start = time.perf_counter()
    res = solve_lp_coupled(oracle, c, coupling, eps=eps, workers=workers)
    elapsed = time.perf_counter() - start
    out = {
        "status": res.status,
        "objective": res.objective,
        "u_star": res.u_star.tolist(),
        "atoms": [{"lambda": w, "permutation": list(v.label), "vertex": v.u.tolist()}
                  for w, v in res.atoms],
        "iterations": res.iterations,
        "duals": {"mu": [] if res.mu is None else res.mu.tolist(), "sigma": res.sigma},
        "population_sha256": population_hash(pop),
    }
    if timing:
        out["timing_us"] = int(round(elapsed * 1e6))
    return out


def cmd_solve(args) -> int:
    pop = _load_population(args.input)
    c = _prices(args, pop.T)
    if c is None:
        raise ValidationError("bad_input", "give --prices or --price-file")
    coupling = None
    if args.coupling:
        coupling = CouplingConstraints.from_dict(_read_json(args.coupling), pop.T)
    doc = solve_population(pop, c, coupling, eps=args.tol if args.tol is not None else 1e-8,
                           workers=args.parallel, timing=not args.no_timing)
    _write(args.output, _dump_json(doc))
    return EXIT_OK


def schedule_csv(ids, profiles) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["device_id", "t", "power"])
    for dev_id, u in zip(ids, profiles):
        for t, x in enumerate(u, start=1):
            w.writerow([dev_id, t, repr(float(x))])
    return buf.getvalue()


def cmd_disagg(args) -> int:
    tol = args.tol if args.tol is not None else 1e-9
    pop = _load_population(args.input)
    if not args.result:
        raise CLIError(EXIT_IO, "--result file is required")
    doc = _read_json(args.result)
    if not isinstance(doc, dict) or not doc.get("atoms"):
        raise CLIError(EXIT_VALIDATION, "result carries no atoms")
    if doc.get("population_sha256") not in (None, population_hash(pop)):
        raise CLIError(EXIT_VALIDATION, "result was computed for a different population")
    try:
        atoms = [(float(a["lambda"]), tuple(int(x) for x in a["permutation"]))
                 for a in doc["atoms"]]
        u_star = np.asarray(doc["u_star"], dtype=float)
    except (KeyError, TypeError, ValueError):
        raise CLIError(EXIT_VALIDATION, "malformed atoms in result") from None
    if u_star.shape != (pop.T,):
        raise CLIError(EXIT_VALIDATION, "u_star does not match the horizon")
    stacked = StackedOracle(pop.params, check=False)
    for a, (_, label) in zip(doc["atoms"], atoms):
        stored = np.asarray(a.get("vertex", []), dtype=float)
        fresh = vertex_from_permutation(stacked, label).u
        if stored.shape != fresh.shape or np.abs(stored - fresh).max() > max(tol, 1e-9) * (
                1.0 + np.abs(fresh).max()):
            raise CLIError(EXIT_VALIDATION, "stored vertex disagrees with its permutation")
    try:
        result = disaggregate(pop, atoms, target=u_star)
    except ValueError as exc:
        raise CLIError(EXIT_VALIDATION, str(exc)) from None
    report = verify_disaggregation(pop, result.profiles, u_star, tol=tol)
    _write(args.output, schedule_csv(result.ids, result.profiles))
    summary = _dump_json(report.to_dict())
    if args.report:
        _write(args.report, summary)
    elif args.output not in (None, "-"):
        sys.stdout.write(summary)
    else:
        sys.stderr.write(summary)
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_baseline(args) -> int:
    pop = _load_population(args.input)
    base = baseline(pop)
    doc = {"profile": base.total.tolist(),
           "l1": base.l1,
           "profiles": {k: v.tolist() for k, v in sorted(base.profiles.items())}}
    c = _prices(args, pop.T)
    if c is not None:
        doc["cost"] = base.cost(c)
    _write(args.output, _dump_json(doc))
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bench_job(job):
    return bench_instance(*job)


def cmd_bench(args) -> int:
    methods = tuple(m for m in args.methods.split(",") if m)
    unknown = set(methods) - set(BENCH_METHODS)
    if unknown:
        raise ValidationError("bad_input", f"unknown methods {sorted(unknown)}")
    jobs = [(T, N, args.coupling_rows, i, args.seed, methods)
            for T in args.T_grid for N in args.N_grid for i in range(args.instances)]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            chunks = list(pool.map(_bench_job, jobs))
    else:
        chunks = [_bench_job(job) for job in jobs]
    _write(args.output, bench_csv([row for chunk in chunks for row in chunk]))
    return EXIT_OK


def cmd_case_study(args) -> int:
    if args.config:
        config = ScenarioConfig.from_dict({**_read_json(args.config), "seed": args.seed})
    else:
        config = ScenarioConfig.case_study(seed=args.seed, **({"T": args.T} if args.T else {}))
    if args.price_file:
        prices = PriceSeries.from_csv(_read_text(args.price_file), config.T)
    else:
        prices = synthetic_prices(config.T, args.days, seed=args.seed)

    def progress(day):
        log.info("day %d: optimized %.4f baseline %.4f (%.2f s)", day.day, day.optimized,
                 day.baseline, day.seconds)

    results = case_study(config, prices, args.days, callback=progress)
    _write(args.output, case_study_csv(results))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--input", help="population JSON file")
    common.add_argument("--output", help="output file (default: stdout)")
    common.add_argument("--tol", type=float, help="solver or verification tolerance")
    common.add_argument("--parallel", type=int, default=1, metavar="N",
                        help="worker threads or processes")
    common.add_argument("-v", "--verbose", action="store_true")

    prices = argparse.ArgumentParser(add_help=False)
    prices.add_argument("--prices", help="comma-separated price per step")
    prices.add_argument("--price-file", help="CSV with day,t,price rows")
    prices.add_argument("--day", type=int, help="day to take from --price-file (default: first)")

    parser = argparse.ArgumentParser(prog="gflex", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="sample a population")
    p.add_argument("--config", help="ScenarioConfig JSON")
    p.add_argument("--T", type=int)
    p.add_argument("--n-ev", type=int)
    p.add_argument("--v2g-fraction", type=float)
    p.add_argument("--households", type=int)
    p.add_argument("--n-ess", type=int)
    p.add_argument("--n-generation", type=int)
    p.add_argument("--n-load", type=int)
    p.add_argument("--coupling-rows", type=int)
    p.add_argument("--coupling-output", help="also write random feasible coupling rows here")
    p.add_argument("--prices-output", help="also write synthetic prices here")
    p.add_argument("--days", type=int, default=1, help="days of synthetic prices")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[common, prices], help="minimize cost over the aggregate")
    p.add_argument("--coupling", help="JSON with C and d (rows C u <= d)")
    p.add_argument("--no-timing", action="store_true", help="omit timing_us from the result")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("disagg", parents=[common], help="per-device schedules from a result")
    p.add_argument("--result", help="result JSON written by solve")
    p.add_argument("--report", help="write the verification report here")
    p.set_defaults(func=cmd_disagg)

    p = sub.add_parser("baseline", parents=[common, prices], help="reference consumption profile")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("bench", parents=[common], help="time the solvers on random instances")
    p.add_argument("--T-grid", type=_int_list, default=[12, 24, 48, 96])
    p.add_argument("--N-grid", type=_int_list, default=[100])
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--coupling-rows", type=int, default=10)
    p.add_argument("--methods", default=",".join(BENCH_METHODS))
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("case-study", parents=[common], help="daily costs against the baseline")
    p.add_argument("--config", help="ScenarioConfig JSON (default: 50 EVs, 100 households)")
    p.add_argument("--price-file", help="CSV with day,t,price rows (default: synthetic)")
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--T", type=int)
    p.set_defaults(func=cmd_case_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:  # includes ValidationError
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
