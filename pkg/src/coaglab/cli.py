"""Batch front end: config ingestion, subcommands, bit-stable tabular output.

One JSON config schema feeds every subcommand::

    {
      "initial": [{"a": 1, "b": 1, "m": 1, "conc": 1.0}, ...]
                 | {"family": "one_female" | "random_gender" | "two_gender",
                    "mu1": {"1": 1}, "mu2": {"1": "1/2"}},
      "truncation": {"mass_cap": 64, "arm_cap": 32},
      "solver": {"rhs": "full", "dt": 0.001},
      "t_grid": [0.25, 0.5, 1.0],
      "n": 100000,
      "seed": 42,
      "replicates": 1,
      "max_mass": 12,
      "gw": {"replicates": 100000, "population_cap": 1000000}
    }

Unknown keys are rejected.  Numeric values may be JSON numbers or strings
like ``"1/3"``, which are parsed as exact rationals and keep the analysis
pipeline exact.

Outputs are deterministic bytes given config and seed: floats are printed
with 17 significant digits, CSVs use LF line endings and UTF-8, and run
metadata excludes timing (wall time goes to stderr).  All randomness flows
from the config seed; replicate r uses the derived seed (seed, r), so results
do not depend on the worker schedule.  ``COAG_THREADS`` caps the number of
worker processes used for replicate fan-out.

Exit codes: 0 success, 2 config/usage error, 3 numerical/convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .core import ConcentrationState, moment, validate_and_normalize
from .exact import OneFemaleArm, RandomGender, TwoGender, concentration, initial_state, live_types
from .genfun import ConvergenceError, InitialGF
from .kinetics import IntegrationError, SolverSettings, TruncationPolicy, integrate
from .limits import (
    GWConfig,
    degeneracy_reasons,
    gw_progeny_pmf_series,
    gw_sample_total_progeny,
    initial_arm_measure,
    limiting_concentrations,
)
from .measures import Measure1D, size_biased_laws
from .particles import run_simulation

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_FAMILY_NAMES = {"one_female", "random_gender", "two_gender"}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _number(value, where: str):
    """JSON number, or a string such as '1/3' parsed as an exact rational."""
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{where}: cannot parse {value!r} as a rational") from exc
    raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def _measure_1d(obj, where: str) -> Measure1D:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object mapping arm counts to weights")
    weights = {}
    for key, val in obj.items():
        try:
            j = int(key)
        except ValueError as exc:
            raise ConfigError(f"{where}: key {key!r} is not an integer") from exc
        weights[j] = _number(val, f"{where}[{key}]")
    try:
        return Measure1D.from_dict(weights)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class RunConfig:
    initial_particles: "list[tuple[int, int, int, object]] | None"
    family: "OneFemaleArm | RandomGender | TwoGender | None"
    truncation: TruncationPolicy
    solver: SolverSettings
    t_grid: list
    n: int
    seed: int
    replicates: int
    max_mass: int
    gw_replicates: int
    gw_population_cap: int
    fmt: str = "csv"
    raw: dict = field(repr=False, default_factory=dict)

    def state(self) -> tuple[ConcentrationState, object]:
        """Normalized initial state and the applied concentration scale."""
        if self.family is not None:
            return initial_state(self.family), 1
        entries: dict = {}
        for a, b, m, conc in self.initial_particles:
            key = (a, b, m)
            entries[key] = entries.get(key, 0) + conc
        try:
            c0 = ConcentrationState(entries)
            return validate_and_normalize(c0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def parse_config(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(
        obj,
        {
            "initial",
            "truncation",
            "solver",
            "t_grid",
            "n",
            "seed",
            "replicates",
            "max_mass",
            "gw",
            "format",
        },
        "config",
    )
    fmt = obj.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be 'csv' or 'json', got {fmt!r}")
    if "initial" not in obj:
        raise ConfigError("config requires an 'initial' section")
    initial = obj["initial"]
    particles = None
    family = None
    if isinstance(initial, list):
        particles = []
        for k, row in enumerate(initial):
            if not isinstance(row, dict):
                raise ConfigError(f"initial[{k}] must be an object")
            _check_keys(row, {"a", "b", "m", "conc"}, f"initial[{k}]")
            for fld in ("a", "b", "m", "conc"):
                if fld not in row:
                    raise ConfigError(f"initial[{k}] is missing {fld!r}")
            particles.append(
                (
                    int(row["a"]),
                    int(row["b"]),
                    int(row["m"]),
                    _number(row["conc"], f"initial[{k}].conc"),
                )
            )
        if not particles:
            raise ConfigError("initial particle list is empty")
    elif isinstance(initial, dict):
        _check_keys(initial, {"family", "mu1", "mu2"}, "initial")
        name = initial.get("family")
        if name not in _FAMILY_NAMES:
            raise ConfigError(f"initial.family must be one of {sorted(_FAMILY_NAMES)}, got {name!r}")
        if "mu1" not in initial:
            raise ConfigError("initial requires 'mu1'")
        mu1 = _measure_1d(initial["mu1"], "initial.mu1")
        try:
            if name == "one_female":
                family = OneFemaleArm(mu1)
            elif name == "random_gender":
                family = RandomGender(mu1)
            else:
                if "mu2" not in initial:
                    raise ConfigError("two_gender requires 'mu2'")
                family = TwoGender(mu1, _measure_1d(initial["mu2"], "initial.mu2"))
        except ValueError as exc:
            raise ConfigError(f"initial family: {exc}") from exc
        if name != "two_gender" and "mu2" in initial:
            raise ConfigError(f"initial.mu2 is only valid for two_gender, not {name}")
    else:
        raise ConfigError("initial must be a particle list or a family object")

    trunc = obj.get("truncation", {})
    _check_keys(trunc, {"mass_cap", "arm_cap"}, "truncation")
    try:
        policy = TruncationPolicy(
            mass_cap=int(trunc.get("mass_cap", 64)), arm_cap=int(trunc.get("arm_cap", 32))
        )
    except ValueError as exc:
        raise ConfigError(f"truncation: {exc}") from exc

    sol = obj.get("solver", {})
    _check_keys(sol, {"rhs", "dt"}, "solver")
    try:
        solver = SolverSettings(rhs=sol.get("rhs", "full"), dt=float(sol.get("dt", 1e-3)))
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc

    t_grid = obj.get("t_grid", [1.0])
    if not isinstance(t_grid, list) or not t_grid:
        raise ConfigError("t_grid must be a nonempty list of times")
    t_grid = [_number(t, "t_grid") for t in t_grid]
    if any(float(t) < 0 for t in t_grid) or sorted(map(float, t_grid)) != list(map(float, t_grid)):
        raise ConfigError("t_grid must be nonnegative and increasing")

    gw = obj.get("gw", {})
    _check_keys(gw, {"replicates", "population_cap"}, "gw")

    return RunConfig(
        initial_particles=particles,
        family=family,
        truncation=policy,
        solver=solver,
        t_grid=t_grid,
        n=int(obj.get("n", 10_000)),
        seed=int(obj.get("seed", 0)),
        replicates=int(obj.get("replicates", 1)),
        max_mass=int(obj.get("max_mass", 12)),
        gw_replicates=int(gw.get("replicates", 100_000)),
        gw_population_cap=int(gw.get("population_cap", 1_000_000)),
        fmt=fmt,
        raw=obj,
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(obj)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table(out_dir: Path, stem: str, header: list, rows, fmt: str) -> Path:
    """Write one table as CSV (default) or JSON per the config's format."""
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        payload = {
            "columns": header,
            "rows": [
                [float(f"{v:.17g}") if isinstance(v, float) else v for v in row]
                for row in rows
            ],
        }
        _write_json(path, payload)
        return path
    path = out_dir / f"{stem}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, Fraction)) else v for v in row])
    return path


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


# ---------------------------------------------------------------------------
# Subcommands


def cmd_analyze(cfg: RunConfig, out: "Path | None") -> dict:
    c0, scale = cfg.state()
    gf = InitialGF(c0)
    data = gf.critical_data()
    monodisperse = all(p.m == 1 for p in c0.support())
    reasons = degeneracy_reasons(initial_arm_measure(c0)) if monodisperse else []
    report = {
        "alpha": float(data.alpha),
        "beta": float(data.beta),
        "gamma": float(data.gamma),
        "M": float(data.big_m),
        "T_c": _jsonable(float(data.t_crit)),
        "monodisperse": monodisperse,
        "degenerate": bool(reasons),
        "degenerate_reasons": reasons,
        "concentration_scale": _jsonable(scale),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out is not None:
        out.write_text(text + "\n", encoding="utf-8")
    return report


def cmd_ode(cfg: RunConfig, out_dir: Path) -> list[Path]:
    c0, _ = cfg.state()
    grid = [float(t) for t in cfg.t_grid]
    traj = integrate(c0, grid[-1], cfg.truncation, cfg.solver, checkpoints=grid)
    paths = [out_dir / "concentrations.csv", out_dir / "observables.csv", out_dir / "meta.json"]
    traj.write_concentrations_csv(paths[0])
    traj.write_observables_csv(paths[1])
    _write_json(paths[2], {"command": "ode", "config": cfg.raw})
    return paths


def cmd_explicit(cfg: RunConfig, out_dir: Path) -> list[Path]:
    if cfg.family is None:
        raise ConfigError("the explicit command needs a family initial condition")
    path = out_dir / "explicit.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv_writer(fh)
        w.writerow(["t", "a", "b", "m", "value"])
        for t in cfg.t_grid:
            for m in range(1, cfg.max_mass + 1):
                for a, b in live_types(cfg.family, m):
                    w.writerow([_fmt(t), a, b, m, _fmt(concentration(cfg.family, t, a, b, m))])
    _write_json(out_dir / "meta.json", {"command": "explicit", "config": cfg.raw})
    return [path, out_dir / "meta.json"]


def _replicate_job(args):
    counts, n, t_end, grid, seed = args
    return run_simulation(counts, n, t_end, checkpoints=grid, seed=seed)


def _worker_count() -> int:
    raw = os.environ.get("COAG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_simulate(cfg: RunConfig, out_dir: Path) -> list[Path]:
    c0, _ = cfg.state()
    counts = {}
    for p, wgt in c0.items():
        k = int(round(float(wgt) * cfg.n))
        if k > 0:
            counts[p] = k
    if not counts:
        raise ConfigError(f"initial counts are empty at n = {cfg.n}; increase n")
    grid = [float(t) for t in cfg.t_grid]
    jobs = [
        (counts, cfg.n, grid[-1], grid, (cfg.seed, r) if cfg.replicates > 1 else cfg.seed)
        for r in range(cfg.replicates)
    ]
    t0 = time.perf_counter()
    workers = min(_worker_count(), len(jobs))
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                runs = list(pool.map(_replicate_job, jobs))
        except OSError as exc:  # no subprocess support: degrade to inline
            print(f"worker pool unavailable ({exc}); running inline", file=sys.stderr)
            runs = [_replicate_job(j) for j in jobs]
    else:
        runs = [_replicate_job(j) for j in jobs]
    wall = time.perf_counter() - t0
    print(f"simulate: {len(runs)} replicate(s) in {wall:.3f} s wall time", file=sys.stderr)
    paths = []
    for r, run in enumerate(runs):
        path = out_dir / f"empirical_{r:03d}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = _csv_writer(fh)
            w.writerow(["t", "a", "b", "m", "C_n"])
            for t, state in zip(run.times, run.states):
                for p in sorted(state, key=lambda q: (q.m, q.a, q.b)):
                    w.writerow([_fmt(t), p.a, p.b, p.m, _fmt(state[p])])
        paths.append(path)
    meta = {
        "command": "simulate",
        "config": cfg.raw,
        "n": cfg.n,
        "seed": cfg.seed,
        "replicates": cfg.replicates,
        "events": [run.events for run in runs],
        "final_totals": [
            {
                "male_arms": run.final_total_male,
                "female_arms": run.final_total_female,
                "mass": run.final_total_mass,
                "particles": run.final_particles,
            }
            for run in runs
        ],
    }
    meta_path = out_dir / "meta.json"
    _write_json(meta_path, meta)
    return paths + [meta_path]


def cmd_limit(cfg: RunConfig, out_dir: Path) -> list[Path]:
    c0, _ = cfg.state()
    limit = limiting_concentrations(c0, cfg.max_mass)
    path = out_dir / "limit.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv_writer(fh)
        w.writerow(["m", "c_inf"])
        for m in range(1, cfg.max_mass + 1):
            w.writerow([m, _fmt(limit.c_inf[m])])
    monodisperse = all(p.m == 1 for p in c0.support())
    reasons = degeneracy_reasons(initial_arm_measure(c0)) if monodisperse else []
    summary = {
        "command": "limit",
        "config": cfg.raw,
        "max_mass": cfg.max_mass,
        "total_concentration": float(limit.total_concentration),
        "total_mass": float(limit.total_mass),
        "initial_concentration": float(moment(c0, lambda p: 1)),
        "degenerate": bool(reasons),
        "degenerate_reasons": reasons,
    }
    spath = out_dir / "limit_summary.json"
    _write_json(spath, summary)
    return [path, spath]


def cmd_gw(cfg: RunConfig, out_dir: Path) -> list[Path]:
    c0, _ = cfg.state()
    mu = initial_arm_measure(c0)  # raises for non-monodisperse states
    nu_m, nu_f = size_biased_laws(mu)
    limit = limiting_concentrations(c0, cfg.max_mass)
    pmf = gw_progeny_pmf_series(nu_m, nu_f, cfg.max_mass)
    sample = gw_sample_total_progeny(
        GWConfig(
            nu_m,
            nu_f,
            population_cap=cfg.gw_population_cap,
            replicates=cfg.gw_replicates,
            seed=cfg.seed,
        )
    )
    path = out_dir / "gw.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _csv_writer(fh)
        w.writerow(["m", "c_inf", "pmf_series", "pmf_sampled", "censored_fraction"])
        for m in range(1, cfg.max_mass + 1):
            w.writerow(
                [
                    m,
                    _fmt(limit.c_inf[m]),
                    _fmt(pmf[m]),
                    _fmt(sample.pmf(m)),
                    _fmt(sample.censored_fraction),
                ]
            )
    reasons = degeneracy_reasons(mu)
    summary = {
        "command": "gw",
        "config": cfg.raw,
        "replicates": sample.replicates,
        "censored": sample.censored,
        "censored_fraction": sample.censored_fraction,
        "degenerate": bool(reasons),
        "degenerate_reasons": reasons,
    }
    spath = out_dir / "gw_summary.json"
    _write_json(spath, summary)
    return [path, spath]


def cmd_compare(path_a: str, path_b: str, tolerance: float) -> int:
    def read(path):
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ConfigError(f"{path} is empty")
        header, body = rows[0], rows[1:]
        if len(header) < 2:
            raise ConfigError(f"{path} needs key columns and a value column")
        table = {}
        for row in body:
            table[tuple(row[:-1])] = float(row[-1])
        return header[:-1], table

    keys_a, table_a = read(path_a)
    keys_b, table_b = read(path_b)
    if keys_a != keys_b:
        raise ConfigError(f"key columns differ: {keys_a} vs {keys_b}")
    shared = sorted(set(table_a) & set(table_b))
    diffs = [abs(table_a[k] - table_b[k]) for k in shared]
    # Keys present in only one file are compared against 0 (absent species
    # have zero concentration in every table this tool emits).
    for k in set(table_a) ^ set(table_b):
        diffs.append(abs(table_a.get(k, 0.0) - table_b.get(k, 0.0)))
    max_diff = max(diffs) if diffs else 0.0
    mean_diff = sum(diffs) / len(diffs) if diffs else 0.0
    report = {
        "max_abs_diff": max_diff,
        "mean_abs_diff": mean_diff,
        "shared_rows": len(shared),
        "only_in_a": len(set(table_a) - set(table_b)),
        "only_in_b": len(set(table_b) - set(table_a)),
        "tolerance": tolerance,
        "within_tolerance": max_diff <= tolerance,
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if max_diff <= tolerance else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coaglab",
        description="Two-gender coagulation laboratory: deterministic, exact, and stochastic runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="critical constants and degeneracy report")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="also write the JSON report here")

    for name, text in (
        ("ode", "integrate the truncated kinetic system"),
        ("explicit", "tabulate closed-form family concentrations"),
        ("simulate", "run the stochastic particle system"),
        ("limit", "limiting concentrations as t -> infinity"),
        ("gw", "total-progeny law: series, sampled, and limit table"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("compare", help="diff two CSV tables on their key columns")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--tolerance", type=float, required=True)
    return parser


def main(argv: "list[str] | None" = None) -> int:
    args = _build_parser().parse_args(argv)
    out_dir: "Path | None" = None
    preexisting: set[Path] = set()
    try:
        if args.command == "compare":
            return cmd_compare(args.file_a, args.file_b, args.tolerance)
        cfg = load_config(args.config)
        if args.command == "analyze":
            cmd_analyze(cfg, Path(args.out) if args.out else None)
            return 0
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        preexisting = set(out_dir.iterdir())
        handler = {
            "ode": cmd_ode,
            "explicit": cmd_explicit,
            "simulate": cmd_simulate,
            "limit": cmd_limit,
            "gw": cmd_gw,
        }[args.command]
        handler(cfg, out_dir)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, IntegrationError, ValueError, ZeroDivisionError) as exc:
        if out_dir is not None:  # drop partial outputs of the failed command
            for path in set(out_dir.iterdir()) - preexisting:
                try:
                    path.unlink()
                except OSError:
                    pass
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
