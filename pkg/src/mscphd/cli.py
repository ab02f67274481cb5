"""Monte-Carlo experiment driver.

Usage::

    python -m mscphd --scenario linear_8target --filter gcphd --filter icphd \
        --runs 10 --sweep p_d_variable_sensor=0.2,0.6,1.0 --out results/

Writes ``steps.csv`` (``sweep_value,filter,run,step,true_n,est_n,ospa,update_ms``),
``aggregate.csv`` (``sweep_value,filter,mean_ospa,mean_update_ms,runs``) and
``summary.json`` into the output directory.  Exit codes: 0 success, 2
configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .filters import MODES, BirthModel, FilterConfig, extract_estimates, initial_state, predict, update
from .partitioning import GreedyParams
from .metrics import ospa
from .simulator import (
    STREAM_FILTER,
    ScenarioError,
    generate_measurements,
    load_scenario,
    simulate_tracks,
    substream,
)

log = logging.getLogger(__name__)

STEP_COLUMNS = ["sweep_value", "filter", "run", "step", "true_n", "est_n", "ospa", "update_ms"]
AGGREGATE_COLUMNS = ["sweep_value", "filter", "mean_ospa", "mean_update_ms", "runs"]
SWEEP_PARAMETERS = ("p_d_variable_sensor", "w_max", "p_max", "num_sensors", "clutter_rate")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    filters: tuple = ("gcphd",)
    runs: int = 1
    seed: int | None = None
    w_max: int | None = None
    p_max: int | None = None
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    exact: bool = False
    order: str = "fixed"
    out: str = "results"
    workers: int = 1
    timing: bool = True

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        for f in self.filters:
            if f not in MODES:
                raise ConfigError(f"unknown filter {f!r}; choose from {', '.join(MODES)}")
        if self.order not in ("fixed", "random"):
            raise ConfigError("order must be 'fixed' or 'random'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for name in ("w_max", "p_max"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.sweep_parameter is not None:
            if self.sweep_parameter not in SWEEP_PARAMETERS:
                raise ConfigError(
                    f"unknown sweep parameter {self.sweep_parameter!r}; choose from {', '.join(SWEEP_PARAMETERS)}"
                )
            if not self.sweep_values:
                raise ConfigError("sweep needs at least one value")
            for v in self.sweep_values:
                _check_sweep_value(self.sweep_parameter, v)


def _check_sweep_value(param, v):
    if param == "p_d_variable_sensor" and not 0.0 <= v <= 1.0:
        raise ConfigError(f"p_d_variable_sensor value {v} outside [0, 1]")
    if param in ("w_max", "p_max", "num_sensors") and (v != int(v) or v < 1):
        raise ConfigError(f"{param} value {v} must be a positive integer")
    if param == "clutter_rate" and v < 0:
        raise ConfigError(f"clutter_rate value {v} must be nonnegative")


def parse_sweep(text):
    if "=" not in text:
        raise ConfigError("--sweep expects <param>=<v1,v2,...>")
    name, _, values = text.partition("=")
    try:
        vals = tuple(float(v) for v in values.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"--sweep values must be numbers: {values!r}") from None
    return name.strip(), vals


@dataclass(frozen=True, eq=False)
class RunSetup:
    scenario: object
    config: FilterConfig
    birth: BirthModel


def apply_sweep(scenario, param, value):
    if param is None:
        return scenario
    if param == "p_d_variable_sensor":
        return scenario.with_detection_prob(scenario.variable_sensor, value)
    if param == "w_max":
        return replace(scenario, w_max=int(value))
    if param == "p_max":
        return replace(scenario, p_max=int(value))
    if param == "num_sensors":
        return scenario.with_num_sensors(int(value))
    if param == "clutter_rate":
        return scenario.with_clutter_rate(value)
    raise ConfigError(f"unknown sweep parameter {param!r}")


def build_setup(scenario, mode, exp):
    """Filter configuration and birth model for one scenario/filter pair."""
    if scenario.birth is None:
        raise ConfigError("scenario has no birth model")
    order = "random" if exp.order == "random" else scenario.sensor_order
    greedy = GreedyParams(
        w_max=exp.w_max or scenario.w_max,
        p_max=exp.p_max or scenario.p_max,
        sensor_order=order,
        seed=scenario.seed,
    )
    config = FilterConfig(
        motion=scenario.motion,
        sensors=tuple(scenario.sensors),
        p_sv=scenario.p_sv,
        greedy=greedy,
        reduction=scenario.reduction,
        n_max=scenario.n_max,
        mode=mode,
        exact_update=exp.exact,
    )
    b = scenario.birth
    birth = BirthModel.poisson(b.means, b.cov, b.weight, scenario.n_max)
    return RunSetup(scenario, config, birth)


def run_filter(setup, tracks, run, timing=True):
    """One Monte-Carlo run: returns per-step ``(true_n, est_n, ospa, update_ms)``."""
    scn, config = setup.scenario, setup.config
    frames = generate_measurements(scn, tracks, run)
    rng = substream(scn.seed, STREAM_FILTER, run)
    state = initial_state(config, scn.motion.dim)
    pos = list(scn.position_indices)
    rows = []
    for k, frame in enumerate(frames, start=1):
        predicted = predict(state, config, setup.birth)
        t0 = time.perf_counter()
        state = update(predicted, frame, config, rng)
        elapsed = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        n_hat, est = extract_estimates(state, config.mode)
        truth = tracks.positions_at(k)
        rows.append((len(truth), n_hat, ospa(truth, est[:, pos], scn.ospa), elapsed))
    return rows


@dataclass
class ExperimentResult:
    steps: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)


def run_experiment(exp):
    """Run every (sweep value, filter, run) combination; results in a fixed order."""
    base = load_scenario(exp.scenario)
    if exp.seed is not None:
        base = replace(base, seed=int(exp.seed))
    sweep = exp.sweep_values if exp.sweep_parameter else (None,)
    result = ExperimentResult()
    with ThreadPoolExecutor(max_workers=exp.workers) as pool:
        for value in sweep:
            scn = apply_sweep(base, exp.sweep_parameter, value)
            tracks = simulate_tracks(scn)
            label = "" if value is None else repr(float(value))
            for mode in exp.filters:
                setup = build_setup(scn, mode, exp)
                per_run = list(pool.map(lambda r: run_filter(setup, tracks, r, exp.timing), range(exp.runs)))
                ospas, times = [], []
                for r, rows in enumerate(per_run):
                    for k, (true_n, est_n, err, ms) in enumerate(rows, start=1):
                        result.steps.append((label, mode, r, k, true_n, est_n, err, ms))
                        ospas.append(err)
                        times.append(ms)
                result.aggregates.append((label, mode, float(np.mean(ospas)), float(np.mean(times)), exp.runs))
    return result


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_outputs(result, exp):
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "steps.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEP_COLUMNS)
        w.writerows([_fmt(v) for v in row] for row in result.steps)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        w.writerows([_fmt(v) for v in row] for row in result.aggregates)
    summary = {
        "config": {
            "scenario": exp.scenario,
            "filters": list(exp.filters),
            "runs": exp.runs,
            "seed": exp.seed,
            "w_max": exp.w_max,
            "p_max": exp.p_max,
            "sweep": {"parameter": exp.sweep_parameter, "values": list(exp.sweep_values)},
            "exact": exp.exact,
            "order": exp.order,
            "timing": exp.timing,
        },
        "aggregates": [dict(zip(AGGREGATE_COLUMNS, row)) for row in result.aggregates],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="python -m mscphd", description="Multisensor PHD/CPHD Monte-Carlo experiments")
    p.add_argument("--scenario", required=True, help="scenario JSON path or bundled scenario name")
    p.add_argument("--filter", action="append", dest="filters", choices=MODES, help="repeat for several filters")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    p.add_argument("--wmax", type=int, default=None)
    p.add_argument("--pmax", type=int, default=None)
    p.add_argument("--sweep", default=None, help="<param>=<v1,v2,...>; param in " + ", ".join(SWEEP_PARAMETERS))
    p.add_argument("--exact", action="store_true", help="exact partition enumeration when small enough")
    p.add_argument("--order", choices=("fixed", "random"), default="fixed")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="write 0 for update_ms so outputs are reproducible")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    sweep_param, sweep_values = parse_sweep(args.sweep) if args.sweep else (None, ())
    return ExperimentConfig(
        scenario=args.scenario,
        filters=tuple(args.filters or ("gcphd",)),
        runs=args.runs,
        seed=args.seed,
        w_max=args.wmax,
        p_max=args.pmax,
        sweep_parameter=sweep_param,
        sweep_values=sweep_values,
        exact=args.exact,
        order=args.order,
        out=args.out,
        workers=args.workers,
        timing=not args.no_timing,
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        exp = config_from_args(args)
        load_scenario(exp.scenario)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        result = run_experiment(exp)
        out = write_outputs(result, exp)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for label, mode, m_ospa, m_ms, runs in result.aggregates:
        print(f"{label or '-':>8} {mode:>7} mean_ospa={m_ospa:.4f} mean_update_ms={m_ms:.2f} runs={runs}")
    print(f"wrote {out}")
    return 0
