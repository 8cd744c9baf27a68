"""Command-line pipeline: generate, estimate, validate, simulate, report-diff."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from . import io
from .accessibility import ProviderConfig, synthetic_provider
from .choice import (
    LocationTable,
    describe_alternatives,
    estimate_segment,
    household_aba,
    household_counts,
    sample_choice_set,
    sampling_probabilities,
    stack_choice_sets,
    EstimationResult,
)
from .domain import (
    DEFAULT_MOVING_RATES,
    SEGMENTS,
    ScenarioSpec,
    cell_positions,
    preset_scenarios,
    validate_cells,
    validate_households,
)
from .errors import ConfigError, DataError, ReslocError
from .hedonic import fit_hedonic
from .metrics import DEFAULT_BINS_M, DistanceOracle, IndicatorReport, distance_histogram, indicators
from .network import all_pairs_distances
from .reports import (
    change_frame,
    hedonic_report,
    scenario_report,
    segment_report,
    validation_report,
    validation_rows,
)
from .simulate import (
    LocationModel,
    PolicyState,
    apply_policy1,
    apply_policy2,
    run_scenario,
    scale_population,
)
from .synthetic import RegionConfig, generate_synthetic_region

log = logging.getLogger("resloc")

ESTIMATION_STREAM = 7
SPLIT_STREAM = 11


@dataclass(frozen=True)
class ProjectConfig:
    """Where the data live, how to make it, and which scenarios to run.

    Relative paths resolve against the output directory.
    """

    out: Path = Path("out")
    seed: int = 0
    runs: int = 10
    n_cells: int = 100
    n_households: int = 5000
    region: Mapping = field(default_factory=dict)
    cells: str = "data/cells.csv"
    households: str = "data/households.csv"
    edges: str = "data/edges.csv"
    moving_rates: str = "data/moving_rates.csv"
    segment_coefficients: str | None = None     # directory of segment_N.txt
    hedonic_coefficients: str | None = None     # key = value file
    split_fraction: float = 0.8
    distance_mode: str = "graph"
    baseline: str = "base"
    scenarios: tuple[ScenarioSpec, ...] = ()

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ConfigError(f"split_fraction {self.split_fraction} must lie strictly between 0 and 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate scenario names in {names}")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "ProjectConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "out" in data:
            data["out"] = Path(data["out"])
        if "scenarios" in data:
            data["scenarios"] = tuple(ScenarioSpec.from_mapping(s) for s in data["scenarios"] or ())
        return cls(**data)

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.out / p

    def scenario_table(self) -> dict[str, ScenarioSpec]:
        table = preset_scenarios(self.seed, self.runs)
        for s in self.scenarios:
            table[s.name] = s
        return table

    def region_config(self) -> RegionConfig:
        return RegionConfig.from_mapping(self.region)


def load_config(args) -> ProjectConfig:
    data = io.read_yaml(args.config) if args.config else {}
    cfg = ProjectConfig.from_mapping(data)
    if args.config and "out" in data and not cfg.out.is_absolute():
        cfg = replace(cfg, out=Path(args.config).parent / cfg.out)
    overrides = {}
    if args.out is not None:
        overrides["out"] = Path(args.out)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.runs is not None:
        overrides["runs"] = args.runs
    return replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# shared loading


@dataclass
class Workspace:
    cfg: ProjectConfig
    cells: pd.DataFrame
    households: pd.DataFrame
    edges: pd.DataFrame
    rates: object
    provider: ProviderConfig

    @classmethod
    def load(cls, cfg: ProjectConfig) -> "Workspace":
        for key in ("cells", "households", "edges"):
            if not cfg.path(getattr(cfg, key)).exists():
                raise DataError(f"missing {key} file {cfg.path(getattr(cfg, key))}; run 'generate' first")
        cells = io.read_cells(cfg.path(cfg.cells))
        households = io.read_households(cfg.path(cfg.households))
        edges = io.read_edges(cfg.path(cfg.edges))
        validate_cells(cells)
        validate_households(households, cells)
        rates_path = cfg.path(cfg.moving_rates)
        rates = io.read_moving_rates(rates_path) if rates_path.exists() else DEFAULT_MOVING_RATES
        return cls(cfg, cells, households, edges, rates, cfg.region_config().provider)

    _dist = None

    @property
    def distances(self) -> np.ndarray:
        if self._dist is None:
            self._dist = all_pairs_distances(self.cells, self.edges)
        return self._dist

    def oracle(self) -> DistanceOracle:
        return DistanceOracle(self.cells, self.edges, mode=self.cfg.distance_mode)


def split_households(households: pd.DataFrame, fraction: float, seed: int) -> pd.Series:
    """Household-level random split; True marks the estimation subset."""
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction {fraction} must lie strictly between 0 and 1")
    n = len(households)
    n_est = int(np.floor(fraction * n + 0.5))
    if n_est in (0, n):
        raise ConfigError(f"split fraction {fraction} leaves an empty subset of {n} households")
    order = np.random.default_rng([seed, SPLIT_STREAM]).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_est]] = True
    return pd.Series(mask, index=households.index, name="estimation")


def load_segments(cfg: ProjectConfig, preset: bool):
    if preset:
        return io.preset_segments()
    folder = cfg.path(cfg.segment_coefficients) if cfg.segment_coefficients else cfg.out / "estimate"
    out = {}
    for s in SEGMENTS:
        p = folder / f"segment_{s}.txt"
        if p.exists():
            out[s] = io.read_segment_coefficients(p)
    if not out:
        raise DataError(f"no segment coefficients in {folder}; run 'estimate' or pass --preset")
    return out


def load_hedonic(cfg: ProjectConfig, preset: bool) -> dict[str, float]:
    if preset:
        return io.preset_hedonic()
    p = cfg.path(cfg.hedonic_coefficients) if cfg.hedonic_coefficients else cfg.out / "estimate" / "hedonic.txt"
    if not p.exists():
        raise DataError(f"no land-price coefficients at {p}; run 'estimate' or pass --preset")
    return io.read_key_values(p)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: ProjectConfig, args=None) -> dict:
    cells, households, edges = generate_synthetic_region(cfg.n_cells, cfg.n_households, cfg.seed,
                                                         cfg.region_config())
    io.write_csv(cells, cfg.path(cfg.cells))
    io.write_csv(households, cfg.path(cfg.households))
    io.write_csv(edges, cfg.path(cfg.edges))
    io.write_csv(io.rates_to_frame(DEFAULT_MOVING_RATES), cfg.path(cfg.moving_rates))
    summary = {
        "cells": len(cells),
        "households": len(households),
        "edges": len(edges),
        "daa_cells": int(cells["in_daa"].sum()),
        "ufaa_cells": int(cells["in_ufaa"].sum()),
        "households_in_daa": int(cells["in_daa"].to_numpy()[
            cell_positions(cells, households["home_cell"].to_numpy())].sum()),
    }
    print(f"wrote synthetic region to {cfg.path(cfg.cells).parent}")
    for k, v in summary.items():
        print(f"  {k}: {v}")
    return summary


def estimation_data(ws: Workspace, households: pd.DataFrame, surface, seed: int):
    """Sampled choice sets per segment, the observed home cell being the choice."""
    locations = LocationTable.from_cells(ws.cells)
    probs = sampling_probabilities(locations.land_price, locations.eligible)
    home = cell_positions(ws.cells, households["home_cell"].to_numpy())
    by_segment: dict[int, list] = {s: [] for s in SEGMENTS}
    for i, row in enumerate(households.itertuples(index=False)):
        rng = np.random.default_rng([seed, ESTIMATION_STREAM, int(row.household_id)])
        cs = sample_choice_set(locations.land_price, rng, chosen=int(home[i]),
                               household_id=int(row.household_id), probabilities=probs)
        aba = household_aba(surface, household_counts(row), int(home[i]), cs.cells)
        by_segment[int(row.segment)].append(describe_alternatives(cs, locations, aba))
    return by_segment


def cmd_estimate(cfg: ProjectConfig, args=None) -> dict:
    ws = Workspace.load(cfg)
    out = cfg.out / "estimate"
    split = split_households(ws.households, cfg.split_fraction, cfg.seed)
    io.write_csv(pd.DataFrame({"household_id": ws.households["household_id"],
                               "estimation": split.to_numpy()}), out / "split.csv")

    fit = fit_hedonic(ws.cells, drop_collinear=True)
    if fit.dropped:
        log.warning("land-price terms dropped as collinear: %s", ", ".join(fit.dropped))
    io.write_key_values(fit.coefficient_map(), out / "hedonic.txt",
                        "Land-price model fitted on the cell table")
    io.write_csv(fit.summary_frame(), out / "hedonic_summary.csv")
    _write_text(out / "hedonic_report.txt", hedonic_report(fit))

    surface = synthetic_provider(ws.cells, ws.distances, ScenarioSpec(), ws.provider)
    sets = estimation_data(ws, ws.households[split.to_numpy()], surface, cfg.seed)
    results: dict[int, EstimationResult | str] = {}
    for s in SEGMENTS:
        try:
            if not sets[s]:
                raise DataError("no households in this segment")
            res = estimate_segment(stack_choice_sets(sets[s]), on_unidentified="fix", segment=s)
            results[s] = res
            io.write_segment_coefficients(res.to_segment(s), out / f"segment_{s}.txt",
                                          f"Residential location model, segment {s} (estimated)")
            frame = res.summary_frame()
            frame.insert(0, "segment", s)
            io.write_csv(frame, out / f"segment_{s}_summary.csv")
        except ReslocError as exc:
            results[s] = f"[{exc.category}] {exc}"
            log.error("segment %d estimation failed: %s", s, exc)
    report = segment_report(results)
    _write_text(out / "segments_report.txt", report)
    print(hedonic_report(fit))
    print(report)
    if all(isinstance(r, str) for r in results.values()):
        raise DataError("estimation failed for every segment")
    return results


def cmd_validate(cfg: ProjectConfig, args=None) -> pd.DataFrame:
    ws = Workspace.load(cfg)
    preset = bool(getattr(args, "preset", False))
    segments = load_segments(cfg, preset)
    split = split_households(ws.households, cfg.split_fraction, cfg.seed)
    holdout = ws.households[~split.to_numpy()].reset_index(drop=True)
    surface = synthetic_provider(ws.cells, ws.distances, ScenarioSpec(), ws.provider)
    model = LocationModel(ws.cells, surface, segments)
    scenario = ScenarioSpec(name="validation", population_ratio=1.0, seed=cfg.seed,
                            n_monte_carlo_runs=cfg.runs)
    oracle = ws.oracle()
    outcome = run_scenario(holdout, model, scenario, oracle, force_move=True)
    observed = indicators(cell_positions(ws.cells, holdout["home_cell"].to_numpy()), ws.cells, oracle)
    frame = validation_rows(observed, outcome.mean.to_dict())
    out = cfg.out / "validate"
    io.write_csv(frame, out / "validation.csv")
    io.write_csv(outcome.per_run, out / "validation_runs.csv")
    text = validation_report(frame)
    _write_text(out / "validation_report.txt", text)
    print(text)
    return frame


def build_policy_state(ws: Workspace, scenario: ScenarioSpec, hedonic: Mapping[str, float]) -> PolicyState:
    """Apply the scenario's policies and build its accessibility surface.

    Policy 2 runs first because it rebuilds land prices; Policy 1's subsidy
    then applies to the re-predicted DAA prices.
    """
    def builder(cells):
        return synthetic_provider(cells, ws.distances, scenario, ws.provider, reference_cells=ws.cells)

    state = PolicyState(ws.cells.copy())
    state = apply_policy2(state, scenario.policy2_ufaa_employee_boost, ws.distances, hedonic,
                          ws.provider, builder)
    state = apply_policy1(state, scenario.policy1_subsidy_rate)
    if state.surface is None:
        state = replace(state, surface=builder(state.cells), ledger=state.ledger + ("aba_surface",))
    return state


def cmd_simulate(cfg: ProjectConfig, args=None) -> pd.DataFrame:
    ws = Workspace.load(cfg)
    preset = bool(getattr(args, "preset", False))
    table = cfg.scenario_table()
    names = list(getattr(args, "scenario", None) or []) or [s.name for s in cfg.scenarios] or ["base", "s1", "s2"]
    unknown = [n for n in names if n not in table]
    if unknown:
        raise ConfigError(f"unknown scenario {unknown[0]!r}; known: {', '.join(sorted(table))}")
    segments = load_segments(cfg, preset)
    hedonic = None
    oracle = ws.oracle()
    out = cfg.out / "simulate"
    rows, cell_tables = {}, {}
    for name in names:
        spec = table[name]
        if getattr(args, "seed", None) is not None:
            spec = replace(spec, seed=cfg.seed)
        if getattr(args, "runs", None) is not None:
            spec = replace(spec, n_monte_carlo_runs=cfg.runs)
        if spec.policy2_ufaa_employee_boost > 0 and hedonic is None:
            hedonic = load_hedonic(cfg, preset)
        population = scale_population(ws.households, spec.population_ratio,
                                      np.random.default_rng([spec.seed]))
        state = build_policy_state(ws, spec, hedonic or {})
        model = LocationModel(state.cells, state.surface, segments)
        outcome = run_scenario(population, model, spec, oracle, ws.rates)
        rows[name] = outcome.mean
        cell_tables[name] = outcome.mean_cell_counts
        folder = out / name
        io.write_csv(outcome.per_run, folder / "indicators_per_run.csv")
        io.write_csv(outcome.mean.rename_axis("indicator").reset_index(name="mean"),
                     folder / "indicators_mean.csv")
        io.write_csv(outcome.mean_cell_counts, folder / "cell_counts.csv")
        io.write_csv(pd.concat([r.outcome_frame(ws.cells["cell_id"].to_numpy()).assign(run=r.run_index)
                                for r in outcome.runs], ignore_index=True), folder / "outcomes.csv")
        io.write_csv(_histograms(outcome, state.cells, oracle), folder / "histograms.csv")
        _write_text(folder / "ledger.txt", "\n".join(state.ledger) + "\n")
        print(f"scenario {name}: {len(population)} households, "
              f"median DAA distance {outcome.mean['daa_median']:.0f} m")
    values = pd.DataFrame(rows).T.rename_axis("scenario")
    report = IndicatorReport(values)
    io.write_csv(report.to_frame(), out / "indicators.csv")
    baseline = cfg.baseline if cfg.baseline in values.index else names[0]
    _write_diff_outputs(values, baseline, out, cell_tables)
    return values


def _histograms(outcome, cells, oracle) -> pd.DataFrame:
    edges = np.asarray(DEFAULT_BINS_M, dtype=float)
    rows = []
    for target in ("in_daa", "in_ufaa"):
        shares = np.mean([distance_histogram(
            oracle.to_nearest(cells[target].to_numpy(dtype=bool))[run.final], edges)
            for run in outcome.runs], axis=0)
        for lo, hi, sh in zip(edges[:-1], edges[1:], shares):
            rows.append({"target": target[3:], "bin_from_m": lo, "bin_to_m": hi, "share": sh})
    return pd.DataFrame(rows)


def _write_diff_outputs(values: pd.DataFrame, baseline: str, out: Path,
                        cell_tables: Mapping[str, pd.DataFrame] | None = None) -> str:
    text = scenario_report(values, baseline)
    _write_text(out / "comparison.txt", text)
    io.write_csv(change_frame(values, baseline), out / "changes.csv")
    if cell_tables:
        base = cell_tables[baseline].set_index("cell_id")["mean_households"]
        diff = pd.DataFrame({"cell_id": base.index})
        for name, t in cell_tables.items():
            diff[name] = t.set_index("cell_id")["mean_households"].to_numpy() - base.to_numpy()
        io.write_csv(diff, out / "cell_count_differences.csv")
    print(text)
    return text


def cmd_report_diff(cfg: ProjectConfig, args=None) -> str:
    path = cfg.out / "simulate" / "indicators.csv"
    if not path.exists():
        raise DataError(f"no simulation results at {path}; run 'simulate' first")
    values = pd.read_csv(path, float_precision="round_trip").set_index("scenario")
    requested = list(getattr(args, "scenario", None) or [])
    baseline = requested[0] if requested else cfg.baseline
    if baseline not in values.index:
        raise ConfigError(f"baseline {baseline!r} not among simulated scenarios {list(values.index)}")
    if len(requested) > 1:
        missing = [n for n in requested if n not in values.index]
        if missing:
            raise ConfigError(f"scenario {missing[0]!r} was not simulated")
        values = values.loc[requested]
    cell_tables = {}
    for name in values.index:
        p = cfg.out / "simulate" / str(name) / "cell_counts.csv"
        if p.exists():
            cell_tables[name] = pd.read_csv(p, float_precision="round_trip")
    return _write_diff_outputs(values, baseline, cfg.out / "simulate",
                               cell_tables if len(cell_tables) == len(values) else None)


COMMANDS = {
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "report-diff": cmd_report_diff,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML project configuration")
    common.add_argument("--seed", type=int, metavar="N", help="global seed")
    common.add_argument("--runs", type=int, metavar="N", help="Monte-Carlo runs per scenario")
    common.add_argument("--preset", action="store_true",
                        help="use the published coefficients instead of estimated ones")
    common.add_argument("--scenario", action="append", metavar="NAME",
                        help="scenario to run (repeatable); for report-diff the first is the baseline")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="resloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command](cfg, args)
    except ReslocError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
