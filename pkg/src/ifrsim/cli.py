"""Command-line surface: run fault-injection simulations, evaluate the
closed-form redundancy formulas, solve and sweep Markov models, and emit
deterministic plot-ready CSV.

Exit codes: 0 success, 2 input parse/usage error, 3 solver failure,
4 simulation ended Dead, 5 golden-reference mismatch, 6 cycle budget
exhausted.
"""
from __future__ import annotations

import argparse
import sys

from . import formulas
from .faults import ScenarioError, parse_scenario
from .hw import Copy, StageKind
from .isa import AssemblyError, ExecutionError, assemble, run_reference
from .markov import (DEFAULT_TOL, ModelError, SolverError, SweepSpec,
                     build_ifr_pipeline_model, build_simplex_model,
                     build_standby_model, build_tmr_model,
                     death_probability, monte_carlo_death_probability,
                     parse_model, sweep, sweep_model_constant)
from .pipeline import CoreConfig, Outcome, run_core
from .report import CsvReport, TOOL_ID, fmt_float

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_DEAD = 4
EXIT_MISMATCH = 5
EXIT_EXHAUSTED = 6

DEFAULT_AUX_RATIO = 1e-3  # lambda_sw = lambda_ctrl = ratio * lambda_p for builtins

_CONFIG_KEYS = ("clock_hz", "permanent_threshold", "flush_cycles",
                "powerup_cycles_per_block", "rng_seed")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_PARSE):
        super().__init__(message)
        self.code = code


def _parse_range(spec: str, *, integer: bool = False) -> list:
    """Parse 'lo..hi[:step]' or a single value. Default step spans the range
    in ten increments (or 1 for integer ranges)."""
    try:
        if ".." not in spec:
            return [int(spec, 0) if integer else float(spec)]
        body, _, step_text = spec.partition(":")
        lo_text, _, hi_text = body.partition("..")
        if integer:
            lo, hi = int(lo_text, 0), int(hi_text, 0)
            step = int(step_text, 0) if step_text else 1
        else:
            lo, hi = float(lo_text), float(hi_text)
            step = float(step_text) if step_text else (hi - lo) / 10.0
    except ValueError:
        raise CliError(f"bad range {spec!r}; expected 'lo..hi[:step]' or a value") from None
    if step <= 0 or hi < lo:
        raise CliError(f"bad range {spec!r}; need lo <= hi and step > 0")
    values = []
    count = int(round((hi - lo) / step)) + 1
    for i in range(count):
        value = lo + i * step
        if value > hi * (1 + 1e-12) + 1e-15:
            break
        values.append(value)
    return values


def _load_config(args) -> CoreConfig:
    overrides: dict = {}
    if getattr(args, "config", None):
        try:
            text = open(args.config, encoding="utf-8").read()
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in _CONFIG_KEYS:
                raise CliError(f"config line {lineno}: expected '<key>=<value>' with key "
                               f"in {', '.join(_CONFIG_KEYS)}")
            overrides[key] = value.strip()
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            overrides[key] = flag
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    try:
        kwargs = {}
        for key, value in overrides.items():
            kwargs[key] = float(value) if key == "clock_hz" else int(float(value))
        return CoreConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad configuration: {exc}") from None


def _emit(report: CsvReport, args) -> None:
    text = report.render()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _config_meta(report: CsvReport, config: CoreConfig) -> None:
    report.add_meta("clock_hz", fmt_float(config.clock_hz))
    report.add_meta("permanent_threshold", config.permanent_threshold)
    report.add_meta("flush_cycles", config.flush_cycles)
    report.add_meta("powerup_cycles_per_block", config.powerup_cycles_per_block)
    report.add_meta("rng_seed", config.rng_seed)


def cmd_sim(args) -> int:
    config = _load_config(args)
    try:
        program = assemble(open(args.program, encoding="utf-8").read())
    except (OSError, AssemblyError) as exc:
        raise CliError(f"program: {exc}") from None
    try:
        scenario = parse_scenario(open(args.scenario, encoding="utf-8").read())
    except (OSError, ScenarioError) as exc:
        raise CliError(f"scenario: {exc}") from None

    sim = run_core(program, config, scenario, max_cycles=args.max_cycles)

    golden = None
    if sim.outcome is Outcome.COMPLETED:
        try:
            ref_state, _ = run_reference(program, args.max_cycles)
            golden = sim.final_state == ref_state
        except ExecutionError:
            golden = False

    report = CsvReport(columns=["fault_id", "class", "stage", "detect_cycle",
                                "swap_complete_cycle", "recovery_cycles", "recovery_us"])
    report.add_meta("tool", TOOL_ID)
    report.add_meta("subcommand", "sim")
    report.add_meta("program", args.program)
    report.add_meta("scenario", args.scenario)
    _config_meta(report, config)
    report.add_meta("max_cycles", args.max_cycles)
    report.add_meta("outcome", sim.outcome.value)
    report.add_meta("total_cycles", sim.total_cycles)
    report.add_meta("golden_match", "na" if golden is None else golden)
    for (kind, copy), stress in sim.stress.blocks.items():
        report.add_meta(f"stress_{kind.value}_{copy.value}",
                        f"on:{stress.on_cycles} off:{stress.off_cycles} "
                        f"powering:{stress.powering_cycles}")
    for event in sim.events:
        cycles = event.recovery_cycles
        report.add_row(event.fault_id, event.classified, event.stage.value,
                       event.detect_cycle, event.swap_complete_cycle, cycles,
                       config.cycles_to_us(cycles) if cycles is not None else None)
    _emit(report, args)

    summary = (f"outcome={sim.outcome.value} cycles={sim.total_cycles} "
               f"events={len(sim.events)} golden="
               f"{'na' if golden is None else str(golden).lower()}")
    print(summary, file=sys.stderr)
    if sim.outcome is Outcome.DEAD:
        return EXIT_DEAD
    if sim.outcome is Outcome.EXHAUSTED:
        return EXIT_EXHAUSTED
    if golden is False:
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_formulas(args) -> int:
    groups = [flag for flag in ("tmr_standby", "ifr", "ifr_pipeline", "availability", "exp")
              if getattr(args, "_group_" + flag)]
    if len(groups) != 1:
        raise CliError("choose exactly one formula group per invocation: "
                       "--tmr/--standby, --ifr, --ifr-pipeline, --availability, or --exp")
    group = groups[0]

    report = CsvReport(columns=[])
    report.add_meta("tool", TOOL_ID)
    report.add_meta("subcommand", "formulas")
    failures = 0

    if group == "tmr_standby":
        grid = _parse_range(args.component_r)
        columns = ["R"]
        if args.tmr:
            columns.append("r_tmr")
        if args.standby:
            columns.append("r_standby")
        report.columns = columns
        report.add_meta("grid_r", args.component_r)
        for r in grid:
            row = [r]
            try:
                if args.tmr:
                    row.append(formulas.r_tmr(r))
                if args.standby:
                    row.append(formulas.r_standby(r))
                report.add_row(*row)
            except ValueError as exc:
                failures += 1
                print(f"R={r}: {exc}", file=sys.stderr)
    elif group == "ifr":
        spares = [int(s) for s in _parse_range(args.spares, integer=True)]
        report.columns = ["spares", "r_ifr"]
        report.add_meta("rb", fmt_float(args.rb))
        for s in spares:
            try:
                report.add_row(s, formulas.r_ifr(args.rb, s))
            except ValueError as exc:
                failures += 1
                print(f"s={s}: {exc}", file=sys.stderr)
    elif group == "ifr_pipeline":
        grid = _parse_range(args.rp)
        report.columns = ["Rp", "coverage", "Rsw", "Rctrl", "r_ifr_pipeline"]
        for rp in grid:
            try:
                value = formulas.r_ifr_pipeline(rp, args.coverage, args.rsw, args.rctrl)
                report.add_row(rp, args.coverage, args.rsw, args.rctrl, value)
            except ValueError as exc:
                failures += 1
                print(f"Rp={rp}: {exc}", file=sys.stderr)
    elif group == "availability":
        report.columns = ["mttf", "mttr", "availability"]
        try:
            report.add_row(args.mttf, args.mttr, formulas.availability(args.mttf, args.mttr))
        except ValueError as exc:
            failures += 1
            print(str(exc), file=sys.stderr)
    else:  # exp
        report.columns = ["rate", "hours", "reliability"]
        try:
            report.add_row(args.rate, args.hours,
                           formulas.reliability_from_rate(args.rate, args.hours))
        except ValueError as exc:
            failures += 1
            print(str(exc), file=sys.stderr)

    _emit(report, args)
    return EXIT_PARSE if failures else EXIT_OK


_BUILTIN_SINGLE = {"simplex": build_simplex_model, "tmr": build_tmr_model,
                   "standby": build_standby_model}


def _ifr_builder(aux_ratio: float):
    def build(lam: float):
        return build_ifr_pipeline_model(lam, lam * aux_ratio, lam * aux_ratio)
    return build


def _builtin_builder(name: str, aux_ratio: float):
    if name in _BUILTIN_SINGLE:
        return _BUILTIN_SINGLE[name]
    if name in ("ifr", "ifr-pipeline", "ifr_pipeline"):
        return _ifr_builder(aux_ratio)
    raise CliError(f"unknown builtin model {name!r}; choose from simplex, tmr, "
                   "standby, ifr-pipeline")


def cmd_markov(args) -> int:
    report = CsvReport(columns=[])
    report.add_meta("tool", TOOL_ID)
    report.add_meta("subcommand", "markov")
    report.add_meta("mission_time_hours", fmt_float(args.T))
    report.add_meta("tol", fmt_float(args.tol))
    status = EXIT_OK

    mc_cols = ["mc_estimate", "mc_ci99"] if args.mc else []
    if args.mc:
        report.add_meta("mc_trials", args.mc)
        report.add_meta("mc_seed", args.seed if args.seed is not None else 0)

    def mc_cells(model):
        if not args.mc:
            return []
        estimate = monte_carlo_death_probability(
            model, args.T, args.mc, args.seed if args.seed is not None else 0)
        return [estimate.estimate, estimate.ci99]

    if args.builtin:
        builder = _builtin_builder(args.builtin, args.aux_ratio)
        report.add_meta("model", args.builtin)
        report.add_meta("aux_ratio", fmt_float(args.aux_ratio))
        if args.sweep:
            lo, hi, points = args.sweep
            spec = SweepSpec("lambda", lo, hi, int(points), args.T, args.tol)
            curve = sweep(builder, spec)
            report.columns = ["lambda", "lower", "upper", "width_rel", "error"] + mc_cols
            for point in curve.points:
                if point.error:
                    status = EXIT_SOLVER
                    report.add_row(point.lam, None, None, None, "solver_failure",
                                   *([None, None] if args.mc else []))
                    print(f"lambda={point.lam}: {point.error}", file=sys.stderr)
                    continue
                width = (point.upper - point.lower) / point.upper if point.upper else 0.0
                report.add_row(point.lam, point.lower, point.upper, width, None,
                               *mc_cells(builder(point.lam)))
        else:
            if args.lam is None:
                raise CliError("builtin single-point mode needs --lam (or use --sweep)")
            model = builder(args.lam)
            bracket = death_probability(model, args.T, args.tol)
            report.columns = ["lambda", "lower", "upper", "width_rel"] + mc_cols
            report.add_row(args.lam, bracket.lower, bracket.upper,
                           bracket.relative_width, *mc_cells(model))
    else:
        try:
            model = parse_model(open(args.model, encoding="utf-8").read())
        except (OSError, ModelError) as exc:
            raise CliError(f"model: {exc}") from None
        report.add_meta("model", args.model)
        if args.sweep_const:
            name, lo, hi, points = args.sweep_const
            spec = SweepSpec(name, float(lo), float(hi), int(points), args.T, args.tol)
            curve = sweep_model_constant(model, spec)
            report.columns = [name, "lower", "upper", "width_rel", "error"] + mc_cols
            for point in curve.points:
                if point.error:
                    status = EXIT_SOLVER
                    report.add_row(point.lam, None, None, None, "solver_failure",
                                   *([None, None] if args.mc else []))
                    continue
                width = (point.upper - point.lower) / point.upper if point.upper else 0.0
                report.add_row(point.lam, point.lower, point.upper, width, None,
                               *mc_cells(model.with_constant(name, point.lam)))
        else:
            bracket = death_probability(model, args.T, args.tol)
            report.columns = ["lower", "upper", "width_rel"] + mc_cols
            report.add_row(bracket.lower, bracket.upper, bracket.relative_width,
                           *mc_cells(model))

    _emit(report, args)
    return status


def cmd_compare(args) -> int:
    lo, hi, points = args.sweep
    spec_kwargs = dict(lo=lo, hi=hi, points=int(points),
                       mission_time=args.T, tol=args.tol)
    builders = [("simplex", build_simplex_model), ("tmr", build_tmr_model),
                ("standby", build_standby_model), ("ifr", _ifr_builder(args.aux_ratio))]
    curves = {name: sweep(builder, SweepSpec("lambda", **spec_kwargs))
              for name, builder in builders}

    report = CsvReport(columns=["lambda"] + [f"{name}_{side}"
                                             for name, _ in builders
                                             for side in ("lower", "upper")])
    report.add_meta("tool", TOOL_ID)
    report.add_meta("subcommand", "compare")
    report.add_meta("mission_time_hours", fmt_float(args.T))
    report.add_meta("tol", fmt_float(args.tol))
    report.add_meta("aux_ratio", fmt_float(args.aux_ratio))
    status = EXIT_OK
    for i in range(int(points)):
        cells = [curves["simplex"].points[i].lam]
        for name, _ in builders:
            point = curves[name].points[i]
            if point.error:
                status = EXIT_SOLVER
                cells.extend([None, None])
            else:
                cells.extend([point.lower, point.upper])
        report.add_row(*cells)
    _emit(report, args)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ifrsim",
        description="Fault-injectable repairable-core simulator and "
                    "mission-reliability calculators")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the CSV report to this path (default stdout)")
        p.add_argument("--seed", type=int, help="seed recorded in reports and used "
                                                "by Monte Carlo sampling")

    p_sim = sub.add_parser("sim", help="run a program under a fault scenario")
    p_sim.add_argument("program", help="assembly source file")
    p_sim.add_argument("scenario", help="fault scenario file")
    p_sim.add_argument("--config", help="key=value config file overriding core defaults")
    p_sim.add_argument("--clock-hz", dest="clock_hz", type=float)
    p_sim.add_argument("--permanent-threshold", dest="permanent_threshold", type=int)
    p_sim.add_argument("--flush-cycles", dest="flush_cycles", type=int)
    p_sim.add_argument("--powerup-cycles-per-block", dest="powerup_cycles_per_block", type=int)
    p_sim.add_argument("--max-cycles", dest="max_cycles", type=int, default=100_000)
    common(p_sim)
    p_sim.set_defaults(func=cmd_sim)

    p_form = sub.add_parser("formulas", help="tabulate the closed-form redundancy formulas")
    p_form.add_argument("--tmr", action="store_true", help="TMR reliability over the R grid")
    p_form.add_argument("--standby", action="store_true", help="standby reliability over the R grid")
    p_form.add_argument("-R", "--component-r", default="0..1:0.1",
                        help="component reliability grid 'lo..hi[:step]' (default 0..1:0.1)")
    p_form.add_argument("--ifr", action="store_true", help="cold-spare reliability over a spare-count range")
    p_form.add_argument("--rb", type=float, default=0.9, help="block reliability for --ifr")
    p_form.add_argument("-s", "--spares", default="0..3", help="spare count range for --ifr")
    p_form.add_argument("--ifr-pipeline", action="store_true", dest="ifr_pipeline")
    p_form.add_argument("--rp", default="0.9", help="stage reliability (value or range) for --ifr-pipeline")
    p_form.add_argument("--coverage", type=float, default=1.0)
    p_form.add_argument("--rsw", type=float, default=1.0)
    p_form.add_argument("--rctrl", type=float, default=1.0)
    p_form.add_argument("--availability", action="store_true")
    p_form.add_argument("--mttf", type=float, default=999.0)
    p_form.add_argument("--mttr", type=float, default=1.0)
    p_form.add_argument("--exp", action="store_true",
                        help="constant-rate survival probability exp(-rate*hours)")
    p_form.add_argument("--rate", type=float, default=1e-6, help="failures per hour for --exp")
    p_form.add_argument("--hours", type=float, default=1000.0, help="mission time for --exp")
    common(p_form)
    p_form.set_defaults(func=cmd_formulas)

    p_markov = sub.add_parser("markov", help="solve or sweep a dependability model")
    src = p_markov.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=["simplex", "tmr", "standby", "ifr-pipeline"])
    src.add_argument("--model", help="model description file")
    p_markov.add_argument("--lam", type=float, help="failure rate per hour for builtin models")
    p_markov.add_argument("--sweep", nargs=3, type=float, metavar=("LO", "HI", "POINTS"),
                          help="log-spaced rate sweep for builtin models")
    p_markov.add_argument("--sweep-const", nargs=4, metavar=("NAME", "LO", "HI", "POINTS"),
                          help="sweep a named constant of a model file")
    p_markov.add_argument("--T", type=float, default=1000.0, help="mission time in hours")
    p_markov.add_argument("--tol", type=float, default=DEFAULT_TOL,
                          help="relative bound width target (default 0.05)")
    p_markov.add_argument("--aux-ratio", dest="aux_ratio", type=float, default=DEFAULT_AUX_RATIO,
                          help="switch/controller failure rate as a fraction of the stage "
                               "rate for the builtin ifr-pipeline model")
    p_markov.add_argument("--mc", type=int, help="append a Monte Carlo oracle column with "
                                                 "this many trials")
    common(p_markov)
    p_markov.set_defaults(func=cmd_markov)

    p_cmp = sub.add_parser("compare", help="side-by-side failure-probability bounds for "
                                           "simplex, TMR, standby, and the repairable pipeline")
    p_cmp.add_argument("--sweep", nargs=3, type=float, metavar=("LO", "HI", "POINTS"),
                       default=[1e-6, 1e-2, 25])
    p_cmp.add_argument("--T", type=float, default=1000.0)
    p_cmp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p_cmp.add_argument("--aux-ratio", dest="aux_ratio", type=float, default=DEFAULT_AUX_RATIO)
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "formulas":
        args._group_tmr_standby = args.tmr or args.standby
        args._group_ifr = args.ifr
        args._group_ifr_pipeline = args.ifr_pipeline
        args._group_availability = args.availability
        args._group_exp = args.exp
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
