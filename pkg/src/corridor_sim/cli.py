"""
Command Line Interface
simulate, sweep and analyze subcommands over the runner and serialization layers
"""

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__, observables, runner
from .config import Settings, configure_logging
from .exceptions import AnalysisError, CorridorSimError, MalformedInputError
from .models import BoundaryRule, ModelKind, RunSpec, SweepSpec, SweepVariant
from .schemas import get_model_profile
from .serialization import (
    build_manifest,
    dump_spec,
    find_snapshots,
    load_spec,
    profiles_frame,
    read_manifest,
    read_series,
    read_snapshots,
    write_level_matrix,
    write_manifest,
    write_series,
    write_snapshots,
    write_table,
)
from .state import SwarmState
from .store import SweepStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------

def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corridor-sim",
        description="Vicsek, social-force and combined dynamics in a corridor",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level (default: %(default)s)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config document")
    common.add_argument("--out", type=Path, default=settings.output_dir, help="Output directory (default: %(default)s)")
    common.add_argument("--seed", type=int, help="Seed (base seed for sweeps)")
    common.add_argument("--jobs", type=_positive_int, default=settings.jobs, help="Worker processes for runs (default: %(default)s)")
    common.add_argument("--steps", type=int, help="Time steps per run")
    common.add_argument("--warmup", type=int, help="Steps discarded before averaging (default: half of --steps)")
    common.add_argument("--runs", type=_positive_int, help="Independent runs")
    common.add_argument("--max-steps", type=_positive_int, help="Extend non-stationary runs up to this many steps")

    simulate = sub.add_parser("simulate", parents=[common], help="Run one spec, optionally as an ensemble")
    simulate.add_argument("--model", choices=[kind.value for kind in ModelKind], help="Dynamics")
    simulate.add_argument("--eta", type=float, help="Noise amplitude in [0, 1]")
    simulate.add_argument("--v0", type=float, help="Speed (m/s)")
    simulate.add_argument("--ly", type=float, help="Corridor width (m)")
    simulate.add_argument("--snapshot-every", type=int, help="Snapshot interval in steps (0 disables)")
    simulate.add_argument("--profile-every", type=int, help="w(t) interval in steps (0 disables)")
    simulate.add_argument("--dx", type=float, help="Profile bin width (m)")
    simulate.add_argument(
        "--keep-profiles", action="store_true", default=None,
        help="Write P(x,t) at every --profile-every step to density_profiles.csv",
    )
    simulate.add_argument(
        "--binary-snapshots", action="store_true", default=settings.snapshot_binary,
        help="Write snapshots as a structured .npy array",
    )

    sweep = sub.add_parser("sweep", parents=[common], help="Run a parameter sweep")
    sweep.add_argument("--resume", action="store_true", help="Skip points already in sweep.csv")
    sweep.add_argument("--model", choices=[kind.value for kind in ModelKind], help="Single model; replaces the variants")
    sweep.add_argument("--eta", type=float, nargs="+", help="Noise values")
    sweep.add_argument("--v0", type=float, nargs="+", help="Speeds (m/s)")
    sweep.add_argument("--ly", type=float, nargs="+", help="Corridor widths (m)")

    analyze = sub.add_parser("analyze", help="Profiles, w(t) and growth exponents from run directories")
    analyze.add_argument("series_dir", type=Path, help="Directory holding run directories")
    analyze.add_argument("--out", type=Path, help="Output directory (default: series_dir)")
    analyze.add_argument("--fit-width", action="store_true", help="Require w(t) in every run and fit it")
    analyze.add_argument("--dx", type=float, help="Profile bin width (m); default from each manifest")
    analyze.add_argument("--t-min", type=float, default=observables.DEFAULT_FIT_T_MIN, help="Fit window start")
    analyze.add_argument("--t-max", type=float, help="Fit window end")
    analyze.add_argument(
        "--absolute-width", action="store_true",
        help="Fit w(t) itself instead of the spread w(t) - w(0)",
    )

    return parser


# ----------------------------------------------------------------------------
# Spec resolution
# ----------------------------------------------------------------------------

def _apply_run_overrides(data: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Fold command-line overrides into a RunSpec document"""
    config = data.setdefault("config", {})
    arena = data.setdefault("arena", {})
    record = data.setdefault("record", {})

    model = getattr(args, "model", None)
    if model is not None:
        config["model"] = model
        profile = get_model_profile(ModelKind(model))
        if profile["wall_forces"] and arena.get("bc_y", BoundaryRule.PERIODIC.value) != BoundaryRule.BOUNCE_BACK.value:
            arena["bc_y"] = BoundaryRule.BOUNCE_BACK.value
            logger.info(f"Model {model} has walls; using bounce-back along y")
        if not profile["noise_defined"] and getattr(args, "eta", None) is None:
            config["eta"] = 0.0

    for flag, section, key in (
        ("eta", config, "eta"), ("v0", config, "v0"), ("ly", arena, "ly"),
        ("snapshot_every", record, "snapshot_every"), ("profile_every", record, "profile_every"),
        ("dx", record, "dx"), ("keep_profiles", record, "keep_profiles"), ("max_steps", data, "max_steps"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            section[key] = value

    if args.seed is not None:
        data["seed"] = args.seed
    if args.steps is not None:
        data["steps"] = args.steps
        data["warmup"] = args.warmup if args.warmup is not None else args.steps // 2
    elif args.warmup is not None:
        data["warmup"] = args.warmup
    return data


def resolve_run_spec(args: argparse.Namespace) -> RunSpec:
    base = load_spec(args.config, RunSpec) if args.config else RunSpec()
    return RunSpec.model_validate(_apply_run_overrides(base.model_dump(mode="json"), args))


def resolve_sweep_spec(args: argparse.Namespace) -> SweepSpec:
    sweep = load_spec(args.config, SweepSpec) if args.config else SweepSpec()
    data = sweep.model_dump(mode="json")
    if args.runs is not None:
        data["runs"] = args.runs
    if args.seed is not None:
        data["base_seed"] = args.seed
    if args.steps is not None:
        data["base"]["steps"] = args.steps
        data["base"]["warmup"] = args.warmup if args.warmup is not None else args.steps // 2
    elif args.warmup is not None:
        data["base"]["warmup"] = args.warmup
    if args.max_steps is not None:
        data["base"]["max_steps"] = args.max_steps

    if args.model is not None:
        # the base spec must validate on its own, so it follows the chosen model
        profile = get_model_profile(ModelKind(args.model))
        bc_y = BoundaryRule.BOUNCE_BACK if profile["wall_forces"] else BoundaryRule.PERIODIC
        data["variants"] = [{"model": args.model, "bc_y": bc_y.value}]
        data["base"]["config"]["model"] = args.model
        data["base"]["arena"]["bc_y"] = bc_y.value
        if not profile["noise_defined"]:
            data["base"]["config"]["eta"] = 0.0
    for flag, key in (("eta", "etas"), ("v0", "v0s"), ("ly", "lys")):
        values = getattr(args, flag, None)
        if values is not None:
            data[key] = list(values)
    return SweepSpec.model_validate(data)


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------

def write_run_directory(directory: Path, spec: RunSpec, series: observables.TimeSeries, binary: bool) -> List[str]:
    directory.mkdir(parents=True, exist_ok=True)
    files = [write_series(series, directory / "series.csv").name]
    if spec.record.snapshot_every:
        files.append(write_snapshots(series.snapshots, directory / "snapshots.csv", binary=binary).name)
    if series.profiles:
        files.append(write_table(profiles_frame(series.profiles), directory / "density_profiles.csv").name)
    manifest = build_manifest(spec, [spec.seed], files)
    manifest["steps_run"] = int(series.times[-1])
    manifest["warmup_used"] = series.warmup if series.warmup is not None else spec.warmup
    write_manifest(manifest, directory / "manifest.json")
    return files


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = resolve_run_spec(args)
    runs = args.runs or 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_spec(spec, out / "config.json")

    if runs == 1:
        series = runner.run_single(spec)
        write_run_directory(out, spec, series, args.binary_snapshots)
        summary = runner.summarize_series(spec, [series])
        logger.info(f"phi_stat={summary.phi_stat:.6f} var_phi={summary.var_phi:.3e} -> {out}")
        return EXIT_OK

    specs = runner.run_specs(spec, runs)
    series_list = runner.run_ensemble_series(spec, runs, args.jobs)
    for index, (run_spec, series) in enumerate(zip(specs, series_list)):
        write_run_directory(out / f"run_{index:03d}", run_spec, series, args.binary_snapshots)

    summary = runner.summarize_series(spec, series_list)
    write_table(pd.DataFrame([summary.to_dict()]), out / "ensemble.csv")
    write_manifest(build_manifest(spec, [s.seed for s in specs], ["ensemble.csv"]), out / "manifest.json")
    logger.info(f"{runs} runs: phi_stat={summary.phi_stat:.6f} susceptibility={summary.susceptibility:.3e} -> {out}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

def write_level_matrices(table: pd.DataFrame, sweep: SweepSpec, out: Path) -> List[Path]:
    """phi_stat over (eta, Ly) and (eta, v0) for every variant whose axes vary"""
    written = []
    for variant in sweep.variants:
        label = variant.label
        etas = table.loc[table["model"] == label, "eta"].unique()
        if len(etas) < 2:
            continue
        if len(sweep.lys) > 1 and not sweep.sizes:
            matrix = runner.level_plot_matrix(table, label, "Ly", "eta", where={"v0": sweep.v0s[0]})
            written.append(write_level_matrix(matrix, out / f"levels_{label}_eta_ly.csv"))
        if len(sweep.v0s) > 1:
            ly = sweep.sizes[0].ly if sweep.sizes else sweep.lys[0]
            matrix = runner.level_plot_matrix(table, label, "v0", "eta", where={"Ly": ly})
            written.append(write_level_matrix(matrix, out / f"levels_{label}_eta_v0.csv"))
    return written


def cmd_sweep(args: argparse.Namespace) -> int:
    sweep = resolve_sweep_spec(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_spec(sweep, out / "sweep_config.json")

    store = SweepStore(out / "sweep.csv")
    if args.resume:
        store.load()
    table = runner.run_sweep(sweep, store, jobs=args.jobs, resume=args.resume)
    matrices = write_level_matrices(table, sweep, out)

    manifest = build_manifest(sweep.base, [sweep.base_seed], ["sweep.csv"] + [path.name for path in matrices])
    manifest["sweep"] = sweep.model_dump(mode="json")
    write_manifest(manifest, out / "manifest.json")
    logger.info(f"Sweep finished: {len(table)} row(s) in {out / 'sweep.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# analyze
# ----------------------------------------------------------------------------

def find_run_directories(root: Path) -> List[Path]:
    """Directories holding both manifest.json and series.csv, sorted"""
    found = [path.parent for path in root.rglob("series.csv") if (path.parent / "manifest.json").exists()]
    return sorted(set(found))


def _profiles_from_snapshots(path: Path, spec: RunSpec, dx: float) -> List[observables.ProfileHistogram]:
    profiles = []
    for record in read_snapshots(path):
        state = SwarmState(record.positions, record.velocities, record.headings, time=record.time)
        profiles.append(observables.density_profile(state, spec.arena, dx))
    return profiles


def cmd_analyze(args: argparse.Namespace) -> int:
    root = Path(args.series_dir)
    out = Path(args.out) if args.out else root
    out.mkdir(parents=True, exist_ok=True)

    directories = find_run_directories(root)
    if not directories:
        raise MalformedInputError(str(root), "no run directories (manifest.json + series.csv) found")

    groups: Dict[tuple, List[observables.TimeSeries]] = defaultdict(list)
    resolutions: Dict[tuple, float] = {}
    profile_frames = []
    for directory in directories:
        spec = RunSpec.model_validate(read_manifest(directory / "manifest.json")["spec"])
        series = read_series(directory / "series.csv")
        label = SweepVariant(model=spec.config.model, bc_y=spec.arena.bc_y).label

        snapshots = find_snapshots(directory)
        if snapshots is not None:
            profiles = _profiles_from_snapshots(snapshots, spec, args.dx or spec.record.dx)
            frame = profiles_frame(profiles)
            frame.insert(0, "run", str(directory.relative_to(root)))
            profile_frames.append(frame)

        if args.fit_width and not series.has_widths:
            raise MalformedInputError(str(directory / "series.csv"), "no w column; simulate with --profile-every", 1)
        groups[(label, spec.config.eta)].append(series)
        resolutions[(label, spec.config.eta)] = spec.record.dx

    if profile_frames:
        write_table(pd.concat(profile_frames, ignore_index=True), out / "profiles.csv")

    width_frames, fit_rows = [], []
    for (label, eta), members in sorted(groups.items()):
        if not any(s.has_widths for s in members):
            continue
        curve = observables.mean_width_curve(members)
        width_frames.append(pd.DataFrame({"model": label, "eta": eta, "t": curve.width_times, "w_mean": curve.widths}))
        try:
            fit = observables.fit_width_growth(
                curve, args.t_min, args.t_max,
                excess=not args.absolute_width, resolution=resolutions[(label, eta)],
            )
        except AnalysisError as exc:
            if args.fit_width:
                raise
            logger.warning(f"No fit for {label} eta={eta}: {exc}")
            continue
        fit_rows.append({
            "model": label, "eta": eta, "runs": len(members), "alpha": fit.alpha, "stderr": fit.stderr,
            "prefactor": fit.prefactor, "t_min": fit.t_min, "t_max": fit.t_max,
        })

    if width_frames:
        write_table(pd.concat(width_frames, ignore_index=True), out / "widths.csv")
    fit_columns = ["model", "eta", "runs", "alpha", "stderr", "prefactor", "t_min", "t_max"]
    write_table(pd.DataFrame(fit_rows, columns=fit_columns), out / "fits.csv")
    logger.info(f"Analyzed {len(directories)} run(s) in {len(groups)} group(s) -> {out}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "analyze": cmd_analyze}


def _describe_validation(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error["loc"])
        parts.append(f"{location}: {error['msg']}" if location else error["msg"])
    return "; ".join(parts)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    settings = Settings()
    args = build_parser(settings).parse_args(argv)
    configure_logging(args.log_level)

    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: invalid configuration: {_describe_validation(exc)}", file=sys.stderr)
        return EXIT_INVALID
    except (MalformedInputError, AnalysisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CorridorSimError as exc:
        logger.error(f"{args.command} failed: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
