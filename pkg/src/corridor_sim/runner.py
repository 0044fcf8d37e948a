"""
Simulation Runner
Single runs, seeded ensembles and resumable parameter sweeps
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from . import dynamics, observables
from .exceptions import AnalysisError, CorridorSimError, SetupError
from .models import RunSpec, SweepSpec, SweepVariant
from .schemas import get_model_profile, phi_normalization
from .state import SnapshotRecord, initialize_swarm
from .store import SweepStore

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


# ----------------------------------------------------------------------------
# Seeds
# ----------------------------------------------------------------------------

def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _as_u64(component: Any) -> int:
    if isinstance(component, Enum):
        component = component.value
    if isinstance(component, (bool, np.bool_)):
        return int(component)
    if isinstance(component, (int, np.integer)):
        return int(component) & MASK64
    if isinstance(component, (float, np.floating)):
        return struct.unpack("<Q", struct.pack("<d", float(component)))[0]
    digest = hashlib.blake2b(str(component).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(base: int, *components: Any) -> int:
    """
    Child seed for a run: a splitmix64 chain over the base seed and each component.

    Integers enter as their low 64 bits, floats as their IEEE-754 bit pattern
    and anything else through an 8-byte BLAKE2b digest of its string form.
    """
    h = _splitmix64(int(base) & MASK64)
    for component in components:
        h = _splitmix64(h ^ _as_u64(component))
    return h


def ensemble_seeds(base: int, runs: int, *grid_key: Any) -> List[int]:
    return [derive_seed(base, *grid_key, index) for index in range(runs)]


# ----------------------------------------------------------------------------
# Runs
# ----------------------------------------------------------------------------

def _records_at(t: int, every: int) -> bool:
    return every > 0 and t % every == 0


def run_single(spec: RunSpec) -> observables.TimeSeries:
    """
    Simulate one run from its seed and record phi(t) every step.

    w(t) (and optionally P(x,t)) are recorded every `record.profile_every`
    steps and snapshots every `record.snapshot_every` steps, both from t = 0.

    With `max_steps` set, a run whose retained window fails the stationarity
    check is extended by one window (steps - warmup) at a time, warmup moving
    along with it, until the window passes or max_steps is reached.
    """
    cfg, arena, record = spec.config, spec.arena, spec.record
    rng = np.random.default_rng(spec.seed)
    normalization = phi_normalization(cfg.model)

    state = initialize_swarm(spec.n, arena, cfg, rng, spec.initial_heading)

    logger.info(f"Run start: model={cfg.model.value} eta={cfg.eta} N={spec.n} seed={spec.seed}")

    horizon = spec.max_steps or spec.steps
    window = spec.steps - spec.warmup
    end, warmup = spec.steps, spec.warmup

    phi = np.empty(horizon + 1)
    phi_x = np.empty(horizon + 1)
    width_times, widths, profiles, snapshots = [], [], [], []

    start = 0
    while True:
        for t in range(start, end + 1):
            if t > 0:
                state = dynamics.advance(state, arena, cfg, rng)
            phi[t] = observables.order_parameter(state, cfg.v0, normalization)
            phi_x[t] = observables.directional_order(state, cfg.v0)

            if _records_at(t, record.profile_every):
                profile = observables.density_profile(state, arena, record.dx)
                width_times.append(t)
                widths.append(observables.cluster_width(profile, arena, record.width_threshold).width)
                if record.keep_profiles:
                    profiles.append(profile)
            if _records_at(t, record.snapshot_every):
                snapshots.append(SnapshotRecord.from_state(state))

        stationary = spec.max_steps is None or observables.check_stationarity([phi[warmup + 1: end + 1]])
        if stationary or end >= horizon:
            break
        extension = min(window, horizon - end)
        logger.info(f"Seed {spec.seed}: phi(t) not stationary by t={end}; extending by {extension} steps")
        start, end, warmup = end + 1, end + extension, warmup + extension

    if not stationary:
        logger.warning(f"Seed {spec.seed}: phi(t) still not stationary at max_steps={horizon}")

    logger.info(f"Run end: seed={spec.seed} steps={end} final phi={phi[end]:.4f}")

    return observables.TimeSeries(
        times=np.arange(end + 1),
        phi=phi[: end + 1],
        phi_x=phi_x[: end + 1],
        width_times=np.array(width_times, dtype=np.int64) if record.profile_every else None,
        widths=np.array(widths) if record.profile_every else None,
        profiles=profiles,
        snapshots=snapshots,
        seed=spec.seed,
        warmup=warmup,
        normalization=normalization,
        metadata={"arena": arena, "model": cfg.model.value, "spec_hash": spec.spec_hash(), "dx": record.dx},
    )


def _run_indexed(index: int, spec: RunSpec) -> observables.TimeSeries:
    try:
        return run_single(spec)
    except SetupError as exc:
        raise SetupError(f"run {index} (seed {spec.seed}): {exc}") from exc


def run_specs(spec: RunSpec, runs: int, grid_key: Sequence[Any] = ()) -> List[RunSpec]:
    """Per-run specifications with seeds derived from spec.seed"""
    return [spec.model_copy(update={"seed": seed}) for seed in ensemble_seeds(spec.seed, runs, *grid_key)]


def run_ensemble_series(
    spec: RunSpec,
    runs: int,
    jobs: int = 1,
    grid_key: Sequence[Any] = (),
) -> List[observables.TimeSeries]:
    """Independent runs, returned in run-index order whatever the pool size"""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    specs = run_specs(spec, runs, grid_key)
    if jobs == 1:
        return [_run_indexed(index, run_spec) for index, run_spec in enumerate(specs)]
    return Parallel(n_jobs=jobs)(
        delayed(_run_indexed)(index, run_spec) for index, run_spec in enumerate(specs)
    )


def summarize_series(spec: RunSpec, series: List[observables.TimeSeries]) -> observables.EnsembleStats:
    """
    Stationary statistics plus, when w(t) was recorded, the growth exponent of the mean width.

    Each series is cut at its own warmup, which is later than spec.warmup for extended runs.
    """
    summary = observables.stationary_stats(series, None, spec.arena)
    if not spec.record.profile_every:
        return summary
    try:
        fit = observables.fit_width_growth(observables.mean_width_curve(series))
    except AnalysisError as exc:
        logger.warning(f"Width growth fit skipped: {exc}")
        fit = None
    return summary.with_fit(fit)


def run_ensemble(
    spec: RunSpec,
    runs: int,
    jobs: int = 1,
    grid_key: Sequence[Any] = (),
) -> observables.EnsembleStats:
    return summarize_series(spec, run_ensemble_series(spec, runs, jobs, grid_key))


# ----------------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    """One grid point of a sweep with its fully resolved run template"""
    variant: SweepVariant
    eta: float
    v0: float
    n: int
    lx: float
    ly: float
    spec: RunSpec

    @property
    def grid_key(self) -> Tuple[Any, ...]:
        return (self.variant.model, self.variant.bc_y, self.eta, self.v0, self.n, self.lx, self.ly)

    def key(self, runs: int, base_seed: int) -> str:
        payload = json.dumps(
            {"spec": self.spec.model_dump(mode="json"), "runs": runs, "base_seed": base_seed},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def row(self, summary: observables.EnsembleStats, runs: int, base_seed: int) -> Dict[str, Any]:
        seeds = ensemble_seeds(base_seed, runs, *self.grid_key)
        return {
            "model": self.variant.label,
            "eta": self.eta,
            "v0": self.v0,
            "Lx": self.lx,
            "Ly": self.ly,
            "N": self.n,
            "rho": self.n / (self.lx * self.ly),
            "phi_stat": summary.phi_stat,
            "var_phi": summary.var_phi,
            "susceptibility": summary.susceptibility,
            "runs": summary.runs,
            "phi_stderr": summary.phi_stderr,
            "stationary": summary.stationary,
            "normalization": summary.normalization.value,
            "alpha": summary.alpha,
            "alpha_stderr": summary.alpha_stderr,
            "base_seed": base_seed,
            "spec_hash": self.spec.spec_hash(),
            "point_key": self.key(runs, base_seed),
            "seeds": " ".join(str(seed) for seed in seeds),
        }


def _point_spec(base: RunSpec, variant: SweepVariant, eta: float, v0: float, n: int, lx: float, ly: float, seed: int) -> RunSpec:
    data = base.model_dump()
    data["config"].update(model=variant.model, eta=eta, v0=v0)
    data["arena"].update(lx=lx, ly=ly, bc_y=variant.bc_y)
    data.update(n=n, seed=seed)
    return RunSpec.model_validate(data)


def expand_sweep(sweep: SweepSpec) -> List[SweepPoint]:
    """
    Grid points in a fixed order: variant, eta, v0, then geometry.

    Models without external noise collapse the eta axis to 0.
    """
    if sweep.sizes:
        geometries = [(size.n, size.lx, size.ly) for size in sweep.sizes]
    else:
        geometries = [(sweep.base.n, sweep.base.arena.lx, ly) for ly in sweep.lys]

    points = []
    for variant in sweep.variants:
        etas = sweep.etas if get_model_profile(variant.model)["noise_defined"] else [0.0]
        for eta in etas:
            for v0 in sweep.v0s:
                for n, lx, ly in geometries:
                    spec = _point_spec(sweep.base, variant, eta, v0, n, lx, ly, sweep.base_seed)
                    points.append(SweepPoint(variant, eta, v0, n, lx, ly, spec))
    return points


def run_sweep(
    sweep: SweepSpec,
    store: Optional[SweepStore] = None,
    jobs: int = 1,
    resume: bool = False,
    progress: bool = True,
) -> pd.DataFrame:
    """
    Run every grid point and upsert one row per point into the store.

    The store is saved after each point, so a failure leaves completed rows
    on disk; with `resume` points already present are skipped.
    """
    store = store if store is not None else SweepStore()
    points = expand_sweep(sweep)
    logger.info(f"Sweep: {len(points)} point(s) x {sweep.runs} run(s)")

    for point in tqdm(points, desc="Sweep", disable=not progress):
        key = point.key(sweep.runs, sweep.base_seed)
        if resume and store.has_point(key):
            logger.info(f"Skipping completed point {point.variant.label} eta={point.eta} v0={point.v0} Ly={point.ly}")
            continue
        try:
            summary = run_ensemble(point.spec, sweep.runs, jobs, point.grid_key)
        except CorridorSimError as exc:
            logger.error(f"Sweep point {point.variant.label} eta={point.eta} failed: {exc}")
            store.save()
            raise
        store.upsert(point.row(summary, sweep.runs, sweep.base_seed))
        store.save()

    return store.table()


def level_plot_matrix(
    table: pd.DataFrame,
    model: str,
    index: str = "Ly",
    columns: str = "eta",
    value: str = "phi_stat",
    where: Optional[Dict[str, float]] = None,
) -> pd.DataFrame:
    """Pivot the sweep table of one variant into a value matrix over two axes"""
    selected = table[table["model"] == model]
    for column, wanted in (where or {}).items():
        selected = selected[np.isclose(selected[column].astype(float), wanted)]
    if selected.empty:
        raise AnalysisError(f"no sweep rows for {model} with {where or {}}")
    return selected.pivot_table(index=index, columns=columns, values=value, aggfunc="mean").sort_index().sort_index(axis=1)
