"""
Observables
Order parameter, stationary statistics, density profiles, cluster width and growth-exponent fits
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from functools import reduce
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import AnalysisError
from .models import Arena, BoundaryRule, PhiNormalization
from .state import SnapshotRecord, SwarmState

logger = logging.getLogger(__name__)

DEFAULT_FIT_T_MIN = 10.0
MIN_FIT_POINTS = 5
STATIONARITY_SIGMAS = 3.0
STATIONARITY_BLOCKS = 10


@dataclass(frozen=True)
class ProfileHistogram:
    """Fraction of particles per bin [k dx, (k+1) dx) along the corridor"""
    dx: float
    values: np.ndarray
    n: int
    time: int = 0

    @property
    def nbins(self) -> int:
        return len(self.values)

    @property
    def bin_starts(self) -> np.ndarray:
        return self.dx * np.arange(self.nbins)

    @property
    def length(self) -> float:
        return self.dx * self.nbins


@dataclass(frozen=True)
class ClusterWidth:
    width: float
    empty: bool = False


@dataclass(frozen=True)
class PowerLawFit:
    """w = prefactor * t**alpha over [t_min, t_max]"""
    alpha: float
    stderr: float
    prefactor: float
    n_points: int
    t_min: float
    t_max: float


@dataclass
class TimeSeries:
    """
    Per-step record of a run.

    phi (and phi_x when present) share `times`; w(t) and profiles are
    recorded on their own grid `width_times`. `warmup` is the warmup the run
    ended with, which moves forward when the run was extended.
    """
    times: np.ndarray
    phi: np.ndarray
    phi_x: Optional[np.ndarray] = None
    width_times: Optional[np.ndarray] = None
    widths: Optional[np.ndarray] = None
    profiles: List[ProfileHistogram] = field(default_factory=list)
    snapshots: List[SnapshotRecord] = field(default_factory=list)
    seed: Optional[int] = None
    warmup: Optional[int] = None
    normalization: PhiNormalization = PhiNormalization.N_V0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi_x is not None:
            self.phi_x = np.asarray(self.phi_x, dtype=float)
        if self.widths is not None:
            self.widths = np.asarray(self.widths, dtype=float)
            self.width_times = np.asarray(self.width_times, dtype=np.int64)
            if len(self.widths) != len(self.width_times):
                raise AnalysisError("widths and width_times must have equal length")
        if len(self.times) != len(self.phi):
            raise AnalysisError("times and phi must have equal length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise AnalysisError("time indices must be strictly increasing")

    @property
    def has_widths(self) -> bool:
        return self.widths is not None and len(self.widths) > 0

    def retained(self, warmup: Optional[int] = None) -> np.ndarray:
        """phi(t) for t > warmup (default: the run's own warmup, else half of the last time index)"""
        if warmup is None:
            warmup = self.warmup if self.warmup is not None else default_warmup(self)
        return self.phi[self.times > warmup]


@dataclass(frozen=True)
class EnsembleStats:
    """Cross-run aggregates of the pooled post-warmup phi samples"""
    phi_stat: float
    var_phi: float
    susceptibility: float
    phi_stderr: float
    runs: int
    samples: int
    stationary: bool
    normalization: PhiNormalization = PhiNormalization.N_V0
    alpha: Optional[float] = None
    alpha_stderr: Optional[float] = None

    def with_fit(self, fit: Optional[PowerLawFit]) -> "EnsembleStats":
        if fit is None:
            return self
        return replace(self, alpha=fit.alpha, alpha_stderr=fit.stderr)

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["normalization"] = self.normalization.value
        return out


def default_warmup(series: TimeSeries) -> int:
    return int(series.times[-1]) // 2 if len(series.times) else 0


# ----------------------------------------------------------------------------
# Order
# ----------------------------------------------------------------------------

def order_parameter(state: SwarmState, v0: float, normalization: PhiNormalization = PhiNormalization.N_V0) -> float:
    """|sum v_i| / (N v0), or / sum |v_i| for the speed-sum normalisation"""
    if state.n == 0:
        raise AnalysisError("order parameter is undefined for an empty system")
    resultant = float(np.hypot(*state.velocities.sum(axis=0)))
    if normalization == PhiNormalization.SPEED_SUM:
        total = float(state.speeds().sum())
        return resultant / total if total > 0.0 else 0.0
    return resultant / (state.n * v0)


def directional_order(state: SwarmState, v0: float, direction=(1.0, 0.0)) -> float:
    """Mean velocity projected on `direction`, in units of v0 (signed)"""
    if state.n == 0:
        raise AnalysisError("directional order is undefined for an empty system")
    return float(np.mean(state.velocities @ np.asarray(direction, dtype=float)) / v0)


# ----------------------------------------------------------------------------
# Stationary statistics
# ----------------------------------------------------------------------------

def _block_means(values: np.ndarray, blocks: int) -> np.ndarray:
    size = len(values) // blocks
    if size < 2:
        return values
    return values[: size * blocks].reshape(blocks, size).mean(axis=1)


def check_stationarity(
    windows: Sequence[np.ndarray],
    sigmas: float = STATIONARITY_SIGMAS,
    blocks: int = STATIONARITY_BLOCKS,
) -> bool:
    """
    Compare the first and second half of each retained window.

    Each half is cut into `blocks` batch means, pooled over runs, and the
    window counts as stationary when the two half means differ by at most
    `sigmas` standard errors of the batch means. Halves too short for
    blocks of two samples use per-sample errors.
    """
    first, second = [], []
    for window in windows:
        window = np.asarray(window, dtype=float)
        if len(window) < 4:
            continue
        half = len(window) // 2
        first.append(_block_means(window[:half], blocks))
        second.append(_block_means(window[half:], blocks))
    if not first:
        return True
    first, second = np.concatenate(first), np.concatenate(second)
    stderr = np.sqrt(np.var(first, ddof=1) / len(first) + np.var(second, ddof=1) / len(second))
    return bool(abs(np.mean(first) - np.mean(second)) <= sigmas * stderr)


def stationary_stats(
    series: Sequence[TimeSeries],
    warmup: Optional[int] = None,
    arena: Optional[Arena] = None,
) -> EnsembleStats:
    """
    Pool phi(t) for t > warmup over all runs.

    Var(phi) is the population variance of the pooled sample and the
    susceptibility is Var(phi) * Lx * Ly.
    """
    if not series:
        raise AnalysisError("no series to aggregate")
    if arena is None:
        arena = series[0].metadata.get("arena")
    if arena is None:
        raise AnalysisError("arena is required to compute the susceptibility")

    windows = [s.retained(warmup) for s in series]
    if any(len(w) == 0 for w in windows):
        raise AnalysisError(f"empty post-warmup window (warmup = {warmup})")

    pooled = np.concatenate(windows)
    mean = float(np.mean(pooled))
    var = float(np.var(pooled))
    if len(windows) > 1:
        run_means = np.array([np.mean(w) for w in windows])
        stderr = float(np.std(run_means, ddof=1) / np.sqrt(len(windows)))
    else:
        stderr = float(np.sqrt(var / len(pooled)))

    stationary = check_stationarity(windows)
    if not stationary:
        logger.warning(f"Retained window does not look stationary (phi_stat = {mean:.4f}); consider more steps")

    return EnsembleStats(
        phi_stat=mean,
        var_phi=var,
        susceptibility=var * arena.lx * arena.ly,
        phi_stderr=stderr,
        runs=len(series),
        samples=len(pooled),
        stationary=stationary,
        normalization=series[0].normalization,
    )


def run_count_convergence(
    series: Sequence[TimeSeries],
    warmup: Optional[int] = None,
    arena: Optional[Arena] = None,
) -> pd.DataFrame:
    """phi_stat and its standard error using the first k runs, k = 1..len(series)"""
    rows = []
    for k in range(1, len(series) + 1):
        summary = stationary_stats(series[:k], warmup, arena)
        rows.append({"runs": k, "phi_stat": summary.phi_stat, "phi_stderr": summary.phi_stderr})
    return pd.DataFrame(rows, columns=["runs", "phi_stat", "phi_stderr"])


# ----------------------------------------------------------------------------
# Profiles and cluster width
# ----------------------------------------------------------------------------

def density_profile(state: SwarmState, arena: Arena, dx: float = 5.0) -> ProfileHistogram:
    """Fraction of particles in each half-open bin of width dx over [0, Lx)"""
    if state.n == 0:
        raise AnalysisError("density profile is undefined for an empty system")
    nbins = int(round(arena.lx / dx))
    if nbins < 1 or abs(nbins * dx - arena.lx) > 1e-9 * arena.lx:
        raise AnalysisError(f"corridor length {arena.lx} is not a multiple of the bin width {dx}")

    bins = np.clip(np.floor(state.positions[:, 0] / dx).astype(np.int64), 0, nbins - 1)
    counts = np.bincount(bins, minlength=nbins)
    return ProfileHistogram(dx=dx, values=counts / state.n, n=state.n, time=state.time)


def cluster_width(
    profile: ProfileHistogram,
    arena: Optional[Arena] = None,
    threshold: Optional[float] = None,
) -> ClusterWidth:
    """
    Extent of the bins with P(x) > threshold (default 1/N, strict).

    On a periodic corridor the extent is the shortest circular arc of bins
    covering every occupied bin.
    """
    if threshold is None:
        threshold = 1.0 / profile.n
    occupied = np.flatnonzero(profile.values > threshold)
    if len(occupied) == 0:
        return ClusterWidth(0.0, empty=True)

    periodic = arena is None or arena.bc_x == BoundaryRule.PERIODIC
    if not periodic:
        return ClusterWidth(float((occupied[-1] - occupied[0] + 1) * profile.dx))

    inner_gaps = np.diff(occupied) - 1
    wrap_gap = profile.nbins - 1 - occupied[-1] + occupied[0]
    largest_gap = max(int(inner_gaps.max(initial=0)), int(wrap_gap))
    return ClusterWidth(float((profile.nbins - largest_gap) * profile.dx))


# ----------------------------------------------------------------------------
# Growth exponent
# ----------------------------------------------------------------------------

def fit_power_law(times, widths, t_min: Optional[float] = None, t_max: Optional[float] = None) -> PowerLawFit:
    """Ordinary least squares of log w against log t inside [t_min, t_max]"""
    times = np.asarray(times, dtype=float)
    widths = np.asarray(widths, dtype=float)
    mask = np.ones(len(times), dtype=bool)
    if t_min is not None:
        mask &= times >= t_min
    if t_max is not None:
        mask &= times <= t_max
    t, w = times[mask], widths[mask]

    if len(t) < MIN_FIT_POINTS:
        raise AnalysisError(f"need at least {MIN_FIT_POINTS} points in the fit window, got {len(t)}")
    if np.any(t <= 0.0) or np.any(w <= 0.0):
        raise AnalysisError("times and widths must be positive inside the fit window")

    result = stats.linregress(np.log(t), np.log(w))
    return PowerLawFit(
        alpha=float(result.slope),
        stderr=float(result.stderr),
        prefactor=float(np.exp(result.intercept)),
        n_points=int(len(t)),
        t_min=float(t[0]),
        t_max=float(t[-1]),
    )


def select_fit_window(
    times,
    widths,
    t_min: float = DEFAULT_FIT_T_MIN,
    t_max: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Drop the initial transient and a trailing plateau where w stopped growing.

    A plateau is trimmed only when w is flat across the whole last decade of
    t, w grew before it, and at least five points remain.
    """
    times = np.asarray(times, dtype=float)
    widths = np.asarray(widths, dtype=float)
    mask = times >= t_min
    if t_max is not None:
        mask &= times <= t_max
    t, w = times[mask], widths[mask]
    if len(t) < 2:
        return t, w

    last_decade = t >= t[-1] / 10.0
    flat = np.isclose(w, w[-1], rtol=1e-9, atol=0.0)
    if np.all(flat[last_decade]) and w[0] < w[-1]:
        # keep the first point of the trailing flat run
        plateau_start = len(w) - int(np.argmin(flat[::-1])) if not np.all(flat) else 0
        keep = plateau_start + 1
        if keep >= MIN_FIT_POINTS:
            logger.debug(f"Trimmed trailing plateau from t = {t[plateau_start]:g}")
            return t[:keep], w[:keep]
    return t, w


def width_spread(series: TimeSeries) -> np.ndarray:
    """w(t) - w(0): growth of the cluster beyond its initial extent"""
    if not series.has_widths:
        raise AnalysisError("series has no w(t) column")
    return series.widths - series.widths[0]


def spreading_onset(spread, resolution: float = 0.0) -> Optional[int]:
    """Index from which the spread stays above `resolution`; None when it ends inside it"""
    above = np.asarray(spread, dtype=float) > resolution
    if len(above) == 0 or not above[-1]:
        return None
    below = np.flatnonzero(~above)
    return int(below[-1]) + 1 if len(below) else 0


def fit_width_growth(
    series: TimeSeries,
    t_min: float = DEFAULT_FIT_T_MIN,
    t_max: Optional[float] = None,
    excess: bool = True,
    resolution: Optional[float] = None,
) -> PowerLawFit:
    """
    Power-law fit of the cluster width over the growth window.

    With `excess` the fitted quantity is the spread w(t) - w(0) from the
    spreading onset on, the onset being the first sample after which the
    spread stays above `resolution` (default: the bin width recorded in the
    series metadata). A spread that ends inside the resolution means the
    cluster kept its form, and w(t) itself is fitted instead.
    """
    if not series.has_widths:
        raise AnalysisError("series has no w(t) column")
    times, widths = series.width_times, series.widths

    if excess:
        if resolution is None:
            resolution = float(series.metadata.get("dx", 0.0))
        spread = width_spread(series)
        onset = spreading_onset(spread, resolution)
        if onset is None:
            logger.info(f"Cluster spread stays within {resolution:g}; fitting w(t) itself")
        else:
            t_min = max(t_min, float(times[onset]))
            widths = spread

    t, w = select_fit_window(times, widths, t_min, t_max)
    positive = w > 0.0
    if not np.all(positive):
        logger.warning(f"Ignoring {int((~positive).sum())} non-positive width sample(s) in the fit")
    return fit_power_law(t[positive], w[positive])


def mean_width_curve(series: Sequence[TimeSeries]) -> TimeSeries:
    """Ensemble mean of w(t) on the time grid shared by all runs"""
    with_widths = [s for s in series if s.has_widths]
    if not with_widths:
        raise AnalysisError("no series carries w(t)")

    common = reduce(np.intersect1d, [s.width_times for s in with_widths])
    if len(common) == 0:
        raise AnalysisError("runs share no w(t) time index")
    stacked = np.vstack([s.widths[np.isin(s.width_times, common)] for s in with_widths])

    first = with_widths[0]
    return TimeSeries(
        times=first.times,
        phi=first.phi,
        width_times=common,
        widths=stacked.mean(axis=0),
        normalization=first.normalization,
        metadata=dict(first.metadata, runs=len(with_widths)),
    )
