"""
Serialization
Config documents, series and snapshot files, manifests and plot-ready tables

Data files are comma-delimited with one header line and floats in %.17e, so
identical runs produce byte-identical files. Timestamps live only in the manifest.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from . import __version__
from .exceptions import MalformedInputError
from .models import RunSpec
from .observables import ProfileHistogram, TimeSeries
from .schemas import get_model_profile, phi_normalization
from .state import SnapshotRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17e"
SNAPSHOT_COLUMNS = ["t", "id", "x", "y", "vx", "vy", "heading"]
SNAPSHOT_DTYPE = np.dtype([
    ("t", "<i8"), ("id", "<i8"), ("x", "<f8"), ("y", "<f8"),
    ("vx", "<f8"), ("vy", "<f8"), ("heading", "<f8"),
])
WALL_OVERLAP_NOTE = "wall granular term uses g(d/2 - r_iW)"

SpecT = TypeVar("SpecT", bound=BaseModel)
PathLike = Union[str, Path]


# ----------------------------------------------------------------------------
# Config documents
# ----------------------------------------------------------------------------

def load_spec(path: PathLike, model: Type[SpecT]) -> SpecT:
    """Parse a JSON config document; unknown keys are rejected, missing keys take defaults"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInputError(str(path), f"cannot read config: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(str(path), exc.msg, exc.lineno) from exc
    return model.model_validate(data)


def dump_spec(spec: BaseModel, path: Optional[PathLike] = None) -> str:
    text = spec.model_dump_json(indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# ----------------------------------------------------------------------------
# Tables
# ----------------------------------------------------------------------------

def write_table(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    return path


def read_table(path: PathLike, required: Sequence[str] = (), dtype: Optional[Dict[str, Any]] = None) -> pd.DataFrame:
    """Read a delimited table; problems are reported with the file name and line"""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=dtype, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise MalformedInputError(str(path), "file not found") from exc
    except pd.errors.EmptyDataError as exc:
        raise MalformedInputError(str(path), "file is empty", 1) from exc
    except pd.errors.ParserError as exc:
        raise MalformedInputError(str(path), str(exc).strip()) from exc

    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise MalformedInputError(str(path), f"missing column(s): {', '.join(missing)}", 1)
    return frame


def _numeric_column(frame: pd.DataFrame, column: str, path: Path, allow_blank: bool = False) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna()
    if allow_blank:
        bad &= raw.notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise MalformedInputError(str(path), f"non-numeric value {raw.iloc[row]!r} in column '{column}'", row + 2)
    return values.to_numpy(dtype=float)


# ----------------------------------------------------------------------------
# Series
# ----------------------------------------------------------------------------

def series_frame(series: TimeSeries) -> pd.DataFrame:
    """t, phi, phi_x[, w]; w is blank at steps where it was not recorded"""
    frame = pd.DataFrame({"t": series.times, "phi": series.phi})
    if series.phi_x is not None:
        frame["phi_x"] = series.phi_x
    if series.has_widths:
        widths = pd.Series(series.widths, index=series.width_times)
        frame["w"] = frame["t"].map(widths)
    return frame


def write_series(series: TimeSeries, path: PathLike) -> Path:
    return write_table(series_frame(series), path)


def read_series(path: PathLike) -> TimeSeries:
    path = Path(path)
    frame = read_table(path, required=("t", "phi"))
    times = _numeric_column(frame, "t", path)
    if len(times) > 1:
        steps = np.diff(times)
        if np.any(steps <= 0):
            row = int(np.flatnonzero(steps <= 0)[0]) + 1
            raise MalformedInputError(str(path), "time indices must be strictly increasing", row + 2)

    phi_x = _numeric_column(frame, "phi_x", path) if "phi_x" in frame.columns else None
    width_times = widths = None
    if "w" in frame.columns:
        w = _numeric_column(frame, "w", path, allow_blank=True)
        recorded = ~np.isnan(w)
        width_times, widths = times[recorded].astype(np.int64), w[recorded]

    return TimeSeries(
        times=times.astype(np.int64),
        phi=_numeric_column(frame, "phi", path),
        phi_x=phi_x,
        width_times=width_times,
        widths=widths,
    )


# ----------------------------------------------------------------------------
# Snapshots
# ----------------------------------------------------------------------------

def _snapshot_array(records: Iterable[SnapshotRecord]) -> np.ndarray:
    chunks = []
    for record in records:
        chunk = np.empty(len(record.ids), dtype=SNAPSHOT_DTYPE)
        chunk["t"] = record.time
        chunk["id"] = record.ids
        chunk["x"], chunk["y"] = record.positions[:, 0], record.positions[:, 1]
        chunk["vx"], chunk["vy"] = record.velocities[:, 0], record.velocities[:, 1]
        chunk["heading"] = record.headings
        chunks.append(chunk)
    return np.concatenate(chunks) if chunks else np.empty(0, dtype=SNAPSHOT_DTYPE)


def write_snapshots(records: Sequence[SnapshotRecord], path: PathLike, binary: bool = False) -> Path:
    """Per-particle rows (t, id, x, y, vx, vy, heading); binary writes a structured .npy array"""
    path = Path(path)
    array = _snapshot_array(records)
    if binary:
        path = path.with_suffix(".npy")
        np.save(path, array, allow_pickle=False)
        return path
    return write_table(pd.DataFrame(array), path)


def read_snapshots(path: PathLike) -> List[SnapshotRecord]:
    path = Path(path)
    if path.suffix == ".npy":
        try:
            array = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise MalformedInputError(str(path), f"unreadable snapshot array: {exc}") from exc
        if array.dtype != SNAPSHOT_DTYPE:
            raise MalformedInputError(str(path), f"unexpected snapshot dtype {array.dtype}")
        frame = pd.DataFrame(array)
    else:
        frame = read_table(path, required=SNAPSHOT_COLUMNS)
        for column in SNAPSHOT_COLUMNS:
            frame[column] = _numeric_column(frame, column, path)

    records, count = [], None
    for t, group in frame.groupby("t", sort=True):
        if count is not None and len(group) != count:
            raise MalformedInputError(str(path), f"snapshot at t={int(t)} has {len(group)} particles, expected {count}")
        count = len(group)
        records.append(SnapshotRecord(
            time=int(t),
            ids=group["id"].to_numpy(dtype=np.int64),
            positions=group[["x", "y"]].to_numpy(dtype=float),
            velocities=group[["vx", "vy"]].to_numpy(dtype=float),
            headings=group["heading"].to_numpy(dtype=float),
        ))
    return records


def find_snapshots(directory: PathLike) -> Optional[Path]:
    for name in ("snapshots.csv", "snapshots.npy"):
        candidate = Path(directory) / name
        if candidate.exists():
            return candidate
    return None


# ----------------------------------------------------------------------------
# Manifest
# ----------------------------------------------------------------------------

def build_manifest(spec: RunSpec, seeds: Sequence[int], files: Sequence[str] = ()) -> Dict[str, Any]:
    """Provenance of a run directory: spec, seeds, code version and the defaults that shape phi"""
    profile = get_model_profile(spec.config.model)
    return {
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "spec": spec.model_dump(mode="json"),
        "spec_hash": spec.spec_hash(),
        "seeds": [int(seed) for seed in seeds],
        "model": spec.config.model.value,
        "phi_normalization": phi_normalization(spec.config.model).value,
        "tau_rt": spec.config.tau_rt,
        "substeps": spec.config.substeps,
        "wall_forces": profile["wall_forces"],
        "wall_overlap": WALL_OVERLAP_NOTE if profile["wall_forces"] else None,
        "files": list(files),
    }


def write_manifest(manifest: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedInputError(str(path), f"cannot read manifest: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedInputError(str(path), exc.msg, exc.lineno) from exc
    if "spec" not in manifest:
        raise MalformedInputError(str(path), "manifest has no 'spec' entry")
    return manifest


# ----------------------------------------------------------------------------
# Profiles and level plots
# ----------------------------------------------------------------------------

def profiles_frame(profiles: Iterable[ProfileHistogram]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({"t": profile.time, "bin_start": profile.bin_starts, "value": profile.values})
        for profile in profiles
    ]
    if not frames:
        return pd.DataFrame(columns=["t", "bin_start", "value"])
    return pd.concat(frames, ignore_index=True)


def write_level_matrix(matrix: pd.DataFrame, path: PathLike) -> Path:
    """Matrix with the row axis down and the column axis across; the corner cell names both (e.g. ly\\eta)"""
    path = Path(path)
    corner = f"{str(matrix.index.name).lower()}\\{str(matrix.columns.name).lower()}"
    out = matrix.copy()
    out.columns = [FLOAT_FORMAT % float(value) for value in out.columns]
    out.index = [FLOAT_FORMAT % float(value) for value in out.index]
    out.index.name = corner
    out.to_csv(path, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    return path
