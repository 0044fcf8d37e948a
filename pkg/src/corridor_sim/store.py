"""
Sweep Store
CSV-backed record of completed sweep points, keyed by point hash
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from .serialization import read_table, write_table

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["model", "eta", "v0", "Lx", "Ly", "N", "rho", "phi_stat", "var_phi", "susceptibility", "runs"]
PROVENANCE_COLUMNS = [
    "phi_stderr", "stationary", "normalization", "alpha", "alpha_stderr",
    "base_seed", "spec_hash", "point_key", "seeds",
]
TABLE_COLUMNS = SWEEP_COLUMNS + PROVENANCE_COLUMNS

_TEXT_COLUMNS = {"model": str, "normalization": str, "spec_hash": str, "point_key": str, "seeds": str}


class SweepStore:
    """
    Sweep rows in point order, persisted to a CSV file after every upsert.

    With no path the store lives in memory only.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.rows: List[Dict[str, Any]] = []

    def load(self) -> "SweepStore":
        """Read existing rows, if the file exists"""
        if self.path is None or not self.path.exists():
            return self
        frame = read_table(self.path, required=TABLE_COLUMNS, dtype=_TEXT_COLUMNS)
        frame = frame.astype(object).where(frame.notna(), None)
        self.rows = frame[TABLE_COLUMNS].to_dict(orient="records")
        logger.info(f"Loaded {len(self.rows)} completed sweep point(s) from {self.path}")
        return self

    def has_point(self, key: str) -> bool:
        return any(row["point_key"] == key for row in self.rows)

    def upsert(self, row: Dict[str, Any]) -> None:
        """Replace the row with the same point key, or append it"""
        for index, existing in enumerate(self.rows):
            if existing["point_key"] == row["point_key"]:
                self.rows[index] = row
                logger.info(f"Updated existing sweep point {row['point_key']}")
                return
        self.rows.append(row)
        logger.info(f"Added sweep point {row['point_key']} ({row['model']} eta={row['eta']})")

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=TABLE_COLUMNS)

    def save(self) -> None:
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        write_table(self.table(), self.path)
