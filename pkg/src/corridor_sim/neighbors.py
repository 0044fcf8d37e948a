"""
Neighbor Search
Boundary-aware fixed-radius queries over a uniform cell grid, with an all-pairs oracle
"""

import logging
from dataclasses import dataclass
from itertools import product
from typing import Dict, List, Tuple

import numpy as np

from .models import Arena

logger = logging.getLogger(__name__)


def _positions_of(state) -> np.ndarray:
    positions = getattr(state, "positions", state)
    return np.asarray(positions, dtype=float).reshape(-1, 2)


def minimum_image(delta: np.ndarray, arena: Arena) -> np.ndarray:
    """Map displacement vectors onto the nearest periodic image per periodic axis"""
    delta = np.array(delta, dtype=float, copy=True)
    for axis, (length, periodic) in enumerate(zip(arena.lengths, arena.periodic)):
        if periodic:
            delta[..., axis] -= length * np.round(delta[..., axis] / length)
    return delta


def _squared_distances(positions: np.ndarray, i: np.ndarray, j: np.ndarray, arena: Arena) -> np.ndarray:
    delta = minimum_image(positions[j] - positions[i], arena)
    return np.einsum("ij,ij->i", delta, delta)


@dataclass(frozen=True)
class CellGrid:
    """
    Particles binned into cells no smaller than the query radius.

    Storage is CSR-like: `order` lists particle indices sorted by cell and
    `starts[c]:starts[c + 1]` is the slice belonging to flat cell c.
    """
    positions: np.ndarray
    arena: Arena
    radius: float
    shape: Tuple[int, int]
    cell_size: Tuple[float, float]
    cell_coords: np.ndarray
    order: np.ndarray
    starts: np.ndarray

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def cells(self) -> Dict[Tuple[int, int], List[int]]:
        """Occupied cells mapped to their particle indices"""
        occupied = {}
        nx, ny = self.shape
        for flat in range(nx * ny):
            members = self.order[self.starts[flat]:self.starts[flat + 1]]
            if len(members):
                occupied[(flat // ny, flat % ny)] = sorted(int(k) for k in members)
        return occupied

    def axis_offsets(self, axis: int) -> List[int]:
        """Neighbour cell offsets along one axis, deduplicated modulo the cell count on periodic axes"""
        n_cells = self.shape[axis]
        if self.arena.periodic[axis]:
            return sorted({offset % n_cells for offset in (-1, 0, 1)})
        return [-1, 0, 1]

    def neighbour_cells(self, coords: np.ndarray, offset: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        """Flat index of the cell at coords + offset and a mask of cells inside the grid"""
        shifted = coords + np.asarray(offset)
        valid = np.ones(len(coords), dtype=bool)
        for axis in range(2):
            n_cells = self.shape[axis]
            if self.arena.periodic[axis]:
                shifted[:, axis] %= n_cells
            else:
                valid &= (shifted[:, axis] >= 0) & (shifted[:, axis] < n_cells)
        flat = shifted[:, 0] * self.shape[1] + shifted[:, 1]
        return flat, valid

    def candidates(self, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """All (i, j) pairs with j in the 3x3 cell neighbourhood of i"""
        counts_all = np.diff(self.starts)
        left, right = [], []
        coords = self.cell_coords[indices]
        for offset in product(self.axis_offsets(0), self.axis_offsets(1)):
            flat, valid = self.neighbour_cells(coords, offset)
            rows = indices[valid]
            flat = flat[valid]
            counts = counts_all[flat]
            total = int(counts.sum())
            if total == 0:
                continue
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            left.append(np.repeat(rows, counts))
            right.append(self.order[np.repeat(self.starts[flat], counts) + within])
        if not left:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(left), np.concatenate(right)


def build(state, arena: Arena, radius: float) -> CellGrid:
    """
    Bin particles into a grid with cells of at least `radius` per side.

    An axis shorter than two cells collapses to one cell, which degrades to
    an all-pairs scan on that axis.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")

    positions = _positions_of(state)
    shape = tuple(max(1, int(np.floor(length / radius))) for length in arena.lengths)
    cell_size = tuple(length / n_cells for length, n_cells in zip(arena.lengths, shape))

    coords = np.empty((len(positions), 2), dtype=np.int64)
    for axis in range(2):
        raw = np.floor(positions[:, axis] / cell_size[axis]).astype(np.int64)
        coords[:, axis] = np.clip(raw, 0, shape[axis] - 1)

    flat = coords[:, 0] * shape[1] + coords[:, 1]
    order = np.argsort(flat, kind="stable")
    starts = np.zeros(shape[0] * shape[1] + 1, dtype=np.int64)
    starts[1:] = np.cumsum(np.bincount(flat, minlength=shape[0] * shape[1]))

    frozen = positions.copy()
    frozen.setflags(write=False)
    return CellGrid(
        positions=frozen,
        arena=arena,
        radius=float(radius),
        shape=shape,
        cell_size=cell_size,
        cell_coords=coords,
        order=order,
        starts=starts,
    )


def _check_radius(grid: CellGrid, radius: float) -> None:
    if radius > grid.radius:
        raise ValueError(f"query radius {radius} exceeds grid radius {grid.radius}")


def neighbors_within(grid: CellGrid, i: int, radius: float) -> np.ndarray:
    """Indices within `radius` of particle i (minimum image), i included, ascending"""
    _check_radius(grid, radius)
    left, right = grid.candidates(np.array([i], dtype=np.int64))
    keep = _squared_distances(grid.positions, left, right, grid.arena) <= radius * radius
    return np.sort(right[keep])


def pairs_within(grid: CellGrid, radius: float, include_self: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ordered pairs (i, j) within `radius`, both directions, sorted by i then j.

    With include_self the diagonal pairs (i, i) are part of the result.
    """
    _check_radius(grid, radius)
    left, right = grid.candidates(np.arange(grid.n, dtype=np.int64))
    keep = _squared_distances(grid.positions, left, right, grid.arena) <= radius * radius
    if not include_self:
        keep &= left != right
    left, right = left[keep], right[keep]
    order = np.lexsort((right, left))
    return left[order], right[order]


class VerletList:
    """
    Pair list built at cutoff + skin and reused across small moves.

    `update` rebuilds only after some particle moved more than skin / 2
    (minimum image) since the last build; `pairs` filters the stored list
    to the cutoff, so it returns exactly what pairs_within would.
    """

    def __init__(self, arena: Arena, cutoff: float, skin: float = 0.0):
        if cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if skin < 0:
            raise ValueError("skin must be non-negative")
        self.arena = arena
        self.cutoff = float(cutoff)
        self.skin = float(skin)
        self.builds = 0
        self._reference = None
        self._left = self._right = np.empty(0, dtype=np.int64)

    def update(self, state) -> bool:
        """Rebuild if needed; True when a rebuild happened"""
        positions = _positions_of(state)
        if self._reference is not None and len(positions) == len(self._reference):
            moved = minimum_image(positions - self._reference, self.arena)
            if np.einsum("ij,ij->i", moved, moved).max(initial=0.0) <= (0.5 * self.skin) ** 2:
                return False
        grid = build(positions, self.arena, self.cutoff + self.skin)
        self._left, self._right = pairs_within(grid, self.cutoff + self.skin)
        self._reference = positions.copy()
        self.builds += 1
        return True

    def pairs(self, state) -> Tuple[np.ndarray, np.ndarray]:
        """Ordered pairs within the cutoff at the current positions, sorted by i then j"""
        self.update(state)
        positions = _positions_of(state)
        keep = _squared_distances(positions, self._left, self._right, self.arena) <= self.cutoff * self.cutoff
        return self._left[keep], self._right[keep]


def brute_force_neighbors(state, arena: Arena, i: int, radius: float) -> np.ndarray:
    """O(N) scan over all particles; reference for neighbors_within"""
    positions = _positions_of(state)
    others = np.arange(len(positions))
    d2 = _squared_distances(positions, np.full(len(positions), i), others, arena)
    return others[d2 <= radius * radius]


def brute_force_pairs(state, arena: Arena, radius: float, include_self: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """O(N^2) reference for pairs_within"""
    positions = _positions_of(state)
    n = len(positions)
    left, right = np.divmod(np.arange(n * n), n)
    keep = _squared_distances(positions, left, right, arena) <= radius * radius
    if not include_self:
        keep &= left != right
    return left[keep], right[keep]
