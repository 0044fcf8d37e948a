"""
Particle State
Immutable swarm snapshots, per-particle views and the insertion protocol
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, List

import numpy as np

from .exceptions import InvalidStateError, SetupError
from .models import Arena, HeadingMode, ModelConfig
from .schemas import get_model_profile

logger = logging.getLogger(__name__)

MAX_PLACEMENT_ATTEMPTS = 100_000
INSERTION_FRACTION = 0.5


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ParticleState:
    """One self-propelled particle"""
    position: np.ndarray
    velocity: np.ndarray
    heading: float
    mass: float = 80.0
    diameter: float = 0.7

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        object.__setattr__(self, "velocity", _frozen(self.velocity))
        if self.position.shape != (2,) or self.velocity.shape != (2,):
            raise InvalidStateError("position and velocity must be 2D vectors")

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


@dataclass(frozen=True)
class SwarmState:
    """
    Snapshot of all particles at one time index.

    Arrays are read-only, so a state can be shared between threads and steps
    always return a new instance.
    """
    positions: np.ndarray
    velocities: np.ndarray
    headings: np.ndarray
    mass: float = 80.0
    diameter: float = 0.7
    time: int = 0

    def __post_init__(self):
        positions = _frozen(self.positions).reshape(-1, 2)
        velocities = _frozen(self.velocities).reshape(-1, 2)
        headings = _frozen(self.headings).reshape(-1)
        if not (len(positions) == len(velocities) == len(headings)):
            raise InvalidStateError(
                f"inconsistent particle counts: {len(positions)}, {len(velocities)}, {len(headings)}"
            )
        for name, value in (("positions", positions), ("velocities", velocities), ("headings", headings)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return len(self.headings)

    def speeds(self) -> np.ndarray:
        return np.hypot(self.velocities[:, 0], self.velocities[:, 1])

    def particle(self, i: int) -> ParticleState:
        return ParticleState(
            position=self.positions[i],
            velocity=self.velocities[i],
            heading=float(self.headings[i]),
            mass=self.mass,
            diameter=self.diameter,
        )

    def particles(self) -> List[ParticleState]:
        return [self.particle(i) for i in range(self.n)]

    def evolve(self, **changes) -> "SwarmState":
        """New state with the given fields replaced"""
        return replace(self, **changes)

    def permuted(self, order: Iterable[int]) -> "SwarmState":
        order = np.asarray(list(order), dtype=int)
        return self.evolve(
            positions=self.positions[order],
            velocities=self.velocities[order],
            headings=self.headings[order],
        )

    @classmethod
    def from_particles(cls, particles: List[ParticleState], time: int = 0) -> "SwarmState":
        if not particles:
            return cls(np.empty((0, 2)), np.empty((0, 2)), np.empty(0), time=time)
        return cls(
            positions=np.array([p.position for p in particles]),
            velocities=np.array([p.velocity for p in particles]),
            headings=np.array([p.heading for p in particles]),
            mass=particles[0].mass,
            diameter=particles[0].diameter,
            time=time,
        )

    @classmethod
    def from_headings(cls, positions, headings, speed: float, **kwargs) -> "SwarmState":
        """Build a constant-speed state from positions and headings"""
        headings = np.asarray(headings, dtype=float).reshape(-1)
        velocities = speed * np.column_stack((np.cos(headings), np.sin(headings)))
        return cls(positions=positions, velocities=velocities, headings=headings, **kwargs)


@dataclass
class ForceAccumulator:
    """Per-particle force sums (N) for the right-hand side of the equation of motion"""
    n: int
    forces: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.forces is None:
            self.forces = np.zeros((self.n, 2))

    def add(self, force: np.ndarray) -> None:
        """Add a full (N, 2) contribution"""
        self.forces += force

    def scatter(self, indices: np.ndarray, vectors: np.ndarray) -> None:
        """Add per-pair vectors onto the particles named by indices"""
        if len(indices) == 0:
            return
        self.forces[:, 0] += np.bincount(indices, weights=vectors[:, 0], minlength=self.n)
        self.forces[:, 1] += np.bincount(indices, weights=vectors[:, 1], minlength=self.n)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.forces)))


@dataclass(frozen=True)
class SnapshotRecord:
    """Per-particle dump of one time index"""
    time: int
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    headings: np.ndarray

    @classmethod
    def from_state(cls, state: SwarmState) -> "SnapshotRecord":
        return cls(
            time=state.time,
            ids=np.arange(state.n),
            positions=state.positions,
            velocities=state.velocities,
            headings=state.headings,
        )

    def to_state(self, mass: float = 80.0, diameter: float = 0.7) -> SwarmState:
        return SwarmState(self.positions, self.velocities, self.headings, mass=mass, diameter=diameter, time=self.time)


def _place_without_overlap(n: int, arena: Arena, cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampling of centres at least one diameter apart, clear of the walls"""
    x_max = INSERTION_FRACTION * arena.lx
    radius = 0.5 * cfg.diameter
    y_low, y_high = radius, arena.ly - radius
    if y_high <= y_low:
        raise SetupError(f"corridor width {arena.ly} m cannot hold particles of diameter {cfg.diameter} m")

    placed = np.empty((n, 2))
    min_sq = cfg.diameter ** 2
    for i in range(n):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            candidate = np.array([rng.uniform(0.0, x_max), rng.uniform(y_low, y_high)])
            if i == 0:
                break
            delta = placed[:i] - candidate
            delta[:, 0] -= arena.lx * np.round(delta[:, 0] / arena.lx)
            if np.min(np.einsum("ij,ij->i", delta, delta)) >= min_sq:
                break
        else:
            density = n / arena.area
            raise SetupError(
                f"could not place particle {i} of {n} without overlap after {MAX_PLACEMENT_ATTEMPTS} attempts "
                f"(density {density:.4g} m^-2 in the insertion region of {x_max:g} x {arena.ly:g} m)"
            )
        placed[i] = candidate
    return placed


def initialize_swarm(
    n: int,
    arena: Arena,
    cfg: ModelConfig,
    rng: np.random.Generator,
    heading_mode: HeadingMode = HeadingMode.RANDOM,
) -> SwarmState:
    """
    Insert particles uniformly in the first half of the corridor.

    Social-force models start overlap-free and heading +x. VM-family models
    start with uniform headings in (-pi, pi] unless heading_mode is aligned.
    """
    profile = get_model_profile(cfg.model)
    if profile["wall_forces"]:
        positions = _place_without_overlap(n, arena, cfg, rng)
        headings = np.zeros(n)
    else:
        positions = np.column_stack((
            rng.uniform(0.0, INSERTION_FRACTION * arena.lx, n),
            rng.uniform(0.0, arena.ly, n),
        ))
        if heading_mode == HeadingMode.ALIGNED:
            headings = np.zeros(n)
        else:
            headings = np.pi - rng.uniform(0.0, 2.0 * np.pi, n)

    logger.debug(f"Inserted {n} particles for {cfg.model.value} (density {n / arena.area:.4g})")
    return SwarmState.from_headings(positions, headings, cfg.v0, mass=cfg.mass, diameter=cfg.diameter)
