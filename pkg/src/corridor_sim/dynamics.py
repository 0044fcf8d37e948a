"""
Particle Dynamics
Per-step updates for the Vicsek family, the social force model and their combination
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from . import neighbors
from .exceptions import DegenerateGeometryError, InvalidStateError, StepSizeError
from .models import Arena, BoundaryRule, ModelConfig, ModelKind
from .schemas import get_model_profile
from .state import ForceAccumulator, ParticleState, SwarmState

logger = logging.getLogger(__name__)

EXIT_DIRECTION = np.array([1.0, 0.0])

# Centres closer than this are treated as coincident
COINCIDENT_DISTANCE = 1e-12
# Separation at which forces between coincident centres are evaluated
COINCIDENT_SEPARATION = 1e-6
# Summed heading vectors shorter than this carry no direction
ZERO_NORM = 1e-12


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


# ----------------------------------------------------------------------------
# Vicsek alignment
# ----------------------------------------------------------------------------

def vicsek_heading(i: int, state: SwarmState, neighbors_of_i: Sequence[int], noise_draw: float) -> float:
    """
    Circular mean of the neighbour headings plus the noise draw.

    `neighbors_of_i` must contain i. A vanishing resultant keeps the
    particle's own heading.
    """
    members = np.asarray(neighbors_of_i, dtype=int)
    sx = np.sum(np.cos(state.headings[members]))
    sy = np.sum(np.sin(state.headings[members]))
    if np.hypot(sx, sy) < ZERO_NORM:
        base = state.headings[i]
    else:
        base = np.arctan2(sy, sx)
    return wrap_angle(base + noise_draw)


def aligned_headings(state: SwarmState, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Circular mean heading per particle over self-inclusive neighbour pairs"""
    n = state.n
    sx = np.bincount(left, weights=np.cos(state.headings[right]), minlength=n)
    sy = np.bincount(left, weights=np.sin(state.headings[right]), minlength=n)
    base = np.arctan2(sy, sx)
    cancelled = np.hypot(sx, sy) < ZERO_NORM
    base[cancelled] = state.headings[cancelled]
    return base


def apply_desired_direction(theta, theta_des: float):
    """Desired-direction transform: halve the deviation from theta_des and wrap"""
    return wrap_angle((np.asarray(theta, dtype=float) - theta_des) / 2.0)


def draw_noise(n: int, cfg: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """One eta*xi per particle, xi uniform in [-pi, pi], drawn in index order"""
    return cfg.eta * rng.uniform(-np.pi, np.pi, n)


def _vicsek_update(state: SwarmState, arena: Arena, cfg: ModelConfig, noise: np.ndarray) -> np.ndarray:
    grid = neighbors.build(state, arena, cfg.r0)
    left, right = neighbors.pairs_within(grid, cfg.r0, include_self=True)
    return wrap_angle(aligned_headings(state, left, right) + noise)


# ----------------------------------------------------------------------------
# Social force model
# ----------------------------------------------------------------------------

def desire_force(p: ParticleState, cfg: ModelConfig, target_dir=EXIT_DIRECTION) -> np.ndarray:
    """Relaxation toward v0 along target_dir: m (v0 e - v) / tau"""
    return p.mass * (cfg.v0 * np.asarray(target_dir, dtype=float) - p.velocity) / cfg.tau_rt


def desire_forces(velocities: np.ndarray, mass: float, cfg: ModelConfig, target_dir=EXIT_DIRECTION) -> np.ndarray:
    return mass * (cfg.v0 * np.asarray(target_dir, dtype=float) - velocities) / cfg.tau_rt


def social_force_pair(r_ij: float, n_ij, cfg: ModelConfig) -> np.ndarray:
    """Exponential repulsion A exp((d - r)/B) along n_ij (pointing from j to i)"""
    if r_ij <= 0.0:
        raise DegenerateGeometryError("coincident centres: social force direction undefined")
    return cfg.a_social * np.exp((cfg.diameter - r_ij) / cfg.b_social) * np.asarray(n_ij, dtype=float)


def granular_force_pair(r_ij: float, n_ij, t_ij, dv_t: float, cfg: ModelConfig) -> np.ndarray:
    """Contact compression plus sliding friction, active only under overlap"""
    if r_ij <= 0.0:
        raise DegenerateGeometryError("coincident centres: contact force direction undefined")
    overlap = cfg.diameter - r_ij
    if overlap <= 0.0:
        return np.zeros(2)
    return (cfg.k_compress * np.asarray(n_ij, dtype=float) + cfg.kappa_friction * dv_t * np.asarray(t_ij, dtype=float)) * overlap


def _pair_frame(positions: np.ndarray, left: np.ndarray, right: np.ndarray, arena: Arena) -> Tuple[np.ndarray, np.ndarray]:
    """Distance and unit normal from right to left, with coincident centres resolved by index order"""
    delta = neighbors.minimum_image(positions[left] - positions[right], arena)
    distance = np.hypot(delta[:, 0], delta[:, 1])
    coincident = distance < COINCIDENT_DISTANCE

    normal = np.zeros_like(delta)
    regular = ~coincident
    normal[regular] = delta[regular] / distance[regular, None]
    if np.any(coincident):
        logger.warning(f"Resolved {int(coincident.sum()) // 2} coincident particle pair(s) by index order")
        normal[coincident, 0] = np.where(left[coincident] > right[coincident], 1.0, -1.0)
        distance = np.where(coincident, COINCIDENT_SEPARATION, distance)
    return distance, normal


def pair_forces(
    positions: np.ndarray,
    velocities: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    arena: Arena,
    cfg: ModelConfig,
) -> np.ndarray:
    """Social plus granular force on each `left` particle exerted by its `right` partner"""
    distance, normal = _pair_frame(positions, left, right, arena)
    tangent = np.column_stack((-normal[:, 1], normal[:, 0]))
    dv_t = np.einsum("ij,ij->i", velocities[right] - velocities[left], tangent)

    social = cfg.a_social * np.exp((cfg.diameter - distance) / cfg.b_social)
    overlap = np.clip(cfg.diameter - distance, 0.0, None)
    return (social + cfg.k_compress * overlap)[:, None] * normal + (cfg.kappa_friction * dv_t * overlap)[:, None] * tangent


def wall_force_array(positions: np.ndarray, velocities: np.ndarray, arena: Arena, cfg: ModelConfig) -> np.ndarray:
    """Social and granular forces from the walls y = 0 and y = Ly"""
    y = positions[:, 1]
    outside = (y < 0.0) | (y > arena.ly)
    if np.any(outside):
        first = int(np.flatnonzero(outside)[0])
        raise InvalidStateError(f"particle {first} at y = {y[first]!r} lies outside the corridor [0, {arena.ly}]")

    speed = np.hypot(velocities[:, 0], velocities[:, 1])
    # Both walls run along +x, so the tangential unit velocity is v_x / |v|
    unit_vx = np.divide(velocities[:, 0], speed, out=np.zeros_like(speed), where=speed > 0.0)

    half = 0.5 * cfg.diameter
    forces = np.zeros_like(positions)
    for distance, sign in ((y, 1.0), (arena.ly - y, -1.0)):
        social = cfg.a_social * np.exp((half - distance) / cfg.b_social)
        overlap = np.clip(half - distance, 0.0, None)
        forces[:, 1] += sign * (social + cfg.k_compress * overlap)
        forces[:, 0] -= cfg.kappa_friction * unit_vx * overlap
    return forces


def wall_forces(p: ParticleState, arena: Arena, cfg: ModelConfig) -> np.ndarray:
    """Net wall force on one particle; the granular term uses g(d/2 - r_iW)"""
    return wall_force_array(p.position[None, :], p.velocity[None, :], arena, cfg)[0]


def sfm_accelerations(
    state: SwarmState,
    arena: Arena,
    cfg: ModelConfig,
    target_dir=EXIT_DIRECTION,
    all_pairs: bool = False,
    pairs: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> np.ndarray:
    """
    Right-hand side of the equation of motion divided by the mass, for every particle.

    Pair terms are gathered with the cell grid up to `cfg.social_cutoff`,
    or taken from `pairs` when the caller keeps its own pair list;
    `all_pairs` sums over every j != i instead.
    """
    acc = ForceAccumulator(state.n)
    acc.add(desire_forces(state.velocities, state.mass, cfg, target_dir))

    if pairs is not None:
        left, right = pairs
    elif all_pairs:
        left, right = np.divmod(np.arange(state.n * state.n), max(state.n, 1))
        distinct = left != right
        left, right = left[distinct], right[distinct]
    else:
        grid = neighbors.build(state, arena, cfg.social_cutoff)
        left, right = neighbors.pairs_within(grid, cfg.social_cutoff)
    acc.scatter(left, pair_forces(state.positions, state.velocities, left, right, arena, cfg))

    if get_model_profile(cfg.model)["wall_forces"]:
        acc.add(wall_force_array(state.positions, state.velocities, arena, cfg))

    if not acc.is_finite():
        raise InvalidStateError("non-finite force encountered; check the time step and particle overlap")
    return acc.forces / state.mass


def sfm_acceleration(i: int, state: SwarmState, arena: Arena, cfg: ModelConfig, target_dir=EXIT_DIRECTION) -> np.ndarray:
    """Acceleration of particle i from a direct sum over all j != i"""
    p = state.particle(i)
    force = desire_force(p, cfg, target_dir)
    for j in range(state.n):
        if j == i:
            continue
        delta = neighbors.minimum_image(p.position - state.positions[j], arena)
        r_ij = float(np.hypot(*delta))
        if r_ij < COINCIDENT_DISTANCE:
            logger.warning(f"Coincident centres for particles {i} and {j}; resolving by index order")
            n_ij = np.array([1.0 if i > j else -1.0, 0.0])
            r_ij = COINCIDENT_SEPARATION
        else:
            n_ij = delta / r_ij
        t_ij = np.array([-n_ij[1], n_ij[0]])
        dv_t = float(np.dot(state.velocities[j] - p.velocity, t_ij))
        force = force + social_force_pair(r_ij, n_ij, cfg) + granular_force_pair(r_ij, n_ij, t_ij, dv_t, cfg)

    if get_model_profile(cfg.model)["wall_forces"]:
        force = force + wall_forces(p, arena, cfg)
    return force / p.mass


# ----------------------------------------------------------------------------
# Boundaries
# ----------------------------------------------------------------------------

def enforce_boundaries(
    positions: np.ndarray,
    velocities: np.ndarray,
    headings: np.ndarray,
    arena: Arena,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Wrap periodic axes and reflect bounce-back axes.

    Reflection negates the normal velocity component and recomputes the
    heading of the reflected particles only.
    """
    positions = np.array(positions, dtype=float, copy=True)
    velocities = np.array(velocities, dtype=float, copy=True)
    headings = np.array(headings, dtype=float, copy=True)
    rules = (arena.bc_x, arena.bc_y)

    for axis, (length, rule) in enumerate(zip(arena.lengths, rules)):
        coord = positions[:, axis]
        escaped = (coord < -length) | (coord > 2.0 * length)
        if np.any(escaped):
            first = int(np.flatnonzero(escaped)[0])
            raise StepSizeError(
                f"particle {first} moved beyond one box length along axis {'xy'[axis]} "
                f"(coordinate {coord[first]!r}, length {length}); reduce dt or increase substeps"
            )

        if rule == BoundaryRule.PERIODIC:
            wrapped = np.mod(coord, length)
            wrapped[wrapped >= length] = 0.0
            positions[:, axis] = wrapped
            continue

        low, high = coord < 0.0, coord > length
        reflected = low | high
        if not np.any(reflected):
            continue
        coord[low] = -coord[low]
        coord[high] = 2.0 * length - coord[high]
        positions[:, axis] = coord
        velocities[reflected, axis] = -velocities[reflected, axis]
        headings[reflected] = np.arctan2(velocities[reflected, 1], velocities[reflected, 0])

    return positions, velocities, headings


def apply_boundary(p: ParticleState, arena: Arena) -> ParticleState:
    """Boundary rules for a single particle after an unconstrained move"""
    positions, velocities, headings = enforce_boundaries(
        p.position[None, :], p.velocity[None, :], np.array([p.heading]), arena
    )
    return ParticleState(
        position=positions[0],
        velocity=velocities[0],
        heading=float(headings[0]),
        mass=p.mass,
        diameter=p.diameter,
    )


def _headings_from_velocities(velocities: np.ndarray, previous: np.ndarray) -> np.ndarray:
    headings = np.arctan2(velocities[:, 1], velocities[:, 0])
    at_rest = (velocities[:, 0] == 0.0) & (velocities[:, 1] == 0.0)
    headings[at_rest] = previous[at_rest]
    return headings


# ----------------------------------------------------------------------------
# Steps
# ----------------------------------------------------------------------------

def step_vm(
    state: SwarmState,
    arena: Arena,
    cfg: ModelConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> SwarmState:
    """
    Synchronous Vicsek step with forward update.

    `noise` holds the per-particle eta*xi values; when omitted they are drawn
    from `rng`. VM_DD applies the desired-direction transform after the noise.
    """
    if noise is None:
        noise = draw_noise(state.n, cfg, rng)
    headings = _vicsek_update(state, arena, cfg, noise)
    if cfg.model == ModelKind.VM_DD:
        headings = apply_desired_direction(headings, cfg.theta_des)

    velocities = cfg.v0 * np.column_stack((np.cos(headings), np.sin(headings)))
    positions = state.positions + cfg.dt * velocities
    positions, velocities, headings = enforce_boundaries(positions, velocities, headings, arena)
    return state.evolve(positions=positions, velocities=velocities, headings=headings, time=state.time + 1)


def step_sfm_vm(
    state: SwarmState,
    arena: Arena,
    cfg: ModelConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> SwarmState:
    """Vicsek velocity plus dt times the social-force acceleration at time t, renormalised to v0"""
    if noise is None:
        noise = draw_noise(state.n, cfg, rng)
    vm_headings = _vicsek_update(state, arena, cfg, noise)
    v_vm = cfg.v0 * np.column_stack((np.cos(vm_headings), np.sin(vm_headings)))

    combined = v_vm + cfg.dt * sfm_accelerations(state, arena, cfg)
    norm = np.hypot(combined[:, 0], combined[:, 1])
    degenerate = norm < ZERO_NORM * cfg.v0
    if np.any(degenerate):
        logger.warning(f"{int(degenerate.sum())} particle(s) with zero combined velocity keep their previous heading")
        combined[degenerate] = np.column_stack((np.cos(state.headings[degenerate]), np.sin(state.headings[degenerate])))
        norm[degenerate] = 1.0

    velocities = cfg.v0 * combined / norm[:, None]
    headings = np.arctan2(velocities[:, 1], velocities[:, 0])
    positions = state.positions + cfg.dt * velocities
    positions, velocities, headings = enforce_boundaries(positions, velocities, headings, arena)
    return state.evolve(positions=positions, velocities=velocities, headings=headings, time=state.time + 1)


def step_sfm(
    state: SwarmState,
    arena: Arena,
    cfg: ModelConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> SwarmState:
    """
    Explicit Euler over `cfg.substeps` sub-intervals of dt; speed is not renormalised.

    One Verlet list with `cfg.neighbor_skin` serves all sub-steps of the step.
    """
    h = cfg.dt / cfg.substeps
    verlet = neighbors.VerletList(arena, cfg.social_cutoff, cfg.neighbor_skin)
    current = state
    for _ in range(cfg.substeps):
        pairs = verlet.pairs(current)
        velocities = current.velocities + h * sfm_accelerations(current, arena, cfg, pairs=pairs)
        positions = current.positions + h * velocities
        headings = _headings_from_velocities(velocities, current.headings)
        positions, velocities, headings = enforce_boundaries(positions, velocities, headings, arena)
        current = current.evolve(positions=positions, velocities=velocities, headings=headings)
    return current.evolve(time=state.time + 1)


_STEPS = {
    ModelKind.VM: step_vm,
    ModelKind.VM_DD: step_vm,
    ModelKind.SFM: step_sfm,
    ModelKind.SFM_VM: step_sfm_vm,
}


def advance(
    state: SwarmState,
    arena: Arena,
    cfg: ModelConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> SwarmState:
    """One time step of the dynamics selected by cfg.model"""
    return _STEPS[cfg.model](state, arena, cfg, rng, noise)
