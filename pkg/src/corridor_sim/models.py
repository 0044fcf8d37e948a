"""
Simulation Models
Validated parameter sets for runs and sweeps, plus request/response models for the service
"""

import hashlib
import json
import math
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelKind(str, Enum):
    """Dynamics used to advance the particles"""
    VM = "vm"
    VM_DD = "vm_dd"
    SFM = "sfm"
    SFM_VM = "sfm_vm"


class BoundaryRule(str, Enum):
    """Per-axis boundary rule"""
    PERIODIC = "periodic"
    BOUNCE_BACK = "bounce_back"


class HeadingMode(str, Enum):
    """Initial heading assignment for VM-family runs"""
    RANDOM = "random"
    ALIGNED = "aligned"


class PhiNormalization(str, Enum):
    """Denominator used for the order parameter"""
    N_V0 = "n_v0"
    SPEED_SUM = "speed_sum"


_STRICT = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(BaseModel):
    """Dynamics parameters. Lengths in metres (R0 = 1 m), times in seconds (dt = 1 s)"""
    model_config = _STRICT

    model: ModelKind = Field(ModelKind.VM, description="Dynamics: vm, vm_dd, sfm or sfm_vm")
    eta: float = Field(0.0, ge=0.0, le=1.0, description="Noise amplitude (dimensionless, [0, 1]); undefined for sfm")
    v0: float = Field(0.5, gt=0.0, description="Particle speed and desired speed v_D (m/s)")
    r0: float = Field(1.0, gt=0.0, description="Alignment radius (m)")
    dt: float = Field(1.0, gt=0.0, description="Time step (s)")
    mass: float = Field(80.0, gt=0.0, description="Particle mass (kg)")
    diameter: float = Field(0.7, gt=0.0, description="Particle diameter d (m)")
    a_social: float = Field(2000.0, ge=0.0, description="Social force strength A (N)")
    b_social: float = Field(0.08, gt=0.0, description="Social force range B (m)")
    k_compress: float = Field(1.2e5, ge=0.0, description="Contact compression constant k (kg/s^2)")
    kappa_friction: float = Field(2.4e5, ge=0.0, description="Sliding friction constant kappa (kg/(m s))")
    tau_rt: float = Field(0.5, gt=0.0, description="Velocity relaxation time tau_RT (s)")
    theta_des: float = Field(0.0, ge=-math.pi, le=math.pi, description="Desired heading for vm_dd (rad)")
    substeps: int = Field(100, ge=1, description="Explicit Euler sub-intervals per dt for sfm")
    social_cutoff: float = Field(4.0, gt=0.0, description="Pair search radius for social/contact forces (m)")
    neighbor_skin: float = Field(1.0, ge=0.0, description="Extra pair-list radius kept across sfm sub-steps (m)")

    @model_validator(mode="after")
    def validate_noise_applicability(self):
        from .schemas import get_model_profile

        if not get_model_profile(self.model)["noise_defined"] and self.eta > 0.0:
            raise ValueError(
                f"external noise η is not defined in the model ({self.model.value}); use eta = 0"
            )
        if self.social_cutoff < self.diameter:
            raise ValueError("social_cutoff must be at least one particle diameter")
        return self


class Arena(BaseModel):
    """Corridor of size lx x ly (m) with per-axis boundary rules"""
    model_config = _STRICT

    lx: float = Field(600.0, gt=0.0, description="Corridor length (m)")
    ly: float = Field(4.5, gt=0.0, description="Corridor width (m)")
    bc_x: BoundaryRule = Field(BoundaryRule.PERIODIC, description="Boundary rule along x")
    bc_y: BoundaryRule = Field(BoundaryRule.PERIODIC, description="Boundary rule along y")

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def lengths(self) -> tuple:
        return (self.lx, self.ly)

    @property
    def periodic(self) -> tuple:
        return (self.bc_x == BoundaryRule.PERIODIC, self.bc_y == BoundaryRule.PERIODIC)


class RecordFlags(BaseModel):
    """What a run records besides phi(t), which is recorded every step"""
    model_config = _STRICT

    profile_every: int = Field(0, ge=0, description="Record P(x,t) and w(t) every k steps (0 disables)")
    snapshot_every: int = Field(0, ge=0, description="Record particle snapshots every k steps (0 disables)")
    keep_profiles: bool = Field(False, description="Keep P(x,t) histograms in the series")
    dx: float = Field(5.0, gt=0.0, description="Density profile bin width (m)")
    width_threshold: Optional[float] = Field(
        None, ge=0.0, description="Bin occupancy threshold for w(t); default 1/N (strict)"
    )


class RunSpec(BaseModel):
    """A single simulation run"""
    model_config = _STRICT

    config: ModelConfig = Field(default_factory=ModelConfig, description="Dynamics parameters")
    arena: Arena = Field(default_factory=Arena, description="Corridor geometry")
    n: int = Field(300, gt=0, description="Number of particles")
    steps: int = Field(20000, gt=0, description="Number of time steps (dt each)")
    warmup: int = Field(10000, ge=0, description="Steps discarded before stationary averages")
    max_steps: Optional[int] = Field(
        None, gt=0, description="Extend the run window by window up to this many steps until phi(t) is stationary"
    )
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Generator seed (64-bit)")
    initial_heading: HeadingMode = Field(HeadingMode.RANDOM, description="VM-family initial headings")
    record: RecordFlags = Field(default_factory=RecordFlags, description="Recording flags")

    @model_validator(mode="after")
    def validate_run(self):
        from .schemas import get_model_profile

        if self.steps <= self.warmup:
            raise ValueError(f"steps ({self.steps}) must exceed warmup ({self.warmup})")
        if self.max_steps is not None and self.max_steps < self.steps:
            raise ValueError(f"max_steps ({self.max_steps}) must be at least steps ({self.steps})")
        if get_model_profile(self.config.model)["wall_forces"] and self.arena.bc_y != BoundaryRule.BOUNCE_BACK:
            raise ValueError(f"model {self.config.model.value} needs walls: set arena.bc_y = bounce_back")
        return self

    @property
    def density(self) -> float:
        return self.n / self.arena.area

    def spec_hash(self) -> str:
        """Stable short hash of the full specification"""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class SweepVariant(BaseModel):
    """One model/boundary combination of a sweep"""
    model_config = _STRICT

    model: ModelKind = Field(..., description="Dynamics")
    bc_y: BoundaryRule = Field(BoundaryRule.PERIODIC, description="Boundary rule along y")

    @property
    def label(self) -> str:
        suffix = "pbc" if self.bc_y == BoundaryRule.PERIODIC else "bbbc"
        return f"{self.model.value}-{suffix}"


class SystemSize(BaseModel):
    """(N, Lx, Ly) triple for fixed-density scans"""
    model_config = _STRICT

    n: int = Field(..., gt=0, description="Number of particles")
    lx: float = Field(..., gt=0.0, description="Corridor length (m)")
    ly: float = Field(..., gt=0.0, description="Corridor width (m)")


class SweepSpec(BaseModel):
    """Parameter sweep over noise, speed and geometry"""
    model_config = _STRICT

    base: RunSpec = Field(default_factory=RunSpec, description="Template run; axis values override it")
    variants: List[SweepVariant] = Field(
        default_factory=lambda: [SweepVariant(model=ModelKind.VM)], description="Model/boundary combinations"
    )
    etas: List[float] = Field(default_factory=lambda: [0.05], description="Noise values")
    v0s: List[float] = Field(default_factory=lambda: [0.5], description="Speeds (m/s)")
    lys: List[float] = Field(default_factory=lambda: [4.5], description="Corridor widths (m) at fixed N, Lx")
    sizes: List[SystemSize] = Field(default_factory=list, description="(N, Lx, Ly) triples; replaces lys when set")
    runs: int = Field(50, ge=1, description="Runs per grid point")
    base_seed: int = Field(0, ge=0, lt=2 ** 64, description="Seed all run seeds are derived from")

    @field_validator("variants", "etas", "v0s", "lys")
    @classmethod
    def validate_nonempty(cls, v):
        if not v:
            raise ValueError("sweep axes must be non-empty")
        return v

    @field_validator("etas")
    @classmethod
    def validate_etas(cls, v):
        if any(eta < 0.0 or eta > 1.0 for eta in v):
            raise ValueError("every eta must lie in [0, 1]")
        return v

    @field_validator("v0s", "lys")
    @classmethod
    def validate_positive(cls, v):
        if any(value <= 0.0 for value in v):
            raise ValueError("speeds and widths must be positive")
        return v


# Service payloads

class EnsembleRequest(BaseModel):
    """Request model for /ensemble"""
    spec: RunSpec = Field(..., description="Run template; per-run seeds derive from spec.seed")
    runs: int = Field(1, ge=1, le=200, description="Number of independent runs")


class FitRequest(BaseModel):
    """Request model for /fit"""
    times: List[float] = Field(..., min_length=5, description="Time indices")
    widths: List[float] = Field(..., min_length=5, description="Cluster widths w(t) (m)")
    t_min: Optional[float] = Field(None, description="Lower bound of the fit window")
    t_max: Optional[float] = Field(None, description="Upper bound of the fit window")

    @model_validator(mode="after")
    def validate_lengths(self):
        if len(self.times) != len(self.widths):
            raise ValueError("times and widths must have equal length")
        return self


class FitResponse(BaseModel):
    """Power-law fit result"""
    alpha: float = Field(..., description="Fitted exponent")
    stderr: float = Field(..., description="Standard error of alpha")
    prefactor: float = Field(..., description="Fitted prefactor")
    n_points: int = Field(..., description="Points inside the window")


class EnsembleStatsResponse(BaseModel):
    """Cross-run aggregates"""
    phi_stat: float = Field(..., description="Stationary order parameter")
    var_phi: float = Field(..., description="Pooled variance of phi")
    susceptibility: float = Field(..., description="Var(phi) * Lx * Ly")
    phi_stderr: float = Field(..., description="Standard error of phi_stat")
    runs: int = Field(..., description="Number of runs")
    samples: int = Field(..., description="Pooled post-warmup samples")
    stationary: bool = Field(..., description="Whether the retained window passed the stationarity check")
    normalization: PhiNormalization = Field(..., description="Order parameter denominator")
    alpha: Optional[float] = Field(None, description="Width growth exponent, when widths were recorded")
    alpha_stderr: Optional[float] = Field(None, description="Standard error of alpha")


class SimulationSummaryResponse(BaseModel):
    """Response model for /simulate"""
    seed: int = Field(..., description="Seed used")
    model: ModelKind = Field(..., description="Dynamics")
    spec_hash: str = Field(..., description="Hash of the run specification")
    stats: EnsembleStatsResponse = Field(..., description="Single-run stationary statistics")
    final_phi_x: float = Field(..., description="Mean velocity along +x over v0 at the last step")
    times: List[int] = Field(..., description="Time indices")
    phi: List[float] = Field(..., description="Order parameter per step")


class ModelProfileResponse(BaseModel):
    """Catalogue entry for one model"""
    model: ModelKind
    description: str
    noise_defined: bool
    wall_forces: bool
    speed_renormalized: bool
    normalization: PhiNormalization


class HealthResponse(BaseModel):
    """Health check response"""
    status: str = Field(..., description="Service status")
    version: str = Field(..., description="API version")
    supported_models: List[str] = Field(..., description="Model identifiers")
    max_service_steps: int = Field(..., description="Largest accepted step count")


class ErrorResponse(BaseModel):
    """Error response model"""
    success: bool = Field(False, description="Always false for errors")
    error: str = Field(..., description="Error message")
    details: Optional[Dict[str, Any]] = Field(None, description="Additional error details")
