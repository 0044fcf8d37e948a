"""
FastAPI Application for Corridor Simulations
Runs small simulations, ensembles and growth-exponent fits over HTTP
"""

import logging
from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI, HTTPException, Request, status
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from src.corridor_sim import __version__, runner
from src.corridor_sim.config import configure_logging, get_settings
from src.corridor_sim.exceptions import CorridorSimError
from src.corridor_sim.models import (
    EnsembleRequest, EnsembleStatsResponse, ErrorResponse, FitRequest, FitResponse,
    HealthResponse, ModelProfileResponse, RunSpec, SimulationSummaryResponse,
)
from src.corridor_sim.observables import fit_power_law
from src.corridor_sim.schemas import MODEL_PROFILES, get_supported_models

settings = get_settings()
configure_logging(settings.log_level)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan events"""
    logger.info(f"Starting Corridor Simulation API (max steps {settings.max_service_steps}, jobs {settings.jobs})")
    yield
    logger.info("Shutting down Corridor Simulation API...")


# Create FastAPI app
app = FastAPI(
    title="Corridor Simulation Service",
    description="Vicsek, social-force and combined corridor dynamics with order-parameter statistics",
    version=__version__,
    debug=settings.debug,
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(CorridorSimError)
async def simulation_error_handler(request: Request, exc: CorridorSimError):
    logger.warning(f"{request.url.path} rejected: {exc}")
    body = ErrorResponse(error=str(exc), details={"type": type(exc).__name__})
    return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, content=body.model_dump())


def _check_steps(spec: RunSpec) -> None:
    steps = max(spec.steps, spec.max_steps or 0)
    if steps > settings.max_service_steps:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"steps ({steps}) exceeds the service limit of {settings.max_service_steps}; use the CLI",
        )


@app.get("/health", response_model=HealthResponse)
async def health_check():
    """Health check endpoint"""
    return HealthResponse(
        status="healthy",
        version=__version__,
        supported_models=get_supported_models(),
        max_service_steps=settings.max_service_steps,
    )


@app.get("/models", response_model=list[ModelProfileResponse])
async def get_models():
    """Model catalogue"""
    return [
        ModelProfileResponse(
            model=kind,
            description=profile["description"],
            noise_defined=profile["noise_defined"],
            wall_forces=profile["wall_forces"],
            speed_renormalized=profile["speed_renormalized"],
            normalization=profile["normalization"],
        )
        for kind, profile in MODEL_PROFILES.items()
    ]


@app.post("/simulate", response_model=SimulationSummaryResponse)
async def simulate(spec: RunSpec):
    """
    Run one simulation and return phi(t) with its stationary statistics.

    The run executes in the thread pool; identical requests return identical series.
    """
    _check_steps(spec)
    logger.info(f"Simulating {spec.config.model.value} N={spec.n} steps={spec.steps} seed={spec.seed}")

    series = await run_in_threadpool(runner.run_single, spec)
    summary = runner.summarize_series(spec, [series])

    return SimulationSummaryResponse(
        seed=spec.seed,
        model=spec.config.model,
        spec_hash=spec.spec_hash(),
        stats=EnsembleStatsResponse(**summary.to_dict()),
        final_phi_x=float(series.phi_x[-1]),
        times=series.times.tolist(),
        phi=series.phi.tolist(),
    )


@app.post("/ensemble", response_model=EnsembleStatsResponse)
async def ensemble(request: EnsembleRequest):
    """Independent runs with seeds derived from spec.seed, aggregated over the pooled window"""
    _check_steps(request.spec)
    summary = await run_in_threadpool(runner.run_ensemble, request.spec, request.runs, settings.jobs)
    return EnsembleStatsResponse(**summary.to_dict())


@app.post("/fit", response_model=FitResponse)
async def fit(request: FitRequest):
    """Least-squares power law w = prefactor * t**alpha on log-log axes"""
    result = fit_power_law(request.times, request.widths, request.t_min, request.t_max)
    return FitResponse(alpha=result.alpha, stderr=result.stderr, prefactor=result.prefactor, n_points=result.n_points)


if __name__ == "__main__":
    # Load environment variables
    from dotenv import load_dotenv

    load_dotenv()
    uvicorn.run(app, host=settings.host, port=settings.port, log_level=settings.log_level.lower())
