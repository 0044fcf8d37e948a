"""
Test Configuration and Fixtures
"""

import os

import numpy as np
import pytest

from src.corridor_sim.models import Arena, BoundaryRule, ModelConfig, ModelKind, RecordFlags, RunSpec
from src.corridor_sim.state import SwarmState


def make_state(positions, headings=None, v0=0.5, velocities=None, time=0):
    """Swarm from positions plus either headings (constant speed) or explicit velocities"""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if velocities is not None:
        velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
        headings = np.arctan2(velocities[:, 1], velocities[:, 0])
        return SwarmState(positions, velocities, headings, time=time)
    return SwarmState.from_headings(positions, headings, v0, time=time)


@pytest.fixture
def periodic_arena():
    """Standard 600 x 4.5 corridor, periodic on both axes"""
    return Arena(lx=600.0, ly=4.5)


@pytest.fixture
def walled_arena():
    """Standard 600 x 4.5 corridor with bounce-back walls along y"""
    return Arena(lx=600.0, ly=4.5, bc_y=BoundaryRule.BOUNCE_BACK)


@pytest.fixture
def vm_config():
    return ModelConfig(model=ModelKind.VM, eta=0.0)


@pytest.fixture
def sfm_config():
    return ModelConfig(model=ModelKind.SFM)


@pytest.fixture
def small_vm_spec():
    """Short VM run on a small periodic corridor"""
    return RunSpec(
        config=ModelConfig(model=ModelKind.VM, eta=0.2),
        arena=Arena(lx=20.0, ly=4.5),
        n=30,
        steps=40,
        warmup=20,
        seed=7,
        record=RecordFlags(profile_every=10, snapshot_every=20, dx=5.0),
    )


@pytest.fixture
def mock_env_vars():
    """Mock environment variables for testing"""
    original_env = os.environ.copy()

    os.environ["CORRIDOR_JOBS"] = "1"
    os.environ["CORRIDOR_LOG_LEVEL"] = "WARNING"

    yield

    os.environ.clear()
    os.environ.update(original_env)
