import math
from typing import Callable

import pytest

from solitrain.config import SimulationConfig
from solitrain.models.field import make_grid
from solitrain.services.calibration import RunMeasurement
from solitrain.services.detection import DetectorConfig, FrequencyMeasurement, SolitonEventLog
from solitrain.services.evolution import EvolutionConfig


@pytest.fixture
def small_grid():
    """256 samples on [-32, 32], dz = 0.25"""
    return make_grid(256, 64.0, -32.0)


@pytest.fixture
def fast_config():
    """Small symmetric grid and a short run; detector sampled every 0.01 time units"""
    return SimulationConfig(
        n_points=256,
        length=64.0,
        z_min=-32.0,
        evolution=EvolutionConfig(dt=5e-3, t_final=2.0, record_stride=20, line_stride=2),
        detector=DetectorConfig(z_d=4.0),
    )


def fake_measurement(f: float, blow_up: bool = False) -> RunMeasurement:
    count = 0 if f == 0 else 10
    return RunMeasurement(
        frequency=FrequencyMeasurement(f=f, count=count, jitter=None if count <= 1 else 0.01),
        events=SolitonEventLog(window=(0.0, 50.0)),
        trajectory=None,
        blow_up=blow_up,
        blow_up_time=4.2 if blow_up else None,
    )


@pytest.fixture
def linear_response() -> Callable[[float], float]:
    """Fake r-branch response: zero up to 2.2, then 0.1 per unit of s"""
    return lambda s: max(0.0, 0.1 * (s - 2.2))


@pytest.fixture
def fake_measure() -> Callable[[Callable[[float], float]], Callable]:
    """
    Build a stand-in for measure_schedule whose frequency depends only on the
    effective left/right ratio of component 0
    """
    def build(response: Callable[[float], float], blow_up_below: float = -math.inf):
        def measure(schedule, config, component=0, progress_callback=None):
            total = schedule.effective_profile(0)
            s = total.left / total.right
            if s < blow_up_below:
                return fake_measurement(0.0, blow_up=True)
            return fake_measurement(response(s))
        return measure
    return build
