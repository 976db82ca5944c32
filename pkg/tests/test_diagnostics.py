import numpy as np
import pytest

from solitrain.services.diagnostics import (
    check_absorber, check_absorber_norms, check_convergence, check_reduction, cross_reduction_schedule,
    run_selftest, selftest_config,
)
from solitrain.services.protocol import effective_ratio

CHECK_NAMES = ["conservation", "dark_soliton", "reduction", "convergence", "absorber"]


def test_absorber_norms_must_not_grow():
    assert check_absorber_norms(np.array([1.0, 0.9, 0.9, 0.8])).passed
    result = check_absorber_norms(np.array([[1.0, 1.0], [0.9, 0.95], [0.95, 0.9]]))
    assert not result.passed
    assert result.value == pytest.approx(0.05 / 0.9)


def test_absorber_norms_tolerate_roundoff():
    assert check_absorber_norms(np.array([1.0, 1.0 + 1e-14])).passed


def test_selftest_configs():
    quick = selftest_config(quick=True)
    assert (quick.n_points, quick.length, quick.z_min) == (1024, 200.0, -100.0)
    assert selftest_config().n_points == 4096


def test_cross_reduction_schedule():
    schedule = cross_reduction_schedule()
    assert schedule.is_reducible()
    assert effective_ratio(schedule, 1).value == pytest.approx(2.8)


def test_reduction_check_passes(fast_config):
    result = check_reduction(fast_config, dt=5e-3, duration=1.0)
    assert result.passed, result.detail
    assert result.value < 1e-8


def test_absorber_check_passes(fast_config):
    result = check_absorber(fast_config, dt=5e-3, duration=1.0)
    assert result.passed, result.detail


def test_oversized_time_step_fails_every_check():
    stages = []
    results = run_selftest(quick=True, dt=0.5, progress_callback=lambda stage, name: stages.append(name))
    assert [r.name for r in results] == CHECK_NAMES
    assert stages == CHECK_NAMES
    assert not any(r.passed for r in results)
    assert all("ConfigError" in r.detail for r in results)
    assert results[0].to_dict()["passed"] is False


def test_convergence_defaults_to_config_step_and_horizon(fast_config):
    result = check_convergence(fast_config)
    assert "dt=0.005" in result.detail
    assert "over 2 time units" in result.detail
    assert result.value > 0
