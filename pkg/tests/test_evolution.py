import numpy as np
import pytest

from solitrain.errors import ConfigError, NumericalBlowUpError, PreconditionError
from solitrain.models.field import (
    ComponentState, SystemState, dark_soliton_profile, density, init_dark_soliton, init_uniform, norm,
)
from solitrain.services.evolution import (
    AbsorberConfig, EvolutionConfig, SplitStepPropagator, absorber_mask, energy, evolve, step,
)
from solitrain.services.protocol import StepProfile, StepSchedule, make_quench, plan_add


def short_run(dt=5e-3, t_final=1.0, record_stride=20, line_stride=2, absorber=None):
    return EvolutionConfig(
        dt=dt, t_final=t_final, record_stride=record_stride, line_stride=line_stride,
        absorber=absorber or AbsorberConfig(),
    )


@pytest.mark.parametrize("kwargs", [
    {"dt": 0.5}, {"dt": 0.0}, {"t_final": -1.0}, {"record_stride": 0}, {"line_stride": 1.5},
])
def test_evolution_config_validation(kwargs):
    with pytest.raises(ConfigError):
        EvolutionConfig(**kwargs)


def test_refined_keeps_recorded_times():
    config = short_run().refined(2)
    assert config.dt == pytest.approx(2.5e-3)
    assert config.record_stride == 40
    assert config.line_stride == 4
    assert config.n_steps == 400


def test_recording_schedule(small_grid):
    trajectory = evolve(init_uniform(small_grid), make_quench(2.2), short_run(), z_detector=4.0)
    np.testing.assert_allclose(trajectory.times, np.linspace(0.0, 1.0, 11), atol=1e-12)
    assert trajectory.density_records[0].shape == (11, 256)
    assert len(trajectory.line_times) == 101
    assert trajectory.norms.shape == (11, 1)
    assert trajectory.final_state.t == pytest.approx(1.0)
    assert trajectory.detector_index == small_grid.index_of(4.0)


def test_uniform_state_is_stationary_without_quench(small_grid):
    trajectory = evolve(init_uniform(small_grid, n0=1.5), make_quench(1.0), short_run(), z_detector=4.0)
    np.testing.assert_allclose(density(trajectory.final_state, 0), 1.5, atol=1e-12)
    np.testing.assert_allclose(trajectory.line_samples[0], 1.5, atol=1e-12)


def test_plane_wave_phase_is_exact(small_grid):
    k0 = 2 * np.pi * 3 / small_grid.length
    n0, g = 0.8, 1.3
    psi = np.sqrt(n0) * np.exp(1j * k0 * small_grid.z)
    state = SystemState(grid=small_grid, components=[ComponentState(psi)])
    trajectory = evolve(state, make_quench(1.0, g_right=g), short_run(), z_detector=4.0)

    expected = psi * np.exp(-1j * (k0 ** 2 + g * n0) * 1.0)
    np.testing.assert_allclose(trajectory.final_state.components[0].amplitudes, expected, atol=1e-10)


def test_norm_is_conserved_through_a_quench(small_grid):
    trajectory = evolve(init_uniform(small_grid, n_components=2), plan_add(1.0, 0.6), short_run(),
                        z_detector=4.0)
    norms = trajectory.norms
    np.testing.assert_allclose(norms, norms[0], rtol=1e-10)


def test_energy_is_conserved_for_a_smoothed_step(small_grid):
    schedule = StepSchedule.build([StepProfile(2.2, 1.0, smoothing=1.0)])
    state = init_uniform(small_grid)
    trajectory = evolve(state, schedule, short_run(dt=1e-3, record_stride=100, line_stride=10),
                        z_detector=4.0)
    e0 = energy(state, schedule)
    e1 = energy(trajectory.final_state, schedule)
    assert abs(e1 - e0) / abs(e0) < 1e-4


def test_energy_of_uniform_state(small_grid):
    state = init_uniform(small_grid, n0=2.0)
    # (g/2)·n0²·L with g = 1
    assert energy(state, make_quench(1.0)) == pytest.approx(0.5 * 4.0 * 64.0)


def test_dark_soliton_is_stationary(small_grid):
    state = init_dark_soliton(small_grid, n0=1.0, g=1.0)
    expected = dark_soliton_profile(small_grid, 1.0, 1.0) ** 2
    trajectory = evolve(state, make_quench(1.0), short_run(dt=5e-4, record_stride=400, line_stride=20),
                        z_detector=4.0)
    drift = np.max(np.abs(trajectory.density_records[0] - expected))
    assert drift < 1e-5


def test_local_half_step_keeps_densities(small_grid):
    schedule = plan_add(1.0, 0.6)
    propagator = SplitStepPropagator(small_grid, schedule, 5e-3)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=(2, 256)) + 1j * rng.normal(size=(2, 256))
    half = propagator.local_half_step(psi)
    np.testing.assert_allclose(np.abs(half), np.abs(psi), rtol=1e-12)


def test_single_step_advances_clock(small_grid):
    state = init_uniform(small_grid)
    after = step(state, make_quench(2.2), 5e-3)
    assert after.t == pytest.approx(5e-3)
    assert norm(after, 0) == pytest.approx(norm(state, 0), rel=1e-12)


def test_component_mismatch_is_rejected(small_grid):
    with pytest.raises(PreconditionError):
        evolve(init_uniform(small_grid, n_components=1), plan_add(1.0, 0.6), short_run(), z_detector=4.0)


def test_detector_outside_grid_is_rejected(small_grid):
    with pytest.raises(PreconditionError):
        evolve(init_uniform(small_grid), make_quench(2.2), short_run(), z_detector=100.0)


def test_blow_up_carries_partial_trajectory(small_grid):
    state = init_uniform(small_grid, n0=4.0)
    schedule = make_quench(1.0, g_right=1e308)
    with np.errstate(all="ignore"):
        with pytest.raises(NumericalBlowUpError) as excinfo:
            evolve(state, schedule, short_run(), z_detector=4.0)
    error = excinfo.value
    assert error.time == pytest.approx(5e-3)
    assert error.exit_code == 2
    assert "blow-up" in str(error)
    assert error.trajectory is not None
    assert len(error.trajectory.times) == 1
    assert error.trajectory.final_state.t == 0.0


def test_absorber_mask_shape(small_grid):
    mask = absorber_mask(small_grid, AbsorberConfig(enabled=True, width=8.0, strength=0.01))
    assert mask[small_grid.index_of(0.0)] == 1.0
    assert mask[0] < 1.0 and mask[-1] < 1.0
    assert mask[0] == pytest.approx(np.exp(-0.01 * (1 - 0.125 / 8.0) ** 2))
    with pytest.raises(ConfigError):
        absorber_mask(small_grid, AbsorberConfig(enabled=True, width=16.0))


def test_absorber_never_increases_norm(small_grid):
    config = short_run(absorber=AbsorberConfig(enabled=True, width=8.0, strength=0.01))
    trajectory = evolve(init_uniform(small_grid), make_quench(2.2), config, z_detector=4.0)
    norms = trajectory.norms[:, 0]
    assert np.all(np.diff(norms) <= 1e-12 * norms[:-1])
    assert norms[-1] < norms[0]
