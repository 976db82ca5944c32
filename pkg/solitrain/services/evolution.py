"""
Time propagation of the coupled 1D Gross-Pitaevskii system

    i ∂_t ψ_i = -∂²_z ψ_i + g_i |ψ_i|² ψ_i + Σ_{j≠i} g_ij |ψ_j|² ψ_i + θ_i ψ_i

by Strang splitting: half a local (pointwise phase) step, a full kinetic step in
Fourier space, and the second local half step. Boundaries are periodic; an optional
sponge layer damps the field near both edges.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from solitrain.errors import ConfigError, NumericalBlowUpError, PreconditionError
from solitrain.models.field import Grid, SystemState
from solitrain.services.protocol import StepSchedule

logger = logging.getLogger(__name__)

MAX_DT = 1e-2
BLOW_UP_FACTOR = 100.0
DEFAULT_Z_DETECTOR = 10.0
DEFAULT_DT = 5e-4
DEFAULT_T_FINAL = 120.0


@dataclass(frozen=True)
class AbsorberConfig:
    enabled: bool = False
    width: float = 20.0
    strength: float = 0.01

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigError(f"evolution.absorber.width must be positive, got {self.width}")
        if not self.strength >= 0:
            raise ConfigError(f"evolution.absorber.strength must be >= 0, got {self.strength}")

    def to_dict(self) -> dict:
        return {"enabled": self.enabled, "width": self.width, "strength": self.strength}


@dataclass(frozen=True)
class EvolutionConfig:
    """
    Time-stepping parameters

    Attributes:
        dt: Time step (0 < dt <= 1e-2)
        t_final: Total evolution time
        record_stride: Steps between density snapshots
        line_stride: Steps between detector-line samples
        absorber: Sponge layer settings (disabled by default)
    """

    dt: float = DEFAULT_DT
    t_final: float = DEFAULT_T_FINAL
    record_stride: int = 200
    line_stride: int = 20
    absorber: AbsorberConfig = field(default_factory=AbsorberConfig)

    def __post_init__(self):
        if not 0 < self.dt <= MAX_DT:
            raise ConfigError(f"evolution.dt must satisfy 0 < dt <= {MAX_DT}, got {self.dt}")
        if not self.t_final > 0:
            raise ConfigError(f"evolution.t_final must be positive, got {self.t_final}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError(f"evolution.record_stride must be an integer >= 1, got {self.record_stride}")
        if int(self.line_stride) != self.line_stride or self.line_stride < 1:
            raise ConfigError(f"evolution.line_stride must be an integer >= 1, got {self.line_stride}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def refined(self, factor: int) -> "EvolutionConfig":
        """Same recorded times with dt divided by an integer factor"""
        return replace(
            self,
            dt=self.dt / factor,
            record_stride=self.record_stride * factor,
            line_stride=self.line_stride * factor,
        )

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "record_stride": self.record_stride,
            "line_stride": self.line_stride,
            "absorber": self.absorber.to_dict(),
        }


@dataclass
class Trajectory:
    """
    Recorded evolution

    Attributes:
        times: Snapshot times, strictly increasing
        density_records: Per component, an array (n_records, n_points) of |ψ_i|²
        line_times: Detector sample times
        line_samples: Per component, the density at the detector at each line time
        norms: Array (n_records, N) of per-component norms at snapshot times
        final_state: State at the last completed step
    """

    grid: Grid
    times: np.ndarray
    density_records: List[np.ndarray]
    line_times: np.ndarray
    line_samples: List[np.ndarray]
    z_detector: float
    detector_index: int
    norms: np.ndarray
    final_state: SystemState

    @property
    def n_components(self) -> int:
        return len(self.density_records)

    @property
    def t_end(self) -> float:
        return float(self.line_times[-1]) if len(self.line_times) else 0.0


class SplitStepPropagator:
    """
    Strang split-step integrator for a fixed grid, schedule and time step

    Works on stacked (N, n_points) complex arrays.
    """

    def __init__(self, grid: Grid, schedule: StepSchedule, dt: float):
        if not 0 < dt <= MAX_DT:
            raise PreconditionError(f"dt must satisfy 0 < dt <= {MAX_DT}, got {dt}")
        self.grid = grid
        self.schedule = schedule
        self.dt = dt
        self.self_g, self.cross_g, self.phase = schedule.sample(grid)
        self.has_cross = bool(np.any(self.cross_g))
        self.kinetic = np.exp(-1j * grid.k ** 2 * dt)

    def local_potential(self, psi: np.ndarray) -> np.ndarray:
        dens = psi.real ** 2 + psi.imag ** 2
        potential = self.self_g * dens + self.phase
        if self.has_cross:
            potential = potential + np.einsum("ijz,jz->iz", self.cross_g, dens)
        return potential

    def local_half_step(self, psi: np.ndarray) -> np.ndarray:
        # Local step is a pure phase, so densities (self and cross) stay frozen within it.
        return psi * np.exp(-0.5j * self.dt * self.local_potential(psi))

    def kinetic_step(self, psi: np.ndarray) -> np.ndarray:
        return np.fft.ifft(np.fft.fft(psi, axis=1) * self.kinetic, axis=1)

    def step(self, psi: np.ndarray) -> np.ndarray:
        psi = self.local_half_step(psi)
        psi = self.kinetic_step(psi)
        return self.local_half_step(psi)


def _check_components(state: SystemState, schedule: StepSchedule):
    if schedule.n_components != state.n_components:
        raise PreconditionError(
            f"schedule has {schedule.n_components} component(s), state has {state.n_components}"
        )


def _blow_up_limit(psi: np.ndarray) -> float:
    """Squared amplitude bound: (100·√n0)² with n0 the largest mean initial density"""
    n0 = float(np.max(np.mean(psi.real ** 2 + psi.imag ** 2, axis=1)))
    return (BLOW_UP_FACTOR ** 2) * max(n0, np.finfo(float).tiny)


def _is_blown_up(psi: np.ndarray, limit: float) -> bool:
    peak = np.max(psi.real ** 2 + psi.imag ** 2)
    # NaN compares false, so it is caught here too.
    return not peak <= limit


def absorber_mask(grid: Grid, absorber: AbsorberConfig) -> np.ndarray:
    """
    Multiplicative sponge: 1 in the bulk, ramping to exp(-strength) at both edges
    """
    if absorber.width >= grid.length / 4:
        raise ConfigError(
            f"evolution.absorber.width must be below L/4={grid.length / 4}, got {absorber.width}"
        )
    distance = np.minimum(grid.z - grid.z_min, grid.z_max - grid.z)
    ramp = np.clip((absorber.width - distance) / absorber.width, 0.0, 1.0) ** 2
    return np.exp(-absorber.strength * ramp)


def step(state: SystemState, schedule: StepSchedule, dt: float) -> SystemState:
    """
    Advance a state by one Strang step

    Raises:
        PreconditionError: On component-count mismatch or dt out of bounds
        NumericalBlowUpError: If the result is non-finite or runaway
    """
    _check_components(state, schedule)
    propagator = SplitStepPropagator(state.grid, schedule, dt)
    psi = state.as_array()
    limit = _blow_up_limit(psi)
    psi = propagator.step(psi)
    t = state.t + dt
    if _is_blown_up(psi, limit):
        raise NumericalBlowUpError("non-finite or runaway amplitude", time=t)
    return SystemState.from_array(state.grid, psi, t)


class _Recorder:
    """Collects snapshots and detector samples during a run"""

    def __init__(self, grid: Grid, n_components: int, detector_index: int, z_detector: float):
        self.grid = grid
        self.detector_index = detector_index
        self.z_detector = z_detector
        self.times: List[float] = []
        self.records: List[List[np.ndarray]] = [[] for _ in range(n_components)]
        self.norms: List[np.ndarray] = []
        self.line_times: List[float] = []
        self.line: List[List[float]] = [[] for _ in range(n_components)]

    def snapshot(self, t: float, psi: np.ndarray):
        dens = psi.real ** 2 + psi.imag ** 2
        self.times.append(t)
        for i, row in enumerate(dens):
            self.records[i].append(row)
        self.norms.append(np.sum(dens, axis=1) * self.grid.dz)

    def sample_line(self, t: float, psi: np.ndarray):
        values = psi[:, self.detector_index]
        dens = values.real ** 2 + values.imag ** 2
        self.line_times.append(t)
        for i, value in enumerate(dens):
            self.line[i].append(float(value))

    def build(self, final_state: SystemState) -> Trajectory:
        n = self.grid.n_points
        return Trajectory(
            grid=self.grid,
            times=np.asarray(self.times),
            density_records=[np.asarray(r).reshape(-1, n) for r in self.records],
            line_times=np.asarray(self.line_times),
            line_samples=[np.asarray(s) for s in self.line],
            z_detector=self.z_detector,
            detector_index=self.detector_index,
            norms=np.asarray(self.norms).reshape(len(self.times), -1),
            final_state=final_state,
        )


def evolve(state: SystemState, schedule: StepSchedule, config: EvolutionConfig,
           z_detector: float = DEFAULT_Z_DETECTOR,
           progress_callback: Optional[Callable[[str, str], None]] = None) -> Trajectory:
    """
    Repeated Strang steps from `state` up to t_final with snapshot recording

    Args:
        state: Initial state (usually the uniform condensate)
        schedule: Post-quench schedule, constant in time
        config: Time-stepping and recording parameters
        z_detector: Position of the detector line sampled every `line_stride` steps
        progress_callback: Optional callback(stage, message)

    Returns:
        Trajectory with snapshots at t0, t0 + record_stride·dt, ... and the final state

    Raises:
        PreconditionError: On component-count mismatch or detector outside the grid
        NumericalBlowUpError: With the failure time and the partial trajectory attached
    """
    _check_components(state, schedule)
    grid = state.grid
    detector_index = grid.index_of(z_detector)
    propagator = SplitStepPropagator(grid, schedule, config.dt)
    mask = absorber_mask(grid, config.absorber) if config.absorber.enabled else None

    psi = state.as_array()
    limit = _blow_up_limit(psi)
    t0 = state.t
    n_steps = config.n_steps
    recorder = _Recorder(grid, state.n_components, detector_index, z_detector)
    recorder.snapshot(t0, psi)
    recorder.sample_line(t0, psi)

    logger.debug(
        f"Evolving {state.n_components} component(s) for {n_steps} steps "
        f"(dt={config.dt}, n_points={grid.n_points}, absorber={config.absorber.enabled})"
    )
    report_every = max(n_steps // 10, 1)

    for n in range(1, n_steps + 1):
        previous = psi
        psi = propagator.step(psi)
        if mask is not None:
            psi = psi * mask
        t = t0 + n * config.dt

        if _is_blown_up(psi, limit):
            last_good = SystemState.from_array(grid, previous, t - config.dt)
            partial = recorder.build(final_state=last_good)
            logger.warning(f"Numerical blow-up at t={t:.4f}; {len(partial.times)} snapshot(s) kept")
            raise NumericalBlowUpError("non-finite or runaway amplitude", time=t, trajectory=partial)

        if n % config.line_stride == 0:
            recorder.sample_line(t, psi)
        if n % config.record_stride == 0:
            recorder.snapshot(t, psi)
        if progress_callback and n % report_every == 0:
            progress_callback("evolving", f"t={t:.2f}/{t0 + config.t_final:.2f}")

    final_state = SystemState.from_array(grid, psi, t0 + n_steps * config.dt)
    return recorder.build(final_state)


def energy(state: SystemState, schedule: StepSchedule) -> float:
    """
    Conserved energy of a constant-in-time schedule

    E = Σ_i ∫ |∂_z ψ_i|² + (g_i/2)|ψ_i|⁴ + θ_i|ψ_i|² dz + Σ_{i<j} ∫ g_ij |ψ_i|²|ψ_j|² dz,
    with the derivative taken spectrally.
    """
    _check_components(state, schedule)
    grid = state.grid
    self_g, cross_g, phase = schedule.sample(grid)
    psi = state.as_array()
    dens = psi.real ** 2 + psi.imag ** 2
    dpsi = np.fft.ifft(1j * grid.k * np.fft.fft(psi, axis=1), axis=1)

    total = np.sum(dpsi.real ** 2 + dpsi.imag ** 2)
    total += np.sum(0.5 * self_g * dens ** 2 + phase * dens)
    n = state.n_components
    for i in range(n):
        for j in range(i + 1, n):
            total += np.sum(cross_g[i, j] * dens[i] * dens[j])
    return float(total * grid.dz)
