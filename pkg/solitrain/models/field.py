"""
Field core: spatial grid, complex component fields, densities and norms
"""
from dataclasses import dataclass
from functools import cached_property
from typing import List

import numpy as np

from solitrain.errors import ConfigError, PreconditionError


DEFAULT_N_POINTS = 4096
DEFAULT_LENGTH = 400.0
DEFAULT_Z_MIN = -200.0
DEFAULT_N0 = 1.0
MIN_N_POINTS = 256


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic 1D grid

    Samples sit at cell centres, z_j = z_min + (j + 1/2)·dz, so that z = 0 falls
    exactly between two samples whenever z_min is a whole number of cells.
    """

    n_points: int
    length: float
    z_min: float

    @property
    def dz(self) -> float:
        return self.length / self.n_points

    @property
    def z_max(self) -> float:
        return self.z_min + self.length

    @cached_property
    def z(self) -> np.ndarray:
        return self.z_min + (np.arange(self.n_points) + 0.5) * self.dz

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in numpy FFT ordering"""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dz)

    def index_of(self, position: float) -> int:
        """
        Index of the sample nearest to a position

        Raises:
            PreconditionError: If the position lies outside the grid
        """
        if not self.z_min <= position <= self.z_max:
            raise PreconditionError(
                f"position {position} outside grid [{self.z_min}, {self.z_max}]"
            )
        index = int(np.floor((position - self.z_min) / self.dz))
        return min(max(index, 0), self.n_points - 1)

    def describe(self) -> dict:
        return {"n_points": self.n_points, "L": self.length, "z_min": self.z_min}


@dataclass
class ComponentState:
    """Sampled wavefunction ψ_i of one condensate component"""

    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if not np.all(np.isfinite(self.amplitudes)):
            raise PreconditionError("component amplitudes contain NaN or Inf")


@dataclass
class SystemState:
    """N components sharing one grid, plus the simulation clock"""

    grid: Grid
    components: List[ComponentState]
    t: float = 0.0

    def __post_init__(self):
        if not self.components:
            raise PreconditionError("a system state needs at least one component")
        for i, component in enumerate(self.components):
            if component.amplitudes.shape != (self.grid.n_points,):
                raise PreconditionError(
                    f"component {i} has shape {component.amplitudes.shape}, "
                    f"grid expects ({self.grid.n_points},)"
                )
        if self.t < 0:
            raise PreconditionError(f"time must be nonnegative, got {self.t}")

    @property
    def n_components(self) -> int:
        return len(self.components)

    def as_array(self) -> np.ndarray:
        """Stacked (N, n_points) copy of all amplitudes"""
        return np.stack([c.amplitudes for c in self.components]).astype(np.complex128)

    @classmethod
    def from_array(cls, grid: Grid, amplitudes: np.ndarray, t: float) -> "SystemState":
        return cls(grid=grid, components=[ComponentState(row.copy()) for row in amplitudes], t=t)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def make_grid(n_points: int = DEFAULT_N_POINTS, length: float = DEFAULT_LENGTH,
              z_min: float = DEFAULT_Z_MIN) -> Grid:
    """
    Build a validated simulation grid

    Args:
        n_points: Number of samples (power of two, at least 256)
        length: Domain length L
        z_min: Left edge of the domain (z_max = z_min + L)

    Returns:
        Grid with z = 0 between two samples

    Raises:
        ConfigError: On non-power-of-two sizes, non-positive length, or when z = 0 is
            not interior or does not fall midway between samples
    """
    if int(n_points) != n_points or not _is_power_of_two(int(n_points)):
        raise ConfigError(f"grid.n_points must be a power of two, got {n_points}")
    if n_points < MIN_N_POINTS:
        raise ConfigError(f"grid.n_points must be at least {MIN_N_POINTS}, got {n_points}")
    if not length > 0:
        raise ConfigError(f"grid.L must be positive, got {length}")
    if not z_min < 0 < z_min + length:
        raise ConfigError(
            f"z = 0 must lie inside the grid, got z_min={z_min}, z_max={z_min + length}"
        )

    grid = Grid(n_points=int(n_points), length=float(length), z_min=float(z_min))
    cells = -grid.z_min / grid.dz
    if abs(cells - round(cells)) > 1e-9:
        raise ConfigError(
            f"z_min={z_min} is not a whole number of cells (dz={grid.dz}); "
            "z = 0 would not fall between two samples"
        )
    return grid


def init_uniform(grid: Grid, n0: float = DEFAULT_N0, n_components: int = 1) -> SystemState:
    """
    Uniform condensate ψ_i = √n0 for every component, t = 0

    Raises:
        PreconditionError: If n0 <= 0 or n_components < 1
    """
    if not n0 > 0:
        raise PreconditionError(f"n0 must be positive, got {n0}")
    if n_components < 1:
        raise PreconditionError(f"need at least one component, got {n_components}")

    amplitude = np.sqrt(n0)
    components = [
        ComponentState(np.full(grid.n_points, amplitude, dtype=np.complex128))
        for _ in range(n_components)
    ]
    return SystemState(grid=grid, components=components, t=0.0)


def dark_soliton_profile(grid: Grid, n0: float, g: float) -> np.ndarray:
    """
    Stationary dark soliton √n0·tanh(k z), k = √(g·n0/2), with chemical potential g·n0

    A partner soliton sits on the periodic boundary so the profile is smooth on the
    torus; the two are far enough apart (k·L/2 >> 1) not to interact.
    """
    if not grid.z_min == -grid.length / 2:
        raise PreconditionError("the dark-soliton profile needs a symmetric grid (z_min = -L/2)")
    if not (n0 > 0 and g > 0):
        raise PreconditionError(f"dark soliton needs n0 > 0 and g > 0, got n0={n0}, g={g}")

    k = np.sqrt(g * n0 / 2.0)
    z = grid.z
    return np.sqrt(n0) * np.tanh(k * z) * np.tanh(k * (grid.length / 2.0 - np.abs(z)))


def init_dark_soliton(grid: Grid, n0: float = DEFAULT_N0, g: float = 1.0,
                      n_components: int = 1) -> SystemState:
    profile = dark_soliton_profile(grid, n0, g).astype(np.complex128)
    components = [ComponentState(profile.copy()) for _ in range(n_components)]
    return SystemState(grid=grid, components=components, t=0.0)


def _check_index(state: SystemState, i: int):
    if not 0 <= i < state.n_components:
        raise PreconditionError(
            f"component index {i} out of range for {state.n_components} component(s)"
        )


def density(state: SystemState, i: int) -> np.ndarray:
    """Pointwise |ψ_i|²"""
    _check_index(state, i)
    psi = state.components[i].amplitudes
    return psi.real ** 2 + psi.imag ** 2


def norm(state: SystemState, i: int) -> float:
    """Particle number Σ|ψ_i|²·dz"""
    return float(np.sum(density(state, i)) * state.grid.dz)


def apply_global_phase(state: SystemState, alpha: float) -> SystemState:
    """Return a copy of the state with every component multiplied by e^{iα}"""
    factor = np.exp(1j * alpha)
    components = [ComponentState(c.amplitudes * factor) for c in state.components]
    return SystemState(grid=state.grid, components=components, t=state.t)
