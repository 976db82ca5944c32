"""
Dark-soliton detection at a fixed detector line and soliton-train frequency estimation
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks, peak_widths

from solitrain.errors import ConfigError, PreconditionError, TooCoarseSamplingError
from solitrain.services.evolution import DEFAULT_Z_DETECTOR, Trajectory

logger = logging.getLogger(__name__)

MIN_SAMPLES_PER_SEPARATION = 5
DEFAULT_WINDOW_START_FRACTION = 0.4


@dataclass(frozen=True)
class DetectorConfig:
    """
    Detector-line settings

    Attributes:
        z_d: Detector position (on the emission side, z > 0)
        depth_fraction: A dip counts when density < depth_fraction × running background
        background_window: Time span of the running-median background
        min_separation: Debounce interval between events
        window: (t_start, t_end) measurement window; None means [0.4·t_final, t_final]
    """

    z_d: float = DEFAULT_Z_DETECTOR
    depth_fraction: float = 0.6
    background_window: float = 20.0
    min_separation: float = 0.5
    window: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not 0 < self.depth_fraction < 1:
            raise ConfigError(f"detector.depth_fraction must lie in (0, 1), got {self.depth_fraction}")
        if not self.z_d > 0:
            raise ConfigError(f"detector.z_d must be on the emission side (z > 0), got {self.z_d}")
        if not self.background_window > 0:
            raise ConfigError(f"detector.background_window must be positive, got {self.background_window}")
        if not self.min_separation > 0:
            raise ConfigError(f"detector.min_separation must be positive, got {self.min_separation}")
        if self.window is not None:
            t_start, t_end = self.window
            if not t_start < t_end:
                raise ConfigError(f"detector.window must satisfy t_start < t_end, got {self.window}")

    def resolve_window(self, t_final: float) -> Tuple[float, float]:
        if self.window is None:
            return DEFAULT_WINDOW_START_FRACTION * t_final, t_final
        t_start, t_end = self.window
        if t_end > t_final + 1e-9:
            raise ConfigError(f"detector.window end {t_end} exceeds t_final={t_final}")
        return float(t_start), float(t_end)

    def to_dict(self) -> dict:
        return {
            "z_d": self.z_d,
            "depth_fraction": self.depth_fraction,
            "background_window": self.background_window,
            "min_separation": self.min_separation,
            "window": list(self.window) if self.window is not None else None,
        }


@dataclass(frozen=True)
class SolitonEvent:
    t: float
    depth: float
    width: float


@dataclass
class SolitonEventLog:
    events: List[SolitonEvent] = field(default_factory=list)
    window: Tuple[float, float] = (0.0, math.inf)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.events])

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class FrequencyMeasurement:
    """
    Train frequency from inter-arrival times

    f = (count - 1) / (t_last - t_first) for count >= 2, else 0. jitter is the
    coefficient of variation of the gaps and is None for count <= 1.
    """

    f: float
    count: int
    jitter: Optional[float]

    def to_dict(self) -> dict:
        return {"f": self.f, "count": self.count, "jitter": self.jitter}


def detect_dips(times: np.ndarray, series: np.ndarray, cfg: DetectorConfig,
                window: Tuple[float, float]) -> SolitonEventLog:
    """
    Find debounced density minima in a uniformly sampled time series

    Raises:
        TooCoarseSamplingError: If min_separation spans fewer than 5 samples
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if len(series) < 3:
        return SolitonEventLog(window=window)

    spacing = float(times[1] - times[0])
    samples_per_separation = cfg.min_separation / spacing
    if samples_per_separation < MIN_SAMPLES_PER_SEPARATION - 1e-9:
        raise TooCoarseSamplingError(
            f"detector sampling every {spacing:.4g} time units covers min_separation={cfg.min_separation} "
            f"with {samples_per_separation:.1f} samples; need at least {MIN_SAMPLES_PER_SEPARATION} "
            "(lower evolution.line_stride)"
        )

    background_size = max(int(round(cfg.background_window / spacing)), 3)
    if background_size % 2 == 0:
        background_size += 1
    background = median_filter(series, size=background_size, mode="nearest")
    distance = max(int(math.ceil(samples_per_separation - 1e-9)), 1)

    # Dips are peaks of the negated series above -depth_fraction × background.
    peaks, _ = find_peaks(-series, height=-cfg.depth_fraction * background, distance=distance)
    if len(peaks) == 0:
        return SolitonEventLog(window=window)

    widths = peak_widths(-series, peaks, rel_height=0.5)[0] * spacing
    t_start, t_end = window
    events = [
        SolitonEvent(
            t=float(times[p]),
            depth=float(1.0 - series[p] / background[p]) if background[p] > 0 else 1.0,
            width=float(w),
        )
        for p, w in zip(peaks, widths)
        if t_start <= times[p] <= t_end
    ]
    return SolitonEventLog(events=events, window=window)


def detect_events(trajectory: Trajectory, i: int, cfg: DetectorConfig) -> SolitonEventLog:
    """
    Detect dark solitons crossing the detector line of a trajectory

    Args:
        trajectory: Recorded run whose detector sits at cfg.z_d
        i: Component index
        cfg: Detector settings

    Returns:
        Event log restricted to the measurement window

    Raises:
        PreconditionError: If the detector is outside the grid, does not match the
            trajectory's detector line, or i is not a component
        TooCoarseSamplingError: If the line sampling is too coarse
    """
    grid = trajectory.grid
    if grid.index_of(cfg.z_d) != trajectory.detector_index:
        raise PreconditionError(
            f"trajectory was sampled at z={trajectory.z_detector}, detector config asks for z={cfg.z_d}"
        )
    if not 0 <= i < trajectory.n_components:
        raise PreconditionError(f"component index {i} out of range")

    window = cfg.resolve_window(trajectory.t_end)
    log = detect_dips(trajectory.line_times, trajectory.line_samples[i], cfg, window)
    logger.debug(f"Component {i}: {len(log)} event(s) in window [{window[0]:.2f}, {window[1]:.2f}]")
    return log


def measure_frequency(log: SolitonEventLog, cfg: Optional[DetectorConfig] = None) -> FrequencyMeasurement:
    """Emission frequency from the events inside the log's measurement window"""
    t_start, t_end = log.window
    if cfg is not None and cfg.window is not None:
        t_start, t_end = max(t_start, cfg.window[0]), min(t_end, cfg.window[1])
    times = np.array([e.t for e in log.events if t_start <= e.t <= t_end])
    count = len(times)
    if count <= 1:
        return FrequencyMeasurement(f=0.0, count=count, jitter=None)

    span = float(times[-1] - times[0])
    gaps = np.diff(times)
    jitter = float(np.std(gaps) / np.mean(gaps))
    return FrequencyMeasurement(f=(count - 1) / span, count=count, jitter=jitter)
