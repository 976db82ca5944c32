"""
Frequency-vs-ratio calibration tables and the working-memory encode/decode maps
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from solitrain.config import SimulationConfig
from solitrain.errors import (
    CalibrationError, DecodeRangeError, NumericalBlowUpError, PreconditionError,
)
from solitrain.services.detection import (
    FrequencyMeasurement, SolitonEventLog, detect_dips, detect_events, measure_frequency,
)
from solitrain.services.evolution import Trajectory, evolve
from solitrain.services.protocol import (
    BRANCH_R, BRANCH_RA, BRANCHES, CritConstants, StepSchedule, make_quench,
)

logger = logging.getLogger(__name__)

# Frequencies within this margin above the table maximum are clamped instead of rejected.
RANGE_SLACK = 1e-12


@dataclass
class RunMeasurement:
    """
    One simulate-detect-measure pass

    On blow-up the trajectory is the partial one and the frequency is measured
    from events up to the failure time.
    """

    frequency: FrequencyMeasurement
    events: SolitonEventLog
    trajectory: Optional[Trajectory]
    blow_up: bool = False
    blow_up_time: Optional[float] = None


def measure_schedule(schedule: StepSchedule, config: SimulationConfig, component: int = 0,
                     progress_callback: Optional[Callable[[str, str], None]] = None) -> RunMeasurement:
    """
    Evolve a schedule from the configured initial state and measure its train frequency

    Raises:
        PreconditionError: If the component index or detector is invalid
        TooCoarseSamplingError: If the detector line is sampled too coarsely
    """
    g_right = schedule.self_g[0].right
    state = config.initial_state(schedule.n_components, g=g_right if g_right > 0 else 1.0)
    try:
        trajectory = evolve(state, schedule, config.evolution, config.detector.z_d, progress_callback)
    except NumericalBlowUpError as e:
        partial = e.trajectory
        t_start, t_end = config.detector.resolve_window(config.evolution.t_final)
        t_end = min(t_end, partial.t_end if partial is not None else 0.0)
        if partial is None or t_end <= t_start or len(partial.line_times) < 3:
            events = SolitonEventLog(window=(t_start, max(t_end, t_start)))
        else:
            events = detect_dips(partial.line_times, partial.line_samples[component],
                                 config.detector, (t_start, t_end))
        return RunMeasurement(
            frequency=measure_frequency(events),
            events=events,
            trajectory=partial,
            blow_up=True,
            blow_up_time=e.time,
        )

    events = detect_events(trajectory, component, config.detector)
    return RunMeasurement(frequency=measure_frequency(events), events=events, trajectory=trajectory)


@dataclass
class CalibrationTable:
    """
    Sampled frequency map of one branch

    Attributes:
        branch: "r" (repulsive to repulsive) or "ra" (repulsive to attractive)
        samples: (s, f) pairs with s strictly increasing
        crit: Critical ratios the table was built against
        fingerprint: SimulationConfig fingerprint of the producing runs
        gap_samples: s values lost to numerical blow-up during calibration
    """

    branch: str
    samples: List[Tuple[float, float]]
    crit: CritConstants = field(default_factory=CritConstants)
    fingerprint: str = ""
    gap_samples: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise CalibrationError(f"unknown branch {self.branch!r}, expected one of {BRANCHES}")
        self.samples = [(float(s), float(f)) for s, f in self.samples]
        if not self.samples:
            raise CalibrationError("calibration table has no samples")
        for s, f in self.samples:
            if not (math.isfinite(s) and math.isfinite(f) and f >= 0):
                raise CalibrationError(f"invalid calibration sample (s={s}, f={f})")
        s_values = [s for s, _ in self.samples]
        if any(b <= a for a, b in zip(s_values, s_values[1:])):
            raise CalibrationError(f"calibration s values must be strictly increasing, got {s_values}")
        violations = monotonicity_violations(self.branch, self.samples)
        if violations:
            raise CalibrationError(f"non-monotone calibration data on branch {self.branch}: {violations}")
        quiet = [(s, f) for s, f in self.samples if f > 0 and self._is_quiet(s)]
        if quiet:
            raise CalibrationError(
                f"nonzero frequency on the quiet side of the threshold {self.threshold:.6g}: {quiet}"
            )

    def _is_quiet(self, s: float) -> bool:
        return s <= self.crit.c_up if self.branch == BRANCH_R else s >= self.crit.c_down

    @property
    def s_values(self) -> np.ndarray:
        return np.array([s for s, _ in self.samples])

    @property
    def f_values(self) -> np.ndarray:
        return np.array([f for _, f in self.samples])

    @property
    def threshold(self) -> float:
        return self.crit.c_up if self.branch == BRANCH_R else self.crit.c_down

    @property
    def max_f(self) -> float:
        return float(self.f_values.max())

    def _inversion_nodes(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Strictly increasing (f, s) nodes walking away from the threshold

        The threshold itself is the f = 0 anchor; on a plateau the sample closest to
        the threshold is kept.
        """
        if self.branch == BRANCH_R:
            ordered = [(s, f) for s, f in self.samples if s > self.threshold]
        else:
            ordered = [(s, f) for s, f in reversed(self.samples) if s < self.threshold]
        f_nodes, s_nodes = [0.0], [self.threshold]
        for s, f in ordered:
            if f > f_nodes[-1]:
                f_nodes.append(f)
                s_nodes.append(s)
        return np.array(f_nodes), np.array(s_nodes)

    def invert(self, f: float) -> float:
        """
        Piecewise-linear f -> s

        Raises:
            PreconditionError: If f is negative or not finite
            DecodeRangeError: If f exceeds the calibrated range
        """
        if not (math.isfinite(f) and f >= 0):
            raise PreconditionError(f"frequency must be finite and >= 0, got {f}")
        f_nodes, s_nodes = self._inversion_nodes()
        if f > f_nodes[-1] + RANGE_SLACK:
            raise DecodeRangeError(
                f"frequency {f:.6g} above calibrated range [0, {f_nodes[-1]:.6g}] on branch "
                f"{self.branch}; extend the calibration range"
            )
        return float(np.interp(min(f, f_nodes[-1]), f_nodes, s_nodes))


def monotonicity_violations(branch: str, samples: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """
    Samples breaking the branch's monotonicity

    Branch r needs f nondecreasing in s; branch ra needs f nondecreasing as s
    decreases. Returns the offending (s, f) pairs.
    """
    ordered = list(samples) if branch == BRANCH_R else list(reversed(samples))
    violations = []
    running_max = -math.inf
    for s, f in ordered:
        if f < running_max:
            violations.append((s, f))
        running_max = max(running_max, f)
    return violations


def encode(a: float, branch: str = BRANCH_R, crit: CritConstants = CritConstants()) -> float:
    """
    Number -> quench ratio: a + c_up on branch r, -a + c_down on branch ra

    Raises:
        PreconditionError: If a is negative or the branch is unknown
    """
    if not (math.isfinite(a) and a >= 0):
        raise PreconditionError(f"only numbers a >= 0 can be encoded, got {a}")
    if branch == BRANCH_R:
        return a + crit.c_up
    if branch == BRANCH_RA:
        return -a + crit.c_down
    raise PreconditionError(f"unknown branch {branch!r}")


def decode(f: float, table: CalibrationTable, offset: Optional[float] = None) -> float:
    """
    Measured frequency -> number

    Args:
        f: Train frequency
        table: Calibration table of the branch the run used
        offset: Threshold to subtract instead of the branch default (scale plans)

    Returns:
        s - c_up on branch r, c_down - s on branch ra; decode(0) = 0

    Raises:
        DecodeRangeError: If f lies above the table range
    """
    s = table.invert(f)
    if table.branch == BRANCH_R:
        return s - (table.crit.c_up if offset is None else offset)
    return (table.crit.c_down if offset is None else offset) - s


def _validate_sweep(s_values: Sequence[float], branch: str, crit: CritConstants):
    if branch not in BRANCHES:
        raise PreconditionError(f"unknown branch {branch!r}, expected one of {BRANCHES}")
    if not s_values:
        raise PreconditionError("calibration needs at least one s value")
    if any(not math.isfinite(s) for s in s_values):
        raise PreconditionError(f"s values must be finite, got {list(s_values)}")
    if any(b <= a for a, b in zip(s_values, s_values[1:])):
        raise PreconditionError(f"s values must be sorted and distinct, got {list(s_values)}")
    if branch == BRANCH_R and s_values[0] < 1.0:
        raise PreconditionError(f"branch r covers s >= 1, got s={s_values[0]}")
    if branch == BRANCH_RA and s_values[-1] > crit.c_down:
        raise PreconditionError(f"branch ra covers s <= c_down={crit.c_down:.6g}, got s={s_values[-1]}")


def _calibrate_point(s: float, index: int, total: int, config: SimulationConfig) -> Tuple[int, RunMeasurement]:
    measurement = measure_schedule(make_quench(s), config)
    status = "blow-up" if measurement.blow_up else f"f={measurement.frequency.f:.4f}"
    print(f"  ✓ Point {index + 1}/{total}: s={s:.4f} {status} ({measurement.frequency.count} events)")
    return index, measurement


def calibrate(s_values: Sequence[float], branch: str, config: SimulationConfig,
              max_workers: Optional[int] = None,
              progress_callback: Optional[Callable[[str, str], None]] = None) -> CalibrationTable:
    """
    Sweep quench ratios and tabulate the measured train frequency

    Args:
        s_values: Sorted ratios inside the branch domain
        branch: "r" or "ra"
        config: Simulator config (the ra branch runs with t_final = 10)
        max_workers: Maximum parallel runs (default: from env or 4)
        progress_callback: Optional callback(stage, message)

    Returns:
        CalibrationTable ordered by s, with blow-up points listed as gap samples

    Raises:
        PreconditionError: If the s values are unsorted or outside the branch domain
        CalibrationError: If the data is not monotone or a point on the quiet side of
            the threshold emits (the message lists the offending samples)
    """
    s_values = [float(s) for s in s_values]
    crit = config.crit
    _validate_sweep(s_values, branch, crit)
    run_config = config.for_branch(branch)

    if max_workers is None:
        max_workers = int(os.getenv("SOLITON_MAX_WORKERS", "4"))

    total = len(s_values)
    print(f"Calibrating branch {branch} over {total} point(s) (max {max_workers} workers)...")
    if progress_callback:
        progress_callback("calibrating", f"{total} point(s) on branch {branch}")

    results: Dict[int, RunMeasurement] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {
            executor.submit(_calibrate_point, s, i, total, run_config): i
            for i, s in enumerate(s_values)
        }
        for future in as_completed(future_to_index):
            index, measurement = future.result()
            results[index] = measurement
            if progress_callback:
                progress_callback("calibrating", f"{len(results)}/{total} point(s) done")

    samples: List[Tuple[float, float]] = []
    gaps: List[float] = []
    quiet: List[Tuple[float, float]] = []
    for i, s in enumerate(s_values):
        measurement = results[i]
        if measurement.blow_up:
            logger.warning(f"Blow-up at t={measurement.blow_up_time:.3f} for s={s}; recorded as gap sample")
            gaps.append(s)
            continue
        f = measurement.frequency.f
        on_quiet_side = s <= crit.c_up if branch == BRANCH_R else s >= crit.c_down
        if on_quiet_side and f > 0:
            quiet.append((s, f))
        samples.append((s, f))

    if not samples:
        raise CalibrationError(f"every calibration point blew up (gap samples: {gaps})")
    if quiet:
        threshold = crit.c_up if branch == BRANCH_R else crit.c_down
        raise CalibrationError(
            f"nonzero frequency on the quiet side of the threshold {threshold:.6g} on branch {branch}; "
            f"offending (s, f) samples: {quiet}"
        )
    violations = monotonicity_violations(branch, samples)
    if violations:
        raise CalibrationError(
            f"non-monotone calibration data on branch {branch}; offending (s, f) samples: {violations}"
        )

    table = CalibrationTable(
        branch=branch,
        samples=samples,
        crit=crit,
        fingerprint=run_config.fingerprint(),
        gap_samples=gaps,
    )
    print(f"✓ Calibration complete: {len(samples)} sample(s), {len(gaps)} gap(s), max f={table.max_f:.4f}")
    return table
