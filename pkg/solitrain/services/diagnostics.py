"""
Self-test suites: conservation, stationary dark soliton, reduction equivalence,
time-step convergence and absorber monotonicity
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

from solitrain.config import SimulationConfig
from solitrain.errors import SolitrainError
from solitrain.models.field import dark_soliton_profile, make_grid
from solitrain.services.calculator import REDUCTION_TOLERANCE, reduction_deviation
from solitrain.services.evolution import DEFAULT_DT, AbsorberConfig, EvolutionConfig, energy, evolve
from solitrain.services.protocol import StepProfile, StepSchedule, make_quench

logger = logging.getLogger(__name__)

NORM_DRIFT_PER_TIME = 1e-8
ENERGY_DRIFT = 1e-6
ORACLE_DRIFT = 1e-6
CONVERGENCE_TOLERANCE = 1e-5
MIN_SPLITTING_ORDER = 1.9
ABSORBER_RTOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    value: Optional[float] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "value": self.value}


def _guarded(name: str, check: Callable[[], CheckResult]) -> CheckResult:
    """Turn validation or numerical errors into a failed check"""
    try:
        return check()
    except SolitrainError as e:
        logger.debug(f"{name} raised {type(e).__name__}: {e}")
        return CheckResult(name=name, passed=False, detail=f"{type(e).__name__}: {e}")


def selftest_config(quick: bool = False) -> SimulationConfig:
    """Symmetric grid; the quick variant uses a quarter of the samples on half the domain"""
    if quick:
        return SimulationConfig(n_points=1024, length=200.0, z_min=-100.0)
    return SimulationConfig(n_points=4096, length=400.0, z_min=-200.0)


def interaction_quench_schedule() -> StepSchedule:
    """Single component, g^L/g^R = 2.2"""
    return make_quench(2.2)


def cross_reduction_schedule() -> StepSchedule:
    """Two components, g^L/g^R = 1.9 with g_ij^L = 0.9, so s_eff = 2.8"""
    self_g = [StepProfile(1.9, 1.0)] * 2
    cross = [[StepProfile(0.0, 0.0), StepProfile(0.9, 0.0)],
             [StepProfile(0.9, 0.0), StepProfile(0.0, 0.0)]]
    return StepSchedule.build(self_g, cross)


def check_conservation(config: SimulationConfig, dt: float = DEFAULT_DT, duration: float = 10.0) -> CheckResult:
    """Norm drift per unit time and relative energy drift for a fixed schedule, no absorber"""
    def run() -> CheckResult:
        schedule = interaction_quench_schedule()
        evolution = EvolutionConfig(dt=dt, t_final=duration, record_stride=max(int(round(1.0 / dt)), 1))
        state = config.initial_state(1)
        trajectory = evolve(state, schedule, evolution, config.detector.z_d)

        norms = trajectory.norms[:, 0]
        norm_drift = float(np.max(np.abs(norms - norms[0])) / norms[0]) / duration
        e0 = energy(state, schedule)
        e1 = energy(trajectory.final_state, schedule)
        energy_drift = abs(e1 - e0) / abs(e0)

        passed = norm_drift < NORM_DRIFT_PER_TIME and energy_drift < ENERGY_DRIFT
        return CheckResult(
            name="conservation",
            passed=passed,
            detail=f"norm drift {norm_drift:.2e}/time unit, energy drift {energy_drift:.2e}",
            value=max(norm_drift, energy_drift),
        )

    return _guarded("conservation", run)


def check_dark_soliton(config: SimulationConfig, dt: float = DEFAULT_DT, duration: float = 10.0,
                       g: float = 1.0) -> CheckResult:
    """The stationary dark soliton keeps its density profile"""
    def run() -> CheckResult:
        oracle = replace(config, initial="dark_soliton")
        grid = make_grid(oracle.n_points, oracle.length, oracle.z_min)
        expected = np.abs(dark_soliton_profile(grid, oracle.n0, g)) ** 2

        evolution = EvolutionConfig(dt=dt, t_final=duration, record_stride=max(int(round(1.0 / dt)), 1))
        trajectory = evolve(oracle.initial_state(1, g=g), make_quench(1.0, g_right=g),
                            evolution, oracle.detector.z_d)
        drift = float(np.max(np.abs(trajectory.density_records[0] - expected)))
        return CheckResult(
            name="dark_soliton",
            passed=drift < ORACLE_DRIFT,
            detail=f"max density drift {drift:.2e} over {duration} time units",
            value=drift,
        )

    return _guarded("dark_soliton", run)


def check_reduction(config: SimulationConfig, dt: float = DEFAULT_DT, duration: float = 10.0) -> CheckResult:
    def run() -> CheckResult:
        evolution = EvolutionConfig(dt=dt, t_final=duration, record_stride=max(int(round(1.0 / dt)), 1))
        deviation = reduction_deviation(cross_reduction_schedule(), replace(config, evolution=evolution))
        return CheckResult(
            name="reduction",
            passed=deviation < REDUCTION_TOLERANCE,
            detail=f"max deviation between two-component and reduced run {deviation:.2e}",
            value=deviation,
        )

    return _guarded("reduction", run)


def check_convergence(config: SimulationConfig, dt: Optional[float] = None,
                      duration: Optional[float] = None) -> CheckResult:
    """
    Halving dt changes densities by less than 1e-5 and the observed splitting order
    (from dt, dt/2, dt/4) is at least 1.9

    dt and duration default to the config's time step and full t_final horizon.
    """
    dt = config.evolution.dt if dt is None else dt
    duration = config.evolution.t_final if duration is None else duration

    def run() -> CheckResult:
        schedule = interaction_quench_schedule()
        record_stride = max(int(round(0.5 / dt)), 1)
        coarse = EvolutionConfig(dt=dt, t_final=duration, record_stride=record_stride)
        runs = []
        for factor in (1, 2, 4):
            evolution = coarse if factor == 1 else coarse.refined(factor)
            trajectory = evolve(config.initial_state(1), schedule, evolution, config.detector.z_d)
            runs.append(trajectory.density_records[0])

        n_rows = min(len(r) for r in runs)
        diff_1 = float(np.max(np.abs(runs[0][:n_rows] - runs[1][:n_rows])))
        diff_2 = float(np.max(np.abs(runs[1][:n_rows] - runs[2][:n_rows])))
        order = math.log2(diff_1 / diff_2) if diff_1 > 0 and diff_2 > 0 else math.inf

        passed = diff_1 < CONVERGENCE_TOLERANCE and order >= MIN_SPLITTING_ORDER
        return CheckResult(
            name="convergence",
            passed=passed,
            detail=f"max change on halving dt={dt:g} {diff_1:.2e} over {duration:g} time units, "
                   f"observed order {order:.2f}",
            value=diff_1,
        )

    return _guarded("convergence", run)


def check_absorber_norms(norms: np.ndarray, rtol: float = ABSORBER_RTOL) -> CheckResult:
    """
    Per-component norms recorded with the absorber on must never increase

    Args:
        norms: Array (n_records, N) of norms, as in Trajectory.norms
    """
    norms = np.asarray(norms, dtype=float)
    if norms.ndim == 1:
        norms = norms[:, None]
    increase = np.diff(norms, axis=0) / np.maximum(norms[:-1], np.finfo(float).tiny)
    worst = float(increase.max()) if increase.size else 0.0
    return CheckResult(
        name="absorber",
        passed=worst <= rtol,
        detail=f"largest relative norm increase between records {worst:.2e}",
        value=worst,
    )


def check_absorber(config: SimulationConfig, dt: float = DEFAULT_DT, duration: float = 10.0) -> CheckResult:
    def run() -> CheckResult:
        width = min(20.0, config.length / 8)
        evolution = EvolutionConfig(
            dt=dt, t_final=duration, record_stride=max(int(round(1.0 / dt)), 1),
            absorber=AbsorberConfig(enabled=True, width=width, strength=0.01),
        )
        trajectory = evolve(config.initial_state(1), interaction_quench_schedule(), evolution,
                            config.detector.z_d)
        return check_absorber_norms(trajectory.norms)

    return _guarded("absorber", run)


def run_selftest(quick: bool = False, dt: Optional[float] = None,
                 progress_callback: Optional[Callable[[str, str], None]] = None) -> List[CheckResult]:
    """
    Run every suite and return one result per check

    Args:
        quick: Use a smaller grid and shorter runs; the full suite checks convergence
            over the whole t_final horizon
        dt: Time step override (out-of-range values make the checks fail)
        progress_callback: Optional callback(stage, message)
    """
    config = selftest_config(quick)
    step = DEFAULT_DT if dt is None else dt
    duration = 2.0 if quick else 10.0

    checks = [
        ("conservation", lambda: check_conservation(config, step, duration)),
        ("dark_soliton", lambda: check_dark_soliton(config, step, duration)),
        ("reduction", lambda: check_reduction(config, step, duration)),
        ("convergence", lambda: check_convergence(config, step, 1.0 if quick else None)),
        ("absorber", lambda: check_absorber(config, step, duration)),
    ]
    results = []
    for name, check in checks:
        if progress_callback:
            progress_callback("selftest", name)
        result = check()
        logger.info(f"{name}: {'pass' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results
