"""
End-to-end arithmetic: compile a request into a schedule, simulate, detect and decode

Method A encodes numbers in interaction strengths and reads the result through a
calibration table. Method B combines an interaction quench with a phase step; it
only guarantees an order relation, so its decoded value is indicative.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from solitrain.config import SimulationConfig
from solitrain.errors import CalibrationError, DecodeRangeError, PreconditionError
from solitrain.services.calibration import CalibrationTable, RunMeasurement, decode, measure_schedule
from solitrain.services.detection import FrequencyMeasurement
from solitrain.services.evolution import evolve
from solitrain.services.protocol import (
    BRANCH_R, BRANCH_RA, CritConstants, StepSchedule, canonical_scale, effective_ratio,
    make_phase_quench, make_quench, plan_add, plan_invert, plan_mul, plan_scale,
    plan_signed_mul, plan_store, plan_sum3, scale_decode_offset, scale_factor,
)
from solitrain.storage.backends import check_fingerprint

logger = logging.getLogger(__name__)

OPERATIONS = ("store", "add", "mul", "sum3", "scale", "invert", "signed_mul", "method_b")
ORDERED_OPERATIONS = ("add", "mul", "sum3")
REDUCTION_TOLERANCE = 1e-8
RELATIVE_TOLERANCE = 0.05
ABSOLUTE_TOLERANCE = 0.05


def normalize_operation(name: str) -> str:
    """Accept CLI spellings such as signed-mul and method-b"""
    operation = name.strip().lower().replace("-", "_")
    if operation not in OPERATIONS:
        raise PreconditionError(f"unknown operation {name!r}, expected one of {', '.join(OPERATIONS)}")
    return operation


def decode_tolerance(value: float) -> float:
    """5% relative, or 0.05 absolute for magnitudes below 1"""
    return max(RELATIVE_TOLERANCE * abs(value), ABSOLUTE_TOLERANCE)


@dataclass(frozen=True)
class ComputationPlan:
    """
    A compiled arithmetic request

    Attributes:
        operation: One of OPERATIONS
        operands: Operands as given
        schedule: Schedule to simulate
        expected_s_eff: Effective ratio of component 0 (None for method_b)
        branch: Calibration branch to decode against
        expected_value: Exact arithmetic result the run should reproduce
        decode_offset: Threshold override for decoding (scale plans)
        signed: Report the decoded value negated (signed multiplication)
    """

    operation: str
    operands: Tuple[float, ...]
    schedule: StepSchedule
    expected_s_eff: Optional[float]
    branch: str = BRANCH_R
    expected_value: Optional[float] = None
    decode_offset: Optional[float] = None
    signed: bool = False

    def __post_init__(self):
        if self.operation == "method_b":
            return
        if self.expected_s_eff is None:
            raise PreconditionError(f"{self.operation} plan needs an expected effective ratio")
        self.schedule.validate_method_a()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "operation": self.operation,
            "operands": list(self.operands),
            "branch": self.branch,
            "expected_s_eff": self.expected_s_eff,
            "expected_value": self.expected_value,
            "decode_offset": self.decode_offset,
            "schedule": self.schedule.to_dict(),
        }


@dataclass
class ComputationResult:
    """
    Outcome of running a plan

    decoded is None when no table was supplied, the run blew up before two events
    reached the detector, or the measured frequency fell outside the table range
    (diagnostics say which). A value decoded from a run cut short by a blow-up is
    marked indicative.
    """

    plan: ComputationPlan
    f_measured: FrequencyMeasurement
    decoded: Optional[float]
    order_check: bool
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    fingerprint: str = ""
    indicative: bool = False

    @property
    def within_tolerance(self) -> Optional[bool]:
        if self.decoded is None or self.plan.expected_value is None:
            return None
        expected = self.plan.expected_value
        return abs(self.decoded - expected) <= decode_tolerance(expected)

    def to_report(self) -> Dict[str, Any]:
        return {
            "operation": self.plan.operation,
            "operands": list(self.plan.operands),
            "schedule": self.plan.schedule.to_dict(),
            "s_eff": self.plan.expected_s_eff,
            "branch": self.plan.branch,
            "expected_value": self.plan.expected_value,
            "f": self.f_measured.to_dict(),
            "decoded": self.decoded,
            "indicative": self.indicative,
            "within_tolerance": self.within_tolerance,
            "order_check": self.order_check,
            "diagnostics": self.diagnostics,
            "fingerprint": self.fingerprint,
        }


def _require_operands(operation: str, operands: Sequence[float], counts: Tuple[int, ...]):
    if len(operands) not in counts:
        expected = " or ".join(str(c) for c in counts)
        raise PreconditionError(f"{operation} takes {expected} operand(s), got {len(operands)}")


def _as_count(value: float, name: str) -> int:
    if not float(value).is_integer() or value < 1:
        raise PreconditionError(f"{name} must be a positive integer, got {value}")
    return int(value)


def compile_plan(operation: str, operands: Sequence[float], g_right: float = 1.0,
                 crit: CritConstants = CritConstants(),
                 k_range: Optional[Tuple[float, float]] = None) -> ComputationPlan:
    """
    Translate an arithmetic request into a schedule

    Operand layouts:
        store a | add a b | mul M N | sum3 a b c | scale gL factor | scale gL c d |
        invert k [k1 k2] | signed_mul M N | method_b s thetaL

    Raises:
        PreconditionError: On unknown operations or invalid operands
        DecodeRangeError: If a scale result falls below what the threshold lets a run decode
    """
    operation = normalize_operation(operation)
    operands = tuple(float(x) for x in operands)
    branch, offset, signed = BRANCH_R, None, False

    if operation == "store":
        _require_operands(operation, operands, (1,))
        (a,) = operands
        schedule, expected = plan_store(a, g_right, crit), a
    elif operation == "add":
        _require_operands(operation, operands, (2,))
        a, b = operands
        schedule, expected = plan_add(a, b, g_right, crit), (a + b) / g_right
    elif operation == "mul":
        _require_operands(operation, operands, (2,))
        m, n = operands[0], _as_count(operands[1], "N")
        schedule, expected = plan_mul(m, n, g_right, crit), m * n / g_right
    elif operation == "sum3":
        _require_operands(operation, operands, (3,))
        a, b, c = operands
        schedule, expected = plan_sum3(a, b, c, g_right, crit), (a + b + c) / g_right
    elif operation == "scale":
        _require_operands(operation, operands, (2, 3))
        g_left = operands[0]
        c, d = canonical_scale(operands[1]) if len(operands) == 2 else operands[1:]
        schedule = plan_scale(g_left, c, d, g_right, crit)
        expected = scale_factor(c, d) * g_left / g_right
        offset = scale_decode_offset(c, d, crit)
        _check_scale_representable(schedule, g_left, c, d, crit)
    elif operation == "invert":
        _require_operands(operation, operands, (1, 3))
        k = operands[0]
        if len(operands) == 3:
            k_range = (operands[1], operands[2])
        if k_range is None:
            raise PreconditionError("invert needs a declared range [k1, k2]")
        schedule, expected = plan_invert(k, k_range, g_right, crit), 1.0 / (k * g_right)
    elif operation == "signed_mul":
        _require_operands(operation, operands, (2,))
        m, n = operands[0], _as_count(operands[1], "N")
        schedule, expected = plan_signed_mul(m, n, g_right, crit), -m * n / g_right
        branch, signed = BRANCH_RA, True
    else:
        _require_operands(operation, operands, (2,))
        s, theta_left = operands
        _check_method_b(s, theta_left)
        schedule = make_phase_quench(s, theta_left, 0.0, g_right)
        return ComputationPlan(operation, operands, schedule, expected_s_eff=None, branch=BRANCH_R)

    s_eff = effective_ratio(schedule, 0)
    if s_eff.branch != branch:
        logger.debug(f"{operation}: s_eff={s_eff.value:.4f} falls on branch {s_eff.branch}, decoding on {branch}")
    return ComputationPlan(
        operation=operation,
        operands=operands,
        schedule=schedule,
        expected_s_eff=s_eff.value,
        branch=branch,
        expected_value=expected,
        decode_offset=offset,
        signed=signed,
    )


def _check_scale_representable(schedule: StepSchedule, g_left: float, c: float, d: float,
                                crit: CritConstants):
    """
    A scale result is readable only if s_eff reaches c_up; below it the train is
    silent and the decode would return the offset instead of the product
    """
    s_eff = effective_ratio(schedule, 0).value
    if s_eff < crit.c_up - 1e-12:
        raise DecodeRangeError(
            f"scale by {scale_factor(c, d):g} maps gL={g_left:g} to s_eff={s_eff:.4f}, below the "
            f"emission threshold c_up={crit.c_up:g}; results under {crit.c_up * d / (1.0 + d):.4f} "
            "cannot be decoded"
        )


def _check_method_b(s: float, theta_left: float):
    if not (math.isfinite(s) and s >= 1.0):
        raise PreconditionError(f"method B needs s >= 1, got {s}")
    if not (math.isfinite(theta_left) and theta_left >= 0.0):
        raise PreconditionError(f"method B needs theta_left >= 0, got {theta_left}")


def _check_table(table: CalibrationTable, branch: str, fingerprint: str, strict: bool):
    if table.branch != branch:
        raise CalibrationError(f"plan decodes on branch {branch} but the table is for branch {table.branch}")
    check_fingerprint(table, fingerprint, strict)


def _order_reference(plan: ComputationPlan) -> Optional[float]:
    if plan.operation == "mul":
        return plan.operands[0]
    if plan.operation in ORDERED_OPERATIONS:
        return max(plan.operands)
    return None


def _diagnostics(measurement: RunMeasurement, plan: ComputationPlan) -> Dict[str, Any]:
    diagnostics = {
        "blow_up": measurement.blow_up,
        "event_count": measurement.frequency.count,
        "s_eff_used": plan.expected_s_eff,
        "jitter": measurement.frequency.jitter,
    }
    if measurement.blow_up:
        diagnostics["blow_up_time"] = measurement.blow_up_time
    return diagnostics


def _decode_measurement(f: float, table: CalibrationTable, offset: Optional[float],
                        diagnostics: Dict[str, Any]) -> Optional[float]:
    try:
        return decode(f, table, offset)
    except DecodeRangeError as e:
        logger.warning(str(e))
        diagnostics["out_of_range"] = True
        diagnostics["note"] = str(e)
        return None


def run_plan(plan: ComputationPlan, table: Optional[CalibrationTable], config: SimulationConfig,
             strict: bool = True,
             progress_callback: Optional[Callable[[str, str], None]] = None) -> ComputationResult:
    """
    Simulate a Method A plan and decode its frequency

    Args:
        plan: Compiled plan
        table: Calibration table for plan.branch, or None to only measure
        config: Simulator config (the table must have been built with it)
        strict: Reject a fingerprint mismatch instead of warning
        progress_callback: Optional callback(stage, message)

    Returns:
        ComputationResult; blow-up (with diagnostics["truncated"] when the partial
        run was decoded) and out-of-range decodes are reported in diagnostics

    Raises:
        CalibrationError: If the table branch does not match the plan
        FingerprintMismatchError: If the fingerprints differ in strict mode
    """
    if plan.operation == "method_b":
        s, theta_left = plan.operands
        return run_method_b(s, theta_left, config, table, strict=strict)

    run_config = config.for_branch(plan.branch)
    fingerprint = run_config.fingerprint()
    if table is not None:
        _check_table(table, plan.branch, fingerprint, strict)

    logger.info(f"Running {plan.operation}{list(plan.operands)} at s_eff={plan.expected_s_eff:.4f}")
    if progress_callback:
        progress_callback("simulating", f"{plan.operation} s_eff={plan.expected_s_eff:.4f}")
    measurement = measure_schedule(plan.schedule, run_config, 0, progress_callback)
    diagnostics = _diagnostics(measurement, plan)

    decoded = None
    truncated = measurement.blow_up and measurement.frequency.count >= 2
    if table is not None and (truncated or not measurement.blow_up):
        if truncated:
            # Events counted up to the blow-up time still give a train frequency.
            diagnostics["truncated"] = True
            logger.warning(
                f"{plan.operation}: decoding from the run truncated at t={measurement.blow_up_time:.3f} "
                f"({measurement.frequency.count} events)"
            )
        decoded = _decode_measurement(measurement.frequency.f, table, plan.decode_offset, diagnostics)
        if decoded is not None and plan.signed:
            decoded = -decoded

    reference = _order_reference(plan)
    if reference is None:
        order_check = True
    elif decoded is None:
        order_check = False
    else:
        order_check = decoded >= reference - decode_tolerance(reference)

    return ComputationResult(
        plan=plan,
        f_measured=measurement.frequency,
        decoded=decoded,
        order_check=order_check,
        diagnostics=diagnostics,
        fingerprint=fingerprint,
        indicative=truncated and decoded is not None,
    )


def run_method_b(s: float, theta_left: float, config: SimulationConfig,
                 table: Optional[CalibrationTable] = None, strict: bool = True,
                 max_workers: Optional[int] = None) -> ComputationResult:
    """
    Combined interaction and phase quench, checked against both single mechanisms

    The three runs (both, interaction only, phase only) share the config and run
    concurrently. order_check holds when f_both >= max(f_self, f_phase) minus a
    jitter allowance of jitter_both * f_both.
    """
    _check_method_b(s, theta_left)
    fingerprint = config.fingerprint()
    if table is not None:
        _check_table(table, BRANCH_R, fingerprint, strict)

    schedules = {
        "both": make_phase_quench(s, theta_left, 0.0),
        "self_only": make_quench(s),
        "phase_only": make_phase_quench(1.0, theta_left, 0.0),
    }
    if max_workers is None:
        max_workers = int(os.getenv("SOLITON_MAX_WORKERS", "4"))

    print(f"Method B: s={s}, theta_left={theta_left} (3 runs, max {max_workers} workers)...")
    measurements: Dict[str, RunMeasurement] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_name = {
            executor.submit(measure_schedule, schedule, config): name
            for name, schedule in schedules.items()
        }
        for future in as_completed(future_to_name):
            name = future_to_name[future]
            measurements[name] = future.result()
            print(f"  ✓ {name}: f={measurements[name].frequency.f:.4f}")

    both = measurements["both"]
    f_both = both.frequency.f
    allowance = (both.frequency.jitter or 0.0) * f_both
    f_reference = max(measurements["self_only"].frequency.f, measurements["phase_only"].frequency.f)
    order_check = f_both >= f_reference - allowance

    plan = ComputationPlan("method_b", (float(s), float(theta_left)), schedules["both"], None, BRANCH_R)
    diagnostics = _diagnostics(both, plan)
    diagnostics["references"] = {
        name: measurements[name].frequency.to_dict() for name in ("self_only", "phase_only")
    }
    diagnostics["blow_up"] = any(m.blow_up for m in measurements.values())

    decoded = None
    if table is not None and not both.blow_up:
        decoded = _decode_measurement(f_both, table, None, diagnostics)

    return ComputationResult(
        plan=plan,
        f_measured=both.frequency,
        decoded=decoded,
        order_check=order_check,
        diagnostics=diagnostics,
        fingerprint=fingerprint,
        indicative=True,
    )


def reduction_deviation(schedule: StepSchedule, config: SimulationConfig) -> float:
    """
    Largest pointwise density difference between an N-component run and its
    single-component reduction, over all snapshots and components

    Raises:
        PreconditionError: If the schedule does not keep identical components identical
    """
    if schedule.n_components < 2:
        raise PreconditionError("reduction needs at least two components")
    if not schedule.is_reducible():
        raise PreconditionError(
            "components are not identical under this schedule (effective profiles or phases differ)"
        )
    full = evolve(config.initial_state(schedule.n_components), schedule, config.evolution, config.detector.z_d)
    reduced = evolve(config.initial_state(1), schedule.reduced_schedule(), config.evolution, config.detector.z_d)

    reference = reduced.density_records[0]
    deviation = max(float(np.max(np.abs(records - reference))) for records in full.density_records)
    logger.debug(f"Reduction deviation over {len(full.times)} snapshot(s): {deviation:.3e}")
    return deviation


def verify_reduction(plan, config: SimulationConfig, tolerance: float = REDUCTION_TOLERANCE) -> bool:
    """
    True iff the N-component run matches the single-component run with
    g_eff = g_i + Σ_j g_ij to within `tolerance` at every snapshot

    Args:
        plan: ComputationPlan or StepSchedule with N >= 2 identical components
        config: Simulator config
        tolerance: Maximum allowed pointwise density deviation
    """
    schedule = plan.schedule if isinstance(plan, ComputationPlan) else plan
    return reduction_deviation(schedule, config) < tolerance


def run_plans(plans: List[ComputationPlan], tables: Dict[str, CalibrationTable], config: SimulationConfig,
              strict: bool = True, max_workers: Optional[int] = None) -> List[ComputationResult]:
    """Run independent plans concurrently; results come back in input order"""
    if max_workers is None:
        max_workers = int(os.getenv("SOLITON_MAX_WORKERS", "4"))

    results: Dict[int, ComputationResult] = {}
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {
            executor.submit(run_plan, plan, tables.get(plan.branch), config, strict): i
            for i, plan in enumerate(plans)
        }
        for future in as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return [results[i] for i in range(len(plans))]
