"""
Exception hierarchy shared by the simulator, the services and the CLI
"""
from typing import Optional


class SolitrainError(Exception):
    """Base class for all simulator errors"""

    exit_code = 1


class ConfigError(SolitrainError, ValueError):
    """Invalid parameter, config key or config file"""


class InvalidScheduleError(ConfigError):
    """Step schedule violates its invariants"""


class PreconditionError(ConfigError):
    """Operation called outside its documented preconditions"""


class TooCoarseSamplingError(ConfigError):
    """Detector time series is sampled too coarsely for the debounce interval"""


class NumericalBlowUpError(SolitrainError):
    """
    Non-finite or runaway amplitudes during time stepping

    Attributes:
        time: Simulation time at which the blow-up was detected
        trajectory: Partial trajectory recorded up to the failure (may be None)
    """

    exit_code = 2

    def __init__(self, message: str, time: float, trajectory=None):
        super().__init__(f"numerical blow-up at t={time:.4f}: {message}")
        self.time = time
        self.trajectory = trajectory


class CalibrationError(SolitrainError):
    """Calibration data is non-monotone or a table file is malformed"""


class FingerprintMismatchError(CalibrationError):
    """Calibration table was produced with a different simulator config"""

    def __init__(self, expected: str, found: Optional[str]):
        super().__init__(
            f"calibration table fingerprint {found} does not match config fingerprint {expected}; "
            "recalibrate with this config or pass --warn-fingerprint"
        )
        self.expected = expected
        self.found = found


class DecodeRangeError(SolitrainError):
    """Measured frequency lies outside the calibrated range"""

    exit_code = 3
