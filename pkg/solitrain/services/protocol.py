"""
Step-function interaction/phase schedules and the arithmetic protocols built on them

A schedule fixes, for every component, the self-interaction g_i(z), the
cross-interactions g_ij(z) and the imprinted phase θ_i(z) as two-valued step
profiles: one value for z <= 0 (left) and one for z > 0 (right). Every arithmetic
request (add, multiply, invert, ...) compiles into such a schedule whose effective
ratio s_eff encodes the result.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from solitrain.errors import InvalidScheduleError, PreconditionError
from solitrain.models.field import Grid

BRANCH_R = "r"
BRANCH_RA = "ra"
BRANCHES = (BRANCH_R, BRANCH_RA)

DEFAULT_C_UP = 2.2


@dataclass(frozen=True)
class StepProfile:
    """
    Two-valued profile: `left` for z <= 0, `right` for z > 0

    A positive `smoothing` replaces the sharp step by a tanh of that width.
    """

    left: float
    right: float
    smoothing: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.left) and math.isfinite(self.right)):
            raise InvalidScheduleError(f"step values must be finite, got ({self.left}, {self.right})")
        if not (math.isfinite(self.smoothing) and self.smoothing >= 0):
            raise InvalidScheduleError(f"smoothing width must be >= 0, got {self.smoothing}")

    @classmethod
    def constant(cls, value: float) -> "StepProfile":
        return cls(left=float(value), right=float(value))

    @property
    def is_zero(self) -> bool:
        return self.left == 0.0 and self.right == 0.0

    def sample(self, grid: Grid) -> np.ndarray:
        z = grid.z
        if self.smoothing == 0.0:
            return np.where(z <= 0.0, self.left, self.right).astype(np.float64)
        return self.right + (self.left - self.right) * 0.5 * (1.0 - np.tanh(z / self.smoothing))

    def __add__(self, other: "StepProfile") -> "StepProfile":
        if self.smoothing != other.smoothing and not (self.is_zero or other.is_zero):
            raise InvalidScheduleError("cannot add step profiles with different smoothing widths")
        smoothing = other.smoothing if self.is_zero else self.smoothing
        return StepProfile(self.left + other.left, self.right + other.right, smoothing)

    def to_dict(self) -> Dict:
        data = {"left": self.left, "right": self.right}
        if self.smoothing:
            data["smoothing"] = self.smoothing
        return data


ZERO = StepProfile(0.0, 0.0)


@dataclass(frozen=True)
class CritConstants:
    """Critical interaction ratios above/below which a quench emits a soliton train"""

    c_up: float = DEFAULT_C_UP
    c_down: float = 1.0 / DEFAULT_C_UP

    def __post_init__(self):
        if not self.c_up > 1.0 > self.c_down > 0.0:
            raise PreconditionError(
                f"critical ratios must satisfy c_up > 1 > c_down > 0, got c_up={self.c_up}, c_down={self.c_down}"
            )

    def to_dict(self) -> Dict:
        return {"c_up": self.c_up, "c_down": self.c_down}


@dataclass(frozen=True)
class EffectiveRatio:
    value: float
    branch: str


@dataclass(frozen=True)
class StepSchedule:
    """
    Piecewise-constant interactions and phases for an N-component system

    Attributes:
        self_g: N self-interaction profiles g_i(z)
        cross_g: symmetric N x N cross-interaction profiles g_ij(z), zero diagonal
        phase: N imprinted phase profiles θ_i(z)
    """

    self_g: Tuple[StepProfile, ...]
    cross_g: Tuple[Tuple[StepProfile, ...], ...]
    phase: Tuple[StepProfile, ...]

    def __post_init__(self):
        n = len(self.self_g)
        if n < 1:
            raise InvalidScheduleError("a schedule needs at least one component")
        if len(self.phase) != n:
            raise InvalidScheduleError(f"expected {n} phase profiles, got {len(self.phase)}")
        if len(self.cross_g) != n or any(len(row) != n for row in self.cross_g):
            raise InvalidScheduleError(f"cross-interaction matrix must be {n}x{n}")
        for i in range(n):
            if not self.cross_g[i][i].is_zero:
                raise InvalidScheduleError(f"cross_g[{i}][{i}] must be identically zero")
            for j in range(i + 1, n):
                if self.cross_g[i][j] != self.cross_g[j][i]:
                    raise InvalidScheduleError(
                        f"cross_g must be symmetric: cross_g[{i}][{j}]={self.cross_g[i][j]} "
                        f"!= cross_g[{j}][{i}]={self.cross_g[j][i]}"
                    )

    @classmethod
    def build(cls, self_g: Sequence[StepProfile], cross_g: Optional[Sequence[Sequence[StepProfile]]] = None,
              phase: Optional[Sequence[StepProfile]] = None) -> "StepSchedule":
        n = len(self_g)
        if cross_g is None:
            cross_g = [[ZERO] * n for _ in range(n)]
        if phase is None:
            phase = [ZERO] * n
        return cls(
            self_g=tuple(self_g),
            cross_g=tuple(tuple(row) for row in cross_g),
            phase=tuple(phase),
        )

    @property
    def n_components(self) -> int:
        return len(self.self_g)

    def validate_method_a(self):
        """Interaction protocols require positive right-side self-interactions"""
        for i, profile in enumerate(self.self_g):
            if not profile.right > 0:
                raise InvalidScheduleError(
                    f"component {i}: right-side self-interaction must be positive, got {profile.right}"
                )

    def effective_profile(self, i: int) -> StepProfile:
        """g_i(z) + Σ_j g_ij(z), the interaction a component sees when all densities agree"""
        total = self.self_g[i]
        for j, profile in enumerate(self.cross_g[i]):
            if j != i:
                total = total + profile
        return total

    def is_reducible(self) -> bool:
        """True when identical initial components stay identical under this schedule"""
        if self.n_components < 2:
            return False
        first = self.effective_profile(0)
        return all(
            _same_profile(self.effective_profile(i), first) and self.phase[i] == self.phase[0]
            for i in range(1, self.n_components)
        )

    def reduced_schedule(self) -> "StepSchedule":
        """Single-component schedule with g_eff = g_i + Σ_j g_ij"""
        return StepSchedule.build([self.effective_profile(0)], phase=[self.phase[0]])

    def sample(self, grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Sample all profiles on a grid

        Returns:
            (self_g, cross_g, phase) arrays of shape (N, n), (N, N, n) and (N, n)
        """
        n = self.n_components
        self_arr = np.stack([p.sample(grid) for p in self.self_g])
        phase_arr = np.stack([p.sample(grid) for p in self.phase])
        cross_arr = np.zeros((n, n, grid.n_points))
        for i in range(n):
            for j in range(n):
                if i != j and not self.cross_g[i][j].is_zero:
                    cross_arr[i, j] = self.cross_g[i][j].sample(grid)
        return self_arr, cross_arr, phase_arr

    def to_dict(self) -> Dict:
        return {
            "n_components": self.n_components,
            "self": [p.to_dict() for p in self.self_g],
            "cross": [[p.to_dict() for p in row] for row in self.cross_g],
            "phase": [p.to_dict() for p in self.phase],
        }


def _same_profile(a: StepProfile, b: StepProfile, tol: float = 1e-12) -> bool:
    scale = max(1.0, abs(a.left), abs(a.right))
    return (
        abs(a.left - b.left) <= tol * scale
        and abs(a.right - b.right) <= tol * scale
        and a.smoothing == b.smoothing
    )


def _require_nonnegative(**values: float):
    for name, value in values.items():
        if not (math.isfinite(value) and value >= 0):
            raise PreconditionError(f"{name} must be a finite number >= 0, got {value}")


def _require_positive(**values: float):
    for name, value in values.items():
        if not (math.isfinite(value) and value > 0):
            raise PreconditionError(f"{name} must be positive, got {value}")


def _require_component_count(n: int):
    if int(n) != n or n < 1:
        raise PreconditionError(f"component count must be a positive integer, got {n}")


def _uniform_cross(n: int, profile: StepProfile) -> List[List[StepProfile]]:
    return [[ZERO if i == j else profile for j in range(n)] for i in range(n)]


def make_quench(s: float, g_right: float = 1.0, smoothing: float = 0.0) -> StepSchedule:
    """
    Single-component interaction quench g^L = s·g^R, g^R = g_right, θ ≡ 0

    Raises:
        PreconditionError: If g_right <= 0 or s is not finite
    """
    _require_positive(g_right=g_right)
    if not math.isfinite(s):
        raise PreconditionError(f"ratio s must be finite, got {s}")
    return StepSchedule.build([StepProfile(s * g_right, g_right, smoothing)])


def make_phase_quench(s: float, theta_left: float, theta_right: float = 0.0,
                      g_right: float = 1.0) -> StepSchedule:
    """Single-component quench with ratio s plus an imprinted phase step (θ^L, θ^R)"""
    schedule = make_quench(s, g_right)
    return StepSchedule.build(schedule.self_g, phase=[StepProfile(theta_left, theta_right)])


def effective_ratio(schedule: StepSchedule, i: int = 0) -> EffectiveRatio:
    """
    s_eff = (g_i^L + Σ_j g_ij^L) / (g_i^R + Σ_j g_ij^R)

    Raises:
        PreconditionError: If i is not a component index
        InvalidScheduleError: If the right-side denominator is not positive
    """
    if not 0 <= i < schedule.n_components:
        raise PreconditionError(f"component index {i} out of range")
    total = schedule.effective_profile(i)
    if not total.right > 0:
        raise InvalidScheduleError(
            f"component {i}: right-side effective interaction must be positive, got {total.right}"
        )
    branch = BRANCH_RA if total.left < 0 else BRANCH_R
    return EffectiveRatio(value=total.left / total.right, branch=branch)


def plan_store(a: float, g_right: float = 1.0, crit: CritConstants = CritConstants()) -> StepSchedule:
    """Single-number memory: quench at s = a + c_up"""
    _require_nonnegative(a=a)
    return make_quench(a + crit.c_up, g_right)


def plan_add(a: float, b: float, g_right: float = 1.0,
             crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    Two components: a enters through g_i^L, b through the left cross-interaction

    g_i^L = a, g_i^R = gR, g_ij^L = b + c_up·gR, g_ij^R = 0, so
    s_eff = (a + b + c_up·gR) / gR.
    """
    _require_nonnegative(a=a, b=b)
    _require_positive(g_right=g_right)
    self_g = [StepProfile(a, g_right)] * 2
    cross = _uniform_cross(2, StepProfile(b + crit.c_up * g_right, 0.0))
    return StepSchedule.build(self_g, cross)


def plan_mul(m: float, n_factor: int, g_right: float = 1.0,
             crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    N components with g_ij^L = M and g_i^L = M + c_up·gR, so s_eff = (M·N + c_up·gR) / gR
    """
    _require_nonnegative(m=m)
    _require_positive(g_right=g_right)
    _require_component_count(n_factor)
    n = int(n_factor)
    self_g = [StepProfile(m + crit.c_up * g_right, g_right)] * n
    cross = _uniform_cross(n, StepProfile(m, 0.0))
    return StepSchedule.build(self_g, cross)


def plan_sum3(a: float, b: float, c: float, g_right: float = 1.0,
              crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    Three components carrying a + b + c in every row of the interaction matrix

    The full left matrix assigns a to (1,1), (2,3), (3,2), b to (1,2), (2,1), (3,3)
    and c to (1,3), (3,1), (2,2). Diagonal entries (and the c_up·gR offset) fold into
    the self-interactions; off-diagonal entries are symmetrized by averaging.
    """
    _require_nonnegative(a=a, b=b, c=c)
    _require_positive(g_right=g_right)
    left = np.array([
        [a, b, c],
        [b, c, a],
        [c, a, b],
    ], dtype=float)
    symmetric = 0.5 * (left + left.T)
    self_g = [StepProfile(left[i, i] + crit.c_up * g_right, g_right) for i in range(3)]
    cross = [
        [ZERO if i == j else StepProfile(float(symmetric[i, j]), 0.0) for j in range(3)]
        for i in range(3)
    ]
    return StepSchedule.build(self_g, cross)


def scale_factor(c: float, d: float) -> float:
    return (1.0 + c) / (1.0 + d)


def scale_decode_offset(c: float, d: float, crit: CritConstants = CritConstants()) -> float:
    """
    Threshold offset to subtract when decoding a scale plan

    The schedule divides the c_up·gR term by (1 + d); decoding against c_up/(1 + d)
    instead of c_up returns (1+c)/(1+d)·gL/gR.
    """
    return crit.c_up / (1.0 + d)


def canonical_scale(factor: float) -> Tuple[float, float]:
    """(c, d) with d = 0 for factors >= 1 and c = 0 otherwise"""
    _require_positive(factor=factor)
    if factor >= 1.0:
        return factor - 1.0, 0.0
    return 0.0, 1.0 / factor - 1.0


def plan_scale(g_left: float, c: float, d: float, g_right: float = 1.0,
               crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    Multiply gL/gR by the positive scalar (1+c)/(1+d)

    g_ij^L = c·gL + c_up·gR and g_ij^R = d·gR; the pair (c, d) is not unique for
    a given factor, see canonical_scale.
    """
    _require_nonnegative(g_left=g_left, c=c, d=d)
    _require_positive(g_right=g_right)
    self_g = [StepProfile(g_left, g_right)] * 2
    cross = _uniform_cross(2, StepProfile(c * g_left + crit.c_up * g_right, d * g_right))
    return StepSchedule.build(self_g, cross)


def plan_invert(k: float, k_range: Tuple[float, float], g_right: float = 1.0,
                crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    Two components with g_i^L = 1/k, so s_eff = (1/k + c_up·gR) / gR decodes to 1/k

    Raises:
        PreconditionError: If the range is invalid or k lies outside it
    """
    k1, k2 = k_range
    if not 0 < k1 < k2:
        raise PreconditionError(f"inversion range must satisfy 0 < k1 < k2, got [{k1}, {k2}]")
    if not k1 <= k <= k2:
        raise PreconditionError(f"k={k} outside the declared range [{k1}, {k2}]")
    _require_positive(g_right=g_right)
    self_g = [StepProfile(1.0 / k, g_right)] * 2
    cross = _uniform_cross(2, StepProfile(crit.c_up * g_right, 0.0))
    return StepSchedule.build(self_g, cross)


def plan_signed_mul(m: float, n_factor: int, g_right: float = 1.0,
                    crit: CritConstants = CritConstants()) -> StepSchedule:
    """
    Multiply -M by N on the attractive branch: s_eff = (-M·N + c_down·gR) / gR
    """
    _require_nonnegative(m=m)
    _require_positive(g_right=g_right)
    _require_component_count(n_factor)
    n = int(n_factor)
    self_g = [StepProfile(-m + crit.c_down * g_right, g_right)] * n
    cross = _uniform_cross(n, StepProfile(-m, 0.0))
    return StepSchedule.build(self_g, cross)

