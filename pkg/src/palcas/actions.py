"""Hybrid (discrete + continuous) vehicle commands shared by the simulator and the learner."""

from dataclasses import dataclass

# Discrete command indices.
LC_LEFT = 0
LC_RIGHT = 1
ACCELERATE = 2
HOLD_SPEED = 3

N_DISCRETE = 4

# Bounds of the continuous acceleration command, m/s^2.
ACCEL_MIN = -4.5
ACCEL_MAX = 2.6


def clamp_accel(value: float) -> float:
    return min(max(value, ACCEL_MIN), ACCEL_MAX)


@dataclass(frozen=True)
class HybridAction:
    """A discrete command plus its continuous acceleration parameter.

    The parameter is only consumed by ACCELERATE, but a value is always
    carried so that transitions are fixed-width.
    """

    q: int
    c: float = 0.0

    def __post_init__(self):
        if not 0 <= self.q < N_DISCRETE:
            raise ValueError(f"discrete action index out of range: {self.q}")
