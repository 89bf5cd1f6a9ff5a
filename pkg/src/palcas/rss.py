"""Responsibility-sensitive-safety kernel.

Closed-form minimum safe distances and projected time-to-collision. These are
pure functions shared by the reward computation, the lane-change abort check,
and the spawn gate, so they must stay free of simulator state.
"""

import math
from dataclasses import dataclass

from .errors import ContractViolation

INF = math.inf


@dataclass(frozen=True)
class RssParams:
    """Safety-model constants.

    reaction_time: delay before the ego responds to a lead braking event, s.
    max_accel: worst-case ego acceleration during the reaction window, m/s^2.
    min_brake / max_brake: ego's guaranteed braking and the lead's strongest
        braking, m/s^2 (equal by default).
    lateral_clearance: minimum lateral buffer kept at all times, m.
    lateral_brake / lateral_max_accel: lateral braking floor and worst-case
        lateral acceleration during the reaction window, m/s^2.
    ttc_threshold: projected time-to-collision below which a lane change is
        considered infeasible, s.
    ttc_temperature: softness of the feasibility sigmoid, in (0, 1).
    """

    reaction_time: float = 0.2
    max_accel: float = 2.6
    min_brake: float = 4.5
    max_brake: float = 4.5
    lateral_clearance: float = 0.1
    lateral_brake: float = 1.0
    lateral_max_accel: float = 1.0
    ttc_threshold: float = 1.5
    ttc_temperature: float = 0.5

    def __post_init__(self):
        for name in ("reaction_time", "max_accel", "min_brake", "max_brake",
                     "lateral_clearance", "lateral_brake", "lateral_max_accel",
                     "ttc_threshold"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"RssParams.{name} must be positive")
        if not 0.0 < self.ttc_temperature < 1.0:
            raise ContractViolation("ttc_temperature must lie in (0, 1)")


def sigmoid(x: float) -> float:
    # Split to avoid overflow of exp for large |x|.
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def longitudinal_safe_distance(v_ego: float, v_lead: float,
                               params: RssParams = RssParams()) -> float:
    """Minimum longitudinal gap the ego must keep behind a lead vehicle, m.

    Worst case: the ego accelerates at max_accel for the reaction time, then
    brakes at min_brake, while the lead brakes at max_brake. Negative brackets
    clamp to zero.
    """
    if v_ego < 0 or v_lead < 0:
        raise ContractViolation("speeds must be non-negative")
    rho = params.reaction_time
    v_react = v_ego + rho * params.max_accel
    gap = (v_ego * rho
           + 0.5 * params.max_accel * rho * rho
           + v_react * v_react / (2.0 * params.min_brake)
           - v_lead * v_lead / (2.0 * params.max_brake))
    return max(gap, 0.0)


def lateral_safe_distance(v_ego_lat: float, v_other_lat: float,
                          params: RssParams = RssParams()) -> float:
    """Minimum lateral gap between the ego and an adjacent vehicle, m.

    Lateral speeds are signed positive toward the other vehicle. Both parties
    are assumed to drift at lateral_max_accel for the reaction time and then
    brake laterally at lateral_brake. The clearance buffer is always kept, so
    the result is never below it.
    """
    rho = params.reaction_time
    v_i_rho = v_ego_lat + rho * params.lateral_max_accel
    v_m_rho = v_other_lat + rho * params.lateral_max_accel
    ego_term = 0.5 * (v_ego_lat + v_i_rho) * rho + v_i_rho * v_i_rho / (2.0 * params.lateral_brake)
    other_term = 0.5 * (v_other_lat + v_m_rho) * rho - v_m_rho * v_m_rho / (2.0 * params.lateral_brake)
    return params.lateral_clearance + max(ego_term - other_term, 0.0)


def projected_ttc_lead(v_ego: float, v_lead: float, gap: float,
                       lead_length: float) -> float:
    """Projected time until the ego reaches the target-lane leader, s.

    `gap` is the longitudinal distance to the leader; the leader's length is
    subtracted to get the closing distance. No closing speed means no threat
    (+inf). Already-overlapping geometry returns 0.
    """
    if gap < 0:
        raise ContractViolation("gap must be non-negative")
    if v_ego <= v_lead:
        return INF
    return max((gap - lead_length) / (v_ego - v_lead), 0.0)


def projected_ttc_follow(v_follow: float, v_ego: float, gap: float,
                         ego_length: float) -> float:
    """Projected time until the target-lane follower reaches the ego, s."""
    if gap < 0:
        raise ContractViolation("gap must be non-negative")
    if v_follow <= v_ego:
        return INF
    return max((gap - ego_length) / (v_follow - v_ego), 0.0)


def feasibility(min_projected_ttc: float,
                params: RssParams = RssParams()) -> float:
    """Lane-change feasibility in [0, 1] from the worst projected ttc.

    Sigmoid of the margin above the ttc threshold; an infinite ttc (no
    conflicting vehicle) saturates to 1.
    """
    if min_projected_ttc == INF:
        return 1.0
    return sigmoid((min_projected_ttc - params.ttc_threshold) / params.ttc_temperature)
