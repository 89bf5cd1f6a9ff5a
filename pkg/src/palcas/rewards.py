"""Multi-objective per-vehicle reward and the per-agent aggregate.

Five components combine linearly: traffic efficiency, safety margins against
the required safe distances, acceleration comfort, the priority-guided
lane-change term (urgency x scaling weight plus the early-staging penalty),
and the merge deadlock penalty. Every function here is pure.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

from . import rss
from .errors import ContractViolation
from .rss import RssParams, sigmoid


@dataclass(frozen=True)
class RewardWeights:
    """Component weights and the thresholds used inside the components."""

    efficiency: float = 0.05   # iota
    safety: float = 0.5        # zeta
    comfort: float = 0.05      # xi
    lane_change: float = 0.4   # lambda
    deadlock: float = 0.1      # psi

    # efficiency split between cluster-level and ego-level terms
    w_cluster: float = 0.5
    w_ego: float = 0.5

    comfort_threshold: float = 1.47      # m/s^2 accepted without penalty
    accel_min: float = -4.5
    accel_max: float = 2.6

    lane_change_time: float = 2.0        # nominal free-flow single change, s
    urgency_distance: float = 50.0       # near-exit distance gate, m
    urgency_speed: float = 5.0           # near-exit speed gate, m/s
    proximity_scale: float = 1000.0      # distance normalizer in the sigmoids, m
    deadlock_scale: float = 10.0         # beta
    epsilon: float = 1e-6

    def __post_init__(self):
        for name in ("efficiency", "safety", "comfort", "lane_change", "deadlock",
                     "w_cluster", "w_ego"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"RewardWeights.{name} must be non-negative")
        if self.epsilon <= 0:
            raise ContractViolation("epsilon must be positive")


@dataclass
class RewardBreakdown:
    """All components and logged sub-terms for one vehicle at one step."""

    r_efficiency: float = 0.0
    r_safety: float = 0.0
    r_comfort: float = 0.0
    r_lane_change: float = 0.0
    r_deadlock: float = 0.0
    # sub-terms kept for decomposition logging
    r_ego: float = 0.0
    r_cluster: float = 0.0
    r_safety_long: float = 0.0
    r_safety_lat: float = 0.0
    urgency: float = 0.0
    scaling_weight: float = 0.0
    staging_penalty: float = 0.0
    feasibility: float = 1.0

    def total(self, weights: RewardWeights) -> float:
        return (weights.efficiency * self.r_efficiency
                + weights.safety * self.r_safety
                + weights.comfort * self.r_comfort
                + weights.lane_change * self.r_lane_change
                + weights.deadlock * self.r_deadlock)


def efficiency_reward(v_ego: float, v_max_ego: float, v_min_ego: float,
                      v_cluster: float, v_cluster_max: float, v_cluster_min: float,
                      weights: RewardWeights = RewardWeights()) -> tuple:
    """Weighted ego/cluster speed-tracking reward; 0 when both run at the max.

    Returns (r_e, r_ego, r_cluster).
    """
    if v_max_ego <= v_min_ego or v_cluster_max <= v_cluster_min:
        raise ContractViolation("degenerate speed range")
    r_ego = -abs(v_ego - v_max_ego) / (v_max_ego - v_min_ego)
    r_cluster = -abs(v_cluster - v_cluster_max) / (v_cluster_max - v_cluster_min)
    return weights.w_cluster * r_cluster + weights.w_ego * r_ego, r_ego, r_cluster


@dataclass(frozen=True)
class NeighborGap:
    """Actual gap to one monitored neighbor plus the speeds that set the
    required safe distance for that pairing."""

    gap: float
    v_first: float   # the party whose braking opens the gap (ego or follower)
    v_second: float  # the party being approached


def _margin_term(gap: float, required: float) -> float:
    # A zero required distance is trivially satisfied for any gap >= 0.
    if required <= 0.0:
        return 0.0
    return min((gap - required) / required, 0.0)


def safety_reward(longitudinal: dict, lateral: list,
                  params: RssParams = RssParams()) -> tuple:
    """Shortfall of actual gaps against required RSS distances; 0 when safe.

    `longitudinal` maps "lead"/"follow" to NeighborGap (longitudinal speeds),
    `lateral` is up to four NeighborGap entries with converging lateral
    speeds. Absent neighbors simply contribute nothing.

    Returns (r_s, r_s_long, r_s_lat).
    """
    r_long = 0.0
    for gap in longitudinal.values():
        if gap is None:
            continue
        required = rss.longitudinal_safe_distance(gap.v_first, gap.v_second, params)
        r_long += _margin_term(gap.gap, required)
    r_lat = 0.0
    for gap in lateral[:4]:
        if gap is None:
            continue
        required = rss.lateral_safe_distance(gap.v_first, gap.v_second, params)
        r_lat += _margin_term(gap.gap, required)
    return r_long + r_lat, r_long, r_lat


def comfort_reward(accel: float, weights: RewardWeights = RewardWeights()) -> float:
    """Positive while |a| stays under the comfort threshold, negative above."""
    return (weights.comfort_threshold - abs(accel)) / (abs(weights.accel_min) - weights.accel_max)


def priority_lane_change_reward(distance_to_exit: float, v_ego: float,
                                lanes_to_exit: int, lane_count: int,
                                min_projected_ttc: float,
                                rss_params: RssParams = RssParams(),
                                weights: RewardWeights = RewardWeights()) -> RewardBreakdown:
    """Priority-guided lane-change term r_lc = urgency * weight + staging.

    The urgency compares time-to-exit against the feasibility-inflated time
    needed for the remaining changes; the scaling weight grows with exit
    proximity and the number of outstanding changes; the staging penalty
    discourages occupying the exit lane while the exit is still far.

    `min_projected_ttc` is the worst projected time-to-collision toward the
    next lane in the exit direction (+inf when nothing conflicts, or when no
    change is needed). Returns a RewardBreakdown with only the lane-change
    fields populated.
    """
    if lane_count < 2:
        raise ContractViolation("priority reward needs at least two lanes")
    eps = weights.epsilon
    p_t = rss.feasibility(min_projected_ttc, rss_params)
    if distance_to_exit < weights.urgency_distance and v_ego < weights.urgency_speed:
        u_t = -p_t
    else:
        tau_tte = distance_to_exit / (v_ego + eps)
        tau_need = lanes_to_exit * weights.lane_change_time / (p_t + eps)
        u_t = -sigmoid(-(tau_tte - tau_need))
    lc_factor = lanes_to_exit / (lane_count - 1)
    proximity = sigmoid(distance_to_exit / weights.proximity_scale)
    w_t = 2.0 * (1.0 - proximity) * lc_factor
    p_stage = -2.0 * (proximity - 0.5) * (1.0 - lc_factor)
    out = RewardBreakdown()
    out.urgency = u_t
    out.scaling_weight = w_t
    out.staging_penalty = p_stage
    out.feasibility = p_t
    out.r_lane_change = u_t * w_t + p_stage
    return out


def deadlock_penalty(pos_on_lane: float, accel_lane_length: float,
                     on_accel_lane: bool,
                     weights: RewardWeights = RewardWeights()) -> float:
    """Ramp anti-deadlock term: approaches -1 toward the merge-lane end."""
    if not on_accel_lane:
        return 0.0
    if not 0.0 <= pos_on_lane <= accel_lane_length:
        raise ContractViolation("position outside the acceleration lane")
    d = pos_on_lane - accel_lane_length
    return -math.exp(-(d * d) / (weights.deadlock_scale * accel_lane_length))


def agent_reward(breakdowns: list, weights: RewardWeights = RewardWeights()) -> float:
    """Sum of weighted per-vehicle totals over an agent's controlled CAVs."""
    return sum(b.total(weights) for b in breakdowns)
