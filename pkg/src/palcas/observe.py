"""Per-CAV observation: a fixed 45-component normalized vector.

Layout (index ranges, inclusive):
    0..5    ego block: lat_pos, long_pos (within cluster), speed,
            acceleration, lane, distance-to-exit
    6..35   six neighbor slots x five features: relative distance,
            relative speed, relative acceleration, lane, distance-to-exit;
            slot order is lead, follow, left-lead, left-follow, right-lead,
            right-follow
    36..41  cluster block: mean speed, then five lane-occupancy densities
    42..44  global block: mean density of the first three clusters

Every component is clamped to [-1, 1]. Absent neighbors carry the sentinel
(+1, 0, 0, ego lane, +1). Geometries with fewer lanes or clusters than the
reference five/three leave the surplus slots at zero, so the width never
changes.
"""

from dataclasses import dataclass, field

import numpy as np

from .road import ACCEL_LANE, RoadNetwork, Vehicle, cluster_of, distance_to_exit
from .sim import effective_route

OBS_SIZE = 45
SENSING_RANGE = 200.0
JAM_DENSITY = 0.2          # veh/m/lane, bumper-to-bumper 5 m cars
ACCEL_NORM = 4.5
LANE_DENSITY_SLOTS = 5
GLOBAL_SLOTS = 3

NEIGHBOR_ROLES = ("lead", "follow", "left_lead", "left_follow",
                  "right_lead", "right_follow")


def _adjacent_lanes(vehicle: Vehicle, lane_count: int) -> tuple:
    """(left, right) lane indices from the ego's perspective; None if absent.

    The merge lane (0) is the right neighbor of lane 1 and has lane 1 to its
    own left.
    """
    if vehicle.on_accel_lane:
        return 1, None
    left = vehicle.lane + 1 if vehicle.lane + 1 <= lane_count else None
    right = vehicle.lane - 1 if vehicle.lane - 1 >= ACCEL_LANE else None
    return left, right


def select_neighbors(world, ego: Vehicle) -> dict:
    """Nearest vehicle per role within the sensing range.

    Roles cover lead/follow in the current lane and in the two adjacent
    lanes. Nearest is by |dx| with ties broken by lower id; an empty slot is
    None. Works on a World or a WorldSnapshot.
    """
    left, right = _adjacent_lanes(ego, world.network.lane_count)
    lanes = {"": ego.lane, "left_": left, "right_": right}
    slots = {role: None for role in NEIGHBOR_ROLES}
    best = {role: (SENSING_RANGE, float("inf")) for role in NEIGHBOR_ROLES}
    for v in world.vehicles.values():
        if v.id == ego.id:
            continue
        dx = v.x - ego.x
        if abs(dx) > SENSING_RANGE:
            continue
        for prefix, lane in lanes.items():
            if lane is None or v.lane != lane:
                continue
            role = prefix + ("lead" if dx > 0 else "follow")
            key = (abs(dx), v.id)
            if key < best[role]:
                best[role] = key
                slots[role] = v
    return slots


@dataclass
class ClusterStats:
    mean_speed: float
    lane_density: list          # per mainline lane, veh/m
    mean_density: float         # veh/m/lane over all mainline lanes


@dataclass
class TickStats:
    """Macroscopic features for one tick, computed once and shared."""

    per_cluster: dict = field(default_factory=dict)   # cluster id -> ClusterStats

    def cluster(self, cluster_id: int) -> ClusterStats:
        return self.per_cluster[cluster_id]


def tick_stats(world) -> TickStats:
    """Cluster mean speeds and lane-wise densities for the current state.

    Acceleration-lane vehicles count toward the cluster's mean speed but not
    toward mainline lane densities. An empty cluster reports the speed limit
    (no congestion to signal).
    """
    net: RoadNetwork = world.network
    stats = TickStats()
    for c in net.clusters:
        speeds = []
        lane_counts = [0] * net.lane_count
        for v in world.vehicles.values():
            if not c.contains(v.x):
                continue
            speeds.append(v.v)
            if not v.on_accel_lane and 1 <= v.lane <= net.lane_count:
                lane_counts[v.lane - 1] += 1
        density = [n / c.length for n in lane_counts]
        stats.per_cluster[c.id] = ClusterStats(
            mean_speed=float(np.mean(speeds)) if speeds else net.speed_limit,
            lane_density=density,
            mean_density=sum(lane_counts) / (c.length * net.lane_count),
        )
    return stats


def encode(world, ego: Vehicle, stats: TickStats) -> np.ndarray:
    """Build the ego's normalized observation vector from a world view."""
    net: RoadNetwork = world.network
    cluster_id = cluster_of(net, min(ego.x, net.mainline_length))
    cluster = net.cluster_by_id(cluster_id) if cluster_id is not None else None
    cluster_len = cluster.length if cluster is not None else net.mainline_length
    cluster_start = cluster.start if cluster is not None else 0.0

    route = effective_route(ego)
    d_exit = max(net.exit_position(route) - ego.x, 0.0)

    vec = np.zeros(OBS_SIZE)
    road_width = net.lane_count * net.lane_width
    vec[0] = ego.lat_pos / road_width
    vec[1] = (ego.x - cluster_start) / cluster_len
    vec[2] = ego.v / net.speed_limit
    vec[3] = ego.a / ACCEL_NORM
    vec[4] = ego.lane / net.lane_count
    vec[5] = d_exit / net.mainline_length

    ego_lane_n = ego.lane / net.lane_count
    slots = select_neighbors(world, ego)
    for i, role in enumerate(NEIGHBOR_ROLES):
        base = 6 + 5 * i
        other = slots[role]
        if other is None:
            vec[base:base + 5] = (1.0, 0.0, 0.0, ego_lane_n, 1.0)
            continue
        other_d = max(net.exit_position(effective_route(other)) - other.x, 0.0)
        vec[base] = (other.x - ego.x) / SENSING_RANGE
        vec[base + 1] = (other.v - ego.v) / net.speed_limit
        vec[base + 2] = (other.a - ego.a) / ACCEL_NORM
        vec[base + 3] = other.lane / net.lane_count
        vec[base + 4] = other_d / net.mainline_length

    if cluster is not None:
        cs = stats.cluster(cluster.id)
        vec[36] = cs.mean_speed / net.speed_limit
        for lane_i in range(min(net.lane_count, LANE_DENSITY_SLOTS)):
            vec[37 + lane_i] = cs.lane_density[lane_i] / JAM_DENSITY
    for slot, c in enumerate(net.clusters[:GLOBAL_SLOTS]):
        vec[42 + slot] = stats.cluster(c.id).mean_density / JAM_DENSITY

    return np.clip(vec, -1.0, 1.0)
