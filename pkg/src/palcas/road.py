"""Highway geometry, routes, clusters, and the vehicle record.

The network is immutable after construction. Lanes are indexed 1..L with lane
1 the rightmost (exit) lane; the merge acceleration lane attached to each
on-ramp sits to the right of lane 1 and is referred to as lane 0. Longitudinal
positions are front-bumper positions measured from the upstream end of the
mainline, which begins with the spawn warm-up zone.
"""

from dataclasses import dataclass, field
from typing import Optional

from .errors import ContractViolation

ACCEL_LANE = 0

CAV = "CAV"
CHV = "CHV"


@dataclass(frozen=True)
class RampSpec:
    """One ramp junction. On-ramps carry an acceleration lane of len_accel
    metres starting at the junction; off-ramps are a point junction."""

    kind: str  # "on" | "off"
    junction_position: float
    accel_lane_length: float = 0.0

    def __post_init__(self):
        if self.kind not in ("on", "off"):
            raise ContractViolation(f"unknown ramp kind {self.kind!r}")
        if self.kind == "on" and self.accel_lane_length <= 0:
            raise ContractViolation("on-ramps need a positive acceleration lane length")

    @property
    def accel_lane_end(self) -> float:
        return self.junction_position + self.accel_lane_length


@dataclass(frozen=True)
class ClusterZone:
    """One roadside unit's coverage segment, [start, end)."""

    id: int
    start: float
    end: float
    on_ramp: RampSpec
    off_ramp: RampSpec

    def __post_init__(self):
        if not self.start < self.end:
            raise ContractViolation("cluster start must precede end")
        for ramp in (self.on_ramp, self.off_ramp):
            if not self.start <= ramp.junction_position < self.end:
                raise ContractViolation(
                    f"ramp at {ramp.junction_position} outside cluster {self.id}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, pos: float) -> bool:
        return self.start <= pos < self.end


@dataclass(frozen=True)
class Route:
    """Entry/exit pair. `entry_cluster` is None for mainline-start entries,
    otherwise the cluster whose on-ramp is used. `exit_cluster` is None for
    through traffic continuing to the highway end."""

    entry_cluster: Optional[int] = None
    exit_cluster: Optional[int] = None

    @property
    def is_ramp_entry(self) -> bool:
        return self.entry_cluster is not None

    @property
    def is_exiting(self) -> bool:
        return self.exit_cluster is not None

    def label(self) -> str:
        entry = "main" if self.entry_cluster is None else f"ramp{self.entry_cluster}"
        exit_ = "end" if self.exit_cluster is None else f"off{self.exit_cluster}"
        return f"{entry}>{exit_}"

    @staticmethod
    def parse(label: str) -> "Route":
        entry_s, exit_s = label.split(">")
        entry = None if entry_s == "main" else int(entry_s.removeprefix("ramp"))
        exit_ = None if exit_s == "end" else int(exit_s.removeprefix("off"))
        return Route(entry, exit_)


@dataclass(frozen=True)
class RoadNetwork:
    """Straight multi-lane highway with clustered ramp pairs.

    mainline_length covers the full drivable extent including the warm-up
    zone: [0, warmup_length) is the insertion zone, and clusters partition
    some or all of the remainder into disjoint, contiguous RSU segments.
    """

    mainline_length: float = 2500.0
    lane_count: int = 5
    lane_width: float = 3.2
    warmup_length: float = 100.0
    speed_limit: float = 33.528
    clusters: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.lane_count < 1:
            raise ContractViolation("need at least one lane")
        if not 0 <= self.warmup_length < self.mainline_length:
            raise ContractViolation("warm-up zone must fit inside the mainline")
        total = sum(c.length for c in self.clusters)
        if total > self.mainline_length + 1e-9:
            raise ContractViolation("clusters exceed the mainline length")
        prev_end = self.warmup_length
        for c in self.clusters:
            if c.start < prev_end - 1e-9:
                raise ContractViolation(
                    f"cluster {c.id} overlaps the warm-up zone or a previous cluster")
            if c.end > self.mainline_length + 1e-9:
                raise ContractViolation(f"cluster {c.id} extends past the highway end")
            prev_end = c.end

    def lane_center(self, lane: int) -> float:
        """Lateral centerline offset of a lane; lane 0 is the merge lane."""
        return (lane - 0.5) * self.lane_width

    def cluster_by_id(self, cluster_id: int) -> ClusterZone:
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise ContractViolation(f"no cluster with id {cluster_id}")

    def entry_position(self, route: Route) -> float:
        if route.entry_cluster is None:
            return 0.0
        return self.cluster_by_id(route.entry_cluster).on_ramp.junction_position

    def exit_position(self, route: Route) -> float:
        if route.exit_cluster is None:
            return self.mainline_length
        return self.cluster_by_id(route.exit_cluster).off_ramp.junction_position

    def validate_route(self, route: Route) -> Route:
        if not self.exit_position(route) > self.entry_position(route):
            raise ContractViolation(f"route {route.label()} exit is not downstream of entry")
        return route

    def feasible_routes(self, entry_cluster: Optional[int],
                        min_run: float = 300.0) -> list:
        """Routes available from an entry point, requiring at least min_run
        metres between entry and exit junctions."""
        entry_pos = 0.0 if entry_cluster is None else \
            self.cluster_by_id(entry_cluster).on_ramp.junction_position
        routes = []
        for c in self.clusters:
            if c.off_ramp.junction_position >= entry_pos + min_run:
                routes.append(Route(entry_cluster, c.id))
        routes.append(Route(entry_cluster, None))
        return routes


def evenly_spaced_clusters(count: int = 3, length: float = 800.0,
                           start: float = 100.0,
                           accel_lane_length: float = 200.0,
                           on_ramp_frac: float = 0.125,
                           off_ramp_frac: float = 0.875) -> tuple:
    """Contiguous equal-length clusters, each with one on- and one off-ramp."""
    clusters = []
    for i in range(count):
        s = start + i * length
        clusters.append(ClusterZone(
            id=i + 1,
            start=s,
            end=s + length,
            on_ramp=RampSpec("on", s + on_ramp_frac * length, accel_lane_length),
            off_ramp=RampSpec("off", s + off_ramp_frac * length),
        ))
    return tuple(clusters)


def standard_network() -> RoadNetwork:
    """Default five-lane highway: 100 m warm-up plus three 800 m clusters."""
    return RoadNetwork(clusters=evenly_spaced_clusters())


@dataclass
class LaneChangeManeuver:
    """An in-flight lane change between adjacent lanes.

    Lateral position follows linear interpolation between the origin and
    target lane centers; the lane index commits at 50% progress and an
    abort check runs at the deadline (progress 1.0).
    """

    origin_lane: int
    target_lane: int
    start_time: float
    duration: float = 2.0
    progress: float = 0.0

    def __post_init__(self):
        if abs(self.origin_lane - self.target_lane) != 1:
            raise ContractViolation("lane changes are between adjacent lanes only")


@dataclass
class Vehicle:
    """Mutable kinematic state plus route and maneuver progress."""

    id: int
    kind: str  # CAV | CHV
    x: float  # front-bumper longitudinal position, m
    lat_pos: float
    lane: int
    v: float
    a: float = 0.0
    length: float = 5.0
    max_speed: float = 33.528
    route: Route = field(default_factory=Route)
    maneuver: Optional[LaneChangeManeuver] = None
    on_accel_lane: bool = False
    # bookkeeping, owned by the simulation
    prev_x: float = 0.0
    missed_exit: bool = False
    deadlocked: bool = False
    stuck_ticks: int = 0
    last_lane_change_time: float = -1e9
    merge_pending: bool = False

    @property
    def rear(self) -> float:
        return self.x - self.length


def cluster_of(network: RoadNetwork, long_pos: float) -> Optional[int]:
    """Cluster id whose [start, end) span contains the position, else None.

    Positions in the warm-up zone or between/after clusters belong to no RSU.
    """
    if not 0.0 <= long_pos <= network.mainline_length:
        raise ContractViolation(
            f"position {long_pos} outside [0, {network.mainline_length}]")
    for c in network.clusters:
        if c.contains(long_pos):
            return c.id
    return None


def distance_to_exit(network: RoadNetwork, vehicle: Vehicle) -> float:
    """Remaining longitudinal distance to the vehicle's exit junction, m.

    Through routes measure to the highway end. Clamped at zero once past.
    """
    return max(network.exit_position(vehicle.route) - vehicle.x, 0.0)


def remaining_lane_count(vehicle: Vehicle, network: RoadNetwork) -> int:
    """Number of lane changes still needed to reach the exit lane.

    Through vehicles have no target exit lane, so their count is zero by
    convention and the urgency terms of the priority reward vanish.
    """
    if vehicle.on_accel_lane:
        raise ContractViolation("remaining_lane_count is defined on the mainline only")
    if not vehicle.route.is_exiting:
        return 0
    return abs(vehicle.lane - 1)
