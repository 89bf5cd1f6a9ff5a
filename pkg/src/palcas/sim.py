"""Discrete-time highway world: spawning, human-driver behavior, lane-change
maneuver execution, collision detection, arrivals, and removals.

One World instance is advanced by a single writer. Each tick the caller
applies actions (learned for CAVs, rule-based for CHVs) and then calls
``step``. All randomness flows through the world's seeded generator, so a
fixed seed, config, and action stream reproduce the event log bit for bit.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import rss
from .actions import (ACCEL_MAX, ACCEL_MIN, ACCELERATE, HOLD_SPEED, LC_LEFT,
                      LC_RIGHT, HybridAction, clamp_accel)
from .errors import ContractViolation
from .road import (ACCEL_LANE, CAV, CHV, LaneChangeManeuver, RoadNetwork,
                   Route, Vehicle, cluster_of, distance_to_exit)
from .rss import RssParams

VEHICLE_WIDTH = 1.8  # lateral footprint for overlap tests, m

# Intelligent-driver-model constants for the rule-based CHV controller.
IDM_TIME_GAP = 1.0
IDM_MAX_ACCEL = 2.6
IDM_COMFORT_DECEL = 4.5
IDM_MIN_GAP = 2.0
IDM_EXPONENT = 4

# MOBIL-style discretionary lane-change constants.
MOBIL_POLITENESS = 0.2
MOBIL_THRESHOLD = 0.2
MOBIL_MAX_IMPOSED_BRAKE = 4.0
LC_COOLDOWN = 4.0            # s between discretionary changes
MANDATORY_EXIT_DISTANCE = 500.0

# Deadlock detection thresholds at the acceleration-lane end.
STUCK_SPEED = 0.5
STUCK_ZONE = 5.0
STUCK_SECONDS = 10.0


class ActionOutcome(Enum):
    ACCEPTED = "accepted"
    REJECTED_UNSAFE = "rejected_unsafe"
    REJECTED_BUSY = "rejected_busy"


@dataclass(frozen=True)
class SpawnConfig:
    """Traffic demand and fleet mix."""

    mainline_flow: float = 3200.0   # veh/h/lane
    ramp_flow: float = 600.0        # veh/h/lane
    cav_penetration: float = 0.6
    p_fast: float = 0.5             # share of vehicles with the full speed limit
    slow_factor: float = 0.85       # max-speed factor for the rest
    ramp_entry_speed: float = 15.0  # m/s
    min_route_run: float = 300.0    # m between entry and exit junctions

    def __post_init__(self):
        if self.mainline_flow < 0 or self.ramp_flow < 0:
            raise ContractViolation("flows must be non-negative")
        if not 0.0 <= self.cav_penetration <= 1.0:
            raise ContractViolation("penetration rate must lie in [0, 1]")


@dataclass(frozen=True)
class Event:
    time: float
    event: str
    vehicle_id: int
    kind: str
    lane: int
    long_pos: float
    detail: str = ""


@dataclass
class StepReport:
    collisions: list = field(default_factory=list)
    arrivals: list = field(default_factory=list)
    missed_exits: list = field(default_factory=list)
    aborted_maneuvers: list = field(default_factory=list)
    removed: dict = field(default_factory=dict)  # id -> "collision" | "arrival"


@dataclass
class WorldSnapshot:
    """Read-only view of all vehicles after integration, before removals."""

    network: RoadNetwork
    vehicles: dict
    time: float


class World:
    """The shared environment: all mutable simulation state."""

    def __init__(self, network: RoadNetwork, rss_params: RssParams = RssParams(),
                 step_size: float = 0.1, seed: int = 0):
        self.network = network
        self.rss_params = rss_params
        self.step_size = step_size
        self.rng = np.random.default_rng(seed)
        self.vehicles: dict = {}
        self.tick = 0
        self.next_id = 0
        self.event_log: list = []
        self.snapshot: Optional[WorldSnapshot] = None
        self.spawned = 0

    @property
    def time(self) -> float:
        return round(self.tick * self.step_size, 9)

    def log(self, event: str, vehicle: Vehicle, detail: str = ""):
        self.event_log.append(Event(self.time, event, vehicle.id, vehicle.kind,
                                    vehicle.lane, round(vehicle.x, 3), detail))

    def lat_velocity(self, vehicle: Vehicle) -> float:
        """Signed lateral speed; nonzero only while a maneuver is running."""
        m = vehicle.maneuver
        if m is None or m.progress >= 1.0:
            return 0.0
        span = self.network.lane_center(m.target_lane) - self.network.lane_center(m.origin_lane)
        return span / m.duration

    # -- neighbor scans ----------------------------------------------------

    def vehicles_in_lane(self, lane: int) -> list:
        out = [v for v in self.vehicles.values() if v.lane == lane]
        out.sort(key=lambda v: (v.x, v.id))
        return out

    def lead_and_follow(self, lane: int, x: float, exclude: int = -1) -> tuple:
        """Nearest vehicle strictly ahead of and at-or-behind x in a lane."""
        lead = follow = None
        for v in self.vehicles.values():
            if v.lane != lane or v.id == exclude:
                continue
            if v.x > x:
                if lead is None or (v.x, v.id) < (lead.x, lead.id):
                    lead = v
            else:
                if follow is None or (v.x, -v.id) > (follow.x, -follow.id):
                    follow = v
        return lead, follow

    def safe_gap_in_lane(self, vehicle: Vehicle, lane: int) -> bool:
        """RSS longitudinal gap check against the lane's lead and follower."""
        lead, follow = self.lead_and_follow(lane, vehicle.x, exclude=vehicle.id)
        if lead is not None:
            gap = lead.rear - vehicle.x
            if gap < rss.longitudinal_safe_distance(vehicle.v, lead.v, self.rss_params):
                return False
        if follow is not None:
            gap = vehicle.rear - follow.x
            if gap < rss.longitudinal_safe_distance(follow.v, vehicle.v, self.rss_params):
                return False
        return True


def effective_route(vehicle: Vehicle) -> Route:
    """Route used for control and rewards: a vehicle that missed its exit
    continues to the highway end like through traffic."""
    if vehicle.missed_exit:
        return Route(vehicle.route.entry_cluster, None)
    return vehicle.route


# -- spawning ---------------------------------------------------------------

def _draw_vehicle(world: World, config: SpawnConfig, x: float, lane: int, v: float,
                  route: Route, on_accel: bool) -> Vehicle:
    kind = CAV if world.rng.random() < config.cav_penetration else CHV
    fast = world.rng.random() < config.p_fast
    max_speed = world.network.speed_limit * (1.0 if fast else config.slow_factor)
    vehicle = Vehicle(id=world.next_id, kind=kind, x=x,
                      lat_pos=world.network.lane_center(lane), lane=lane,
                      v=min(v, max_speed), max_speed=max_speed, route=route,
                      on_accel_lane=on_accel)
    vehicle.prev_x = vehicle.x
    world.next_id += 1
    return vehicle


def _insertion_safe(world: World, x: float, v: float, lane: int, length: float = 5.0) -> bool:
    lead, follow = world.lead_and_follow(lane, x)
    if lead is not None:
        if lead.rear - x < rss.longitudinal_safe_distance(v, lead.v, world.rss_params):
            return False
    if follow is not None:
        if (x - length) - follow.x < rss.longitudinal_safe_distance(follow.v, v, world.rss_params):
            return False
    return True


def spawn_step(world: World, config: SpawnConfig) -> list:
    """Bernoulli insertion per lane and per ramp for one tick.

    Insertion probability is flow * dt / 3600 per source. A candidate is
    dropped silently when the warm-up zone (or ramp head) has no RSS-safe
    gap at the insertion speeds.
    """
    p_main = config.mainline_flow * world.step_size / 3600.0
    p_ramp = config.ramp_flow * world.step_size / 3600.0
    net = world.network
    new_ids = []
    for lane in range(1, net.lane_count + 1):
        if world.rng.random() >= p_main:
            continue
        x = world.rng.uniform(5.0, max(net.warmup_length, 6.0))
        routes = net.feasible_routes(None, config.min_route_run)
        route = routes[world.rng.integers(0, len(routes))]
        vehicle = _draw_vehicle(world, config, x, lane, net.speed_limit, route, False)
        vehicle.v = min(vehicle.max_speed, net.speed_limit)
        if not _insertion_safe(world, x, vehicle.v, lane):
            continue
        world.vehicles[vehicle.id] = vehicle
        world.spawned += 1
        world.log("spawn", vehicle, detail=f"route={route.label()}")
        new_ids.append(vehicle.id)
    for cluster in net.clusters:
        if world.rng.random() >= p_ramp:
            continue
        ramp = cluster.on_ramp
        x = ramp.junction_position + world.rng.uniform(0.0, 25.0)
        routes = net.feasible_routes(cluster.id, config.min_route_run)
        route = routes[world.rng.integers(0, len(routes))]
        vehicle = _draw_vehicle(world, config, x, ACCEL_LANE,
                                config.ramp_entry_speed, route, True)
        if not _insertion_safe(world, x, vehicle.v, ACCEL_LANE):
            continue
        world.vehicles[vehicle.id] = vehicle
        world.spawned += 1
        world.log("spawn", vehicle, detail=f"route={route.label()}")
        new_ids.append(vehicle.id)
    return new_ids


# -- rule-based driver -------------------------------------------------------

def idm_accel(v: float, desired_speed: float, gap: Optional[float],
              lead_speed: float = 0.0) -> float:
    """Intelligent-driver-model acceleration; gap=None means a free road."""
    free = IDM_MAX_ACCEL * (1.0 - (v / max(desired_speed, 0.1)) ** IDM_EXPONENT)
    if gap is None:
        return free
    dv = v - lead_speed
    s_star = IDM_MIN_GAP + max(
        0.0, v * IDM_TIME_GAP + v * dv / (2.0 * math.sqrt(IDM_MAX_ACCEL * IDM_COMFORT_DECEL)))
    interaction = IDM_MAX_ACCEL * (s_star / max(gap, 0.1)) ** 2
    return free - interaction


def _idm_for(world: World, vehicle: Vehicle, lane: int) -> float:
    lead, _ = world.lead_and_follow(lane, vehicle.x, exclude=vehicle.id)
    gap = None if lead is None else lead.rear - vehicle.x
    lead_v = 0.0 if lead is None else lead.v
    a = idm_accel(vehicle.v, vehicle.max_speed, gap, lead_v)
    if vehicle.on_accel_lane and lane == ACCEL_LANE:
        # Treat the acceleration-lane end as a stopped wall.
        ramp = _owning_ramp(world.network, vehicle)
        wall_gap = ramp.accel_lane_end - vehicle.x
        if gap is None or wall_gap < gap:
            a = min(a, idm_accel(vehicle.v, vehicle.max_speed, max(wall_gap, 0.0), 0.0))
    return clamp_accel(a)


def _owning_ramp(network: RoadNetwork, vehicle: Vehicle):
    for cluster in network.clusters:
        ramp = cluster.on_ramp
        if ramp.junction_position - 1e-6 <= vehicle.x <= ramp.accel_lane_end + 1e-6:
            return ramp
    # Past every ramp span: fall back to the nearest ramp behind.
    best = None
    for cluster in network.clusters:
        ramp = cluster.on_ramp
        if ramp.junction_position <= vehicle.x and (best is None or ramp.junction_position > best.junction_position):
            best = ramp
    return best if best is not None else network.clusters[0].on_ramp


def _mobil_gain(world: World, vehicle: Vehicle, target: int) -> Optional[float]:
    """MOBIL incentive for moving into `target`; None when unsafe."""
    new_lead, new_follow = world.lead_and_follow(target, vehicle.x, exclude=vehicle.id)
    if new_lead is not None and new_lead.rear - vehicle.x < IDM_MIN_GAP:
        return None
    if new_follow is not None and vehicle.rear - new_follow.x < IDM_MIN_GAP:
        return None
    if new_follow is not None:
        gap = vehicle.rear - new_follow.x
        follower_after = idm_accel(new_follow.v, new_follow.max_speed, gap, vehicle.v)
        if follower_after < -MOBIL_MAX_IMPOSED_BRAKE:
            return None
    self_now = _idm_for(world, vehicle, vehicle.lane)
    gap_new = None if new_lead is None else new_lead.rear - vehicle.x
    self_after = idm_accel(vehicle.v, vehicle.max_speed, gap_new,
                           0.0 if new_lead is None else new_lead.v)
    gain = self_after - self_now
    if new_follow is not None:
        gap = vehicle.rear - new_follow.x
        f_before = _idm_for(world, new_follow, target)
        f_after = idm_accel(new_follow.v, new_follow.max_speed, gap, vehicle.v)
        gain += MOBIL_POLITENESS * (f_after - f_before)
    return gain


def chv_policy(world: World, vehicle: Vehicle) -> HybridAction:
    """Rule-based driver: IDM car following plus MOBIL discretionary changes,
    with a mandatory pull toward the exit lane close to the exit and a
    mandatory merge off the acceleration lane."""
    net = world.network
    if vehicle.maneuver is not None:
        return HybridAction(ACCELERATE, _idm_for(world, vehicle, vehicle.lane))
    if vehicle.on_accel_lane:
        if world.safe_gap_in_lane(vehicle, 1):
            return HybridAction(LC_LEFT)
        return HybridAction(ACCELERATE, _idm_for(world, vehicle, ACCEL_LANE))
    route = effective_route(vehicle)
    d_exit = max(net.exit_position(route) - vehicle.x, 0.0)
    if route.is_exiting and d_exit < MANDATORY_EXIT_DISTANCE and vehicle.lane > 1:
        if world.safe_gap_in_lane(vehicle, vehicle.lane - 1):
            return HybridAction(LC_RIGHT)
        return HybridAction(ACCELERATE, _idm_for(world, vehicle, vehicle.lane))
    if world.time - vehicle.last_lane_change_time >= LC_COOLDOWN:
        best_gain, best_lane = MOBIL_THRESHOLD, None
        for target in (vehicle.lane - 1, vehicle.lane + 1):
            if not 1 <= target <= net.lane_count:
                continue
            if route.is_exiting and target > vehicle.lane and d_exit < MANDATORY_EXIT_DISTANCE:
                continue
            gain = _mobil_gain(world, vehicle, target)
            if gain is not None and gain > best_gain:
                best_gain, best_lane = gain, target
        if best_lane is not None:
            return HybridAction(LC_LEFT if best_lane > vehicle.lane else LC_RIGHT)
    return HybridAction(ACCELERATE, _idm_for(world, vehicle, vehicle.lane))


# -- action application -------------------------------------------------------

def apply_action(world: World, vehicle_id: int, action: HybridAction) -> ActionOutcome:
    """Apply one hybrid command to one vehicle.

    Lane changes start a maneuver when none is running and the target lane
    exists; acceleration commands are clamped to the physical envelope;
    hold-speed zeroes the commanded acceleration.
    """
    vehicle = world.vehicles.get(vehicle_id)
    if vehicle is None:
        raise ContractViolation(f"unknown vehicle id {vehicle_id}")
    if action.q in (LC_LEFT, LC_RIGHT):
        if vehicle.maneuver is not None:
            return ActionOutcome.REJECTED_BUSY
        if action.q == LC_LEFT:
            target = 1 if vehicle.on_accel_lane else vehicle.lane + 1
        else:
            if vehicle.on_accel_lane:
                return ActionOutcome.REJECTED_UNSAFE
            target = vehicle.lane - 1
        if not vehicle.on_accel_lane and not 1 <= target <= world.network.lane_count:
            return ActionOutcome.REJECTED_UNSAFE
        if target > world.network.lane_count:
            return ActionOutcome.REJECTED_UNSAFE
        vehicle.maneuver = LaneChangeManeuver(
            origin_lane=vehicle.lane, target_lane=target, start_time=world.time)
        return ActionOutcome.ACCEPTED
    if action.q == ACCELERATE:
        vehicle.a = clamp_accel(action.c)
        return ActionOutcome.ACCEPTED
    if action.q == HOLD_SPEED:
        vehicle.a = 0.0
        return ActionOutcome.ACCEPTED
    raise ContractViolation(f"unknown action index {action.q}")


# -- world stepping -----------------------------------------------------------

def _integrate(world: World, vehicle: Vehicle):
    dt = world.step_size
    v, a = vehicle.v, vehicle.a
    vehicle.prev_x = vehicle.x
    if v + a * dt < 0.0:
        # Stops mid-step: advance only to the stopping point.
        t_stop = v / -a if a < 0 else 0.0
        disp = v * t_stop + 0.5 * a * t_stop * t_stop
        vehicle.v = 0.0
    else:
        disp = v * dt + 0.5 * a * dt * dt
        vehicle.v = min(v + a * dt, vehicle.max_speed)
    vehicle.x += max(disp, 0.0)
    if vehicle.on_accel_lane:
        ramp = _owning_ramp(world.network, vehicle)
        if vehicle.x >= ramp.accel_lane_end:
            vehicle.x = ramp.accel_lane_end
            vehicle.v = 0.0


def _advance_maneuver(world: World, vehicle: Vehicle, report: StepReport):
    m = vehicle.maneuver
    if m is None:
        return
    net = world.network
    m.progress = min(m.progress + world.step_size / m.duration, 1.0)
    if m.progress >= 0.5 and vehicle.lane != m.target_lane:
        vehicle.merge_pending = vehicle.on_accel_lane
        vehicle.lane = m.target_lane
        vehicle.on_accel_lane = False
    origin_c = net.lane_center(m.origin_lane)
    target_c = net.lane_center(m.target_lane)
    vehicle.lat_pos = origin_c + (target_c - origin_c) * m.progress
    if m.progress >= 1.0:
        if world.safe_gap_in_lane(vehicle, m.target_lane):
            vehicle.lat_pos = target_c
            vehicle.maneuver = None
            vehicle.last_lane_change_time = world.time
            if vehicle.merge_pending:
                world.log("merge", vehicle, detail=f"origin={m.origin_lane}")
                vehicle.merge_pending = False
        else:
            vehicle.lane = m.origin_lane
            vehicle.on_accel_lane = m.origin_lane == ACCEL_LANE
            vehicle.lat_pos = origin_c
            vehicle.maneuver = None
            vehicle.last_lane_change_time = world.time
            vehicle.merge_pending = False
            world.log("abort", vehicle, detail=f"target={m.target_lane}")
            report.aborted_maneuvers.append(vehicle.id)


def _lateral_span(vehicle: Vehicle) -> tuple:
    return vehicle.lat_pos - VEHICLE_WIDTH / 2.0, vehicle.lat_pos + VEHICLE_WIDTH / 2.0


def _detect_collisions(world: World) -> list:
    """Pairs of overlapping vehicle rectangles after integration."""
    ordered = sorted(world.vehicles.values(), key=lambda v: (v.x, v.id))
    max_len = max((v.length for v in ordered), default=0.0)
    hit = set()
    pairs = []
    for i, v in enumerate(ordered):
        for j in range(i + 1, len(ordered)):
            w = ordered[j]
            if w.x - v.x > max_len:
                break
            if w.rear >= v.x:  # no longitudinal overlap (w is the downstream one)
                continue
            lo_v, hi_v = _lateral_span(v)
            lo_w, hi_w = _lateral_span(w)
            if min(hi_v, hi_w) - max(lo_v, lo_w) > 0.0:
                pairs.append((v.id, w.id))
                hit.add(v.id)
                hit.add(w.id)
    return sorted(hit), pairs


def step(world: World) -> StepReport:
    """Advance the world by one tick: integrate, run maneuvers, detect
    collisions, and resolve arrivals and missed exits.

    Actions must already be applied. Vehicles involved in collisions are
    removed; vehicles that cross their exit junction in the exit lane are
    removed as arrivals, and in any other lane continue downstream with a
    missed-exit mark.
    """
    world.tick += 1
    report = StepReport()
    net = world.network

    for vid in sorted(world.vehicles):
        _integrate(world, world.vehicles[vid])
    for vid in sorted(world.vehicles):
        _advance_maneuver(world, world.vehicles[vid], report)

    world.snapshot = WorldSnapshot(
        network=net,
        vehicles={vid: dataclasses.replace(v) for vid, v in world.vehicles.items()},
        time=world.time)

    collided, pairs = _detect_collisions(world)
    partner = {}
    for a, b in pairs:
        partner.setdefault(a, b)
        partner.setdefault(b, a)
    for vid in collided:
        vehicle = world.vehicles.pop(vid)
        world.log("collision", vehicle, detail=f"with={partner[vid]}")
        report.collisions.append(vid)
        report.removed[vid] = "collision"

    for vid in sorted(world.vehicles):
        vehicle = world.vehicles[vid]
        route = vehicle.route
        if route.is_exiting and not vehicle.missed_exit:
            junction = net.exit_position(route)
            if vehicle.prev_x < junction <= vehicle.x:
                if vehicle.lane == 1 and not vehicle.on_accel_lane:
                    world.log("arrival", vehicle, detail="exit")
                    report.arrivals.append(vid)
                    report.removed[vid] = "arrival"
                    del world.vehicles[vid]
                    continue
                vehicle.missed_exit = True
                world.log("missed_exit", vehicle, detail=f"junction={junction:g}")
                report.missed_exits.append(vid)
        if vehicle.x >= net.mainline_length:
            detail = "end-after-miss" if vehicle.missed_exit else "end"
            world.log("arrival", vehicle, detail=detail)
            report.arrivals.append(vid)
            report.removed[vid] = "arrival"
            del world.vehicles[vid]

    for vid in sorted(world.vehicles):
        vehicle = world.vehicles[vid]
        if not vehicle.on_accel_lane or vehicle.deadlocked:
            continue
        ramp = _owning_ramp(net, vehicle)
        if vehicle.v < STUCK_SPEED and vehicle.x >= ramp.accel_lane_end - STUCK_ZONE:
            vehicle.stuck_ticks += 1
            if vehicle.stuck_ticks * world.step_size > STUCK_SECONDS:
                vehicle.deadlocked = True
                world.log("deadlock", vehicle)
        else:
            vehicle.stuck_ticks = 0
    return report
