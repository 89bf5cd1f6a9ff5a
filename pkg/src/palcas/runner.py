"""Per-tick control flow shared by training and evaluation.

Each tick: spawn, build every controlled CAV's observation from one snapshot,
select and apply all actions (agents for in-cluster CAVs, the rule-based
driver for CHVs and uncontrolled CAVs), advance the world, then score every
controlled CAV from the post-integration view and hand transitions to the
agents. Transitions are completed one tick later so the successor observation
is exactly what the agent would act on next.
"""

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rss as rss_mod
from .observe import NEIGHBOR_ROLES, encode, select_neighbors, tick_stats
from .pdqn import ExplorationSchedule, PdqnLearner
from .rewards import (NeighborGap, RewardBreakdown, RewardWeights,
                      comfort_reward, deadlock_penalty, efficiency_reward,
                      priority_lane_change_reward, safety_reward)
from .road import CAV, RoadNetwork, Vehicle, cluster_of
from .rss import RssParams
from .sim import (SpawnConfig, World, _owning_ramp, apply_action, chv_policy,
                  effective_route, spawn_step, step)


def lat_velocity_of(network: RoadNetwork, vehicle: Vehicle) -> float:
    m = vehicle.maneuver
    if m is None or m.progress >= 1.0:
        return 0.0
    return (network.lane_center(m.target_lane) - network.lane_center(m.origin_lane)) / m.duration


def min_projected_ttc(view, ego: Vehicle) -> float:
    """Worst projected time-to-collision toward the next lane in the exit
    direction; +inf when already in the exit lane or nothing conflicts."""
    route = effective_route(ego)
    if ego.on_accel_lane or not route.is_exiting or ego.lane <= 1:
        return math.inf
    slots = select_neighbors(view, ego)
    worst = math.inf
    lead = slots["right_lead"]
    if lead is not None:
        worst = min(worst, rss_mod.projected_ttc_lead(
            ego.v, lead.v, lead.x - ego.x, lead.length))
    follow = slots["right_follow"]
    if follow is not None:
        worst = min(worst, rss_mod.projected_ttc_follow(
            follow.v, ego.v, ego.x - follow.x, ego.length))
    return worst


def vehicle_breakdown(view, ego: Vehicle, stats, rss_params: RssParams,
                      weights: RewardWeights) -> RewardBreakdown:
    """All reward components for one CAV from a post-integration view."""
    net: RoadNetwork = view.network
    out = RewardBreakdown()

    cluster_id = cluster_of(net, min(ego.x, net.mainline_length))
    v_lim = net.speed_limit
    if cluster_id is not None:
        mean_speed = stats.cluster(cluster_id).mean_speed
    else:
        mean_speed = v_lim  # outside coverage: neutral cluster term
    out.r_efficiency, out.r_ego, out.r_cluster = efficiency_reward(
        ego.v, v_lim, 0.0, mean_speed, v_lim, 0.0, weights)

    slots = select_neighbors(view, ego)
    longitudinal = {}
    lead = slots["lead"]
    if lead is not None:
        longitudinal["lead"] = NeighborGap(lead.rear - ego.x, ego.v, lead.v)
    follow = slots["follow"]
    if follow is not None:
        longitudinal["follow"] = NeighborGap(ego.rear - follow.x, follow.v, ego.v)
    lateral = []
    ego_lat_v = lat_velocity_of(net, ego)
    for role in ("left_lead", "left_follow", "right_lead", "right_follow"):
        other = slots[role]
        if other is None:
            continue
        direction = 1.0 if other.lat_pos >= ego.lat_pos else -1.0
        v_ego_conv = ego_lat_v * direction
        v_other_conv = -lat_velocity_of(net, other) * direction
        lateral.append(NeighborGap(abs(other.lat_pos - ego.lat_pos),
                                   v_ego_conv, v_other_conv))
    out.r_safety, out.r_safety_long, out.r_safety_lat = safety_reward(
        longitudinal, lateral, rss_params)

    out.r_comfort = comfort_reward(ego.a, weights)

    if ego.on_accel_lane:
        ramp = _owning_ramp(net, ego)
        pos = min(max(ego.x - ramp.junction_position, 0.0), ramp.accel_lane_length)
        out.r_deadlock = deadlock_penalty(pos, ramp.accel_lane_length, True, weights)
    else:
        route = effective_route(ego)
        d_exit = max(net.exit_position(route) - ego.x, 0.0)
        lanes_needed = abs(ego.lane - 1) if route.is_exiting else 0
        lc = priority_lane_change_reward(
            d_exit, ego.v, lanes_needed, net.lane_count,
            min_projected_ttc(view, ego), rss_params, weights)
        out.r_lane_change = lc.r_lane_change
        out.urgency = lc.urgency
        out.scaling_weight = lc.scaling_weight
        out.staging_penalty = lc.staging_penalty
        out.feasibility = lc.feasibility
    return out


@dataclass
class AgentRuntime:
    """One learning agent plus its runtime bookkeeping."""

    agent_id: int
    cluster_ids: tuple
    learner: PdqnLearner
    rng: np.random.Generator
    pending: dict = field(default_factory=dict)   # vid -> (obs, action, reward)
    transitions_this_round: int = 0
    grad_steps_this_round: int = 0
    losses_this_round: list = field(default_factory=list)

    def reset_round(self):
        self.transitions_this_round = 0
        self.grad_steps_this_round = 0
        self.losses_this_round = []

    def drop_pending(self):
        self.pending.clear()


@dataclass
class TickRecord:
    time: float
    rewards: dict = field(default_factory=dict)       # agent_id -> summed reward
    breakdowns: dict = field(default_factory=dict)    # vid -> RewardBreakdown
    inference_ms: float = 0.0
    report: object = None


class Controller:
    """Owns the agent set and drives the world one tick at a time."""

    def __init__(self, network: RoadNetwork, agents: list,
                 spawn_config: SpawnConfig, rss_params: RssParams,
                 weights: RewardWeights, schedule: ExplorationSchedule,
                 train_every: int = 1, record_trajectory: bool = False):
        self.network = network
        self.agents = sorted(agents, key=lambda a: a.agent_id)
        self.spawn_config = spawn_config
        self.rss_params = rss_params
        self.weights = weights
        self.schedule = schedule
        self.train_every = train_every
        self.record_trajectory = record_trajectory
        self.grad_cap: Optional[int] = None   # per-round gradient-step budget
        self.env_steps = 0
        self.trajectory: list = []
        self.cluster_to_agent = {}
        for agent in self.agents:
            for cid in agent.cluster_ids:
                self.cluster_to_agent[cid] = agent

    def owner_of(self, world: World, vehicle: Vehicle) -> Optional[AgentRuntime]:
        if vehicle.kind != CAV:
            return None
        cid = cluster_of(world.network, min(vehicle.x, world.network.mainline_length))
        if cid is None:
            return None
        return self.cluster_to_agent.get(cid)

    def epsilon(self) -> float:
        return self.schedule.value(self.env_steps)

    def tick(self, world: World, train: bool) -> TickRecord:
        """One full simulation step with action selection and scoring."""
        spawn_step(world, self.spawn_config)
        stats = tick_stats(world)
        epsilon = self.epsilon() if train else 0.0

        owned = {}  # vid -> agent
        for vid in sorted(world.vehicles):
            agent = self.owner_of(world, world.vehicles[vid])
            if agent is not None:
                owned[vid] = agent

        t0 = time.perf_counter()
        obs_map = {vid: encode(world, world.vehicles[vid], stats) for vid in owned}
        actions = {}
        for agent in self.agents:
            for vid in sorted(v for v, a in owned.items() if a is agent):
                actions[vid] = agent.learner.select_action(
                    obs_map[vid], epsilon, agent.rng)
        inference_ms = (time.perf_counter() - t0) * 1000.0

        # Complete last tick's transitions now that successor obs exist. A
        # vehicle that left this agent's coverage terminates its trajectory.
        if train:
            for agent in self.agents:
                for vid, (obs, action, reward) in list(agent.pending.items()):
                    if vid in owned and owned[vid] is agent:
                        agent.learner.buffer.push(obs, action.q, action.c, reward,
                                                  obs_map[vid], False)
                    else:
                        agent.learner.buffer.push(obs, action.q, action.c, reward,
                                                  np.zeros_like(obs), True)
                    agent.transitions_this_round += 1
                    del agent.pending[vid]

        for vid in sorted(world.vehicles):
            if vid not in actions:
                actions[vid] = chv_policy(world, world.vehicles[vid])
        for vid in sorted(actions):
            if vid in world.vehicles:
                apply_action(world, vid, actions[vid])

        report = step(world)
        view = world.snapshot
        post_stats = tick_stats(view)

        record = TickRecord(time=world.time, inference_ms=inference_ms, report=report)
        for vid, agent in owned.items():
            ego = view.vehicles[vid]
            breakdown = vehicle_breakdown(view, ego, post_stats,
                                          self.rss_params, self.weights)
            reward = breakdown.total(self.weights)
            record.breakdowns[vid] = breakdown
            record.rewards[agent.agent_id] = record.rewards.get(agent.agent_id, 0.0) + reward
            if not train:
                continue
            if vid in report.removed:
                obs, action = obs_map[vid], actions[vid]
                agent.pending.pop(vid, None)
                agent.learner.buffer.push(obs, action.q, action.c, reward,
                                          np.zeros_like(obs), True)
                agent.transitions_this_round += 1
            else:
                agent.pending[vid] = (obs_map[vid], actions[vid], reward)

        self.env_steps += 1
        if train and self.env_steps % self.train_every == 0:
            for agent in self.agents:
                if len(agent.learner.buffer) < agent.learner.config.batch_size:
                    continue
                if self.grad_cap is not None and agent.grad_steps_this_round >= self.grad_cap:
                    continue
                q_loss, _ = agent.learner.train_step()
                agent.grad_steps_this_round += 1
                agent.losses_this_round.append(q_loss)

        if self.record_trajectory:
            for vid in sorted(view.vehicles):
                v = view.vehicles[vid]
                self.trajectory.append((world.time, vid, v.kind, v.lane,
                                        round(v.x, 3), round(v.lat_pos, 3),
                                        round(v.v, 4), round(v.a, 4)))
        return record

    def drop_all_pending(self):
        for agent in self.agents:
            agent.drop_pending()
