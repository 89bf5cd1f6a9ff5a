"""End-to-end experiment orchestration: training runs, frozen-policy
evaluation, and the inference-latency benchmark.

Seeds are derived from the experiment seed with fixed tags so that training
worlds, evaluation worlds, learner initialization, and exploration streams
are all independent but reproducible.
"""

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .errors import SchemaError
from .federation import run_round
from .metrics import (EpisodeData, MetricsReport, compute_metrics,
                      inference_cdf, percentile_nearest_rank, space_time_grid,
                      write_events_csv, write_inference_cdf_csv,
                      write_metrics_csv, write_rounds_csv, write_spacetime_csv,
                      write_trajectory_csv)
from .observe import OBS_SIZE, encode, tick_stats
from .pdqn import PdqnLearner
from .road import CAV, RoadNetwork, Route, Vehicle
from .runner import AgentRuntime, Controller
from .sim import World

# seed-stream tags
_LEARNER = 101
_EXPLORE = 211
_TRAIN_WORLD = 9001
_EVAL_WORLD = 7001


def make_agents(config: ExperimentConfig, network: RoadNetwork) -> list:
    """Agent topology for the federation mode: one agent per cluster, or a
    single agent over every cluster in the centralized baseline."""
    cluster_ids = tuple(c.id for c in network.clusters)
    if config.federation.mode == "centralized":
        assignments = [(0, cluster_ids)]
    else:
        assignments = [(i, (cid,)) for i, cid in enumerate(cluster_ids)]
    learner_config = config.learner.build(OBS_SIZE)
    agents = []
    for agent_id, cids in assignments:
        agents.append(AgentRuntime(
            agent_id=agent_id, cluster_ids=cids,
            learner=PdqnLearner(learner_config, seed=[config.seed, _LEARNER, agent_id]),
            rng=np.random.default_rng([config.seed, _EXPLORE, agent_id])))
    return agents


def make_controller(config: ExperimentConfig, network: RoadNetwork, agents: list,
                    record_trajectory: bool = False) -> Controller:
    weights = config.rewards.build()
    if config.disable_priority_reward:
        weights = dataclasses.replace(weights, lane_change=0.0)
    return Controller(network=network, agents=agents,
                      spawn_config=config.spawn.build(),
                      rss_params=config.rss.build(),
                      weights=weights,
                      schedule=config.learner.schedule(),
                      train_every=config.learner.train_every,
                      record_trajectory=record_trajectory)


class WorldSupplier:
    """Hands out training worlds, one fresh seed per episode."""

    def __init__(self, config: ExperimentConfig, network: RoadNetwork):
        self.config = config
        self.network = network
        self.episode_index = 0
        self._world = self._build()

    def _build(self) -> World:
        return World(self.network, self.config.rss.build(),
                     seed=[self.config.seed, _TRAIN_WORLD, self.episode_index])

    def current(self) -> World:
        return self._world

    def advance_episode(self):
        self.episode_index += 1
        self._world = self._build()


@dataclass
class TrainResult:
    out_dir: Path
    round_records: list
    checkpoint_paths: dict = field(default_factory=dict)   # name -> path
    global_checkpoint: object = None


def train(config: ExperimentConfig, out_dir) -> TrainResult:
    """Run the configured number of federation rounds and write artifacts:
    rounds.csv plus one checkpoint per agent (and global.ckpt when a global
    model exists)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    network = config.geometry.build()
    agents = make_agents(config, network)
    controller = make_controller(config, network, agents)
    supplier = WorldSupplier(config, network)
    episode_ticks = max(1, round(config.episode_length / supplier.current().step_size))
    mode = config.federation.mode
    records = []
    for round_index in range(config.federation.rounds):
        report = run_round(controller, supplier, round_index,
                           config.federation.local_steps, mode=mode,
                           episode_ticks=episode_ticks,
                           max_ticks=max(200_000, config.federation.local_steps
                                         * config.learner.train_every * 50))
        records.extend(report.records)
    write_rounds_csv(out_dir / "rounds.csv", records)

    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    result = TrainResult(out_dir=out_dir, round_records=records)
    for agent in agents:
        path = ckpt_dir / f"agent_{agent.agent_id:02d}.ckpt"
        save_checkpoint(path, agent.learner.signature, agent.learner.export_weights())
        result.checkpoint_paths[path.name] = path
    if mode in ("fedavg", "centralized"):
        path = ckpt_dir / "global.ckpt"
        save_checkpoint(path, agents[0].learner.signature,
                        agents[0].learner.export_weights())
        result.checkpoint_paths[path.name] = path
        result.global_checkpoint = path
    return result


def load_weights_into(agents: list, checkpoint_path):
    """File: every agent gets the same weights. Directory: per-agent files."""
    path = Path(checkpoint_path)
    if path.is_dir():
        for agent in agents:
            f = path / f"agent_{agent.agent_id:02d}.ckpt"
            if not f.exists():
                raise SchemaError(f"missing per-agent checkpoint {f}")
            signature, tensors = load_checkpoint(f)
            agent.learner.import_weights(tensors, signature)
    else:
        signature, tensors = load_checkpoint(path)
        for agent in agents:
            agent.learner.import_weights(tensors, signature)
    for agent in agents:
        agent.learner.update_target()


def run_eval_episode(config: ExperimentConfig, network: RoadNetwork, agents: list,
                     episode_index: int) -> EpisodeData:
    """One frozen-policy episode (epsilon 0, evaluation-mode networks)."""
    controller = make_controller(config, network, agents, record_trajectory=True)
    world = World(network, config.rss.build(),
                  seed=[config.seed, _EVAL_WORLD, episode_index])
    ticks = max(1, round(config.episode_length / world.step_size))
    for _ in range(ticks):
        controller.tick(world, train=False)
    controller.drop_all_pending()
    return EpisodeData(events=list(world.event_log),
                       trajectory=list(controller.trajectory))


@dataclass
class EvalResult:
    report: MetricsReport
    episodes: list
    out_dir: Path


def evaluate(config: ExperimentConfig, checkpoint_path, out_dir,
             spacetime_bins=(10.0, 50.0)) -> EvalResult:
    """Frozen-policy evaluation over the configured episode count.

    Writes metrics.csv, spacetime.csv, and the first episode's events.csv and
    trajectory.csv at the top level, plus per-episode logs under episodes/.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    network = config.geometry.build()
    agents = make_agents(config, network)
    if checkpoint_path is not None:
        load_weights_into(agents, checkpoint_path)
    episodes = []
    for i in range(config.eval_episodes):
        episodes.append(run_eval_episode(config, network, agents, i))
    report = compute_metrics(episodes, network)
    write_metrics_csv(out_dir / "metrics.csv", report)
    if episodes:
        write_events_csv(out_dir / "events.csv", episodes[0].events)
        write_trajectory_csv(out_dir / "trajectory.csv", episodes[0].trajectory)
        bin_t, bin_x = spacetime_bins
        write_spacetime_csv(out_dir / "spacetime.csv",
                            space_time_grid(episodes[0].trajectory, bin_x, bin_t))
    ep_dir = out_dir / "episodes"
    ep_dir.mkdir(exist_ok=True)
    for i, ep in enumerate(episodes):
        sub = ep_dir / f"ep_{i:02d}"
        sub.mkdir(exist_ok=True)
        write_events_csv(sub / "events.csv", ep.events)
        write_trajectory_csv(sub / "trajectory.csv", ep.trajectory)
    return EvalResult(report=report, episodes=episodes, out_dir=out_dir)


def _bench_world(config: ExperimentConfig, network: RoadNetwork, n_cavs: int) -> World:
    """A deterministic single-cluster scene with n_cavs controlled CAVs."""
    world = World(network, config.rss.build(), seed=[config.seed, 4242])
    cluster = network.clusters[0]
    span = cluster.length - 100.0
    for i in range(n_cavs):
        lane = 1 + (i % network.lane_count)
        x = cluster.start + 20.0 + (i * span / n_cavs)
        vehicle = Vehicle(id=world.next_id, kind=CAV, x=x,
                          lat_pos=network.lane_center(lane), lane=lane,
                          v=25.0 + (i % 5), max_speed=network.speed_limit,
                          route=Route(None, cluster.id))
        vehicle.prev_x = vehicle.x
        world.vehicles[vehicle.id] = vehicle
        world.next_id += 1
        world.spawned += 1
    return world


@dataclass
class BenchResult:
    samples_ms: list
    p50: float
    p90: float
    p99: float
    out_dir: Path


def bench_inference(config: ExperimentConfig, checkpoint_path, out_dir,
                    n_rounds: int = 3000, n_cavs: int = 20) -> BenchResult:
    """Time n_rounds decision rounds (observation encoding plus action
    selection for every CAV in one cluster) and write the CDF."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    network = config.geometry.build()
    agents = make_agents(config, network)
    if checkpoint_path is not None:
        load_weights_into(agents, checkpoint_path)
    agent = agents[0]
    world = _bench_world(config, network, n_cavs)
    cavs = sorted(world.vehicles)
    samples = []
    for _ in range(n_rounds):
        t0 = time.perf_counter()
        stats = tick_stats(world)
        for vid in cavs:
            obs = encode(world, world.vehicles[vid], stats)
            agent.learner.select_action(obs, 0.0, agent.rng)
        samples.append((time.perf_counter() - t0) * 1000.0)
    cdf = inference_cdf(samples)
    write_inference_cdf_csv(out_dir / "inference_cdf.csv", cdf)
    return BenchResult(
        samples_ms=samples,
        p50=percentile_nearest_rank(samples, 50),
        p90=percentile_nearest_rank(samples, 90),
        p99=percentile_nearest_rank(samples, 99),
        out_dir=out_dir)
