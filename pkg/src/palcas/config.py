"""Experiment configuration: typed sections, strict JSON round-trip, presets.

Every field defaults to the reference setup of the full-scale experiment; the
desk preset shrinks geometry, demand, and budgets to something a workstation
can iterate on. Unknown keys in a config file are errors; missing keys take
the defaults. The PALCAS_SEED environment variable overrides the seed.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .pdqn import ExplorationSchedule, LearnerConfig
from .rewards import RewardWeights
from .road import RoadNetwork, evenly_spaced_clusters
from .rss import RssParams
from .sim import SpawnConfig

FEDERATION_MODES = ("fedavg", "centralized", "isolated")


@dataclass(frozen=True)
class GeometryConfig:
    mainline_length: float = 2500.0
    lane_count: int = 5
    lane_width: float = 3.2
    warmup_length: float = 100.0
    speed_limit: float = 33.528
    cluster_count: int = 3
    cluster_length: float = 800.0
    accel_lane_length: float = 200.0
    on_ramp_frac: float = 0.125
    off_ramp_frac: float = 0.875

    def build(self) -> RoadNetwork:
        clusters = evenly_spaced_clusters(
            count=self.cluster_count, length=self.cluster_length,
            start=self.warmup_length, accel_lane_length=self.accel_lane_length,
            on_ramp_frac=self.on_ramp_frac, off_ramp_frac=self.off_ramp_frac)
        return RoadNetwork(mainline_length=self.mainline_length,
                           lane_count=self.lane_count, lane_width=self.lane_width,
                           warmup_length=self.warmup_length,
                           speed_limit=self.speed_limit, clusters=clusters)


@dataclass(frozen=True)
class SpawnSettings:
    mainline_flow: float = 3200.0
    ramp_flow: float = 600.0
    cav_penetration: float = 0.6
    p_fast: float = 0.5
    slow_factor: float = 0.85
    ramp_entry_speed: float = 15.0
    min_route_run: float = 300.0

    def build(self) -> SpawnConfig:
        return SpawnConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class RssSettings:
    reaction_time: float = 0.2
    max_accel: float = 2.6
    min_brake: float = 4.5
    max_brake: float = 4.5
    lateral_clearance: float = 0.1
    lateral_brake: float = 1.0
    lateral_max_accel: float = 1.0
    ttc_threshold: float = 1.5
    ttc_temperature: float = 0.5

    def build(self) -> RssParams:
        return RssParams(**dataclasses.asdict(self))


@dataclass(frozen=True)
class RewardSettings:
    efficiency: float = 0.05
    safety: float = 0.5
    comfort: float = 0.05
    lane_change: float = 0.4
    deadlock: float = 0.1
    w_cluster: float = 0.5
    w_ego: float = 0.5
    comfort_threshold: float = 1.47
    accel_min: float = -4.5
    accel_max: float = 2.6
    lane_change_time: float = 2.0
    urgency_distance: float = 50.0
    urgency_speed: float = 5.0
    proximity_scale: float = 1000.0
    deadlock_scale: float = 10.0
    epsilon: float = 1e-6

    def build(self) -> RewardWeights:
        return RewardWeights(**dataclasses.asdict(self))


@dataclass(frozen=True)
class LearnerSettings:
    hidden: tuple = (256, 512, 256)
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    discount: float = 0.995
    batch_size: int = 256
    replay_capacity: int = 100_000
    target_update_steps: int = 15_000
    dropout: float = 0.1
    batch_norm: bool = True
    epsilon_init: float = 1.0
    epsilon_final: float = 0.02
    epsilon_decay: float = 0.999985
    train_every: int = 1

    def build(self, obs_size: int) -> LearnerConfig:
        return LearnerConfig(
            hidden=tuple(self.hidden), learning_rate=self.learning_rate,
            weight_decay=self.weight_decay, discount=self.discount,
            batch_size=self.batch_size, replay_capacity=self.replay_capacity,
            target_update_steps=self.target_update_steps, dropout=self.dropout,
            batch_norm=self.batch_norm, epsilon_init=self.epsilon_init,
            epsilon_final=self.epsilon_final, epsilon_decay=self.epsilon_decay,
            obs_size=obs_size)

    def schedule(self) -> ExplorationSchedule:
        return ExplorationSchedule(self.epsilon_init, self.epsilon_final,
                                   self.epsilon_decay)


@dataclass(frozen=True)
class FederationSettings:
    mode: str = "fedavg"
    local_steps: int = 2500
    rounds: int = 20

    def __post_init__(self):
        if self.mode not in FEDERATION_MODES:
            raise ConfigError(f"federation.mode must be one of {FEDERATION_MODES}")


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    spawn: SpawnSettings = field(default_factory=SpawnSettings)
    rss: RssSettings = field(default_factory=RssSettings)
    rewards: RewardSettings = field(default_factory=RewardSettings)
    learner: LearnerSettings = field(default_factory=LearnerSettings)
    federation: FederationSettings = field(default_factory=FederationSettings)
    disable_priority_reward: bool = False
    episode_length: float = 200.0
    eval_episodes: int = 20
    seed: int = 0


def desk_preset() -> ExperimentConfig:
    """Workstation-scale setup: short highway, two clusters, quarter flows."""
    return ExperimentConfig(
        geometry=GeometryConfig(mainline_length=1200.0, cluster_count=2,
                                cluster_length=550.0),
        spawn=SpawnSettings(mainline_flow=800.0, ramp_flow=150.0),
        federation=FederationSettings(rounds=8),
        episode_length=200.0,
    )


def paper_preset() -> ExperimentConfig:
    return ExperimentConfig()


PRESETS = {"paper": paper_preset, "desk": desk_preset}


# -- serialization -------------------------------------------------------------

_SECTION_TYPES = {
    "geometry": GeometryConfig,
    "spawn": SpawnSettings,
    "rss": RssSettings,
    "rewards": RewardSettings,
    "learner": LearnerSettings,
    "federation": FederationSettings,
}


def to_dict(config: ExperimentConfig) -> dict:
    out = dataclasses.asdict(config)
    out["learner"]["hidden"] = list(config.learner.hidden)
    return out


def _build_section(cls, data: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {path}{key}")
        kwargs[key] = value
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {path[:-1]!r}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    kwargs = {}
    top_fields = {f.name for f in fields(ExperimentConfig)}
    for key, value in data.items():
        if key not in top_fields:
            raise ConfigError(f"unknown config key: {key}")
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, f"{key}.")
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dumps(config: ExperimentConfig) -> str:
    return json.dumps(to_dict(config), indent=2) + "\n"


def loads(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(data)


def load_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            config = loads(fh.read())
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return apply_seed_override(config)


def apply_seed_override(config: ExperimentConfig) -> ExperimentConfig:
    """PALCAS_SEED in the environment wins over the config seed."""
    override = os.environ.get("PALCAS_SEED")
    if override is None:
        return config
    try:
        seed = int(override)
    except ValueError as exc:
        raise ConfigError(f"PALCAS_SEED must be an integer, got {override!r}") from exc
    return dataclasses.replace(config, seed=seed)
