"""Priority-aware lane-change advisory: highway microsimulation plus a
federated multi-agent reinforcement-learning harness."""

__version__ = "0.1.0"

from .actions import HybridAction
from .config import ExperimentConfig, desk_preset, paper_preset
from .road import RoadNetwork, Route, Vehicle, standard_network
from .rss import RssParams
from .rewards import RewardWeights
from .sim import SpawnConfig, World

__all__ = [
    "HybridAction", "ExperimentConfig", "desk_preset", "paper_preset",
    "RoadNetwork", "Route", "Vehicle", "standard_network", "RssParams",
    "RewardWeights", "SpawnConfig", "World", "__version__",
]
