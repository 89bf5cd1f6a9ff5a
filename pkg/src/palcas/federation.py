"""Federated averaging across the per-cluster agents.

Synchronous rounds: every registered agent trains for the same local
gradient-step budget on its own cluster's transitions while the shared world
advances, then the server takes a sample-size-weighted elementwise mean of
all named tensors (network weights and batch-norm running statistics alike)
and broadcasts it back. Baseline topologies reuse the same loop: the
centralized mode runs one agent over every cluster, the isolated mode skips
aggregation entirely.
"""

import hashlib
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractViolation, SchemaError


@dataclass
class ModelWeights:
    """Named flat tensors, the unit of federated exchange."""

    signature: str
    tensors: dict

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.signature.encode("utf-8"))
        for name in sorted(self.tensors):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(self.tensors[name], dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class Contribution:
    agent_id: int
    weights: ModelWeights
    n_samples: int


def aggregate(contributions: list) -> ModelWeights:
    """Size-weighted elementwise mean over all contributions.

    Every contribution must share one architecture signature and the total
    sample count must be positive.
    """
    if not contributions:
        raise ContractViolation("aggregate needs at least one contribution")
    signature = contributions[0].weights.signature
    names = set(contributions[0].weights.tensors)
    for contrib in contributions:
        if contrib.weights.signature != signature or set(contrib.weights.tensors) != names:
            raise SchemaError(f"agent {contrib.agent_id} weights do not match "
                              f"the round's architecture signature")
        if contrib.n_samples < 0:
            raise ContractViolation(f"agent {contrib.agent_id} has negative sample count")
    total = sum(c.n_samples for c in contributions)
    if total <= 0:
        raise ContractViolation("total sample count must be positive")
    merged = {}
    for name in names:
        acc = np.zeros_like(np.asarray(contributions[0].weights.tensors[name], dtype=np.float64))
        for contrib in contributions:
            acc += (contrib.n_samples / total) * np.asarray(contrib.weights.tensors[name],
                                                            dtype=np.float64)
        merged[name] = acc
    return ModelWeights(signature, merged)


@dataclass
class RoundReport:
    round_index: int
    records: list = field(default_factory=list)   # per-agent dicts
    global_checksum: Optional[str] = None


def run_round(controller, world_supplier, round_index: int, local_steps: int,
              mode: str = "fedavg", episode_ticks: Optional[int] = None,
              max_ticks: Optional[int] = None) -> RoundReport:
    """One synchronous federation round over a shared environment.

    The controller's agents act and learn while the world advances; the round
    ends once every agent has taken exactly ``local_steps`` gradient steps
    (agents keep acting after hitting their budget so the world stays shared).
    ``world_supplier`` yields the current world and replaces it when an
    episode's tick budget is exhausted. In fedavg and centralized modes the
    round finishes with aggregation and broadcast; isolated agents keep their
    own weights. ``max_ticks`` is a safety valve against starved agents (an
    agent whose clusters never see a CAV cannot finish its budget).
    """
    agents = controller.agents
    controller.grad_cap = local_steps
    for agent in agents:
        agent.reset_round()
    t0 = time.perf_counter()
    ticks = 0
    while any(a.grad_steps_this_round < local_steps for a in agents):
        if max_ticks is not None and ticks >= max_ticks:
            break
        world = world_supplier.current()
        controller.tick(world, train=True)
        ticks += 1
        if episode_ticks is not None and world.tick >= episode_ticks:
            controller.drop_all_pending()
            world_supplier.advance_episode()
    wall_ms = (time.perf_counter() - t0) * 1000.0

    report = RoundReport(round_index=round_index)
    epsilon = controller.epsilon()
    if mode in ("fedavg", "centralized"):
        contributions = [
            Contribution(a.agent_id,
                         ModelWeights(a.learner.signature, a.learner.export_weights()),
                         a.transitions_this_round)
            for a in agents
        ]
        merged = aggregate(contributions)
        for agent in agents:
            agent.learner.import_weights(merged.tensors, merged.signature)
        report.global_checksum = merged.checksum()
    elif mode != "isolated":
        raise ContractViolation(f"unknown federation mode {mode!r}")
    for agent in agents:
        mean_loss = float(np.mean(agent.losses_this_round)) if agent.losses_this_round else 0.0
        report.records.append({
            "round": round_index,
            "agent_id": agent.agent_id,
            "n_k": agent.transitions_this_round,
            "mean_loss": mean_loss,
            "epsilon": epsilon,
            "wall_ms": wall_ms,
        })
    return report
