"""Parametrized deep Q-network learner.

One learner drives one agent: a Q-network scores the four discrete commands
given the observation concatenated with the continuous acceleration
parameter, and a deterministic parameter network emits that parameter,
squashed into the physical acceleration range by a scaled tanh. Training uses
uniform replay, Huber TD errors against hard-copied target networks, and
AdamW on both networks.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .actions import ACCEL_MAX, ACCEL_MIN, N_DISCRETE, HybridAction
from .errors import SchemaError
from .nn import MLP, AdamW, huber, huber_grad
from .observe import OBS_SIZE

PARAM_DIM = 1


@dataclass(frozen=True)
class LearnerConfig:
    hidden: tuple = (256, 512, 256)
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    discount: float = 0.995
    batch_size: int = 256
    replay_capacity: int = 100_000
    target_update_steps: int = 15_000
    dropout: float = 0.1
    batch_norm: bool = True
    huber_delta: float = 1.0
    epsilon_init: float = 1.0
    epsilon_final: float = 0.02
    epsilon_decay: float = 0.999985
    obs_size: int = OBS_SIZE


@dataclass(frozen=True)
class ExplorationSchedule:
    epsilon_init: float = 1.0
    epsilon_final: float = 0.02
    decay: float = 0.999985

    def value(self, env_step: int) -> float:
        return max(self.epsilon_final, self.epsilon_init * self.decay ** env_step)

    def steps_to_final(self) -> int:
        """First step index at which the floor is reached."""
        return math.ceil(math.log(self.epsilon_final / self.epsilon_init)
                         / math.log(self.decay))


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform with-replacement sampling."""

    def __init__(self, capacity: int, obs_size: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_size))
        self.q_idx = np.zeros(capacity, dtype=np.int64)
        self.c = np.zeros(capacity)
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_size))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def push(self, obs, q_idx: int, c: float, reward: float, next_obs, done: bool):
        i = self.cursor
        self.obs[i] = obs
        self.q_idx[i] = q_idx
        self.c[i] = c
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.obs[idx], self.q_idx[idx], self.c[idx],
                self.reward[idx], self.next_obs[idx], self.done[idx])

    def __len__(self) -> int:
        return self.size


def squash(y: np.ndarray) -> np.ndarray:
    """Map unbounded network output into [ACCEL_MIN, ACCEL_MAX]."""
    mid = 0.5 * (ACCEL_MAX + ACCEL_MIN)
    half = 0.5 * (ACCEL_MAX - ACCEL_MIN)
    return mid + half * np.tanh(y)


def squash_grad(y: np.ndarray) -> np.ndarray:
    half = 0.5 * (ACCEL_MAX - ACCEL_MIN)
    t = np.tanh(y)
    return half * (1.0 - t * t)


class PdqnLearner:
    """Networks, replay, exploration, and the TD update for one agent."""

    def __init__(self, config: LearnerConfig = LearnerConfig(), seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        q_sizes = (config.obs_size + PARAM_DIM, *config.hidden, N_DISCRETE)
        p_sizes = (config.obs_size, *config.hidden, PARAM_DIM)
        self.qnet = MLP(q_sizes, config.dropout, config.batch_norm, self.rng)
        self.pnet = MLP(p_sizes, config.dropout, config.batch_norm, self.rng)
        self.q_target = self.qnet.clone()
        self.p_target = self.pnet.clone()
        self.opt_q = AdamW(self.qnet.params, config.learning_rate, config.weight_decay)
        self.opt_p = AdamW(self.pnet.params, config.learning_rate, config.weight_decay)
        self.buffer = ReplayBuffer(config.replay_capacity, config.obs_size)
        self.grad_steps = 0

    # -- acting ---------------------------------------------------------------

    def param_for(self, obs: np.ndarray) -> float:
        y, _ = self.pnet.forward(obs, training=False)
        return float(squash(y)[0])

    def q_values(self, obs: np.ndarray, c: float) -> np.ndarray:
        x = np.concatenate([obs, [c]])
        q, _ = self.qnet.forward(x, training=False)
        return q

    def select_action(self, obs: np.ndarray, epsilon: float,
                      rng: Optional[np.random.Generator] = None) -> HybridAction:
        """Epsilon-greedy over the discrete head; the continuous parameter
        comes from the parameter network (or uniform when exploring the
        acceleration command). Ties resolve to the lowest index."""
        rng = rng if rng is not None else self.rng
        c = self.param_for(obs)
        if epsilon > 0.0 and rng.random() < epsilon:
            q = int(rng.integers(0, N_DISCRETE))
            if q == 2:
                c = float(rng.uniform(ACCEL_MIN, ACCEL_MAX))
            return HybridAction(q, c)
        values = self.q_values(obs, c)
        if not np.all(np.isfinite(values)):
            raise FloatingPointError(f"non-finite Q-values: {values}")
        return HybridAction(int(np.argmax(values)), c)

    # -- learning ---------------------------------------------------------------

    def train_step(self, batch=None) -> tuple:
        """One gradient step on a sampled (or given) batch.

        Returns (q_loss, param_loss). The TD target bootstraps through the
        target networks; the parameter network ascends the summed Q-heads with
        the Q-weights held fixed.
        """
        cfg = self.config
        if batch is None:
            batch = self.buffer.sample(cfg.batch_size, self.rng)
        obs, q_idx, c, reward, next_obs, done = batch
        n = obs.shape[0]

        y_p_next, _ = self.p_target.forward(next_obs, training=False)
        c_next = squash(y_p_next)
        q_next, _ = self.q_target.forward(np.hstack([next_obs, c_next]), training=False)
        target = reward + cfg.discount * (1.0 - done) * q_next.max(axis=1)

        q_in = np.hstack([obs, c[:, None]])
        q_all, cache_q = self.qnet.forward(q_in, training=True, rng=self.rng)
        picked = q_all[np.arange(n), q_idx]
        residual = picked - target
        q_loss = float(np.mean(huber(residual, cfg.huber_delta)))
        if not math.isfinite(q_loss):
            raise FloatingPointError(f"non-finite Q loss at step {self.grad_steps}")
        d_q = np.zeros_like(q_all)
        d_q[np.arange(n), q_idx] = huber_grad(residual, cfg.huber_delta) / n
        grads_q, _ = self.qnet.backward(d_q, cache_q)

        y_p, cache_p = self.pnet.forward(obs, training=True, rng=self.rng)
        c_own = squash(y_p)
        q_own, cache_q2 = self.qnet.forward(np.hstack([obs, c_own]),
                                            training=True, rng=self.rng)
        p_loss = float(-np.mean(q_own.sum(axis=1)))
        d_q2 = np.full_like(q_own, -1.0 / n)
        _, d_in = self.qnet.backward(d_q2, cache_q2)
        d_c = d_in[:, -PARAM_DIM:]
        grads_p, _ = self.pnet.backward(d_c * squash_grad(y_p), cache_p)

        self.opt_q.step(grads_q)
        self.opt_p.step(grads_p)
        self.grad_steps += 1
        if self.grad_steps % cfg.target_update_steps == 0:
            self.update_target()
        return q_loss, p_loss

    def update_target(self):
        """Hard copy of online weights (and running stats) to the targets."""
        self.q_target.load_tensors(self.qnet.named_tensors())
        self.p_target.load_tensors(self.pnet.named_tensors())

    # -- weight transport ---------------------------------------------------------

    @property
    def signature(self) -> str:
        q = "-".join(str(s) for s in self.qnet.sizes)
        p = "-".join(str(s) for s in self.pnet.sizes)
        bn = 1 if self.config.batch_norm else 0
        return f"pdqn/1 q={q} p={p} bn={bn}"

    def export_weights(self) -> dict:
        out = {f"q.{k}": v for k, v in self.qnet.named_tensors().items()}
        out.update({f"p.{k}": v for k, v in self.pnet.named_tensors().items()})
        return out

    def import_weights(self, tensors: dict, signature: Optional[str] = None):
        if signature is not None and signature != self.signature:
            raise SchemaError(
                f"architecture mismatch: checkpoint {signature!r} vs learner {self.signature!r}")
        expected = set(self.export_weights())
        if set(tensors) != expected:
            raise SchemaError("tensor name set does not match the architecture")
        self.qnet.load_tensors({k[2:]: v for k, v in tensors.items() if k.startswith("q.")})
        self.pnet.load_tensors({k[2:]: v for k, v in tensors.items() if k.startswith("p.")})
