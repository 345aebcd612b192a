"""Double DQN learner with a replay buffer that also holds vetoed actions."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .neural import AdamState, Mlp, adam_step, deserialize, forward, loss_and_grads, mlp_init, serialize

N_ACTIONS = 5
STATE_DIM = 12


@dataclass(frozen=True)
class Experience:
    """A transition; ``next is None`` marks a terminal one (no bootstrap)."""

    s: np.ndarray
    a: int
    next: np.ndarray | None
    r: float

    @property
    def terminal(self) -> bool:
        return self.next is None


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 256
    lr: float = 1e-4
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_epochs: int = 1000
    target_sync: int = 100  # gradient steps between target-network copies
    action_repeat: int = 2
    r_col: float = -2000.0
    buffer_capacity: int = 100_000
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size < 1 or self.target_sync < 1 or self.action_repeat < 1:
            raise ValueError("batch_size, target_sync and action_repeat must be >= 1")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer must hold at least one batch")


def epsilon_at(epoch: int, cfg: AgentConfig = AgentConfig()) -> float:
    """Linear anneal from eps_start to eps_end, then flat."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    frac = min(epoch / cfg.eps_anneal_epochs, 1.0)
    return cfg.eps_start - (cfg.eps_start - cfg.eps_end) * frac


class NotReadyError(RuntimeError):
    """The buffer holds fewer experiences than one minibatch."""


class ReplayBuffer:
    """Fixed-capacity ring buffer; sampling is uniform with replacement."""

    def __init__(self, capacity: int, state_dim: int = STATE_DIM):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.insertions = 0

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    def push(self, e: Experience) -> None:
        i = self.insertions % self.capacity
        self.states[i] = e.s
        self.actions[i] = e.a
        self.rewards[i] = e.r
        self.done[i] = e.terminal
        self.next_states[i] = 0.0 if e.terminal else e.next
        self.insertions += 1

    def __getitem__(self, idx: int) -> Experience:
        """Experience at position ``idx`` counted from the oldest one kept."""
        n = len(self)
        if not -n <= idx < n:
            raise IndexError(idx)
        start = self.insertions - n
        i = (start + idx % n) % self.capacity
        nxt = None if self.done[i] else self.next_states[i].copy()
        return Experience(self.states[i].copy(), int(self.actions[i]), nxt, float(self.rewards[i]))

    def sample_indices(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) < k:
            raise NotReadyError(f"buffer holds {len(self)} < {k} experiences")
        return rng.integers(0, len(self), size=k)

    def sample(self, k: int, rng: np.random.Generator):
        """(s, a, r, s_next, done) arrays for ``k`` slots drawn uniformly."""
        idx = self.sample_indices(k, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.done[idx]


def ddqn_targets(rewards, next_states, done, online: Mlp, target: Mlp, gamma: float) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); just r for terminal rows."""
    rewards = np.asarray(rewards, dtype=float)
    done = np.asarray(done, dtype=bool)
    y = rewards.copy()
    live = ~done
    if live.any():
        nxt = np.asarray(next_states, dtype=float)[live]
        best = np.argmax(forward(online, nxt), axis=1)
        y[live] += gamma * forward(target, nxt)[np.arange(len(best)), best]
    return y


class Agent:
    def __init__(self, cfg: AgentConfig = AgentConfig(), seed: int = 0):
        self.cfg = cfg
        net_seed, rng_seed = np.random.SeedSequence(seed).spawn(2)
        dims = (STATE_DIM, *cfg.hidden, N_ACTIONS)
        self.online = mlp_init(dims, net_seed)
        self.target = self.online.copy()
        self.adam = AdamState.for_net(self.online, lr=cfg.lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.rng = np.random.default_rng(rng_seed)
        self.grad_steps = 0
        self.epoch = 0

    def greedy(self, s: np.ndarray) -> int:
        # np.argmax returns the lowest index among ties
        return int(np.argmax(forward(self.online, s)))

    def select_action(self, s: np.ndarray, epsilon: float, rng: np.random.Generator | None = None) -> int:
        rng = self.rng if rng is None else rng
        if rng.random() < epsilon:
            return int(rng.integers(N_ACTIONS))
        return self.greedy(s)

    def store(self, e: Experience) -> None:
        self.buffer.push(e)

    def ready(self) -> bool:
        return len(self.buffer) >= self.cfg.batch_size

    def train_step(self) -> float:
        s, a, r, s2, done = self.buffer.sample(self.cfg.batch_size, self.rng)
        y = ddqn_targets(r, s2, done, self.online, self.target, self.cfg.gamma)
        grads = loss_and_grads(self.online, s, a, y)
        adam_step(self.online, self.adam, grads)
        self.grad_steps += 1
        if self.grad_steps % self.cfg.target_sync == 0:
            self.sync_target()
        return grads.loss

    def sync_target(self) -> None:
        self.target = self.online.copy()

    # ------------------------------------------------------------ checkpoints

    def save(self, path) -> None:
        """Online weights to ``path``; counters to ``<path>.meta.json``."""
        path = Path(path)
        path.write_bytes(serialize(self.online))
        meta = {
            "grad_steps": self.grad_steps,
            "epoch": self.epoch,
            "epsilon": epsilon_at(self.epoch, self.cfg),
            "adam_t": self.adam.t,
            "buffer_insertions": self.buffer.insertions,
            "config": asdict(self.cfg),
        }
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def load_policy(path) -> Mlp:
    try:
        return deserialize(Path(path).read_bytes())
    except OSError as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
