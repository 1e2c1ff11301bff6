"""The epsilon-greedy deep Q-learning composer: replay memory, exploration
decay, minibatch training, and greedy plan extraction.

Training walks each user trajectory ``repetition`` times, storing full
transition tuples in a ring buffer. Once the buffer first fills, and again
after every ``train_interval`` new experiences, the network trains for one
pass of uniformly sampled minibatches and the exploration rate decays by
``epsilon_decay`` (floored at ``epsilon_min``). Bootstrapping uses the same
network by default; a stabilising target-network clone is available behind
configuration and off by default.
"""

from __future__ import annotations

import copy
import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import network
from .environment import Environment, Extents, encode_state
from .errors import CheckpointError, ConfigError, InvalidInputError
from .network import NetworkSpec, NetworkState
from .oracle import DUMMY_SERVICE, CompositionPlan, PlanStep
from .trajectories import UserTrajectory

_MODEL_MAGIC = b"MPOL"
_MODEL_VERSION = 1


@dataclass
class AgentConfig:
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    memory_capacity: int = 1024
    batch_size: int = 32
    repetition: int = 10
    lr: float = 0.001
    train_interval: int = 128  # new experiences between training passes
    hidden_layers: tuple[int, ...] = (512, 512, 512)
    dropout_p: float = 0.5
    optimizer: str = "adam"
    seed: int = 0
    use_target_network: bool = False
    target_sync_every: int = 8  # training passes between target clones

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0):
            raise InvalidInputError(f"gamma must be in [0, 1), got {self.gamma}")
        if not (0.0 < self.epsilon_decay < 1.0):
            raise InvalidInputError(f"epsilon_decay must be in (0, 1), got {self.epsilon_decay}")
        if not self.memory_capacity >= self.batch_size >= 1:
            raise InvalidInputError(
                f"require memory_capacity >= batch_size >= 1, got "
                f"{self.memory_capacity} and {self.batch_size}"
            )
        if self.repetition < 1:
            raise InvalidInputError(f"repetition must be >= 1, got {self.repetition}")
        if self.train_interval < 1:
            raise InvalidInputError(f"train_interval must be >= 1, got {self.train_interval}")


@dataclass(frozen=True, eq=False)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayMemory:
    """Fixed-capacity ring buffer; eviction is oldest-first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidInputError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Experience] = []
        self._next = 0

    def push(self, exp: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
        self._next = (self._next + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) == self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[int(i)] for i in idx]


@dataclass
class PolicyModel:
    """A trained network plus the action-index mapping and the normalisation
    extents it was trained with."""

    network: NetworkState
    action_ids: tuple[str, ...]
    extents: Extents


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    cum_reward: float
    epsilon: float
    loss: float  # nan on episodes without a training pass


@dataclass
class TrainResult:
    model: PolicyModel
    log: list[EpisodeLog]


def select_action(
    model: PolicyModel, state: np.ndarray, epsilon: float, rng: np.random.Generator
) -> int:
    """Uniform random action with probability epsilon, else the Q-argmax
    (ties broken by lowest action index)."""
    n = len(model.action_ids)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n))
    q = network.forward(model.network, state, train_mode=False)
    return int(np.argmax(q))


def q_targets(
    model: PolicyModel,
    batch: list[Experience],
    gamma: float,
    bootstrap_net: NetworkState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Target matrix for one minibatch, plus the stacked input states.

    The taken action's slot becomes reward + gamma * max_a' Q(next, a'), or
    just the reward on terminal transitions; every other slot copies the
    current prediction so its error (and gradient) is zero.
    """
    if not batch:
        raise InvalidInputError("q_targets needs a non-empty batch")
    net = model.network
    boot = bootstrap_net if bootstrap_net is not None else net
    states = np.stack([e.state for e in batch])
    next_states = np.stack([e.next_state for e in batch])
    preds = network.forward(net, states, train_mode=False)
    next_q = network.forward(boot, next_states, train_mode=False)
    targets = np.array(preds, copy=True)
    for i, e in enumerate(batch):
        bootstrap = 0.0 if e.done else gamma * float(np.max(next_q[i]))
        targets[i, e.action] = e.reward + bootstrap
    return targets, states


def _train_pass(
    model: PolicyModel,
    memory: ReplayMemory,
    config: AgentConfig,
    rng: np.random.Generator,
    bootstrap_net: NetworkState | None,
) -> float:
    """One pass of uniformly sampled minibatches over the memory; mean loss."""
    n_batches = max(1, memory.capacity // config.batch_size)
    losses = []
    for _ in range(n_batches):
        batch = memory.sample(config.batch_size, rng)
        targets, states = q_targets(model, batch, config.gamma, bootstrap_net)
        losses.append(network.train_batch(model.network, states, targets, config.lr))
    return float(np.mean(losses))


def train(
    env: Environment,
    users: list[UserTrajectory],
    config: AgentConfig,
) -> TrainResult:
    """Run the training loop over the given user trajectories.

    Returns the trained policy and the per-episode log
    (episode, cumulative reward, epsilon, loss).
    """
    if not users:
        raise InvalidInputError("training needs at least one user trajectory")
    net_seed = int(np.random.SeedSequence([config.seed, 0]).generate_state(1)[0])
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    spec = NetworkSpec(
        input_dim=len(env.reset(users[0])),
        hidden_layers=tuple(config.hidden_layers),
        output_dim=env.n_actions,
        dropout_p=config.dropout_p,
    )
    net = network.init_network(spec, seed=net_seed, optimizer=config.optimizer)
    model = PolicyModel(network=net, action_ids=env.action_ids, extents=env.extents)
    target_net = copy.deepcopy(net) if config.use_target_network else None

    memory = ReplayMemory(config.memory_capacity)
    epsilon = config.epsilon_start
    logs: list[EpisodeLog] = []
    episode = 0
    new_since_train = 0
    trained_once = False
    train_passes = 0

    for user in users:
        for _ in range(config.repetition):
            state = env.reset(user)
            done = False
            cum = 0.0
            while not done:
                a_idx = select_action(model, state, epsilon, rng)
                outcome = env.step(model.action_ids[a_idx])
                memory.push(
                    Experience(
                        state=state,
                        action=a_idx,
                        reward=outcome.reward,
                        next_state=outcome.next_state,
                        done=outcome.done,
                    )
                )
                new_since_train += 1
                cum += outcome.reward
                state = outcome.next_state
                done = outcome.done
            episode += 1
            loss = math.nan
            if memory.full and (not trained_once or new_since_train >= config.train_interval):
                loss = _train_pass(model, memory, config, rng, target_net)
                trained_once = True
                new_since_train = 0
                train_passes += 1
                epsilon = max(config.epsilon_min, epsilon * config.epsilon_decay)
                if target_net is not None and train_passes % config.target_sync_every == 0:
                    target_net = copy.deepcopy(model.network)
            logs.append(EpisodeLog(episode=episode, cum_reward=cum, epsilon=epsilon, loss=loss))
    return TrainResult(model=model, log=logs)


def compose(model: PolicyModel, env: Environment, user: UserTrajectory) -> CompositionPlan:
    """Greedy (epsilon = 0) composition of one user trajectory.

    Q-values for the whole episode are computed in one batched forward pass;
    next states never depend on the chosen action, so this is identical to
    stepping greedily sample by sample.
    """
    if tuple(model.action_ids) != tuple(env.action_ids):
        raise ConfigError(
            "model action space does not match environment "
            f"({len(model.action_ids)} vs {len(env.action_ids)} actions)"
        )
    points = user.trajectory.points
    states = np.stack([encode_state(p, model.extents) for p in points])
    q = network.forward(model.network, states, train_mode=False)
    greedy = np.argmax(q, axis=1)

    env.reset(user)
    steps = []
    for i, p in enumerate(points):
        t = int(p.t)
        action_id = model.action_ids[int(greedy[i])]
        pair = env.validated_at(t).get(action_id)
        outcome = env.step(action_id)
        steps.append(
            PlanStep(
                user_timestep=t,
                chosen=action_id,
                reward=outcome.reward,
                capacity=pair.qos.capacity if pair is not None else 0.0,
            )
        )
    return CompositionPlan(user_id=user.id, steps=tuple(steps))


def save_model(model: PolicyModel) -> bytes:
    """Policy container: magic, version, JSON header, then network checkpoint."""
    header = json.dumps(
        {
            "action_ids": list(model.action_ids),
            "extents": model.extents.to_dict(),
        },
        sort_keys=True,
    ).encode("utf-8")
    net_blob = network.save(model.network)
    return b"".join(
        [
            _MODEL_MAGIC,
            struct.pack("<I", _MODEL_VERSION),
            struct.pack("<I", len(header)),
            header,
            struct.pack("<I", len(net_blob)),
            net_blob,
        ]
    )


def load_model(data: bytes) -> PolicyModel:
    if len(data) < 12 or data[:4] != _MODEL_MAGIC:
        raise CheckpointError("not a policy model file (bad magic)")
    (version,) = struct.unpack("<I", data[4:8])
    if version != _MODEL_VERSION:
        raise CheckpointError(f"unsupported policy model version {version}")
    (hlen,) = struct.unpack("<I", data[8:12])
    if 12 + hlen + 4 > len(data):
        raise CheckpointError("truncated policy model header")
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    (nlen,) = struct.unpack("<I", data[12 + hlen : 16 + hlen])
    blob = data[16 + hlen : 16 + hlen + nlen]
    if len(blob) != nlen or 16 + hlen + nlen != len(data):
        raise CheckpointError("truncated or oversized policy model payload")
    return PolicyModel(
        network=network.load(blob),
        action_ids=tuple(header["action_ids"]),
        extents=Extents.from_dict(header["extents"]),
    )


def write_model(model: PolicyModel, path: str | Path) -> None:
    Path(path).write_bytes(save_model(model))


def read_model(path: str | Path) -> PolicyModel:
    return load_model(Path(path).read_bytes())


def write_training_log(logs: list[EpisodeLog], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "cum_reward", "epsilon", "loss"])
        for row in logs:
            w.writerow([row.episode, repr(row.cum_reward), repr(row.epsilon), repr(row.loss)])
