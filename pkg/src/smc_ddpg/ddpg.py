"""Replay buffer, exploration noise and the DDPG update."""
from dataclasses import dataclass

import numpy as np

from . import net
from .net import ActorSpec, CriticSpec, NumericError


@dataclass(frozen=True)
class Transition:
    e: np.ndarray
    sigma: float
    u1: float
    reward: float
    e_next: np.ndarray
    sigma_next: float
    terminated: bool = False
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "e", np.array(self.e, dtype=float))
        object.__setattr__(self, "e_next", np.array(self.e_next, dtype=float))
        values = np.concatenate((self.e, self.e_next, [self.sigma, self.u1, self.reward, self.sigma_next]))
        if not np.all(np.isfinite(values)):
            raise ValueError("transition fields must be finite")


@dataclass
class Batch:
    e: np.ndarray
    sigma: np.ndarray
    u1: np.ndarray
    reward: np.ndarray
    e_next: np.ndarray
    sigma_next: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray

    def __len__(self):
        return self.e.shape[0]


class EmptyBufferError(LookupError):
    pass


class ReplayBuffer:
    """Fixed-capacity FIFO of transitions backed by preallocated arrays."""

    def __init__(self, capacity, n):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.n = int(n)
        self._e = np.zeros((capacity, n))
        self._e_next = np.zeros((capacity, n))
        self._scalars = np.zeros((capacity, 4))  # sigma, u1, reward, sigma_next
        self._term = np.zeros(capacity, dtype=bool)
        self._trunc = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, tr: Transition):
        i = self._next
        self._e[i] = tr.e
        self._e_next[i] = tr.e_next
        self._scalars[i] = (tr.sigma, tr.u1, tr.reward, tr.sigma_next)
        self._term[i] = tr.terminated
        self._trunc[i] = tr.truncated
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, k):
        # k-th oldest record
        start = self._next if self._size == self.capacity else 0
        return (start + k) % self.capacity

    def __getitem__(self, k):
        if not -self._size <= k < self._size:
            raise IndexError(k)
        i = self._slot(k % self._size)
        s = self._scalars[i]
        return Transition(self._e[i], s[0], s[1], s[2], self._e_next[i], s[3], bool(self._term[i]), bool(self._trunc[i]))

    def __iter__(self):
        return (self[k] for k in range(self._size))

    def _gather(self, idx):
        s = self._scalars[idx]
        return Batch(self._e[idx], s[:, 0], s[:, 1], s[:, 2], self._e_next[idx], s[:, 3], self._term[idx], self._trunc[idx])

    def sample(self, count, rng: np.random.Generator) -> Batch:
        """Uniform mini-batch; with replacement only while the buffer holds
        fewer than ``count`` records."""
        if self._size == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        if self._size < count:
            idx = rng.integers(0, self._size, size=count)
        else:
            idx = rng.choice(self._size, size=count, replace=False)
        return self._gather(np.array([self._slot(k) for k in idx], dtype=np.int64))


def buffer_push(buffer: ReplayBuffer, tr: Transition):
    buffer.push(tr)


def buffer_sample(buffer: ReplayBuffer, count, rng):
    return buffer.sample(count, rng)


class OUNoise:
    """Euler-Maruyama Ornstein-Uhlenbeck process reverting to zero."""

    def __init__(self, theta=0.15, sigma=0.1, dt=0.1, x0=0.0):
        if theta < 0 or sigma < 0 or not dt > 0:
            raise ValueError("need theta >= 0, sigma >= 0 and dt > 0")
        self.theta = theta
        self.sigma = sigma
        self.dt = dt
        self.x0 = x0
        self.x = x0

    def reset(self):
        self.x = self.x0

    def step(self, rng: np.random.Generator):
        z = rng.standard_normal()
        self.x = self.x - self.theta * self.x * self.dt + self.sigma * np.sqrt(self.dt) * z
        return self.x


def ou_step(state: OUNoise, rng):
    return state.step(rng)


TERMINAL_MODES = ("bootstrap", "mask", "episodic")


def td_targets(batch: Batch, actor_target, critic_target, gamma, terminal_mode="bootstrap"):
    """``y = r + gamma * Q_t(e', u1_t(e', sigma'))``.

    ``terminal_mode`` decides where the bootstrap term is dropped: never
    (``"bootstrap"``), after a reward-bound termination (``"mask"``), or after
    a termination or the last step of the horizon (``"episodic"``).
    """
    _, _, u1_next = net.actor_forward(actor_target, batch.e_next, batch.sigma_next)
    q_next = net.critic_forward(critic_target, batch.e_next, u1_next)
    if terminal_mode == "mask":
        q_next = np.where(batch.terminated, 0.0, q_next)
    elif terminal_mode == "episodic":
        q_next = np.where(batch.terminated | batch.truncated, 0.0, q_next)
    elif terminal_mode != "bootstrap":
        raise ValueError(f"terminal_mode must be one of {TERMINAL_MODES}, got {terminal_mode!r}")
    return batch.reward + gamma * q_next


class DDPGAgent:
    """Actor, critic, their target copies and the optimizer state."""

    def __init__(self, actor_spec: ActorSpec, critic_spec: CriticSpec, seed=0, optimizer="sgd"):
        """``optimizer`` is one name for both networks or an
        ``(actor, critic)`` pair."""
        rng = np.random.default_rng(seed)
        self.actor = net.init_params(actor_spec, rng)
        self.critic = net.init_params(critic_spec, rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        if isinstance(optimizer, str):
            optimizer = (optimizer, optimizer)
        self.optimizer_names = tuple(optimizer)
        self._actor_opt = net.make_optimizer(optimizer[0], self.actor.flat.size)
        self._critic_opt = net.make_optimizer(optimizer[1], self.critic.flat.size)

    @property
    def actor_spec(self):
        return self.actor.spec

    @property
    def critic_spec(self):
        return self.critic.spec

    def act(self, e, sigma):
        """``(r, mu, u1)`` from the current actor, no exploration."""
        return net.actor_forward(self.actor, e, sigma)

    def train_step(self, batch: Batch, alpha_actor, alpha_critic, gamma, tau, terminal_mode="bootstrap"):
        """Critic descent, then actor ascent against the updated critic, then
        soft target updates. Returns ``(critic_loss, mean_q)``."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        y = td_targets(batch, self.actor_target, self.critic_target, gamma, terminal_mode)
        loss, g_critic = net.critic_gradients(self.critic, batch.e, batch.u1, y)
        critic = self._critic_opt.step(self.critic, g_critic, alpha_critic, "descent")
        mean_q, g_actor = net.actor_gradients(self.actor, critic, batch.e, batch.sigma)
        actor = self._actor_opt.step(self.actor, g_actor, alpha_actor, "ascent")
        if not (np.isfinite(loss) and np.isfinite(mean_q)):
            raise NumericError("non-finite loss during training step")
        self.critic = critic
        self.actor = actor
        self.actor_target = net.soft_update(self.actor_target, actor, tau)
        self.critic_target = net.soft_update(self.critic_target, critic, tau)
        return loss, mean_q


def train_step(agent: DDPGAgent, batch: Batch, hyper):
    """One update of ``agent`` with the rates held by ``hyper``."""
    return agent.train_step(
        batch,
        hyper.alpha_actor,
        hyper.alpha_critic,
        hyper.gamma,
        hyper.tau,
        terminal_mode=hyper.terminal_mode,
    )
