"""Closed-loop episodes, training and evaluation.

An episode integrates the original plant and the simplified plant side by
side. Both run the nominal sliding-mode law on their own state (evaluated
inside the right-hand side, so its switching is resolved at the integrator
step). The original plant additionally receives ``u1``, which a sampled agent
holds constant over each control interval ``ts``. The agent observes the
error ``e = x - x_hat`` and its surface value ``sigma``.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels, net
from ._jit import NUMBA_ENABLED
from .ddpg import DDPGAgent, OUNoise, ReplayBuffer, Transition, train_step
from .net import NetParams, NumericError
from .numerics import IntegrationError, integrate_sample
from .plant import MassSpringDamper, ReferenceSignal, SinusoidReference, UncertainPlant, UncertaintyOracle, tracking_state
from .smc import (
    SingularGainError,
    SurfaceSpec,
    combined_control,
    compensation_from_head,
    ideal_compensation,
    nominal_control,
    sliding_value,
)

log = logging.getLogger(__name__)


@dataclass
class Hyperparameters:
    alpha_actor: float = 1e-4
    alpha_critic: float = 5e-3
    gamma: float = 1.0
    tau: float = 5e-3
    episode_steps: int = 70
    batch_size: int = 70
    reward_bound: float = -20.0
    ts: float = 0.1
    horizon: float = 7.0
    episodes: int = 400
    seed: int = 0
    q: Tuple[float, ...] = (1.0, 1.0)
    q_u: float = 0.0
    substeps: int = 10
    buffer_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.1
    optimizer: str = "sgd"
    actor_optimizer: Optional[str] = None
    critic_optimizer: Optional[str] = None
    termination: str = "step"
    terminal_mode: str = "bootstrap"
    error_signal: str = "model"
    checkpoint_every: int = 0

    def __post_init__(self):
        self.q = tuple(float(v) for v in self.q)
        self.validate()

    def validate(self):
        problems = []
        if not (isinstance(self.episode_steps, int) and self.episode_steps >= 1):
            problems.append("episode_steps must be a positive integer")
        elif not math.isclose(self.episode_steps * self.ts, self.horizon, rel_tol=1e-9, abs_tol=1e-12):
            problems.append(f"episode_steps * ts = {self.episode_steps * self.ts:g} must equal horizon = {self.horizon:g}")
        if not (isinstance(self.episodes, int) and self.episodes >= 1):
            problems.append("episodes must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            problems.append("gamma must lie in (0, 1]")
        if not (self.alpha_actor >= 0 and self.alpha_critic >= 0):
            problems.append("learning rates must be non-negative")
        if not 0.0 <= self.tau <= 1.0:
            problems.append("tau must lie in [0, 1]")
        if not (isinstance(self.batch_size, int) and self.batch_size >= 1):
            problems.append("batch_size must be a positive integer")
        if not self.ts > 0:
            problems.append("ts must be positive")
        if not (isinstance(self.substeps, int) and self.substeps >= 1):
            problems.append("substeps must be a positive integer")
        if not all(v > 0 for v in self.q) or self.q_u < 0:
            problems.append("reward weights need q_i > 0 and q_u >= 0")
        if self.buffer_capacity < 1:
            problems.append("buffer_capacity must be positive")
        if self.ou_theta < 0 or self.ou_sigma < 0:
            problems.append("OU parameters must be non-negative")
        for name in ("optimizer", "actor_optimizer", "critic_optimizer"):
            value = getattr(self, name)
            if value not in ("sgd", "adam") and not (value is None and name != "optimizer"):
                problems.append(f"{name} must be 'sgd' or 'adam'")
        if self.termination not in ("step", "return"):
            problems.append("termination must be 'step' or 'return'")
        if self.terminal_mode not in ("bootstrap", "mask", "episodic"):
            problems.append("terminal_mode must be 'bootstrap', 'mask' or 'episodic'")
        if self.error_signal not in ("model", "reference"):
            problems.append("error_signal must be 'model' or 'reference'")
        if self.checkpoint_every < 0:
            problems.append("checkpoint_every must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def optimizers(self):
        """``(actor, critic)`` optimizer names; the per-network fields
        override ``optimizer`` when set."""
        return (self.actor_optimizer or self.optimizer, self.critic_optimizer or self.optimizer)

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return Hyperparameters(**d)


# ------------------------------------------------------------ reward/return


def reward(e, u1, q=(1.0, 1.0), q_u=0.0):
    """``-sum(q_i e_i^2) - q_u u1^2``."""
    e = np.asarray(e, dtype=float)
    return -float(np.dot(np.asarray(q, dtype=float), e * e)) - q_u * u1 * u1


def return_of(rewards, gamma):
    """Discounted sum from step 0. Accepts a log or a reward sequence."""
    if isinstance(rewards, EpisodeLog):
        rewards = rewards.reward
    g = 0.0
    w = 1.0
    for r in rewards:
        g += w * r
        w *= gamma
    return g


# ------------------------------------------------------------------ logging


@dataclass
class EpisodeLog:
    """Per-step record of one closed-loop run.

    Row ``k`` holds the state at ``t_k``, the controls applied over
    ``[t_k, t_k + ts)`` and the reward observed at the end of that interval.
    The state after the last step is kept in the ``final_*`` fields.
    """

    t: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    ref: np.ndarray
    e: np.ndarray
    sigma: np.ndarray
    u_hat: np.ndarray
    u1: np.ndarray
    u: np.ndarray
    reward: np.ndarray
    r_head: np.ndarray
    mu_head: np.ndarray
    final_t: float
    final_x: np.ndarray
    final_x_hat: np.ndarray
    final_e: np.ndarray
    G0: float
    gamma: float
    termination_reason: str
    extra: dict = field(default_factory=dict)

    @property
    def steps(self):
        return len(self.t)

    def times_with_final(self):
        return np.append(self.t, self.final_t)

    def errors_with_final(self):
        return np.vstack((self.e, self.final_e[None, :])) if self.steps else self.final_e[None, :]

    def states_with_final(self):
        return np.vstack((self.x, self.final_x[None, :])) if self.steps else self.final_x[None, :]

    def columns(self):
        n = self.x.shape[1]
        cols = ["step", "t"] + [f"x{i + 1}" for i in range(n)] + ["ref"]
        cols += [f"e{i + 1}" for i in range(n)] + ["sigma", "u_hat", "u1", "u", "reward"]
        return cols + list(self.extra)

    def rows(self):
        for k in range(self.steps):
            row = [k, self.t[k], *self.x[k], self.ref[k], *self.e[k], self.sigma[k], self.u_hat[k], self.u1[k], self.u[k], self.reward[k]]
            row += [self.extra[name][k] for name in self.extra]
            yield row

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns())
            for row in self.rows():
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return path


class EpisodeError(RuntimeError):
    """Integration or numeric failure; carries the log up to the failure."""

    def __init__(self, message, log: Optional[EpisodeLog]):
        super().__init__(message)
        self.log = log


# ------------------------------------------------------------- controllers


class ZeroCompensator:
    """``u1 = 0``: the nominal law alone."""

    def act(self, e, sigma):
        return 0.0, 0.0, 0.0


class Policy:
    """Noise-free actor used for evaluation."""

    def __init__(self, actor: NetParams):
        self.actor = actor

    def act(self, e, sigma):
        return net.actor_forward(self.actor, e, sigma)


class IdealCompensator:
    """Compensation computed from the true mismatch, evaluated continuously."""

    continuous = True

    def __init__(self, oracle: UncertaintyOracle, surface: SurfaceSpec, reference):
        self.oracle = oracle
        self.surface = surface
        self.reference = reference

    def head(self, t, x, x_hat):
        r, mu = ideal_compensation(self.surface, self.oracle, self.reference, t, x, x_hat)
        sigma = sliding_value(self.surface, np.asarray(x) - np.asarray(x_hat))
        return r, mu, compensation_from_head(r, mu, sigma)

    def u1(self, t, x, x_hat):
        return self.head(t, x, x_hat)[2]


# --------------------------------------------------------------- the task


class TrackingTask:
    """Original plant, simplified plant, nominal law and reference together."""

    def __init__(
        self,
        plant: UncertainPlant,
        surface: SurfaceSpec,
        reference: Optional[ReferenceSignal] = None,
        ts=0.1,
        substeps=10,
        use_kernel=True,
    ):
        if surface.n != plant.n:
            raise ValueError(f"surface has {surface.n} coefficients, plant has {plant.n} states")
        self.plant = plant
        self.model = plant.nominal
        self.surface = surface
        self.reference = reference
        self.ts = float(ts)
        self.substeps = int(substeps)
        self._kernel_args = None
        if use_kernel and NUMBA_ENABLED and isinstance(plant, MassSpringDamper) and isinstance(reference, SinusoidReference):
            # input gain of the MSD model is the constant 1/m_hat
            if abs(1.0 / plant.params.m_hat) < surface.eps_g:
                raise SingularGainError("nominal input gain below the singularity guard")
            r = reference
            self._kernel_args = (
                plant.params.as_array(),
                np.array([surface.a[0], surface.a[1], surface.mu_hat]),
                np.array([r.amplitude, r.omega, r.phase, r.offset]),
            )

    @property
    def n(self):
        return self.plant.n

    @property
    def uses_kernel(self):
        return self._kernel_args is not None

    def nominal(self, t, x):
        return nominal_control(self.surface, self.model, self.reference, t, x)

    def ref_value(self, t):
        return 0.0 if self.reference is None else self.reference(t)

    def error(self, t, z, signal="model"):
        """Error seen by the agent: ``x - x_hat`` for ``"model"``, the
        tracking error ``x - (y, y', ...)`` for ``"reference"``."""
        x = z[: self.n]
        if signal == "model":
            return x - z[self.n :]
        if self.reference is None:
            return x.copy()
        return tracking_state(x, self.reference, t)

    def rhs(self, u1=0.0, compensator=None) -> Callable:
        n = self.n
        plant = self.plant

        def f(t, z):
            x, x_hat = z[:n], z[n:]
            v = u1 if compensator is None else compensator.u1(t, x, x_hat)
            u = combined_control(self.nominal(t, x), v)
            return np.concatenate(
                (plant.original_derivative(t, x, u), plant.simplified_derivative(t, x_hat, self.nominal(t, x_hat)))
            )

        return f

    def advance(self, t, z, u1=0.0, compensator=None):
        """State ``(x, x_hat)`` one control interval later."""
        if compensator is None and self._kernel_args is not None:
            out = kernels.msd_closed_loop_sample(z, float(t), self.ts, self.substeps, float(u1), *self._kernel_args)
            if not np.all(np.isfinite(out)):
                raise IntegrationError(t, z, "non-finite state after integration")
            return out
        return integrate_sample(self.rhs(u1, compensator), t, z, self.ts, self.substeps)


# --------------------------------------------------------------- episodes


def _initial(task, x0, x_hat0):
    x0 = np.zeros(task.n) if x0 is None else np.asarray(x0, dtype=float)
    x_hat0 = x0 if x_hat0 is None else np.asarray(x_hat0, dtype=float)
    if x0.shape != (task.n,) or x_hat0.shape != (task.n,):
        raise ValueError(f"initial states must have {task.n} components")
    return np.concatenate((x0, x_hat0))


def run_episode(
    task: TrackingTask,
    controller,
    hyper: Hyperparameters,
    mode="eval",
    rng: Optional[np.random.Generator] = None,
    x0=None,
    x_hat0=None,
    buffer: Optional[ReplayBuffer] = None,
    noise: Optional[OUNoise] = None,
    terminate_on_bound: Optional[bool] = None,
) -> EpisodeLog:
    """Run one episode of at most ``hyper.episode_steps`` control intervals.

    ``controller`` supplies ``u1``: either a sampled policy with
    ``act(e, sigma) -> (r, mu, u1)`` (a :class:`DDPGAgent`, :class:`Policy`,
    :class:`ZeroCompensator`) or a continuous compensator such as
    :class:`IdealCompensator`. In ``"train"`` mode the controller must be a
    :class:`DDPGAgent`; exploration noise is added to ``u1``, transitions are
    stored in ``buffer`` and the agent is updated once the buffer holds a full
    mini-batch. The reward bound ends episodes early only while learning,
    unless ``terminate_on_bound`` says otherwise.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if terminate_on_bound is None:
        terminate_on_bound = training
    if training:
        if not isinstance(controller, DDPGAgent):
            raise TypeError("training needs a DDPGAgent")
        if buffer is None or noise is None or rng is None:
            raise ValueError("training needs a replay buffer, a noise process and an rng")
        noise.reset()
    continuous = getattr(controller, "continuous", False)
    n = task.n
    N = hyper.episode_steps
    ts = task.ts
    a = task.surface.coefficients

    rec = {name: [] for name in ("t", "x", "x_hat", "ref", "e", "sigma", "u_hat", "u1", "u", "reward", "r", "mu")}
    z = _initial(task, x0, x_hat0)
    G = 0.0
    discount = 1.0
    reason = "horizon"
    t = 0.0
    e = task.error(t, z, hyper.error_signal)
    sigma = float(a @ e)

    def build(final_z, final_t, why):
        arr = {k: np.asarray(v, dtype=float) for k, v in rec.items()}
        return EpisodeLog(
            t=arr["t"],
            x=arr["x"].reshape(-1, n),
            x_hat=arr["x_hat"].reshape(-1, n),
            ref=arr["ref"],
            e=arr["e"].reshape(-1, n),
            sigma=arr["sigma"],
            u_hat=arr["u_hat"],
            u1=arr["u1"],
            u=arr["u"],
            reward=arr["reward"],
            r_head=arr["r"],
            mu_head=arr["mu"],
            final_t=final_t,
            final_x=final_z[:n].copy(),
            final_x_hat=final_z[n:].copy(),
            final_e=task.error(final_t, final_z, hyper.error_signal),
            G0=G,
            gamma=hyper.gamma,
            termination_reason=why,
        )

    for k in range(N):
        t = k * ts
        x = z[:n]
        try:
            if continuous:
                r_head, mu_head, u1 = controller.head(t, x, z[n:])
            else:
                r_head, mu_head, u1 = controller.act(e, sigma)
                if training:
                    u1 = u1 + noise.step(rng)
            u_hat = task.nominal(t, x)
            z_next = task.advance(t, z, u1, controller if continuous else None)
        except (IntegrationError, NumericError, SingularGainError, FloatingPointError) as exc:
            log.warning("episode aborted at step %d (t=%.3f): %s", k, t, exc)
            raise EpisodeError(f"step {k}, t={t:.3f}: {exc}", build(z, t, f"failure: {exc}")) from exc

        e_next = task.error(t + ts, z_next, hyper.error_signal)
        sigma_next = float(a @ e_next)
        rew = reward(e_next, u1, hyper.q, hyper.q_u)
        G += discount * rew
        discount *= hyper.gamma
        if not terminate_on_bound:
            stop = False
        elif hyper.termination == "step":
            stop = rew < hyper.reward_bound
        else:
            stop = G < hyper.reward_bound

        for key, val in (
            ("t", t), ("x", x), ("x_hat", z[n:]), ("ref", task.ref_value(t)), ("e", e), ("sigma", sigma),
            ("u_hat", u_hat), ("u1", u1), ("u", combined_control(u_hat, u1)), ("reward", rew),
            ("r", r_head), ("mu", mu_head),
        ):
            rec[key].append(np.array(val, dtype=float) if np.ndim(val) else float(val))

        if training:
            buffer.push(Transition(e, sigma, u1, rew, e_next, sigma_next, bool(stop), k == N - 1))
            if len(buffer) >= hyper.batch_size:
                try:
                    train_step(controller, buffer.sample(hyper.batch_size, rng), hyper)
                except NumericError as exc:
                    raise EpisodeError(f"training diverged at step {k}: {exc}", build(z_next, t + ts, "failure: diverged")) from exc

        z = z_next
        e, sigma = e_next, sigma_next
        if stop:
            reason = "reward-bound" if hyper.termination == "step" else "return-bound"
            break

    return build(z, (len(rec["t"])) * ts, reason)


# ---------------------------------------------------------------- training


@dataclass
class CurvePoint:
    episode: int
    G0: float
    steps: int
    termination_reason: str


class LearningCurve(list):
    def returns(self):
        return np.array([p.G0 for p in self])

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f.name for f in fields(CurvePoint)])
            for p in self:
                writer.writerow([p.episode, repr(p.G0), p.steps, p.termination_reason])


def make_agent(actor_spec, critic_spec, hyper: Hyperparameters):
    init_seed, _ = np.random.SeedSequence(hyper.seed).spawn(2)
    return DDPGAgent(actor_spec, critic_spec, seed=init_seed, optimizer=hyper.optimizers)


def train(
    task: TrackingTask,
    actor_spec,
    critic_spec,
    hyper: Hyperparameters,
    x0=None,
    out_dir=None,
    agent: Optional[DDPGAgent] = None,
    on_episode: Optional[Callable[[int, EpisodeLog], None]] = None,
):
    """Train for ``hyper.episodes`` episodes, each reset to ``x0``.

    Returns ``(agent, curve)``. With ``out_dir`` the learning curve is
    rewritten after every episode and checkpoints are saved every
    ``hyper.checkpoint_every`` episodes and at the end.
    """
    _, run_seed = np.random.SeedSequence(hyper.seed).spawn(2)
    rng = np.random.default_rng(run_seed)
    if agent is None:
        agent = make_agent(actor_spec, critic_spec, hyper)
    buffer = ReplayBuffer(hyper.buffer_capacity, task.n)
    noise = OUNoise(hyper.ou_theta, hyper.ou_sigma, task.ts)
    curve = LearningCurve()
    out_dir = Path(out_dir) if out_dir is not None else None

    for ep in range(hyper.episodes):
        ep_log = run_episode(task, agent, hyper, "train", rng, x0=x0, buffer=buffer, noise=noise)
        curve.append(CurvePoint(ep, ep_log.G0, ep_log.steps, ep_log.termination_reason))
        log.info("episode %d: G0=%.4f steps=%d (%s)", ep, ep_log.G0, ep_log.steps, ep_log.termination_reason)
        if on_episode is not None:
            on_episode(ep, ep_log)
        if out_dir is not None:
            curve.to_csv(out_dir / "learning_curve.csv")
            if hyper.checkpoint_every and (ep + 1) % hyper.checkpoint_every == 0:
                save_agent(agent, out_dir / "checkpoints", f"ep{ep + 1:05d}")
    if out_dir is not None:
        save_agent(agent, out_dir / "checkpoints", "final")
    return agent, curve


def save_agent(agent: DDPGAgent, directory, tag):
    directory = Path(directory)
    net.save_checkpoint(agent.actor, directory / f"actor_{tag}.json")
    net.save_checkpoint(agent.critic, directory / f"critic_{tag}.json")


def evaluate(task: TrackingTask, actor: Optional[NetParams], x0, hyper: Hyperparameters, x_hat0=None) -> EpisodeLog:
    """One noise-free episode; ``actor=None`` runs the nominal law alone."""
    controller = ZeroCompensator() if actor is None else Policy(actor)
    return run_episode(task, controller, hyper, "eval", x0=x0, x_hat0=x_hat0)


def simulate(task: TrackingTask, controller: str, hyper: Hyperparameters, x0=None, x_hat0=None, oracle=None) -> EpisodeLog:
    """Analytic controllers without learning.

    ``"nominal"`` reports the simplified plant under its own law (state,
    tracking error and surface of ``x_hat``); ``"zero"`` the original plant
    under the nominal law only; ``"ideal-oracle"`` the original plant with the
    exact compensation, and adds a ``V = sigma^2 / 2`` column.
    """
    if controller == "nominal":
        return simulate_nominal(task, hyper, x0)
    if controller == "zero":
        return run_episode(task, ZeroCompensator(), hyper, "eval", x0=x0, x_hat0=x_hat0)
    if controller == "ideal-oracle":
        if oracle is None:
            oracle = UncertaintyOracle(task.plant)
        comp = IdealCompensator(oracle, task.surface, task.reference)
        ep = run_episode(task, comp, hyper, "eval", x0=x0, x_hat0=x_hat0)
        ep.extra["V"] = 0.5 * ep.sigma ** 2
        return ep
    raise ValueError(f"unknown controller {controller!r}; expected nominal, ideal-oracle or zero")


def simulate_nominal(task: TrackingTask, hyper: Hyperparameters, x0=None, steps=None) -> EpisodeLog:
    """Simplified plant under the nominal law, logged every ``task.ts``.

    Error columns hold the tracking error of the simplified state and
    ``sigma`` its surface value.
    """
    n = task.n
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    steps = hyper.episode_steps if steps is None else steps
    a = task.surface.coefficients
    ref = task.reference
    model = task.model
    rows = {k: [] for k in ("t", "x", "ref", "e", "sigma", "u_hat")}

    def f(t, s):
        return model.derivative(t, s, task.nominal(t, s))

    def err(t, s):
        return s - ref.derivatives(t, n) if ref is not None else s.copy()

    for k in range(steps):
        t = k * task.ts
        e = err(t, x)
        for key, val in (("t", t), ("x", x), ("ref", task.ref_value(t)), ("e", e), ("sigma", float(a @ e)), ("u_hat", task.nominal(t, x))):
            rows[key].append(val)
        try:
            x = integrate_sample(f, t, x, task.ts, task.substeps)
        except (IntegrationError, SingularGainError) as exc:
            raise EpisodeError(f"nominal simulation failed at t={t:.3f}: {exc}", None) from exc
    t_end = steps * task.ts
    arr = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    e_rows = arr["e"].reshape(-1, n)
    e_final = err(t_end, x)
    rewards = np.array([reward(e_k, 0.0, hyper.q, hyper.q_u) for e_k in np.vstack((e_rows, e_final[None, :]))[1:]])
    zeros = np.zeros(steps)
    return EpisodeLog(
        t=arr["t"], x=arr["x"].reshape(-1, n), x_hat=arr["x"].reshape(-1, n), ref=arr["ref"], e=e_rows,
        sigma=arr["sigma"], u_hat=arr["u_hat"], u1=zeros, u=arr["u_hat"].copy(), reward=rewards,
        r_head=zeros, mu_head=zeros, final_t=t_end, final_x=x, final_x_hat=x, final_e=e_final,
        G0=return_of(rewards, hyper.gamma), gamma=hyper.gamma, termination_reason="horizon",
    )
