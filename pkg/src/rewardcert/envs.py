"""Self-contained environments with vectorised dynamics.

Every environment exposes ``reset_state(rng)`` (draws the initial state from an
episode generator) and ``step_batch(states, actions)``, which advances many
episodes at once with purely elementwise arithmetic so that results do not
depend on how episodes are batched. ``Episode`` wraps them in the usual
reset/step interface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import episode_rng


@dataclass(frozen=True)
class EnvDescriptor:
    state_dim: int
    num_actions: int
    horizon: int
    reward_range: tuple[float, float]

    def __post_init__(self):
        if self.state_dim < 1 or self.num_actions < 2 or self.horizon < 1:
            raise ValueError(f"invalid environment shape {self}")
        if self.reward_range[0] > self.reward_range[1]:
            raise ValueError("reward_range must satisfy r_min <= r_max")

    @property
    def return_range(self) -> tuple[float, float]:
        """Bounds on the undiscounted return of a full-length episode."""
        return (self.horizon * self.reward_range[0], self.horizon * self.reward_range[1])

    def return_support(self, gamma: float = 1.0) -> tuple[float, float]:
        """Interval holding every discounted return, including early-terminated episodes."""
        total = math.fsum(gamma**t for t in range(self.horizon))
        return (total * min(self.reward_range[0], 0.0), total * max(self.reward_range[1], 0.0))


class CartPole:
    """Cart-pole balancing with the classic-control benchmark constants.

    State (x, x_dot, theta, theta_dot); action 0 pushes left, 1 pushes right.
    Reward +1 for every step taken, including the one that terminates.
    """

    env_id = "cartpole"
    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5  # half the pole length
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def __init__(self, horizon: int = 200):
        self.descriptor = EnvDescriptor(4, 2, horizon, (0.0, 1.0))

    def reset_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-0.05, 0.05, size=4)

    def step_batch(self, states, actions):
        states = np.asarray(states, dtype=float)
        x, x_dot, theta, theta_dot = (states[..., i] for i in range(4))
        force = np.where(np.asarray(actions) == 1, self.force_mag, -self.force_mag)
        costheta = np.cos(theta)
        sintheta = np.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass))
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        nxt = np.stack([
            x + self.tau * x_dot,
            x_dot + self.tau * xacc,
            theta + self.tau * theta_dot,
            theta_dot + self.tau * thetaacc,
        ], axis=-1)
        done = (np.abs(nxt[..., 0]) > self.x_threshold) | (np.abs(nxt[..., 2]) > self.theta_threshold)
        return nxt, np.ones(nxt.shape[:-1]), done


class ChainMDP:
    """Four-state deterministic chain with a myopic decoy, horizon 3.

    From the start state, action 0 cashes in one reward and falls into an
    absorbing sink; action 1 walks toward a goal state that pays 1 per step.
    The optimal return from the start is 2 (always take action 1).
    Observations are the state index as a 1-vector.
    """

    env_id = "chain"
    # next_state[s, a], reward[s, a]; state 3 is the sink
    next_state = np.array([[3, 1], [0, 2], [0, 2], [3, 3]])
    reward = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 0.0]])

    def __init__(self, horizon: int = 3):
        if not 1 <= horizon <= 3:
            raise ValueError("chain horizon must be between 1 and 3")
        self.descriptor = EnvDescriptor(1, 2, horizon, (0.0, 1.0))

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]

    def reset_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def step_batch(self, states, actions):
        s = np.asarray(states, dtype=float)[..., 0].astype(int)
        a = np.asarray(actions, dtype=int)
        nxt = self.next_state[s, a].astype(float)[..., None]
        return nxt, self.reward[s, a], np.zeros(s.shape, dtype=bool)


class BernoulliEnv:
    """One-step environment whose return is Bernoulli(mean) whatever the agent does.

    The initial state holds a uniform draw u; the reward is 1 when u < mean.
    """

    env_id = "bernoulli"

    def __init__(self, mean: float = 0.7):
        if not 0.0 <= mean <= 1.0:
            raise ValueError(f"mean must be in [0, 1], got {mean}")
        self.mean = mean
        self.descriptor = EnvDescriptor(1, 2, 1, (0.0, 1.0))

    def reset_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(1)

    def step_batch(self, states, actions):
        u = np.asarray(states, dtype=float)[..., 0]
        return np.asarray(states, dtype=float), (u < self.mean).astype(float), np.ones(u.shape, dtype=bool)


_REGISTRY = {
    "cartpole": CartPole,
    "chain": ChainMDP,
    "bernoulli": BernoulliEnv,
}


def make_env(env_id: str):
    """Build an environment from its string identifier (``cartpole``, ``chain``, ``bernoulli``)."""
    try:
        return _REGISTRY[env_id]()
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; choose from {sorted(_REGISTRY)}") from None


class Episode:
    """Single-episode reset/step interface over a vectorised environment."""

    def __init__(self, env):
        self.env = env
        self.state = None
        self.t = 0
        self.done = True

    def reset(self, seed: int) -> np.ndarray:
        self.state = self.env.reset_state(episode_rng(seed))
        self.t = 0
        self.done = False
        return self.state.copy()

    def step(self, action: int):
        if self.done:
            raise RuntimeError("episode is over; call reset() first")
        n = self.env.descriptor.num_actions
        if not 0 <= action < n:
            raise ValueError(f"action {action} outside [0, {n})")
        nxt, reward, terminated = self.env.step_batch(self.state[None, :], np.array([action]))
        self.state = nxt[0]
        self.t += 1
        self.done = bool(terminated[0]) or self.t >= self.env.descriptor.horizon
        return self.state.copy(), float(reward[0]), self.done


def env_reset(episode: Episode, seed: int) -> np.ndarray:
    return episode.reset(seed)


def env_step(episode: Episode, action: int):
    return episode.step(action)
