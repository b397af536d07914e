"""Black-box policies and the two smoothing wrappers.

A policy is any object with ``num_actions`` and a vectorised ``act(obs)``;
policies that also expose ``q_values(obs)`` (shape ``(..., N)``) can be used
with action-flip smoothing and the l0 attack. The wrappers only ever call
``act`` and ``q_values``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import ChainMDP, Episode


@dataclass(frozen=True)
class PDController:
    """Scripted cart-pole controller: push right iff gains . obs > 0.

    ``q_values`` returns (-s, s) with s = gains . obs so that the greedy action
    coincides with ``act`` (a tie at s = 0 resolves to action 0, push left).
    """

    gains: tuple[float, ...] = (0.0, 0.0, 1.0, 0.5)
    num_actions: int = 2

    def score(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        # coordinate-by-coordinate so the result never depends on batch layout
        s = np.zeros(obs.shape[:-1])
        for i, g in enumerate(self.gains):
            s = s + g * obs[..., i]
        return s

    def act(self, obs) -> np.ndarray:
        return (self.score(obs) > 0).astype(int)

    def q_values(self, obs) -> np.ndarray:
        s = self.score(obs)
        return np.stack([-s, s], axis=-1)


def pd_controller_act(obs) -> int:
    return int(PDController().act(np.asarray(obs, dtype=float)))


@dataclass(frozen=True)
class Discretizer:
    """Uniform grid over a box; points outside the box fall into the edge cells."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    bins: tuple[int, ...]

    def __post_init__(self):
        if not len(self.lows) == len(self.highs) == len(self.bins):
            raise ValueError("lows, highs and bins must have equal length")
        if any(b < 1 for b in self.bins) or any(h <= lo for lo, h in zip(self.lows, self.highs)):
            raise ValueError("need bins >= 1 and highs > lows")

    @property
    def num_states(self) -> int:
        return int(np.prod(self.bins))

    def index(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        idx = np.zeros(obs.shape[:-1], dtype=int)
        for i, (lo, hi, n) in enumerate(zip(self.lows, self.highs, self.bins)):
            cell = np.floor((obs[..., i] - lo) / (hi - lo) * n)
            idx = idx * n + np.clip(cell, 0, n - 1).astype(int)
        return idx

    def to_text(self) -> str:
        return " ".join(f"{lo!r}:{hi!r}:{n}" for lo, hi, n in zip(self.lows, self.highs, self.bins))

    @classmethod
    def from_text(cls, text: str) -> Discretizer:
        parts = [tok.split(":") for tok in text.split()]
        return cls(tuple(float(p[0]) for p in parts), tuple(float(p[1]) for p in parts),
                   tuple(int(p[2]) for p in parts))


CHAIN_DISCRETIZER = Discretizer((-0.5,), (3.5,), (4,))
CARTPOLE_DISCRETIZER = Discretizer((-2.4, -3.0, -0.21, -3.5), (2.4, 3.0, 0.21, 3.5), (3, 3, 6, 6))


def default_discretizer(env) -> Discretizer:
    if isinstance(env, ChainMDP):
        return CHAIN_DISCRETIZER
    if getattr(env, "env_id", None) == "cartpole":
        return CARTPOLE_DISCRETIZER
    raise ValueError(f"no discretisation available for {type(env).__name__}")


@dataclass(frozen=True, eq=False)
class TabularQPolicy:
    """Greedy policy over a Q table indexed by a discretised observation."""

    q: np.ndarray
    discretizer: Discretizer = field(default=CHAIN_DISCRETIZER)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != self.discretizer.num_states or q.shape[1] < 2:
            raise ValueError(f"Q table shape {q.shape} does not match "
                             f"{self.discretizer.num_states} states")
        object.__setattr__(self, "q", q)

    @property
    def num_actions(self) -> int:
        return self.q.shape[1]

    def q_values(self, obs) -> np.ndarray:
        return self.q[self.discretizer.index(obs)]

    def act(self, obs) -> np.ndarray:
        # np.argmax returns the lowest index among ties
        return np.argmax(self.q_values(obs), axis=-1)

    def save(self, path: str | Path) -> None:
        write_q_table(self, path)

    @classmethod
    def load(cls, path: str | Path) -> TabularQPolicy:
        return read_q_table(path)


# Line 1: version tag. Line 2: "grid <lo:hi:bins ...>". Then one line per
# state: "<index> <q_0> ... <q_{N-1}>".
_Q_HEADER = "# rewardcert-qtable v1"


def write_q_table(policy: TabularQPolicy, path: str | Path) -> None:
    lines = [_Q_HEADER, "grid " + policy.discretizer.to_text()]
    for i, row in enumerate(policy.q):
        lines.append(" ".join([str(i)] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_q_table(path: str | Path) -> TabularQPolicy:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or lines[0] != _Q_HEADER or not lines[1].startswith("grid "):
        raise ValueError(f"{path}: not a Q table file")
    disc = Discretizer.from_text(lines[1][len("grid "):])
    rows = {}
    for line in lines[2:]:
        if line.strip():
            idx, *vals = line.split()
            rows[int(idx)] = [float(v) for v in vals]
    if sorted(rows) != list(range(disc.num_states)):
        raise ValueError(f"{path}: expected rows for states 0..{disc.num_states - 1}")
    return TabularQPolicy(np.array([rows[i] for i in range(disc.num_states)]), disc)


def train_tabular_q(env, episodes: int, learning_rate: float = 0.5,
                    epsilon_start: float = 1.0, epsilon_end: float = 0.05,
                    seed: int = 0, gamma: float = 0.9,
                    discretizer: Discretizer | None = None) -> TabularQPolicy:
    """One-step Q-learning with a linearly decaying epsilon-greedy schedule.

    Deterministic given ``seed``: exploration draws and episode reset seeds
    both come from one generator seeded with it.
    """
    if episodes < 0:
        raise ValueError("episodes must be >= 0")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must lie in (0, 1]")
    disc = discretizer if discretizer is not None else default_discretizer(env)
    n = env.descriptor.num_actions
    q = np.zeros((disc.num_states, n))
    rng = np.random.default_rng(seed)
    episode = Episode(env)
    for k in range(episodes):
        frac = k / max(episodes - 1, 1)
        explore = epsilon_start + (epsilon_end - epsilon_start) * frac
        obs = episode.reset(int(rng.integers(2**62)))
        done = False
        while not done:
            s = int(disc.index(obs))
            if rng.random() < explore:
                a = int(rng.integers(n))
            else:
                a = int(np.argmax(q[s]))
            obs, r, done = episode.step(a)
            terminal = done and episode.t < env.descriptor.horizon
            target = r if terminal else r + gamma * float(q[int(disc.index(obs))].max())
            q[s, a] += learning_rate * (target - q[s, a])
    return TabularQPolicy(q, disc)


def gaussian_smooth_act(policy, obs, sigma: float, noise) -> np.ndarray:
    """Action of the base policy on the observation shifted by sigma * noise.

    ``noise`` holds standard normal draws with the shape of ``obs`` (taken
    from the episode's counter-based stream by the caller).
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return policy.act(np.asarray(obs, dtype=float) + sigma * np.asarray(noise, dtype=float))


def flip_actions(greedy, p: float, num_actions: int, u_flip, u_choice) -> np.ndarray:
    """With probability p replace each greedy action by a uniform choice among the others."""
    greedy = np.asarray(greedy)
    other = np.minimum((np.asarray(u_choice) * (num_actions - 1)).astype(int), num_actions - 2)
    other = other + (other >= greedy)
    return np.where(np.asarray(u_flip) < p, other, greedy)


def action_flip_act(policy, obs, p: float, u_flip, u_choice) -> np.ndarray:
    """Greedy (argmax-Q) action, flipped with probability p to a uniform alternative."""
    if not hasattr(policy, "q_values"):
        raise TypeError("action-flip smoothing needs a policy exposing q_values")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"flip probability must lie in [0, 1), got {p}")
    greedy = np.argmax(policy.q_values(obs), axis=-1)
    return flip_actions(greedy, p, policy.num_actions, u_flip, u_choice)
