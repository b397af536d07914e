"""Seeded, parallel collection of cumulative rewards from smoothed rollouts.

Episode ``i`` of a sample set is driven entirely by the seed ``seed_base + i``
(initial state and all smoothing noise), and episodes are simulated with
elementwise array code, so a sample set is bit-identical however it is split
across batches or worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.stats import norm

from .core import (ACTION_FLIP, GAUSSIAN, RewardSampleSet, SmoothingConfig, Step,
                   TrajectoryRecord)
from .envs import make_env
from .noise import EpisodeNoise
from .policies import flip_actions

PHASE_OFFSET = 1 << 20
BATCH_SIZE = 2048


@dataclass(frozen=True)
class ActionAttack:
    """Per-step action override: replace the greedy action by argmin-Q while flips remain."""

    max_flips: int
    gap_threshold: float = 0.0

    def __post_init__(self):
        if self.max_flips < 0 or self.max_flips != int(self.max_flips):
            raise ValueError(f"max_flips must be a non-negative integer, got {self.max_flips}")


@dataclass
class BatchResult:
    returns: np.ndarray     # (B,) discounted cumulative rewards
    lengths: np.ndarray     # (B,) steps taken
    flips_used: np.ndarray  # (B,) actions overridden by the attacker


def simulate(env, policy, smoothing: SmoothingConfig, noise: EpisodeNoise,
             gamma: float = 1.0, horizon: int | None = None,
             initial_states: np.ndarray | None = None,
             obs_offset: np.ndarray | None = None,
             action_attack: ActionAttack | None = None,
             trace: list | None = None) -> BatchResult:
    """Run a batch of smoothed episodes on pre-drawn noise.

    Args:
      env: environment with ``step_batch``.
      policy: black-box policy (``act``; ``q_values`` for action flips).
      smoothing: gaussian observation noise or action flips.
      noise: per-episode randomness, leading axis = episode.
      gamma: discount factor.
      horizon: number of steps (defaults to the environment's horizon).
      initial_states: override for ``noise.initial_states``.
      obs_offset: (B, D) perturbation added to the first observation only.
      action_attack: adversarial action overrides (action-flip smoothing only).
      trace: if given, receives per-step (states, observations, actions,
        rewards, active) arrays for building trajectory records.
    """
    d = env.descriptor
    T = d.horizon if horizon is None else horizon
    states = np.array(noise.initial_states if initial_states is None else initial_states, dtype=float)
    B = states.shape[0]
    returns = np.zeros(B)
    lengths = np.zeros(B, dtype=int)
    flips_left = np.full(B, action_attack.max_flips if action_attack else 0)
    active = np.ones(B, dtype=bool)
    if action_attack is not None and smoothing.kind != ACTION_FLIP:
        raise ValueError("action attacks need action-flip smoothing")
    for t in range(T):
        obs = states if (t > 0 or obs_offset is None) else states + obs_offset
        if smoothing.kind == GAUSSIAN:
            actions = policy.act(obs + smoothing.sigma * noise.gaussian[:, t, :])
        else:
            q = policy.q_values(obs)
            greedy = np.argmax(q, axis=-1)
            if action_attack is not None:
                gap = q.max(axis=-1) - q.min(axis=-1)
                hit = active & (flips_left > 0) & (gap > action_attack.gap_threshold)
                greedy = np.where(hit, np.argmin(q, axis=-1), greedy)
                flips_left = flips_left - hit
            actions = flip_actions(greedy, smoothing.p, d.num_actions,
                                   noise.flip[:, t], noise.choice[:, t])
        nxt, rewards, terminated = env.step_batch(states, actions)
        if trace is not None:
            trace.append((states, obs, actions, rewards, active.copy()))
        returns = returns + np.where(active, rewards * gamma**t, 0.0)
        lengths = lengths + active
        states = np.where(active[:, None], nxt, states)
        active = active & ~terminated
        if not active.any():
            break
    used = (action_attack.max_flips - flips_left) if action_attack else np.zeros(B, dtype=int)
    return BatchResult(returns, lengths, used)


def _episode_seeds(seed_base: int, start: int, stop: int) -> range:
    return range(seed_base + start, seed_base + stop)


def _run_chunk(args) -> np.ndarray:
    env_id, policy, smoothing, seed_base, start, stop, gamma = args
    env = make_env(env_id)
    out = []
    for lo in range(start, stop, BATCH_SIZE):
        hi = min(lo + BATCH_SIZE, stop)
        noise = EpisodeNoise.draw(env, _episode_seeds(seed_base, lo, hi))
        out.append(simulate(env, policy, smoothing, noise, gamma).returns)
    return np.concatenate(out)


def split_range(m: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, m, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_chunks(fn, tasks, workers: int):
    """Apply fn to tasks, in a process pool when workers > 1; output keeps task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def smoothing_reward_set(env_id: str, policy, smoothing: SmoothingConfig, m: int,
                         seed_base: int = 0, gamma: float = 1.0,
                         workers: int = 1) -> RewardSampleSet:
    """Cumulative rewards of m smoothed episodes; episode i uses seed seed_base + i."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    env = make_env(env_id)
    tasks = [(env_id, policy, smoothing, seed_base, a, b, gamma)
             for a, b in split_range(m, max(workers, 1))]
    values = np.concatenate(map_chunks(_run_chunk, tasks, workers))
    samples = RewardSampleSet(tuple(float(v) for v in values), env_id, smoothing,
                              seed_base, gamma, env.descriptor.horizon)
    samples.check_range(*env.descriptor.reward_range)
    return samples


def empirical_mean_and_range(samples) -> tuple[float, float, float]:
    values = samples.as_array() if isinstance(samples, RewardSampleSet) else np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ValueError("need at least one sample")
    return math.fsum(values) / values.size, float(values.min()), float(values.max())


def trajectory_record(env_id: str, policy, smoothing: SmoothingConfig, seed: int,
                      gamma: float = 1.0) -> TrajectoryRecord:
    """Full step-by-step record of one smoothed episode."""
    env = make_env(env_id)
    trace: list = []
    res = simulate(env, policy, smoothing, EpisodeNoise.draw(env, [seed]), gamma, trace=trace)
    steps = tuple(
        Step(tuple(map(float, s[0])), tuple(map(float, o[0])), int(a[0]), float(r[0]))
        for s, o, a, r, act in trace if act[0]
    )
    return TrajectoryRecord(steps, env.descriptor.horizon, float(res.returns[0]), seed)


def enumerate_chain_outcomes(env, policy, smoothing: SmoothingConfig,
                             levels: int = 3) -> list[tuple[float, float]]:
    """Exact (probability, return) pairs of a smoothed chain episode.

    Action flips are enumerated exactly. Gaussian noise is replaced by a
    ``levels``-point discretisation (equal-probability cells represented by
    their conditional means), giving a finite distribution over at most
    ``levels ** T`` trajectories.
    """
    d = env.descriptor
    T = d.horizon
    if smoothing.kind == ACTION_FLIP:
        # (probability, flip uniform, choice uniform) per step
        p, n = smoothing.p, d.num_actions
        step_outcomes = [(1.0 - p, 1.0, 0.0)] + [
            (p / (n - 1), 0.0, (k + 0.5) / (n - 1)) for k in range(n - 1)]
    else:
        edges = norm.ppf(np.linspace(0.0, 1.0, levels + 1))
        # conditional mean of a standard normal on [a, b] is (pdf(a) - pdf(b)) / (1 / levels)
        means = (norm.pdf(edges[:-1]) - norm.pdf(edges[1:])) * levels
        step_outcomes = [(1.0 / levels, float(z), 0.0) for z in means]
    if len(step_outcomes) ** T > 32:
        raise ValueError("too many trajectories to enumerate")
    outcomes = []
    for combo in product(step_outcomes, repeat=T):
        prob = math.prod(c[0] for c in combo)
        if prob == 0.0:
            continue
        init = env.reset_state(None)[None, :]
        if smoothing.kind == ACTION_FLIP:
            noise = EpisodeNoise(init, np.zeros((1, T, d.state_dim)),
                                 np.array([[c[1] for c in combo]]), np.array([[c[2] for c in combo]]))
        else:
            gauss = np.array([[[c[1]] * d.state_dim for c in combo]])
            noise = EpisodeNoise(init, gauss, np.ones((1, T)), np.zeros((1, T)))
        outcomes.append((prob, float(simulate(env, policy, smoothing, noise).returns[0])))
    return outcomes
