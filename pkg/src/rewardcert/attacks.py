"""Budget-respecting empirical attacks on smoothed policies.

Attacked reward samples give upper-bound evidence on the worst-case mean, so
a certified lower bound must never sit above them (beyond sampling slack).
Both attacks reuse the clean episode noise (stream 0 of each episode seed), so
an attack with an empty budget reproduces the clean smoothed rollouts exactly.
Attack-private randomness (candidate directions, scoring rollouts) comes from
stream 1 of the same seed.
"""

from __future__ import annotations

import numpy as np

from .core import ACTION_FLIP, GAUSSIAN, L1, L2, RewardSampleSet, SmoothingConfig
from .envs import make_env
from .noise import ATTACK_STREAM, EpisodeNoise, episode_rng
from .rollout import ActionAttack, split_range, map_chunks, simulate

ATTACK_BATCH = 128


def candidate_offsets(rng: np.random.Generator, dim: int, epsilon: float,
                      num_candidates: int, norm: str = L2) -> np.ndarray:
    """Random directions plus the signed coordinate directions, all scaled to norm epsilon."""
    raw = rng.standard_normal((num_candidates, dim))
    order = 1 if norm == L1 else 2
    lengths = np.linalg.norm(raw, ord=order, axis=1, keepdims=True)
    random_dirs = raw / np.where(lengths > 0, lengths, 1.0)
    eye = np.eye(dim)
    return epsilon * np.concatenate([random_dirs, eye, -eye])


def danger(env, states) -> np.ndarray:
    """How close states are to termination, in [0, 1]; zero for environments without a notion of it."""
    if getattr(env, "env_id", None) == "cartpole":
        return np.maximum(np.abs(states[..., 0]) / env.x_threshold,
                          np.abs(states[..., 2]) / env.theta_threshold).clip(0.0, 1.0)
    return np.zeros(states.shape[:-1])


def _score_candidates(env, policy, smoothing, state0, offsets, rng, horizon, reps, gamma):
    """Mean short-horizon return per candidate, ties broken toward more dangerous end states."""
    C, D = offsets.shape
    n = C * reps
    T = min(horizon, env.descriptor.horizon)
    noise = EpisodeNoise(
        np.repeat(state0[None, :], n, axis=0),
        np.zeros((n, env.descriptor.horizon, D)),
        np.ones((n, env.descriptor.horizon)),
        np.zeros((n, env.descriptor.horizon)),
    )
    noise.gaussian[:, :T, :] = rng.standard_normal((n, T, D))
    trace: list = []
    res = simulate(env, policy, smoothing, noise, gamma, horizon=T,
                   obs_offset=np.repeat(offsets, reps, axis=0), trace=trace)
    final = trace[-1][0] if trace else noise.initial_states
    score = res.returns - 1e-3 * danger(env, final)
    return score.reshape(C, reps).mean(axis=1)


def _l2_chunk(args):
    (env_id, policy, smoothing, epsilon, norm, num_candidates, seed_base,
     start, stop, gamma, horizon, reps) = args
    env = make_env(env_id)
    out, norms = [], []
    for lo in range(start, stop, ATTACK_BATCH):
        seeds = range(seed_base + lo, seed_base + min(lo + ATTACK_BATCH, stop))
        noise = EpisodeNoise.draw(env, seeds)
        chosen = np.zeros_like(noise.initial_states)
        if epsilon > 0:
            for k, seed in enumerate(seeds):
                rng = episode_rng(seed, ATTACK_STREAM)
                offsets = candidate_offsets(rng, env.descriptor.state_dim, epsilon,
                                            num_candidates, norm)
                scores = _score_candidates(env, policy, smoothing, noise.initial_states[k],
                                           offsets, rng, horizon, reps, gamma)
                chosen[k] = offsets[int(np.argmin(scores))]
        out.append(simulate(env, policy, smoothing, noise, gamma, obs_offset=chosen).returns)
        norms.append(np.linalg.norm(chosen, ord=1 if norm == L1 else 2, axis=1))
    return np.concatenate(out), np.concatenate(norms)


def _sample_set(values, env, env_id, smoothing, seed, gamma, header) -> RewardSampleSet:
    samples = RewardSampleSet(tuple(float(v) for v in values), env_id, smoothing, seed,
                              gamma, env.descriptor.horizon, tuple(header))
    samples.check_range(*env.descriptor.reward_range)
    return samples


def l2_obs_attack(env_id: str, policy, smoothing: SmoothingConfig, epsilon: float,
                  num_episodes: int = 1000, num_candidates: int = 8, seed: int = 0,
                  norm: str = L2, score_horizon: int = 20, score_reps: int = 5,
                  gamma: float = 1.0, workers: int = 1) -> RewardSampleSet:
    """Spend the whole observation budget on the first observation of each episode.

    Candidates are ``num_candidates`` random directions and the 2D signed
    coordinate directions, each scaled to size epsilon in ``norm`` (l2 or l1).
    Each is scored by ``score_reps`` smoothed rollouts of ``score_horizon``
    steps from the episode's true initial state; the lowest-scoring one is
    used for the real episode.
    """
    if smoothing.kind != GAUSSIAN:
        raise ValueError("observation attacks need gaussian observation smoothing")
    if norm not in (L2, L1):
        raise ValueError(f"norm must be {L2!r} or {L1!r}, got {norm!r}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if num_episodes < 1 or num_candidates < 0:
        raise ValueError("need num_episodes >= 1 and num_candidates >= 0")
    env = make_env(env_id)
    tasks = [(env_id, policy, smoothing, float(epsilon), norm, num_candidates, seed,
              a, b, gamma, score_horizon, score_reps)
             for a, b in split_range(num_episodes, max(workers, 1))]
    parts = map_chunks(_l2_chunk, tasks, workers)
    values = np.concatenate([p[0] for p in parts])
    used = np.concatenate([p[1] for p in parts])
    if used.max() > epsilon + 1e-9:
        raise AssertionError(f"attack exceeded its budget: {used.max()} > {epsilon}")
    header = [("attack", f"{norm}_obs"), ("attack_epsilon", repr(float(epsilon))),
              ("attack_candidates", str(num_candidates)),
              ("attack_score", f"{score_horizon}x{score_reps}")]
    return _sample_set(values, env, env_id, smoothing, seed, gamma, header)


def _l0_chunk(args):
    env_id, policy, smoothing, attack, seed_base, start, stop, gamma = args
    env = make_env(env_id)
    out, used = [], []
    for lo in range(start, stop, 2048):
        seeds = range(seed_base + lo, seed_base + min(lo + 2048, stop))
        res = simulate(env, policy, smoothing, EpisodeNoise.draw(env, seeds), gamma,
                       action_attack=attack)
        out.append(res.returns)
        used.append(res.flips_used)
    return np.concatenate(out), np.concatenate(used)


def l0_action_attack(env_id: str, policy, smoothing: SmoothingConfig, max_flips: int,
                     gap_threshold: float = 0.0, num_episodes: int = 1000, seed: int = 0,
                     gamma: float = 1.0, workers: int = 1) -> RewardSampleSet:
    """Replace the greedy action by the argmin-Q action at high-stakes steps.

    At each step, while flips remain and max Q - min Q exceeds
    ``gap_threshold``, the action handed to the smoothing layer becomes the
    worst one. Action-flip smoothing then applies as usual.
    """
    if smoothing.kind != ACTION_FLIP:
        raise ValueError("action attacks need action-flip smoothing")
    if not hasattr(policy, "q_values"):
        raise TypeError("action attacks need a policy exposing q_values")
    if num_episodes < 1:
        raise ValueError("need num_episodes >= 1")
    attack = ActionAttack(int(max_flips), float(gap_threshold))
    env = make_env(env_id)
    tasks = [(env_id, policy, smoothing, attack, seed, a, b, gamma)
             for a, b in split_range(num_episodes, max(workers, 1))]
    parts = map_chunks(_l0_chunk, tasks, workers)
    values = np.concatenate([p[0] for p in parts])
    used = np.concatenate([p[1] for p in parts])
    if used.max() > attack.max_flips:
        raise AssertionError(f"attack exceeded its budget: {used.max()} > {attack.max_flips}")
    header = [("attack", "l0_action"), ("attack_flips", str(attack.max_flips)),
              ("attack_gap", repr(attack.gap_threshold))]
    return _sample_set(values, env, env_id, smoothing, seed, gamma, header)

