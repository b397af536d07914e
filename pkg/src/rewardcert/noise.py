"""Counter-based per-episode random streams.

Each episode owns a Philox generator keyed by (stream, episode seed). The draw
order inside an episode is fixed (initial state, observation noise block, flip
uniforms, choice uniforms), so the noise used at step t depends only on the
episode seed and t, never on which worker ran the episode or in what order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEED_MASK = (1 << 64) - 1

EPISODE_STREAM = 0
ATTACK_STREAM = 1


def episode_rng(seed: int, stream: int = EPISODE_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) & SEED_MASK) | (stream << 64)))


@dataclass
class EpisodeNoise:
    """Pre-drawn randomness for a batch of episodes (leading axis = episode)."""

    initial_states: np.ndarray  # (B, D)
    gaussian: np.ndarray        # (B, T, D) standard normals
    flip: np.ndarray            # (B, T) uniforms deciding whether to deviate
    choice: np.ndarray          # (B, T) uniforms picking the alternative action

    @classmethod
    def draw(cls, env, seeds) -> EpisodeNoise:
        d = env.descriptor
        init, gauss, flip, choice = [], [], [], []
        for seed in seeds:
            rng = episode_rng(seed)
            init.append(env.reset_state(rng))
            gauss.append(rng.standard_normal((d.horizon, d.state_dim)))
            flip.append(rng.random(d.horizon))
            choice.append(rng.random(d.horizon))
        return cls(np.array(init), np.array(gauss), np.array(flip), np.array(choice))
