import numpy as np
import pytest

from rewardcert.attacks import candidate_offsets, danger, l0_action_attack, l2_obs_attack
from rewardcert.core import L1, SmoothingConfig
from rewardcert.envs import make_env
from rewardcert.rollout import smoothing_reward_set
from rewardcert.solver import hoeffding_radius

G = SmoothingConfig.gaussian(0.2)
F = SmoothingConfig.action_flip(0.2)


def test_candidates_respect_budget(rng):
    offs = candidate_offsets(rng, 4, 0.7, 6)
    assert offs.shape == (6 + 8, 4)
    assert np.allclose(np.linalg.norm(offs, axis=1), 0.7)
    offs1 = candidate_offsets(rng, 4, 0.7, 6, L1)
    assert np.allclose(np.abs(offs1).sum(axis=1), 0.7)


def test_danger_is_normalised():
    env = make_env("cartpole")
    states = np.array([[0.0, 0, 0, 0], [2.4, 0, 0, 0], [0, 0, 0.5, 0]])
    assert danger(env, states).tolist() == [0.0, 1.0, 1.0]
    assert np.all(danger(make_env("chain"), np.zeros((3, 1))) == 0)


def test_empty_l2_budget_reproduces_clean_rollouts(pd_policy):
    clean = smoothing_reward_set("cartpole", pd_policy, G, 200, 7)
    attacked = l2_obs_attack("cartpole", pd_policy, G, 0.0, 200, seed=7)
    assert attacked.values == clean.values
    zeta = hoeffding_radius(200.0, 200, 0.01)
    assert abs(np.mean(attacked.values) - np.mean(clean.values)) <= 2 * zeta


def test_l2_attack_lowers_reward_and_records_metadata(pd_policy):
    # clean and attacked runs share episode noise, so the comparison is paired
    clean = smoothing_reward_set("cartpole", pd_policy, G, 1000, 0)
    attacked = l2_obs_attack("cartpole", pd_policy, G, 1.0, 1000, seed=0)
    assert np.mean(attacked.values) < np.mean(clean.values)
    meta = dict(attacked.header)
    assert meta["attack"] == "l2_obs" and meta["attack_epsilon"] == "1.0"


def test_l2_attack_is_deterministic_across_workers(pd_policy):
    a = l2_obs_attack("cartpole", pd_policy, G, 0.5, 120, seed=3, workers=1)
    b = l2_obs_attack("cartpole", pd_policy, G, 0.5, 120, seed=3, workers=3)
    assert a.values == b.values


def test_l2_attack_validation(pd_policy):
    with pytest.raises(ValueError):
        l2_obs_attack("cartpole", pd_policy, F, 0.5, 10)
    with pytest.raises(ValueError):
        l2_obs_attack("cartpole", pd_policy, G, -0.5, 10)
    with pytest.raises(ValueError):
        l2_obs_attack("cartpole", pd_policy, G, 0.5, 10, norm="linf")


def test_l0_attack_edge_cases(pd_policy):
    clean = smoothing_reward_set("cartpole", pd_policy, F, 300, 0)
    assert l0_action_attack("cartpole", pd_policy, F, 0, 0.0, 300, 0).values == clean.values
    never = l0_action_attack("cartpole", pd_policy, F, 5, float("inf"), 300, 0)
    assert never.values == clean.values


def test_l0_attack_hurts_more_with_more_flips(pd_policy):
    means = [np.mean(l0_action_attack("cartpole", pd_policy, F, k, 0.0, 500, 0).values)
             for k in (0, 5, 20)]
    assert means[0] > means[1] > means[2]


def test_l0_attack_rejects_bad_inputs(pd_policy):
    with pytest.raises(ValueError):
        l0_action_attack("cartpole", pd_policy, G, 1)

    class ActOnly:
        num_actions = 2

        def act(self, obs):
            return np.zeros(obs.shape[0], dtype=int)

    with pytest.raises(TypeError):
        l0_action_attack("cartpole", ActOnly(), F, 1)
    with pytest.raises(ValueError):
        l0_action_attack("cartpole", pd_policy, F, -1)
