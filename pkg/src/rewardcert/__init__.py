"""Certified lower bounds on the mean reward of smoothed reinforcement-learning policies."""

from .attacks import l0_action_attack, l2_obs_attack
from .certify import certify, certify_samples, divergence_budget, draw_phase_samples
from .core import (CertifiedBound, DualSolution, PerturbationBudget, RewardSampleSet,
                   SmoothingConfig, TrajectoryRecord, cumulative_reward)
from .divergence import DivergenceSpec, conjugate, hs_budget, l0_budget, tv_budget
from .envs import make_env
from .policies import PDController, TabularQPolicy, train_tabular_q
from .solver import cdf_baseline, dual_objective, hoeffding_radius, solve_dual

__all__ = [
    "CertifiedBound", "DivergenceSpec", "DualSolution", "PDController", "PerturbationBudget",
    "RewardSampleSet", "SmoothingConfig", "TabularQPolicy", "TrajectoryRecord", "cdf_baseline",
    "certify", "certify_samples", "conjugate", "cumulative_reward", "divergence_budget",
    "draw_phase_samples", "dual_objective", "hoeffding_radius", "hs_budget", "l0_action_attack",
    "l0_budget", "l2_obs_attack", "make_env", "solve_dual", "train_tabular_q", "tv_budget",
]
