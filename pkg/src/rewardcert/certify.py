"""Two-phase certification of the worst-case mean reward of a smoothed policy.

Phase 1 draws ``m_opt`` smoothed episodes and solves the dual for (nu*, eta*).
Phase 2 draws ``m_eval`` fresh episodes from a disjoint seed range and bounds
E[f*(eta* + eps_d - J/nu*)] from above with a Hoeffding radius. Because
(nu*, eta*) is fixed before phase 2 is seen, the returned bound holds with
probability at least 1 - alpha whether or not the phase-1 solve is optimal.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

from .core import (ACTION_FLIP, GAUSSIAN, L0_STEPS, L1, L2, CertifiedBound,
                   PerturbationBudget, RewardSampleSet, SmoothingConfig)
from .divergence import (HOCKEY_STICK, POWER_RENYI, TOTAL_VARIATION, DivergenceSpec,
                         conjugate_gap, hs_budget, l0_budget, tv_budget)
from .envs import make_env
from .rollout import PHASE_OFFSET, smoothing_reward_set
from .solver import conjugate_range, hoeffding_radius, solve_dual


def divergence_budget(spec: DivergenceSpec, smoothing: SmoothingConfig,
                      budget: PerturbationBudget, num_actions: int) -> float:
    """Largest divergence between clean and attacked trajectory laws for this threat model.

    l2 shifts of the first observation map to hockey-stick or total-variation
    budgets between Gaussians. An l1 shift of size eps has l2 norm at most
    eps, so it reuses the l2 maps. l0 action attacks on action-flip smoothing
    map to power-divergence budgets.
    """
    if budget.norm in (L2, L1):
        if smoothing.kind != GAUSSIAN:
            raise ValueError(f"{budget.norm} budgets need gaussian observation smoothing")
        if spec.kind == HOCKEY_STICK:
            return hs_budget(budget.epsilon, smoothing.sigma, spec.param)
        if spec.kind == TOTAL_VARIATION:
            return tv_budget(budget.epsilon, smoothing.sigma)
        raise ValueError(f"{spec.label()} has no observation-shift budget")
    if smoothing.kind != ACTION_FLIP:
        raise ValueError("l0_steps budgets need action-flip smoothing")
    if spec.kind != POWER_RENYI:
        raise ValueError(f"{spec.label()} has no action-flip budget; use power_renyi")
    if budget.horizon is not None and budget.epsilon > budget.horizon:
        raise ValueError("more attacked steps than the horizon")
    return l0_budget(int(budget.epsilon), smoothing.p, num_actions, spec.param)


@dataclass(frozen=True)
class PhaseSamples:
    """The optimisation-phase and evaluation-phase sample sets of one certification."""

    opt: RewardSampleSet
    eval: RewardSampleSet


def draw_phase_samples(env_id: str, policy, smoothing: SmoothingConfig,
                       m_opt: int = 1000, m_eval: int = 10000, seed_base: int = 0,
                       gamma: float = 1.0, workers: int = 1) -> PhaseSamples:
    """Phase 1 uses seeds seed_base..seed_base+m_opt-1, phase 2 starts at seed_base + 2**20."""
    if m_opt > PHASE_OFFSET:
        raise ValueError(f"m_opt must be <= {PHASE_OFFSET} to keep phase seeds disjoint")
    opt = smoothing_reward_set(env_id, policy, smoothing, m_opt, seed_base, gamma, workers)
    ev = smoothing_reward_set(env_id, policy, smoothing, m_eval, seed_base + PHASE_OFFSET,
                              gamma, workers)
    return PhaseSamples(opt, ev)


def _candidates(spec) -> list[DivergenceSpec]:
    specs = [spec] if isinstance(spec, DivergenceSpec) else list(spec)
    if not specs:
        raise ValueError("need at least one divergence")
    return specs


def certify_samples(samples: PhaseSamples, spec: DivergenceSpec | Sequence[DivergenceSpec],
                    smoothing: SmoothingConfig, budget: PerturbationBudget,
                    support: tuple[float, float], num_actions: int,
                    alpha: float = 0.01) -> CertifiedBound:
    """Certify from already drawn phase samples.

    When several divergences are given, each is solved on phase 1 and the one
    with the best projected bound (phase-1 objective minus nu times the
    Hoeffding radius expected for phase 2) is evaluated. The choice uses
    phase-1 data only, so phase 2 stays a fresh sample.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = support
    m_eval = len(samples.eval)
    best = None
    solve_time = 0.0
    for cand in _candidates(spec):
        eps_d = divergence_budget(cand, smoothing, budget, num_actions)
        start = time.perf_counter()
        sol = solve_dual(samples.opt, cand, eps_d, support=support)
        solve_time += time.perf_counter() - start
        R = conjugate_range(cand, eps_d, sol.nu, sol.eta, lo, hi)
        projected = sol.objective - sol.nu * hoeffding_radius(R, m_eval, alpha)
        # strict comparison: ties keep the earlier candidate
        if best is None or projected > best[0]:
            best = (projected, cand, eps_d, sol, R)
    _, cand, eps_d, sol, R = best

    J = samples.eval.as_array()
    if J.min() < lo or J.max() > hi:
        raise ValueError("evaluation samples leave the declared reward support")
    g = conjugate_gap(cand, sol.eta + eps_d - J / sol.nu)
    zeta = hoeffding_radius(R, m_eval, alpha)
    # nu * (eta - mean f*(y) - zeta) with f*(y) = y + g(y), free of nu * eta cancellation
    mean_j = math.fsum(J) / J.size
    value = mean_j - sol.nu * eps_d - sol.nu * (math.fsum(g) / g.size + zeta)
    # every return is >= lo, so lo is itself a valid bound
    bound = max(value, lo)
    return CertifiedBound(
        bound=float(bound), alpha=alpha, zeta=zeta, divergence_budget=eps_d, dual=sol,
        m_opt=len(samples.opt), m_eval=m_eval, budget=budget,
        empirical_mean=mean_j, divergence=cand.label(),
        seed_base=samples.opt.seed_base, eval_seed_base=samples.eval.seed_base,
        solve_seconds=solve_time)


def certify(env, policy, smoothing: SmoothingConfig,
            spec: DivergenceSpec | Sequence[DivergenceSpec], budget: PerturbationBudget,
            m_opt: int = 1000, m_eval: int = 10000, alpha: float = 0.01,
            seed_base: int = 0, gamma: float = 1.0, workers: int = 1) -> CertifiedBound:
    """Lower bound on the mean reward of the smoothed policy under any attack within ``budget``.

    Args:
      env: environment instance or identifier.
      policy: black-box base policy.
      smoothing: gaussian observation noise (l2/l1 budgets) or action flips (l0).
      spec: divergence, or several candidates to choose from on phase-1 data.
      budget: perturbation norm and size.
      m_opt: phase-1 sample count.
      m_eval: phase-2 sample count.
      alpha: the bound holds with probability at least 1 - alpha.
      seed_base: first phase-1 episode seed.
      gamma: reward discount.
      workers: rollout processes.
    """
    env = make_env(env) if isinstance(env, str) else env
    samples = draw_phase_samples(env.env_id, policy, smoothing, m_opt, m_eval, seed_base,
                                 gamma, workers)
    return certify_samples(samples, spec, smoothing, budget,
                           env.descriptor.return_support(gamma),
                           env.descriptor.num_actions, alpha)

