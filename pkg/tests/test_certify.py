import math

import numpy as np
import pytest

from rewardcert.certify import (PhaseSamples, certify, certify_samples, divergence_budget,
                                draw_phase_samples)
from rewardcert.core import L0_STEPS, L1, L2, PerturbationBudget, SmoothingConfig
from rewardcert.divergence import DivergenceSpec, hs_budget, l0_budget, tv_budget
from rewardcert.envs import make_env
from rewardcert.oracles import FinitePrimal, primal_oracle
from rewardcert.rollout import PHASE_OFFSET, enumerate_chain_outcomes
from rewardcert.solver import solve_dual

HS = DivergenceSpec.hockey_stick
TV = DivergenceSpec.total_variation()
PW = DivergenceSpec.power_renyi
G = SmoothingConfig.gaussian
F = SmoothingConfig.action_flip


def test_divergence_budget_dispatch():
    assert divergence_budget(HS(2.0), G(0.5), PerturbationBudget(L2, 0.3), 2) == hs_budget(0.3, 0.5, 2.0)
    assert divergence_budget(TV, G(0.5), PerturbationBudget(L1, 0.3), 2) == tv_budget(0.3, 0.5)
    assert divergence_budget(PW(2.0), F(0.2), PerturbationBudget(L0_STEPS, 3), 2) == l0_budget(3, 0.2, 2, 2.0)


@pytest.mark.parametrize("spec, smoothing, budget", [
    (TV, F(0.2), PerturbationBudget(L2, 0.1)),
    (PW(2.0), G(0.2), PerturbationBudget(L0_STEPS, 1)),
    (PW(2.0), G(0.2), PerturbationBudget(L2, 0.1)),
    (TV, F(0.2), PerturbationBudget(L0_STEPS, 1)),
])
def test_incompatible_pairs_rejected(spec, smoothing, budget):
    with pytest.raises(ValueError):
        divergence_budget(spec, smoothing, budget, 2)


def test_phase_seeds_are_disjoint(pd_policy):
    ps = draw_phase_samples("cartpole", pd_policy, G(0.2), 20, 30, seed_base=5)
    assert ps.opt.seed_base == 5 and ps.eval.seed_base == 5 + PHASE_OFFSET
    opt_seeds = set(range(5, 25))
    eval_seeds = set(range(5 + PHASE_OFFSET, 35 + PHASE_OFFSET))
    assert not opt_seeds & eval_seeds
    with pytest.raises(ValueError):
        draw_phase_samples("cartpole", pd_policy, G(0.2), PHASE_OFFSET + 1, 1)


def test_zero_budget_bound_sits_just_below_evaluation_mean(pd_policy):
    cb = certify("cartpole", pd_policy, G(0.2), TV, PerturbationBudget(L2, 0.0),
                 m_opt=1000, m_eval=10000)
    assert cb.empirical_mean - cb.dual.nu * cb.zeta - 1e-6 <= cb.bound <= cb.empirical_mean
    assert cb.m_opt == 1000 and cb.m_eval == 10000 and cb.alpha == 0.01
    assert "bound=" in cb.to_record()


def test_bound_is_clamped_at_support_minimum(pd_policy):
    cb = certify("cartpole", pd_policy, G(0.2), TV, PerturbationBudget(L2, 5.0), 200, 2000)
    assert cb.bound == 0.0


def test_candidate_selection_uses_best_projected_bound(pd_policy):
    ps = draw_phase_samples("cartpole", pd_policy, G(0.6), 500, 2000)
    budget = PerturbationBudget(L2, 1.0)
    single = [certify_samples(ps, s, G(0.6), budget, (0, 200), 2).bound
              for s in (HS(1.0), HS(2.0), HS(5.0))]
    multi = certify_samples(ps, [HS(1.0), HS(2.0), HS(5.0)], G(0.6), budget, (0, 200), 2)
    assert multi.bound in single
    with pytest.raises(ValueError):
        certify_samples(ps, [], G(0.6), budget, (0, 200), 2)


def test_chain_certificate_below_exact_worst_case(chain_env, chain_policy):
    # the enumerated clean distribution gives the exact primal at the same budget
    smoothing = F(0.2)
    budget = PerturbationBudget(L0_STEPS, 1, 3)
    outcomes = enumerate_chain_outcomes(chain_env, chain_policy, smoothing)
    probs = tuple(p for p, _ in outcomes)
    returns = tuple(r for _, r in outcomes)
    spec = PW(2.0)
    eps_d = divergence_budget(spec, smoothing, budget, 2)
    exact = primal_oracle(FinitePrimal(probs, returns, spec, eps_d))
    dual = solve_dual(returns, spec, eps_d, weights=probs).objective
    assert dual <= exact + 1e-12 and exact - dual < 1e-4
    cb = certify(chain_env, chain_policy, smoothing, spec, budget, m_opt=2000, m_eval=20000)
    assert cb.bound <= exact + 0.1


def test_certify_rejects_bad_alpha(pd_policy):
    ps = draw_phase_samples("cartpole", pd_policy, G(0.2), 10, 10)
    with pytest.raises(ValueError):
        certify_samples(ps, TV, G(0.2), PerturbationBudget(L2, 0.1), (0, 200), 2, alpha=0.0)


def test_evaluation_outside_support_rejected(pd_policy):
    ps = draw_phase_samples("cartpole", pd_policy, G(0.2), 50, 50)
    with pytest.raises(ValueError):
        certify_samples(ps, TV, G(0.2), PerturbationBudget(L2, 0.1), (0, 100), 2)
    assert isinstance(ps, PhaseSamples)
