"""End-to-end acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line that the terminal summary prints
(see conftest.py). The Cartpole grids come from configs/cartpole_grid.ini and
are run once per module through the command-line entry point.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from rewardcert.certify import certify
from rewardcert.cli import Experiment, _load_config, main
from rewardcert.core import L2, PerturbationBudget, SmoothingConfig
from rewardcert.divergence import (DivergenceSpec, conjugate, hs_budget, tv_budget)
from rewardcert.oracles import (FinitePrimal, numeric_budget_oracle, numeric_conjugate_oracle,
                                primal_oracle)
from rewardcert.policies import Discretizer, TabularQPolicy
from rewardcert.rollout import smoothing_reward_set
from rewardcert.solver import cdf_baseline, hoeffding_radius, solve_dual

GRID_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "cartpole_grid.ini"
GRID_SECTIONS = ["l2_sigma_0.2", "l2_sigma_0.6", "l1_sigma_0.2", "l1_sigma_0.6",
                 "l0_p_0.1", "l0_p_0.2"]
DETERMINISM_WORKERS = 3


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[n] = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    assert ok, ACCEPTANCE_LINES[n]


def read_csv(path: Path) -> list[dict[str, float]]:
    with open(path) as fh:
        return [{k: float(v) if v else math.nan for k, v in row.items()}
                for row in csv.DictReader(fh)]


def run_cli(command: str, out: Path, workers: int) -> float:
    start = time.perf_counter()
    assert main([command, str(GRID_CONFIG), "--out", str(out), "--workers", str(workers)]) == 0
    return time.perf_counter() - start


@pytest.fixture(scope="module")
def grid_dirs(tmp_path_factory):
    root = tmp_path_factory.mktemp("grid")
    seconds = run_cli("certify", root / "certify", 1)
    run_cli("attack", root / "attack", 1)
    return root, seconds


# --- 1: closed-form conjugates against a grid-search oracle ---------------

def test_criterion_1_conjugates_match_grid_oracle():
    specs = [DivergenceSpec.hockey_stick(lam) for lam in (0.5, 1.0, 2.0, 5.0)]
    specs += [DivergenceSpec.total_variation()]
    specs += [DivergenceSpec.power_renyi(beta) for beta in (0.5, 2.0, 4.0)]
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for spec in specs:
        if spec.domain_closed:
            ys = rng.uniform(-5.0, min(spec.domain_max, 5.0), 200)
        else:
            # open domain (power beta < 1): the conjugate is finite only for y < 0
            ys = -rng.uniform(0.01, 5.0, 200)
        for y in ys:
            worst = max(worst, abs(float(conjugate(spec, y)) - numeric_conjugate_oracle(spec, y)))
    seconds = time.perf_counter() - start
    record(1, worst <= 1e-6 and seconds < 10.0,
           f"max |f* - oracle| = {worst:.2e} over {len(specs)} x 200 points in {seconds:.1f} s")


# --- 2: Gaussian-shift budgets against quadrature ----------------------------

def test_criterion_2_budgets_match_quadrature():
    rng = np.random.default_rng(2)
    worst, worst_tv_hs = 0.0, 0.0
    for _ in range(100):
        eps, sigma, lam = rng.uniform(0, 3), rng.uniform(0.1, 2), rng.uniform(0.5, 5)
        hs = hs_budget(eps, sigma, lam)
        tv = tv_budget(eps, sigma)
        worst = max(worst,
                    abs(hs - numeric_budget_oracle(DivergenceSpec.hockey_stick(lam), eps, sigma)),
                    abs(tv - numeric_budget_oracle(DivergenceSpec.total_variation(), eps, sigma)))
        worst_tv_hs = max(worst_tv_hs, abs(hs_budget(eps, sigma, 1.0) - tv))
    record(2, worst <= 1e-6 and worst_tv_hs <= 1e-9,
           f"max quadrature deviation {worst:.2e}, max |hs(1) - tv| {worst_tv_hs:.2e} on 100 triples")


# --- 3: dual against the exact primal on finite instances --------------------

def _random_spec(rng, k):
    family = k % 3
    if family == 0:
        return DivergenceSpec.hockey_stick(float(rng.uniform(0.5, 5)))
    if family == 1:
        return DivergenceSpec.total_variation()
    return DivergenceSpec.power_renyi(float(rng.choice([0.5, 2.0, 4.0])))


def test_criterion_3_dual_matches_primal():
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    violations, worst_gap = 0, 0.0
    for k in range(50):
        n = int(rng.integers(2, 33))
        p = rng.dirichlet(np.ones(n))
        J = rng.uniform(0, 10, n)
        spec = _random_spec(rng, k)
        eps_d = float(rng.uniform(0.0, 1.0))
        primal = primal_oracle(FinitePrimal(tuple(p), tuple(J), spec, eps_d))
        dual = solve_dual(J, spec, eps_d, weights=p).objective
        violations += dual > primal + 1e-12
        worst_gap = max(worst_gap, primal - dual)
    seconds = time.perf_counter() - start
    record(3, violations == 0 and worst_gap <= 1e-4 and seconds < 30.0,
           f"{violations} weak-duality violations, max gap {worst_gap:.2e}, {seconds:.1f} s")


# --- 4: full-sample dual dominates the threshold baseline -------------------

def test_criterion_4_dual_dominates_cdf_baseline():
    rng = np.random.default_rng(4)
    a, b = 0.0, 10.0
    below, refining = 0, 0
    for k in range(20):
        samples = b * rng.beta(rng.uniform(0.5, 5), rng.uniform(0.5, 5), 500)
        spec = _random_spec(rng, k)
        eps_d = float(rng.uniform(0.01, 0.5))
        full = solve_dual(samples, spec, eps_d, support=(a, b)).objective
        gaps = []
        for n in (1, 5, 20):
            thresholds = a + (b - a) * np.arange(1, n + 1) / (n + 1)
            base = cdf_baseline(samples, thresholds, (a, b), spec, eps_d)
            below += full < base - 1e-9
            gaps.append(full - base)
        refining += all(g2 <= g1 + 1e-9 for g1, g2 in zip(gaps, gaps[1:]))
    record(4, below == 0 and refining >= 18,
           f"{below} sets where the baseline beats the dual, gap shrinks with n on {refining}/20")


# --- 5: zero budget stays close to the empirical mean -----------------------

def test_criterion_5_zero_budget_tightness(grid_dirs):
    root, _ = grid_dirs
    worst_slack, bad = 0.0, []
    for name in GRID_SECTIONS:
        row = read_csv(root / "certify" / f"{name}.csv")[0]
        assert row["epsilon"] == 0.0
        mean, bound = row["empirical_mean"], row["bound"]
        in_band = mean - row["nu"] * row["zeta"] - 1e-6 <= bound <= mean
        slack = (mean - bound) / 200.0
        worst_slack = max(worst_slack, slack)
        if not in_band or slack >= 0.02:
            bad.append(name)
    record(5, not bad, f"relative slack <= {100 * worst_slack:.2f}% of 200 on all grids"
           + (f"; out of band: {bad}" if bad else ""))


# --- 6: bounds are nonincreasing in the budget --------------------------------

@pytest.mark.slow
def test_criterion_6_monotone_grids(grid_dirs):
    root, seconds = grid_dirs
    broken = []
    for name in GRID_SECTIONS:
        rows = read_csv(root / "certify" / f"{name}.csv")
        assert len(rows) == 11
        bounds = [r["bound"] for r in rows]
        if any(b2 > b1 for b1, b2 in zip(bounds, bounds[1:])):
            broken.append(name)
    record(6, not broken and seconds < 15 * 60,
           f"{len(GRID_SECTIONS) - len(broken)}/{len(GRID_SECTIONS)} grids monotone, "
           f"certify runtime {seconds:.1f} s" + (f"; non-monotone: {broken}" if broken else ""))


# --- 7: certified bound never exceeds an empirical attack ---------------------

@pytest.mark.slow
def test_criterion_7_attack_sandwich(grid_dirs):
    root, _ = grid_dirs
    pairs, violations = 0, []
    for name in GRID_SECTIONS:
        cert = read_csv(root / "certify" / f"{name}.csv")
        att = read_csv(root / "attack" / f"{name}.csv")
        for c, a in zip(cert, att, strict=True):
            assert c["epsilon"] == a["epsilon"]
            slack = 2.0 * hoeffding_radius(200.0, int(a["episodes"]), 0.01)
            assert a["hoeffding_slack"] == pytest.approx(slack / 2.0)
            pairs += 1
            if c["bound"] > a["attacked_mean"] + slack:
                violations.append((name, c["epsilon"]))
    record(7, not violations, f"{len(violations)} violations over {pairs} (grid, budget) pairs"
           + (f": {violations}" if violations else ""))


# --- 8: coverage of the confidence statement --------------------------------

@pytest.mark.slow
def test_criterion_8_coverage_on_known_mean():
    # one-step environment with true mean 0.7 whatever the policy does
    policy = TabularQPolicy(np.zeros((1, 2)), Discretizer((0.0,), (1.0,), (1,)))
    smoothing = SmoothingConfig("gaussian_observation", 1.0)
    budget = PerturbationBudget(L2, 0.0, 1)
    spec = DivergenceSpec.total_variation()
    exceed = 0
    for i in range(200):
        cb = certify("bernoulli", policy, smoothing, spec, budget, m_opt=1000, m_eval=10000,
                     alpha=0.01, seed_base=i << 22)
        assert cb.divergence_budget == 0.0
        exceed += cb.bound > 0.7
    record(8, exceed <= 4, f"{exceed}/200 bounds above the true mean 0.7 (allowed 4)")


# --- 9: solver speed on 10k samples ----------------------------------------

def test_criterion_9_solver_speed():
    rng = np.random.default_rng(9)
    names, parser, base = _load_config(str(GRID_CONFIG))
    cases = []
    for name in ("l2_sigma_0.2", "l0_p_0.2"):
        exp = Experiment(name, parser[name], base)
        samples = smoothing_reward_set(exp.env_id, exp.policy, exp.smoothing, 10000)
        support = exp.env.descriptor.return_support()
        cases += [(samples, spec, eps_d, support) for spec in exp.divergences
                  for eps_d in (0.05, 0.5)]
    continuous = rng.uniform(0, 200, 10000)
    specs = [DivergenceSpec.hockey_stick(2.0), DivergenceSpec.total_variation(),
             DivergenceSpec.power_renyi(0.5), DivergenceSpec.power_renyi(2.0)]
    cases += [(continuous, spec, 0.1, (0.0, 200.0)) for spec in specs]
    worst = 0.0
    for samples, spec, eps_d, support in cases:
        start = time.perf_counter()
        solve_dual(samples, spec, eps_d, support=support)
        worst = max(worst, time.perf_counter() - start)
    record(9, worst <= 0.1, f"slowest of {len(cases)} solves on 10,000 samples: {1000 * worst:.1f} ms")


# --- 10: worker count does not change any output ----------------------------

@pytest.mark.slow
def test_criterion_10_worker_determinism(grid_dirs, tmp_path):
    root, _ = grid_dirs
    run_cli("certify", tmp_path / "certify", DETERMINISM_WORKERS)
    run_cli("attack", tmp_path / "attack", DETERMINISM_WORKERS)
    differing = [f"{kind}/{name}" for kind in ("certify", "attack") for name in GRID_SECTIONS
                 if (root / kind / f"{name}.csv").read_bytes()
                 != (tmp_path / kind / f"{name}.csv").read_bytes()]
    record(10, not differing,
           f"{2 * len(GRID_SECTIONS) - len(differing)}/{2 * len(GRID_SECTIONS)} CSVs byte-identical "
           f"with 1 vs {DETERMINISM_WORKERS} workers" + (f"; differ: {differing}" if differing else ""))
