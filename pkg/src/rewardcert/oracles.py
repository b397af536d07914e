"""Brute-force reference computations used to validate the closed forms.

Nothing here is on the certification path. Each oracle works from the
generator f alone (quadrature, grid suprema, primal search) so that it stays
independent of the conjugate/budget formulas it is used to check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import linprog
from scipy.stats import norm

from .divergence import (HOCKEY_STICK, POWER_RENYI, TOTAL_VARIATION,
                         DivergenceSpec, f_value)


class OracleError(RuntimeError):
    """An oracle failed to reach its documented accuracy."""


def numeric_budget_oracle(spec: DivergenceSpec, epsilon: float, sigma: float,
                          tol: float = 1e-11) -> float:
    """D_f(N(epsilon, sigma^2) || N(0, sigma^2)) by adaptive quadrature of p * f(q/p)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if epsilon == 0:
        return 0.0
    lo, hi = -40.0 * sigma, epsilon + 40.0 * sigma

    def integrand(x):
        p = norm.pdf(x, 0.0, sigma)
        if p == 0.0:
            return 0.0
        log_ratio = (epsilon * x - 0.5 * epsilon**2) / sigma**2
        return p * float(f_value(spec, math.exp(min(log_ratio, 700.0))))

    # split at the kinks of f(q/p): ratio == lam (hockey-stick) or 1 (TV)
    breaks = [epsilon / 2.0]
    if spec.kind == HOCKEY_STICK:
        breaks.append(sigma**2 * math.log(spec.param) / epsilon + epsilon / 2.0)
    points = sorted(b for b in breaks if lo < b < hi)
    edges = [lo, *points, hi]
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, a, b, epsabs=tol, epsrel=tol, limit=400)
        total += val
        err += e
    if err > 1e-8:
        raise OracleError(f"quadrature error estimate {err:.2e} exceeds 1e-8")
    return total


def _objective(spec, y, x):
    return x * y - f_value(spec, x)


def numeric_conjugate_oracle(spec: DivergenceSpec, y: float,
                             x_max: float = 1e8, grid: int = 2001) -> float:
    """sup_{x >= 0} (x*y - f(x)) by an expanding dense grid with zoom refinement.

    Returns ``math.inf`` when the supremum keeps growing as the search range
    is pushed out to ``x_max``.
    """
    hi = 16.0
    best = -math.inf
    while True:
        xs = np.linspace(0.0, hi, grid)
        vals = _objective(spec, y, xs)
        cur = float(vals.max())
        if hi >= x_max:
            # the sup is still moving at the far end of the range: diverges
            if cur > best + 1e-6 * max(1.0, abs(best)) and int(vals.argmax()) == grid - 1:
                return math.inf
            break
        if int(vals.argmax()) < grid - 1 and cur <= best + 1e-12 * max(1.0, abs(cur)):
            break
        if int(vals.argmax()) < grid // 2:
            break
        best = cur
        hi *= 4.0

    k = int(vals.argmax())
    left, right = xs[max(k - 1, 0)], xs[min(k + 1, grid - 1)]
    for _ in range(200):
        if right - left <= 1e-14 * max(1.0, right):
            break
        xs = np.linspace(left, right, 41)
        vals = _objective(spec, y, xs)
        k = int(vals.argmax())
        left, right = xs[max(k - 1, 0)], xs[min(k + 1, 40)]
    else:
        raise OracleError("conjugate grid refinement did not converge")
    return float(vals.max())


@dataclass(frozen=True)
class FinitePrimal:
    """min_z sum_i p_i z_i J_i  s.t.  z >= 0, sum_i p_i z_i = 1, sum_i p_i f(z_i) <= budget."""

    probs: tuple[float, ...]
    rewards: tuple[float, ...]
    spec: DivergenceSpec
    budget: float

    def __post_init__(self):
        if len(self.probs) != len(self.rewards):
            raise ValueError("probs and rewards must have equal length")
        if min(self.probs) <= 0:
            raise ValueError("all outcome probabilities must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError("outcome probabilities must sum to 1")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")


def _divergence(spec, p, z):
    return math.fsum(p * f_value(spec, z))


def _repair(problem: FinitePrimal, z: np.ndarray) -> np.ndarray:
    """Make z exactly feasible: renormalise, then pull toward z = 1 if over budget."""
    p = np.asarray(problem.probs)
    z = np.maximum(z, 0.0)
    z = z / math.fsum(p * z)
    if _divergence(problem.spec, p, z) <= problem.budget:
        return z
    # D((1-s) z + s) is convex in s with D(1) = 0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _divergence(problem.spec, p, (1 - mid) * z + mid) <= problem.budget:
            hi = mid
        else:
            lo = mid
    z = (1 - hi) * z + hi
    return z / math.fsum(p * z)


def _primal_lp(problem: FinitePrimal) -> np.ndarray:
    p = np.asarray(problem.probs)
    J = np.asarray(problem.rewards)
    n = len(p)
    spec = problem.spec
    # variables: z_1..z_n, t_1..t_n with t_i >= f(z_i) through its two linear pieces
    if spec.kind == HOCKEY_STICK:
        c = max(1.0 - spec.param, 0.0)
        pieces = [(1.0, -spec.param - c), (0.0, -c)]
    else:
        pieces = [(0.5, -0.5), (-0.5, 0.5)]
    rows, rhs = [], []
    for slope, intercept in pieces:
        block = np.zeros((n, 2 * n))
        block[:, :n] = slope * np.eye(n)
        block[:, n:] = -np.eye(n)
        rows.append(block)
        rhs.append(np.full(n, -intercept))
    div_row = np.concatenate([np.zeros(n), p])[None, :]
    A_ub = np.vstack(rows + [div_row])
    b_ub = np.concatenate(rhs + [[problem.budget]])
    A_eq = np.concatenate([p, np.zeros(n)])[None, :]
    cost = np.concatenate([p * J, np.zeros(n)])
    bounds = [(0, None)] * n + [(None, None)] * n
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise OracleError(f"LP primal failed: {res.message}")
    return res.x[:n]


def _power_weights(beta, J, mu, nu):
    # per-coordinate minimiser of nu*f(z) + z*(J_i - mu): solves nu*f'(z) = mu - J_i
    # with f'(z) = beta * z**(beta-1) / (beta-1)
    if beta > 1:
        return (np.maximum(mu - J, 0.0) * (beta - 1) / (nu * beta)) ** (1.0 / (beta - 1))
    return ((J - mu) * (1 - beta) / (nu * beta)) ** (1.0 / (beta - 1))


def _bisect(fn, lo, hi, iters=200):
    """Root of an increasing function on [lo, hi]."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _primal_power(problem: FinitePrimal) -> np.ndarray:
    p = np.asarray(problem.probs)
    J = np.asarray(problem.rewards, dtype=float)
    beta = problem.spec.param
    spread = max(float(J.max() - J.min()), 1.0)

    lowest = J == J.min()
    z_point = np.where(lowest, 1.0 / p[lowest].sum(), 0.0)

    def normalised(nu):
        def mass(mu):
            return math.fsum(p * _power_weights(beta, J, mu, nu)) - 1.0
        if beta > 1:
            lo, hi = float(J.min()), float(J.max()) + spread
            while mass(hi) < 0:
                hi += 2 * (hi - lo)
        else:
            hi = float(J.min())
            lo = hi - spread
            while mass(lo) > 0:
                lo -= 2 * (hi - lo)
            # mass(mu) -> +inf as mu -> min J from below
        mu = _bisect(mass, lo, hi)
        if beta < 1:
            mu = min(mu, np.nextafter(float(J.min()), -np.inf))
        z = _power_weights(beta, J, mu, nu)
        total = math.fsum(p * z)
        if not (math.isfinite(total) and total > 0):
            return z_point
        # for tiny nu, mu is not resolvable in floating point; rescaling
        # recovers the limiting point mass
        return z / total

    def excess(log_nu):
        # divergence decreases as the penalty weight nu grows
        return problem.budget - _divergence(problem.spec, p, normalised(math.exp(log_nu)))

    # all mass on the cheapest outcomes: the unconstrained optimum
    if _divergence(problem.spec, p, z_point) <= problem.budget:
        return z_point
    if problem.budget == 0:
        return np.ones_like(p)
    lo, hi = -40.0, 40.0
    if excess(lo) >= 0:
        return normalised(math.exp(lo))
    log_nu = _bisect(excess, lo, hi, iters=120)
    return normalised(math.exp(log_nu))


def primal_oracle(problem: FinitePrimal) -> float:
    """Exact worst-case mean reward over reweightings z inside the divergence ball.

    The returned value is attained by an exactly feasible z, so it can never
    fall below the true primal minimum.
    """
    if len(problem.probs) > 32:
        raise ValueError("primal oracle supports at most 32 outcomes")
    spec = problem.spec
    # a zero budget forces z = 1 only when f is positive away from 1
    pins_one = (spec.kind == TOTAL_VARIATION or (spec.kind == HOCKEY_STICK and spec.param == 1)
                or (spec.kind == POWER_RENYI and spec.param != 0))
    if problem.budget == 0 and pins_one:
        return math.fsum(np.asarray(problem.probs) * np.asarray(problem.rewards))
    if problem.spec.kind in (HOCKEY_STICK, TOTAL_VARIATION) or problem.spec.param == 0:
        if problem.spec.kind == POWER_RENYI:
            # beta = 0: f vanishes on x >= 0, so only z >= 0 and sum p z = 1 bind
            J = np.asarray(problem.rewards)
            return float(J.min())
        z = _primal_lp(problem)
    else:
        z = _primal_power(problem)
    z = _repair(problem, z)
    if not np.all(np.isfinite(z)):
        raise OracleError("primal search produced a non-finite reweighting")
    return math.fsum(np.asarray(problem.probs) * np.asarray(problem.rewards) * z)
