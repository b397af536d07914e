"""Dual certification objective, its maximisation, and the CDF-threshold baseline.

For reward samples J_i with weights w_i the certified worst-case mean is

    max_{nu > 0, eta}  nu * (eta - sum_i w_i f*(eta + eps_d - J_i / nu))

Any feasible (nu, eta) gives a valid lower bound; the maximiser gives the
tightest one. The problem is jointly concave after the substitution
eta' = nu * eta, so the value is unimodal in log(nu). The outer search over
log(nu) is a golden-section for the piecewise-linear generators (plateaus
resolve to the smallest nu) and bounded Brent for the smooth power ones. The
inner maximisation over eta is exact for the piecewise-linear generators and
a bracketed root solve for the power ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.stats import beta as beta_dist

from .core import DualSolution, RewardSampleSet
from .divergence import (HOCKEY_STICK, INFEASIBLE, POWER_RENYI, TOTAL_VARIATION,
                         DivergenceSpec, conjugate_argmax, conjugate_gap)

LOG_NU_RANGE = (-16.0, 16.0)  # in units of the support width
# Smooth power generators only reach the zero-budget mean as nu grows (shortfall
# ~ 1/nu) and their gap form stays exact there, so they search further out.
SMOOTH_LOG_NU_MAX = 40.0
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class SolverError(RuntimeError):
    pass


def _as_weighted(samples, weights=None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, RewardSampleSet):
        J = samples.as_array()
    else:
        J = np.asarray(samples, dtype=float).ravel()
    if J.size == 0:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(J)):
        raise ValueError("samples must be finite")
    if weights is None:
        w = np.full(J.size, 1.0 / J.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != J.shape:
            raise ValueError("weights and samples differ in length")
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("weights must be non-negative with positive sum")
        w = w / math.fsum(w)
    return J, w


def _compress(J, w):
    """Merge repeated reward values; returns sorted unique values and summed weights."""
    vals, inverse = np.unique(J, return_inverse=True)
    return vals, np.bincount(inverse, weights=w, minlength=vals.size)


def dual_objective(samples, spec: DivergenceSpec, eps_d: float, nu: float, eta: float,
                   weights=None) -> float:
    """nu * (eta - E_w[f*(eta + eps_d - J/nu)]); ``-inf`` when any argument leaves dom f*."""
    if not nu > 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    J, w = _as_weighted(samples, weights)
    g = conjugate_gap(spec, eta + eps_d - J / nu)
    if np.any(np.isinf(g[w > 0])):
        return -INFEASIBLE
    keep = w > 0
    # f*(y) = y + g(y) turns nu * (eta - E f*(y)) into E J - nu * eps_d - nu * E g(y)
    return math.fsum(w[keep] * J[keep]) - nu * eps_d - nu * math.fsum(w[keep] * g[keep])


@dataclass
class _Problem:
    """Compressed weighted samples plus the reward support the certificate must cover."""

    vals: np.ndarray
    w: np.ndarray
    spec: DivergenceSpec
    eps_d: float
    lo: float
    hi: float

    def __post_init__(self):
        self.cum_w = np.cumsum(self.w)
        self.evaluations = 0

    def eta_cap(self, nu: float) -> float:
        """Largest eta keeping the argument at the support minimum inside dom f*."""
        edge = self.spec.domain_max
        cap = edge - self.eps_d + self.lo / nu
        if math.isfinite(cap):
            # round-off can leave the boundary argument one ulp outside the domain
            while cap + self.eps_d - self.lo / nu > edge:
                cap = np.nextafter(cap, -math.inf)
        return cap

    def value(self, nu: float, eta: float) -> float:
        g = conjugate_gap(self.spec, eta + self.eps_d - self.vals / nu)
        if np.any(np.isinf(g)):
            return -math.inf
        # same rewrite as dual_objective: no nu * eta cancellation at large nu
        return float(np.dot(self.w, self.vals)) - nu * self.eps_d - nu * float(np.dot(self.w, g))

    def best_eta(self, nu: float) -> float:
        spec = self.spec
        cap = self.eta_cap(nu)
        if spec.kind == TOTAL_VARIATION or (spec.kind != HOCKEY_STICK and spec.param == 0):
            # right-derivative 1 - sum_{y_i >= -1/2} w_i never goes negative
            return cap
        if spec.kind == HOCKEY_STICK:
            # right-derivative 1 - lam * W(eta), W = weight with y_i >= 0; stop once W >= 1/lam
            lam = spec.param
            k = int(np.searchsorted(self.cum_w, 1.0 / lam - 1e-15))
            if k >= self.vals.size:
                return cap
            return min(self.vals[k] / nu - self.eps_d, cap)

        # smooth power generator: stationarity sum_i w_i x*(y_i) = 1
        def excess(eta):
            return float(np.dot(self.w, conjugate_argmax(spec, eta + self.eps_d - self.vals / nu))) - 1.0

        # x*(y) = 1 at y = k, and sum_i w_i x*(y_i) = 1 makes k a power mean of
        # the y_i, so it lies between the smallest and largest argument
        b = spec.param
        k = b / (b - 1.0)
        lo = k - self.eps_d + self.vals[0] / nu
        hi = k - self.eps_d + self.vals[-1] / nu
        pad = 8 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0)
        lo, hi = lo - pad, hi + pad
        if b < 1:
            # excess -> +inf as the largest argument approaches 0 from below
            top = np.nextafter(min(self.vals[0] / nu - self.eps_d, cap), -math.inf)
            if excess(top) <= 0:
                return top
            hi = min(hi, top)
        f_lo, f_hi = excess(lo), excess(hi)
        if f_lo > 0 or f_hi < 0:
            # only when the bracket is a few ulps wide and round-off decides the signs
            return lo if abs(f_lo) <= abs(f_hi) else hi
        return brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)

    def profile(self, log_nu: float) -> tuple[float, float]:
        self.evaluations += 1
        nu = math.exp(log_nu)
        eta = self.best_eta(nu)
        return self.value(nu, eta), eta


def _golden_max(fn, a: float, b: float, tol: float):
    """Golden-section maximisation of a unimodal fn on [a, b].

    Ties keep the left bracket, so on a plateau the search drifts to its left
    edge (smallest argument attaining the maximum). Returns (x, fx, extra) for
    the best point evaluated.
    """
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, e1 = fn(x1)
    f2, e2 = fn(x2)
    best = [(f1, -x1, x1, e1), (f2, -x2, x2, e2)]
    while b - a > tol:
        if f1 >= f2:
            b, x2, f2, e2 = x2, x1, f1, e1
            x1 = b - _INVPHI * (b - a)
            f1, e1 = fn(x1)
            best.append((f1, -x1, x1, e1))
        else:
            a, x1, f1, e1 = x1, x2, f2, e2
            x2 = a + _INVPHI * (b - a)
            f2, e2 = fn(x2)
            best.append((f2, -x2, x2, e2))
    fx, _, x, extra = max(best, key=lambda item: (item[0], item[1]))
    return x, fx, extra


def _brent_max(fn, a: float, b: float, tol: float):
    """Bounded Brent maximisation for smooth unimodal fn; returns the best evaluated point."""
    seen = []

    def neg(x):
        fx, extra = fn(x)
        seen.append((fx, -x, x, extra))
        return -fx if math.isfinite(fx) else math.inf

    minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": tol, "maxiter": 500})
    fx, _, x, extra = max(seen, key=lambda item: (item[0], item[1]))
    return x, fx, extra


def solve_dual(samples, spec: DivergenceSpec, eps_d: float, weights=None,
               support: tuple[float, float] | None = None,
               log_nu_tol: float = 1e-12) -> DualSolution:
    """Maximise the dual certificate over (nu, eta).

    Args:
      samples: reward samples (array-like or RewardSampleSet).
      spec: the divergence generator.
      eps_d: divergence budget, >= 0.
      weights: optional sample weights (normalised internally).
      support: reward interval the bound must stay valid on. Defaults to the
        sample range; pass the environment's declared return range when the
        solution will be evaluated on fresh samples.
      log_nu_tol: bracket width at which the golden-section search stops.

    Returns:
      DualSolution with the maximising nu, eta and objective value.
    """
    if eps_d < 0:
        raise ValueError(f"divergence budget must be >= 0, got {eps_d}")
    J, w = _as_weighted(samples, weights)
    keep = w > 0
    vals, cw = _compress(J[keep], w[keep])
    lo, hi = float(vals[0]), float(vals[-1])
    if support is not None:
        if support[0] > lo or support[1] < hi:
            raise ValueError(f"support {support} does not contain samples [{lo}, {hi}]")
        lo, hi = float(support[0]), float(support[1])
    # Solve on rewards rescaled to [0, 1] so the log(nu) window is scale-free.
    # With J = lo + scale * J', the pair (scale * nu', eta' + lo / nu) has the
    # same conjugate arguments and value lo + scale * value'.
    scale = hi - lo if hi > lo else 1.0
    prob = _Problem((vals - lo) / scale, cw, spec, float(eps_d), 0.0, (hi - lo) / scale)

    smooth = spec.kind == POWER_RENYI and spec.param != 0
    if smooth:
        # smooth concave profile: parabolic steps need far fewer inner root solves
        log_nu, objective, eta = _brent_max(prob.profile, LOG_NU_RANGE[0], SMOOTH_LOG_NU_MAX,
                                            tol=log_nu_tol)
    else:
        log_nu, objective, eta = _golden_max(prob.profile, *LOG_NU_RANGE, tol=log_nu_tol)
    if not math.isfinite(objective):
        raise SolverError("no feasible (nu, eta) found")
    nu = scale * math.exp(log_nu)
    return DualSolution(nu=nu, eta=float(eta) + lo / nu, objective=lo + scale * float(objective),
                        feasible=True, evaluations=prob.evaluations)


def conjugate_range(spec: DivergenceSpec, eps_d: float, nu: float, eta: float,
                    lo: float, hi: float) -> float:
    """Spread of f*(eta + eps_d - J/nu) over J in [lo, hi] (f* is nondecreasing)."""
    top = conjugate_gap(spec, eta + eps_d - lo / nu)
    bottom = conjugate_gap(spec, eta + eps_d - hi / nu)
    # f*(a) - f*(b) = (a - b) + g(a) - g(b) with a - b = (hi - lo) / nu exactly
    return max(float((hi - lo) / nu + (top - bottom)), 0.0)


def hoeffding_radius(value_range: float, m: int, alpha: float) -> float:
    """Two-sided Hoeffding deviation R * sqrt(ln(2/alpha) / (2m))."""
    if value_range < 0:
        raise ValueError(f"range must be >= 0, got {value_range}")
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return value_range * math.sqrt(math.log(2.0 / alpha) / (2.0 * m))


def expectation_upper_bound(h_values: Sequence[float], zeta: float) -> float:
    h = np.asarray(h_values, dtype=float)
    if h.size == 0:
        raise ValueError("need at least one value")
    return math.fsum(h) / h.size + zeta


def _validate_thresholds(thresholds, a, b, J):
    g = np.asarray(thresholds, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("need at least one threshold")
    if np.any(np.diff(g) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    if g[0] <= a or g[-1] >= b:
        raise ValueError(f"thresholds must lie strictly inside ({a}, {b})")
    if J.min() < a or J.max() > b:
        raise ValueError(f"samples leave the declared reward range ({a}, {b})")
    return g


def threshold_probabilities(samples, thresholds, weights=None,
                            alpha: float | None = None) -> np.ndarray:
    """theta_i = P(J >= g_i), empirical or (with ``alpha``) Clopper-Pearson lower bounds.

    The confidence-corrected variant splits alpha evenly over the thresholds
    and needs unweighted samples.
    """
    J, w = _as_weighted(samples, weights)
    g = np.asarray(thresholds, dtype=float)
    if alpha is None:
        return np.array([math.fsum(w[J >= gi]) for gi in g])
    if weights is not None:
        raise ValueError("confidence-corrected thresholds need unweighted samples")
    n = J.size
    counts = np.array([int(np.count_nonzero(J >= gi)) for gi in g])
    level = alpha / g.size
    lower = beta_dist.ppf(level, counts, n - counts + 1)
    return np.where(counts > 0, np.nan_to_num(lower), 0.0)


def cdf_baseline(samples, thresholds, reward_range: tuple[float, float],
                 spec: DivergenceSpec, eps_d: float, weights=None,
                 confidence_alpha: float | None = None) -> float:
    """Certificate from threshold exceedance probabilities only.

    The rewards are floored onto the grid {a, g_1, ..., g_n}: mass 1 - theta_1
    sits at a, theta_i - theta_{i+1} at g_i and theta_n at g_n. The dual is
    then solved on that staircase distribution. Since the floored reward never
    exceeds the true one and f* is nondecreasing, this can only lose to
    ``solve_dual`` on the raw samples.
    """
    a, b = reward_range
    J, _ = _as_weighted(samples, weights)
    g = _validate_thresholds(thresholds, a, b, J)
    theta = threshold_probabilities(samples, g, weights, confidence_alpha)
    theta = np.minimum.accumulate(np.clip(theta, 0.0, 1.0))
    masses = np.concatenate([[1.0 - theta[0]], theta[:-1] - theta[1:], [theta[-1]]])
    support_pts = np.concatenate([[a], g])
    keep = masses > 0
    sol = solve_dual(support_pts[keep], spec, eps_d, weights=masses[keep], support=(a, b))
    return sol.objective
