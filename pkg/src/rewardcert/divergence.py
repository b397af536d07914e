"""f-divergences, their convex conjugates, and perturbation-to-budget maps.

Three generators are supported, all normalised so that f(1) = 0:

* hockey-stick:  f(x) = max(x - lam, 0) - max(1 - lam, 0)
* total variation:  f(x) = |x - 1| / 2
* power (Renyi bridge):  f(x) = (x**beta - 1) / (beta - 1),  beta > 1 or 0 <= beta < 1

Conjugates are f*(y) = sup_{x >= 0} (x*y - f(x)); where the supremum diverges
the functions return ``INFEASIBLE`` (``math.inf``) instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, ndtr

HOCKEY_STICK = "hockey_stick"
TOTAL_VARIATION = "total_variation"
POWER_RENYI = "power_renyi"

INFEASIBLE = math.inf


@dataclass(frozen=True)
class DivergenceSpec:
    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind == HOCKEY_STICK:
            if self.param is None or not self.param > 0:
                raise ValueError(f"hockey-stick lambda must be > 0, got {self.param}")
        elif self.kind == TOTAL_VARIATION:
            if self.param is not None:
                raise ValueError("total variation takes no parameter")
        elif self.kind == POWER_RENYI:
            b = self.param
            if b is None or not (b > 1 or 0 <= b < 1) or math.isinf(b):
                raise ValueError(f"power beta must satisfy beta > 1 or 0 <= beta < 1, got {b}")
        else:
            raise ValueError(f"unknown divergence kind {self.kind!r}")

    @classmethod
    def hockey_stick(cls, lam: float) -> DivergenceSpec:
        return cls(HOCKEY_STICK, float(lam))

    @classmethod
    def total_variation(cls) -> DivergenceSpec:
        return cls(TOTAL_VARIATION)

    @classmethod
    def power_renyi(cls, beta: float) -> DivergenceSpec:
        return cls(POWER_RENYI, float(beta))

    @property
    def piecewise_linear(self) -> bool:
        return self.kind != POWER_RENYI or self.param == 0

    @property
    def domain_max(self) -> float:
        """Right end of dom f*; the boundary itself is included iff ``domain_closed``."""
        if self.kind == HOCKEY_STICK:
            return 1.0
        if self.kind == TOTAL_VARIATION:
            return 0.5
        return math.inf if self.param > 1 else 0.0

    @property
    def domain_closed(self) -> bool:
        return self.kind != POWER_RENYI or self.param == 0

    def label(self) -> str:
        if self.kind == TOTAL_VARIATION:
            return self.kind
        return f"{self.kind}({self.param!r})"

    @classmethod
    def parse(cls, text: str) -> DivergenceSpec:
        kind, _, rest = text.strip().partition("(")
        if not rest:
            return cls(kind)
        return cls(kind, float(rest.rstrip(")")))


def f_value(spec: DivergenceSpec, x):
    """Generator f evaluated at x >= 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("f is only defined for x >= 0")
    if spec.kind == HOCKEY_STICK:
        lam = spec.param
        out = np.maximum(x - lam, 0.0) - max(1.0 - lam, 0.0)
    elif spec.kind == TOTAL_VARIATION:
        out = 0.5 * np.abs(x - 1.0)
    else:
        b = spec.param
        out = (x**b - 1.0) / (b - 1.0)
    return out[()] if out.ndim == 0 else out


def conjugate(spec: DivergenceSpec, y):
    """Convex conjugate f*(y); ``INFEASIBLE`` outside the conjugate's domain."""
    y = np.asarray(y, dtype=float)
    if spec.kind == HOCKEY_STICK:
        lam = spec.param
        out = lam * np.maximum(y, 0.0) + max(1.0 - lam, 0.0)
        out = np.where(y <= 1.0, out, INFEASIBLE)
    elif spec.kind == TOTAL_VARIATION:
        out = np.where(y <= 0.5, np.maximum(y, -0.5), INFEASIBLE)
    else:
        b = spec.param
        if b > 1:
            k = b / (b - 1.0)
            out = 1.0 / (b - 1.0) + ((b - 1.0) / b) ** k * np.maximum(y, 0.0) ** k
        elif b == 0:
            out = np.where(y <= 0.0, 0.0, INFEASIBLE)
        else:
            k = b / (b - 1.0)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                core = ((1.0 - b) * np.maximum(-y, 0.0) / b) ** k - 1.0 / (1.0 - b)
            out = np.where(y < 0.0, core, INFEASIBLE)
    return out[()] if out.ndim == 0 else out


def conjugate_gap(spec: DivergenceSpec, y):
    """f*(y) - y, free of cancellation near the tangent point of the smooth generators.

    For power generators with beta != 0 write y = k (1 + t) with k =
    beta / (beta - 1) = f'(1); then f*(y) - y = (1 + t)^k - 1 - k t, which is
    evaluated through expm1/log1p. Dual values built from this gap stay
    accurate for arbitrarily large nu.
    """
    y = np.asarray(y, dtype=float)
    if spec.kind != POWER_RENYI or spec.param == 0:
        out = conjugate(spec, y) - y
    else:
        b = spec.param
        k = b / (b - 1.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = (y - k) / k
            core = np.expm1(k * np.log1p(t)) - k * t
        if b > 1:
            out = np.where(y > 0.0, core, 1.0 / (b - 1.0) - y)
        else:
            out = np.where(y < 0.0, core, INFEASIBLE)
    return out[()] if out.ndim == 0 else out


def conjugate_argmax(spec: DivergenceSpec, y):
    """The maximising x of x*y - f(x), i.e. a (sub)gradient of f* at y.

    Only defined for the smooth power generators with beta != 0; the
    piecewise-linear generators have set-valued subgradients and are handled
    combinatorially by the solver.
    """
    if spec.piecewise_linear:
        raise ValueError(f"{spec.label()} has no unique conjugate maximiser")
    y = np.asarray(y, dtype=float)
    b = spec.param
    if b > 1:
        out = ((b - 1.0) * np.maximum(y, 0.0) / b) ** (1.0 / (b - 1.0))
    else:
        with np.errstate(divide="ignore", over="ignore"):
            out = ((1.0 - b) * np.maximum(-y, 0.0) / b) ** (1.0 / (b - 1.0))
        out = np.where(y < 0.0, out, math.inf)
    return out[()] if out.ndim == 0 else out


def _check_sigma(sigma: float) -> None:
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")


def hs_budget(epsilon: float, sigma: float, lam: float) -> float:
    """Hockey-stick divergence between N(0, sigma^2 I) and N(delta, sigma^2 I), |delta|_2 = epsilon.

    The likelihood ratio only varies along delta, so the D-dimensional problem
    is the 1-D one with shift a = epsilon / sigma.
    """
    _check_sigma(sigma)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    a = epsilon / sigma
    if a == 0.0:
        return 0.0
    shift = math.log(lam) / a
    hs = float(ndtr(a / 2 - shift) - lam * ndtr(-a / 2 - shift))
    return max(hs - max(1.0 - lam, 0.0), 0.0)


def tv_budget(epsilon: float, sigma: float) -> float:
    """Total variation between two isotropic Gaussians whose means are epsilon apart."""
    _check_sigma(sigma)
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    # 2*Phi(x) - 1 == erf(x / sqrt 2), without the cancellation near 0
    return float(erf(epsilon / (2.0 * sigma * math.sqrt(2.0))))


def l0_step_factor(p: float, num_actions: int, beta: float) -> float:
    """E_clean[(q/p)^beta] for one attacked step of action-flip smoothing."""
    other = p / (num_actions - 1)
    return (other**beta * (1.0 - p) ** (1.0 - beta)
            + (1.0 - p) ** beta * other ** (1.0 - beta)
            + (num_actions - 2) * other)


def l0_budget(attacked_steps: int, p: float, num_actions: int, beta: float) -> float:
    """Power-divergence budget for an adversary that retargets ``attacked_steps`` actions.

    Per attacked step the clean action law puts 1-p on the policy's choice and
    p/(N-1) on each alternative; the attacked law moves the 1-p mass to the
    adversary's action. Steps combine multiplicatively in E[(q/p)^beta].
    """
    if attacked_steps < 0 or attacked_steps != int(attacked_steps):
        raise ValueError(f"attacked_steps must be a non-negative integer, got {attacked_steps}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"flip probability must lie in (0, 1), got {p}")
    if num_actions < 2:
        raise ValueError(f"need at least 2 actions, got {num_actions}")
    DivergenceSpec.power_renyi(beta)
    if attacked_steps == 0:
        return 0.0
    c = l0_step_factor(p, num_actions, beta)
    return math.expm1(attacked_steps * math.log(c)) / (beta - 1.0)


def budget_for(spec: DivergenceSpec, epsilon: float, sigma: float) -> float:
    """Divergence budget for an observation shift of size epsilon under Gaussian smoothing."""
    if spec.kind == HOCKEY_STICK:
        return hs_budget(epsilon, sigma, spec.param)
    if spec.kind == TOTAL_VARIATION:
        return tv_budget(epsilon, sigma)
    raise ValueError(f"{spec.label()} has no Gaussian observation budget")
