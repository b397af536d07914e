"""Shared domain types: trajectories, reward sample sets, smoothing and budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .noise import SEED_MASK  # noqa: F401

GAUSSIAN = "gaussian_observation"
ACTION_FLIP = "action_flip"

L2 = "l2"
L1 = "l1"
L0_STEPS = "l0_steps"


@dataclass(frozen=True)
class Step:
    state: tuple[float, ...]
    observation: tuple[float, ...]
    action: int
    reward: float


@dataclass(frozen=True)
class TrajectoryRecord:
    steps: tuple[Step, ...]
    horizon: int
    cumulative_reward: float
    seed: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if len(self.steps) > self.horizon:
            raise ValueError(
                f"{len(self.steps)} steps exceed horizon {self.horizon}")
        dims = {len(s.observation) for s in self.steps}
        if len(dims) > 1:
            raise ValueError(f"observation dimensions differ: {sorted(dims)}")

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]


def cumulative_reward(record: TrajectoryRecord | Sequence[float],
                      gamma: float = 1.0) -> float:
    """Discounted return sum_t gamma**t * r_t of a trajectory.

    Accepts either a TrajectoryRecord or a plain sequence of per-step rewards.
    ``gamma=0`` keeps only the first reward (0**0 == 1).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    rewards = record.rewards if isinstance(record, TrajectoryRecord) else record
    return math.fsum(r * gamma**t for t, r in enumerate(rewards))


@dataclass(frozen=True)
class SmoothingConfig:
    kind: str
    param: float

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if not self.param > 0:
                raise ValueError(f"sigma must be > 0, got {self.param}")
        elif self.kind == ACTION_FLIP:
            if not 0.0 <= self.param <= 1.0:
                raise ValueError(f"flip probability must be in [0, 1], got {self.param}")
        else:
            raise ValueError(f"unknown smoothing kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma: float) -> SmoothingConfig:
        return cls(GAUSSIAN, float(sigma))

    @classmethod
    def action_flip(cls, p: float) -> SmoothingConfig:
        return cls(ACTION_FLIP, float(p))

    @property
    def sigma(self) -> float:
        if self.kind != GAUSSIAN:
            raise AttributeError("sigma is only defined for gaussian smoothing")
        return self.param

    @property
    def p(self) -> float:
        if self.kind != ACTION_FLIP:
            raise AttributeError("p is only defined for action-flip smoothing")
        return self.param

    def label(self) -> str:
        return f"{self.kind}({self.param!r})"

    @classmethod
    def parse(cls, text: str) -> SmoothingConfig:
        kind, _, rest = text.strip().partition("(")
        return cls(kind, float(rest.rstrip(")")))


@dataclass(frozen=True)
class PerturbationBudget:
    norm: str
    epsilon: float
    horizon: int | None = None

    def __post_init__(self):
        if self.norm not in (L2, L1, L0_STEPS):
            raise ValueError(f"unknown norm {self.norm!r}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.norm == L0_STEPS:
            if self.epsilon != int(self.epsilon):
                raise ValueError("l0_steps budget must be an integer step count")
            if self.horizon is not None and self.epsilon > self.horizon:
                raise ValueError(
                    f"cannot attack {self.epsilon} steps of a {self.horizon}-step episode")


@dataclass(frozen=True)
class RewardSampleSet:
    """I.i.d. cumulative rewards from smoothed rollouts.

    Sample ``i`` was produced by the episode seeded ``seed_base + i``.
    ``header`` carries free-form extra metadata (e.g. attack settings) and is
    written to the file header verbatim.
    """

    values: tuple[float, ...]
    env_id: str
    smoothing: SmoothingConfig
    seed_base: int
    gamma: float = 1.0
    horizon: int = 1
    header: tuple[tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("a reward sample set cannot be empty")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def check_range(self, r_min: float, r_max: float) -> None:
        lo, hi = self.horizon * r_min, self.horizon * r_max
        arr = self.as_array()
        if arr.min() < lo or arr.max() > hi:
            raise ValueError(
                f"sample values [{arr.min()}, {arr.max()}] leave [{lo}, {hi}]")

    def save(self, path: str | Path) -> None:
        write_sample_set(self, path)

    @classmethod
    def load(cls, path: str | Path) -> RewardSampleSet:
        return read_sample_set(path)


# One header line of space-separated key=value pairs, then one reward per line.
# repr() round-trips doubles exactly (17 significant digits when needed).
_HEADER_PREFIX = "# rewardcert-samples v1"


def write_sample_set(samples: RewardSampleSet, path: str | Path) -> None:
    fields = [
        ("env_id", samples.env_id),
        ("smoothing", samples.smoothing.label()),
        ("seed_base", str(samples.seed_base)),
        ("gamma", repr(samples.gamma)),
        ("T", str(samples.horizon)),
        ("m", str(len(samples))),
    ]
    fields.extend(samples.header)
    for key, value in fields:
        if " " in key or " " in value or "=" in key:
            raise ValueError(f"header field {key}={value} may not contain spaces")
    lines = [_HEADER_PREFIX + " " + " ".join(f"{k}={v}" for k, v in fields)]
    lines.extend(repr(float(v)) for v in samples.values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_sample_set(path: str | Path) -> RewardSampleSet:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        raise ValueError(f"{path}: missing reward sample set header")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(_HEADER_PREFIX):].split())
    values = tuple(float(x) for x in lines[1:] if x.strip())
    if "m" in meta and int(meta["m"]) != len(values):
        raise ValueError(f"{path}: header says m={meta['m']}, found {len(values)} values")
    known = {"env_id", "smoothing", "seed_base", "gamma", "T", "m"}
    extra = tuple((k, v) for k, v in meta.items() if k not in known)
    return RewardSampleSet(
        values=values,
        env_id=meta["env_id"],
        smoothing=SmoothingConfig.parse(meta["smoothing"]),
        seed_base=int(meta["seed_base"]),
        gamma=float(meta["gamma"]),
        horizon=int(meta["T"]),
        header=extra,
    )


@dataclass(frozen=True)
class DualSolution:
    nu: float
    eta: float
    objective: float
    feasible: bool
    evaluations: int = 0


@dataclass(frozen=True)
class CertifiedBound:
    bound: float
    alpha: float
    zeta: float
    divergence_budget: float
    dual: DualSolution
    m_opt: int
    m_eval: int
    budget: PerturbationBudget
    empirical_mean: float = math.nan
    divergence: str = ""
    seed_base: int = 0
    eval_seed_base: int = 0
    solve_seconds: float = math.nan  # wall time of the dual solves only

    @property
    def confidence(self) -> float:
        return 1.0 - self.alpha

    def to_record(self) -> str:
        """key=value text record, one field per line."""
        fields = [
            ("bound", repr(self.bound)),
            ("nu", repr(self.dual.nu)),
            ("eta", repr(self.dual.eta)),
            ("eps_d", repr(self.divergence_budget)),
            ("zeta", repr(self.zeta)),
            ("m_opt", str(self.m_opt)),
            ("m_eval", str(self.m_eval)),
            ("alpha", repr(self.alpha)),
            ("seed_opt", str(self.seed_base)),
            ("seed_eval", str(self.eval_seed_base)),
            ("norm", self.budget.norm),
            ("epsilon", repr(self.budget.epsilon)),
            ("divergence", self.divergence),
            ("empirical_mean", repr(self.empirical_mean)),
        ]
        return "".join(f"{k}={v}\n" for k, v in fields)
