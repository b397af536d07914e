"""Command-line front end: ``rewardcert {certify,attack,oracle} CONFIG``.

The config is an INI file. Every section except ``[DEFAULT]`` is one
experiment; keys in ``[DEFAULT]`` are shared. With one experiment, ``--out``
names the CSV file (stdout when omitted); with several it names a directory
that receives ``<section>.csv`` per experiment.

Certify CSV columns: epsilon, eps_d, bound, nu, eta, zeta, empirical_mean,
runtime_ms. Attack CSV columns: epsilon, attacked_mean, std_error,
hoeffding_slack, min, max, episodes. Oracle CSV columns: check, divergence,
cases, max_deviation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from .attacks import l0_action_attack, l2_obs_attack
from .certify import certify_samples, divergence_budget, draw_phase_samples
from .core import L0_STEPS, L1, L2, PerturbationBudget, SmoothingConfig
from .divergence import DivergenceSpec, budget_for, conjugate
from .envs import make_env
from .oracles import (FinitePrimal, numeric_budget_oracle, numeric_conjugate_oracle,
                      primal_oracle)
from .policies import PDController, TabularQPolicy, train_tabular_q
from .rollout import empirical_mean_and_range
from .solver import SolverError, hoeffding_radius, solve_dual

CERTIFY_COLUMNS = ["epsilon", "eps_d", "bound", "nu", "eta", "zeta", "empirical_mean", "runtime_ms"]
ATTACK_COLUMNS = ["epsilon", "attacked_mean", "std_error", "hoeffding_slack", "min", "max", "episodes"]
ORACLE_COLUMNS = ["check", "divergence", "cases", "max_deviation"]

# attack episodes use their own seed block, disjoint from both certification phases
ATTACK_SEED_OFFSET = 1 << 21

DEFAULT_DIVERGENCES = {
    L2: "hockey_stick(1.0), hockey_stick(2.0), hockey_stick(5.0)",
    L1: "total_variation",
    L0_STEPS: "power_renyi(1.05), power_renyi(1.2), power_renyi(1.5), power_renyi(2.0)",
}


class ConfigError(ValueError):
    """The experiment config is missing a key or holds an unusable value."""


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def parse_grid(text: str) -> list[float]:
    """Either ``start:stop:count`` (inclusive, evenly spaced) or a comma/space separated list."""
    text = text.strip()
    if ":" in text:
        start, stop, count = text.split(":")
        # rounding strips linspace artefacts such as 0.6000000000000001
        return [round(float(v), 12) for v in np.linspace(float(start), float(stop), int(count))]
    return [float(v) for v in text.replace(",", " ").split()]


def _parse_list(text: str) -> list[str]:
    # split on commas outside parentheses
    items, depth, cur = [], 0, ""
    for ch in text:
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            items.append(cur.strip())
            cur = ""
        else:
            cur += ch
    if cur.strip():
        items.append(cur.strip())
    return items


class Experiment:
    """Typed view over one config section."""

    def __init__(self, name: str, section: configparser.SectionProxy, base_dir: Path):
        self.name = name
        self.section = section
        self.base_dir = base_dir
        try:
            self.env_id = section.get("env", "cartpole")
            self.env = make_env(self.env_id)
            self.smoothing = SmoothingConfig.parse(section["smoothing"])
            self.norm = section.get("norm", L2)
            self.epsilons = parse_grid(section["epsilons"])
            self.m_opt = section.getint("m_opt", 1000)
            self.m_eval = section.getint("m_eval", 10000)
            self.alpha = section.getfloat("alpha", 0.01)
            self.seed = section.getint("seed", 0)
            self.gamma = section.getfloat("gamma", 1.0)
            self.record_runtime = section.getboolean("record_runtime", True)
            self.divergences = [DivergenceSpec.parse(t) for t in _parse_list(
                section.get("divergences", DEFAULT_DIVERGENCES.get(self.norm, "")))]
            self.budgets = [PerturbationBudget(self.norm, e, self.env.descriptor.horizon)
                            for e in self.epsilons]
            for spec in self.divergences:
                for budget in self.budgets:
                    divergence_budget(spec, self.smoothing, budget,
                                      self.env.descriptor.num_actions)
            self.policy = self._policy()
        except KeyError as exc:
            raise ConfigError(f"[{name}] missing key {exc}") from None
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
        if not self.epsilons:
            raise ConfigError(f"[{name}] empty epsilon grid")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"[{name}] alpha must lie in (0, 1)")

    def _policy(self):
        kind = self.section.get("policy", "pd")
        if kind == "pd":
            return PDController()
        if kind.startswith("qtable:"):
            return TabularQPolicy.load(self.base_dir / kind[len("qtable:"):])
        if kind == "train_q":
            return train_tabular_q(self.env, self.section.getint("train_episodes", 500),
                                   self.section.getfloat("learning_rate", 0.5),
                                   seed=self.section.getint("train_seed", 0))
        raise ValueError(f"unknown policy {kind!r} (use pd, qtable:<path> or train_q)")


def _load_config(path: str) -> tuple[list[str], configparser.ConfigParser, Path]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " ")) from None
    names = parser.sections()
    if not names:
        raise ConfigError("config has no experiment sections")
    base = Path(path).resolve().parent
    return names, parser, base


def _rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def run_certify(exp: Experiment, workers: int = 1) -> str:
    samples = draw_phase_samples(exp.env_id, exp.policy, exp.smoothing, exp.m_opt, exp.m_eval,
                                 exp.seed, exp.gamma, workers)
    support = exp.env.descriptor.return_support(exp.gamma)
    rows = []
    for eps, budget in zip(exp.epsilons, exp.budgets):
        cb = certify_samples(samples, exp.divergences, exp.smoothing, budget, support,
                             exp.env.descriptor.num_actions, exp.alpha)
        runtime = _fmt(cb.solve_seconds * 1000.0) if exp.record_runtime else ""
        rows.append([eps, cb.divergence_budget, cb.bound, cb.dual.nu, cb.dual.eta, cb.zeta,
                     cb.empirical_mean, runtime])
    return _rows_to_csv(CERTIFY_COLUMNS, rows)


def run_attack(exp: Experiment, workers: int = 1) -> str:
    sec = exp.section
    episodes = sec.getint("attack_episodes", 1000)
    lo, hi = exp.env.descriptor.return_support(exp.gamma)
    rows = []
    for eps in exp.epsilons:
        if exp.norm in (L2, L1):
            res = l2_obs_attack(exp.env_id, exp.policy, exp.smoothing, eps, episodes,
                                sec.getint("attack_candidates", 8), exp.seed + ATTACK_SEED_OFFSET, exp.norm,
                                sec.getint("score_horizon", 20), sec.getint("score_reps", 5),
                                exp.gamma, workers)
        else:
            res = l0_action_attack(exp.env_id, exp.policy, exp.smoothing, int(eps),
                                   sec.getfloat("gap_threshold", 0.0), episodes,
                                   exp.seed + ATTACK_SEED_OFFSET,
                                   exp.gamma, workers)
        mean, vmin, vmax = empirical_mean_and_range(res)
        values = res.as_array()
        stderr = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        rows.append([eps, mean, stderr, hoeffding_radius(hi - lo, values.size, exp.alpha),
                     vmin, vmax, values.size])
    return _rows_to_csv(ATTACK_COLUMNS, rows)


def _oracle_rows(section: configparser.SectionProxy) -> list[list]:
    rng = np.random.default_rng(section.getint("seed", 0))
    points = section.getint("points", 200)
    cases = section.getint("cases", 50)
    specs = [DivergenceSpec.parse(t) for t in _parse_list(section.get(
        "divergences", "hockey_stick(0.5), hockey_stick(1.0), hockey_stick(2.0), "
                       "hockey_stick(5.0), total_variation, power_renyi(0.5), "
                       "power_renyi(2.0), power_renyi(4.0)"))]
    rows = []
    for spec in specs:
        hi = spec.domain_max if math.isfinite(spec.domain_max) else 3.0
        ys = rng.uniform(-3.0, hi, points)
        if not spec.domain_closed:
            ys = np.minimum(ys, -1e-3)
        dev = max(abs(float(conjugate(spec, y)) - numeric_conjugate_oracle(spec, y)) for y in ys)
        rows.append(["conjugate", spec.label(), points, dev])
    for spec in [s for s in specs if s.kind in ("hockey_stick", "total_variation")]:
        dev = 0.0
        for _ in range(cases):
            eps, sigma = rng.uniform(0, 3), rng.uniform(0.1, 2)
            dev = max(dev, abs(budget_for(spec, eps, sigma) - numeric_budget_oracle(spec, eps, sigma)))
        rows.append(["budget", spec.label(), cases, dev])
    for spec in specs:
        dev = 0.0
        for _ in range(cases):
            n = int(rng.integers(2, 33))
            p = rng.dirichlet(np.ones(n))
            J = rng.uniform(0, 10, n)
            eps_d = float(rng.uniform(0.01, 1.0))
            primal = primal_oracle(FinitePrimal(tuple(p), tuple(J), spec, eps_d))
            dual = solve_dual(J, spec, eps_d, weights=p).objective
            dev = max(dev, abs(primal - dual))
        rows.append(["duality_gap", spec.label(), cases, dev])
    return rows


def _emit(outputs: dict[str, str], out: str | None) -> None:
    if len(outputs) == 1:
        (text,) = outputs.values()
        if out is None:
            sys.stdout.write(text)
        else:
            Path(out).write_text(text)
        return
    if out is None:
        for name, text in outputs.items():
            sys.stdout.write(f"# {name}\n{text}")
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (Path(out) / f"{name}.csv").write_text(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rewardcert",
                                     description="Certified reward lower bounds for smoothed policies.")
    parser.add_argument("command", choices=["certify", "attack", "oracle"])
    parser.add_argument("config", help="INI experiment config")
    parser.add_argument("--out", help="CSV file (one experiment) or directory (several)")
    parser.add_argument("--workers", type=int, default=1, help="rollout processes")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        names, parser, base = _load_config(args.config)
        outputs = {}
        for name in names:
            if args.command == "oracle":
                try:
                    outputs[name] = _rows_to_csv(ORACLE_COLUMNS, _oracle_rows(parser[name]))
                except ValueError as exc:
                    raise ConfigError(f"[{name}] {exc}") from None
                continue
            exp = Experiment(name, parser[name], base)
            if args.command == "certify":
                outputs[name] = run_certify(exp, args.workers)
            else:
                outputs[name] = run_attack(exp, args.workers)
        _emit(outputs, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
