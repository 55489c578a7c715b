"""Run configuration: a flat sectioned key-value file, strictly validated.

Annotated examples live in configs/; every recognized key is listed in
_SCHEMA below, anything else is rejected. Errors are collected so one
parse reports every violation at once.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .metrics import GridSpec
from .problems import HarmonicParams, MeanFieldProblem, SwimmerParams, \
    harmonic_problem, swimmer_problem
from .training import TrainConfig


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


_SCHEMA = {
    "run": {"problem", "n_particles", "dt", "n_steps", "seed", "snapshot_every"},
    "harmonic": {"a", "omega", "alpha", "diffusion", "sigma0_sq"},
    "swimmer": {"gamma", "alpha", "diffusion", "sigma0"},
    "train": {"kappa", "noise_draws", "learning_rate", "gtol", "max_iters",
              "max_grad_steps", "tol_init", "hidden", "kl_constant"},
    "grid": {"lower", "upper", "cells"},
    "output": {"dir"},
}

_REQUIRED_RUN = ("problem", "n_particles", "dt", "n_steps", "seed")


@dataclass
class RunConfig:
    problem_name: str
    harmonic: HarmonicParams | None
    swimmer: SwimmerParams | None
    n_particles: int
    dt: float
    n_steps: int
    seed: int
    snapshot_every: int
    train: TrainConfig
    hidden: tuple[int, ...] | None
    grid: GridSpec
    out_dir: str
    kl_constant: float
    source_text: str = field(default="", repr=False)

    def build_problem(self) -> MeanFieldProblem:
        if self.problem_name == "harmonic":
            return harmonic_problem(self.harmonic)
        return swimmer_problem(self.swimmer)


def _parse_gtol(text: str):
    """'0.3:2000, 0.35:9000, 0.4' -> ((2000, 0.3), (9000, 0.35), (None, 0.4));
    each threshold applies to steps below its bound, the last is open-ended."""
    entries = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            thr, bound = part.split(":", 1)
            entries.append((int(bound), float(thr)))
        else:
            entries.append((None, float(part)))
    return tuple(entries)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    errors: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError([f"syntax: {err}"]) from err

    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                errors.append(f"unknown key '{key}' in [{section}]")

    def get(section, key, convert, default=None, required=False):
        if not parser.has_option(section, key):
            if required:
                errors.append(f"missing required key '{key}' in [{section}]")
            return default
        raw = parser.get(section, key)
        try:
            return convert(raw)
        except (ValueError, TypeError) as err:
            errors.append(f"[{section}] {key} = {raw!r}: {err}")
            return default

    if not parser.has_section("run"):
        raise ConfigError(errors + ["missing required section [run]"])

    problem_name = get("run", "problem", str, required=True)
    if problem_name not in (None, "harmonic", "swimmer"):
        errors.append(f"[run] problem must be 'harmonic' or 'swimmer', "
                      f"got {problem_name!r}")
        problem_name = None
    n_particles = get("run", "n_particles", int, required=True)
    dt = get("run", "dt", float, required=True)
    n_steps = get("run", "n_steps", int, required=True)
    seed = get("run", "seed", int, required=True)
    snapshot_every = get("run", "snapshot_every", int, default=200)

    if n_particles is not None and n_particles < 2:
        errors.append(f"[run] n_particles must be >= 2, got {n_particles}")
    if dt is not None and dt <= 0:
        errors.append(f"[run] dt must be positive, got {dt}")
    if n_steps is not None and n_steps < 0:
        errors.append(f"[run] n_steps must be >= 0, got {n_steps}")
    if snapshot_every is not None and snapshot_every < 1:
        errors.append(f"[run] snapshot_every must be >= 1, got {snapshot_every}")

    harmonic = swimmer = None
    if problem_name == "harmonic":
        if not parser.has_section("harmonic"):
            errors.append("missing section [harmonic] for problem = harmonic")
        else:
            kwargs = {k: get("harmonic", k, float, required=True)
                      for k in _SCHEMA["harmonic"]}
            if all(v is not None for v in kwargs.values()):
                try:
                    harmonic = HarmonicParams(**kwargs)
                except ValueError as err:
                    errors.append(f"[harmonic] {err}")
    elif problem_name == "swimmer":
        if not parser.has_section("swimmer"):
            errors.append("missing section [swimmer] for problem = swimmer")
        else:
            kwargs = {k: get("swimmer", k, float, required=True)
                      for k in _SCHEMA["swimmer"]}
            if all(v is not None for v in kwargs.values()):
                try:
                    swimmer = SwimmerParams(**kwargs)
                except ValueError as err:
                    errors.append(f"[swimmer] {err}")
    for other in ("harmonic", "swimmer"):
        if other != problem_name and parser.has_section(other):
            errors.append(f"section [{other}] given but problem = {problem_name}")

    swimmer_mode = problem_name == "swimmer"
    train_kwargs = dict(
        kappa=get("train", "kappa", float, default=1e-4),
        noise_draws=get("train", "noise_draws", int,
                        default=1 if swimmer_mode else 32),
        learning_rate=get("train", "learning_rate", float, default=1e-4),
        gtol_schedule=get("train", "gtol", _parse_gtol,
                          default=((None, 1.0),) if swimmer_mode
                          else ((2000, 0.3), (9000, 0.35), (None, 0.4))),
        max_iters=get("train", "max_iters", int, default=5000),
        max_grad_steps=get("train", "max_grad_steps", int,
                           default=3 if swimmer_mode else 0),
        tol_init=get("train", "tol_init", float, default=1e-4),
    )
    train = None
    if all(v is not None for v in train_kwargs.values()):
        try:
            train = TrainConfig(**train_kwargs)
        except ValueError as err:
            errors.append(f"[train] {err}")
    hidden = get("train", "hidden", _ints, default=None)
    kl_constant = get("train", "kl_constant", float, default=1.0)

    grid = None
    grid_kwargs = dict(lower=get("grid", "lower", _floats, default=(-3.0, -3.0)),
                       upper=get("grid", "upper", _floats, default=(3.0, 3.0)),
                       cells=get("grid", "cells", _ints, default=(12, 12)))
    if all(v is not None for v in grid_kwargs.values()):
        try:
            grid = GridSpec(**grid_kwargs)
        except ValueError as err:
            errors.append(f"[grid] {err}")

    out_dir = get("output", "dir", str,
                  default=f"runs/{problem_name or 'run'}")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        problem_name=problem_name, harmonic=harmonic, swimmer=swimmer,
        n_particles=n_particles, dt=dt, n_steps=n_steps, seed=seed,
        snapshot_every=snapshot_every, train=train, hidden=hidden,
        grid=grid, out_dir=out_dir, kl_constant=kl_constant,
        source_text=text)
