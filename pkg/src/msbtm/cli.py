"""Experiment orchestration and the command-line interface.

Subcommands: run (one integrator), compare (all three plus the analytic
track from one shared initial draw), density (pointwise density queries
against a stored transport run), validate-config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import mlp
from .config import ConfigError, RunConfig, parse_config
from .integrators import Ensemble, FlowCheckpointStore, em_step, \
    evaluate_density, noise_free_step, run_msbtm
from .metrics import METRICS_HEADER, MetricsRecord, empirical_moments, \
    kl_rate_diagnostic, numerical_entropy_rate, relative_fisher, total_variation
from .numerics import RngStream, gaussian_sample_n
from .oracle import GaussianState, analytic_entropy_rate, gaussian_pdf, \
    gaussian_score, moments_step
from .training import InitialFitError, TrainingError

MODES = ("msbtm", "sde", "noise_free", "compare")

# Fixed stream ids so every random draw is attributable and reproducible.
_STREAM_INIT = 10        # shared initial ensemble
_STREAM_MSBTM = 20       # transport run (net init, training probes)
_STREAM_SDE = 30         # Euler-Maruyama noise
_STREAM_DENSITY = 40     # divergence probes in density queries


def _snapshot_steps(n_steps: int, every: int) -> set[int]:
    steps = set(range(0, n_steps + 1, every))
    steps.update((0, n_steps))
    return steps


def _write_snapshot(path: Path, states: np.ndarray, scores=None) -> None:
    d = states.shape[1]
    cols = [f"c{j}" for j in range(d)]
    if scores is not None:
        cols += [f"s{j}" for j in range(scores.shape[1])]
    with open(path, "w", newline="") as f:
        f.write("particle_id," + ",".join(cols) + "\n")
        for i in range(states.shape[0]):
            row = [str(i)] + [repr(float(v)) for v in states[i]]
            if scores is not None:
                row += [repr(float(v)) for v in scores[i]]
            f.write(",".join(row) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _trace(states: np.ndarray) -> float:
    _, cov = empirical_moments(states)
    return float(np.trace(cov))


class _AnalyticTrack:
    """Euler-integrated Gaussian moments aligned with the particle grid."""

    def __init__(self, cfg: RunConfig):
        self.enabled = cfg.problem_name == "harmonic"
        if self.enabled:
            self.params = cfg.harmonic
            self.n = cfg.n_particles
            self.state = GaussianState(self.params.trap_center(0.0),
                                       self.params.sigma0_sq * np.eye(2), 0.0)

    def advance(self, dt: float) -> None:
        if self.enabled:
            self.state = moments_step(self.state, self.params, self.n, dt)


def run_experiment(cfg: RunConfig, mode: str, out_dir=None) -> Path:
    """Execute one experiment and write metrics.csv, snapshot CSVs,
    checkpoints (transport runs), and a hashed manifest."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "snapshots").mkdir(exist_ok=True)
    started = time.monotonic()

    problem = cfg.build_problem()
    base = RngStream(cfg.seed)
    X0 = gaussian_sample_n(problem.initial_mean, problem.initial_cov,
                           cfg.n_particles, base.spawn(_STREAM_INIT))
    K = cfg.n_steps
    snap_steps = _snapshot_steps(K, cfg.snapshot_every)
    want_msbtm = mode in ("msbtm", "compare")
    want_sde = mode in ("sde", "compare")
    want_nf = mode in ("noise_free", "compare")

    rows = [MetricsRecord(step=k, t=k * cfg.dt) for k in range(K + 1)]
    artifacts: list[Path] = []
    manifest = {
        "problem": cfg.problem_name,
        "mode": mode,
        "seed": cfg.seed,
        "n_particles": cfg.n_particles,
        "dt": cfg.dt,
        "n_steps": cfg.n_steps,
        "config_text": cfg.source_text,
        "failed_step": None,
        "error": None,
    }

    def finalize(exit_error=None):
        manifest["wall_time_s"] = time.monotonic() - started
        if exit_error is not None:
            manifest["failed_step"] = getattr(exit_error, "failed_step", None)
            manifest["error"] = str(exit_error)
        manifest["artifacts"] = {
            str(p.relative_to(out)): _sha256(p) for p in sorted(artifacts)}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))

    analytic = _AnalyticTrack(cfg)
    gaussians = [analytic.state.copy()] if analytic.enabled else None
    for k in range(1, K + 1):
        analytic.advance(cfg.dt)
        if analytic.enabled:
            gaussians.append(analytic.state.copy())
    if analytic.enabled:
        for k in range(K + 1):
            rows[k].trace_analytic = float(np.trace(gaussians[k].C))
            rows[k].ent_rate_analytic = analytic_entropy_rate(
                gaussians[k], cfg.harmonic, cfg.n_particles)

    store = None
    if want_msbtm:
        try:
            store, _reports = run_msbtm(
                problem, cfg.n_particles, cfg.dt, K, cfg.train,
                base.spawn(_STREAM_MSBTM), hidden=cfg.hidden,
                initial_states=X0)
        except (TrainingError, InitialFitError) as err:
            finalize(exit_error=err)
            raise
        for k in range(K + 1):
            states, net = store.snapshots[k], store.scores[k]
            rows[k].trace_msbtm = _trace(states)
            rows[k].ent_rate_num = numerical_entropy_rate(
                net, problem, Ensemble(store.times[k], states))
            if analytic.enabled:
                g = gaussians[k]
                rows[k].fisher_train = relative_fisher(net, states, g)
                rows[k].kl_rate_diag = kl_rate_diagnostic(
                    net, lambda X, g=g: gaussian_score(g, X), states,
                    cfg.kl_constant)
            if k in snap_steps:
                path = out / "snapshots" / f"msbtm_step_{k:06d}.csv"
                _write_snapshot(path, states, mlp.forward_batch(net, states))
                artifacts.append(path)
        store.save(out / "checkpoints")
        artifacts.extend(sorted((out / "checkpoints").iterdir()))

    for track, want in (("sde", want_sde), ("noise_free", want_nf)):
        if not want:
            continue
        rng = base.spawn(_STREAM_SDE)
        ens = Ensemble(0.0, X0.copy())
        for k in range(K + 1):
            if k > 0:
                ens = (em_step(problem, ens, cfg.dt, rng) if track == "sde"
                       else noise_free_step(problem, ens, cfg.dt))
            if track == "sde":
                rows[k].trace_sde = _trace(ens.states)
                if store is not None and analytic.enabled:
                    rows[k].fisher_sde = relative_fisher(
                        store.scores[k], ens.states, gaussians[k])
                if store is not None:
                    rows[k].tv = total_variation(
                        store.snapshots[k], ens.states, cfg.grid)
            else:
                rows[k].trace_nf = _trace(ens.states)
            if k in snap_steps:
                path = out / "snapshots" / f"{track}_step_{k:06d}.csv"
                _write_snapshot(path, ens.states)
                artifacts.append(path)

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", newline="") as f:
        f.write(METRICS_HEADER + "\n")
        for row in rows:
            f.write(row.to_csv_row() + "\n")
    artifacts.append(metrics_path)
    finalize()
    return out


def verify_manifest(run_dir) -> None:
    """Re-hash every listed artifact; raises ValueError on any mismatch."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    bad = []
    for rel, digest in manifest["artifacts"].items():
        path = run_dir / rel
        if not path.exists():
            bad.append(f"{rel}: missing")
        elif _sha256(path) != digest:
            bad.append(f"{rel}: content hash mismatch")
    if bad:
        raise ValueError("manifest verification failed:\n  " + "\n  ".join(bad))


def density_query(run_dir, points, t: float, divergence_draws: int = 1000):
    """Evaluate the stored transport density at each query point.

    Returns a list of (point, density) pairs; needs a run made in msbtm or
    compare mode (checkpoints present).
    """
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    if manifest["mode"] not in ("msbtm", "compare"):
        raise ValueError(f"run mode {manifest['mode']!r} stored no checkpoints")
    cfg = parse_config(manifest["config_text"])
    problem = cfg.build_problem()
    store = FlowCheckpointStore.load(run_dir / "checkpoints", problem)
    g0 = GaussianState(problem.initial_mean, problem.initial_cov, 0.0)
    rng = RngStream(manifest["seed"], stream=_STREAM_DENSITY)
    out = []
    for point in points:
        x = np.asarray(point, dtype=float)
        rho = evaluate_density(store, x, t, lambda y: gaussian_pdf(g0, y),
                               rng=rng, divergence_draws=divergence_draws)
        out.append((x, rho))
    return out


def _load_points(path: Path, d: int) -> list:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        cols = [f"c{j}" for j in range(d)]
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing point columns {missing}")
        return [[float(row[c]) for c in cols] for row in reader]


def _read_config(path: str) -> RunConfig:
    return parse_config(Path(path).read_text())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="msbtm",
        description="Mean-field Fokker-Planck solver by score-based transport")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single integrator")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--mode", required=True,
                       choices=("msbtm", "sde", "noise_free"))
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)

    p_cmp = sub.add_parser("compare",
                           help="run all integrators from one initial draw")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--out", default=None)

    p_den = sub.add_parser("density", help="pointwise density from a stored run")
    p_den.add_argument("--run", required=True, help="completed msbtm/compare dir")
    p_den.add_argument("--t", type=float, required=True)
    p_den.add_argument("--points", default=None, help="CSV with columns c0,c1,...")
    p_den.add_argument("--point", action="append", default=[],
                       help="inline point 'x,y' (repeatable)")
    p_den.add_argument("--out", default=None, help="output CSV (default stdout)")

    p_val = sub.add_parser("validate-config", help="parse and validate a config")
    p_val.add_argument("--config", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "validate-config":
            cfg = _read_config(args.config)
            print(f"OK: {cfg.problem_name}, N={cfg.n_particles}, "
                  f"dt={cfg.dt}, n_steps={cfg.n_steps}, seed={cfg.seed}")
            return 0
        if args.command in ("run", "compare"):
            cfg = _read_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            mode = "compare" if args.command == "compare" else args.mode
            out = run_experiment(cfg, mode, out_dir=args.out)
            print(f"wrote {out}")
            return 0
        if args.command == "density":
            run_dir = Path(args.run)
            manifest = json.loads((run_dir / "manifest.json").read_text())
            cfg = parse_config(manifest["config_text"])
            d = cfg.build_problem().d
            points = []
            if args.points:
                points.extend(_load_points(Path(args.points), d))
            for spec in args.point:
                points.append([float(v) for v in spec.split(",")])
            results = density_query(run_dir, points, args.t)
            lines = [",".join(f"c{j}" for j in range(d)) + ",rho"]
            for x, rho in results:
                lines.append(",".join(repr(float(v)) for v in x) + "," + repr(rho))
            text = "\n".join(lines) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (TrainingError, InitialFitError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
