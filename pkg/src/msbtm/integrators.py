"""Time steppers and the score-transport run loop.

All schemes are explicit Euler: the deterministic probability-flow step
(drift minus diffusion times score), Euler-Maruyama for the stochastic
dynamics, and its noise-free version. A per-step store of (time, score,
ensemble snapshot) supports pointwise density evaluation by integrating
the flow backward and accumulating the velocity divergence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .numerics import RngStream, gaussian_sample_n
from .oracle import GaussianState
from .problems import MeanFieldProblem
from .training import InitialFitError, TrainConfig, TrainingError, \
    divergence_batch, fit_initial_score, train_step_score


@dataclass
class Ensemble:
    """N particle states at one simulation time."""

    t: float
    states: np.ndarray            # (N, d)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError(f"states must be (N >= 1, d), got {self.states.shape}")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite particle state")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]


def drift_all(problem: MeanFieldProblem, t: float, states: np.ndarray) -> np.ndarray:
    """Drift of every particle: f(t, x_i) - (1/N) sum_j K(x_i, x_j)."""
    return problem.drift(t, states) - problem.interaction_mean(states, states)


def mean_field_drift(problem: MeanFieldProblem, ensemble: Ensemble, i: int) -> np.ndarray:
    """Drift of particle i, empirical interaction sum included (self term too)."""
    if not 0 <= i < ensemble.n:
        raise IndexError(f"particle index {i} out of range for N={ensemble.n}")
    x = ensemble.states[i:i + 1]
    b = problem.drift(ensemble.t, x) - problem.interaction_mean(x, ensemble.states)
    return b[0]


def _score_values(problem: MeanFieldProblem, score, states: np.ndarray) -> np.ndarray:
    if isinstance(score, mlp.ScoreNet):
        return mlp.forward_batch(score, states)
    return np.asarray(score(states), dtype=float)


def _check_finite(states: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(states)):
        bad = int(np.argwhere(~np.isfinite(states).all(axis=1))[0, 0])
        raise FloatingPointError(f"{what} produced a non-finite state for particle {bad}")


def msbtm_step(problem: MeanFieldProblem, ensemble: Ensemble, score,
               dt: float) -> Ensemble:
    """One probability-flow Euler step x += dt (b - D s), D acting on the
    noisy coordinates only."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    v = drift_all(problem, ensemble.t, ensemble.states)
    s = _score_values(problem, score, ensemble.states)
    cols = list(problem.noisy_coords)
    v[:, cols] -= problem.noise_scale * s
    new = ensemble.states + dt * v
    _check_finite(new, "probability-flow step")
    return Ensemble(ensemble.t + dt, new)


def em_step(problem: MeanFieldProblem, ensemble: Ensemble, dt: float,
            rng: RngStream) -> Ensemble:
    """One Euler-Maruyama step: x += dt b + sqrt(2 c dt) z on noisy coords.

    The diffusion is constant, so no divergence-of-D drift arises.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    b = drift_all(problem, ensemble.t, ensemble.states)
    new = ensemble.states + dt * b
    cols = list(problem.noisy_coords)
    z = rng.standard_normal((ensemble.n, len(cols)))
    new[:, cols] += np.sqrt(2.0 * problem.noise_scale * dt) * z
    _check_finite(new, "Euler-Maruyama step")
    return Ensemble(ensemble.t + dt, new)


def noise_free_step(problem: MeanFieldProblem, ensemble: Ensemble,
                    dt: float) -> Ensemble:
    """Euler step of the drift alone (the stochastic term dropped)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    new = ensemble.states + dt * drift_all(problem, ensemble.t, ensemble.states)
    _check_finite(new, "noise-free step")
    return Ensemble(ensemble.t + dt, new)


@dataclass
class FlowCheckpointStore:
    """Per-step record of the trained score and the ensemble it propagated.

    Entry k holds (t_k, score_k, states_k); the forward map on
    [t_k, t_{k+1}] used score_k with interaction against states_k, and the
    backward density evaluation replays exactly that.
    """

    problem: MeanFieldProblem
    dt: float
    times: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def append(self, t: float, score, states: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("checkpoint times must be strictly increasing")
        self.times.append(float(t))
        self.scores.append(score)
        self.snapshots.append(np.asarray(states, dtype=float))

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        times = np.asarray(self.times)
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            lo, hi = times[0], times[-1]
            raise KeyError(
                f"t={t} is not on the checkpoint grid "
                f"[{lo}, {hi}] with dt={self.dt} ({len(times)} times); "
                f"nearest stored time is {times[k]}")
        return k

    def save(self, directory) -> None:
        """Persist nets, snapshots, and times under a directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for k, score in enumerate(self.scores):
            if not isinstance(score, mlp.ScoreNet):
                raise TypeError("only ScoreNet-backed stores can be saved")
            mlp.save_net(score, directory / f"net_{k:06d}.bin")
        np.save(directory / "times.npy", np.asarray(self.times))
        np.save(directory / "ensembles.npy", np.stack(self.snapshots))
        (directory / "store.json").write_text(json.dumps(
            {"dt": self.dt, "steps": len(self.times), "problem": self.problem.name}))

    @classmethod
    def load(cls, directory, problem: MeanFieldProblem) -> "FlowCheckpointStore":
        directory = Path(directory)
        meta = json.loads((directory / "store.json").read_text())
        if meta["problem"] != problem.name:
            raise ValueError(
                f"store was written for problem {meta['problem']!r}, "
                f"not {problem.name!r}")
        store = cls(problem=problem, dt=float(meta["dt"]))
        times = np.load(directory / "times.npy")
        snaps = np.load(directory / "ensembles.npy")
        for k in range(int(meta["steps"])):
            store.append(times[k], mlp.load_net(directory / f"net_{k:06d}.bin"),
                         snaps[k])
        return store


@dataclass
class StepReport:
    """Per-step training/propagation record from a transport run."""

    step: int
    t: float
    train_iters: int
    grad_norm: float
    init_loss: float | None = None


def run_msbtm(problem: MeanFieldProblem, n_particles: int, dt: float,
              n_steps: int, train_cfg: TrainConfig, rng: RngStream,
              hidden=None, initial_states: np.ndarray | None = None,
              on_step=None):
    """Full transport run: fit the initial score analytically, then
    alternate probability-flow propagation and warm-started training.

    rng seeds three derived streams (sampling, net init, training probes).
    Returns (FlowCheckpointStore, [StepReport, ...]); on_step(k, ensemble,
    net) is called after each checkpoint when given.
    """
    if n_particles < 2:
        raise ValueError("n_particles must be >= 2")
    if dt <= 0.0 or n_steps < 0:
        raise ValueError("needs dt > 0 and n_steps >= 0")
    sample_rng = rng.spawn(1000 + rng.stream)
    init_rng = rng.spawn(2000 + rng.stream)
    train_rng = rng.spawn(3000 + rng.stream)

    if initial_states is None:
        initial_states = gaussian_sample_n(
            problem.initial_mean, problem.initial_cov, n_particles, sample_rng)
    ensemble = Ensemble(0.0, initial_states)

    widths = (problem.d, *(hidden or problem.default_hidden), problem.score_dim)
    net = mlp.init_scorenet(widths, init_rng)
    g0 = GaussianState(problem.initial_mean, problem.initial_cov, 0.0)
    try:
        net, fit_iters, fit_loss = fit_initial_score(
            net, ensemble.states, g0, train_cfg, problem.noisy_coords)
    except InitialFitError as err:
        err.failed_step = 0
        raise

    store = FlowCheckpointStore(problem=problem, dt=dt)
    store.append(ensemble.t, net, ensemble.states)
    reports = [StepReport(0, 0.0, fit_iters, 0.0, init_loss=fit_loss)]
    if on_step is not None:
        on_step(0, ensemble, net)

    for k in range(1, n_steps + 1):
        ensemble = msbtm_step(problem, ensemble, net, dt)
        try:
            net, iters, gn = train_step_score(
                net, ensemble.states, train_cfg, k, train_rng, problem.noisy_coords)
        except TrainingError as err:
            err.failed_step = k
            raise
        store.append(ensemble.t, net, ensemble.states)
        reports.append(StepReport(k, ensemble.t, iters, gn))
        if on_step is not None:
            on_step(k, ensemble, net)
    return store, reports


def evaluate_density(store: FlowCheckpointStore, x: np.ndarray, t: float,
                     rho0, rng: RngStream | None = None,
                     divergence_draws: int = 1000,
                     divergence_kappa: float = 1e-4) -> float:
    """Pointwise density at (x, t): integrate the stored flow backward to
    t_0 and return rho0(endpoint) * exp(-integral of div v along the path).

    The interaction each intermediate position feels is frozen at the
    stored per-step ensembles; div of the drift part is closed-form via
    the problem, div of the D s part is the denoising estimate.
    """
    if rng is None:
        rng = RngStream(0, stream=990)
    problem = store.problem
    K = store.index_of(t)
    y = np.asarray(x, dtype=float).copy()
    if y.shape != (problem.d,):
        raise ValueError(f"query point must have length {problem.d}")
    log_jac = 0.0
    c = problem.noise_scale
    cols = list(problem.noisy_coords)
    for k in range(K - 1, -1, -1):
        t_k = store.times[k]
        snap = store.snapshots[k]
        score = store.scores[k]
        row = y[None, :]
        v = problem.drift(t_k, row) - problem.interaction_mean(row, snap)
        v[:, cols] -= c * _score_values(problem, score, row)
        y = y - store.dt * v[0]
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"backward flow diverged between steps {k + 1} and {k}")
        row = y[None, :]
        div_b = float(problem.drift_div(t_k, row)[0])
        div_ds = c * float(divergence_batch(
            score, row, divergence_kappa, divergence_draws, rng,
            problem.noisy_coords)[0])
        log_jac += store.dt * (div_b - div_ds)
    return float(rho0(y) * np.exp(-log_jac))
