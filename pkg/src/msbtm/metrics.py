"""Quantitative comparisons: empirical moments, relative Fisher divergence,
numerical entropy production rate, grid total variation, and the KL-rate
diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .oracle import GaussianState, gaussian_score
from .problems import MeanFieldProblem

METRICS_HEADER = ("step,t,trace_msbtm,trace_sde,trace_nf,trace_analytic,"
                  "fisher_train,fisher_sde,ent_rate_num,ent_rate_analytic,"
                  "tv,kl_rate_diag")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned histogram grid; everything outside pools into one
    shared overflow bin so cell probabilities still sum to 1."""

    lower: tuple = (-3.0, -3.0)
    upper: tuple = (3.0, 3.0)
    cells: tuple = (12, 12)

    def __post_init__(self):
        lo, hi, nc = map(np.asarray, (self.lower, self.upper, self.cells))
        if not (lo.shape == hi.shape == nc.shape) or lo.ndim != 1:
            raise ValueError("lower/upper/cells must be equal-length 1-d")
        if np.any(hi <= lo):
            raise ValueError("upper must exceed lower on every axis")
        if np.any(nc < 1):
            raise ValueError("need at least one cell per axis")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    def histogram(self, samples: np.ndarray) -> np.ndarray:
        """Cell probabilities, overflow bin last; length n_cells + 1."""
        X = np.asarray(samples, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise ValueError("samples must be a non-empty (N, d) array")
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        nc = np.asarray(self.cells)
        ij = np.floor((X - lo) / (hi - lo) * nc).astype(int)
        inside = np.all((ij >= 0) & (ij < nc), axis=1)
        flat = np.full(len(X), self.n_cells)
        flat[inside] = np.ravel_multi_index(ij[inside].T, tuple(int(c) for c in nc))
        counts = np.bincount(flat, minlength=self.n_cells + 1)
        return counts / len(X)


def empirical_moments(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and (1/N-normalized) covariance; needs N >= 2."""
    X = np.asarray(getattr(samples, "states", samples), dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    dx = X - mean
    cov = dx.T @ dx / X.shape[0]
    return mean, cov


def _score_values(score, X: np.ndarray) -> np.ndarray:
    if isinstance(score, mlp.ScoreNet):
        return mlp.forward_batch(score, X)
    return np.asarray(score(X), dtype=float)


def relative_fisher(score, samples: np.ndarray, g: GaussianState) -> float:
    """sum |s - grad log rho|^2 / sum |grad log rho|^2 against the Gaussian
    reference, over whichever samples the caller supplies."""
    X = np.asarray(samples, dtype=float)
    S = _score_values(score, X)
    G = gaussian_score(g, X)
    if S.shape != G.shape:
        raise ValueError(f"score shape {S.shape} does not match reference {G.shape}")
    den = float(np.sum(G * G))
    if den == 0.0:
        raise ValueError("reference score vanishes on every sample")
    return float(np.sum((S - G) ** 2) / den)


def numerical_entropy_rate(score, problem: MeanFieldProblem, ensemble) -> float:
    """-(1/N) sum_i s(x_i) . v(x_i) with the empirical-interaction velocity
    v = f - interaction - D s; restricted scores dot over noisy coords."""
    X = np.asarray(getattr(ensemble, "states", ensemble), dtype=float)
    t = float(getattr(ensemble, "t", 0.0))
    S = _score_values(score, X)
    cols = list(problem.noisy_coords)
    v = problem.drift(t, X) - problem.interaction_mean(X, X)
    v[:, cols] -= problem.noise_scale * S
    if S.shape[1] == problem.d:
        return float(-np.mean(np.sum(S * v, axis=1)))
    return float(-np.mean(np.sum(S * v[:, cols], axis=1)))


def total_variation(samples_a, samples_b, grid: GridSpec) -> float:
    """L1 distance between the grid histograms of two ensembles, in [0, 2]."""
    pa = grid.histogram(np.asarray(getattr(samples_a, "states", samples_a)))
    pb = grid.histogram(np.asarray(getattr(samples_b, "states", samples_b)))
    return float(np.abs(pa - pb).sum())


def kl_rate_diagnostic(score, target_score_fn, ensemble, constant: float) -> float:
    """(constant / 2) * mean |s - target|^2: the discretized divergence-rate
    bound. The constant is caller-supplied, so the value is comparative,
    not an absolute bound."""
    X = np.asarray(getattr(ensemble, "states", ensemble), dtype=float)
    S = _score_values(score, X)
    G = np.asarray(target_score_fn(X), dtype=float)
    return float(0.5 * constant * np.mean(np.sum((S - G) ** 2, axis=1)))


@dataclass
class MetricsRecord:
    """One metrics.csv row; None marks a value undefined for the run mode."""

    step: int
    t: float
    trace_msbtm: float | None = None
    trace_sde: float | None = None
    trace_nf: float | None = None
    trace_analytic: float | None = None
    fisher_train: float | None = None
    fisher_sde: float | None = None
    ent_rate_num: float | None = None
    ent_rate_analytic: float | None = None
    tv: float | None = None
    kl_rate_diag: float | None = None

    def to_csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))

        cells = [str(self.step), repr(float(self.t))]
        cells += [fmt(v) for v in (
            self.trace_msbtm, self.trace_sde, self.trace_nf, self.trace_analytic,
            self.fisher_train, self.fisher_sde, self.ent_rate_num,
            self.ent_rate_analytic, self.tv, self.kl_rate_diag)]
        return ",".join(cells)
