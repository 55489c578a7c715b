"""Mean-field drift/interaction/diffusion problem definitions.

Two built-in instances: harmonically interacting particles in a moving
harmonic trap, and an active swimmer with velocity-coupled interaction.
Diffusion is constant in both; its restriction to the noisy coordinates
must be isotropic (c * I), which is what the integrators rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class HarmonicParams:
    a: float = 2.0            # trap radius
    omega: float = 1.0        # trap angular frequency
    alpha: float = 0.5        # repulsion magnitude, in (0, 1)
    diffusion: float = 0.25
    sigma0_sq: float = 0.25   # initial isotropic variance

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.diffusion <= 0.0:
            raise ValueError(f"diffusion must be positive, got {self.diffusion}")
        if self.sigma0_sq <= 0.0:
            raise ValueError(f"sigma0_sq must be positive, got {self.sigma0_sq}")

    def trap_center(self, t: float) -> np.ndarray:
        w = np.pi * self.omega * t
        return self.a * np.array([np.cos(w), np.sin(w)])


@dataclass(frozen=True)
class SwimmerParams:
    gamma: float = 0.1        # velocity damping
    alpha: float = 0.5        # interaction coefficient
    diffusion: float = 1.0
    sigma0: float = 1.0       # initial isotropic std

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.diffusion <= 0.0:
            raise ValueError(f"diffusion must be positive, got {self.diffusion}")
        if self.sigma0 <= 0.0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass(frozen=True)
class MeanFieldProblem:
    """One drift + pairwise-interaction + constant-diffusion instance.

    drift(t, X) and interaction_mean(X, Y) are vectorized over rows;
    interaction_mean(X, Y)[b] equals the kernel average
    (1/N) sum_j kernel(X[b], Y[j]) and both routes are kept so tests can
    cross-check them. drift_div gives the divergence (w.r.t. the query
    point) of drift minus the frozen-population interaction, used by the
    pointwise density evaluator.
    """

    name: str
    d: int
    noisy_coords: tuple[int, ...]
    drift: Callable[[float, np.ndarray], np.ndarray]
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray]
    interaction_mean: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diffusion: np.ndarray
    drift_div: Callable[[float, np.ndarray], np.ndarray]
    initial_mean: np.ndarray
    initial_cov: np.ndarray
    params: object = None
    default_hidden: tuple[int, ...] = (32, 32)

    def __post_init__(self):
        D = np.asarray(self.diffusion, dtype=float)
        if D.shape != (self.d, self.d) or np.abs(D - D.T).max() > 1e-12:
            raise ValueError("diffusion must be a symmetric (d, d) matrix")
        if not self.noisy_coords:
            raise ValueError("at least one noisy coordinate is required")
        idx = np.array(self.noisy_coords)
        block = D[np.ix_(idx, idx)]
        c = block[0, 0]
        if c <= 0.0 or np.abs(block - c * np.eye(len(idx))).max() > 1e-12:
            raise ValueError("diffusion restricted to noisy coords must be c * I, c > 0")
        quiet = [i for i in range(self.d) if i not in self.noisy_coords]
        if quiet and np.abs(D[np.ix_(quiet, range(self.d))]).max() > 0.0:
            raise ValueError("diffusion rows outside noisy coords must vanish")

    @property
    def score_dim(self) -> int:
        return len(self.noisy_coords)

    @property
    def noise_scale(self) -> float:
        """The scalar c with D = c * I on the noisy coordinates."""
        i = self.noisy_coords[0]
        return float(self.diffusion[i, i])


def harmonic_problem(p: HarmonicParams) -> MeanFieldProblem:
    """Particles attracted to a moving trap, pairwise harmonic repulsion.

    drift f(t, x) = trap(t) - x, kernel K(x, y) = alpha (x - y),
    diffusion D * I in both coordinates.
    """

    def drift(t, X):
        return p.trap_center(t) - X

    def kernel(x, y):
        return p.alpha * (np.asarray(x, float) - np.asarray(y, float))

    def interaction_mean(X, Y):
        # (1/N) sum_j alpha (x - y_j) = alpha (x - mean(Y))
        return p.alpha * (X - np.mean(Y, axis=0))

    def drift_div(t, X):
        # d/dx . [trap - x - alpha (x - mean)] = -2 (1 + alpha), frozen population
        return np.full(X.shape[0], -2.0 * (1.0 + p.alpha))

    return MeanFieldProblem(
        name="harmonic",
        d=2,
        noisy_coords=(0, 1),
        drift=drift,
        kernel=kernel,
        interaction_mean=interaction_mean,
        diffusion=p.diffusion * np.eye(2),
        drift_div=drift_div,
        initial_mean=p.trap_center(0.0),
        initial_cov=p.sigma0_sq * np.eye(2),
        params=p,
        default_hidden=(32, 32),
    )


def swimmer_problem(p: SwimmerParams) -> MeanFieldProblem:
    """Active swimmer in (x, v): cubic damping on x driven by v, damped v
    with position-coupled interaction; noise enters v only, so the score
    is the scalar d/dv log density.
    """

    def drift(t, X):
        x, v = X[:, 0], X[:, 1]
        return np.column_stack([-x ** 3 + v, -p.gamma * v])

    def kernel(x, y):
        return np.array([0.0, p.alpha * (float(x[0]) - float(y[0]))])

    def interaction_mean(X, Y):
        out = np.zeros_like(X)
        out[:, 1] = p.alpha * (X[:, 0] - np.mean(Y[:, 0]))
        return out

    def drift_div(t, X):
        # d/dx (-x^3 + v) + d/dv (-gamma v - alpha (x - mean_x)) = -3 x^2 - gamma
        return -3.0 * X[:, 0] ** 2 - p.gamma

    return MeanFieldProblem(
        name="swimmer",
        d=2,
        noisy_coords=(1,),
        drift=drift,
        kernel=kernel,
        interaction_mean=interaction_mean,
        diffusion=np.diag([0.0, p.gamma * p.diffusion]),
        drift_div=drift_div,
        initial_mean=np.zeros(2),
        initial_cov=p.sigma0 ** 2 * np.eye(2),
        params=p,
        default_hidden=(32, 32, 32),
    )
