"""Closed-form Gaussian reference for the harmonic-trap problem.

The solution stays Gaussian, so its mean and covariance obey linear ODEs:

    dm/dt = trap(t) - m
    dC/dt = -2 (1 + alpha (N-1)/N) C + 2 D I

which this module integrates (Euler, matching the particle step, or RK4)
and also solves in closed form. Score, entropy, and entropy production
rate follow from (m, C).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import spd_inverse_det
from .problems import HarmonicParams


@dataclass
class GaussianState:
    m: np.ndarray
    C: np.ndarray
    t: float = 0.0

    def copy(self) -> "GaussianState":
        return GaussianState(self.m.copy(), self.C.copy(), self.t)


def interaction_rate(p: HarmonicParams, n_particles: int) -> float:
    """The combined contraction rate 2 (1 + alpha (N-1)/N)."""
    return 2.0 * (1.0 + p.alpha * (n_particles - 1) / n_particles)


def stationary_covariance(p: HarmonicParams, n_particles: int) -> np.ndarray:
    """Fixed point of the covariance ODE: D / (1 + alpha (N-1)/N) * I."""
    return 2.0 * p.diffusion / interaction_rate(p, n_particles) * np.eye(2)


def moments_step(g: GaussianState, p: HarmonicParams, n_particles: int,
                 dt: float, method: str = "euler") -> GaussianState:
    """Advance (m, C) by one step of the moment ODEs."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rate = interaction_rate(p, n_particles)
    source = 2.0 * p.diffusion * np.eye(2)

    def f_m(t, m):
        return p.trap_center(t) - m

    def f_C(C):
        return -rate * C + source

    if method == "euler":
        m = g.m + dt * f_m(g.t, g.m)
        C = g.C + dt * f_C(g.C)
    elif method == "rk4":
        k1 = f_m(g.t, g.m)
        k2 = f_m(g.t + dt / 2, g.m + dt / 2 * k1)
        k3 = f_m(g.t + dt / 2, g.m + dt / 2 * k2)
        k4 = f_m(g.t + dt, g.m + dt * k3)
        m = g.m + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        q1 = f_C(g.C)
        q2 = f_C(g.C + dt / 2 * q1)
        q3 = f_C(g.C + dt / 2 * q2)
        q4 = f_C(g.C + dt * q3)
        C = g.C + dt / 6 * (q1 + 2 * q2 + 2 * q3 + q4)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GaussianState(m, C, g.t + dt)


def exact_moments(p: HarmonicParams, n_particles: int, m0: np.ndarray,
                  C0: np.ndarray, t: float) -> GaussianState:
    """Closed-form solution of the moment ODEs at time t (from t=0)."""
    rate = interaction_rate(p, n_particles)
    Cstar = stationary_covariance(p, n_particles)
    C = Cstar + (np.asarray(C0, float) - Cstar) * np.exp(-rate * t)
    # m solves dm/dt = a (cos wt, sin wt) - m with w = pi * omega:
    # integrating factor e^t against the trap harmonics.
    w = np.pi * p.omega
    den = 1.0 + w * w
    et = np.exp(-t)
    mx = et * m0[0] + p.a * (np.cos(w * t) + w * np.sin(w * t) - et) / den
    my = et * m0[1] + p.a * (np.sin(w * t) - w * np.cos(w * t) + w * et) / den
    return GaussianState(np.array([mx, my]), C, t)


def gaussian_score(g: GaussianState, x: np.ndarray) -> np.ndarray:
    """Gradient of the Gaussian log density, -C^{-1} (x - m).

    Accepts a single state (d,) or a batch (B, d).
    """
    Cinv, _ = spd_inverse_det(g.C)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return -Cinv @ (x - g.m)
    return -(x - g.m) @ Cinv.T


def gaussian_pdf(g: GaussianState, x: np.ndarray) -> float:
    Cinv, det = spd_inverse_det(g.C)
    d = g.m.shape[0]
    dx = np.asarray(x, dtype=float) - g.m
    quad = float(dx @ Cinv @ dx)
    return float(np.exp(-0.5 * quad) / np.sqrt((2.0 * np.pi) ** d * det))


def analytic_entropy(g: GaussianState) -> float:
    """Differential entropy of N(m, C): d/2 (log 2 pi + 1) + 1/2 log det C."""
    _, det = spd_inverse_det(g.C)
    d = g.m.shape[0]
    return float(0.5 * d * (np.log(2.0 * np.pi) + 1.0) + 0.5 * np.log(det))


def analytic_entropy_rate(g: GaussianState, p: HarmonicParams,
                          n_particles: int) -> float:
    """d/dt of the entropy along the moment ODE:
    -2 - 2 alpha (N-1)/N + D tr(C^{-1})."""
    Cinv, _ = spd_inverse_det(g.C)
    return float(-interaction_rate(p, n_particles) + p.diffusion * np.trace(Cinv))
