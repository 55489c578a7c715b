"""Dense SPD linear algebra and reproducible counter-based random streams.

State dimensions are tiny (d <= 8), so everything here is plain dense
numpy with explicit loops where that buys better error reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Vectors are float64 arrays of shape (d,), matrices of shape (d, d).
Vec = np.ndarray
Mat = np.ndarray

SYMMETRY_TOL = 1e-12
_MASK64 = (1 << 64) - 1


class NotSPDError(ValueError):
    """Raised when a matrix expected to be SPD fails the Cholesky test."""

    def __init__(self, message: str, pivot_index: int | None = None,
                 pivot_value: float | None = None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


def _check_square_symmetric(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSPDError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSPDError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(m).max()))
    asym = float(np.abs(m - m.T).max())
    if asym > SYMMETRY_TOL * scale:
        raise NotSPDError(f"matrix asymmetry {asym:.3e} exceeds tolerance")
    return m


def cholesky_spd(m: Mat) -> Mat:
    """Lower Cholesky factor of an SPD matrix.

    Hand-rolled so a failure can name the offending pivot.
    """
    m = _check_square_symmetric(m)
    d = m.shape[0]
    L = np.zeros_like(m)
    for j in range(d):
        pivot = m[j, j] - L[j, :j] @ L[j, :j]
        if not np.isfinite(pivot) or pivot <= 0.0:
            raise NotSPDError(
                f"non-positive Cholesky pivot {pivot:.6e} at index {j}",
                pivot_index=j, pivot_value=float(pivot))
        L[j, j] = np.sqrt(pivot)
        if j + 1 < d:
            L[j + 1:, j] = (m[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def spd_inverse_det(m: Mat) -> tuple[Mat, float]:
    """Inverse and determinant of an SPD matrix via its Cholesky factor."""
    L = cholesky_spd(m)
    pivots = np.diag(L)
    det = float(np.prod(pivots) ** 2)
    Linv = np.linalg.solve(L, np.eye(L.shape[0]))
    inv = Linv.T @ Linv
    inv = 0.5 * (inv + inv.T)
    return inv, det


@dataclass
class RngStream:
    """Counter-based random stream keyed by (seed, stream id).

    Every call instantiates a Philox generator at a fresh counter block, so
    identical (seed, stream, counter) triples reproduce bit-identical output
    on any platform, independent of call interleaving across streams.
    """

    seed: int
    stream: int = 0
    counter: int = 0

    def _generator(self) -> np.random.Generator:
        key = (self.seed & _MASK64) | ((self.stream & _MASK64) << 64)
        # Each call owns 2^192 counter blocks: no overlap however much it draws.
        bg = np.random.Philox(counter=(self.counter & _MASK64) << 192, key=key)
        return np.random.Generator(bg)

    def standard_normal(self, shape=()) -> np.ndarray:
        g = self._generator()
        self.counter += 1
        return g.standard_normal(shape)

    def uniform(self, low: float, high: float, shape=()) -> np.ndarray:
        g = self._generator()
        self.counter += 1
        return g.uniform(low, high, shape)

    def spawn(self, stream: int) -> "RngStream":
        """Fresh stream with the same seed and an independent stream id."""
        return RngStream(self.seed, stream)


def gaussian_sample(mean: Vec, cov: Mat, rng: RngStream) -> Vec:
    """One draw from N(mean, cov); cov must be SPD."""
    return gaussian_sample_n(mean, cov, 1, rng)[0]


def gaussian_sample_n(mean: Vec, cov: Mat, n: int, rng: RngStream) -> np.ndarray:
    """n draws from N(mean, cov) as an (n, d) array, one rng call."""
    mean = np.asarray(mean, dtype=float)
    L = cholesky_spd(cov)
    z = rng.standard_normal((n, mean.shape[0]))
    return mean + z @ L.T
