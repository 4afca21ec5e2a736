"""Dense linear algebra, seeded sampling and concentration helpers."""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization breaks down."""


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _as_vector(v):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def check_symmetric(M, rtol=1e-10):
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 1.0)
    if np.max(np.abs(M - M.T), initial=0.0) > rtol * scale:
        raise ValueError("matrix is not symmetric")


def weighted_norm_sq(v, M) -> float:
    """Return ``<v, M v>`` for a symmetric PSD weighting matrix ``M``."""
    v = _as_vector(v)
    M = _as_matrix(M)
    if M.shape != (v.size, v.size):
        raise ValueError(f"dimension mismatch: M is {M.shape}, v has {v.size} entries")
    check_symmetric(M)
    return float(v @ (M @ v))


def spectral_norm(M) -> float:
    """Largest singular value of ``M``."""
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


class SpdSolver:
    """Cholesky factorization of an SPD matrix, reusable across right-hand sides."""

    def __init__(self, M):
        M = _as_matrix(M)
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"matrix must be square, got {M.shape}")
        check_symmetric(M)
        try:
            self._factor = linalg.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"Cholesky breakdown: {exc}") from exc
        # cho_factor does not always flag an indefinite matrix
        if not np.all(np.diag(self._factor[0]) > 0):
            raise NotPositiveDefiniteError("Cholesky breakdown: nonpositive pivot")
        self.n = M.shape[0]

    def solve(self, rhs):
        return linalg.cho_solve(self._factor, rhs, check_finite=False)


def solve_spd(M, rhs):
    rhs = _as_vector(rhs)
    solver = SpdSolver(M)
    if rhs.size != solver.n:
        raise ValueError("dimension mismatch between matrix and right-hand side")
    return solver.solve(rhs)


class SeededRng:
    """Owns one PCG64 stream; every random draw in a run goes through it."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def normal(self, size=None):
        out = self._gen.standard_normal(size)
        self.draws += 1 if size is None else int(np.prod(size))
        return out

    def uniform(self, low=0.0, high=1.0, size=None):
        out = self._gen.uniform(low, high, size)
        self.draws += 1 if size is None else int(np.prod(size))
        return out


def sample_truncated_gaussian(rng: SeededRng, bound) -> float | np.ndarray:
    """Zero-mean Gaussian with std ``bound/3``, resampled until ``|s| <= bound``.

    ``bound`` may be a scalar or an array of per-component bounds.
    """
    b = np.asarray(bound, dtype=float)
    if np.any(b < 0):
        raise ValueError("bound must be nonnegative")
    scalar = b.ndim == 0
    b = np.atleast_1d(b)
    out = np.zeros_like(b)
    todo = np.flatnonzero(b > 0)
    while todo.size:
        s = rng.normal(todo.size) * (b[todo] / 3.0)
        ok = np.abs(s) <= b[todo]
        out[todo[ok]] = s[ok]
        todo = todo[~ok]
    return float(out[0]) if scalar else out


def hoeffding_tail(k: int, eps0: float, t: float) -> float:
    """Two-sided Hoeffding tail for a sum of ``k+1`` variables in ``[0, eps0]``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if t <= 0:
        raise ValueError("t must be positive")
    if eps0 < 0:
        raise ValueError("eps0 must be nonnegative")
    if eps0 == 0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-2.0 * t * t / ((k + 1) * eps0 * eps0)))
