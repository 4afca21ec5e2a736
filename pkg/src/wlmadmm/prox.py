"""Exact and approximate proximal operators for the four objective terms.

Every term ``q`` exposes ``value(p)`` and ``prox(center, scale, ...)``, where
the prox returns the minimizer of ``q(p) + (scale/2) * ||p - center||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .numerics import SpdSolver, spectral_norm

#: Inner tolerance used for the high-precision ("exact") reference solves.
REFERENCE_TOL = 1e-14
INNER_MAX_ITER = 100_000


class ProxConvergenceError(RuntimeError):
    """An iterative prox evaluation hit its inner iteration cap."""


class ReferenceMismatchError(ValueError):
    """An approximate prox point beat its exact reference by more than float noise."""


@dataclass
class ProxResult:
    point: np.ndarray
    reported_eps: float = 0.0
    inner_iterations: int = 0
    # warm-start data for iterative solvers; opaque to callers
    state: Any = field(default=None, repr=False)


def soft_threshold(y, tau):
    return np.sign(y) * np.maximum(np.abs(y) - tau, 0.0)


# ---------------------------------------------------------------------------
# k-support norm


def ksupport_norm(w, k: int) -> float:
    """The k-support norm of ``w``."""
    z = np.sort(np.abs(np.asarray(w, dtype=float)))[::-1]
    d = z.size
    if not 1 <= k <= d:
        raise ValueError(f"k must lie in [1, {d}], got {k}")
    if k == d:
        return float(np.sqrt(z @ z))
    # 1-based padding: zz[0] = +inf
    zz = np.concatenate(([np.inf], z))
    csum = np.concatenate(([0.0], np.cumsum(z)))
    csq = np.concatenate(([0.0], np.cumsum(z * z)))
    r = np.arange(k)
    tail = (csum[d] - csum[k - r - 1]) / (r + 1)
    viol = np.maximum(tail - zz[k - r - 1], 0.0) + np.maximum(zz[k - r] - tail, 0.0)
    ok = np.flatnonzero(viol <= 1e-14 * max(1.0, z[0]))
    j = int(ok[0]) if ok.size else int(np.argmin(viol))
    sq = csq[k - j - 1] + (csum[d] - csum[k - j - 1]) ** 2 / (j + 1)
    return float(np.sqrt(sq))


def _strided(lo: int, hi: int, skip: int) -> np.ndarray:
    """``lo, lo+skip, ...`` up to ``hi`` inclusive, always ending at ``hi``."""
    idx = np.arange(lo, hi + 1, skip)
    if idx[-1] != hi:
        idx = np.append(idx, hi)
    return idx


def prox_ksupport_sq(y, k_supp: int, weight: float, skip: int = 1) -> ProxResult:
    """Prox of ``(weight/2) * ksupport_norm(.)**2`` with unit quadratic.

    Candidate search over the sorted magnitudes: for split indices ``r`` (in
    ``0..k-1``) and ``l`` (in ``k..d``) the candidate solution is checked
    against the two pairs of ordering conditions.  With ``skip > 1`` both
    candidate index loops are perforated (stride ``skip``, last index always
    kept); if no visited candidate satisfies the conditions, the one with the
    smallest total violation is returned.  ``reported_eps`` is measured
    against the ``skip=1`` result.
    """
    y = np.asarray(y, dtype=float)
    d = y.size
    k = int(k_supp)
    if not 1 <= k <= d:
        raise ValueError(f"k_supp must lie in [1, {d}], got {k_supp}")
    if weight <= 0:
        raise ValueError("weight must be positive")
    if skip < 1:
        raise ValueError("skip must be >= 1")
    point = _ksupport_candidate_search(y, k, weight, int(skip))
    eps = 0.0
    if skip > 1:
        exact = _ksupport_candidate_search(y, k, weight, 1)
        term = KSupportSq(k, weight)
        eps = measure_eps(term, point, exact, y, 1.0)
    return ProxResult(point, eps)


def _ksupport_candidate_search(y, k, weight, skip):
    d = y.size
    order = np.argsort(-np.abs(y), kind="stable")
    z = np.abs(y)[order]
    if z[0] == 0.0:
        return np.zeros(d)
    beta = 1.0 / weight
    zz = np.concatenate(([np.inf], z, [-np.inf]))
    csum = np.concatenate(([0.0], np.cumsum(z)))

    rs = _strided(0, k - 1, skip)
    ls = _strided(k, d, skip)
    T = csum[ls][None, :] - csum[k - rs - 1][:, None]
    denom = (ls - k)[None, :] + ((beta + 1.0) * rs + beta + 1.0)[:, None]
    tmp = T / denom
    upper = (beta + 1.0) * tmp
    viol = (
        np.maximum(upper - zz[k - rs - 1][:, None], 0.0)
        + np.maximum(zz[k - rs][:, None] - upper, 0.0)
        + np.maximum(tmp - zz[ls][None, :], 0.0)
        + np.maximum(zz[ls + 1][None, :] - tmp, 0.0)
    )
    # visiting order: l outer, r inner
    flat = viol.T.ravel()
    hits = np.flatnonzero(flat <= 1e-14 * max(1.0, z[0]))
    pos = int(hits[0]) if hits.size else int(np.argmin(flat))
    li, ri = divmod(pos, rs.size)
    r, l, t = int(rs[ri]), int(ls[li]), float(tmp[ri, li])

    q = np.zeros(d)
    head = k - r - 1
    q[:head] = z[:head] * (beta / (beta + 1.0))
    q[head:l] = np.maximum(z[head:l] - t, 0.0)
    out = np.zeros(d)
    out[order] = q
    return out * np.sign(y)


# ---------------------------------------------------------------------------
# closed-form terms


def prox_l1(y, tau: float) -> ProxResult:
    """Soft thresholding: prox of ``tau * ||.||_1`` with unit quadratic."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return ProxResult(soft_threshold(np.asarray(y, dtype=float), tau), 0.0)


def prox_quadratic(A, b, y, scale: float, solver: SpdSolver | None = None) -> ProxResult:
    """Minimize ``||Ax - b||^2 + (scale/2)||x - y||^2`` via the normal equations."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    y = np.asarray(y, dtype=float)
    if scale <= 0:
        raise ValueError("scale must be positive")
    if A.shape != (b.size, y.size):
        raise ValueError(f"dimension mismatch: A {A.shape}, b {b.shape}, y {y.shape}")
    if solver is None:
        solver = SpdSolver(2.0 * A.T @ A + scale * np.eye(y.size))
    return ProxResult(solver.solve(2.0 * (A.T @ b) + scale * y), 0.0)


# ---------------------------------------------------------------------------
# weight * ||Ax - b||_1 : inner operator splitting


@dataclass
class _AffineState:
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray


class _AffineL1Solver:
    """Inner ADMM for ``weight*||Ax-b||_1 + (scale/2)||x-y||^2`` with w = Ax - b.

    Factorizations are cached per scale; they are built once and never mutated.
    """

    def __init__(self, A, b, weight):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.weight = float(weight)
        self._normA2 = spectral_norm(self.A) ** 2
        self._factors: dict[float, tuple[float, SpdSolver]] = {}

    def _factor(self, scale):
        hit = self._factors.get(scale)
        if hit is None:
            sigma = 5.0 * scale / max(self._normA2, 1e-300)
            n = self.A.shape[1]
            hit = (sigma, SpdSolver(scale * np.eye(n) + sigma * (self.A.T @ self.A)))
            self._factors[scale] = hit
        return hit

    def objective(self, x, y, scale):
        return self.weight * np.abs(self.A @ x - self.b).sum() + 0.5 * scale * np.sum((x - y) ** 2)

    def solve(self, y, scale, inner_tol, warm=None, max_iter=INNER_MAX_ITER):
        A, b, wt = self.A, self.b, self.weight
        sigma, chol = self._factor(scale)
        if warm is None:
            x = y.copy()
            w = A @ x - b
            u = np.zeros_like(b)
        else:
            x, w, u = warm.x.copy(), warm.w.copy(), warm.u.copy()
        # reference solves stop on primal/dual residuals, then polish on the kink set;
        # the successive-objective rule alone can stall far from the minimizer
        polish = inner_tol <= 1e-12
        res_tol = 1e-10
        F_prev = np.inf
        sy = scale * y
        it = 0
        while True:
            if it >= max_iter:
                raise ProxConvergenceError(
                    f"affine l1 prox did not converge within {max_iter} inner iterations"
                )
            it += 1
            x = chol.solve(sy + sigma * (A.T @ (b + w - u)))
            Ax_b = A @ x - b
            w_prev = w
            w = soft_threshold(Ax_b + u, wt / sigma)
            u += Ax_b - w
            if not polish:
                F = wt * np.abs(Ax_b).sum() + 0.5 * scale * np.sum((x - y) ** 2)
                if abs(F - F_prev) <= inner_tol * max(1.0, abs(F)):
                    break
                F_prev = F
                continue
            size = max(1.0, np.linalg.norm(Ax_b), np.linalg.norm(b))
            r_pri = np.linalg.norm(Ax_b - w)
            r_dual = sigma * np.linalg.norm(A.T @ (w - w_prev))
            if r_pri <= res_tol * size and r_dual <= res_tol * size * sigma:
                xp = self._polish(x, w, y, scale)
                if xp is not None:
                    x = xp
                    break
                if res_tol <= 1e-15:
                    break
                res_tol /= 10.0
        return ProxResult(x, 0.0, it, _AffineState(x.copy(), w, u))

    def _polish(self, x, w, y, scale):
        """Solve the KKT system on the kink set read off ``w``; None if it fails."""
        A, b, wt = self.A, self.b, self.weight
        kink = w == 0.0
        sgn = np.sign(w)
        if kink.sum() > A.shape[1]:
            return None
        AE = A[kink]
        g = wt * (A[~kink].T @ sgn[~kink])
        base = y - g / scale
        if AE.shape[0]:
            try:
                mu = np.linalg.solve(AE @ AE.T, scale * (AE @ base - b[kink]))
            except np.linalg.LinAlgError:
                return None
            if np.any(np.abs(mu) > wt * (1 + 1e-9)):
                return None
            xp = base - (AE.T @ mu) / scale
        else:
            xp = base
        res = A[~kink] @ xp - b[~kink]
        if np.any(res * sgn[~kink] < 0):
            return None
        return xp


def prox_l1_affine(A, b, y, scale: float, inner_tol: float, weight: float = 0.5,
                   warm=None) -> ProxResult:
    """Approximately minimize ``weight*||Ax-b||_1 + (scale/2)||x-y||^2``.

    The inner splitting stops once the relative change of the objective drops
    below ``inner_tol``.  ``reported_eps`` is the objective gap to a
    shadow solve at ``REFERENCE_TOL``.
    """
    if scale <= 0 or inner_tol <= 0:
        raise ValueError("scale and inner_tol must be positive")
    y = np.asarray(y, dtype=float)
    term = L1Affine(A, b, weight)
    res = term.prox(y, scale, inner_tol=inner_tol, warm=warm)
    if inner_tol > REFERENCE_TOL:
        exact = term.prox(y, scale, inner_tol=REFERENCE_TOL)
        res.reported_eps = measure_eps(term, res.point, exact.point, y, scale)
    return res


# ---------------------------------------------------------------------------
# term descriptors


class ProxTerm:
    name = "term"

    def value(self, p) -> float:
        raise NotImplementedError

    def prox(self, center, scale, *, skip=1, inner_tol=None, warm=None) -> ProxResult:
        raise NotImplementedError


class QuadraticLS(ProxTerm):
    """``||Ax - b||_2^2``."""

    def __init__(self, A, b, name="least_squares"):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.b.size:
            raise ValueError("A and b dimensions are inconsistent")
        self.name = name
        self._solvers: dict[float, SpdSolver] = {}

    @property
    def dim(self):
        return self.A.shape[1]

    def value(self, p):
        r = self.A @ p - self.b
        return float(r @ r)

    def prox(self, center, scale, *, skip=1, inner_tol=None, warm=None):
        solver = self._solvers.get(scale)
        if solver is None:
            solver = SpdSolver(2.0 * self.A.T @ self.A + scale * np.eye(self.dim))
            self._solvers[scale] = solver
        return prox_quadratic(self.A, self.b, center, scale, solver)


class L1(ProxTerm):
    """``weight * ||z||_1``."""

    def __init__(self, weight=1.0, name="l1"):
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.weight = float(weight)
        self.name = name

    def value(self, p):
        return self.weight * float(np.abs(p).sum())

    def prox(self, center, scale, *, skip=1, inner_tol=None, warm=None):
        return prox_l1(center, self.weight / scale)


class L1Affine(ProxTerm):
    """``weight * ||Ax - b||_1``, prox evaluated by an inner splitting loop."""

    def __init__(self, A, b, weight=0.5, name="l1_affine"):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or A.shape[0] != b.size:
            raise ValueError("A and b dimensions are inconsistent")
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.A, self.b, self.weight = A, b, float(weight)
        self.name = name
        self._solver = _AffineL1Solver(A, b, weight)

    @property
    def dim(self):
        return self.A.shape[1]

    def value(self, p):
        return self.weight * float(np.abs(self.A @ p - self.b).sum())

    def prox(self, center, scale, *, skip=1, inner_tol=None, warm=None):
        tol = REFERENCE_TOL if inner_tol is None else inner_tol
        return self._solver.solve(np.asarray(center, dtype=float), scale, tol, warm)


class KSupportSq(ProxTerm):
    """``(weight/2) * ksupport_norm(z, k_supp)**2``."""

    def __init__(self, k_supp, weight=1.0, name="ksupport_sq"):
        if k_supp < 1:
            raise ValueError("k_supp must be >= 1")
        if weight <= 0:
            raise ValueError("weight must be positive")
        self.k_supp = int(k_supp)
        self.weight = float(weight)
        self.name = name

    def value(self, p):
        return 0.5 * self.weight * ksupport_norm(p, self.k_supp) ** 2

    def prox(self, center, scale, *, skip=1, inner_tol=None, warm=None):
        center = np.asarray(center, dtype=float)
        point = _ksupport_candidate_search(center, self.k_supp, self.weight / scale, int(skip))
        return ProxResult(point, 0.0)


def prox_objective(term: ProxTerm, p, center, scale) -> float:
    diff = np.asarray(p) - center
    return term.value(p) + 0.5 * scale * float(diff @ diff)


def measure_eps(term: ProxTerm, approx_point, exact_point, center, scale) -> float:
    """Prox-objective gap between an approximate point and the exact one.

    Negative gaps up to ``1e-12`` (relative to the objective size) are float
    noise and read as zero; anything more negative means the reference was not
    exact and raises :class:`ReferenceMismatchError`.
    """
    fa = prox_objective(term, approx_point, center, scale)
    fe = prox_objective(term, exact_point, center, scale)
    gap = fa - fe
    if gap < 0:
        if gap < -1e-12 * max(1.0, abs(fe)):
            raise ReferenceMismatchError(
                f"approximate prox objective {fa!r} is below the reference {fe!r}"
            )
        return 0.0
    return float(gap)
