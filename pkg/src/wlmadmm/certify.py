"""Per-iteration convergence bounds and the empirical probability check.

All bound series are indexed by ``k = 0..N-1`` and refer to the iterate
``(x^{k+1}, z^{k+1})``, i.e. ``trace.records[k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import AdmmConfig, PrecomputedOperators, ProblemSpec, Trace

GAMMA_SMALL = 2.0 * math.sqrt(math.log(2.0))
GAMMA_LARGE = 20.0 * math.sqrt(math.log(2.0))


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    z_star: np.ndarray
    f_star: float
    provenance: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    N: int
    gamma: float
    p_empirical: float | None
    p_lower_4: float
    p_lower_2: float
    satisfied: np.ndarray

    def summary(self) -> dict:
        return {"N": self.N, "gamma": self.gamma, "p_empirical": self.p_empirical,
                "p_lower_4": self.p_lower_4, "p_lower_2": self.p_lower_2}


def _counts(n):
    return np.arange(1, n + 1, dtype=float)


def f_gap(trace: Trace, ref: ReferenceSolution) -> np.ndarray:
    return trace.series("f_value") - ref.f_star


def lhs_running(trace: Trace, problem: ProblemSpec, cfg: AdmmConfig,
                ref: ReferenceSolution) -> np.ndarray:
    """Running average of the suboptimality plus the dual cross term.

    The cross term uses the per-iteration dual increment ``v^{i+1} - v^i``.
    """
    if not trace.records:
        return np.zeros(0)
    if any(r.u is None for r in trace.records):
        raise ValueError("trace records lack u")
    L = cfg.weight(problem.p)
    v_prev = np.vstack([trace.initial.v] + [r.v for r in trace.records[:-1]])
    v = trace.stack("v")
    u = trace.stack("u")
    cross = np.einsum("ij,ij->i", u @ L.T, v - v_prev) / cfg.lam
    terms = f_gap(trace, ref) + cross
    return np.cumsum(terms) / _counts(len(terms))


def initial_distance(trace: Trace, ref: ReferenceSolution, ops: PrecomputedOperators,
                     cfg: AdmmConfig) -> float:
    """``||x0 - x*||^2_Sigma1 + lam_z ||z0 - z*||^2``."""
    dx = trace.initial.x - ref.x_star
    dz = trace.initial.z - ref.z_star
    return float(dx @ ops.Sigma1 @ dx + cfg.lam_z * dz @ dz)


def bound_free(N: int, D0: float) -> np.ndarray:
    return D0 / (2.0 * _counts(N))


def _distances(trace, ref):
    dx = np.linalg.norm(trace.stack("x") - ref.x_star, axis=1)
    dz = np.linalg.norm(trace.stack("z") - ref.z_star, axis=1)
    return dx, dz


def _eps(trace):
    eg, eh = trace.series("eps_g"), trace.series("eps_h")
    if np.any(np.isnan(eg)) or np.any(np.isnan(eh)):
        raise ValueError("trace has unmeasured prox errors; run it in shadow mode")
    return eg, eh


def residual_products(trace: Trace, ref: ReferenceSolution, ops: PrecomputedOperators,
                      cfg: AdmmConfig, mode: str) -> np.ndarray:
    """Residual-times-distance terms at the last iterate of each prefix."""
    dx, dz = _distances(trace, ref)
    if mode == "nonconvex":
        if trace.mode != "shadow" or any(r.rz_norm is None for r in trace.records):
            raise ValueError("nonconvex bounds need a shadow-mode trace")
        return trace.series("Sigma1_rx_norm") * dx + trace.series("rz_norm") * dz
    if mode == "convex":
        eg, eh = _eps(trace)
        return (np.sqrt(2.0 * eh / cfg.lam_z) * dz
                + np.sqrt(2.0 * ops.sigma1_lmax * eg / cfg.lam_x) * dx)
    raise ValueError(f"unknown mode {mode!r}")


def bound_deterministic(trace: Trace, ref: ReferenceSolution, ops: PrecomputedOperators,
                        cfg: AdmmConfig, mode: str = "nonconvex") -> np.ndarray:
    N = len(trace)
    if N == 0:
        return np.zeros(0)
    eg, eh = _eps(trace)
    prod = residual_products(trace, ref, ops, cfg, mode)
    D0 = initial_distance(trace, ref, ops, cfg)
    kk = _counts(N)
    return D0 / (2.0 * kk) + (np.cumsum(eg) + np.cumsum(eh) + prod) / kk


def running_mean_eps(trace: Trace, known_mean: float | None = None):
    eg, eh = _eps(trace)
    if known_mean is not None:
        full = np.full(len(eg), float(known_mean))
        return full, full.copy()
    kk = _counts(len(eg))
    return np.cumsum(eg) / kk, np.cumsum(eh) / kk


def bound_probabilistic(trace: Trace, ref: ReferenceSolution, ops: PrecomputedOperators,
                        cfg: AdmmConfig, gamma: float, eps0: float, mode: str = "nonconvex",
                        known_mean: float | None = None) -> np.ndarray:
    """Mean prox errors + halved initial-distance/residual bracket + Hoeffding slack."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if eps0 < 0:
        raise ValueError("eps0 must be nonnegative")
    N = len(trace)
    if N == 0:
        return np.zeros(0)
    mg, mh = running_mean_eps(trace, known_mean)
    prod = residual_products(trace, ref, ops, cfg, mode)
    if mode == "convex":
        prod = 2.0 * prod
    D0 = initial_distance(trace, ref, ops, cfg)
    kk = _counts(N)
    return mg + mh + (D0 + prod) / (2.0 * kk) + gamma * eps0 / np.sqrt(kk)


def lhs_general(trace: Trace, problem: ProblemSpec, cfg: AdmmConfig, x_ref, z_ref) -> np.ndarray:
    """Left-hand side of the general additive-error bound for a feasible pair."""
    L = cfg.weight(problem.p)
    x = trace.stack("x")
    z = trace.stack("z")
    fref = problem.objective(x_ref, z_ref)
    w = x @ problem.A.T + z @ problem.B.T - (problem.A @ x_ref + problem.B @ z_ref)
    cross = np.einsum("ij,ij->i", trace.stack("u") @ L.T, w) / cfg.lam
    terms = trace.series("f_value") - fref + cross
    return np.cumsum(terms) / _counts(len(terms))


def bound_general(trace: Trace, problem: ProblemSpec, ops: PrecomputedOperators,
                  cfg: AdmmConfig, x_ref, z_ref, r_x_ref=None, r_z_ref=None,
                  atol: float = 1e-8) -> np.ndarray:
    """Right-hand side of the general bound with signed residual inner products."""
    x_ref = np.asarray(x_ref, dtype=float)
    z_ref = np.asarray(z_ref, dtype=float)
    infeas = np.linalg.norm(problem.A @ x_ref + problem.B @ z_ref - problem.c)
    if infeas > atol:
        raise ValueError(f"reference pair is infeasible (residual {infeas:.3e})")
    if trace.mode != "shadow":
        raise ValueError("the general bound needs a shadow-mode trace")
    r_x_ref = np.zeros_like(x_ref) if r_x_ref is None else np.asarray(r_x_ref, dtype=float)
    r_z_ref = np.zeros_like(z_ref) if r_z_ref is None else np.asarray(r_z_ref, dtype=float)
    eg, eh = _eps(trace)
    x, z = trace.stack("x"), trace.stack("z")
    rx, rz = trace.stack("r_x"), trace.stack("r_z")
    sx = np.einsum("ij,ij->i", (rx - r_x_ref) @ ops.Sigma1.T, x - x_ref)
    sz = np.einsum("ij,ij->i", rz - r_z_ref, z - z_ref) * cfg.lam_z
    dx0 = trace.initial.x - x_ref
    dz0 = trace.initial.z - z_ref
    D = float(dx0 @ ops.Sigma1 @ dx0 + cfg.lam_z * dz0 @ dz0)
    kk = _counts(len(trace))
    return D / (2.0 * kk) + (np.cumsum(eg) + np.cumsum(eh) - sx - sz) / kk


def f_running_average(trace: Trace, problem: ProblemSpec) -> np.ndarray:
    """``f`` evaluated at the running-average iterate (the convex-case left-hand side)."""
    kk = _counts(len(trace))[:, None]
    xa = np.cumsum(trace.stack("x"), axis=0) / kk
    za = np.cumsum(trace.stack("z"), axis=0) / kk
    return np.array([problem.objective(a, b) for a, b in zip(xa, za)])


def empirical_probability(gap, bound, gamma: float) -> VerificationReport:
    """Fraction of iterations whose suboptimality lies strictly below the bound."""
    gap = np.asarray(gap, dtype=float)
    bound = np.asarray(bound, dtype=float)
    if gap.shape != bound.shape:
        raise ValueError(f"length mismatch: {gap.shape} vs {bound.shape}")
    ok = gap < bound
    N = gap.size
    p = float(np.count_nonzero(ok)) / N if N else None
    return VerificationReport(N, gamma, p, p_lower(gamma, 4), p_lower(gamma, 2), ok)


def p_lower(gamma: float, factor: int = 4) -> float:
    return 1.0 - factor * math.exp(-gamma * gamma / 2.0)


def hoeffding_sum_bound(k: int, eps0: float, gamma: float) -> float:
    """Slack ``gamma*sqrt(k+1)*eps0/2`` on a sum of ``k+1`` bounded prox errors."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if eps0 < 0:
        raise ValueError("eps0 must be nonnegative")
    return gamma * math.sqrt(k + 1) * eps0 / 2.0
