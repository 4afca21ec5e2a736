"""Scaled proximal WLM-ADMM with a shadow exact pass for error measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import perturb
from .numerics import NotPositiveDefiniteError, SeededRng, SpdSolver, spectral_norm
from .perturb import ErrorModelSpec
from .prox import REFERENCE_TOL, ProxTerm

MACHINE_EPS_TOL = 2.2204e-16


class AssumptionViolation(ValueError):
    """The proximal-matrix condition ``lam * lam_x > ||A^T L A||`` (or the z analogue) fails."""


class NumericalFailure(RuntimeError):
    """A non-finite iterate or a failed prox evaluation inside a run."""

    def __init__(self, k, message):
        super().__init__(f"iteration {k}: {message}")
        self.k = k


@dataclass
class ProblemSpec:
    """``minimize g(x) + h(z)  subject to  A x + B z = c``."""

    g: ProxTerm
    h: ProxTerm
    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        p = self.c.size
        if self.A.shape[0] != p or self.B.shape[0] != p:
            raise ValueError("constraint matrices and c disagree on the row count")

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.c.size

    def objective(self, x, z) -> float:
        return self.g.value(x) + self.h.value(z)


@dataclass
class AdmmConfig:
    lam: float
    lam_x: float = 1.0
    lam_z: float = 1.0
    L: np.ndarray | None = None
    abstol: float = 1e-6
    reltol: float = 1e-6
    max_iter: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0 or self.lam_x <= 0 or self.lam_z <= 0:
            raise ValueError("lam, lam_x and lam_z must be positive")
        if self.abstol < 0 or self.reltol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    @property
    def rho(self):
        return 1.0 / self.lam

    def weight(self, p):
        return np.eye(p) if self.L is None else np.asarray(self.L, dtype=float)

    def echo(self) -> dict:
        return {
            "lam": self.lam, "lam_x": self.lam_x, "lam_z": self.lam_z,
            "L": "identity" if self.L is None else np.asarray(self.L).tolist(),
            "abstol": self.abstol, "reltol": self.reltol,
            "max_iter": self.max_iter, "seed": self.seed,
        }


@dataclass
class PrecomputedOperators:
    Sigma1: np.ndarray
    Sigma2: np.ndarray
    AtL: np.ndarray
    BtL: np.ndarray
    L: np.ndarray
    norm_AtLA: float
    norm_BtLB: float
    # largest eigenvalue of Sigma1^T Sigma1
    sigma1_lmax: float


def precompute(problem: ProblemSpec, cfg: AdmmConfig,
               allow_boundary: bool = False) -> PrecomputedOperators:
    """Proximal matrices and weighted operators, after checking the proximal-matrix condition.

    ``allow_boundary`` accepts equality up to rounding, where Sigma1/Sigma2 are
    only positive semidefinite and the scheme reduces to plain scaled ADMM.
    """
    A, B = problem.A, problem.B
    L = cfg.weight(problem.p)
    if L.shape != (problem.p, problem.p):
        raise ValueError(f"L must be {problem.p}x{problem.p}")
    try:
        SpdSolver(L)
    except NotPositiveDefiniteError as exc:
        raise AssumptionViolation("L is not positive definite") from exc
    AtL, BtL = A.T @ L, B.T @ L
    AtLA, BtLB = AtL @ A, BtL @ B
    nA, nB = spectral_norm(AtLA), spectral_norm(BtLB)
    slack = 1e-12 * max(nA, nB, 1.0) if allow_boundary else 0.0
    if not cfg.lam * cfg.lam_x + slack > nA:
        raise AssumptionViolation(
            f"lam*lam_x = {cfg.lam * cfg.lam_x!r} does not exceed ||A^T L A|| = {nA!r}")
    if not cfg.lam * cfg.lam_z + slack > nB:
        raise AssumptionViolation(
            f"lam*lam_z = {cfg.lam * cfg.lam_z!r} does not exceed ||B^T L B|| = {nB!r}")
    Sigma1 = cfg.lam_x * np.eye(problem.n) - AtLA / cfg.lam
    Sigma2 = cfg.lam_z * np.eye(problem.m) - BtLB / cfg.lam
    Sigma1 = 0.5 * (Sigma1 + Sigma1.T)
    Sigma2 = 0.5 * (Sigma2 + Sigma2.T)
    for name, S in (("Sigma1", Sigma1), ("Sigma2", Sigma2)):
        if allow_boundary:
            if np.linalg.eigvalsh(S).min() < -slack:
                raise AssumptionViolation(f"{name} is not positive semidefinite")
            continue
        try:
            SpdSolver(S)
        except NotPositiveDefiniteError as exc:
            raise AssumptionViolation(f"{name} is not positive definite") from exc
    return PrecomputedOperators(
        Sigma1, Sigma2, AtL, BtL, L, nA, nB,
        float(np.max(np.linalg.eigvalsh(Sigma1.T @ Sigma1))),
    )


@dataclass
class IterationRecord:
    """State after iteration ``k`` (``k = 0`` is the initial point)."""

    k: int
    x: np.ndarray
    z: np.ndarray
    v: np.ndarray
    u: np.ndarray | None = None
    f_value: float = math.nan
    eps_g: float = 0.0
    eps_h: float = 0.0
    r_x: np.ndarray | None = None
    r_z: np.ndarray | None = None
    rx_norm: float | None = None
    Sigma1_rx_norm: float | None = None
    rz_norm: float | None = None
    primal_res: float = math.nan
    dual_res: float = math.nan
    inner_g: int = 0
    inner_h: int = 0


@dataclass
class Trace:
    initial: IterationRecord
    records: list[IterationRecord]
    mode: str
    model: ErrorModelSpec
    converged: bool = False

    def __len__(self):
        return len(self.records)

    def series(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def stack(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


class _RunState:
    """Per-run mutable companions: RNG and warm starts for the iterative prox."""

    def __init__(self, rng):
        self.rng = rng
        self.warm = {}


def initial_point(problem: ProblemSpec, rng: SeededRng) -> IterationRecord:
    x0 = rng.normal(problem.n)
    z0 = rng.normal(problem.m)
    v0 = np.zeros(problem.p)
    return IterationRecord(0, x0, z0, v0, f_value=problem.objective(x0, z0))


def _prox_step(key, term, center, scale, model, mode, st: _RunState):
    exact_needed = mode == "shadow" or model.delta > 0
    exact = None
    if exact_needed or model.is_exact_for(term):
        exact = term.prox(center, scale, warm=st.warm.get((key, "exact")))
        st.warm[(key, "exact")] = exact.state
    if model.is_exact_for(term):
        return exact, exact
    approx = perturb.apply(model, term, center, scale, st.rng, exact=exact,
                           warm=st.warm.get((key, "approx")))
    st.warm[(key, "approx")] = approx.state
    return approx, exact


def step(state: IterationRecord, ops: PrecomputedOperators, problem: ProblemSpec,
         cfg: AdmmConfig, model: ErrorModelSpec, mode: str, st: _RunState) -> IterationRecord:
    """One WLM-ADMM iteration from ``state``."""
    if mode not in ("fast", "shadow"):
        raise ValueError(f"unknown mode {mode!r}")
    A, B, c = problem.A, problem.B, problem.c
    lam = cfg.lam
    k = state.k + 1
    x, z, v = state.x, state.z, state.v

    try:
        gamma1 = ops.Sigma1 @ x - ops.AtL @ (B @ z - c + v) / lam
        xa, xe = _prox_step("g", problem.g, gamma1 / cfg.lam_x, cfg.lam_x, model, mode, st)
        x1 = xa.point
        Ax1 = A @ x1
        gamma2 = ops.Sigma2 @ z - ops.BtL @ (Ax1 - c + v) / lam
        za, ze = _prox_step("h", problem.h, gamma2 / cfg.lam_z, cfg.lam_z, model, mode, st)
    except Exception as exc:
        raise NumericalFailure(k, f"{type(exc).__name__}: {exc}") from exc
    z1 = za.point
    Bz1 = B @ z1
    v1 = v + (Ax1 + Bz1 - c)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(z1)) and np.all(np.isfinite(v1))):
        raise NumericalFailure(k, "non-finite iterate")
    u1 = v1 + B @ (z - z1)

    rec = IterationRecord(k, x1, z1, v1, u1, problem.objective(x1, z1),
                          eps_g=xa.reported_eps, eps_h=za.reported_eps,
                          inner_g=xa.inner_iterations, inner_h=za.inner_iterations)
    if mode == "shadow":
        rec.r_x = xe.point - x1
        rec.r_z = ze.point - z1
        rec.rx_norm = float(np.linalg.norm(rec.r_x))
        rec.Sigma1_rx_norm = float(np.linalg.norm(ops.Sigma1 @ rec.r_x))
        rec.rz_norm = float(np.linalg.norm(rec.r_z))
    elif xe is None or ze is None:
        # fast mode without a reference: prox errors are unmeasured
        if xe is None:
            rec.eps_g = math.nan
        if ze is None:
            rec.eps_h = math.nan
    rec.primal_res = float(np.linalg.norm(Ax1 + Bz1 - c))
    rec.dual_res = float(np.linalg.norm(ops.AtL @ (B @ (z1 - z))) / lam)
    return rec


def _stopping(rec, problem, ops, cfg):
    Ax, Bz = problem.A @ rec.x, problem.B @ rec.z
    eps_pri = math.sqrt(problem.p) * cfg.abstol + cfg.reltol * max(
        np.linalg.norm(Ax), np.linalg.norm(Bz), np.linalg.norm(problem.c))
    eps_dual = math.sqrt(problem.n) * cfg.abstol + cfg.reltol * float(
        np.linalg.norm(ops.AtL @ rec.v)) / cfg.lam
    return rec.primal_res < eps_pri and rec.dual_res < eps_dual


def run(problem: ProblemSpec, cfg: AdmmConfig, model: ErrorModelSpec | None = None,
        mode: str = "shadow", ops: PrecomputedOperators | None = None,
        start: tuple | None = None) -> Trace:
    """Iterate from a seeded random start until ``max_iter`` or the residual test passes.

    The seed drives both the initial point and the injected noise, in that
    order, so runs sharing a seed share their starting point.
    """
    model = model or ErrorModelSpec()
    ops = ops or precompute(problem, cfg)
    rng = SeededRng(cfg.seed)
    init = initial_point(problem, rng)
    if start is not None:
        x0, z0, v0 = (np.asarray(a, dtype=float).copy() for a in start)
        init = IterationRecord(0, x0, z0, v0, f_value=problem.objective(x0, z0))
    st = _RunState(rng)
    records = []
    state = init
    converged = False
    for _ in range(cfg.max_iter):
        state = step(state, ops, problem, cfg, model, mode, st)
        records.append(state)
        if _stopping(state, problem, ops, cfg):
            converged = True
            break
    return Trace(init, records, mode, model, converged)


def reference_solution(problem: ProblemSpec, cfg: AdmmConfig, max_iter: int | None = None):
    """High-accuracy solution from the error-free scheme at machine-epsilon tolerances."""
    from .certify import ReferenceSolution

    iters = max(3000, cfg.max_iter) if max_iter is None else max(3000, max_iter)
    ref_cfg = AdmmConfig(cfg.lam, cfg.lam_x, cfg.lam_z, cfg.L, MACHINE_EPS_TOL,
                         MACHINE_EPS_TOL, iters, cfg.seed)
    trace = run(problem, ref_cfg, ErrorModelSpec(inner_tol=REFERENCE_TOL), mode="fast")
    last = trace.records[-1] if trace.records else trace.initial
    return ReferenceSolution(
        last.x.copy(), last.z.copy(), problem.objective(last.x, last.z),
        {"iterations": len(trace), "converged": trace.converged, **ref_cfg.echo()},
    )
