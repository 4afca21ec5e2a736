"""Computational-error sources applied to prox evaluations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SeededRng, sample_truncated_gaussian
from .prox import REFERENCE_TOL, KSupportSq, L1Affine, ProxResult, ProxTerm, measure_eps


@dataclass(frozen=True)
class ErrorModelSpec:
    """Which errors to inject into the prox steps.

    The knobs compose: ``delta`` perturbs every prox output, ``skip``
    perforates k-support prox evaluations and ``inner_tol`` terminates
    iterative prox solves early.  Terms a knob does not apply to are left
    exact.  ``eps0=None`` means the bound on the prox errors is taken from
    the observed trace.
    """

    delta: float = 0.0
    skip: int = 1
    inner_tol: float | None = None
    eps0: float | None = None
    mean_eps: float | None = None

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.skip < 1:
            raise ValueError("skip must be >= 1")
        if self.inner_tol is not None and self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.eps0 is not None and self.eps0 < 0:
            raise ValueError("eps0 must be nonnegative")

    @classmethod
    def none(cls, **kw):
        return cls(**kw)

    @classmethod
    def inject_gaussian(cls, delta, **kw):
        return cls(delta=delta, **kw)

    @classmethod
    def perforate(cls, skip, **kw):
        return cls(skip=skip, **kw)

    @classmethod
    def inner(cls, tol, **kw):
        return cls(inner_tol=tol, **kw)

    @property
    def variant(self) -> str:
        parts = []
        if self.delta > 0:
            parts.append(f"inject_gaussian(delta={self.delta:g})")
        if self.skip > 1:
            parts.append(f"perforate(skip={self.skip})")
        if self.inner_tol is not None and self.inner_tol > REFERENCE_TOL:
            parts.append(f"inner_tol({self.inner_tol:g})")
        return "+".join(parts) or "none"

    def is_exact_for(self, term: ProxTerm) -> bool:
        """True when this model leaves ``term``'s prox untouched."""
        if self.delta > 0:
            return False
        if isinstance(term, KSupportSq) and self.skip > 1:
            return False
        if isinstance(term, L1Affine) and self.inner_tol is not None:
            return self.inner_tol <= REFERENCE_TOL
        return True


def apply(model: ErrorModelSpec, term: ProxTerm, center, scale, rng: SeededRng,
          exact: ProxResult | None = None, warm=None) -> ProxResult:
    """Evaluate ``term``'s prox at ``center`` under ``model``.

    ``exact`` is the reference prox result for the same center.  It is required
    for Gaussian injection and, when given, is used to fill ``reported_eps``.
    """
    if model.is_exact_for(term):
        if exact is None:
            exact = term.prox(center, scale, warm=warm)
        return ProxResult(exact.point, 0.0, exact.inner_iterations, exact.state)

    if model.delta > 0:
        if exact is None:
            exact = term.prox(center, scale, warm=warm)
        # perturbation bounded componentwise by delta * |exact component|
        noise = sample_truncated_gaussian(rng, model.delta * np.abs(exact.point))
        point = exact.point + noise
        eps = measure_eps(term, point, exact.point, center, scale)
        return ProxResult(point, eps, exact.inner_iterations, exact.state)

    res = term.prox(center, scale, skip=model.skip, inner_tol=model.inner_tol, warm=warm)
    if exact is not None:
        res.reported_eps = measure_eps(term, res.point, exact.point, center, scale)
    else:
        res.reported_eps = float("nan")
    return res


def eps0_estimate(model: ErrorModelSpec, trace) -> float:
    """Almost-sure bound on the prox errors: configured, else the observed maximum."""
    if model.eps0 is not None:
        return float(model.eps0)
    records = trace.records if hasattr(trace, "records") else trace
    if not records:
        raise ValueError("trace is empty")
    eg = np.array([r.eps_g for r in records], dtype=float)
    eh = np.array([r.eps_h for r in records], dtype=float)
    if np.any(np.isnan(eg)) or np.any(np.isnan(eh)):
        raise ValueError("trace has unmeasured prox errors; run it in shadow mode")
    return float(max(eg.max(), eh.max()))
