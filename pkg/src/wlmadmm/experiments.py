"""Synthetic problem generators, the end-to-end experiment and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import certify, perturb
from .certify import GAMMA_SMALL
from .engine import AdmmConfig, ProblemSpec, precompute, reference_solution, run
from .numerics import SeededRng, spectral_norm
from .perturb import ErrorModelSpec
from .prox import L1, KSupportSq, L1Affine, QuadraticLS

CSV_COLUMNS = ("k", "f_gap", "lhs_avg", "bound_free", "bound_det", "bound_prob",
               "eps_g", "eps_h", "primal_res", "dual_res")
P3_MARGIN = 0.05


class ExperimentError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


def _data(m, n, seed, margin):
    rng = SeededRng(seed)
    A = rng.normal((m, n))
    A = A / (spectral_norm(A) * (1.0 + margin))
    b = rng.normal(m)
    return A, b


def constraint_scale(rho: float, lam_x: float = 1.0, lam_z: float = 1.0,
                     margin: float = P3_MARGIN) -> float:
    """Scale ``s`` for the consensus constraint ``s*x - s*z = 0``.

    With ``A = s*I`` and ``B = -s*I`` the proximal-matrix condition reads
    ``s^2 < lam*min(lam_x, lam_z)``; ``s`` sits a relative ``margin`` below it.
    """
    return math.sqrt(min(lam_x, lam_z) / rho) / (1.0 + margin)


def _consensus(n, s):
    return s * np.eye(n), -s * np.eye(n), np.zeros(n)


def gen_lasso(m: int = 500, n: int = 100, seed: int = 0, rho: float = 1.2,
              margin: float = P3_MARGIN) -> ProblemSpec:
    """``||Ax - b||^2 + ||z||_1`` subject to ``x = z``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    A, b = _data(m, n, seed, margin)
    s = constraint_scale(rho, margin=margin)
    Ac, Bc, c = _consensus(n, s)
    return ProblemSpec(QuadraticLS(A, b), L1(1.0), Ac, Bc, c, name="lasso",
                       meta={"m": m, "n": n, "seed": seed, "constraint_scale": s,
                             "data_scale_margin": margin})


def gen_ksupp(m: int = 500, n: int = 100, k_supp: int = 20, lambda_reg: float = 1.0,
              seed: int = 0, rho: float = 1.2, margin: float = P3_MARGIN) -> ProblemSpec:
    """``0.5*||Ax - b||_1 + (lambda_reg/2)*ksupport(z)^2`` subject to ``x = z``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    if not 1 <= k_supp <= n:
        raise ValueError(f"k_supp must lie in [1, {n}], got {k_supp}")
    A, b = _data(m, n, seed, margin)
    s = constraint_scale(rho, margin=margin)
    Ac, Bc, c = _consensus(n, s)
    return ProblemSpec(L1Affine(A, b, 0.5), KSupportSq(k_supp, lambda_reg), Ac, Bc, c,
                       name="ksupp",
                       meta={"m": m, "n": n, "seed": seed, "k_supp": k_supp,
                             "lambda_reg": lambda_reg, "constraint_scale": s,
                             "data_scale_margin": margin})


@dataclass
class ExperimentConfig:
    experiment: str = "lasso"
    m: int = 500
    n: int = 100
    delta: float = 0.0
    skip: int = 1
    inner_tol: float | None = None
    gamma: float = GAMMA_SMALL
    iters: int = 3000
    seed: int = 0
    abstol: float = 1e-6
    reltol: float = 1e-6
    rho: float = 1.2
    lam_x: float = 1.0
    lam_z: float = 1.0
    k_supp: int = 20
    lambda_reg: float = 1.0
    eps0: float | None = None
    ref_iters: int | None = None
    out: str | None = None

    def __post_init__(self):
        if self.experiment not in ("lasso", "ksupp"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.iters < 0:
            raise ValueError("iters must be nonnegative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")

    def problem(self) -> ProblemSpec:
        if self.experiment == "lasso":
            return gen_lasso(self.m, self.n, self.seed, self.rho)
        return gen_ksupp(self.m, self.n, self.k_supp, self.lambda_reg, self.seed, self.rho)

    def admm(self) -> AdmmConfig:
        return AdmmConfig(1.0 / self.rho, self.lam_x, self.lam_z, None,
                          self.abstol, self.reltol, self.iters, self.seed)

    def error_model(self) -> ErrorModelSpec:
        return ErrorModelSpec(self.delta, self.skip, self.inner_tol, self.eps0)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d


@dataclass
class RunReport:
    config: dict
    rows: list[dict]
    summary: dict
    # not serialized: the full objects, handy for further checks
    extras: dict = field(default_factory=dict, repr=False)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Reference solve, perturbed shadow run, bound evaluation and summary."""
    try:
        problem = cfg.problem()
        admm = cfg.admm()
        ops = precompute(problem, admm)
    except Exception as exc:
        raise ExperimentError("setup", exc) from exc
    try:
        ref = reference_solution(problem, admm, cfg.ref_iters)
    except Exception as exc:
        raise ExperimentError("reference", exc) from exc
    model = cfg.error_model()
    try:
        trace = run(problem, admm, model, mode="shadow", ops=ops)
    except Exception as exc:
        raise ExperimentError("run", exc) from exc
    try:
        return assemble_report(cfg, problem, admm, ops, ref, trace, model)
    except Exception as exc:
        raise ExperimentError("certify", exc) from exc


def assemble_report(cfg, problem, admm, ops, ref, trace, model) -> RunReport:
    N = len(trace)
    gap = certify.f_gap(trace, ref)
    D0 = certify.initial_distance(trace, ref, ops, admm)
    if N:
        eps0 = perturb.eps0_estimate(model, trace)
        lhs = certify.lhs_running(trace, problem, admm, ref)
        free = certify.bound_free(N, D0)
        det = certify.bound_deterministic(trace, ref, ops, admm, "nonconvex")
        prob = certify.bound_probabilistic(trace, ref, ops, admm, cfg.gamma, eps0,
                                           "nonconvex", model.mean_eps)
    else:
        eps0 = model.eps0 if model.eps0 is not None else 0.0
        lhs = free = det = prob = np.zeros(0)
    ver = certify.empirical_probability(gap, prob, cfg.gamma)
    cols = {
        "f_gap": gap, "lhs_avg": lhs, "bound_free": free, "bound_det": det,
        "bound_prob": prob, "eps_g": trace.series("eps_g"), "eps_h": trace.series("eps_h"),
        "primal_res": trace.series("primal_res"), "dual_res": trace.series("dual_res"),
    }
    rows = [{"k": k, **{c: float(cols[c][k]) for c in CSV_COLUMNS[1:]}} for k in range(N)]
    summary = {
        **ver.summary(),
        "eps0": float(eps0),
        "eps0_source": "configured" if model.eps0 is not None else "empirical",
        "D0": D0,
        "f_star": ref.f_star,
        "error_model": model.variant,
        "converged": trace.converged,
        "bound_violations": int(np.count_nonzero(lhs > det)),
        "constraint_scale": problem.meta.get("constraint_scale"),
        "data_scale": "A / (||A|| * (1 + %g))" % problem.meta.get("data_scale_margin"),
        "reference_iterations": ref.provenance.get("iterations"),
    }
    config = {**cfg.echo(), "error_model": model.variant}
    return RunReport(config, rows, summary,
                     {"trace": trace, "ref": ref, "ops": ops, "problem": problem,
                      "admm": admm, "lhs": lhs})


# ---------------------------------------------------------------------------
# report files


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def report_json(report: RunReport) -> str:
    doc = {"config": report.config, "rows": report.rows, "summary": report.summary}
    return json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n"


def write_report(report: RunReport, path, fmt: str = "csv") -> list[Path]:
    """Write the CSV rows and/or the JSON document; returns the written paths."""
    path = Path(path)
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    written = []
    if fmt in ("csv", "both"):
        p = path if fmt == "csv" else path.with_suffix(".csv")
        p.write_text(report_csv(report), encoding="utf-8")
        written.append(p)
    if fmt in ("json", "both"):
        p = path if fmt == "json" else path.with_suffix(".json")
        p.write_text(report_json(report), encoding="utf-8")
        written.append(p)
    return written


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        data = [list(map(float, row)) for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return {c: arr[:, i] for i, c in enumerate(CSV_COLUMNS)}


def verify_csv(path, gamma: float) -> certify.VerificationReport:
    """Recompute the empirical probability from a written report."""
    cols = read_csv(path)
    return certify.empirical_probability(cols["f_gap"], cols["bound_prob"], gamma)
