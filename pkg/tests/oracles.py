"""Independent reference implementations used only by the tests."""

import numpy as np
from scipy.optimize import minimize_scalar


def prox_quadratic_lstsq(A, b, y, scale):
    """argmin ||Ax - b||^2 + (scale/2)||x - y||^2 as one stacked least-squares solve."""
    n = A.shape[1]
    s = np.sqrt(scale / 2.0)
    M = np.vstack([A, s * np.eye(n)])
    rhs = np.concatenate([b, s * y])
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def prox_l1_scalar(y, tau):
    """Coordinatewise bounded scalar minimization of tau|p| + (1/2)(p - y)^2."""
    out = np.empty_like(y, dtype=float)
    for i, yi in enumerate(y):
        res = minimize_scalar(lambda p: tau * abs(p) + 0.5 * (p - yi) ** 2,
                              bounds=(-abs(yi) - 1.0, abs(yi) + 1.0), method="bounded",
                              options={"xatol": 1e-13})
        # the kink at zero is easy to miss for a derivative-free search
        cands = [res.x, 0.0]
        out[i] = min(cands, key=lambda p: tau * abs(p) + 0.5 * (p - yi) ** 2)
    return out


def prox_l1_affine_cvx(A, b, y, scale, weight):
    import cvxpy as cp

    x = cp.Variable(A.shape[1])
    obj = weight * cp.norm1(A @ x - b) + 0.5 * scale * cp.sum_squares(x - y)
    cp.Problem(cp.Minimize(obj)).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12,
                                       tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(x.value)


def _solve(prob):
    import cvxpy as cp

    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-13)


def ksupport_norm_variational(w, k):
    """||w||_k^2 = min over {0 <= theta <= 1, sum theta <= k} of sum w_i^2 / theta_i."""
    import cvxpy as cp

    w = np.asarray(w, dtype=float)
    theta = cp.Variable(w.size)
    obj = sum(cp.quad_over_lin(w[i], theta[i]) for i in range(w.size))
    prob = cp.Problem(cp.Minimize(obj), [theta <= 1, cp.sum(theta) <= k])
    _solve(prob)
    return float(np.sqrt(prob.value))


def prox_ksupport_variational(y, k, weight, scale=1.0):
    """Prox of (weight/2)||.||_k^2 through the variational form.

    For fixed theta the problem separates with minimizer
    p_i = scale*theta_i*y_i / (weight + scale*theta_i).  The remaining convex
    problem in theta over the capped simplex is solved by water-filling:
    each theta_i is a clipped function of the multiplier of sum(theta) <= k,
    found by bisection.
    """
    sign = np.sign(np.asarray(y, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))

    def theta_of(mu):
        t = (y * scale * np.sqrt(weight / (2.0 * mu)) - weight) / scale
        return np.clip(t, 0.0, 1.0)

    if y.size <= k or not np.any(y):
        theta = np.ones_like(y)
    else:
        lo, hi = 1e-300, 1.0
        while theta_of(hi).sum() > k:
            hi *= 2.0
        # bisection in log space down to adjacent floats
        for _ in range(3000):
            mid = np.sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                break
            if theta_of(mid).sum() > k:
                lo = mid
            else:
                hi = mid
        theta = theta_of(hi)
    p = scale * theta * y / (weight + scale * theta)
    return p * sign


def plain_admm_lasso(D, b, s, lam, x0, z0, v0, iters):
    """Textbook scaled ADMM for ||Dx - b||^2 + ||z||_1 s.t. s*x - s*z = 0.

    x-step: (2 D^T D + s^2/lam I) x = 2 D^T b + (s/lam)(s z - v)
    z-step: soft(x + v/s, lam/s^2)
    """
    n = D.shape[1]
    H = 2 * D.T @ D + (s * s / lam) * np.eye(n)
    x, z, v = x0.copy(), z0.copy(), v0.copy()
    out = []
    for _ in range(iters):
        x = np.linalg.solve(H, 2 * D.T @ b + (s / lam) * (s * z - v))
        t = x + v / s
        z = np.sign(t) * np.maximum(np.abs(t) - lam / (s * s), 0.0)
        v = v + s * x - s * z
        out.append((x.copy(), z.copy(), v.copy()))
    return out


def wlm_argmin_lasso(D, b, A, B, c, L, lam, lam_x, lam_z, x0, z0, v0, iters):
    """Linearized weighted ADMM for ||Dx - b||^2 + ||z||_1 s.t. Ax + Bz = c, argmin form.

    x+ = argmin g(x) + (1/2lam)||Ax + Bz - c + v||_L^2 + (1/2)||x - x_k||_S1^2
    z+ = argmin h(z) + (1/2lam)||Ax+ + Bz - c + v||_L^2 + (1/2)||z - z_k||_S2^2
    with S1 = lam_x I - A^T L A / lam and S2 = lam_z I - B^T L B / lam.
    """
    n, m = A.shape[1], B.shape[1]
    S1 = lam_x * np.eye(n) - A.T @ L @ A / lam
    S2 = lam_z * np.eye(m) - B.T @ L @ B / lam
    Hx = 2 * D.T @ D + A.T @ L @ A / lam + S1
    Hz = B.T @ L @ B / lam + S2
    dz = np.diag(Hz)
    assert np.allclose(Hz, np.diag(dz))
    x, z, v = x0.copy(), z0.copy(), v0.copy()
    out = []
    for _ in range(iters):
        x = np.linalg.solve(Hx, 2 * D.T @ b - A.T @ L @ (B @ z - c + v) / lam + S1 @ x)
        q = B.T @ L @ (A @ x - c + v) / lam - S2 @ z
        # separable: (dz/2) z^2 + q z + |z|
        t = -q / dz
        z = np.sign(t) * np.maximum(np.abs(t) - 1.0 / dz, 0.0)
        v = v + A @ x + B @ z - c
        out.append((x.copy(), z.copy(), v.copy()))
    return out
