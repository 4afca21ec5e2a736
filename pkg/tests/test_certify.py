import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlmadmm import certify
from wlmadmm.certify import (
    GAMMA_LARGE,
    GAMMA_SMALL,
    bound_deterministic,
    bound_free,
    bound_general,
    bound_probabilistic,
    empirical_probability,
    hoeffding_sum_bound,
    initial_distance,
    lhs_general,
    lhs_running,
    p_lower,
)
from wlmadmm.engine import AdmmConfig, precompute, reference_solution, run
from wlmadmm.experiments import gen_lasso
from wlmadmm.perturb import ErrorModelSpec


@pytest.fixture(scope="module")
def setup():
    prob = gen_lasso(80, 12, seed=2)
    cfg = AdmmConfig(1 / 1.2, abstol=0.0, reltol=0.0, max_iter=200, seed=2)
    ops = precompute(prob, cfg)
    ref = reference_solution(prob, cfg)
    noisy = run(prob, cfg, ErrorModelSpec.inject_gaussian(0.5), ops=ops)
    exact = run(prob, cfg, ErrorModelSpec.none(), ops=ops)
    return prob, cfg, ops, ref, noisy, exact


def loop_bound_det(trace, ref, ops, cfg):
    """Per-k recomputation with explicit loops."""
    out = []
    x0, z0 = trace.initial.x, trace.initial.z
    D0 = (x0 - ref.x_star) @ ops.Sigma1 @ (x0 - ref.x_star) + cfg.lam_z * np.sum((z0 - ref.z_star) ** 2)
    sg = sh = 0.0
    for k, rec in enumerate(trace.records):
        sg += rec.eps_g
        sh += rec.eps_h
        px = np.linalg.norm(ops.Sigma1 @ rec.r_x) * np.linalg.norm(rec.x - ref.x_star)
        pz = np.linalg.norm(rec.r_z) * np.linalg.norm(rec.z - ref.z_star)
        out.append(D0 / (2 * (k + 1)) + (sg + sh + px + pz) / (k + 1))
    return np.array(out)


def loop_lhs(trace, prob, cfg, ref):
    out, acc = [], 0.0
    prev_v = trace.initial.v
    for k, rec in enumerate(trace.records):
        acc += prob.objective(rec.x, rec.z) - ref.f_star + rec.u @ (rec.v - prev_v) / cfg.lam
        prev_v = rec.v
        out.append(acc / (k + 1))
    return np.array(out)


class TestSeries:
    def test_bound_free_rate(self):
        b = bound_free(3000, 7.5)
        kk = np.arange(1, 3001)
        np.testing.assert_allclose(b * kk, 3.75, rtol=1e-12)

    def test_bound_free_empty(self):
        assert bound_free(0, 1.0).size == 0

    def test_initial_distance_hand_value(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        dx = noisy.initial.x - ref.x_star
        dz = noisy.initial.z - ref.z_star
        expected = dx @ ops.Sigma1 @ dx + dz @ dz
        assert initial_distance(noisy, ref, ops, cfg) == pytest.approx(expected, rel=1e-12)

    def test_deterministic_matches_loop_recomputation(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        np.testing.assert_allclose(bound_deterministic(noisy, ref, ops, cfg),
                                   loop_bound_det(noisy, ref, ops, cfg), rtol=1e-12)

    def test_lhs_matches_loop_recomputation(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        np.testing.assert_allclose(lhs_running(noisy, prob, cfg, ref),
                                   loop_lhs(noisy, prob, cfg, ref), rtol=1e-10, atol=1e-12)

    def test_zero_error_collapse(self, setup):
        prob, cfg, ops, ref, _, exact = setup
        N = len(exact)
        free = bound_free(N, initial_distance(exact, ref, ops, cfg))
        np.testing.assert_allclose(bound_deterministic(exact, ref, ops, cfg), free, rtol=1e-12)
        np.testing.assert_allclose(
            bound_probabilistic(exact, ref, ops, cfg, GAMMA_SMALL, 0.0), free, rtol=1e-12)

    def test_deterministic_holds_for_injection(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        lhs = lhs_running(noisy, prob, cfg, ref)
        assert np.all(lhs <= bound_deterministic(noisy, ref, ops, cfg))

    def test_convex_variant_dominates(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        assert np.all(bound_deterministic(noisy, ref, ops, cfg, "convex")
                      >= bound_deterministic(noisy, ref, ops, cfg, "nonconvex") - 1e-12)

    def test_jensen(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        at_average = certify.f_running_average(noisy, prob) - ref.f_star
        averaged = np.cumsum(certify.f_gap(noisy, ref)) / np.arange(1, len(noisy) + 1)
        assert np.all(at_average <= averaged + 1e-12)

    def test_unknown_mode(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        with pytest.raises(ValueError):
            bound_deterministic(noisy, ref, ops, cfg, "concave")

    def test_nonconvex_needs_shadow(self, setup):
        prob, cfg, ops, ref, _, _ = setup
        fast = run(prob, AdmmConfig(1 / 1.2, max_iter=5), ErrorModelSpec.inject_gaussian(0.1),
                   mode="fast")
        with pytest.raises(ValueError, match="shadow"):
            bound_deterministic(fast, ref, ops, cfg)


class TestProbabilistic:
    def test_linear_in_gamma(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        b1 = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.3)
        b2 = bound_probabilistic(noisy, ref, ops, cfg, 2.0, 0.3)
        b3 = bound_probabilistic(noisy, ref, ops, cfg, 3.0, 0.3)
        np.testing.assert_allclose(b3 - b2, b2 - b1, rtol=1e-10)
        assert np.all(b2 > b1)

    def test_slack_term(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        b0 = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.0)
        b1 = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.5)
        kk = np.arange(1, len(noisy) + 1)
        np.testing.assert_allclose(b1 - b0, 0.5 / np.sqrt(kk), rtol=1e-10)

    def test_known_mean(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        a = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.0, known_mean=0.0)
        b = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.0, known_mean=0.25)
        np.testing.assert_allclose(b - a, 0.5, rtol=1e-12)

    def test_convex_doubles_products(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        prod = certify.residual_products(noisy, ref, ops, cfg, "convex")
        a = bound_probabilistic(noisy, ref, ops, cfg, 1.0, 0.0, "convex")
        kk = np.arange(1, len(noisy) + 1)
        mg, mh = certify.running_mean_eps(noisy)
        D0 = initial_distance(noisy, ref, ops, cfg)
        np.testing.assert_allclose(a, mg + mh + (D0 + 2 * prod) / (2 * kk), rtol=1e-12)

    @pytest.mark.parametrize("gamma,eps0", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1)])
    def test_invalid(self, setup, gamma, eps0):
        prob, cfg, ops, ref, noisy, _ = setup
        with pytest.raises(ValueError):
            bound_probabilistic(noisy, ref, ops, cfg, gamma, eps0)


class TestGeneral:
    def test_reference_pair_reproduces_lhs(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        np.testing.assert_allclose(lhs_general(noisy, prob, cfg, ref.x_star, ref.z_star),
                                   lhs_running(noisy, prob, cfg, ref), atol=1e-12)

    def test_holds_for_feasible_pairs(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        rng = np.random.default_rng(0)
        for _ in range(5):
            # the consensus constraint makes (w, w) feasible for any w
            w = ref.x_star + 0.3 * rng.normal(size=prob.n)
            lhs = lhs_general(noisy, prob, cfg, w, w)
            rhs = bound_general(noisy, prob, ops, cfg, w, w)
            assert np.all(lhs <= rhs + 1e-10)

    def test_rejects_infeasible_pair(self, setup):
        prob, cfg, ops, ref, noisy, _ = setup
        with pytest.raises(ValueError, match="infeasible"):
            bound_general(noisy, prob, ops, cfg, ref.x_star, ref.z_star + 1.0)


class TestEmpiricalProbability:
    def test_hand_example(self):
        rep = empirical_probability([0.1, 0.5, 0.2, 0.9], [0.2, 0.5, 0.3, 0.1], 1.0)
        assert rep.p_empirical == 0.5
        assert rep.satisfied.tolist() == [True, False, True, False]

    def test_empty(self):
        rep = empirical_probability([], [], GAMMA_SMALL)
        assert rep.N == 0 and rep.p_empirical is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            empirical_probability([1.0], [1.0, 2.0], 1.0)

    def test_lower_bounds(self):
        assert p_lower(GAMMA_SMALL, 4) == pytest.approx(0.0, abs=1e-15)
        assert p_lower(GAMMA_SMALL, 2) == pytest.approx(0.5, abs=1e-15)
        assert p_lower(GAMMA_LARGE, 4) == pytest.approx(1.0, abs=1e-15)

    @given(st.floats(0.1, 10), st.floats(0.1, 10))
    @settings(max_examples=50, deadline=None)
    def test_lower_bound_monotone(self, g1, g2):
        lo, hi = sorted((g1, g2))
        assert p_lower(lo) <= p_lower(hi)


class TestHoeffding:
    def test_value(self):
        assert hoeffding_sum_bound(3, 0.5, 2.0) == pytest.approx(1.0)

    def test_monte_carlo(self):
        rng = np.random.default_rng(0)
        k, eps0, trials = 99, 1.0, 10_000
        mu = eps0 / 2
        for gamma in (1.0, 2.0):
            x = rng.uniform(0, eps0, size=(trials, k + 1))
            exceed = x.sum(axis=1) > (k + 1) * mu + hoeffding_sum_bound(k, eps0, gamma)
            assert exceed.mean() <= 2 * math.exp(-gamma**2 / 2) + 0.01

    def test_invalid(self):
        with pytest.raises(ValueError):
            hoeffding_sum_bound(1, 1.0, 0.0)
