"""Closed-form RD references, the Blahut-Arimoto oracle, and the
conditional-entropy quadrature oracle."""

import numpy as np
import pytest
from scipy.special import ndtr

from wzsr import bounds, piecewise, sampling
from wzsr.errors import AccuracyError, ContractError, DomainError


class TestClosedForms:
    def test_wz_zero_rate_at_noise_floor(self):
        assert bounds.wz_rate(0.1, 0.1) == 0.0

    def test_wz_one_bit_at_quarter(self):
        assert bounds.wz_rate(0.025, 0.1) == pytest.approx(1.0)

    def test_no_side_info_examples(self):
        assert bounds.rate_no_side_info(1.1, 0.1) == 0.0
        assert bounds.rate_no_side_info(0.275, 0.1) == pytest.approx(1.0)

    def test_gap_is_half_log_ratio(self):
        # For D <= noise variance both curves are active; their gap is constant.
        for var in (0.1, 0.01):
            for d in np.geomspace(var / 100, var, 7):
                gap = bounds.rate_no_side_info(d, var) - bounds.wz_rate(d, var)
                assert gap == pytest.approx(0.5 * np.log2((1 + var) / var), abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            bounds.wz_rate(0.0, 0.1)
        with pytest.raises(DomainError):
            bounds.wz_rate(0.1, 0.0)
        with pytest.raises(DomainError):
            bounds.rate_no_side_info(-1.0, 0.1)

    def test_wz_distortion_is_inverse(self):
        r = np.array([0.25, 1.0, 2.5])
        d = bounds.wz_distortion(r, 0.1)
        np.testing.assert_allclose(bounds.wz_rate(d, 0.1), r, atol=1e-12)

    def test_monotone_and_convex_on_grid(self):
        d = np.linspace(1e-4, 0.1, 400)
        r = bounds.wz_rate(d, 0.1)
        assert np.all(np.diff(r) <= 1e-15)  # nonincreasing in D
        second = np.diff(r, 2)
        assert np.all(second >= -1e-10)  # convex


class TestBlahutArimoto:
    def test_matches_closed_form_quick(self):
        # The full 10-point x 2-noise-level sweep runs in the acceptance
        # suite; this is a fast 3-point sanity check.
        for var in (0.1, 0.01):
            targets = var * 2.0 ** (-2 * np.array([0.5, 1.25, 2.0]))
            r_ba, d_ba = bounds.blahut_arimoto_curve(var, targets)
            np.testing.assert_allclose(r_ba, bounds.wz_rate(d_ba, var), atol=0.01)

    def test_achieved_distortion_near_target(self):
        targets = 0.1 * 2.0 ** (-2 * np.array([0.5, 1.5]))
        _, d_ba = bounds.blahut_arimoto_curve(0.1, targets)
        np.testing.assert_allclose(d_ba, targets, rtol=0.05)

    def test_no_side_info_curve_via_source_variance(self):
        var = 0.1
        targets = (1 + var) * 2.0 ** (-2 * np.array([0.75, 1.5]))
        r_ba, d_ba = bounds.blahut_arimoto_curve(1 + var, targets)
        np.testing.assert_allclose(r_ba, bounds.rate_no_side_info(d_ba, var), atol=0.01)


def sign_encoder(xs):
    return (np.asarray(xs) < 0).astype(np.int64).reshape(-1, 1)


def two_stage_nested_encoder(xs):
    """Stage 1: sign; stage 2: alternating half-unit bins (NSQ-like)."""
    xs = np.asarray(xs)
    m1 = (xs < 0).astype(np.int64)
    m2 = (np.floor(xs / 0.5) % 2).astype(np.int64)
    return np.stack([m1, m2], axis=1)


class TestConditionalEntropyOracle:
    def test_constant_encoder_zero_bits(self):
        const = lambda xs: np.zeros((len(np.atleast_1d(xs)), 2), dtype=np.int64)
        assert bounds.oracle_conditional_entropy(const, 1, 0.1) == 0.0
        assert bounds.oracle_conditional_entropy(const, 2, 0.1) == 0.0

    def test_sign_quantizer_low_noise_limit(self):
        # y almost determines the sign of x as the noise vanishes.
        h = bounds.oracle_conditional_entropy(sign_encoder, 1, 1e-6)
        assert 0.0 < h < 0.005

    def test_sign_quantizer_vs_monte_carlo(self):
        # Independent oracle: H(M1|Y) = E_y[h_b(Phi(-y/sigma))], MC over 1e7 y.
        h_quad = bounds.oracle_conditional_entropy(sign_encoder, 1, 1.0)
        y = sampling.standard_normal(sampling.make_stream(123), 10_000_000)
        p = ndtr(-y)
        hb = -(p * np.log2(np.maximum(p, 1e-300))
               + (1 - p) * np.log2(np.maximum(1 - p, 1e-300)))
        assert abs(h_quad - hb.mean()) < 0.005

    def test_grid_refinement_invariance(self):
        base = bounds.GridSpec()
        fine = bounds.GridSpec(panels=base.panels * 2)
        h1 = bounds.oracle_conditional_entropy(two_stage_nested_encoder, 2, 0.05, grid=base)
        h2 = bounds.oracle_conditional_entropy(two_stage_nested_encoder, 2, 0.05, grid=fine)
        assert abs(h1 - h2) < 1e-3

    def test_chain_rule_consistency(self):
        # Sum of stage entropies equals the joint prefix entropy.
        spec = bounds.GridSpec()
        h1 = bounds.oracle_conditional_entropy(two_stage_nested_encoder, 1, 0.1, grid=spec)
        h2 = bounds.oracle_conditional_entropy(two_stage_nested_encoder, 2, 0.1, grid=spec)
        assert h1 > 0 and h2 > 0
        assert h1 + h2 <= 2.0 + 1e-9  # <= log2(4) total

    def test_coarse_grid_raises_accuracy_error(self):
        # One 2-node panel over [-6, 6] badly misintegrates the broad
        # sigma=1 integrand, and the refinement check sees it move.
        grid = bounds.GridSpec(panels=1, nodes_per_panel=2)
        with pytest.raises(AccuracyError):
            bounds.oracle_conditional_entropy(sign_encoder, 1, 1.0, grid=grid)

    def test_span_contract(self):
        with pytest.raises(ContractError):
            bounds.oracle_conditional_entropy(
                sign_encoder, 1, 0.1, grid=bounds.GridSpec(y_span_sigmas=3.0))

    def test_stage_out_of_range(self):
        with pytest.raises(ContractError):
            bounds.oracle_conditional_entropy(sign_encoder, 2, 0.1)


class TestPiecewise:
    def test_transitions_of_known_step_map(self):
        cuts = np.array([-1.3, -0.25, 0.4, 1.7])

        def codes(xs):
            return np.searchsorted(cuts, np.asarray(xs))

        found = piecewise.stage_transitions(codes, -3.0, 3.0, 2048, tol=1e-10)
        np.testing.assert_allclose(found, cuts, atol=1e-8)

    def test_resolution_contract(self):
        with pytest.raises(ContractError):
            piecewise.scan_codes(lambda x: x, 0, 1, 1)

    def test_no_transitions(self):
        found = piecewise.stage_transitions(lambda xs: np.zeros(len(xs), dtype=int), -1, 1, 64)
        assert len(found) == 0
