"""Conjugate posteriors, the closed-form posterior CDF, and quantiles."""

import numpy as np
import pytest

from dsplim.bayes import (
    GammaPosteriors,
    PriorConfig,
    bayes_posterior_cdf,
    bayes_upper_limit,
    bayes_upper_limits_batch,
    conjugate_posteriors,
    prior_preset,
)
from dsplim.ds_limits import ChannelObservation, Dataset, channel_cdf_lower, dataset_limits
from dsplim.sampling import RngHandle
from dsplim.specfun import QuadratureConfig
from oracles import mc_posterior_ratio_cdf

CH = ChannelObservation(5, 10, 100, 33.0, 100.0)


class TestPresets:
    def test_preset_shapes(self):
        assert prior_preset("B1") == PriorConfig(1, 1, 1, "B1")
        assert prior_preset("B2").a_n == 2
        assert prior_preset("upper") == PriorConfig(2, 1, 1, "upper")
        assert prior_preset("lower") == PriorConfig(1, 2, 2, "lower")
        with pytest.raises(ValueError):
            prior_preset("B3")

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            PriorConfig(0.0, 1.0, 1.0)


class TestConjugatePosteriors:
    def test_paper_parameterization(self):
        post = conjugate_posteriors(CH, prior_preset("B1"))
        assert post.ln == (6, 1.0)
        assert post.lb == (11, pytest.approx(1 / 33))
        assert post.le == (101, pytest.approx(1 / 100))

    def test_all_zero_counts_b2(self):
        post = conjugate_posteriors(
            ChannelObservation(0, 0, 0, 2.0, 5.0), prior_preset("B2")
        )
        assert (post.ln[0], post.lb[0], post.le[0]) == (2, 2, 2)

    def test_upper_lower_differ_only_in_shapes(self):
        up = conjugate_posteriors(CH, prior_preset("upper"))
        lo = conjugate_posteriors(CH, prior_preset("lower"))
        assert (up.ln[0], up.lb[0], up.le[0]) == (CH.n + 2, CH.y + 1, CH.z + 1)
        assert (lo.ln[0], lo.lb[0], lo.le[0]) == (CH.n + 1, CH.y + 2, CH.z + 2)
        assert (up.ln[1], up.lb[1], up.le[1]) == (lo.ln[1], lo.lb[1], lo.le[1])

    def test_textbook_variant_scales(self):
        post = conjugate_posteriors(CH, prior_preset("B1"), textbook=True)
        assert post.ln == (6, 0.5)
        assert post.lb[1] == pytest.approx(0.5 / 33)

    def test_common_scale_cancels_in_the_signal_posterior(self):
        # the signal is a ratio, so the textbook half-scales give the
        # same CDF as the shape-only update
        literal = conjugate_posteriors(CH, prior_preset("B1"))
        textbook = conjugate_posteriors(CH, prior_preset("B1"), textbook=True)
        xs = np.array([0.5, 3.0, 9.0])
        np.testing.assert_allclose(
            bayes_posterior_cdf(literal, xs),
            bayes_posterior_cdf(textbook, xs),
            atol=1e-12,
        )


class TestPosteriorCdf:
    def test_boundary_values(self):
        post = conjugate_posteriors(CH, prior_preset("B1"))
        assert bayes_posterior_cdf(post, 0.0) == pytest.approx(0.0, abs=1e-9)
        assert bayes_posterior_cdf(post, 1e9) == pytest.approx(1.0, abs=1e-6)

    def test_monotone(self):
        post = conjugate_posteriors(CH, prior_preset("B2"))
        xs = np.linspace(0.0, 40.0, 300)
        vals = bayes_posterior_cdf(post, xs)
        assert np.all(np.diff(vals) >= -1e-12)

    def test_against_gamma_ratio_oracle(self):
        """Spec-listed configuration: shapes (6, 11, 101), scales (1, 1/33, 1/100)."""
        post = GammaPosteriors((6, 1.0), (11, 1 / 33), (101, 1 / 100))
        xs = [1.0, 3.0, 10.0]
        est, m = mc_posterior_ratio_cdf(
            (6, 11, 101), (1.0, 1 / 33, 1 / 100), xs, 2_000_000,
            RngHandle(31).generator,
        )
        exact = bayes_posterior_cdf(post, np.array(xs))
        se = np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / m)
        assert np.all(np.abs(est - exact) <= 4 * se + 1e-9)

    def test_series_vs_quadrature(self):
        quad = QuadratureConfig(rel_tol=1e-11, abs_tol=1e-14)
        for prior in ("B1", "B2", "upper", "lower"):
            post = conjugate_posteriors(CH, prior_preset(prior))
            xs = np.array([0.0, 0.4, 2.0, 9.0, 25.0])
            a = bayes_posterior_cdf(post, xs, method="series")
            b = bayes_posterior_cdf(post, xs, method="quadrature", quad=quad)
            np.testing.assert_allclose(a, b, atol=5e-10)

    def test_noninteger_shapes_use_quadrature(self):
        post = GammaPosteriors((5.5, 1.0), (10.25, 1 / 33), (99.5, 1 / 100))
        v = bayes_posterior_cdf(post, 8.0)
        est, m = mc_posterior_ratio_cdf(
            (5.5, 10.25, 99.5), (1.0, 1 / 33, 1 / 100), [8.0], 1_000_000,
            RngHandle(32).generator,
        )
        se = np.sqrt(max(v * (1 - v), 1e-12) / m)
        assert abs(est[0] - v) <= 4 * se


class TestUpperLimitQuantile:
    def test_inversion_contract(self):
        for q in (0.5, 0.9, 0.99):
            lim = bayes_upper_limit(CH, prior_preset("B1"), q)
            post = conjugate_posteriors(CH, prior_preset("B1"))
            assert bayes_posterior_cdf(post, lim) == pytest.approx(q, abs=1e-7)

    def test_batch_matches_scalar(self):
        rng = RngHandle(33).generator
        ns = rng.poisson(20.0, 50)
        ys = rng.poisson(99.0, 50)
        zs = rng.poisson(100.0, 50)
        for name in ("B1", "upper"):
            prior = prior_preset(name)
            batch = bayes_upper_limits_batch(ns, ys, zs, 33.0, 100.0, prior, (0.9, 0.99))
            for j in range(ns.size):
                ch = ChannelObservation(int(ns[j]), int(ys[j]), int(zs[j]), 33.0, 100.0)
                assert batch[0, j] == pytest.approx(
                    bayes_upper_limit(ch, prior, 0.90), rel=1e-12
                )
                assert batch[1, j] == pytest.approx(
                    bayes_upper_limit(ch, prior, 0.99), rel=1e-12
                )

    def test_lower_prior_limits_below_upper_prior_limits(self):
        rng = RngHandle(34).generator
        ns = rng.poisson(25.0, 200)
        ys = rng.poisson(99.0, 200)
        zs = rng.poisson(100.0, 200)
        lo = bayes_upper_limits_batch(ns, ys, zs, 33.0, 100.0, prior_preset("lower"), (0.9,))
        up = bayes_upper_limits_batch(ns, ys, zs, 33.0, 100.0, prior_preset("upper"), (0.9,))
        assert np.all(lo[0] <= up[0] + 1e-9)

    def test_quantile_domain(self):
        with pytest.raises(ValueError):
            bayes_upper_limit(CH, prior_preset("B1"), 1.0)


class TestCrossModuleIdentity:
    def test_channel_lower_cdf_is_a_posterior_cdf(self):
        """The belief-interval lower-end CDF equals the posterior CDF at
        shifted shapes (n, y+1, z+1), up to the conditioning event."""
        from dsplim._gamma_ratio import conditioning_probability, survival

        xs = np.array([0.3, 2.0, 7.0])
        num = survival(xs, CH.n, 1.0, CH.y + 1, 1 / CH.t, CH.z + 1, 1 / CH.u)
        den = conditioning_probability(CH.n + 1, 1.0, CH.y, 1 / CH.t)
        np.testing.assert_allclose(
            channel_cdf_lower(CH, xs), 1.0 - num / den, atol=1e-13
        )


def test_ds_sandwich_report(capsys):
    """Observed relation of DS limits to the lower/upper prior limits.

    Reported, not asserted: the belief-interval limit is expected to
    fall between the lower-prior and upper-prior Bayesian limits on
    most datasets with all counts >= 1.
    """
    rng = RngHandle(35).generator
    inside = total = 0
    for _ in range(100):
        n, y, z = rng.poisson((25.0, 99.0, 100.0))
        if min(n, y, z) < 1:
            continue
        ch = ChannelObservation(int(n), int(y), int(z), 33.0, 100.0)
        ds_lim = dataset_limits(Dataset((ch,)), [0.9])[0]
        lo = bayes_upper_limit(ch, prior_preset("lower"), 0.9)
        up = bayes_upper_limit(ch, prior_preset("upper"), 0.9)
        total += 1
        inside += lo <= ds_lim <= up
    print(f"\nDS limit within [lower, upper] Bayesian limits: {inside}/{total}")
    assert total > 0
