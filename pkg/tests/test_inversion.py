import numpy as np
import pytest
from scipy import stats

from dcuq.densities import Gaussian1D, UniformBox
from dcuq.errors import EmptyPosteriorError, IncompatibleEstimateError, PredictabilityError
from dcuq.inversion import (
    check_predictability,
    kl_estimate,
    l1_posterior_error,
    posterior_ratio,
    rejection_sample,
    solve_inverse,
)
from dcuq.models import make_model
from dcuq.pushforward import push_forward

# KL(N(0, 1/4) || N(0, 1)) = (1/4 - 1 - log(1/4)) / 2
KL_GAUSS = 0.318147180559945


@pytest.fixture(scope="module")
def gauss():
    pf = push_forward(Gaussian1D(0.0, 1.0), make_model("identity"), 20_000, 11)
    return pf, solve_inverse(pf, Gaussian1D(0.0, 0.25))


def test_observed_equal_to_pushforward_gives_unit_ratio():
    pf = push_forward(UniformBox([0, 0], [1, 1]), make_model("peaks"), 2000, 3)
    post = solve_inverse(pf, pf.kde)
    assert np.all(post.r_values == 1.0)
    assert post.diagnostics.integral_I == 1.0
    assert post.diagnostics.kl_prior_post == 0.0
    assert post.accepted.size == 2000


class TestGaussianIdentity:
    def test_ratio_matches_closed_form(self, gauss):
        pf, post = gauss
        q = pf.qoi_values
        inner = np.abs(q) < 1.5
        exact = stats.norm.pdf(q, scale=0.5) / stats.norm.pdf(q)
        assert np.max(np.abs(post.r_values[inner] - exact[inner])) < 5e-2 * np.max(exact)

    def test_kl(self, gauss):
        assert abs(gauss[1].diagnostics.kl_prior_post - KL_GAUSS) < 0.05

    def test_accepted_spread(self, gauss):
        pf, post = gauss
        acc = pf.qoi_values[post.accepted]
        assert abs(np.std(acc, ddof=1) - 0.5) < 0.03
        assert abs(np.mean(acc)) < 3 * 0.5 / np.sqrt(acc.size)

    def test_acceptance_rate(self, gauss):
        pf, post = gauss
        n = pf.sample_count
        expected = post.diagnostics.integral_I / post.r_values.max()
        assert abs(post.accepted.size / n - expected) < 4 * np.sqrt(expected / n)


class TestRejection:
    def test_unit_ratio_accepts_all(self):
        assert rejection_sample(np.ones(500), 0).size == 500

    def test_single_positive_entry(self):
        r = np.zeros(100)
        r[37] = 0.2
        assert rejection_sample(r, 5).tolist() == [37]

    def test_all_zero_raises(self):
        with pytest.raises(EmptyPosteriorError):
            rejection_sample(np.zeros(10), 0)

    def test_deterministic(self):
        r = np.random.default_rng(1).random(1000)
        assert np.array_equal(rejection_sample(r, 4), rejection_sample(r, 4))
        assert not np.array_equal(rejection_sample(r, 4), rejection_sample(r, 5))


def test_kl_zero_log_zero():
    assert kl_estimate([0.0, 1.0, 0.0, 1.0]) == 0.0
    assert kl_estimate([2.0, 0.0]) == pytest.approx(np.log(2.0))


class TestPredictability:
    def test_level_2_fails(self, peaks):
        post = peaks.post(2)
        assert not post.diagnostics.predictability_ok
        assert post.diagnostics.integral_I < 0.05

    def test_level_8_passes(self, peaks):
        assert peaks.post(8).diagnostics.predictability_ok

    def test_ratio_cap(self, peaks):
        rep = check_predictability(peaks.pf(8), peaks.observed, ratio_cap=1.0)
        assert not rep.ok and "cap" in rep.reason

    def test_disjoint_observed_fails(self):
        pf = push_forward(UniformBox([0.0], [1.0]), make_model("identity"), 1000, 0)
        assert np.all(posterior_ratio(pf, Gaussian1D(5.0, 0.01)) == 0.0)
        rep = check_predictability(pf, Gaussian1D(5.0, 0.01))
        assert not rep.ok and rep.integral == 0.0

    def test_vanishing_pushforward_raises(self):
        pf = push_forward(UniformBox([0.0], [1.0]), make_model("identity"), 1000, 0)
        pf.density_at_samples[:] = 0.0
        with pytest.raises(PredictabilityError) as exc:
            posterior_ratio(pf, Gaussian1D(0.5, 1.0))
        assert exc.value.q is not None
        assert not check_predictability(pf, Gaussian1D(0.5, 1.0)).ok


class TestL1Error:
    def test_self_zero_and_symmetric(self, peaks):
        ref, a = peaks.post(), peaks.post(8)
        assert l1_posterior_error(ref, ref) == 0.0
        assert l1_posterior_error(ref, a) == l1_posterior_error(a, ref)

    def test_triangle(self, peaks):
        ref, a, b = peaks.post(), peaks.post(8), peaks.post(12)
        assert l1_posterior_error(ref, a) <= l1_posterior_error(ref, b) + l1_posterior_error(b, a) + 1e-15

    def test_scaling(self, peaks):
        ref, a = peaks.post(), peaks.post(8)

        class Scaled:
            def __init__(self, post, c):
                self.pushforward, self.r_values = post.pushforward, c * post.r_values

        c = 3.0
        base = l1_posterior_error(ref, a)
        assert l1_posterior_error(Scaled(ref, c), Scaled(a, c)) == pytest.approx(c * base, rel=1e-12)

    def test_incompatible(self, peaks):
        pf = push_forward(peaks.prior, peaks.model, 100, 1)
        with pytest.raises(IncompatibleEstimateError):
            l1_posterior_error(peaks.post(), solve_inverse(pf, peaks.observed))


def test_posterior_consistent_with_observed(peaks):
    post = peaks.post()
    acc = post.pushforward.qoi_values[post.accepted]
    sd = np.sqrt(peaks.observed.variance)
    assert abs(acc.mean() - peaks.observed.mean) < 3 * sd / np.sqrt(acc.size)
    assert abs(acc.var(ddof=1) / peaks.observed.variance - 1) < 0.10
