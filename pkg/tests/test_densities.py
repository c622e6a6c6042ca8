import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dcuq.densities import (
    Gaussian1D,
    KdeModel,
    StandardNormalProduct,
    UniformBox,
    fit_kde,
    pdf,
    sample,
    silverman_bandwidth,
)
from dcuq.errors import (
    DegenerateBandwidthError,
    InvalidArgumentError,
    UnsupportedOperationError,
)
from dcuq.models import make_model
from dcuq.pushforward import push_forward


class TestPdf:
    def test_unit_box(self):
        assert pdf(UniformBox([0, 0], [1, 1]), [0.5, 0.5]) == 1.0

    def test_box_outside(self):
        assert pdf(UniformBox([0], [1]), [1.5]) == 0.0

    def test_gaussian_peak(self):
        # 1 / (0.2 sqrt(2 pi)), computed with mpmath
        assert pdf(Gaussian1D(2.3, 0.04), [2.3]) == pytest.approx(1.9947114020071634, rel=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            pdf(UniformBox([0, 0], [1, 1]), [0.5])

    def test_invalid_parameters(self):
        with pytest.raises(InvalidArgumentError):
            UniformBox([1.0], [0.0])
        with pytest.raises(InvalidArgumentError):
            Gaussian1D(0.0, 0.0)

    @pytest.mark.parametrize("density,box", [
        (UniformBox([0.0], [2.0]), [(-1, 3)]),
        (Gaussian1D(2.3, 0.04), [(0.3, 4.3)]),
        (StandardNormalProduct(1), [(-10, 10)]),
        (StandardNormalProduct(2), [(-9, 9), (-9, 9)]),
        (UniformBox([0, -1], [1, 1]), [(0, 1), (-1, 1)]),
    ])
    def test_normalisation(self, density, box):
        if density.dim == 1:
            total = integrate.quad(lambda x: density.pdf([x])[0], *box[0], points=[0.0, 2.0], limit=200)[0]
        else:
            total = integrate.dblquad(lambda y, x: density.pdf([[x, y]])[0], *box[0], *box[1])[0]
        assert abs(total - 1.0) <= 1e-3


class TestSample:
    def test_deterministic(self):
        d = StandardNormalProduct(3)
        assert np.array_equal(sample(d, 100, 7), sample(d, 100, 7))

    def test_chunking_does_not_change_output(self):
        d = UniformBox([0.3] * 9, [0.7] * 9)
        assert np.array_equal(sample(d, 1000, 3), sample(d, 1000, 3, chunk=37))

    def test_box_containment(self):
        d = UniformBox([0.3, -2.0], [0.7, 5.0])
        x = sample(d, 5000, 1)
        assert np.all(x >= d.lower) and np.all(x <= d.upper)

    def test_standard_normal_mean(self):
        x = sample(StandardNormalProduct(1), 100_000, 11)
        # 3 sigma / sqrt(n) ~ 0.0095
        assert abs(x.mean()) < 0.01

    def test_gaussian_moments(self):
        x = sample(Gaussian1D(2.3, 0.04), 100_000, 4)[:, 0]
        assert abs(x.mean() - 2.3) < 3 * 0.2 / math.sqrt(x.size)
        assert abs(x.std() - 0.2) < 0.005

    def test_kde_sampling_unsupported(self):
        with pytest.raises(UnsupportedOperationError):
            sample(fit_kde([0.0, 1.0]), 10, 0)

    def test_count_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            sample(UniformBox([0], [1]), 0, 0)


class TestKde:
    def test_single_sample_fixed_bandwidth(self):
        kde = fit_kde([0.0], 1.0)
        assert pdf(kde, [0.0]) == pytest.approx(0.3989422804014327, rel=1e-14)

    def test_symmetry(self):
        kde = fit_kde([-0.7, 0.7], 0.3)
        x = np.linspace(-3, 3, 41)
        assert np.allclose(kde.pdf(x), kde.pdf(-x), rtol=0, atol=1e-15)

    def test_silverman_formula(self, rng):
        x = rng.normal(size=500) * 3.0
        s = x.std(ddof=1)
        assert silverman_bandwidth(x) == pytest.approx(s * (4 / (3 * 500)) ** 0.2, rel=1e-14)
        assert fit_kde(x).bandwidth == pytest.approx(s * (4 / (3 * 500)) ** 0.2, rel=1e-14)

    def test_silverman_2d_geometric_mean(self, rng):
        x = rng.normal(size=(400, 2)) * [1.0, 4.0]
        s = x.std(axis=0, ddof=1)
        expected = math.sqrt(s[0] * s[1]) * (4 / (4 * 400)) ** (1 / 6)
        assert silverman_bandwidth(x) == pytest.approx(expected, rel=1e-14)

    def test_degenerate_samples(self):
        with pytest.raises(DegenerateBandwidthError):
            fit_kde([1.0, 1.0, 1.0])

    def test_invalid_inputs(self):
        with pytest.raises(InvalidArgumentError):
            fit_kde([])
        with pytest.raises(InvalidArgumentError):
            fit_kde([0.0, 1.0], -1.0)

    @pytest.mark.parametrize("n", [50, 5000])
    def test_normalisation_1d(self, rng, n):
        kde = fit_kde(rng.normal(size=n))
        total = integrate.quad(lambda x: kde.pdf([x])[0], -12, 12, limit=400)[0]
        assert abs(total - 1.0) <= 1e-3

    def test_normalisation_2d(self, rng):
        kde = fit_kde(rng.normal(size=(200, 2)))
        g = np.linspace(-8, 8, 321)
        X, Y = np.meshgrid(g, g)
        vals = kde.pdf(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        total = integrate.trapezoid(integrate.trapezoid(vals, g, axis=1), g)
        assert abs(total - 1.0) <= 1e-3

    @pytest.mark.parametrize("n", [1, 10, 3000])
    def test_bounds(self, rng, n):
        x = rng.normal(size=n)
        kde = fit_kde(x, 0.2)
        vals = kde.pdf(np.concatenate([x, np.linspace(-5, 5, 101)]))
        sup = kde.kernel_sup / kde.bandwidth
        assert np.all(vals <= sup * (1 + 1e-12))
        self_term = 1.0 / (n * 0.2 * math.sqrt(2 * math.pi))
        assert np.all(kde.pdf(x) >= self_term * (1 - 1e-12))

    def test_kde_model_validation(self):
        with pytest.raises(InvalidArgumentError):
            KdeModel(np.zeros((0, 1)), 1.0)
        with pytest.raises(InvalidArgumentError):
            KdeModel(np.zeros((3, 1)), 0.0)

    def test_binned_matches_direct(self, rng):
        x = rng.normal(size=6000)
        kde = fit_kde(x)
        q = np.concatenate([x[:500], rng.normal(size=200) * 4])
        from dcuq._kernels import gauss_sum_sorted_1d, CUTOFF
        ref = gauss_sum_sorted_1d(np.sort(x), q, kde.bandwidth, CUTOFF)
        ref /= x.size * kde.bandwidth * math.sqrt(2 * math.pi)
        assert np.max(np.abs(kde.pdf(q) - ref)) <= 1e-13 * ref.max()

    def test_workers_do_not_change_values(self, rng):
        x = rng.normal(size=4000)
        a = fit_kde(x).pdf(x)
        b = fit_kde(x, workers=3).pdf(x)
        assert np.array_equal(a, b)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=30, unique=True),
           st.floats(0.05, 2.0))
    def test_self_contribution_property(self, centers, h):
        kde = fit_kde(centers, h)
        self_term = 1.0 / (len(centers) * h * math.sqrt(2 * math.pi))
        assert np.all(kde.pdf(np.array(centers)) >= self_term * (1 - 1e-12))


def test_kde_rate_identity_uniform():
    """L-infinity KDE error against the exact uniform push-forward shrinks like M^-2/5."""
    model = make_model("identity")
    prior = UniformBox([0.0], [1.0])
    sizes = [100, 1000, 10000]
    errors = []
    # interior points avoid the boundary bias of an uncorrected KDE
    grid = np.linspace(0.3, 0.7, 201)
    for M in sizes:
        reps = []
        for seed in range(20):
            est = push_forward(prior, model, M, seed)
            reps.append(np.max(np.abs(est.kde.pdf(grid) - 1.0)))
        errors.append(np.mean(reps))
    assert errors[0] > errors[1] > errors[2]
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert -0.5 <= slope <= -0.15
