import numpy as np
import pytest

from dcuq.densities import Gaussian1D, UniformBox, sample
from dcuq.inversion import solve_inverse
from dcuq.models import make_model
from dcuq.pushforward import push_forward

PEAKS_SEED = 2024
PEAKS_M = 50_000


class PeaksStudy:
    """Shared M=50,000 peaks sample set with lazily built fidelities."""

    def __init__(self):
        self.model = make_model("peaks")
        self.prior = UniformBox([0, 0], [1, 1])
        self.observed = Gaussian1D(2.3, 0.04)
        self.samples = sample(self.prior, PEAKS_M, PEAKS_SEED)
        self._pf = {}
        self._post = {}

    def pf(self, level=None):
        if level not in self._pf:
            fid = "exact" if level is None else {"level": level}
            self._pf[level] = push_forward(self.prior, self.model, PEAKS_M, PEAKS_SEED,
                                           fidelity=fid, samples=self.samples)
        return self._pf[level]

    def post(self, level=None):
        if level not in self._post:
            self._post[level] = solve_inverse(self.pf(level), self.observed)
        return self._post[level]


@pytest.fixture(scope="session")
def peaks():
    return PeaksStudy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
