"""Compiled Gaussian kernel sums.

Large 1D sums use a binned Taylor expansion (a fast Gauss transform): centers
are grouped into bins of width ``h``; for a bin with midpoint ``b`` and
``t_j = (c_j - b) / h``, ``d = (x - b) / h``::

    sum_j exp(-(d - t_j)^2 / 2) = exp(-d^2/2) * sum_k A_k d^k,
    A_k = (1/k!) sum_j exp(-t_j^2/2) t_j^k

The expansion order is chosen so the truncation error of each kernel is
below ``TAYLOR_TOL`` times its peak value.
"""
import math

import numba
import numpy as np

# Contributions beyond this many bandwidths are below exp(-72) of the peak.
CUTOFF = 12.0
TAYLOR_TOL = 1e-17
# 1D KDEs with at least this many centers use the binned expansion
BINNED_MIN_CENTERS = 2000


@numba.njit(nogil=True, cache=True)
def gauss_sum_sorted_1d(sorted_centers, queries, bandwidth, cutoff):
    """Direct sum of exp(-z^2/2) over centers within ``cutoff`` bandwidths."""
    out = np.empty(queries.size)
    inv = 1.0 / bandwidth
    reach = cutoff * bandwidth
    for i in range(queries.size):
        x = queries[i]
        lo = np.searchsorted(sorted_centers, x - reach)
        hi = np.searchsorted(sorted_centers, x + reach, side="right")
        s = 0.0
        for j in range(lo, hi):
            z = (x - sorted_centers[j]) * inv
            s += np.exp(-0.5 * z * z)
        out[i] = s
    return out


def taylor_order(cutoff=CUTOFF, tol=TAYLOR_TOL):
    """Smallest order p with max_d exp(-d^2/2 + d/2) (d/2)^p / p! <= tol."""
    d = np.linspace(0.0, cutoff + 1.0, 4001)
    for p in range(4, 80):
        bound = np.exp(-0.5 * d * d + 0.5 * d + p * np.log(np.maximum(0.5 * d, 1e-300)) - math.lgamma(p + 1))
        if bound.max() <= tol:
            return p
    raise RuntimeError("no Taylor order reaches the requested tolerance")


@numba.njit(nogil=True, cache=True)
def _bin_coefficients(sorted_centers, origin, bandwidth, nbins, order):
    coef = np.zeros((nbins, order))
    inv = 1.0 / bandwidth
    for j in range(sorted_centers.size):
        pos = (sorted_centers[j] - origin) * inv
        b = int(math.floor(pos))
        if b >= nbins:
            b = nbins - 1
        t = pos - (b + 0.5)
        w = math.exp(-0.5 * t * t)
        for k in range(order):
            coef[b, k] += w
            w *= t / (k + 1)
    return coef


@numba.njit(nogil=True, cache=True)
def _binned_sum(coef, origin, bandwidth, queries, cutoff):
    nbins, order = coef.shape
    inv = 1.0 / bandwidth
    out = np.empty(queries.size)
    for i in range(queries.size):
        pos = (queries[i] - origin) * inv
        lo = int(math.floor(pos - cutoff - 1.0))
        hi = int(math.floor(pos + cutoff + 1.0))
        if lo < 0:
            lo = 0
        if hi > nbins - 1:
            hi = nbins - 1
        s = 0.0
        for b in range(lo, hi + 1):
            if coef[b, 0] == 0.0:
                continue
            d = pos - (b + 0.5)
            acc = coef[b, order - 1]
            for k in range(order - 2, -1, -1):
                acc = acc * d + coef[b, k]
            s += math.exp(-0.5 * d * d) * acc
        out[i] = s
    return out


class BinnedGauss1D:
    """Precomputed bin expansion for repeated 1D evaluations."""

    def __init__(self, centers, bandwidth, cutoff=CUTOFF):
        c = np.sort(np.asarray(centers, dtype=float))
        self.bandwidth = float(bandwidth)
        self.cutoff = cutoff
        self.origin = float(c[0])
        nbins = int(math.floor((c[-1] - c[0]) / bandwidth)) + 1
        self.order = taylor_order(cutoff)
        self.coef = _bin_coefficients(c, self.origin, self.bandwidth, nbins, self.order)

    def __call__(self, queries):
        return _binned_sum(self.coef, self.origin, self.bandwidth,
                           np.ascontiguousarray(queries, dtype=float), self.cutoff)


def gauss_sum(centers, queries, bandwidth, chunk=2048, binned=None):
    """Unnormalised Gaussian kernel sums for ``queries`` (n, m) against ``centers`` (M, m).

    ``binned`` is an optional prebuilt :class:`BinnedGauss1D` for the centers.
    """
    if centers.shape[1] == 1:
        if binned is not None:
            return binned(queries[:, 0])
        return gauss_sum_sorted_1d(
            np.sort(centers[:, 0]), np.ascontiguousarray(queries[:, 0]), bandwidth, CUTOFF
        )
    out = np.empty(queries.shape[0])
    for a in range(0, queries.shape[0], chunk):
        d = queries[a:a + chunk, None, :] - centers[None, :, :]
        out[a:a + chunk] = np.exp(-0.5 * np.sum(d * d, axis=2) / bandwidth**2).sum(axis=1)
    return out
