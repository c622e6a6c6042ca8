"""Probability densities on R^d with respect to Lebesgue measure.

Four kinds are supported: a uniform box, a 1D Gaussian, a product of standard
normals, and an isotropic Gaussian kernel density estimate. All are immutable
and expose ``pdf`` (vectorised over rows) and, except the KDE, ``sample``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
from scipy.special import ndtri

from . import rng
from ._kernels import BINNED_MIN_CENTERS, BinnedGauss1D, gauss_sum
from .errors import (
    DegenerateBandwidthError,
    InvalidArgumentError,
    UnsupportedOperationError,
)

SILVERMAN = "silverman"

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _as_points(points, dim):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise InvalidArgumentError(
            f"expected points of dimension {dim}, got array of shape {np.shape(points)}"
        )
    return pts


def _unit_uniforms(seed, count, dim, chunk):
    return rng.chunked_uniforms(seed, rng.PRIOR_TAG, count * dim, chunk).reshape(count, dim)


@dataclass(frozen=True)
class UniformBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise InvalidArgumentError("box bounds must be nonempty and of equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidArgumentError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def pdf(self, points):
        pts = _as_points(points, self.dim)
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        return np.where(inside, 1.0 / self.volume, 0.0)

    def sample(self, count, seed, chunk=None):
        u = _unit_uniforms(seed, count, self.dim, chunk)
        lo = np.asarray(self.lower)
        return lo + u * (np.asarray(self.upper) - lo)


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InvalidArgumentError("Gaussian variance must be positive")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))

    dim = 1

    @property
    def std(self):
        return math.sqrt(self.variance)

    def pdf(self, points):
        x = _as_points(points, 1)[:, 0]
        z = (x - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * _SQRT_2PI)

    def sample(self, count, seed, chunk=None):
        u = _unit_uniforms(seed, count, 1, chunk)
        return self.mean + self.std * ndtri(u)


@dataclass(frozen=True)
class StandardNormalProduct:
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidArgumentError("dimension must be positive")

    def pdf(self, points):
        pts = _as_points(points, self.dim)
        return np.exp(-0.5 * np.sum(pts * pts, axis=1)) / _SQRT_2PI**self.dim

    def sample(self, count, seed, chunk=None):
        return ndtri(_unit_uniforms(seed, count, self.dim, chunk))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Isotropic Gaussian KDE ``(1 / (M h^m)) sum_i K((q - q_i) / h)``.

    Parameters
    ----------
    centers : ndarray, shape (M, m)
    bandwidth : float
    rule : str
        How the bandwidth was chosen (``"silverman"`` or ``"fixed"``); kept
        for output metadata.
    """

    centers: np.ndarray
    bandwidth: float
    rule: str = "fixed"
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.ndim != 2 or c.shape[0] == 0:
            raise InvalidArgumentError("KDE needs a nonempty (M, m) array of centers")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise InvalidArgumentError("KDE bandwidth must be a positive finite number")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def dim(self):
        return self.centers.shape[1]

    @property
    def sample_count(self):
        return self.centers.shape[0]

    @property
    def kernel_sup(self):
        return 1.0 / _SQRT_2PI**self.dim

    @cached_property
    def _binned(self):
        if self.dim == 1 and self.sample_count >= BINNED_MIN_CENTERS:
            return BinnedGauss1D(self.centers[:, 0], self.bandwidth)
        return None

    def _sums(self, pts):
        return gauss_sum(self.centers, pts, self.bandwidth, binned=self._binned)

    def pdf(self, points):
        pts = _as_points(points, self.dim)
        norm = self.sample_count * self.bandwidth**self.dim * _SQRT_2PI**self.dim
        if self.workers <= 1 or pts.shape[0] < 2 * self.workers:
            return self._sums(pts) / norm
        self._binned  # build before fan-out
        parts = np.array_split(pts, self.workers)
        with ThreadPoolExecutor(self.workers) as pool:
            sums = list(pool.map(self._sums, parts))
        return np.concatenate(sums) / norm

    def sample(self, count, seed, chunk=None):
        raise UnsupportedOperationError("sampling from a KDE is not supported")


def pdf(density, point):
    """Density value at a single point (length ``density.dim``)."""
    p = np.asarray(point, dtype=float).reshape(-1)
    if p.size != density.dim:
        raise InvalidArgumentError(f"point has length {p.size}, density dimension is {density.dim}")
    return float(density.pdf(p.reshape(1, -1))[0])


def sample(density, count, seed, chunk=None):
    """Draw ``count`` samples as an (count, dim) array, deterministic in ``seed``."""
    if int(count) < 1:
        raise InvalidArgumentError("sample count must be >= 1")
    return density.sample(int(count), seed, chunk)


def silverman_bandwidth(samples):
    """Silverman rule of thumb, geometric mean over coordinates for m > 1.

    In 1D this is ``s * (4 / (3 n)) ** (1/5)`` with ``s`` the sample standard
    deviation (ddof=1).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    n, m = x.shape
    if n < 2:
        raise DegenerateBandwidthError("Silverman's rule needs at least two samples")
    s = x.std(axis=0, ddof=1)
    if np.any(s == 0):
        raise DegenerateBandwidthError("zero sample variance; Silverman bandwidth would be 0")
    factor = (4.0 / ((m + 2) * n)) ** (1.0 / (m + 4))
    return float(np.exp(np.mean(np.log(s))) * factor)


def fit_kde(samples, bandwidth_rule=SILVERMAN, workers=1):
    """Fit a Gaussian KDE.

    ``bandwidth_rule`` is ``"silverman"`` or a positive float (fixed bandwidth).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidArgumentError("fit_kde needs a nonempty sample set of consistent dimension")
    if isinstance(bandwidth_rule, str):
        if bandwidth_rule.lower() != SILVERMAN:
            raise InvalidArgumentError(f"unknown bandwidth rule {bandwidth_rule!r}")
        return KdeModel(x, silverman_bandwidth(x), SILVERMAN, workers)
    h = float(bandwidth_rule)
    if not h > 0:
        raise InvalidArgumentError("fixed bandwidth must be positive")
    return KdeModel(x, h, "fixed", workers)


def from_spec(spec):
    """Build a density from a plain mapping (as found in config files).

    ``{"kind": "uniform", "lower": [...], "upper": [...]}``,
    ``{"kind": "gaussian", "mean": m, "variance": v}`` or
    ``{"kind": "standard_normal", "dim": k}``.
    """
    kind = spec.get("kind")
    if kind == "uniform":
        return UniformBox(spec["lower"], spec["upper"])
    if kind == "gaussian":
        return Gaussian1D(spec["mean"], spec["variance"])
    if kind == "standard_normal":
        return StandardNormalProduct(int(spec["dim"]))
    raise InvalidArgumentError(f"unknown density kind {kind!r}")


def to_spec(density):
    if isinstance(density, UniformBox):
        return {"kind": "uniform", "lower": list(density.lower), "upper": list(density.upper)}
    if isinstance(density, Gaussian1D):
        return {"kind": "gaussian", "mean": density.mean, "variance": density.variance}
    if isinstance(density, StandardNormalProduct):
        return {"kind": "standard_normal", "dim": density.dim}
    raise InvalidArgumentError("KDE densities have no config representation")
