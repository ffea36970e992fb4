"""Distributions, normal CDF/quantile and the seeded random-number contract.

Every stochastic routine in the package takes an explicit ``numpy.random.Generator``
built by :func:`make_rng`.  The bit generator is PCG64 seeded through
``SeedSequence``, so identical seeds reproduce identical streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy import special

LOG_2PI = math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)
SEED_MAX = 2**64 - 1

_STD_NORMAL = NormalDist()


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for a 64-bit unsigned ``seed``."""
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF, ``0.5 * erfc(-z / sqrt(2))``."""
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"std_normal_cdf needs a finite argument, got {z}")
    return 0.5 * math.erfc(-z / SQRT2)


def std_normal_cdf_array(z) -> np.ndarray:
    """Vectorised :func:`std_normal_cdf`; infinities map to 0 and 1."""
    z = np.asarray(z, dtype=float)
    if np.isnan(z).any():
        raise ValueError("std_normal_cdf_array got NaN")
    return 0.5 * special.erfc(-z / SQRT2)


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open unit interval.

    Starts from the Wichura rational approximation and polishes with Newton
    steps on the erfc-based CDF so the round trip closes to ~1e-15.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {p}")
    x = _STD_NORMAL.inv_cdf(p)
    for _ in range(8):
        density = math.exp(-0.5 * x * x - 0.5 * LOG_2PI)
        step = (std_normal_cdf(x) - p) / density
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


@dataclass(frozen=True)
class MultivariateGaussian:
    """Gaussian with mean vector and positive-definite covariance.

    The Cholesky factor is computed at construction; any non-positive pivot
    rejects the covariance.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        d = mean.shape[0]
        if d == 0:
            raise ValueError("mean must have at least one coordinate")
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean dimension {d}")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mean and covariance must be finite")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc
        if not np.all(np.diag(chol) > 0.0):
            raise ValueError("covariance is not positive definite")
        for arr in (mean, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", chol)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        inv_chol = np.linalg.inv(self.chol)
        return inv_chol.T @ inv_chol

    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


@dataclass(frozen=True)
class GammaDist:
    """Gamma distribution in shape/rate form."""

    shape: float
    rate: float

    def __post_init__(self):
        shape, rate = float(self.shape), float(self.rate)
        if not (shape > 0.0 and math.isfinite(shape)):
            raise ValueError(f"gamma shape must be positive, got {self.shape}")
        if not (rate > 0.0 and math.isfinite(rate)):
            raise ValueError(f"gamma rate must be positive, got {self.rate}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "rate", rate)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def variance(self) -> float:
        return self.shape / self.rate**2

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = (
                self.shape * math.log(self.rate)
                - special.gammaln(self.shape)
                + (self.shape - 1.0) * np.log(x)
                - self.rate * x
            )
        return np.where(x > 0, out, -np.inf)


def mvn_logpdf(x, dist: MultivariateGaussian):
    """Log-density of ``dist`` at ``x``.

    ``x`` may be a single point of shape ``(d,)`` (returns a float) or a batch
    of shape ``(m, d)`` (returns an array of length ``m``).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[-1] != dist.dim:
        raise ValueError(f"point dimension {pts.shape[-1]} does not match distribution dimension {dist.dim}")
    diff = pts - dist.mean
    z = np.linalg.solve(dist.chol, diff.T)
    quad = np.sum(z * z, axis=0)
    out = -0.5 * quad - 0.5 * dist.log_det() - 0.5 * dist.dim * LOG_2PI
    return float(out[0]) if single else out


def mvn_sample(dist: MultivariateGaussian, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` vectors as rows of a ``(count, d)`` array."""
    if count < 1:
        raise ValueError("count must be at least 1")
    z = rng.standard_normal((count, dist.dim))
    return dist.mean + z @ dist.chol.T


def gamma_sample(dist: GammaDist, rng: np.random.Generator, count: int) -> np.ndarray:
    # numpy's sampler is Marsaglia-Tsang squeeze/rejection, boosted for shape < 1
    if count < 1:
        raise ValueError("count must be at least 1")
    return rng.gamma(dist.shape, 1.0 / dist.rate, size=count)
