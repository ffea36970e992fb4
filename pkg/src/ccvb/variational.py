"""Mean-field approximations and the conjugate Gamma update.

For a Gaussian target N(mu, Sigma) the KL(q || p) minimiser over axis-aligned
Gaussians keeps the target mean and sets each variance to ``1 / Lambda_ii``
with ``Lambda = Sigma^-1``.  :func:`cavi_mean_field_gaussian` reaches the same
point by coordinate ascent and is kept as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .stats import GammaDist, MultivariateGaussian


@dataclass(frozen=True)
class DiagonalGaussian:
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float).reshape(-1)
        variances = np.array(self.variances, dtype=float).reshape(-1)
        if means.shape != variances.shape:
            raise ValueError("means and variances must have the same length")
        if not np.all(variances > 0.0) or not np.all(np.isfinite(variances)):
            raise ValueError("variances must be positive and finite")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    def to_gaussian(self) -> MultivariateGaussian:
        return MultivariateGaussian(self.means, np.diag(self.variances))


@dataclass(frozen=True)
class VbFitReport:
    iterations: int
    final_kl: float
    converged: bool
    kl_history: tuple = field(default=(), repr=False)


def kl_diag_to_full(q: DiagonalGaussian, p: MultivariateGaussian) -> float:
    """KL(q || p) for Gaussians, with q diagonal."""
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: q has {q.dim}, p has {p.dim}")
    prec = p.precision
    diff = p.mean - q.means
    kl = 0.5 * (
        float(np.dot(np.diag(prec), q.variances))
        + float(diff @ prec @ diff)
        - q.dim
        + p.log_det()
        - float(np.sum(np.log(q.variances)))
    )
    # rounding can leave a -1e-17 residue at the optimum
    return max(kl, 0.0)


def mean_field_gaussian(target: MultivariateGaussian) -> DiagonalGaussian:
    prec = target.precision
    return DiagonalGaussian(target.mean.copy(), 1.0 / np.diag(prec))


def cavi_mean_field_gaussian(
    target: MultivariateGaussian,
    tol: float = 1e-10,
    max_iter: int = 1000,
    init_means=None,
) -> tuple[DiagonalGaussian, VbFitReport]:
    """Coordinate-ascent fit of a diagonal Gaussian to ``target``.

    Each sweep updates coordinates in order with the exact conditional
    optimum ``m_i = mu_i - sum_{j != i} Lambda_ij (m_j - mu_j) / Lambda_ii``
    and ``s_i^2 = 1 / Lambda_ii``.  The start is the target's marginals
    (``init_means`` overrides the mean part).  Iteration stops once a sweep
    lowers the KL by less than ``tol``; hitting ``max_iter`` first returns
    ``converged=False``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    prec = target.precision
    mu = target.mean
    d = target.dim
    means = mu.copy() if init_means is None else np.array(init_means, dtype=float).reshape(d)
    variances = np.diag(target.cov).copy()

    kl = kl_diag_to_full(DiagonalGaussian(means, variances), target)
    history = [kl]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        for i in range(d):
            offset = 0.0
            for j in range(d):
                if j != i:
                    offset += prec[i, j] * (means[j] - mu[j])
            means[i] = mu[i] - offset / prec[i, i]
            variances[i] = 1.0 / prec[i, i]
        new_kl = kl_diag_to_full(DiagonalGaussian(means, variances), target)
        history.append(new_kl)
        decrement = kl - new_kl
        kl = new_kl
        if abs(decrement) < tol:
            converged = True
            break
    q = DiagonalGaussian(means, variances)
    return q, VbFitReport(iterations=it, final_kl=kl, converged=converged, kl_history=tuple(history))


def gamma_posterior_update(prior: GammaDist, count: int, sum_obs: float) -> GammaDist:
    """Conjugate update of a Gamma prior on an exponential rate.

    ``count`` observations with total ``sum_obs`` give
    ``Gamma(shape + count, rate + sum_obs)``.
    """
    if count < 0 or int(count) != count:
        raise ValueError(f"count must be a nonnegative integer, got {count}")
    if not (sum_obs >= 0 and math.isfinite(sum_obs)):
        raise ValueError(f"sum_obs must be nonnegative, got {sum_obs}")
    return GammaDist(prior.shape + count, prior.rate + sum_obs)
