"""Chance-constraint probabilities, rasterised feasibility regions, convexity probing.

The constraint throughout is ``g(x, xi) = xi^T x - threshold <= 0``.  Under a
Gaussian ``xi ~ N(mu, Sigma)`` its satisfaction probability is
``Phi((threshold - mu^T x) / sqrt(x^T Sigma x))``, so for ``beta > 1/2`` and
``mu = 0`` the feasible set ``{x : P >= beta}`` is the second-order cone slice
``z_beta * ||Sigma^{1/2} x|| <= threshold``.  An empirical sample replaces the
closed form with a count and loses that structure.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .sampling import SampleSet
from .stats import MultivariateGaussian, std_normal_cdf_array
from .variational import DiagonalGaussian

Box = tuple  # ((x_lo, x_hi), (y_lo, y_hi))

_CHUNK = 8192


@dataclass(frozen=True)
class LinearChanceConstraint:
    dimension: int = 2
    threshold: float = 1.0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")


def _as_points(x, dim: int):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != dim:
        raise ValueError(f"point dimension {pts.shape[-1]} does not match constraint dimension {dim}")
    return pts, single


def _check_box(bounds) -> tuple[tuple[float, float], tuple[float, float]]:
    (x0, x1), (y0, y1) = bounds
    x0, x1, y0, y1 = float(x0), float(x1), float(y0), float(y1)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounds {bounds}")
    return (x0, x1), (y0, y1)


def analytic_linear_prob(x, xi_dist: MultivariateGaussian, constraint: LinearChanceConstraint):
    """P[xi^T x <= threshold] for Gaussian ``xi``; accepts one point or an ``(m, d)`` batch."""
    if xi_dist.dim != constraint.dimension:
        raise ValueError("distribution and constraint dimensions differ")
    pts, single = _as_points(x, constraint.dimension)
    t = constraint.threshold
    loc = pts @ xi_dist.mean
    # x^T Sigma x = ||L^T x||^2, never negative
    scale = np.linalg.norm(pts @ xi_dist.chol, axis=1)
    zero = scale == 0.0
    safe = np.where(zero, 1.0, scale)
    prob = std_normal_cdf_array((t - loc) / safe)
    prob = np.where(zero, 1.0 if t >= 0 else 0.0, prob)
    return float(prob[0]) if single else prob


def vb_linear_prob(x, q: DiagonalGaussian, constraint: LinearChanceConstraint):
    return analytic_linear_prob(x, q.to_gaussian(), constraint)


def _satisfied_counts(pts: np.ndarray, draws: np.ndarray, threshold: float) -> np.ndarray:
    counts = np.empty(pts.shape[0], dtype=np.int64)
    for start in range(0, pts.shape[0], _CHUNK):
        block = pts[start:start + _CHUNK] @ draws.T
        counts[start:start + _CHUNK] = np.count_nonzero(block <= threshold, axis=1)
    return counts


def empirical_prob(x, samples: SampleSet, constraint: LinearChanceConstraint):
    """Fraction of draws with ``xi_j^T x <= threshold``."""
    if len(samples) == 0:
        raise ValueError("empirical_prob needs at least one draw")
    if samples.dim != constraint.dimension:
        raise ValueError("sample and constraint dimensions differ")
    pts, single = _as_points(x, constraint.dimension)
    prob = _satisfied_counts(pts, samples.draws, constraint.threshold) / len(samples)
    return float(prob[0]) if single else prob


class EmpiricalMembership:
    """Exact membership test for ``{x : empirical_prob(x) >= beta}``.

    Gives the same verdict as thresholding :func:`empirical_prob`, but for the
    2-D case with a positive threshold most points are decided from a table.
    Writing ``x = r u(theta)``, ``x`` is feasible iff the k-th smallest
    projection ``q_k(theta)`` of the draws onto ``u(theta)`` is at most
    ``threshold / r``, where ``k`` is the least count with ``k / N >= beta``.
    ``q_k`` is Lipschitz in ``theta`` with constant ``max_j ||xi_j||``, so a
    tabulated ``q_k`` on an angular grid settles every point outside a thin
    band around the boundary; points inside the band are counted directly.
    """

    def __init__(self, samples: SampleSet, constraint: LinearChanceConstraint, beta: float,
                 n_angles: int = 4096):
        if len(samples) == 0:
            raise ValueError("EmpiricalMembership needs at least one draw")
        if not 0.0 < beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        self.draws = samples.draws
        self.threshold = float(constraint.threshold)
        self.beta = float(beta)
        self.constraint = constraint
        n = len(samples)
        k = max(1, math.ceil(beta * n))
        while k > 1 and (k - 1) / n >= beta:
            k -= 1
        while k / n < beta:
            k += 1
        self.k = k
        self.n_draws = n
        self._fast = samples.dim == 2 and self.threshold > 0.0 and k <= n
        self.exact_evaluations = 0
        if self._fast:
            self._build_table(n_angles)

    def _build_table(self, n_angles: int):
        self.n_angles = n_angles
        self.step = 2.0 * math.pi / n_angles
        theta = np.arange(n_angles) * self.step
        quant = np.empty(n_angles)
        for start in range(0, n_angles, 256):
            th = theta[start:start + 256]
            proj = self.draws @ np.vstack([np.cos(th), np.sin(th)])
            quant[start:start + 256] = np.partition(proj, self.k - 1, axis=0)[self.k - 1]
        self.quantiles = quant
        self.bound = float(np.max(np.linalg.norm(self.draws, axis=1))) * self.step / 2.0

    def _exact(self, pts: np.ndarray) -> np.ndarray:
        self.exact_evaluations += pts.shape[0]
        return _satisfied_counts(pts, self.draws, self.threshold) / self.n_draws >= self.beta

    def __call__(self, x):
        pts, single = _as_points(x, self.draws.shape[1])
        if not self._fast:
            out = self._exact(pts)
            return bool(out[0]) if single else out
        r = np.hypot(pts[:, 0], pts[:, 1])
        out = np.ones(pts.shape[0], dtype=bool)
        pos = r > 0.0
        theta = np.mod(np.arctan2(pts[pos, 1], pts[pos, 0]), 2.0 * math.pi)
        nearest = np.rint(theta / self.step).astype(np.int64) % self.n_angles
        q = self.quantiles[nearest]
        val = self.threshold / r[pos]
        margin = self.bound + 1e-9 * (1.0 + np.abs(val))
        inside = val > q + margin
        outside = val < q - margin
        verdict = inside.copy()
        unsure = ~(inside | outside)
        if unsure.any():
            idx = np.flatnonzero(pos)[unsure]
            verdict[unsure] = self._exact(pts[idx])
        out[pos] = verdict
        return bool(out[0]) if single else out


@dataclass(frozen=True)
class RegionGrid:
    """Feasibility raster; ``membership[i, j]`` is the cell centred at ``(xs[j], ys[i])``."""

    x_bounds: tuple
    y_bounds: tuple
    resolution: int
    membership: np.ndarray
    beta: float
    label: str = ""

    def __post_init__(self):
        m = np.array(self.membership, dtype=bool)
        if m.shape != (self.resolution, self.resolution):
            raise ValueError(f"membership shape {m.shape} does not match resolution {self.resolution}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @property
    def xs(self) -> np.ndarray:
        return _centers(self.x_bounds, self.resolution)

    @property
    def ys(self) -> np.ndarray:
        return _centers(self.y_bounds, self.resolution)

    @property
    def cell_area(self) -> float:
        (x0, x1), (y0, y1) = self.x_bounds, self.y_bounds
        return (x1 - x0) * (y1 - y0) / self.resolution**2

    @property
    def feasible_count(self) -> int:
        return int(np.count_nonzero(self.membership))

    def feasible_bbox(self, pad_cells: int = 1):
        """Bounding box of feasible cell centres, widened by ``pad_cells`` cells and clipped."""
        rows, cols = np.nonzero(self.membership)
        if rows.size == 0:
            return None
        (x0, x1), (y0, y1) = self.x_bounds, self.y_bounds
        hx = (x1 - x0) / self.resolution
        hy = (y1 - y0) / self.resolution
        xs, ys = self.xs, self.ys
        return (
            (max(x0, xs[cols.min()] - (pad_cells + 0.5) * hx), min(x1, xs[cols.max()] + (pad_cells + 0.5) * hx)),
            (max(y0, ys[rows.min()] - (pad_cells + 0.5) * hy), min(y1, ys[rows.max()] + (pad_cells + 0.5) * hy)),
        )

    def to_csv(self, path) -> None:
        path = Path(path)
        xs, ys = self.xs, self.ys
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "member"])
            for i, y in enumerate(ys):
                for j, x in enumerate(xs):
                    writer.writerow([repr(float(x)), repr(float(y)), int(self.membership[i, j])])


def _centers(bounds, resolution: int) -> np.ndarray:
    lo, hi = bounds
    h = (hi - lo) / resolution
    return lo + (np.arange(resolution) + 0.5) * h


def _grid_points(bounds, resolution: int) -> np.ndarray:
    (xb, yb) = bounds
    xx, yy = np.meshgrid(_centers(xb, resolution), _centers(yb, resolution))
    return np.column_stack([xx.ravel(), yy.ravel()])


def region_grid(prob_fn: Callable, beta: float, bounds: Box, resolution: int,
                vectorized: bool = True, label: str = "") -> RegionGrid:
    """Rasterise ``{x : prob_fn(x) >= beta}`` at cell centres.

    With ``vectorized=True`` ``prob_fn`` receives an ``(m, 2)`` array and must
    return ``m`` probabilities; otherwise it is called once per cell.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    xb, yb = _check_box(bounds)
    pts = _grid_points((xb, yb), resolution)
    if vectorized:
        probs = np.asarray(prob_fn(pts), dtype=float).reshape(-1)
    else:
        probs = np.array([float(prob_fn(p)) for p in pts])
    member = (probs >= beta).reshape(resolution, resolution)
    return RegionGrid(xb, yb, resolution, member, beta, label)


def region_grid_from_membership(membership_fn: Callable, beta: float, bounds: Box,
                                resolution: int, label: str = "") -> RegionGrid:
    """Rasterise a vectorised boolean membership function, e.g. :class:`EmpiricalMembership`."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    xb, yb = _check_box(bounds)
    pts = _grid_points((xb, yb), resolution)
    member = np.asarray(membership_fn(pts), dtype=bool).reshape(resolution, resolution)
    return RegionGrid(xb, yb, resolution, member, beta, label)


@dataclass(frozen=True)
class ConvexityReport:
    trials: int
    violations: list = field(repr=False)
    violation_count: int
    feasible_pairs: int = 0
    bounds: tuple = ()

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "feasible_pairs": self.feasible_pairs,
            "violation_count": self.violation_count,
            "bounds": [list(b) for b in self.bounds],
            "violations": [
                {"a": list(map(float, a)), "b": list(map(float, b)), "midpoint": list(map(float, m))}
                for a, b, m in self.violations
            ],
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def convexity_probe(membership_fn: Callable, bounds: Box, trials: int, rng: np.random.Generator,
                    vectorized: bool = True) -> ConvexityReport:
    """Search for midpoint-convexity violations of a membership function.

    Draws ``trials`` pairs of independent uniform points in ``bounds``; every
    pair with both ends feasible has its midpoint tested, and each infeasible
    midpoint is recorded as a violation.  Draws are consumed in fixed-size
    blocks so the result depends only on the generator state.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    (x0, x1), (y0, y1) = _check_box(bounds)
    lo = np.array([x0, y0])
    hi = np.array([x1, y1])

    def member(pts):
        if vectorized:
            return np.asarray(membership_fn(pts), dtype=bool).reshape(-1)
        return np.array([bool(membership_fn(p)) for p in pts], dtype=bool)

    violations = []
    feasible_pairs = 0
    done = 0
    block = 65536
    while done < trials:
        k = min(block, trials - done)
        a = rng.uniform(lo, hi, size=(k, 2))
        b = rng.uniform(lo, hi, size=(k, 2))
        both = member(a) & member(b)
        feasible_pairs += int(np.count_nonzero(both))
        if both.any():
            pa, pb = a[both], b[both]
            mid = 0.5 * (pa + pb)
            bad = ~member(mid)
            for i in np.flatnonzero(bad):
                violations.append((tuple(pa[i]), tuple(pb[i]), tuple(mid[i])))
        done += k
    return ConvexityReport(trials, violations, len(violations), feasible_pairs, ((x0, x1), (y0, y1)))
