"""Random-walk Metropolis-Hastings, the sample-based posterior baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stats import make_rng


@dataclass(frozen=True)
class MhConfig:
    steps: int = 8000
    burn_in: int = 3000
    proposal_std: float = 1.0
    init: tuple = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError(f"burn_in must satisfy 0 <= burn_in < steps, got {self.burn_in}")
        if not self.proposal_std > 0:
            raise ValueError("proposal_std must be positive")
        object.__setattr__(self, "init", tuple(float(v) for v in np.atleast_1d(self.init)))


@dataclass(frozen=True)
class SampleSet:
    draws: np.ndarray
    acceptance_rate: float
    accepted: int = 0
    proposed: int = 0

    def __post_init__(self):
        draws = np.array(self.draws, dtype=float)
        if draws.ndim != 2:
            raise ValueError("draws must be a (count, dim) array")
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise ValueError("acceptance_rate must lie in [0, 1]")

    def __len__(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]


def metropolis_hastings(log_density: Callable[[np.ndarray], float], config: MhConfig) -> SampleSet:
    """Run one chain and return the post-burn-in states.

    The chain takes ``config.steps`` proposal steps from ``config.init``; the
    first ``burn_in`` resulting states are dropped.  Proposals are isotropic
    Gaussian increments, accepted when ``log U < log_density(y) - log_density(x)``.
    """
    rng = make_rng(config.seed)
    x = np.array(config.init, dtype=float)
    d = x.shape[0]
    current = float(log_density(x))
    if not math.isfinite(current):
        raise ValueError(f"log_density is not finite at the initial state {x.tolist()}")

    keep = config.steps - config.burn_in
    out = np.empty((keep, d))
    accepted = 0
    std = config.proposal_std
    for step in range(config.steps):
        y = x + std * rng.standard_normal(d)
        proposal = float(log_density(y))
        if math.isnan(proposal):
            raise ValueError(f"log_density returned NaN at state {y.tolist()} (step {step})")
        u = rng.random()
        log_u = math.log(u) if u > 0.0 else -math.inf
        if log_u < proposal - current:
            x, current = y, proposal
            accepted += 1
        if step >= config.burn_in:
            out[step - config.burn_in] = x
    return SampleSet(out, accepted / config.steps, accepted=accepted, proposed=config.steps)


def thin(samples: SampleSet, stride: int) -> SampleSet:
    if stride < 1:
        raise ValueError("stride must be at least 1")
    return SampleSet(
        samples.draws[::stride],
        samples.acceptance_rate,
        accepted=samples.accepted,
        proposed=samples.proposed,
    )
