"""M/M/c staffing: data simulation, Erlang-C delay probability and three solvers.

The design problem is ``min c`` subject to ``alpha - P_delay(c, lam, mu) > 0``
(QoS) and ``c * mu - lam > 0`` (stability).  The solvers differ in how they
treat the unknown rates:

* ``mle``            plug in the exponential-rate MLEs,
* ``avg_constraint`` require each constraint to hold in posterior expectation,
* ``bayes_cc``       require both to hold jointly with posterior probability >= beta.

With independent Gamma priors the posterior over ``(lam, mu)`` is a product
of Gammas, which is also its own mean-field approximation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stats import GammaDist, gamma_sample, make_rng
from .variational import gamma_posterior_update

METHODS = ("mle", "avg_constraint", "bayes_cc")
DEFAULT_PRIOR = GammaDist(1.0, 0.01)


class UnstableQueueError(ValueError):
    """Raised when ``lam / (c * mu) >= 1``."""


class StaffingInfeasible(RuntimeError):
    def __init__(self, message: str, binding: str):
        super().__init__(message)
        self.binding = binding


@dataclass(frozen=True)
class QueueDataset:
    """Per-customer arrival, service-start and service-end times (``T0 = 0``)."""

    T: np.ndarray
    S: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        T, S, E = (np.array(v, dtype=float).reshape(-1) for v in (self.T, self.S, self.E))
        n = T.shape[0]
        if n == 0:
            raise ValueError("a dataset needs at least one customer")
        if S.shape[0] != n or E.shape[0] != n:
            raise ValueError("T, S and E must have the same length")
        for name, arr in (("T", T), ("S", S), ("E", E)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size:
                raise ValueError(f"row {bad[0] + 1}: {name} is not finite")
        prev = np.concatenate([[0.0], T[:-1]])
        bad = np.flatnonzero(T < prev)
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: arrival T before previous arrival")
        bad = np.flatnonzero(S < T)
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: service start S before arrival T")
        bad = np.flatnonzero(E <= S)
        if bad.size:
            raise ValueError(f"row {bad[0] + 1}: service end before start")
        for arr in (T, S, E):
            arr.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "E", E)

    def __len__(self) -> int:
        return self.T.shape[0]

    @property
    def interarrivals(self) -> np.ndarray:
        return np.diff(self.T, prepend=0.0)

    @property
    def services(self) -> np.ndarray:
        return self.E - self.S

    def __eq__(self, other):
        if not isinstance(other, QueueDataset):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in ((self.T, other.T), (self.S, other.S), (self.E, other.E)))

    __hash__ = None


@dataclass(frozen=True)
class StaffingProblem:
    alpha: float = 0.37
    beta: float = 0.95
    c_max: int = 50
    lambda_prior: GammaDist = DEFAULT_PRIOR
    mu_prior: GammaDist = DEFAULT_PRIOR

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.c_max < 1:
            raise ValueError("c_max must be at least 1")


@dataclass(frozen=True)
class StaffingResult:
    c: int
    constraint_prob_at_c: float
    method: str
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"method": self.method, "c": self.c, "constraint_prob_at_c": self.constraint_prob_at_c}
        out.update(self.details)
        return out


def simulate_queue_data(lambda0: float, mu0: float, n: int, rng: np.random.Generator) -> QueueDataset:
    """Single-server FCFS observations with Exp(lambda0) gaps and Exp(mu0) services.

    The server need not be stable; the rates are identifiable either way.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (lambda0 > 0 and mu0 > 0):
        raise ValueError("rates must be positive")
    gaps = rng.exponential(1.0 / lambda0, size=n)
    services = rng.exponential(1.0 / mu0, size=n)
    T = np.cumsum(gaps)
    S = np.empty(n)
    E = np.empty(n)
    free_at = 0.0
    for i in range(n):
        start = T[i] if T[i] > free_at else free_at
        S[i] = start
        free_at = start + services[i]
        E[i] = free_at
    return QueueDataset(T, S, E)


def erlang_delay_prob(c: int, lam: float, mu: float) -> float:
    """Erlang-C probability that an arrival waits, ``1 - W_q(c, lam, mu)``.

    Uses the Erlang-B recurrence ``B_k = r B_{k-1} / (k + r B_{k-1})`` and
    ``C = B_c / (1 - rho (1 - B_c))``, which never forms ``r^c`` or ``c!``.
    """
    c = int(c)
    if c < 1:
        raise ValueError("c must be a positive integer")
    if not (lam > 0 and mu > 0):
        raise ValueError("rates must be positive")
    rho = lam / (c * mu)
    if rho >= 1.0:
        raise UnstableQueueError(f"unstable queue: rho = {rho} >= 1 for c = {c}")
    r = lam / mu
    b = 1.0
    for k in range(1, c + 1):
        b = r * b / (k + r * b)
    return b / (1.0 - rho * (1.0 - b))


def _delay_prob_array(c: int, lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Vectorised delay probability; unstable entries are set to 1."""
    r = lam / mu
    rho = r / c
    b = np.ones_like(r)
    for k in range(1, c + 1):
        b = r * b / (k + r * b)
    stable = rho < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        delay = b / (1.0 - rho * (1.0 - b))
    return np.where(stable, delay, 1.0)


def _jointly_feasible(c: int, lam: np.ndarray, mu: np.ndarray, alpha: float) -> np.ndarray:
    stable = c * mu - lam > 0
    return stable & (alpha - _delay_prob_array(c, lam, mu) > 0)


def qos_violated(c: int, lambda0: float, mu0: float, alpha: float) -> bool:
    if c * mu0 <= lambda0:
        return True
    return erlang_delay_prob(c, lambda0, mu0) >= alpha


def optimal_staffing(lam: float, mu: float, alpha: float, c_max: int = 50) -> int:
    """Smallest ``c <= c_max`` meeting both constraints at known rates."""
    for c in range(1, c_max + 1):
        if c * mu - lam > 0 and alpha - erlang_delay_prob(c, lam, mu) > 0:
            return c
    binding = "stability" if c_max * mu <= lam else "qos"
    raise StaffingInfeasible(
        f"no c <= {c_max} satisfies the {binding} constraint at lambda={lam}, mu={mu}", binding
    )


def mle_rates(data: QueueDataset) -> tuple[float, float]:
    n = len(data)
    total_gap = float(data.T[-1])
    total_service = float(np.sum(data.services))
    if total_gap <= 0:
        raise ValueError("degenerate data: total interarrival time is zero")
    if total_service <= 0:
        raise ValueError("degenerate data: total service time is zero")
    return n / total_gap, n / total_service


def posterior(data: QueueDataset, problem: StaffingProblem) -> tuple[GammaDist, GammaDist]:
    n = len(data)
    lam_post = gamma_posterior_update(problem.lambda_prior, n, float(data.T[-1]))
    mu_post = gamma_posterior_update(problem.mu_prior, n, float(np.sum(data.services)))
    return lam_post, mu_post


def staff_mle(data: QueueDataset, alpha: float, c_max: int = 50) -> StaffingResult:
    lam_hat, mu_hat = mle_rates(data)
    c = optimal_staffing(lam_hat, mu_hat, alpha, c_max)
    return StaffingResult(
        c, 1.0, "mle",
        {"lambda_hat": lam_hat, "mu_hat": mu_hat, "delay_prob_at_c": erlang_delay_prob(c, lam_hat, mu_hat)},
    )


def posterior_constraint_prob(c: int, lambda_post: GammaDist, mu_post: GammaDist, alpha: float,
                              mc_draws: int, rng: np.random.Generator) -> float:
    """Monte Carlo estimate of the joint posterior probability that ``c`` is feasible.

    Draws ``mc_draws`` values of lambda and then of mu from ``rng``; draws
    with ``c * mu <= lam`` count as violating.
    """
    if mc_draws < 1:
        raise ValueError("mc_draws must be at least 1")
    lam = gamma_sample(lambda_post, rng, mc_draws)
    mu = gamma_sample(mu_post, rng, mc_draws)
    return float(np.mean(_jointly_feasible(int(c), lam, mu, alpha)))


def _posterior_draws(lambda_post, mu_post, mc_draws, rng):
    # one sub-stream shared by every candidate c (common random numbers), so
    # the estimated joint probability is monotone in c draw by draw
    sub = make_rng(int(rng.integers(0, 2**63)))
    lam = gamma_sample(lambda_post, sub, mc_draws)
    mu = gamma_sample(mu_post, sub, mc_draws)
    return lam, mu


def staff_bayes_cc(data: QueueDataset, problem: StaffingProblem, mc_draws: int,
                   rng: np.random.Generator) -> StaffingResult:
    if mc_draws < 1:
        raise ValueError("mc_draws must be at least 1")
    lam_post, mu_post = posterior(data, problem)
    lam, mu = _posterior_draws(lam_post, mu_post, mc_draws, rng)
    best = 0.0
    for c in range(1, problem.c_max + 1):
        p = float(np.mean(_jointly_feasible(c, lam, mu, problem.alpha)))
        best = max(best, p)
        if p >= problem.beta:
            return StaffingResult(c, p, "bayes_cc", _post_details(lam_post, mu_post))
    raise StaffingInfeasible(
        f"no c <= {problem.c_max} reaches posterior feasibility {problem.beta} (best {best})",
        "joint_chance",
    )


def staff_avg_constraint(data: QueueDataset, problem: StaffingProblem, mc_draws: int,
                         rng: np.random.Generator) -> StaffingResult:
    if mc_draws < 1:
        raise ValueError("mc_draws must be at least 1")
    lam_post, mu_post = posterior(data, problem)
    lam, mu = _posterior_draws(lam_post, mu_post, mc_draws, rng)
    for c in range(1, problem.c_max + 1):
        if np.mean(lam - c * mu) < 0 and np.mean(_delay_prob_array(c, lam, mu) - problem.alpha) < 0:
            p = float(np.mean(_jointly_feasible(c, lam, mu, problem.alpha)))
            return StaffingResult(c, p, "avg_constraint", _post_details(lam_post, mu_post))
    raise StaffingInfeasible(f"no c <= {problem.c_max} satisfies the averaged constraints", "average")


def _post_details(lam_post: GammaDist, mu_post: GammaDist) -> dict:
    return {
        "lambda_posterior": {"shape": lam_post.shape, "rate": lam_post.rate},
        "mu_posterior": {"shape": mu_post.shape, "rate": mu_post.rate},
    }


def write_dataset(data: QueueDataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["T", "S", "E"])
        for t, s, e in zip(data.T, data.S, data.E):
            writer.writerow([repr(float(t)), repr(float(s)), repr(float(e))])


def load_dataset(path) -> QueueDataset:
    """Read a ``T,S,E`` CSV; invariant violations name the offending row."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["T", "S", "E"]:
            raise ValueError(f"{path}: missing or malformed header, expected 'T,S,E'")
        rows = []
        for k, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: row {k}: expected 3 fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}: row {k}: non-numeric field") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows)
    try:
        return QueueDataset(arr[:, 0], arr[:, 1], arr[:, 2])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
