"""Seeded reproductions: region comparison, MLE violation sweep, consistency and decay studies."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .chance import (
    EmpiricalMembership,
    LinearChanceConstraint,
    RegionGrid,
    analytic_linear_prob,
    convexity_probe,
    region_grid,
    region_grid_from_membership,
    vb_linear_prob,
)
from .queueing import (
    StaffingInfeasible,
    StaffingProblem,
    optimal_staffing,
    posterior,
    posterior_constraint_prob,
    qos_violated,
    simulate_queue_data,
    staff_avg_constraint,
    staff_bayes_cc,
    staff_mle,
)
from .sampling import MhConfig, metropolis_hastings
from .stats import GammaDist, MultivariateGaussian, make_rng, mvn_logpdf, std_normal_cdf, std_normal_quantile
from .variational import mean_field_gaussian

DEMO_COVARIANCES = (-0.1, -0.025, 0.025, 0.1)
PANEL_NAMES = ("A", "B", "C", "D")
REFERENCE_MLE_FRACTIONS = {50: 0.52, 100: 0.56, 150: 0.57, 200: 0.57, 250: 0.61, 300: 0.62, 350: 0.58, 400: 0.56}

TABLE1_N_GRID = (50, 100, 150, 200, 250, 300, 350, 400)
CONSISTENCY_N_GRID = (50, 200, 800, 3200, 12800)
DECAY_N_GRID = (50, 100, 200, 400, 800, 1600, 3200)

DEFAULT_BOUNDS = ((-3.0, 3.0), (-3.0, 3.0))
REPLICATION_STRIDE = 1000003


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    replications: int = 100
    n_grid: tuple = TABLE1_N_GRID
    alpha: float = 0.37
    beta: float = 0.95
    lambda0: float = 16.0
    mu0: float = 4.0
    output_dir: str = "out"
    mc_draws: int = 20000
    c_max: int = 50
    prior_shape: float = 1.0
    prior_rate: float = 0.01

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid:
            raise ConfigError("n_grid must be nonempty")
        if any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"n_grid must be positive and strictly increasing, got {list(grid)}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not (self.lambda0 > 0 and self.mu0 > 0):
            raise ConfigError("lambda0 and mu0 must be positive")
        if self.mc_draws < 1 or self.c_max < 1:
            raise ConfigError("mc_draws and c_max must be positive")
        if not (self.prior_shape > 0 and self.prior_rate > 0):
            raise ConfigError("prior_shape and prior_rate must be positive")

    def problem(self) -> StaffingProblem:
        prior = GammaDist(self.prior_shape, self.prior_rate)
        return StaffingProblem(self.alpha, self.beta, self.c_max, prior, prior)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        return d


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    base = {
        "table1": dict(n_grid=TABLE1_N_GRID, replications=100),
        "consistency": dict(n_grid=CONSISTENCY_N_GRID, replications=50),
        "decay": dict(n_grid=DECAY_N_GRID, replications=100),
    }[experiment]
    base.update(overrides)
    return ExperimentConfig(**base)


CONFIG_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read a JSON config whose keys mirror :class:`ExperimentConfig` fields."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_mapping(raw, base or ExperimentConfig(), source=str(path))


def config_from_mapping(raw: dict, base: ExperimentConfig, source: str = "config") -> ExperimentConfig:
    values = {}
    for key, value in raw.items():
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"{source}: unknown field '{key}'")
        values[key] = _coerce(key, value, source)
    try:
        return replace(base, **values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _coerce(key, value, source):
    kind = type(getattr(ExperimentConfig(), key))
    try:
        if key == "n_grid":
            if not isinstance(value, (list, tuple)) or not all(_is_int(v) for v in value):
                raise TypeError
            return tuple(int(v) for v in value)
        if kind is int:
            if not _is_int(value):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except TypeError:
        raise ConfigError(f"{source}: field '{key}' has invalid value {value!r}") from None
    return value


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def replication_seed(seed: int, replication: int, n: int) -> int:
    return (seed + REPLICATION_STRIDE * replication + n) % 2**64


def derive_seed(*keys: int) -> int:
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass
class SweepResult:
    experiment: str
    rows: list
    metadata: dict = field(default_factory=dict)

    def value(self, n: int, statistic: str) -> float:
        for rn, stat, val in self.rows:
            if rn == n and stat == statistic:
                return val
        raise KeyError((n, statistic))

    def curve(self, statistic: str) -> dict:
        return {n: v for n, s, v in self.rows if s == statistic}

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "metadata": self.metadata,
            "rows": [{"n": n, "statistic": s, "value": v} for n, s, v in self.rows],
        }

    def write(self, output_dir) -> Path:
        out = Path(output_dir) / self.experiment
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "summary.json", self.to_dict())
        with (out / "rows.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "statistic", "value"])
            for n, s, v in self.rows:
                writer.writerow([n, s, repr(float(v))])
        return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _metadata(config: ExperimentConfig, **extra) -> dict:
    meta = {"version": f"ccvb {__version__}", "config": config.to_dict()}
    meta.update(extra)
    return meta


# --------------------------------------------------------------------------
# Region comparison over the four exchangeable covariances
# --------------------------------------------------------------------------

@dataclass
class RegionPanel:
    name: str
    rho: float
    true_grid: RegionGrid
    mc_grid: RegionGrid
    vb_grid: RegionGrid
    reports: dict
    acceptance_rate: float
    vb_only_cells: int
    certified_point: list | None
    draws: np.ndarray = field(repr=False, default=None)

    @property
    def grids(self):
        return (self.true_grid, self.mc_grid, self.vb_grid)

    def summary(self) -> dict:
        return {
            "panel": self.name,
            "rho": self.rho,
            "mh_acceptance_rate": self.acceptance_rate,
            "feasible_cells": {g.label: g.feasible_count for g in self.grids},
            "convexity": {
                k: {"trials": r.trials, "feasible_pairs": r.feasible_pairs, "violations": r.violation_count}
                for k, r in self.reports.items()
            },
            "vb_feasible_true_infeasible_cells": self.vb_only_cells,
            "certified_vb_outside_true_point": self.certified_point,
        }


def exchangeable_gaussian(rho: float) -> MultivariateGaussian:
    return MultivariateGaussian([0.0, 0.0], [[1.0, rho], [rho, 1.0]])


def certified_vb_outside_point(rho: float, beta: float, threshold: float = 1.0):
    """Point on the (1,1) diagonal inside the VB region but outside the true one.

    Along ``u = (1, 1)/sqrt(2)`` the true boundary sits at
    ``t / (z_beta sqrt(1 + rho))`` and the mean-field one at
    ``t / (z_beta sqrt(1 - rho^2))``; for ``rho > 0`` the latter is farther out
    and the midpoint of the two radii is returned.  ``None`` when ``rho <= 0``.
    """
    if rho <= 0:
        return None
    z = std_normal_quantile(beta)
    r_true = threshold / (z * math.sqrt(1.0 + rho))
    r_vb = threshold / (z * math.sqrt(1.0 - rho * rho))
    t = 0.5 * (r_true + r_vb)
    return [t / math.sqrt(2.0), t / math.sqrt(2.0)]


def _probe_window(grid: RegionGrid, bounds):
    box = grid.feasible_bbox(pad_cells=1)
    return box if box is not None else bounds


def region_panel(rho: float, beta: float, mh_config: MhConfig, bounds=DEFAULT_BOUNDS,
                 resolution: int = 301, probe_trials: int = 10**6, probe_seed: int = 0,
                 name: str = "") -> RegionPanel:
    target = exchangeable_gaussian(rho)
    constraint = LinearChanceConstraint(2, 1.0)
    q = mean_field_gaussian(target)
    samples = metropolis_hastings(lambda v: mvn_logpdf(v, target), mh_config)
    mc_member = EmpiricalMembership(samples, constraint, beta)

    true_grid = region_grid(lambda p: analytic_linear_prob(p, target, constraint), beta, bounds, resolution,
                            label="true")
    mc_grid = region_grid_from_membership(mc_member, beta, bounds, resolution, label="mc")
    vb_grid = region_grid(lambda p: vb_linear_prob(p, q, constraint), beta, bounds, resolution, label="vb")

    members = {
        "true": lambda p: analytic_linear_prob(p, target, constraint) >= beta,
        "mc": mc_member,
        "vb": lambda p: vb_linear_prob(p, q, constraint) >= beta,
    }
    reports = {}
    for idx, (key, grid) in enumerate((("true", true_grid), ("mc", mc_grid), ("vb", vb_grid))):
        rng = make_rng(derive_seed(probe_seed, idx))
        reports[key] = convexity_probe(members[key], _probe_window(grid, bounds), probe_trials, rng)

    vb_only = int(np.count_nonzero(vb_grid.membership & ~true_grid.membership))
    point = certified_vb_outside_point(rho, beta, constraint.threshold)
    if point is not None:
        # certify against the closed forms
        assert vb_linear_prob(point, q, constraint) >= beta > analytic_linear_prob(point, target, constraint)
    return RegionPanel(name, rho, true_grid, mc_grid, vb_grid, reports, samples.acceptance_rate,
                       vb_only, point, samples.draws)


def run_fig1(beta: float = 0.9, mh_config: MhConfig | None = None, bounds=DEFAULT_BOUNDS,
             resolution: int = 301, output_dir=None, probe_trials: int = 10**6,
             write_grids: bool = False) -> list[RegionPanel]:
    """True vs Monte Carlo vs mean-field regions for the four covariances.

    Panel ``k`` runs its chain with seed ``mh_config.seed + k``.  Writes one SVG
    overlay per panel plus ``summary.json`` and per-panel convexity reports
    under ``<output_dir>/fig1`` when ``output_dir`` is given.
    """
    mh_config = mh_config or MhConfig()
    panels = []
    for k, (name, rho) in enumerate(zip(PANEL_NAMES, DEMO_COVARIANCES)):
        cfg = replace(mh_config, seed=(mh_config.seed + k) % 2**64)
        panels.append(region_panel(rho, beta, cfg, bounds, resolution, probe_trials,
                                   probe_seed=derive_seed(mh_config.seed, k, 1), name=name))
    if output_dir is not None:
        _write_fig1(panels, Path(output_dir) / "fig1", beta, mh_config, bounds, resolution, probe_trials,
                    write_grids)
    return panels


def _write_fig1(panels, out: Path, beta, mh_config, bounds, resolution, probe_trials, write_grids):
    from .plotting import render_region_overlay

    try:
        out.mkdir(parents=True, exist_ok=True)
        for p in panels:
            title = f"$\\sigma_{{12}}^{p.name}={p.rho}$, $\\beta={beta}$"
            render_region_overlay(p.grids, out / f"panel_{p.name}.svg", title=title, samples=p.draws)
            for key, rep in p.reports.items():
                rep.to_json(out / f"convexity_{p.name}_{key}.json")
            if write_grids:
                for g in p.grids:
                    g.to_csv(out / f"grid_{p.name}_{g.label}.csv")
        _write_json(out / "summary.json", {
            "experiment": "fig1",
            "version": f"ccvb {__version__}",
            "config": {
                "beta": beta,
                "mh": {"steps": mh_config.steps, "burn_in": mh_config.burn_in,
                       "proposal_std": mh_config.proposal_std, "init": list(mh_config.init),
                       "seed": mh_config.seed},
                "bounds": [list(b) for b in bounds],
                "resolution": resolution,
                "probe_trials": probe_trials,
            },
            "panels": [p.summary() for p in panels],
        })
    except OSError as exc:
        raise OSError(f"writing region outputs under {out}: {exc}") from exc


def run_nonconvexity_study(rho: float = -0.1, beta: float = 0.9, seeds=range(20),
                           mh_config: MhConfig | None = None, bounds=DEFAULT_BOUNDS,
                           resolution: int = 301, probe_trials: int = 10**6) -> dict:
    """Repeat the Monte Carlo region over independent chains and count non-convex outcomes."""
    mh_config = mh_config or MhConfig()
    target = exchangeable_gaussian(rho)
    constraint = LinearChanceConstraint(2, 1.0)
    per_seed = []
    for seed in seeds:
        samples = metropolis_hastings(lambda v: mvn_logpdf(v, target), replace(mh_config, seed=seed))
        member = EmpiricalMembership(samples, constraint, beta)
        grid = region_grid_from_membership(member, beta, bounds, resolution, label="mc")
        report = convexity_probe(member, _probe_window(grid, bounds), probe_trials,
                                 make_rng(derive_seed(seed, 2)))
        per_seed.append({"seed": int(seed), "violations": report.violation_count,
                         "feasible_pairs": report.feasible_pairs})
    hits = sum(1 for s in per_seed if s["violations"] > 0)
    return {"rho": rho, "beta": beta, "repetitions": len(per_seed), "nonconvex_runs": hits,
            "nonconvex_fraction": hits / len(per_seed), "runs": per_seed}


# --------------------------------------------------------------------------
# Staffing sweeps
# --------------------------------------------------------------------------

def run_table1(config: ExperimentConfig) -> SweepResult:
    """Per-n fraction of replications whose staffing level violates QoS at the true rates."""
    problem = config.problem()
    c_star = optimal_staffing(config.lambda0, config.mu0, config.alpha, config.c_max)
    rows = []
    for n in config.n_grid:
        counts = dict(mle=0, bayes_cc=0, avg_constraint=0)
        infeasible = dict(mle=0, bayes_cc=0, avg_constraint=0)
        for rep in range(config.replications):
            rng = make_rng(replication_seed(config.seed, rep, n))
            data = simulate_queue_data(config.lambda0, config.mu0, n, rng)
            solvers = (
                ("mle", lambda: staff_mle(data, config.alpha, config.c_max)),
                ("bayes_cc", lambda: staff_bayes_cc(data, problem, config.mc_draws, rng)),
                ("avg_constraint", lambda: staff_avg_constraint(data, problem, config.mc_draws, rng)),
            )
            for method, solve in solvers:
                try:
                    c = solve().c
                except StaffingInfeasible:
                    infeasible[method] += 1
                    counts[method] += 1
                    continue
                if qos_violated(c, config.lambda0, config.mu0, config.alpha):
                    counts[method] += 1
        for method in ("mle", "bayes_cc", "avg_constraint"):
            rows.append((n, f"phi_{method}", counts[method] / config.replications))
        for method in ("mle", "bayes_cc", "avg_constraint"):
            rows.append((n, f"infeasible_{method}", float(infeasible[method])))
        if n in REFERENCE_MLE_FRACTIONS:
            rows.append((n, "reference_phi_mle", REFERENCE_MLE_FRACTIONS[n]))
    return SweepResult("table1", rows, _metadata(config, c_star=c_star))


def run_consistency(config: ExperimentConfig) -> SweepResult:
    """Distribution of the chance-constrained staffing level around the true optimum as n grows.

    An infeasible replication is scored as ``c_max + 1``.
    """
    problem = config.problem()
    c_star = optimal_staffing(config.lambda0, config.mu0, config.alpha, config.c_max)
    rows = []
    for n in config.n_grid:
        hits = 0
        abs_err = 0.0
        for rep in range(config.replications):
            rng = make_rng(replication_seed(config.seed, rep, n))
            data = simulate_queue_data(config.lambda0, config.mu0, n, rng)
            try:
                c = staff_bayes_cc(data, problem, config.mc_draws, rng).c
            except StaffingInfeasible:
                c = config.c_max + 1
            hits += c == c_star
            abs_err += abs(c - c_star)
        rows.append((n, "frac_c_star", hits / config.replications))
        rows.append((n, "mean_abs_error", abs_err / config.replications))
    return SweepResult("consistency", rows, _metadata(config, c_star=c_star))


def log_slope(ns, values) -> float:
    """Least-squares slope of ``values`` against ``log(ns)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(values, dtype=float)
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x)) if len(x) > 1 else 0.0


def run_infeasible_decay(config: ExperimentConfig, c_infeasible: int = 5) -> SweepResult:
    """Estimate P[c_infeasible qualifies as chance-feasible] across n.

    Replication data and posterior draws depend only on ``(seed, rep, n)``, so
    runs that differ only in ``beta`` see identical posterior probabilities.
    """
    if not qos_violated(c_infeasible, config.lambda0, config.mu0, config.alpha):
        raise ConfigError(
            f"c_infeasible={c_infeasible} satisfies the true constraints at "
            f"lambda0={config.lambda0}, mu0={config.mu0}, alpha={config.alpha}"
        )
    problem = config.problem()
    rows = []
    curve = []
    for n in config.n_grid:
        qualified = 0
        total = 0.0
        for rep in range(config.replications):
            rng = make_rng(replication_seed(config.seed, rep, n))
            data = simulate_queue_data(config.lambda0, config.mu0, n, rng)
            lam_post, mu_post = posterior(data, problem)
            p = posterior_constraint_prob(c_infeasible, lam_post, mu_post, config.alpha, config.mc_draws, rng)
            total += p
            qualified += p >= config.beta
        p_hat = qualified / config.replications
        curve.append(p_hat)
        rows.append((n, "p_qualify", p_hat))
        rows.append((n, "mean_posterior_prob", total / config.replications))
    slope = log_slope(config.n_grid, curve)
    return SweepResult("decay", rows, _metadata(config, c_infeasible=c_infeasible, log_n_slope=slope))


def run_ac_counterexample(beta: float = 0.9) -> dict:
    """Scalar example ``min {c : xi - c <= 0}`` with ``xi ~ N(0, 1)``.

    The average-constraint answer is ``E[xi] = 0``, violated with probability
    one half; the chance-constrained answer is the ``beta`` quantile.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    c_a = 0.0
    c_cc = std_normal_quantile(beta)
    return {
        "experiment": "ac_counterexample",
        "distribution": {"family": "normal", "mean": 0.0, "std": 1.0},
        "beta": beta,
        "c_A": c_a,
        "violation_prob_A": 1.0 - std_normal_cdf(c_a),
        "c_CC": c_cc,
        "violation_prob_CC": 1.0 - std_normal_cdf(c_cc),
    }
