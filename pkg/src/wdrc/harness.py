"""Benchmark campaigns: config files, paired rollouts, and reports.

A campaign estimates one nominal distribution from scenario samples,
synthesizes the robust and baseline policies, simulates paired
Monte-Carlo runs (both policies see identical draws), and writes
deterministic reports: per-run costs as CSV, a shared-bin histogram,
and a JSON summary embedding the full configuration.

Rollouts are vectorized across runs.  Every per-run quantity depends
only on that run's substream, so results are identical for any worker
count or chunking.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
import yaml

from .bounds import (
    CalibrationResult,
    CostCertificate,
    calibrate_lambda,
    performance_ratio,
)
from .controller import (
    ControllerMode,
    LqgController,
    WdrcController,
    lqg_gains,
    synthesize_wdrc,
)
from .errors import ConfigError
from .estimator import covariance_path, initial_posterior_cov, kalman_gain
from .model import (
    CostSpec,
    DistributionSpec,
    GaussianSpec,
    LinearSystem,
    NominalDistribution,
    RobustnessParams,
    ScenarioSpec,
    UniformSpec,
    draw_nominal_samples,
    draw_realization,
    estimate_nominal,
)
from .worstcase import SolverOptions, mean_affine

__all__ = [
    "ExperimentConfig",
    "CostStatistics",
    "CampaignResult",
    "load_config",
    "config_from_dict",
    "run_campaign",
    "emit_reports",
    "build_histogram",
    "paired_mean_z",
    "paired_std_z",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated campaign configuration plus its raw echo."""

    sys: LinearSystem
    cost: CostSpec
    scenario: ScenarioSpec
    theta: float
    lam: float | None
    runs: int
    histogram_bins: int
    paired: bool
    per_stage_nominal: bool
    output_dir: str | None
    echo: dict


@dataclass(frozen=True)
class CostStatistics:
    """Summary statistics over the retained per-run costs."""

    mean: float
    std_dev: float
    minimum: float
    maximum: float
    count: int
    costs: np.ndarray

    @classmethod
    def from_costs(cls, costs: np.ndarray) -> "CostStatistics":
        costs = np.asarray(costs, dtype=float)
        std = float(costs.std(ddof=1)) if costs.size > 1 else 0.0
        return cls(
            mean=float(costs.mean()),
            std_dev=std,
            minimum=float(costs.min()),
            maximum=float(costs.max()),
            count=int(costs.size),
            costs=costs,
        )


@dataclass(frozen=True)
class CampaignResult:
    """Everything a campaign produced, ready for report emission."""

    config: ExperimentConfig
    mode: str
    runs: int
    seed: int
    lam: float | None
    calibration: CalibrationResult | None
    certificate: CostCertificate | None
    wdrc: CostStatistics | None
    lqg: CostStatistics | None
    wdrc_ctrl: WdrcController | None = None
    lqg_ctrl: LqgController | None = None
    scenario: ScenarioSpec | None = None


def _section(raw: dict, key: str, path: str = "") -> dict:
    full = f"{path}.{key}" if path else key
    if key not in raw:
        raise ConfigError("missing section", full)
    if not isinstance(raw[key], dict):
        raise ConfigError("expected a mapping", full)
    return raw[key]


def _entry(raw: dict, key: str, path: str):
    if key not in raw:
        raise ConfigError("missing entry", f"{path}.{key}")
    return raw[key]


def _matrix(raw: dict, key: str, path: str) -> np.ndarray:
    try:
        return np.array(_entry(raw, key, path), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"not a numeric array: {exc}", f"{path}.{key}")


def _distribution(raw: Any, path: str) -> DistributionSpec:
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", path)
    kind = raw.get("type")
    if kind == "gaussian":
        return GaussianSpec(
            mean_vec=_matrix(raw, "mean", path), cov_mat=_matrix(raw, "cov", path)
        )
    if kind == "uniform":
        return UniformSpec(lo=_matrix(raw, "lo", path), hi=_matrix(raw, "hi", path))
    raise ConfigError(
        f"unknown distribution type {kind!r} (expected gaussian or uniform)",
        f"{path}.type",
    )


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed configuration mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    plant = _section(raw, "plant")
    sys = LinearSystem(
        A=_matrix(plant, "A", "plant"),
        B=_matrix(plant, "B", "plant"),
        C=_matrix(plant, "C", "plant"),
        M=_matrix(plant, "M", "plant"),
    )
    cost_raw = _section(raw, "cost")
    cost = CostSpec(
        Q=_matrix(cost_raw, "Q", "cost"),
        Q_f=_matrix(cost_raw, "Q_f", "cost"),
        R=_matrix(cost_raw, "R", "cost"),
        horizon=int(_entry(cost_raw, "horizon", "cost")),
    )
    robust = _section(raw, "robustness")
    theta = float(_entry(robust, "theta", "robustness"))
    if theta < 0.0:
        raise ConfigError("theta must be >= 0", "robustness.theta")
    lam_raw = robust.get("lam", "auto")
    if isinstance(lam_raw, str):
        if lam_raw != "auto":
            raise ConfigError(
                f"lam must be a positive number or 'auto', got {lam_raw!r}",
                "robustness.lam",
            )
        lam = None
    else:
        lam = float(lam_raw)
        if lam <= 0.0:
            raise ConfigError("lam must be positive", "robustness.lam")

    scen = _section(raw, "scenario")
    noise_cov = (
        np.array(scen["noise_cov"], dtype=float)
        if "noise_cov" in scen
        else np.array(sys.M)
    )
    scenario = ScenarioSpec(
        true_disturbance=_distribution(
            _entry(scen, "true_disturbance", "scenario"),
            "scenario.true_disturbance",
        ),
        initial_state=_distribution(
            _entry(scen, "initial_state", "scenario"), "scenario.initial_state"
        ),
        noise_cov=noise_cov,
        sample_count=int(_entry(scen, "sample_count", "scenario")),
        seed=int(scen.get("seed", 0)),
    )
    if scenario.true_disturbance.dim != sys.n_x:
        raise ConfigError(
            f"disturbance dim {scenario.true_disturbance.dim} != state dim {sys.n_x}",
            "scenario.true_disturbance",
        )
    if scenario.initial_state.dim != sys.n_x:
        raise ConfigError(
            f"initial state dim {scenario.initial_state.dim} != state dim {sys.n_x}",
            "scenario.initial_state",
        )

    runs = int(raw.get("runs", 1000))
    if runs < 1:
        raise ConfigError("runs must be >= 1", "runs")
    bins = int(raw.get("histogram_bins", 40))
    if bins < 1:
        raise ConfigError("histogram_bins must be >= 1", "histogram_bins")

    return ExperimentConfig(
        sys=sys,
        cost=cost,
        scenario=scenario,
        theta=theta,
        lam=lam,
        runs=runs,
        histogram_bins=bins,
        paired=bool(raw.get("paired", True)),
        per_stage_nominal=bool(raw.get("per_stage_nominal", False)),
        output_dir=raw.get("output_dir"),
        echo=raw,
    )


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate a YAML campaign configuration file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}")
    return config_from_dict(raw)


@dataclass(frozen=True)
class _PolicyFeed:
    """Per-stage arrays needed to roll a policy forward in batch."""

    K: np.ndarray
    L: np.ndarray
    filter_gains: np.ndarray
    init_gain: np.ndarray
    w_affine: tuple[np.ndarray, np.ndarray] | None
    w_const: np.ndarray | None


def _feed_for(
    mode: ControllerMode, sys: LinearSystem, x0_dist: DistributionSpec
) -> _PolicyFeed:
    init_gain = kalman_gain(x0_dist.cov(), sys)
    if isinstance(mode, WdrcController):
        H, h = mean_affine(sys, mode.solution, mode.nominal)
        return _PolicyFeed(
            K=mode.solution.K,
            L=mode.solution.L,
            filter_gains=mode.schedule.gains,
            init_gain=init_gain,
            w_affine=(H, h),
            w_const=None,
        )
    T = mode.horizon
    feed = np.stack([mode.nominal.cov(t) for t in range(T)])
    p0 = initial_posterior_cov(x0_dist, sys)
    _, _, gains = covariance_path(p0, feed, sys)
    means = np.stack([mode.nominal.mean(t) for t in range(T)])
    return _PolicyFeed(
        K=mode.K,
        L=mode.L,
        filter_gains=gains,
        init_gain=init_gain,
        w_affine=None,
        w_const=means,
    )


def _roll_batch(
    feed: _PolicyFeed,
    sys: LinearSystem,
    cost: CostSpec,
    x0_dist: DistributionSpec,
    x0s: np.ndarray,
    w: np.ndarray,
    v: np.ndarray,
) -> np.ndarray:
    """Vectorized closed loop over the run axis; returns per-run costs."""
    A, B, C = sys.A, sys.B, sys.C
    T = cost.horizon
    X = x0s
    Y = X @ C.T + v[:, 0]
    mu0 = x0_dist.mean()
    Xb = mu0 + (Y - mu0 @ C.T) @ feed.init_gain.T
    costs = np.zeros(X.shape[0])
    for t in range(T):
        U = Xb @ feed.K[t].T + feed.L[t]
        costs += np.einsum("ij,jk,ik->i", X, cost.Q, X)
        costs += np.einsum("ij,jk,ik->i", U, cost.R, U)
        if feed.w_affine is not None:
            H, h = feed.w_affine
            Wm = Xb @ H[t].T + h[t]
        else:
            Wm = feed.w_const[t]
        X = X @ A.T + U @ B.T + w[:, t]
        Y = X @ C.T + v[:, t + 1]
        prior = Xb @ A.T + U @ B.T + Wm
        Xb = prior + (Y - prior @ C.T) @ feed.filter_gains[t].T
    costs += np.einsum("ij,jk,ik->i", X, cost.Q_f, X)
    return costs


def _simulate_chunk(args) -> tuple[int, np.ndarray | None, np.ndarray | None]:
    """Worker: paired rollouts for a contiguous block of run indices."""
    (start, count, wdrc_feed, lqg_feed, scenario, sys, cost) = args
    T = cost.horizon
    n, n_y = sys.n_x, sys.n_y
    x0s = np.zeros((count, n))
    w = np.zeros((count, T, n))
    v = np.zeros((count, T + 1, n_y))
    for i in range(count):
        real = draw_realization(scenario, sys, T, start + i)
        x0s[i], w[i], v[i] = real.x0, real.w, real.v
    x0_dist = scenario.initial_state
    wdrc_costs = (
        _roll_batch(wdrc_feed, sys, cost, x0_dist, x0s, w, v)
        if wdrc_feed is not None
        else None
    )
    lqg_costs = (
        _roll_batch(lqg_feed, sys, cost, x0_dist, x0s, w, v)
        if lqg_feed is not None
        else None
    )
    return start, wdrc_costs, lqg_costs


def simulate_paired(
    wdrc_ctrl: WdrcController | None,
    lqg_ctrl: LqgController | None,
    scenario: ScenarioSpec,
    sys: LinearSystem,
    cost: CostSpec,
    runs: int,
    jobs: int = 1,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Simulate ``runs`` paired rollouts, optionally across processes.

    Both policies consume identical realizations per run index.  The
    result arrays are ordered by run index and do not depend on
    ``jobs``.
    """
    x0_dist = scenario.initial_state
    wdrc_feed = _feed_for(wdrc_ctrl, sys, x0_dist) if wdrc_ctrl else None
    lqg_feed = _feed_for(lqg_ctrl, sys, x0_dist) if lqg_ctrl else None
    jobs = max(1, jobs)
    chunk = runs if jobs == 1 else max(1, math.ceil(runs / jobs))
    tasks = [
        (start, min(chunk, runs - start), wdrc_feed, lqg_feed, scenario, sys, cost)
        for start in range(0, runs, chunk)
    ]
    if jobs == 1 or len(tasks) == 1:
        outputs = [_simulate_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_simulate_chunk, tasks))

    wdrc_costs = np.zeros(runs) if wdrc_feed is not None else None
    lqg_costs = np.zeros(runs) if lqg_feed is not None else None
    for start, wc, lc in outputs:
        if wc is not None:
            wdrc_costs[start : start + wc.size] = wc
        if lc is not None:
            lqg_costs[start : start + lc.size] = lc
    return wdrc_costs, lqg_costs


def run_campaign(
    cfg: ExperimentConfig,
    mode: str = "both",
    seed: int | None = None,
    runs: int | None = None,
    jobs: int = 1,
    opts: SolverOptions = SolverOptions(),
) -> CampaignResult:
    """Execute a full campaign: estimate, calibrate, synthesize, simulate.

    Args:
        cfg: Validated configuration.
        mode: ``wdrc``, ``lqg``, or ``both``.
        seed: Overrides the scenario seed.
        runs: Overrides the configured run count.
        jobs: Worker processes for the simulation phase.
        opts: Worst-case solver options.

    Returns:
        Statistics, certificate, and provenance for report emission.
    """
    if mode not in ("wdrc", "lqg", "both"):
        raise ValueError(f"mode must be wdrc, lqg, or both; got {mode!r}")
    scenario = cfg.scenario
    if seed is not None:
        scenario = ScenarioSpec(
            true_disturbance=scenario.true_disturbance,
            initial_state=scenario.initial_state,
            noise_cov=np.array(scenario.noise_cov),
            sample_count=scenario.sample_count,
            seed=seed,
        )
    n_runs = cfg.runs if runs is None else runs

    samples = draw_nominal_samples(
        scenario, cfg.cost.horizon, per_stage=cfg.per_stage_nominal
    )
    nominal = estimate_nominal(samples)

    want_wdrc = mode in ("wdrc", "both")
    lam = cfg.lam
    calibration = None
    certificate = None
    wdrc_ctrl = None
    if want_wdrc:
        if lam is None:
            calibration = calibrate_lambda(
                cfg.sys, cfg.cost, nominal, scenario, cfg.theta, opts=opts
            )
            lam = calibration.lam
        p0 = initial_posterior_cov(scenario.initial_state, cfg.sys)
        wdrc_ctrl = synthesize_wdrc(cfg.sys, cfg.cost, nominal, lam, p0, opts)
        certificate = performance_ratio(
            cfg.sys,
            cfg.cost,
            nominal,
            scenario,
            RobustnessParams(lam=lam, theta=cfg.theta),
            opts=opts,
            wdrc_ctrl=wdrc_ctrl,
        )
    lqg_ctrl = (
        lqg_gains(cfg.sys, cfg.cost, nominal) if mode in ("lqg", "both") else None
    )

    wdrc_costs, lqg_costs = simulate_paired(
        wdrc_ctrl, lqg_ctrl, scenario, cfg.sys, cfg.cost, n_runs, jobs
    )
    return CampaignResult(
        config=cfg,
        mode=mode,
        runs=n_runs,
        seed=scenario.seed,
        lam=lam if want_wdrc else None,
        calibration=calibration,
        certificate=certificate,
        wdrc=CostStatistics.from_costs(wdrc_costs) if wdrc_costs is not None else None,
        lqg=CostStatistics.from_costs(lqg_costs) if lqg_costs is not None else None,
        wdrc_ctrl=wdrc_ctrl,
        lqg_ctrl=lqg_ctrl,
        scenario=scenario,
    )


def paired_mean_z(baseline: np.ndarray, candidate: np.ndarray) -> float:
    """z-score for ``mean(baseline) > mean(candidate)`` on paired runs."""
    d = np.asarray(baseline, dtype=float) - np.asarray(candidate, dtype=float)
    se = d.std(ddof=1) / math.sqrt(d.size)
    return float(d.mean() / se)


def paired_std_z(baseline: np.ndarray, candidate: np.ndarray) -> float:
    """z-score for ``var(baseline) > var(candidate)`` on paired runs.

    Uses the identity ``cov(a + b, a - b) = var(a) - var(b)``: the
    mean of the centered cross products estimates the variance gap and
    its standard error comes from the same products.
    """
    a = np.asarray(baseline, dtype=float)
    b = np.asarray(candidate, dtype=float)
    u = (a + b) - (a + b).mean()
    w = (a - b) - (a - b).mean()
    p = u * w
    se = p.std(ddof=1) / math.sqrt(p.size)
    return float(p.mean() / se)


def build_histogram(
    bins: int, *cost_arrays: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Equal-width histogram over the pooled range of all cost arrays."""
    pooled = np.concatenate([np.asarray(c, dtype=float) for c in cost_arrays])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    return edges, [np.histogram(c, bins=edges)[0] for c in cost_arrays]


def _fmt(x: float) -> str:
    """Shortest round-trip decimal form, stable across runs."""
    return repr(float(x))


def _stats_dict(stats: CostStatistics) -> dict:
    return {
        "mean": stats.mean,
        "std_dev": stats.std_dev,
        "min": stats.minimum,
        "max": stats.maximum,
        "count": stats.count,
    }


def emit_reports(result: CampaignResult, out_dir: str) -> dict[str, str]:
    """Write the cost CSV, histogram CSV, and summary JSON.

    All three files are byte-deterministic functions of the campaign
    result: no timestamps, no environment-dependent content.

    Returns:
        Mapping from report name to the written path.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths: dict[str, str] = {}

    named = [
        (label, stats)
        for label, stats in (("wdrc", result.wdrc), ("lqg", result.lqg))
        if stats is not None
    ]

    costs_path = os.path.join(out_dir, "costs.csv")
    with open(costs_path, "w", newline="\n") as fh:
        fh.write("run," + ",".join(f"{label}_cost" for label, _ in named) + "\n")
        for i in range(result.runs):
            row = ",".join(_fmt(stats.costs[i]) for _, stats in named)
            fh.write(f"{i},{row}\n")
    paths["costs"] = costs_path

    hist_path = os.path.join(out_dir, "histogram.csv")
    edges, counts = build_histogram(
        result.config.histogram_bins, *[s.costs for _, s in named]
    )
    with open(hist_path, "w", newline="\n") as fh:
        fh.write(
            "bin_lo,bin_hi,"
            + ",".join(f"{label}_count" for label, _ in named)
            + "\n"
        )
        for k in range(edges.size - 1):
            row = ",".join(str(int(c[k])) for c in counts)
            fh.write(f"{_fmt(edges[k])},{_fmt(edges[k + 1])},{row}\n")
    paths["histogram"] = hist_path

    summary: dict[str, Any] = {
        "mode": result.mode,
        "runs": result.runs,
        "seed": result.seed,
        "paired": result.config.paired,
        "histogram_bins": result.config.histogram_bins,
        "lam": result.lam,
        "statistics": {label: _stats_dict(s) for label, s in named},
        "config": result.config.echo,
    }
    if result.calibration is not None:
        summary["calibration"] = {
            "lam": result.calibration.lam,
            "objective": result.calibration.objective,
            "hit_upper": result.calibration.hit_upper,
            "evaluations": len(result.calibration.evaluations),
        }
    if result.certificate is not None:
        cert = result.certificate
        summary["certificate"] = {
            "lam": cert.lam,
            "theta": cert.theta,
            "j_lambda": cert.j_lambda,
            "j_lambda_ref": cert.j_lambda_ref,
            "guaranteed_bound": cert.guaranteed_bound,
            "j_lq": cert.j_lq,
            "j_lq_ref": cert.j_lq_ref,
            "rho": cert.rho,
        }
    if result.wdrc is not None and result.lqg is not None:
        summary["paired_tests"] = {
            "mean_z": paired_mean_z(result.lqg.costs, result.wdrc.costs),
            "std_z": paired_std_z(result.lqg.costs, result.wdrc.costs),
        }
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = summary_path
    return paths
