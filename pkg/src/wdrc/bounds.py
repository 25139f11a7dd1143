"""Optimal-value evaluation, guaranteed cost bounds, and calibration.

The synthesized policy's optimal value at stage 0, conditioned on an
initial belief ``(x_bar_0, P_bar_0)``, is

    J = x_bar_0' P_0 x_bar_0 + tr[(P_0 + S_0) P_bar_0]
        + 2 r_0' x_bar_0 + z_0 + sum_t z_tilde_t.

Averaging over the first measurement gives the penalized optimal value
``J_lam``; adding ``lam T theta^2`` turns it into an upper bound on the
expected cost under any disturbance law within Gelbrich distance
``theta`` of the nominal at every stage.  The ratio of that bound to
the nominal LQG value quantifies the premium paid for robustness.

``calibrate_lambda`` picks the penalty that minimizes the bound by a
coarse log-grid scan followed by golden-section refinement, falling
back to the best scanned point if refinement does not improve on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import LqgController, lqg_gains, synthesize_wdrc
from .errors import DegenerateLQ, Diverged, NoFeasibleLambda, PenaltyTooSmall
from .estimator import (
    BeliefState,
    covariance_path,
    initial_posterior_cov,
    kalman_gain,
)
from .model import (
    STREAM_VALUE_MC,
    CostSpec,
    DistributionSpec,
    GaussianSpec,
    LinearSystem,
    NominalDistribution,
    RobustnessParams,
    ScenarioSpec,
    split_stream,
)
from .riccati import min_feasible_lambda
from .worstcase import SolverOptions

__all__ = [
    "CostCertificate",
    "CalibrationResult",
    "evaluate_value",
    "expected_value",
    "guaranteed_cost",
    "reference_belief",
    "lqg_value_terms",
    "performance_ratio",
    "calibrate_lambda",
]

DEFAULT_MC_SAMPLES = 10_000
DEFAULT_LAMBDA_CAP = 1e6


@dataclass(frozen=True)
class CostCertificate:
    """Guaranteed-bound certificate of a synthesized robust policy.

    ``j_lambda`` and ``j_lq`` average the respective optimal values
    over the first measurement by Monte Carlo; the ``_ref`` variants
    condition on the noiseless reference measurement instead.
    """

    lam: float
    theta: float
    j_lambda: float
    j_lambda_ref: float
    guaranteed_bound: float
    j_lq: float
    j_lq_ref: float
    rho: float


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of the penalty calibration.

    Attributes:
        lam: Minimizer of the guaranteed bound.
        objective: Bound value at the minimizer.
        hit_upper: True when the search ended at the bracket's upper
            edge (the bound kept decreasing, as with ``theta = 0``).
        evaluations: All ``(lam, objective)`` pairs evaluated.
    """

    lam: float
    objective: float
    hit_upper: bool
    evaluations: tuple[tuple[float, float], ...]


def evaluate_value(sol, z_tilde_path: np.ndarray, b0: BeliefState) -> float:
    """Optimal value at stage 0 for one initial belief.

    ``sol`` needs stagewise coefficients ``P``, ``S``, ``r``, ``z``;
    both the robust solution and the baseline controller qualify.
    """
    z_tilde_path = np.asarray(z_tilde_path, dtype=float)
    horizon = sol.P.shape[0] - 1
    if z_tilde_path.shape[0] != horizon:
        raise ValueError(
            f"z_tilde_path has {z_tilde_path.shape[0]} stages, expected {horizon}"
        )
    x, cov = b0.mean, b0.cov
    return (
        float(x @ sol.P[0] @ x)
        + float(np.trace((sol.P[0] + sol.S[0]) @ cov))
        + 2.0 * float(sol.r[0] @ x)
        + float(sol.z[0])
        + float(z_tilde_path.sum())
    )


def reference_belief(x0_dist: DistributionSpec, sys: LinearSystem) -> BeliefState:
    """Belief after observing the noiseless average measurement.

    With ``y_0 = C mean(x_0)`` the innovation vanishes, so the belief
    mean equals the prior mean while the covariance contracts as usual.
    """
    return BeliefState(
        mean=x0_dist.mean(), cov=initial_posterior_cov(x0_dist, sys)
    )


def _y0_samples(
    x0_dist: DistributionSpec, sys: LinearSystem, seed: int, count: int
) -> np.ndarray:
    """Sample first measurements under the model's noise law."""
    rng = split_stream(seed, STREAM_VALUE_MC)
    x0 = x0_dist.sample(rng, count)
    noise = GaussianSpec(np.zeros(sys.n_y), sys.M)
    return x0 @ sys.C.T + noise.sample(rng, count)


def expected_value(
    sol,
    z_tilde_path: np.ndarray,
    x0_dist: DistributionSpec,
    sys: LinearSystem,
    y0_samples: np.ndarray,
) -> float:
    """Average the stage-0 value over sampled first measurements.

    The belief covariance does not depend on the measurement, so only
    the quadratic-in-mean part is averaged.
    """
    base = reference_belief(x0_dist, sys)
    mu = x0_dist.mean()
    gain = kalman_gain(x0_dist.cov(), sys)
    means = mu + (y0_samples - mu @ sys.C.T) @ gain.T
    fixed = evaluate_value(sol, z_tilde_path, base)
    quad = np.einsum("ij,jk,ik->i", means, sol.P[0], means)
    quad_ref = float(mu @ sol.P[0] @ mu)
    lin = 2.0 * (means @ sol.r[0])
    lin_ref = 2.0 * float(sol.r[0] @ mu)
    return fixed + float(np.mean(quad - quad_ref + lin - lin_ref))


def guaranteed_cost(lam: float, horizon: int, theta: float, j_lambda: float) -> float:
    """Upper bound ``lam * T * theta^2 + j_lambda`` on the worst-case cost."""
    return lam * horizon * theta * theta + j_lambda


def lqg_value_terms(
    sys: LinearSystem,
    cost: CostSpec,
    nominal: NominalDistribution,
    x0_dist: DistributionSpec,
) -> tuple[LqgController, np.ndarray]:
    """Baseline controller plus its per-stage value trace terms.

    The returned path holds ``tr[S_{t+1} P_bar_{t+1}] +
    tr[P_{t+1} Sigma_hat_t]`` along the nominal filter covariance path,
    completing the baseline value in the same convention the robust
    value uses.
    """
    ctrl = lqg_gains(sys, cost, nominal)
    T = cost.horizon
    p0 = initial_posterior_cov(x0_dist, sys)
    feed = np.stack([nominal.cov(t) for t in range(T)])
    _, post_covs, _ = covariance_path(p0, feed, sys)
    path = np.array(
        [
            float(np.trace(ctrl.S[t + 1] @ post_covs[t + 1]))
            + float(np.trace(ctrl.P[t + 1] @ nominal.cov(t)))
            for t in range(T)
        ]
    )
    return ctrl, path


def performance_ratio(
    sys: LinearSystem,
    cost: CostSpec,
    nominal: NominalDistribution,
    scenario: ScenarioSpec,
    params: RobustnessParams,
    opts: SolverOptions = SolverOptions(),
    mc_samples: int = DEFAULT_MC_SAMPLES,
    wdrc_ctrl=None,
) -> CostCertificate:
    """Certificate comparing the robust bound with the baseline value.

    Args:
        wdrc_ctrl: Optional pre-synthesized robust controller for
            ``params.lam``; synthesized here when omitted.

    Raises:
        DegenerateLQ: If the baseline value is not strictly positive,
            which would make the ratio meaningless.
    """
    x0_dist = scenario.initial_state
    p0 = initial_posterior_cov(x0_dist, sys)
    ctrl = wdrc_ctrl
    if ctrl is None:
        ctrl = synthesize_wdrc(sys, cost, nominal, params.lam, p0, opts)
    y0 = _y0_samples(x0_dist, sys, scenario.seed, mc_samples)
    z_tilde = ctrl.schedule.z_tilde_path

    ref = reference_belief(x0_dist, sys)
    j_lambda_ref = evaluate_value(ctrl.solution, z_tilde, ref)
    j_lambda = expected_value(ctrl.solution, z_tilde, x0_dist, sys, y0)

    lqg, lq_path = lqg_value_terms(sys, cost, nominal, x0_dist)
    j_lq_ref = evaluate_value(lqg, lq_path, ref)
    j_lq = expected_value(lqg, lq_path, x0_dist, sys, y0)
    if not math.isfinite(j_lq) or j_lq <= 0.0:
        raise DegenerateLQ(f"baseline value {j_lq} is not strictly positive")

    bound = guaranteed_cost(params.lam, cost.horizon, params.theta, j_lambda)
    return CostCertificate(
        lam=params.lam,
        theta=params.theta,
        j_lambda=j_lambda,
        j_lambda_ref=j_lambda_ref,
        guaranteed_bound=bound,
        j_lq=j_lq,
        j_lq_ref=j_lq_ref,
        rho=bound / j_lq,
    )


def _bound_objective(
    sys: LinearSystem,
    cost: CostSpec,
    nominal: NominalDistribution,
    x0_dist: DistributionSpec,
    theta: float,
    y0_samples: np.ndarray,
    opts: SolverOptions,
    p0: np.ndarray,
):
    """Build ``g(lam)``, treating infeasible or stalled solves as infinite."""

    def g(lam: float) -> float:
        try:
            ctrl = synthesize_wdrc(sys, cost, nominal, lam, p0, opts, strict=True)
        except (PenaltyTooSmall, Diverged):
            return math.inf
        j_lambda = expected_value(
            ctrl.solution, ctrl.schedule.z_tilde_path, x0_dist, sys, y0_samples
        )
        return guaranteed_cost(lam, cost.horizon, theta, j_lambda)

    return g


def calibrate_lambda(
    sys: LinearSystem,
    cost: CostSpec,
    nominal: NominalDistribution,
    scenario: ScenarioSpec,
    theta: float,
    lam_cap: float = DEFAULT_LAMBDA_CAP,
    scan_points: int = 33,
    opts: SolverOptions = SolverOptions(),
    mc_samples: int = DEFAULT_MC_SAMPLES,
) -> CalibrationResult:
    """Minimize the guaranteed bound over the penalty parameter.

    The search runs over ``[lam_min, lam_cap]`` in log space, where
    ``lam_min`` is the bisected feasibility boundary: a coarse scan
    locates the basin, golden-section refines it, and the better of the
    two wins.  Measurement samples for the value average are drawn once
    and shared across all evaluations, so the objective is a fixed
    deterministic function during the search.

    Raises:
        NoFeasibleLambda: If no penalty in the bracket yields a finite
            objective.
    """
    x0_dist = scenario.initial_state
    lam_min = min_feasible_lambda(sys, cost, lo=1e-9 * lam_cap, hi=lam_cap)
    y0 = _y0_samples(x0_dist, sys, scenario.seed, mc_samples)
    p0 = initial_posterior_cov(x0_dist, sys)
    g = _bound_objective(sys, cost, nominal, x0_dist, theta, y0, opts, p0)

    evaluations: list[tuple[float, float]] = []

    def eval_log(s: float) -> float:
        val = g(math.exp(s))
        evaluations.append((math.exp(s), val))
        return val

    lo, hi = math.log(lam_min), math.log(lam_cap)
    grid = np.linspace(lo, hi, scan_points)
    scanned = np.array([eval_log(s) for s in grid])
    if not np.isfinite(scanned).any():
        raise NoFeasibleLambda(
            f"guaranteed bound is infinite throughout [{lam_min}, {lam_cap}]"
        )
    best = int(np.argmin(scanned))

    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, scan_points - 1)]
    s_star, g_star = _golden_min(eval_log, a, b, tol=1e-7)
    if scanned[best] < g_star:
        s_star, g_star = grid[best], float(scanned[best])

    hit_upper = best >= scan_points - 1 and s_star >= hi - 1e-6
    return CalibrationResult(
        lam=math.exp(s_star),
        objective=g_star,
        hit_upper=hit_upper,
        evaluations=tuple(evaluations),
    )


def _golden_min(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Golden-section minimization on ``[a, b]``; returns ``(x, f(x))``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)
