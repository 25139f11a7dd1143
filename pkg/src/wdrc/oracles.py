"""Independent reference computations for validating the solvers.

Everything here deliberately avoids the production code paths: brute
force grids, central finite differences, inverse-CDF quadrature, and
closed forms that exist only in special cases.  Tests compare the fast
implementations against these slow routes; ``run_oracle_suite`` bundles
the same comparisons behind the ``oracle`` CLI subcommand.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from .bounds import evaluate_value
from .controller import synthesize_wdrc
from .estimator import BeliefState
from .model import CostSpec, GaussianSpec, LinearSystem, MomentPair, NominalDistribution
from .psdmath import gelbrich_dist_sq, symmetrize, trace_sqrt_product, transport_map
from .riccati import backward_pass
from .worstcase import (
    CovObjectiveContext,
    SolverOptions,
    cov_gradient,
    cov_objective,
    solve_worst_case_cov,
)

__all__ = [
    "lqr_gains",
    "grid_max",
    "bracket_max",
    "fd_gradient_sym",
    "gaussian_w2_quadrature",
    "worst_cov_no_obs",
    "t1_scalar_saddle",
    "run_oracle_suite",
]


def lqr_gains(sys: LinearSystem, cost: CostSpec) -> tuple[np.ndarray, np.ndarray]:
    """Textbook finite-horizon LQR recursion (no disturbance terms).

    Returns:
        ``(P, K)`` with ``P`` of shape ``(T + 1, n, n)`` and ``K`` of
        shape ``(T, n_u, n)``.
    """
    T = cost.horizon
    n, n_u = sys.n_x, sys.n_u
    P = np.zeros((T + 1, n, n))
    K = np.zeros((T, n_u, n))
    P[T] = cost.Q_f
    for t in reversed(range(T)):
        gram = cost.R + sys.B.T @ P[t + 1] @ sys.B
        K[t] = -np.linalg.solve(gram, sys.B.T @ P[t + 1] @ sys.A)
        P[t] = symmetrize(cost.Q + sys.A.T @ P[t + 1] @ (sys.A + sys.B @ K[t]))
    return P, K


def grid_max(f, lo: float, hi: float, points: int = 10001, refinements: int = 2):
    """Maximize a scalar function by gridding, zooming in twice.

    Returns:
        ``(argmax, max)`` after the final refinement pass.
    """
    xs = np.linspace(lo, hi, points)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmax(vals))
    for _ in range(refinements):
        lo = xs[max(k - 1, 0)]
        hi = xs[min(k + 1, points - 1)]
        xs = np.linspace(lo, hi, points)
        vals = np.array([f(x) for x in xs])
        k = int(np.argmax(vals))
    return float(xs[k]), float(vals[k])


def bracket_max(f, lo: float, hi: float, grow: float = 4.0, max_iter: int = 60):
    """Expand ``hi`` until the coarse argmax of ``f`` is interior."""
    for _ in range(max_iter):
        xs = np.linspace(lo, hi, 257)
        vals = np.array([f(x) for x in xs])
        if int(np.argmax(vals)) < xs.size - 1:
            return hi
        hi *= grow
    raise RuntimeError("maximum not bracketed; objective appears unbounded")


def fd_gradient_sym(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient over symmetric perturbations.

    The convention matches the analytic gradient: for symmetric ``G``
    and direction ``D``, ``f(x + t D) ~ f(x) + t tr[G D]``.
    """
    n = x.shape[0]
    g = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            d = np.zeros((n, n))
            d[i, j] = 1.0
            d[j, i] = 1.0
            step = (f(x + h * d) - f(x - h * d)) / (2.0 * h)
            if i == j:
                # d = E_ii, so the difference quotient is tr[G E_ii] = G_ii.
                g[i, i] = step
            else:
                # d = E_ij + E_ji, so the quotient is 2 G_ij.
                g[i, j] = g[j, i] = step / 2.0
    return g


def gaussian_w2_quadrature(
    mean_a: float, std_a: float, mean_b: float, std_b: float, points: int = 200001
) -> float:
    """Squared 2-Wasserstein distance between scalar Gaussians.

    Integrates the squared quantile gap by the midpoint rule, using
    nothing but the definition of the distance on the line.
    """
    u = (np.arange(points) + 0.5) / points
    qa = mean_a + std_a * stats.norm.ppf(u)
    qb = mean_b + std_b * stats.norm.ppf(u)
    return float(np.mean((qa - qb) ** 2))


def worst_cov_no_obs(
    s_next: np.ndarray, p_next: np.ndarray, lam: float, sigma_hat: np.ndarray
) -> np.ndarray:
    """Closed-form maximizer when the stage has no measurement.

    With ``C = 0`` the posterior equals the prior, the objective's
    stationarity condition becomes linear in the transport map, and

        cov = lam^2 (lam I - P - S)^{-1} sigma_hat (lam I - P - S)^{-1}

    whenever ``lam I - P - S`` is positive definite.
    """
    n = sigma_hat.shape[0]
    gap = lam * np.eye(n) - p_next - s_next
    if np.linalg.eigvalsh(symmetrize(gap)).min() <= 0.0:
        raise ValueError("no interior maximizer: lam I - P - S is not PD")
    inv = np.linalg.inv(gap)
    return symmetrize(lam * lam * inv @ sigma_hat @ inv)


def t1_scalar_saddle(
    a: float,
    b: float,
    q: float,
    q_f: float,
    r: float,
    lam: float,
    w_hat: float,
    sigma_hat: float,
    x0: float,
    grid_points: int = 4001,
) -> float:
    """Brute-force saddle value of the one-step scalar problem.

    The state starts at a known ``x0``; the controller picks ``u``, the
    adversary then picks a Gaussian disturbance ``(w_mean, w_var)`` and
    pays the quadratic transport penalty.  Both layers are resolved by
    refined grids, giving

        min_u [ q x0^2 + r u^2
                + max_w_mean ( q_f (a x0 + b u + w_mean)^2
                               - lam (w_mean - w_hat)^2 )
                + max_w_var ( q_f w_var
                              - lam (sqrt(w_var) - sqrt(sigma_hat))^2 ) ]

    which requires ``lam > q_f`` for the inner maxima to exist.
    """
    if lam <= q_f:
        raise ValueError("inner maximization unbounded: need lam > q_f")

    def var_term(v: float) -> float:
        return q_f * v - lam * (np.sqrt(v) - np.sqrt(sigma_hat)) ** 2

    v_hi = bracket_max(var_term, 0.0, max(4.0 * sigma_hat, 1.0))
    _, var_star = grid_max(var_term, 0.0, v_hi, grid_points)

    span = (abs(w_hat) + abs(x0) + 1.0) * max(
        4.0, 4.0 * q_f / (lam - q_f)
    )

    def stage_value(u: float) -> float:
        m = a * x0 + b * u

        def mean_term(w: float) -> float:
            return q_f * (m + w) ** 2 - lam * (w - w_hat) ** 2

        w_lo, w_hi_ = w_hat - span - abs(m), w_hat + span + abs(m)
        _, mean_star = grid_max(mean_term, w_lo, w_hi_, grid_points, refinements=3)
        return q * x0 * x0 + r * u * u + mean_star + var_star

    u_span = (abs(x0) + abs(w_hat) + 1.0) * 8.0
    us = np.linspace(-u_span, u_span, grid_points)
    vals = np.array([stage_value(u) for u in us])
    k = int(np.argmin(vals))
    for _ in range(2):
        lo, hi = us[max(k - 1, 0)], us[min(k + 1, us.size - 1)]
        us = np.linspace(lo, hi, grid_points)
        vals = np.array([stage_value(u) for u in us])
        k = int(np.argmin(vals))
    return float(vals[k])


def _random_psd(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    m = rng.standard_normal((n, n))
    return symmetrize(m @ m.T * scale / n + 1e-3 * np.eye(n))


def _random_ctx(rng: np.random.Generator, n: int, n_y: int) -> CovObjectiveContext:
    sys = LinearSystem(
        A=rng.standard_normal((n, n)) / np.sqrt(n),
        B=rng.standard_normal((n, 1)),
        C=rng.standard_normal((n_y, n)),
        M=_random_psd(rng, n_y) + 0.1 * np.eye(n_y),
    )
    p_next = _random_psd(rng, n)
    s_next = _random_psd(rng, n)
    lam = float(np.linalg.eigvalsh(p_next).max() * (2.0 + rng.random() * 3.0) + 1.0)
    return CovObjectiveContext(
        S_next=s_next,
        P_next=p_next,
        lam=lam,
        Sigma_hat=_random_psd(rng, n),
        P_bar=_random_psd(rng, n),
        sys=sys,
    )


def run_oracle_suite(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Cross-check the fast implementations against the slow routes.

    Returns:
        ``(name, passed, detail)`` triples, one per check.
    """
    rng = np.random.default_rng(seed)
    results: list[tuple[str, bool, str]] = []

    def record(name: str, err: float, tol: float) -> None:
        results.append((name, bool(err <= tol), f"max err {err:.3e} (tol {tol:.0e})"))

    # Square-root trace of a product: closed form against raw eigenvalues.
    err = 0.0
    for n in (1, 2, 3):
        for _ in range(20):
            a, b = _random_psd(rng, n), _random_psd(rng, n)
            root_a = np.linalg.cholesky(a + 1e-12 * np.eye(n))
            eigs = np.linalg.eigvalsh(symmetrize(root_a.T @ b @ root_a))
            ref = float(np.sqrt(np.clip(eigs, 0.0, None)).sum())
            err = max(err, abs(trace_sqrt_product(a, b) - ref) / max(ref, 1.0))
    record("trace_sqrt_product vs eigenvalue route", err, 1e-9)

    # Transport map pushes the first covariance onto the second.
    err = 0.0
    for n in (1, 2, 3):
        for _ in range(20):
            a = _random_psd(rng, n) + 0.05 * np.eye(n)
            b = _random_psd(rng, n)
            t = transport_map(a, b)
            err = max(err, float(np.abs(t @ a @ t - b).max()))
    record("transport map pushforward", err, 1e-8)

    # Scalar Gaussian distance: moment formula against quantile quadrature.
    err = 0.0
    for _ in range(5):
        ma, mb = rng.normal(size=2)
        sa, sb = 0.2 + rng.random(2)
        quad = gaussian_w2_quadrature(ma, sa, mb, sb)
        closed = gelbrich_dist_sq(
            MomentPair(np.array([ma]), np.array([[sa * sa]])),
            MomentPair(np.array([mb]), np.array([[sb * sb]])),
        )
        err = max(err, abs(quad - closed) / max(closed, 1e-6))
    record("scalar distance vs quantile quadrature", err, 1e-3)

    # Covariance objective gradient against central finite differences.
    err = 0.0
    for n in (1, 2, 3):
        for _ in range(10):
            ctx = _random_ctx(rng, n, max(1, n - 1))
            sigma = _random_psd(rng, n) + 0.05 * np.eye(n)
            grad = cov_gradient(sigma, ctx)
            fd = fd_gradient_sym(lambda s: cov_objective(s, ctx), sigma)
            scale = max(float(np.abs(grad).max()), 1.0)
            err = max(err, float(np.abs(grad - fd).max()) / scale)
    record("covariance gradient vs finite differences", err, 1e-5)

    # Scalar worst-case covariance: ascent solver against a refined grid.
    err = 0.0
    for _ in range(10):
        ctx = _random_ctx(rng, 1, 1)
        solve = solve_worst_case_cov(ctx, SolverOptions())

        def f(v: float) -> float:
            return cov_objective(np.array([[max(v, 1e-12)]]), ctx)

        hi = bracket_max(f, 0.0, float(ctx.Sigma_hat[0, 0]) * 8.0 + 1.0)
        v_star, f_star = grid_max(f, 0.0, hi)
        err = max(err, abs(float(solve.cov[0, 0]) - v_star) / max(v_star, 1e-9))
        err = max(err, abs(solve.z_tilde - f_star) / max(abs(f_star), 1e-9))
    record("scalar worst-case covariance vs grid", err, 1e-3)

    # Unobserved stage: ascent solver against the closed form.
    err = 0.0
    for n in (1, 2, 3):
        for _ in range(5):
            ctx0 = _random_ctx(rng, n, 1)
            lam = float(
                np.linalg.eigvalsh(ctx0.P_next + ctx0.S_next).max() * 2.0 + 1.0
            )
            ctx = CovObjectiveContext(
                S_next=ctx0.S_next,
                P_next=ctx0.P_next,
                lam=lam,
                Sigma_hat=ctx0.Sigma_hat,
                P_bar=ctx0.P_bar,
                sys=LinearSystem(
                    A=ctx0.sys.A,
                    B=ctx0.sys.B,
                    C=np.zeros((1, n)),
                    M=np.eye(1),
                ),
            )
            ref = worst_cov_no_obs(ctx.S_next, ctx.P_next, lam, ctx.Sigma_hat)
            solve = solve_worst_case_cov(ctx, SolverOptions())
            err = max(
                err,
                float(np.abs(solve.cov - ref).max()) / max(np.abs(ref).max(), 1e-9),
            )
    record("unobserved-stage covariance vs closed form", err, 1e-4)

    # One-step scalar problem: recursion value against the grid saddle.
    err = 0.0
    for _ in range(3):
        a = float(rng.uniform(0.5, 1.5))
        b = float(rng.uniform(0.5, 1.5))
        q_f = float(rng.uniform(0.5, 2.0))
        lam = q_f * float(rng.uniform(3.0, 6.0))
        w_hat = float(rng.uniform(-0.5, 0.5))
        sigma_hat = float(rng.uniform(0.05, 0.5))
        x0 = float(rng.uniform(-1.0, 1.0))
        sys = LinearSystem(
            A=np.array([[a]]),
            B=np.array([[b]]),
            C=np.array([[1.0]]),
            M=np.array([[0.5]]),
        )
        cost = CostSpec(
            Q=np.array([[1.0]]),
            Q_f=np.array([[q_f]]),
            R=np.array([[1.0]]),
            horizon=1,
        )
        nominal = NominalDistribution(
            (MomentPair(np.array([w_hat]), np.array([[sigma_hat]])),)
        )
        ctrl = synthesize_wdrc(sys, cost, nominal, lam, np.zeros((1, 1)))
        value = evaluate_value(
            ctrl.solution,
            ctrl.schedule.z_tilde_path,
            BeliefState(np.array([x0]), np.zeros((1, 1))),
        )
        ref = t1_scalar_saddle(
            a, b, 1.0, q_f, 1.0, lam, w_hat, sigma_hat, x0, grid_points=401
        )
        err = max(err, abs(value - ref) / max(abs(ref), 1e-6))
    record("one-step value vs grid saddle", err, 1e-3)

    # Huge penalty collapses the robust gains onto plain LQR.
    sys = LinearSystem(
        A=np.array([[0.9, 0.2], [-0.1, 0.8]]),
        B=np.array([[1.0], [0.5]]),
        C=np.array([[1.0, 0.0]]),
        M=np.array([[0.1]]),
    )
    cost = CostSpec(Q=np.eye(2), Q_f=np.eye(2), R=np.eye(1), horizon=15)
    nominal = NominalDistribution(
        tuple(
            MomentPair(np.zeros(2), 0.01 * np.eye(2)) for _ in range(cost.horizon)
        )
    )
    sol = backward_pass(sys, cost, nominal, 1e8)
    _, k_ref = lqr_gains(sys, cost)
    err = float(np.abs(sol.K - k_ref).max()) / max(float(np.abs(k_ref).max()), 1.0)
    record("huge-penalty gains vs plain LQR", err, 1e-6)

    return results
