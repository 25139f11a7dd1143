"""Backward Riccati synthesis for the penalized minimax LQ problem.

The disturbance ambiguity enters through a penalty parameter ``lam``
that shifts the usual control-weight term: with

    Phi = B R^{-1} B' - (1/lam) I,

the value-function coefficients satisfy, backward from the terminal
stage ``P_T = Q_f``, ``S_T = 0``, ``r_T = 0``, ``z_T = 0``:

    P_t = Q + A' (I + P_{t+1} Phi)^{-1} P_{t+1} A
    S_t = Q + A' P_{t+1} A - P_t
    r_t = A' (I + P_{t+1} Phi)^{-1} (r_{t+1} + P_{t+1} w_hat_t)
    z_t = z_{t+1} + (2 w_hat_t - Phi r_{t+1})' (I + P_{t+1} Phi)^{-1} r_{t+1}
          + w_hat_t' (I + P_{t+1} Phi)^{-1} P_{t+1} w_hat_t
          - lam * tr[Sigma_hat_t]

with the affine control gains

    K_t = -R^{-1} B' (I + P_{t+1} Phi)^{-1} P_{t+1} A
    L_t = -R^{-1} B' (I + P_{t+1} Phi)^{-1} (P_{t+1} w_hat_t + r_{t+1}).

The synthesis is valid only when ``lam I - P_t`` is positive definite
at every stage ``t = 1..T``; violations raise
:class:`~wdrc.errors.PenaltyTooSmall`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleLambda, PenaltyTooSmall, SingularMatrix
from .model import CostSpec, LinearSystem, NominalDistribution
from .psdmath import symmetrize

__all__ = [
    "RiccatiSolution",
    "PenaltyFeasibility",
    "backward_pass",
    "check_penalty",
    "min_feasible_lambda",
]

# Relative safety factor applied to the feasibility boundary found by
# bisection, so downstream solves stay clear of the singular limit.
SAFETY_FACTOR = 1e-3


@dataclass(frozen=True)
class RiccatiSolution:
    """Stagewise value-function coefficients and control gains.

    Attributes:
        P: Quadratic coefficients, ``(T + 1, n, n)``; ``P[T] = Q_f``.
        S: Estimation-error coefficients, ``(T + 1, n, n)``.
        r: Linear coefficients, ``(T + 1, n)``.
        z: Scalar offsets, ``(T + 1,)``.
        K: Feedback gains on the state estimate, ``(T, n_u, n)``.
        L: Affine input offsets, ``(T, n_u)``.
        Phi: Penalty-shifted control weight ``B R^{-1} B' - I / lam``.
        lam: Penalty parameter the pass was run with.
    """

    P: np.ndarray
    S: np.ndarray
    r: np.ndarray
    z: np.ndarray
    K: np.ndarray
    L: np.ndarray
    Phi: np.ndarray
    lam: float

    @property
    def horizon(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class PenaltyFeasibility:
    """Outcome of the penalty feasibility check.

    ``margin`` is the smallest eigenvalue of ``lam I - P_t`` over stages
    ``1..T``; the penalty is feasible when it is strictly positive.
    """

    feasible: bool
    margin: float


def _solve_stage(lhs: np.ndarray, rhs: np.ndarray, t: int) -> np.ndarray:
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"stage {t}: {exc}") from exc


def backward_pass(
    sys: LinearSystem,
    cost: CostSpec,
    nominal: NominalDistribution,
    lam: float,
) -> RiccatiSolution:
    """Run the backward recursion and assemble gains.

    Args:
        sys: Plant matrices.
        cost: Quadratic stage and terminal weights with the horizon.
        nominal: Per-stage nominal disturbance moments; must cover the
            horizon.
        lam: Penalty parameter; must satisfy the feasibility condition.

    Returns:
        The stagewise coefficients and gains.

    Raises:
        PenaltyTooSmall: If ``lam I - P_t`` loses positive definiteness
            at any stage ``t >= 1``.
        SingularMatrix: If a stage system is numerically singular.
    """
    A, B = sys.A, sys.B
    n, n_u, T = sys.n_x, sys.n_u, cost.horizon
    if nominal.horizon < T:
        raise ValueError(
            f"nominal covers {nominal.horizon} stages, horizon is {T}"
        )
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")

    Phi = symmetrize(B @ np.linalg.solve(cost.R, B.T) - np.eye(n) / lam)
    P = np.zeros((T + 1, n, n))
    S = np.zeros((T + 1, n, n))
    r = np.zeros((T + 1, n))
    z = np.zeros(T + 1)
    K = np.zeros((T, n_u, n))
    L = np.zeros((T, n_u))

    P[T] = cost.Q_f
    _check_stage_margin(P[T], lam, T)

    for t in range(T - 1, -1, -1):
        P_next, r_next = P[t + 1], r[t + 1]
        w_hat = nominal.mean(t)
        sigma_hat = nominal.cov(t)

        lhs = np.eye(n) + P_next @ Phi
        # One factorization serves P, S, r, z, K, and L at this stage.
        rhs = np.concatenate(
            [
                P_next @ A,
                (r_next + P_next @ w_hat)[:, None],
                r_next[:, None],
            ],
            axis=1,
        )
        sol = _solve_stage(lhs, rhs, t)
        ric = sol[:, :n]           # (I + P Phi)^-1 P A
        vec = sol[:, n]            # (I + P Phi)^-1 (r + P w_hat)
        d_r = sol[:, n + 1]        # (I + P Phi)^-1 r

        P[t] = symmetrize(cost.Q + A.T @ ric)
        S[t] = symmetrize(cost.Q + A.T @ (P_next @ A) - P[t])
        r[t] = A.T @ vec
        K[t] = -np.linalg.solve(cost.R, B.T @ ric)
        L[t] = -np.linalg.solve(cost.R, B.T @ vec)

        z[t] = (
            z[t + 1]
            + float((2.0 * w_hat - Phi @ r_next) @ d_r)
            + float(w_hat @ (vec - d_r))
            - lam * float(np.trace(sigma_hat))
        )
        if t >= 1:
            _check_stage_margin(P[t], lam, t)

    return RiccatiSolution(P=P, S=S, r=r, z=z, K=K, L=L, Phi=Phi, lam=lam)


def _check_stage_margin(P_t: np.ndarray, lam: float, t: int) -> float:
    margin = lam - float(np.linalg.eigvalsh(P_t)[-1])
    if margin <= 0.0:
        raise PenaltyTooSmall(stage=t, margin=margin)
    return margin


def check_penalty(
    sys: LinearSystem, cost: CostSpec, lam: float
) -> PenaltyFeasibility:
    """Report the feasibility margin of ``lam`` without raising.

    Runs the quadratic-coefficient recursion only (it does not depend
    on the nominal moments) and returns the worst margin of
    ``lam I - P_t`` over stages ``1..T``.

    Raises:
        SingularMatrix: If a stage system is numerically singular.
    """
    A = sys.A
    n, T = sys.n_x, cost.horizon
    Phi = symmetrize(sys.B @ np.linalg.solve(cost.R, sys.B.T) - np.eye(n) / lam)
    P_next = np.asarray(cost.Q_f, dtype=float)
    margin = lam - float(np.linalg.eigvalsh(P_next)[-1])
    for t in range(T - 1, 0, -1):
        lhs = np.eye(n) + P_next @ Phi
        P_next = symmetrize(cost.Q + A.T @ _solve_stage(lhs, P_next @ A, t))
        margin = min(margin, lam - float(np.linalg.eigvalsh(P_next)[-1]))
    return PenaltyFeasibility(feasible=margin > 0.0, margin=margin)


def min_feasible_lambda(
    sys: LinearSystem,
    cost: CostSpec,
    lo: float,
    hi: float,
    tol: float = 1e-6,
) -> float:
    """Locate the smallest feasible penalty in ``[lo, hi]`` by bisection.

    A penalty for which the recursion hits a singular stage system is
    treated as infeasible.  The returned value is the bisection
    boundary inflated by a relative safety factor, so it is strictly
    feasible for downstream synthesis.

    Raises:
        NoFeasibleLambda: If ``hi`` itself is infeasible.
    """
    if not (0.0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")

    def feasible(lam: float) -> bool:
        try:
            return check_penalty(sys, cost, lam).feasible
        except SingularMatrix:
            return False

    if not feasible(hi):
        raise NoFeasibleLambda(f"no feasible penalty in [{lo}, {hi}]")
    if feasible(lo):
        return lo * (1.0 + SAFETY_FACTOR)
    bad, good = lo, hi
    while good - bad > tol * max(1.0, bad):
        mid = 0.5 * (bad + good)
        if feasible(mid):
            good = mid
        else:
            bad = mid
    return good * (1.0 + SAFETY_FACTOR)
