"""Auxiliary exponents for strong well-posedness with nonlinear sigma.

Given (gamma, mu, q):

    p = 1/(1 - 1/q),  kappa = 1/(2q),  theta = 1 + kappa - mu,
    alpha0 = (2/q) / (1 - theta).

Admissibility asks for theta in (0, 1), alpha0 < 2 and

    (a) (1 + 2gamma - (1 + 2mu)/q) p < 1
    (b) H^kappa embeds in L^{2p}, i.e. kappa >= 1/2 - 1/(2p)
    (c) kappa = theta*mu + (1 - theta)(mu - 1)

Such (mu, q) exist iff gamma < gamma0 = (5 - sqrt(21))/4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExponentSet",
    "ConditionReport",
    "gamma0",
    "alpha0_closed_form",
    "derive_exponents",
    "check_conditions",
    "find_admissible",
]

_ALPHA0_DOMAIN = (3.0 - math.sqrt(5.0)) / 4.0
# q cap used for the search when gamma = 0 (the q-range is then unbounded above)
Q_CAP = 64.0


@dataclass(frozen=True)
class ExponentSet:
    gamma: float
    mu: float
    q: float
    p: float
    kappa: float
    theta: float
    alpha0: float


@dataclass(frozen=True)
class ConditionReport:
    """Signed slacks: positive means satisfied strictly, zero is the boundary."""

    theta_slack: float
    alpha0_slack: float
    cond_a_slack: float
    cond_b_slack: float
    cond_c_residual: float

    @property
    def theta_in_01(self) -> bool:
        return self.theta_slack > 0

    @property
    def alpha0_lt_2(self) -> bool:
        return self.alpha0_slack > 0

    @property
    def cond_a(self) -> bool:
        return self.cond_a_slack > 0

    @property
    def cond_b(self) -> bool:
        return self.cond_b_slack >= -1e-12

    @property
    def cond_c(self) -> bool:
        return abs(self.cond_c_residual) <= 1e-12

    @property
    def admissible(self) -> bool:
        return self.theta_in_01 and self.alpha0_lt_2 and self.cond_a and self.cond_b and self.cond_c

    @property
    def min_slack(self) -> float:
        # (b) holds with equality identically and (c) is an identity, so only
        # the strict inequalities carry a margin.
        return min(self.theta_slack, self.alpha0_slack, self.cond_a_slack)


def gamma0() -> float:
    return (5.0 - math.sqrt(21.0)) / 4.0


def alpha0_closed_form(gamma: float) -> float:
    """alpha0 at the corner mu = 1/2 - gamma, q = mu/gamma: 8 gamma / (4 gamma^2 - 6 gamma + 1)."""
    if not 0.0 <= gamma < _ALPHA0_DOMAIN:
        raise ValueError(f"gamma must lie in [0, (3-sqrt 5)/4), got {gamma}")
    return 8.0 * gamma / (4.0 * gamma * gamma - 6.0 * gamma + 1.0)


def derive_exponents(gamma: float, mu: float, q: float, strict: bool = True) -> ExponentSet:
    """Fill in p, kappa, theta, alpha0.

    Inputs are checked against the closure of the region, gamma <= mu <= 1/2 - gamma
    and 1 < q <= mu/gamma, so boundary points can be evaluated; strictness of
    the open conditions is left to :func:`check_conditions`.  ``strict=False``
    skips the checks entirely.
    """
    if strict:
        tol = 1e-12
        if gamma < 0:
            raise ValueError(f"need gamma >= 0, got {gamma}")
        if mu < gamma - tol:
            raise ValueError(f"need mu > gamma, got mu={mu}, gamma={gamma}")
        if mu > 0.5 - gamma + tol:
            raise ValueError(f"need mu < 1/2 - gamma, got mu={mu}, 1/2-gamma={0.5 - gamma}")
        if not q > 1:
            raise ValueError(f"need q > 1, got {q}")
        if gamma > 0 and q > mu / gamma * (1 + tol):
            raise ValueError(f"need q < mu/gamma = {mu / gamma}, got q={q}")
    p = 1.0 / (1.0 - 1.0 / q)
    kappa = 1.0 / (2.0 * q)
    theta = 1.0 + kappa - mu
    alpha0 = (2.0 / q) / (1.0 - theta) if theta != 1.0 else math.inf
    return ExponentSet(gamma, mu, q, p, kappa, theta, alpha0)


def check_conditions(e: ExponentSet) -> ConditionReport:
    lhs_a = (1.0 + 2.0 * e.gamma - (1.0 + 2.0 * e.mu) / e.q) * e.p
    # alpha0 slack is read off 1 - theta so that theta >= 1 reports a violation
    if e.theta < 1.0:
        alpha0_slack = 2.0 - e.alpha0
    else:
        alpha0_slack = -math.inf
    return ConditionReport(
        theta_slack=min(e.theta, 1.0 - e.theta),
        alpha0_slack=alpha0_slack,
        cond_a_slack=1.0 - lhs_a,
        cond_b_slack=e.kappa - (0.5 - 1.0 / (2.0 * e.p)),
        cond_c_residual=e.kappa - (e.theta * e.mu + (1.0 - e.theta) * (e.mu - 1.0)),
    )


def _slack_block(gamma, mu, q):
    p = 1.0 / (1.0 - 1.0 / q)
    kappa = 1.0 / (2.0 * q)
    theta = 1.0 + kappa - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha0 = np.where(theta < 1.0, (2.0 / q) / (1.0 - theta), np.inf)
    theta_slack = np.minimum(theta, 1.0 - theta)
    a_slack = 1.0 - (1.0 + 2.0 * gamma - (1.0 + 2.0 * mu) / q) * p
    return np.minimum(np.minimum(theta_slack, 2.0 - alpha0), a_slack)


def find_admissible(gamma: float, grid_resolution: int = 400) -> ExponentSet | None:
    """Grid point maximizing the smallest strict slack, or None if none is admissible.

    The grid is interior: mu uniform on (gamma, 1/2 - gamma) and, for each mu,
    q uniform on (1, mu/gamma).  Ties go to the lexicographically smallest (mu, q).
    """
    if not 0.0 <= gamma < 0.25:
        raise ValueError("gamma must lie in [0, 1/4)")
    if grid_resolution < 100:
        raise ValueError("grid_resolution must be >= 100")
    s = np.arange(1, grid_resolution + 1) / (grid_resolution + 1)
    mus = gamma + s * (0.5 - 2.0 * gamma)
    best, best_mu, best_q = 0.0, None, None
    rows = max(1, 2_000_000 // grid_resolution)
    for start in range(0, grid_resolution, rows):
        mu = mus[start : start + rows, None]
        q_hi = mu / gamma if gamma > 0 else np.full_like(mu, Q_CAP)
        q = 1.0 + s[None, :] * (q_hi - 1.0)
        slack = _slack_block(gamma, mu, q)
        top = slack.max()
        if top > best:
            # row-major order is lexicographic in (mu, q)
            i, j = np.unravel_index(np.flatnonzero(slack == top)[0], slack.shape)
            best, best_mu, best_q = top, float(mu[i, 0]), float(q[i, j])
    if best_mu is None:
        return None
    return derive_exponents(gamma, best_mu, best_q)
