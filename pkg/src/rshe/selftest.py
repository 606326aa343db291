"""Quick exact-identity checks run by ``rshe selftest``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import BrownianLattice, Truncated, mollifier_multipliers, renorm_constant
from .solver import FieldIC, SimConfig, Zero, solve
from .spectral import (
    FourierField,
    basis_eval,
    from_grid,
    grid_points,
    laplacian,
    mode_range,
    pair_alpha,
    sobolev_norm,
    to_grid,
)

__all__ = ["Check", "run_selftest"]


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error < self.tol)


def _rel(a, b) -> float:
    return float(abs(a - b) / max(abs(b), 1e-300))


def _product_coeffs(w: np.ndarray, n: int, out_max: int) -> np.ndarray:
    """Coefficients of w * e^n for modes |m| <= out_max."""
    N = (w.size - 1) // 2
    M = 2 * (N + abs(n) + out_max) + 8
    x = grid_points(M)
    return from_grid(to_grid(w, M) * basis_eval(n, x), out_max)


def rearrangement_sides(w: np.ndarray, gamma: float, mu: float, L: int):
    """Both sides of sum_n <n>^{2g} sum_{|m|<=L} <m>^{2mu-2} (w e^n, e^m)^2
    = sum_{|m|<=L} <m>^{2mu-2} ||w e^m||^2_{H^g}, computed independently."""
    N = (w.size - 1) // 2
    span = N + L
    ms = mode_range(L).astype(float)
    lhs = 0.0
    for n in range(-span, span + 1):
        c = _product_coeffs(w, n, L)
        lhs += (1 + n * n) ** gamma * np.sum((1 + ms * ms) ** (mu - 1) * c * c)
    rhs = 0.0
    for m in range(-L, L + 1):
        f = FourierField(_product_coeffs(w, m, span))
        rhs += (1 + m * m) ** (mu - 1) * sobolev_norm(f, gamma) ** 2
    return lhs, rhs


def run_selftest(seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    checks = []

    N = 16
    c = rng.standard_normal(2 * N + 1)
    M = 64
    vals = to_grid(c, M)
    l2_grid = np.sum(vals**2) * 2 * np.pi / M
    checks.append(Check("parseval", _rel(l2_grid, float(c @ c)), 1e-12))
    checks.append(Check("grid round trip", float(np.max(np.abs(from_grid(vals, N) - c))), 1e-12))

    x = grid_points(M)
    E = basis_eval(mode_range(N)[:, None], x[None, :])
    gram = E @ E.T * (2 * np.pi / M)
    checks.append(Check("orthonormality", float(np.max(np.abs(gram - np.eye(2 * N + 1)))), 1e-12))

    v = FourierField(c)
    mu = 0.3
    lhs = pair_alpha(v, laplacian(v), mu - 1)
    rhs = -sobolev_norm(v, mu) ** 2 + sobolev_norm(v, mu - 1) ** 2
    checks.append(Check("dirichlet form", _rel(lhs, rhs), 1e-10))

    w = rng.standard_normal(2 * 4 + 1)
    a, b = rearrangement_sides(w, 0.1, 0.25, 6)
    checks.append(Check("rearrangement", _rel(a, b), 1e-10))

    eps, gamma = 0.3, 0.1
    n_sum = 4096
    m = mollifier_multipliers(eps, n_sum)(mode_range(n_sum))
    xs = rng.uniform(0, 2 * np.pi, 4)
    pointwise = [np.sum((1 + mode_range(n_sum) ** 2.0) ** gamma * (m * basis_eval(mode_range(n_sum), xx)) ** 2)
                 for xx in xs]
    C = renorm_constant(eps, gamma, n_sum)
    checks.append(Check("renormalisation", max(_rel(p, C) for p in pointwise), 1e-8))

    cfg = SimConfig(N=8, dt=2.0**-6, sigma=Zero(), variant=Truncated(8), ic=FieldIC(FourierField(c[N - 8 : N + 9])))
    traj = solve(cfg, BrownianLattice.zeros(8, cfg.dt))
    expect = np.exp(-mode_range(8) ** 2.0) * c[N - 8 : N + 9]
    checks.append(Check("heat decay", float(np.max(np.abs(traj.states[-1] - expect))), 1e-12))
    return checks
