"""Feynman-Kac Monte Carlo for the smoothed linear equation with frozen noise.

For a fixed realisation of the time-mollified noise,

    v_t(x) = E_hat[ psi(x + What_t)
                    * exp( int_0^t xi(s, x + What_{t-s}) ds - C t / 2 ) ],

where What is sqrt(2) times a Brownian motion independent of the noise,
xi(s, y) = sum_n <n>^gamma m_eps(n) dW^{delta,n}/ds e^n(y), and C is the
counterterm.  The time integral is a left-point sum on the dt_fk grid;
xi is tabulated on a fine spatial grid and linearly interpolated.

This gives an estimate of the Wong-Zakai random PDE solution that does not
share any discretisation with the Galerkin solver.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .noise import BrownianLattice, WongZakai, noise_gains, renorm_constant, time_mollify
from .solver import Dirac
from .spectral import to_grid

__all__ = ["FkQuery", "FkResult", "FkError", "fk_estimate", "fk_grid"]


class FkError(FloatingPointError):
    """The exponent overflowed or became non-finite."""


@dataclass(frozen=True)
class FkQuery:
    x: float
    t: float
    eps: float
    delta: float
    gamma: float
    psi: object
    n_paths: int = 10_000
    dt_fk: float | None = None
    mode_cut: int | None = None
    seed: int = 0
    grid_size: int = 2048
    chunk: int = 1024


@dataclass(frozen=True)
class FkResult:
    mean: float
    stderr: float
    n_paths: int
    truncation_tail: float


def _check(q: FkQuery, W: BrownianLattice):
    if isinstance(q.psi, Dirac):
        raise ValueError("Feynman-Kac needs pointwise initial data; Dirac is excluded")
    if not 0.0 < q.t <= 1.0:
        raise ValueError("t must lie in (0, 1]")
    dt_fk = W.dt if q.dt_fk is None else q.dt_fk
    ratio = dt_fk / W.dt
    r = int(round(ratio))
    if r < 1 or abs(ratio - r) > 1e-9:
        raise ValueError("dt_fk must be a positive integer multiple of the lattice dt")
    J = int(round(q.t / dt_fk))
    if J < 1 or abs(J * dt_fk - q.t) > 1e-9:
        raise ValueError(f"dt_fk={dt_fk} does not divide t={q.t}")
    cut = W.noise_max_mode if q.mode_cut is None else q.mode_cut
    if cut > W.noise_max_mode:
        raise ValueError(f"mode_cut={cut} exceeds lattice modes {W.noise_max_mode}")
    if q.grid_size < 2 * cut + 1:
        raise ValueError("grid_size too small for mode_cut")
    return dt_fk, r, J, cut


def _noise_table(q: FkQuery, W: BrownianLattice, r: int, J: int, cut: int) -> np.ndarray:
    """xi integrated over each dt_fk step, on the spatial grid: shape (J, grid_size)."""
    inc = time_mollify(W.restricted(cut), q.delta)[:, : J * r]
    inc = inc.reshape(inc.shape[0], J, r).sum(axis=2)
    gains = noise_gains(WongZakai(q.eps, q.delta), q.gamma, cut)
    return to_grid((inc * gains[:, None]).T, q.grid_size)


def _path_values(q, table, dt_fk, J, C, chunk_index, n):
    M = q.grid_size
    h = 2.0 * np.pi / M
    rng = np.random.Generator(np.random.Philox(key=((q.seed & ((1 << 64) - 1)) << 64) | chunk_index))
    steps = rng.standard_normal((n, J)) * np.sqrt(2.0 * dt_fk)
    P = np.zeros((n, J + 1))
    np.cumsum(steps, axis=1, out=P[:, 1:])
    # left point s_j = j dt_fk sees the walk at time t - s_j, i.e. column J - j
    pos = (q.x + P[:, J:0:-1]) / h
    i0 = np.floor(pos)
    frac = pos - i0
    i0 = i0.astype(np.int64) % M
    i1 = (i0 + 1) % M
    j = np.arange(J)[None, :]
    vals = (1.0 - frac) * table[j, i0] + frac * table[j, i1]
    expo = vals.sum(axis=1) - 0.5 * C * q.t
    if not np.all(np.isfinite(expo)) or expo.max() > 700.0:
        raise FkError(f"exponent not finite (max {expo.max():.3g}); delta may be too small for this path")
    return q.psi.evaluate(np.mod(q.x + P[:, J], 2.0 * np.pi)) * np.exp(expo)


def fk_estimate(q: FkQuery, W: BrownianLattice) -> FkResult:
    dt_fk, r, J, cut = _check(q, W)
    C = renorm_constant(q.eps, q.gamma, cut, tol=None)
    try:
        tail = renorm_constant(q.eps, q.gamma, 4096, tol=None) - C
    except ValueError:
        tail = float("nan")
    table = _noise_table(q, W, r, J, cut)
    values = np.empty(q.n_paths)
    for c, start in enumerate(range(0, q.n_paths, q.chunk)):
        n = min(q.chunk, q.n_paths - start)
        values[start : start + n] = _path_values(q, table, dt_fk, J, C, c, n)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(q.n_paths)) if q.n_paths > 1 else float("nan")
    return FkResult(mean, stderr, q.n_paths, float(tail))


def fk_grid(template: FkQuery, points, W: BrownianLattice) -> list:
    """fk_estimate at each (t, x); every point reuses the template's walk seed."""
    return [fk_estimate(replace(template, t=t, x=x), W) for t, x in points]
