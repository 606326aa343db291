"""Driving noise: Brownian increment lattices, mollifier multipliers, time smoothing.

The Brownian family W^n, n in Z, is represented by its increments on a
uniform step grid covering [-margin*dt, 1 + margin*dt].  Each increment is a
pure function of (seed, n, k): a Philox stream keyed by (seed, n) is read at
a counter position fixed by k, so lattices of different sizes built from the
same seed agree on their shared entries.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, signal, special
from scipy import fft as sfft

from .spectral import FourierField, bracket, from_grid, to_grid

__all__ = [
    "BrownianLattice",
    "sample_brownian_lattice",
    "Mollifier",
    "mollifier_multipliers",
    "bump",
    "renorm_constant",
    "Truncated",
    "Mollified",
    "WongZakai",
    "Full",
    "noise_gains",
    "rough_diffusion_row",
    "time_mollify",
    "smoothed_path",
]

_MASK64 = (1 << 64) - 1
# Step k is read from stream position k + _STEP_OFFSET, so negative (margin)
# steps have fixed positions too.
_STEP_OFFSET = 1 << 40


# --------------------------------------------------------------------------
# Brownian lattice


@dataclass(frozen=True, eq=False)
class BrownianLattice:
    """Increments dW^n_k, n in {-N_w..N_w}, k in {-margin..K-1+margin}.

    ``increments[n + N_w, k + margin]`` holds dW^n_k.
    """

    noise_max_mode: int
    dt: float
    steps: int
    margin: int
    increments: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        expected = (2 * self.noise_max_mode + 1, self.steps + 2 * self.margin)
        if inc.shape != expected:
            raise ValueError(f"increments shape {inc.shape} != {expected}")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @classmethod
    def from_increments(cls, increments, dt, margin=0, seed=None):
        """Wrap an explicit increment array (e.g. a zero or frozen test path)."""
        increments = np.asarray(increments, dtype=float)
        K = _steps_for(dt)
        N_w = (increments.shape[0] - 1) // 2
        return cls(N_w, dt, K, margin, increments, seed)

    @classmethod
    def zeros(cls, noise_max_mode, dt, margin=0):
        K = _steps_for(dt)
        inc = np.zeros((2 * noise_max_mode + 1, K + 2 * margin))
        return cls(noise_max_mode, dt, K, margin, inc, None)

    @property
    def core(self) -> np.ndarray:
        """Increments for k = 0..K-1, shape (2N_w+1, K)."""
        return self.increments[:, self.margin : self.margin + self.steps]

    @property
    def fingerprint(self) -> tuple:
        return (self.seed, self.noise_max_mode, self.dt, self.margin)

    def row(self, n: int) -> np.ndarray:
        return self.increments[n + self.noise_max_mode]

    def restricted(self, N: int) -> "BrownianLattice":
        """Sub-lattice with modes |n| <= N."""
        if N > self.noise_max_mode:
            raise ValueError(f"lattice has only {self.noise_max_mode} modes, asked for {N}")
        c = self.noise_max_mode
        return BrownianLattice(N, self.dt, self.steps, self.margin,
                               self.increments[c - N : c + N + 1], self.seed)

    def with_modes_zeroed(self, modes) -> "BrownianLattice":
        inc = self.increments.copy()
        for n in modes:
            if abs(n) <= self.noise_max_mode:
                inc[n + self.noise_max_mode] = 0.0
        return BrownianLattice(self.noise_max_mode, self.dt, self.steps, self.margin, inc, self.seed)

    def coarsened(self, factor: int) -> "BrownianLattice":
        """Sum consecutive blocks of ``factor`` increments (same Brownian paths, step factor*dt)."""
        if self.steps % factor or self.margin % factor:
            raise ValueError("factor must divide both steps and margin")
        m, s = self.increments.shape
        inc = self.increments.reshape(m, s // factor, factor).sum(axis=2)
        return BrownianLattice(self.noise_max_mode, self.dt * factor, self.steps // factor,
                               self.margin // factor, inc, self.seed)

    def paths(self) -> np.ndarray:
        """W^n at t_k for k = -margin..K+margin, with W^n_0 = 0."""
        inc = self.increments
        m = self.margin
        out = np.zeros((inc.shape[0], inc.shape[1] + 1))
        out[:, m + 1 :] = np.cumsum(inc[:, m:], axis=1)
        if m:
            out[:, :m] = -np.cumsum(inc[:, m - 1 :: -1], axis=1)[:, ::-1]
        return out


def _steps_for(dt: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    K = int(round(1.0 / dt))
    if K < 1 or abs(K * dt - 1.0) > 1e-12:
        raise ValueError(f"dt={dt} does not divide 1")
    return K


def _stream_normals(seed: int, n: int, k0: int, count: int) -> np.ndarray:
    """Standard normals for steps k0..k0+count-1 of mode n (inverse-CDF of Philox output)."""
    pos = k0 + _STEP_OFFSET
    block, skip = divmod(pos, 4)
    bg = np.random.Philox(key=((seed & _MASK64) << 64) | (n & _MASK64), counter=block)
    raw = bg.random_raw(count + skip)[skip:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return special.ndtri(u)


def sample_brownian_lattice(seed: int, noise_max_mode: int, dt: float, margin: int = 0) -> BrownianLattice:
    """Independent N(0, dt) increments for modes |n| <= noise_max_mode."""
    if noise_max_mode < 0:
        raise ValueError("noise_max_mode must be >= 0")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    K = _steps_for(dt)
    total = K + 2 * margin
    inc = np.empty((2 * noise_max_mode + 1, total))
    scale = np.sqrt(dt)
    for i, n in enumerate(range(-noise_max_mode, noise_max_mode + 1)):
        inc[i] = scale * _stream_normals(seed, n, -margin, total)
    return BrownianLattice(noise_max_mode, dt, K, margin, inc, seed)


# --------------------------------------------------------------------------
# Mollifier


def _bump_unnormalized(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_constant() -> float:
    val, _ = integrate.quad(_bump_scalar, -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return 1.0 / val


def bump(x, eps: float = 1.0):
    """rho^eps(x) = rho(x/eps)/eps with rho the normalised standard bump on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    return _bump_constant() * _bump_unnormalized(x / eps) / eps


def _bump_scalar(s: float) -> float:
    return math.exp(-1.0 / (1.0 - s * s)) if abs(s) < 1.0 else 0.0


def _bump_transform(k: float) -> float:
    """int rho(z) cos(kz) dz."""
    if k == 0.0:
        return 1.0
    with warnings.catch_warnings():
        # far-tail values sit at the 1e-15 floor; quad flags that as roundoff
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(_bump_scalar, 0.0, 1.0, weight="cos", wvar=k,
                                epsabs=1e-15, epsrel=1e-12, limit=200)
    return 2.0 * _bump_constant() * val


_TABLES: dict[float, np.ndarray] = {}


def _multiplier_table(eps: float, n_table: int) -> np.ndarray:
    tab = _TABLES.get(eps)
    if tab is None or tab.size <= n_table:
        start = 0 if tab is None else tab.size
        new = np.array([_bump_transform(eps * n) for n in range(start, n_table + 1)])
        tab = new if tab is None else np.concatenate([tab, new])
        tab.setflags(write=False)
        _TABLES[eps] = tab
    return tab[: n_table + 1]


@dataclass(frozen=True, eq=False)
class Mollifier:
    """Diagonal action of rho_eps * on the basis: rho_eps * e^n = m(n) e^n."""

    eps: float
    multipliers: np.ndarray

    def __call__(self, n):
        return self.multipliers[np.abs(np.asarray(n))]

    def apply(self, f: FourierField) -> FourierField:
        if f.max_mode >= self.multipliers.size:
            raise ValueError("multiplier table too short for field")
        return FourierField(f.coeffs * self(f.modes))


def _check_eps(eps):
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")


def mollifier_multipliers(eps: float, n_table: int) -> Mollifier:
    """m_eps(n) = int rho_eps(y) cos(ny) dy for n = 0..n_table, by adaptive quadrature."""
    _check_eps(eps)
    eps = float(eps)
    return Mollifier(eps, _multiplier_table(eps, int(n_table)))


def renorm_constant(eps: float, gamma: float, n_sum: int = 4096, tol: float | None = 1e-10) -> float:
    """||rho_eps||^2_{H^gamma} = 1/(2pi) + (1/pi) sum_{n=1}^{n_sum} <n>^{2gamma} m_eps(n)^2.

    The tail beyond ``n_sum`` is estimated by the last quarter of the partial
    sum; a ValueError is raised if that exceeds ``tol`` relative.  With
    ``tol=None`` the plain partial sum is returned, which is the exact
    counterterm for noise truncated at |n| <= n_sum.
    """
    if not 0.0 <= gamma < 0.25:
        raise ValueError("gamma must lie in [0, 1/4)")
    m = mollifier_multipliers(eps, n_sum).multipliers
    n = np.arange(1, n_sum + 1)
    terms = bracket(n) ** (2 * gamma) * m[1:] ** 2 / np.pi
    total = 1.0 / (2 * np.pi) + terms.sum()
    if tol is not None:
        tail = terms[-max(1, n_sum // 4) :].sum()
        if tail > tol * total:
            raise ValueError(
                f"n_sum={n_sum} too small for eps={eps}: tail estimate {tail:.3e} exceeds {tol:g} relative"
            )
    return float(total)


# --------------------------------------------------------------------------
# Noise variants


@dataclass(frozen=True)
class Truncated:
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("Truncated needs N >= 1")


@dataclass(frozen=True)
class Mollified:
    eps: float

    def __post_init__(self):
        _check_eps(self.eps)


@dataclass(frozen=True)
class WongZakai:
    eps: float
    delta: float

    def __post_init__(self):
        _check_eps(self.eps)
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class Full:
    """Truncation at the solver's own resolution."""


def active_modes(variant, N: int, N_w: int | None = None) -> int:
    """Largest active noise mode for ``variant`` at solver resolution N."""
    if isinstance(variant, Truncated):
        return variant.N
    if isinstance(variant, Full):
        return N
    return N if N_w is None else N_w


def noise_gains(variant, gamma: float, n_active: int) -> np.ndarray:
    """<n>^gamma * multiplier(n) for |n| <= n_active (multiplier 1 when unmollified)."""
    n = np.arange(-n_active, n_active + 1)
    g = bracket(n) ** gamma
    if isinstance(variant, (Mollified, WongZakai)):
        g = g * mollifier_multipliers(variant.eps, n_active)(n)
    return g


def _fast_grid(M: int) -> int:
    M = sfft.next_fast_len(int(M), real=True)
    return M + (M % 2)


def rough_diffusion_row(v: FourierField, n: int, gamma: float, variant, N_w: int | None = None) -> FourierField:
    """Projection onto v's modes of <n>^gamma * v * (mollified) e^n; zero if n is inactive."""
    N = v.max_mode
    limit = active_modes(variant, N, N_w if N_w is not None else abs(n))
    if abs(n) > limit:
        return FourierField.zeros(N)
    M = _fast_grid(max(4 * N, 2 * N + abs(n) + 1, 2 * abs(n) + 1))
    basis = np.zeros(2 * abs(n) + 1)
    basis[n + abs(n)] = 1.0
    prod = to_grid(v.coeffs, M) * to_grid(basis, M)
    row = from_grid(prod, N) * bracket(n) ** gamma
    if isinstance(variant, (Mollified, WongZakai)):
        row = row * mollifier_multipliers(variant.eps, abs(n)).multipliers[abs(n)]
    return FourierField(row)


# --------------------------------------------------------------------------
# Time mollification


def _time_weights(delta: float, dt: float) -> np.ndarray:
    L = int(np.floor(delta / dt + 1e-9))
    s = np.arange(-L, L + 1) * dt
    w = bump(s, delta) * dt
    return w / w.sum()


def time_mollify(W: BrownianLattice, delta: float) -> np.ndarray:
    """Per-step increments of rho_delta * W^n on k = 0..K-1, shape (2N_w+1, K).

    The smoothed increment is the discrete convolution of the raw increments
    with rho_delta sampled on the step grid (weights renormalised to sum 1).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta > W.margin * W.dt + 1e-12:
        raise ValueError(f"delta={delta} exceeds lattice margin {W.margin} * dt={W.dt}")
    w = _time_weights(delta, W.dt)
    L = (w.size - 1) // 2
    if L == 0:
        return W.core.copy()
    full = signal.fftconvolve(W.increments, w[None, :], mode="valid", axes=1)
    start = W.margin - L
    return full[:, start : start + W.steps]


def smoothed_path(W: BrownianLattice, delta: float) -> np.ndarray:
    """(rho_delta * W^n)(t_k) for k = 0..K, shape (2N_w+1, K+1)."""
    if delta > W.margin * W.dt + 1e-12:
        raise ValueError(f"delta={delta} exceeds lattice margin {W.margin} * dt={W.dt}")
    w = _time_weights(delta, W.dt)
    L = (w.size - 1) // 2
    P = W.paths()
    full = signal.fftconvolve(P, w[None, :], mode="valid", axes=1) if L else P
    start = W.margin - L
    return full[:, start : start + W.steps + 1]
