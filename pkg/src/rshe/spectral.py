"""Real Fourier basis on the torus R/2piZ, fractional Sobolev norms and grid transforms.

Modes are indexed by n in {-N, ..., N}:

    e^n(x) = cos(nx)/sqrt(pi)   for n > 0
    e^n(x) = sin(|n|x)/sqrt(pi) for n < 0
    e^0(x) = 1/sqrt(2pi)

A :class:`FourierField` stores the coefficients f(e^n) densely, array slot
``n + N``.  Everything in this module is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

__all__ = [
    "FourierField",
    "CollocationGrid",
    "bracket",
    "basis_eval",
    "sobolev_norm",
    "pair_alpha",
    "bessel_power",
    "laplacian",
    "synthesize",
    "analyze",
    "interpolation_constant",
    "to_grid",
    "from_grid",
]

SQRT_PI = np.sqrt(np.pi)
SQRT_2PI = np.sqrt(2.0 * np.pi)


def bracket(n):
    """<n> = (1 + n^2)^(1/2), vectorised."""
    n = np.asarray(n, dtype=float)
    return np.sqrt(1.0 + n * n)


def mode_range(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


@dataclass(frozen=True, eq=False)
class FourierField:
    """Coefficients of a bandlimited distribution in the real basis e^n, |n| <= N."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("coeffs must be a 1-d array of odd length 2N+1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def max_mode(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return mode_range(self.max_mode)

    @classmethod
    def zeros(cls, N: int) -> "FourierField":
        return cls(np.zeros(2 * N + 1))

    @classmethod
    def basis(cls, n: int, N: int | None = None) -> "FourierField":
        """The single basis element e^n, stored with max_mode N (default |n|)."""
        N = abs(n) if N is None else N
        if abs(n) > N:
            raise ValueError(f"mode {n} outside max_mode {N}")
        c = np.zeros(2 * N + 1)
        c[n + N] = 1.0
        return cls(c)

    @classmethod
    def from_modes(cls, N: int, values: dict) -> "FourierField":
        c = np.zeros(2 * N + 1)
        for n, v in values.items():
            c[n + N] = v
        return cls(c)

    def coeff(self, n: int) -> float:
        N = self.max_mode
        return float(self.coeffs[n + N]) if abs(n) <= N else 0.0

    def resized(self, N: int) -> "FourierField":
        """Zero-extend or truncate to max_mode N."""
        return FourierField(resize_coeffs(self.coeffs, N))

    def __add__(self, other: "FourierField") -> "FourierField":
        N = max(self.max_mode, other.max_mode)
        return FourierField(resize_coeffs(self.coeffs, N) + resize_coeffs(other.coeffs, N))

    def __sub__(self, other: "FourierField") -> "FourierField":
        N = max(self.max_mode, other.max_mode)
        return FourierField(resize_coeffs(self.coeffs, N) - resize_coeffs(other.coeffs, N))

    def __mul__(self, scalar: float) -> "FourierField":
        return FourierField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __call__(self, x):
        """Pointwise evaluation sum_n f(e^n) e^n(x)."""
        x = np.asarray(x, dtype=float)
        n = self.modes
        vals = basis_eval(n[:, None], x.reshape(1, -1))
        return (self.coeffs @ vals).reshape(x.shape)

    def __repr__(self):
        return f"FourierField(max_mode={self.max_mode})"


@dataclass(frozen=True, eq=False)
class CollocationGrid:
    """Values of a field at x_j = 2*pi*j/M, j = 0..M-1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.size)


def grid_points(M: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M


def resize_coeffs(c: np.ndarray, N: int) -> np.ndarray:
    """Zero-extend or truncate coefficient arrays (last axis) to max_mode N."""
    c = np.asarray(c)
    N0 = (c.shape[-1] - 1) // 2
    if N0 == N:
        return c
    out = np.zeros(c.shape[:-1] + (2 * N + 1,), dtype=c.dtype)
    k = min(N0, N)
    out[..., N - k : N + k + 1] = c[..., N0 - k : N0 + k + 1]
    return out


def basis_eval(n, x):
    """e^n(x); broadcasts over n and x."""
    n = np.asarray(n)
    x = np.asarray(x, dtype=float)
    out = np.where(
        n > 0,
        np.cos(n * x) / SQRT_PI,
        np.where(n < 0, np.sin(-n * x) / SQRT_PI, 1.0 / SQRT_2PI + 0.0 * x),
    )
    if out.ndim == 0:
        return float(out)
    return out


def _weights(N: int, alpha: float) -> np.ndarray:
    return (1.0 + mode_range(N).astype(float) ** 2) ** alpha


def sobolev_norm(f: FourierField, alpha: float) -> float:
    """||f||_{H^alpha} over the stored modes."""
    return float(np.sqrt(np.sum(_weights(f.max_mode, alpha) * f.coeffs**2)))


def pair_alpha(f: FourierField, g: FourierField, alpha: float) -> float:
    """(f, g)_alpha = sum_n <n>^{2 alpha} f(e^n) g(e^n)."""
    N = max(f.max_mode, g.max_mode)
    a = resize_coeffs(f.coeffs, N)
    b = resize_coeffs(g.coeffs, N)
    return float(np.sum(_weights(N, alpha) * a * b))


def bessel_power(f: FourierField, beta: float) -> FourierField:
    """(1 - Laplacian)^{beta/2} f: mode n scaled by <n>^beta."""
    return FourierField(f.coeffs * _weights(f.max_mode, beta / 2.0))


def laplacian(f: FourierField) -> FourierField:
    n = f.modes.astype(float)
    return FourierField(-(n**2) * f.coeffs)


# --- grid transforms on raw arrays (last axis), used by the solver in batch ---


def to_grid(c: np.ndarray, M: int) -> np.ndarray:
    """Synthesize coefficient arrays (..., 2N+1) onto M equispaced points."""
    c = np.asarray(c, dtype=float)
    N = (c.shape[-1] - 1) // 2
    if M < 2 * N + 1:
        raise ValueError(f"grid size M={M} < 2N+1={2 * N + 1} would alias")
    spec = np.zeros(c.shape[:-1] + (M // 2 + 1,), dtype=complex)
    spec[..., 0] = M * c[..., N] / SQRT_2PI
    if N > 0:
        a = c[..., N + 1 :]
        b = c[..., N - 1 :: -1]  # b[k-1] = coefficient of mode -k
        spec[..., 1 : N + 1] = (M / 2.0) * (a - 1j * b) / SQRT_PI
    return sfft.irfft(spec, n=M, axis=-1)


def from_grid(values: np.ndarray, N: int) -> np.ndarray:
    """Analyze grid values (..., M) into coefficients of modes |n| <= N."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1]
    if 2 * N + 1 > M:
        raise ValueError(f"max mode N={N} exceeds (M-1)/2 for M={M}")
    spec = sfft.rfft(values, axis=-1)
    out = np.empty(values.shape[:-1] + (2 * N + 1,))
    out[..., N] = spec[..., 0].real / M * SQRT_2PI
    if N > 0:
        s = spec[..., 1 : N + 1]
        out[..., N + 1 :] = (2.0 / M) * s.real * SQRT_PI
        out[..., N - 1 :: -1] = (-2.0 / M) * s.imag * SQRT_PI
    return out


def synthesize(f: FourierField, M: int) -> CollocationGrid:
    return CollocationGrid(to_grid(f.coeffs, M))


def analyze(g: CollocationGrid, N: int) -> FourierField:
    return FourierField(from_grid(g.values, N))


def interpolation_constant(alpha: float, beta: float, delta: float, eps: float) -> float:
    """Smallest C with x^beta <= eps x^delta + C x^alpha for all x > 0.

    C = sup_x (x^b - eps x^d), b = beta - alpha, d = delta - alpha; the
    supremum sits at x* = (b / (eps d))^{1/(d-b)}.
    """
    if not alpha < beta < delta:
        raise ValueError(f"need alpha < beta < delta, got {alpha}, {beta}, {delta}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    b = beta - alpha
    d = delta - alpha
    x = (b / (eps * d)) ** (1.0 / (d - b))
    return float(x**b - eps * x**d)

