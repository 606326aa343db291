"""Spectral Galerkin time stepping for du = Lap u dt + sigma(u) D^gamma dW on the torus.

Ito variants (Truncated, Full, Mollified) use exponential Euler: the heat
semigroup is applied exactly per mode and the noise term explicitly,

    a_{k+1} = exp(-m^2 dt) * (a_k + P_N[sigma(u_k) * xi_k]),
    xi_k(x) = sum_n <n>^gamma m(n) dW^n_k e^n(x).

The WongZakai variant solves the random PDE

    dv/dt = Lap v - C/2 v + v * xi^{delta,eps}

pathwise with Strang splitting: half a step of the (damped) heat flow, the
exact reaction v <- v exp(xi_k) on the grid, another half step.  C is the
counterterm summed over the active noise modes.

Replicas are integrated in batches (leading axis) so Monte Carlo runs
amortise the FFT overhead; a single solve is a batch of one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .noise import (
    BrownianLattice,
    Full,
    Mollified,
    Truncated,
    WongZakai,
    _fast_grid,
    active_modes,
    noise_gains,
    renorm_constant,
    time_mollify,
)
from .spectral import FourierField, basis_eval, from_grid, mode_range, resize_coeffs, to_grid

logger = logging.getLogger(__name__)

__all__ = [
    "Zero",
    "Constant",
    "Linear",
    "SmoothBounded",
    "FieldIC",
    "Dirac",
    "Smooth",
    "SimConfig",
    "Trajectory",
    "BlowUpError",
    "step",
    "solve",
    "solve_batch",
    "weak_form_terms",
    "weak_form_residual",
]


class BlowUpError(FloatingPointError):
    """A replica produced non-finite coefficients."""


# --------------------------------------------------------------------------
# sigma


@dataclass(frozen=True)
class Zero:
    def __call__(self, u):
        return np.zeros_like(u)


@dataclass(frozen=True)
class Constant:
    c1: float

    def __call__(self, u):
        return np.full_like(u, self.c1)


@dataclass(frozen=True)
class Linear:
    """sigma(u) = c1 + c2 u."""

    c1: float
    c2: float

    def __call__(self, u):
        return self.c1 + self.c2 * u


_SIGMA_REGISTRY = {
    "sin": np.sin,
    "sqrt1p": lambda u: np.sqrt(1.0 + u * u),
}


@dataclass(frozen=True)
class SmoothBounded:
    name: str

    def __post_init__(self):
        if self.name not in _SIGMA_REGISTRY:
            raise ValueError(f"unknown sigma {self.name!r}; known: {sorted(_SIGMA_REGISTRY)}")

    def __call__(self, u):
        return _SIGMA_REGISTRY[self.name](u)


def _sigma_is_zero(s) -> bool:
    return isinstance(s, Zero) or (isinstance(s, Constant) and s.c1 == 0.0) or (
        isinstance(s, Linear) and s.c1 == 0.0 and s.c2 == 0.0
    )


def _sigma_constant(s):
    if isinstance(s, Constant):
        return s.c1
    if isinstance(s, Linear) and s.c2 == 0.0:
        return s.c1
    return None


# --------------------------------------------------------------------------
# initial conditions


@dataclass(frozen=True, eq=False)
class FieldIC:
    field: FourierField

    def coefficients(self, N: int) -> np.ndarray:
        return resize_coeffs(self.field.coeffs, N)

    def evaluate(self, x):
        return self.field(x)


@dataclass(frozen=True)
class Dirac:
    """Point mass at x0; psi(e^n) = e^n(x0)."""

    x0: float

    def coefficients(self, N: int) -> np.ndarray:
        return np.asarray(basis_eval(mode_range(N), self.x0), dtype=float)

    def evaluate(self, x):
        raise ValueError("Dirac initial data has no pointwise values")


_SMOOTH_REGISTRY = {
    "one": lambda x: np.ones_like(x),
    "cos": np.cos,
    "expcos": lambda x: np.exp(np.cos(x)),
    "bump2": lambda x: 1.0 + 0.5 * np.cos(x) + 0.25 * np.sin(2 * x),
}


@dataclass(frozen=True)
class Smooth:
    name: str

    def __post_init__(self):
        if self.name not in _SMOOTH_REGISTRY:
            raise ValueError(f"unknown initial condition {self.name!r}; known: {sorted(_SMOOTH_REGISTRY)}")

    def coefficients(self, N: int) -> np.ndarray:
        M = _fast_grid(max(4 * N + 2, 256))
        x = 2.0 * np.pi * np.arange(M) / M
        return from_grid(_SMOOTH_REGISTRY[self.name](x), N)

    def evaluate(self, x):
        return _SMOOTH_REGISTRY[self.name](np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# config / trajectory


@dataclass(frozen=True)
class SimConfig:
    N: int
    dt: float
    sigma: object = field(default_factory=Zero)
    variant: object = field(default_factory=Full)
    gamma: float = 0.0
    ic: object = field(default_factory=lambda: Smooth("one"))
    save_stride: int = 1
    seed: int = 0
    N_w: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0.0 <= self.gamma < 0.25:
            raise ValueError("gamma must lie in [0, 1/4)")
        K = int(round(1.0 / self.dt))
        if K < 1 or abs(K * self.dt - 1.0) > 1e-12:
            raise ValueError(f"dt={self.dt} does not divide 1")
        if self.save_stride < 1 or K % self.save_stride:
            raise ValueError(f"save_stride={self.save_stride} must divide the step count {K}")
        if self.N_w is not None and self.N_w < 0:
            raise ValueError("N_w must be >= 0")
        if isinstance(self.variant, WongZakai) and not (
            _sigma_is_zero(self.sigma) or (isinstance(self.sigma, Linear) and self.sigma.c1 == 0.0)
        ):
            raise ValueError("WongZakai variant needs sigma(u) = c2*u (the counterterm is for linear noise)")
        if self.dt > 0.5 / self.N**2:
            # exact heat factor keeps this stable; only accuracy of the top modes degrades
            logger.info("dt=%g exceeds 1/(2N^2)=%g for N=%d", self.dt, 0.5 / self.N**2, self.N)

    @property
    def steps(self) -> int:
        return int(round(1.0 / self.dt))

    @property
    def noise_modes(self) -> int:
        return active_modes(self.variant, self.N, self.N_w)

    @property
    def grid_size(self) -> int:
        n = self.noise_modes
        return _fast_grid(max(4 * self.N, 2 * self.N + n + 1, 2 * n + 1))


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (S, 2N+1)
    config: SimConfig
    fingerprint: tuple

    @property
    def max_mode(self) -> int:
        return (self.states.shape[1] - 1) // 2

    def state(self, j: int) -> FourierField:
        return FourierField(self.states[j])

    def __len__(self):
        return self.times.size


# --------------------------------------------------------------------------
# integrator


class _Integrator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.N = cfg.N
        self.n_act = cfg.noise_modes
        self.M = cfg.grid_size
        m2 = mode_range(cfg.N).astype(float) ** 2
        self.gains = noise_gains(cfg.variant, cfg.gamma, self.n_act)
        self.wong_zakai = isinstance(cfg.variant, WongZakai)
        self.sigma_zero = _sigma_is_zero(cfg.sigma)
        self.sigma_const = _sigma_constant(cfg.sigma)
        if self.wong_zakai:
            self.counterterm = renorm_constant(cfg.variant.eps, cfg.gamma, self.n_act, tol=None)
            c2 = 0.0 if self.sigma_zero else cfg.sigma.c2
            self.c2 = c2
            self.half = np.exp(-(m2 + 0.5 * c2 * c2 * self.counterterm) * cfg.dt / 2.0)
        else:
            self.heat = np.exp(-m2 * cfg.dt)

    def check_lattice(self, W: BrownianLattice):
        cfg = self.cfg
        if abs(W.dt - cfg.dt) > 1e-15:
            raise ValueError(f"lattice dt={W.dt} does not match config dt={cfg.dt}")
        if W.noise_max_mode < self.n_act:
            raise ValueError(f"lattice has {W.noise_max_mode} noise modes, variant needs {self.n_act}")
        if self.wong_zakai and cfg.variant.delta > W.margin * W.dt + 1e-12:
            raise ValueError("lattice margin too small for the time mollification width")

    def increments(self, W: BrownianLattice) -> np.ndarray:
        """Noise input per step, gains applied, shape (2n_act+1, K)."""
        self.check_lattice(W)
        W = W.restricted(self.n_act)
        inc = time_mollify(W, self.cfg.variant.delta) if self.wong_zakai else W.core
        return inc * self.gains[:, None]

    def noise_projection(self, A, X):
        """P_N[sigma(u) * xi] for coefficient batch A and noise coefficients X."""
        if self.sigma_const is not None:
            return self.sigma_const * resize_coeffs(X, self.N)
        U = to_grid(A, self.M)
        return from_grid(self.cfg.sigma(U) * to_grid(X, self.M), self.N)

    def advance(self, A, X):
        if self.wong_zakai:
            A = A * self.half
            if not self.sigma_zero:
                U = to_grid(A, self.M)
                A = from_grid(U * np.exp(self.c2 * to_grid(X, self.M)), self.N)
            return A * self.half
        if self.sigma_zero:
            return A * self.heat
        return (A + self.noise_projection(A, X)) * self.heat


def step(state: FourierField, k: int, W: BrownianLattice, cfg: SimConfig) -> FourierField:
    """One time step from step index k to k+1."""
    if state.max_mode != cfg.N:
        raise ValueError(f"state has {state.max_mode} modes, config expects {cfg.N}")
    if not 0 <= k < cfg.steps:
        raise ValueError(f"step index {k} out of range")
    integ = _Integrator(cfg)
    X = integ.increments(W)[:, k]
    with np.errstate(all="ignore"):
        A = integ.advance(state.coeffs[None, :], X[None, :])[0]
    if not np.all(np.isfinite(A)):
        raise BlowUpError(f"non-finite state after step {k} (t={(k + 1) * cfg.dt:g})")
    return FourierField(A)


def solve_batch(cfg: SimConfig, lattices) -> list:
    """Integrate one replica per lattice; aborted replicas come back as None."""
    lattices = list(lattices)
    if not lattices:
        return []
    integ = _Integrator(cfg)
    R = len(lattices)
    S = np.empty((R, cfg.steps, 2 * integ.n_act + 1))
    for r, W in enumerate(lattices):
        S[r] = integ.increments(W).T
    K = cfg.steps
    stride = cfg.save_stride
    A = np.tile(cfg.ic.coefficients(cfg.N), (R, 1))
    saved = np.empty((K // stride + 1, R, 2 * cfg.N + 1))
    saved[0] = A
    alive = np.ones(R, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(K):
            A = integ.advance(A, S[:, k])
            if (k + 1) % stride == 0:
                bad = ~np.all(np.isfinite(A), axis=1)
                if bad.any():
                    for r in np.flatnonzero(bad & alive):
                        logger.warning("replica %d blew up at t=%g", r, (k + 1) * cfg.dt)
                    alive &= ~bad
                    A[bad] = 0.0
                saved[(k + 1) // stride] = A
    times = np.arange(K // stride + 1) * (stride * cfg.dt)
    times[-1] = 1.0
    out = []
    for r, W in enumerate(lattices):
        if alive[r]:
            fp = (W.fingerprint, cfg.variant)
            out.append(Trajectory(times, np.ascontiguousarray(saved[:, r]), cfg, fp))
        else:
            out.append(None)
    return out


def solve(cfg: SimConfig, W: BrownianLattice) -> Trajectory:
    traj = solve_batch(cfg, [W])[0]
    if traj is None:
        raise BlowUpError(f"non-finite state for config {cfg}")
    return traj


# --------------------------------------------------------------------------
# weak form


def weak_form_terms(traj: Trajectory, v: FourierField, mu: float, W: BrownianLattice) -> dict:
    """Discretised pieces of the weak formulation tested against v, per saved time.

    Pairings use (.,.)_{mu-1}; the drift integral is the trapezoid rule and the
    stochastic integral a left-point sum, both on the saved time grid.
    """
    cfg = traj.config
    N = traj.max_mode
    if v.max_mode > N:
        raise ValueError(f"test function has max_mode {v.max_mode} > trajectory's {N}")
    vv = resize_coeffs(v.coeffs, N)
    n = mode_range(N).astype(float)
    w = (1.0 + n * n) ** (mu - 1.0) * vv
    U = traj.states
    pair = U @ w
    lap = (-(n * n) * U) @ w
    h = np.diff(traj.times)
    drift = np.concatenate([[0.0], np.cumsum(0.5 * h * (lap[1:] + lap[:-1]))])

    integ = _Integrator(cfg)
    X = integ.increments(W).T  # (K, modes), gains applied
    stride = cfg.save_stride
    Xs = X.reshape(-1, stride, X.shape[1]).sum(axis=1)  # per saved interval
    if integ.wong_zakai:
        c2 = integ.c2
        grid_u = to_grid(U[:-1], integ.M)
        incr = from_grid(c2 * grid_u * to_grid(Xs, integ.M), N) @ w
        damp = pair * (-0.5 * c2 * c2 * integ.counterterm)
        drift = drift + np.concatenate([[0.0], np.cumsum(0.5 * h * (damp[1:] + damp[:-1]))])
    elif integ.sigma_zero:
        incr = np.zeros(len(U) - 1)
    else:
        incr = integ.noise_projection(U[:-1], Xs) @ w
    noise = np.concatenate([[0.0], np.cumsum(incr)])
    residual = pair - pair[0] - drift - noise
    return {"times": traj.times, "pairing": pair, "drift": drift, "noise": noise, "residual": residual}


def weak_form_residual(traj: Trajectory, v: FourierField, mu: float, W: BrownianLattice) -> float:
    return float(np.max(np.abs(weak_form_terms(traj, v, mu, W)["residual"])))
