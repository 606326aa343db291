import math

import numpy as np
import pytest

from rshe.noise import (
    BrownianLattice,
    Full,
    Mollified,
    Truncated,
    WongZakai,
    mollifier_multipliers,
    renorm_constant,
    sample_brownian_lattice,
)
from rshe.solver import (
    BlowUpError,
    Constant,
    Dirac,
    FieldIC,
    Linear,
    SimConfig,
    Smooth,
    SmoothBounded,
    Zero,
    solve,
    solve_batch,
    step,
    weak_form_residual,
    weak_form_terms,
)
from rshe.spectral import FourierField, basis_eval, bracket, sobolev_norm


def rand_ic(seed, N):
    return FieldIC(FourierField(np.random.default_rng(seed).standard_normal(2 * N + 1)))


def test_heat_decay_is_exact():
    ic = rand_ic(0, 10)
    cfg = SimConfig(N=10, dt=2.0**-7, sigma=Zero(), ic=ic)
    traj = solve(cfg, BrownianLattice.zeros(10, cfg.dt))
    m = np.arange(-10, 11)
    assert np.allclose(traj.states[-1], np.exp(-(m**2.0)) * ic.field.coeffs, rtol=0, atol=1e-12)


def test_constant_zero_matches_zero_bitwise():
    W = sample_brownian_lattice(1, 6, 2.0**-7)
    ic = rand_ic(1, 6)
    a = solve(SimConfig(N=6, dt=2.0**-7, sigma=Zero(), ic=ic), W)
    b = solve(SimConfig(N=6, dt=2.0**-7, sigma=Constant(0.0), ic=ic), W)
    assert np.array_equal(a.states, b.states)


def test_solve_is_deterministic():
    W = sample_brownian_lattice(2, 8, 2.0**-8)
    cfg = SimConfig(N=8, dt=2.0**-8, sigma=Linear(0.5, 1.0), variant=Truncated(8), gamma=0.1, ic=Smooth("cos"))
    assert np.array_equal(solve(cfg, W).states, solve(cfg, W).states)


def test_trajectory_shape_and_times():
    cfg = SimConfig(N=4, dt=2.0**-6, save_stride=8)
    traj = solve(cfg, sample_brownian_lattice(0, 4, cfg.dt))
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0
    assert np.all(np.diff(traj.times) > 0)
    assert traj.states.shape == (9, 9)


def test_step_agrees_with_solve():
    W = sample_brownian_lattice(3, 5, 2.0**-6)
    cfg = SimConfig(N=5, dt=2.0**-6, sigma=SmoothBounded("sin"), gamma=0.05, ic=Smooth("bump2"))
    traj = solve(cfg, W)
    u = FourierField(cfg.ic.coefficients(5))
    for k in range(cfg.steps):
        u = step(u, k, W, cfg)
    assert np.allclose(u.coeffs, traj.states[-1], atol=1e-13)


def test_dirac_initial_data():
    d = Dirac(math.pi)
    assert np.array_equal(d.coefficients(6), basis_eval(np.arange(-6, 7), math.pi))
    with pytest.raises(ValueError):
        d.evaluate(0.0)
    cfg = SimConfig(N=32, dt=2.0**-12, sigma=Linear(0.0, 1.0), gamma=0.1, ic=d, save_stride=16)
    traj = solve(cfg, sample_brownian_lattice(4, 32, cfg.dt))
    assert np.all(np.isfinite(traj.states))
    assert all(np.isfinite(sobolev_norm(traj.state(j), 0.3 - 1)) for j in range(len(traj)))


def test_truncation_coupling_ablation():
    W = sample_brownian_lattice(5, 16, 2.0**-9)
    base = dict(N=16, dt=2.0**-9, sigma=Linear(0.2, 1.0), gamma=0.1, ic=Smooth("expcos"))
    a = solve(SimConfig(variant=Truncated(8), **base), W)
    b = solve(SimConfig(variant=Truncated(16), **base), W.with_modes_zeroed([n for n in range(-16, 17) if abs(n) > 8]))
    assert np.allclose(a.states, b.states, atol=1e-12)
    c = solve(SimConfig(variant=Truncated(16), **base), W)
    assert not np.allclose(a.states, c.states, atol=1e-6)


def test_zero_solution_stays_zero():
    for sigma in (Linear(0.0, 2.0), SmoothBounded("sin")):
        cfg = SimConfig(N=6, dt=2.0**-7, sigma=sigma, gamma=0.2, ic=FieldIC(FourierField.zeros(6)))
        traj = solve(cfg, sample_brownian_lattice(6, 6, cfg.dt))
        assert np.all(traj.states == 0.0)


def test_energy_decay_without_noise():
    cfg = SimConfig(N=12, dt=2.0**-8, sigma=Zero(), ic=rand_ic(7, 12))
    traj = solve(cfg, BrownianLattice.zeros(12, cfg.dt))
    e = np.sum(traj.states**2, axis=1)
    assert np.all(np.diff(e) <= 0)


def test_additive_marginals_small():
    # per-mode Ornstein-Uhlenbeck law of the exponential Euler chain (discrete-exact oracle)
    N, dt, R, gamma, c1 = 4, 2.0**-8, 2000, 0.1, 1.5
    cfg = SimConfig(N=N, dt=dt, sigma=Constant(c1), gamma=gamma, ic=Smooth("cos"), save_stride=256)
    trajs = solve_batch(cfg, [sample_brownian_lattice(1000 + r, N, dt) for r in range(R)])
    X = np.array([t.states[-1] for t in trajs])
    a0 = Smooth("cos").coefficients(N)
    for i, n in enumerate(range(-N, N + 1)):
        lam = n * n * dt
        q = math.exp(-2 * lam)
        var = c1**2 * bracket(n) ** (2 * gamma) * dt * q * ((1 - q**cfg.steps) / (1 - q) if n else cfg.steps)
        mean = math.exp(-n * n) * a0[i]
        se_var = var * math.sqrt(2 / (R - 1))
        assert abs(X[:, i].var(ddof=1) - var) < 4 * se_var
        assert abs(X[:, i].mean() - mean) < 4 * math.sqrt(var / R)


def test_blow_up_guard():
    cfg = SimConfig(N=4, dt=2.0**-6, sigma=Linear(0.0, 1e200), ic=Smooth("one"))
    lats = [sample_brownian_lattice(r, 4, cfg.dt) for r in range(2)]
    out = solve_batch(cfg, lats)
    assert out == [None, None]
    with pytest.raises(BlowUpError):
        solve(cfg, lats[0])


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(N=4, dt=0.3)
    with pytest.raises(ValueError):
        SimConfig(N=4, dt=0.25, gamma=0.25)
    with pytest.raises(ValueError):
        SimConfig(N=4, dt=0.25, save_stride=3)
    with pytest.raises(ValueError):
        SimConfig(N=4, dt=0.25, sigma=SmoothBounded("sin"), variant=WongZakai(0.3, 0.01))
    with pytest.raises(ValueError):
        SmoothBounded("tanh")


def test_incompatible_lattice_rejected():
    cfg = SimConfig(N=8, dt=2.0**-6, sigma=Constant(1.0))
    with pytest.raises(ValueError):
        solve(cfg, sample_brownian_lattice(0, 4, 2.0**-6))
    with pytest.raises(ValueError):
        solve(cfg, sample_brownian_lattice(0, 8, 2.0**-5))
    wz = SimConfig(N=8, dt=2.0**-6, sigma=Linear(0, 1), variant=WongZakai(0.3, 0.1), N_w=4)
    with pytest.raises(ValueError):
        solve(wz, sample_brownian_lattice(0, 4, 2.0**-6, margin=2))
    with pytest.raises(ValueError):
        step(FourierField.zeros(3), 0, sample_brownian_lattice(0, 8, 2.0**-6), cfg)


# --- weak form -----------------------------------------------------------------


def test_weak_form_zero_sigma():
    cfg = SimConfig(N=4, dt=2.0**-15, sigma=Zero(), ic=Smooth("bump2"))
    W = BrownianLattice.zeros(4, cfg.dt)
    traj = solve(cfg, W)
    assert weak_form_residual(traj, FourierField.basis(1, 4), 0.3, W) <= 1e-10


def test_weak_form_orthogonal_test_function_has_no_noise():
    cfg = SimConfig(N=8, dt=2.0**-8, sigma=Constant(1.0), variant=Truncated(3), ic=Smooth("one"))
    W = sample_brownian_lattice(8, 3, cfg.dt)
    terms = weak_form_terms(solve(cfg, W), FourierField.basis(5, 8), 0.3, W)
    assert np.all(terms["noise"] == 0.0)


def test_weak_form_rejects_wide_test_function():
    cfg = SimConfig(N=4, dt=2.0**-6)
    W = BrownianLattice.zeros(4, cfg.dt)
    with pytest.raises(ValueError):
        weak_form_residual(solve(cfg, W), FourierField.basis(6), 0.3, W)


def _smooth_path_lattice(N_w, dt, margin):
    # W^n_t = sin(2 pi (n+1) t) / (1 + n^2), sampled on the step grid including the margin
    K = int(round(1 / dt))
    t = np.arange(-margin, K + margin + 1) * dt
    n = np.arange(-N_w, N_w + 1)[:, None]
    P = np.sin(2 * np.pi * (n + 1) * t[None, :]) / (1 + n**2)
    return BrownianLattice.from_increments(np.diff(P, axis=1), dt, margin)


def test_wong_zakai_frozen_smooth_path_first_order():
    eps, delta = 0.5, 1 / 16
    res = []
    for dt in (2.0**-8, 2.0**-9):
        margin = int(round(delta / dt)) + 1
        W = _smooth_path_lattice(4, dt, margin)
        cfg = SimConfig(N=8, dt=dt, sigma=Linear(0.0, 1.0), variant=WongZakai(eps, delta),
                        gamma=0.1, ic=Smooth("cos"), N_w=4)
        traj = solve(cfg, W)
        res.append(weak_form_residual(traj, FourierField.basis(1, 8), 0.3, W))
    assert 1.6 <= res[0] / res[1] <= 2.4


def test_wong_zakai_zero_noise_is_damped_heat_flow():
    eps, delta, gamma = 0.3, 0.027, 0.1
    dt = 2.0**-8
    W = BrownianLattice.zeros(6, dt, margin=8)
    ic = rand_ic(9, 6)
    cfg = SimConfig(N=6, dt=dt, sigma=Linear(0.0, 1.0), variant=WongZakai(eps, delta), gamma=gamma, ic=ic, N_w=6)
    C = renorm_constant(eps, gamma, 6, tol=None)
    m = np.arange(-6, 7)
    expect = np.exp(-(m**2.0) - 0.5 * C) * ic.field.coeffs
    assert np.allclose(solve(cfg, W).states[-1], expect, atol=1e-12)


def test_mollified_variant_uses_multipliers():
    # constant sigma: the mollified solution equals the truncated one with scaled increments
    dt = 2.0**-7
    W = sample_brownian_lattice(10, 6, dt)
    a = solve(SimConfig(N=6, dt=dt, sigma=Constant(1.0), variant=Mollified(0.4), gamma=0.1, N_w=6), W)
    m = mollifier_multipliers(0.4, 6)(np.arange(-6, 7))
    scaled = BrownianLattice.from_increments(W.increments * m[:, None], dt)
    b = solve(SimConfig(N=6, dt=dt, sigma=Constant(1.0), variant=Full(), gamma=0.1), scaled)
    assert np.allclose(a.states, b.states, atol=1e-13)
