import math

import numpy as np
import pytest
from scipy import integrate

from rshe.noise import (
    BrownianLattice,
    Full,
    Mollified,
    Truncated,
    WongZakai,
    bump,
    mollifier_multipliers,
    renorm_constant,
    rough_diffusion_row,
    sample_brownian_lattice,
    smoothed_path,
    time_mollify,
)
from rshe.spectral import FourierField, basis_eval, bracket, sobolev_norm


def quad_multiplier(eps, n):
    """Independent oracle: integrate rho_eps(y) cos(ny) over the support directly."""
    val, _ = integrate.quad(lambda y: bump(y, eps) * math.cos(n * y), -eps, eps, limit=400,
                            epsabs=1e-14, epsrel=1e-13)
    return val


# --- Brownian lattice ---------------------------------------------------------


def test_lattice_determinism():
    a = sample_brownian_lattice(42, 4, 2.0**-8, margin=3)
    b = sample_brownian_lattice(42, 4, 2.0**-8, margin=3)
    assert np.array_equal(a.increments, b.increments)
    c = sample_brownian_lattice(43, 4, 2.0**-8, margin=3)
    assert not np.array_equal(a.increments, c.increments)


def test_lattice_is_counter_addressed():
    # the same (seed, n, k) entry regardless of N_w or margin
    small = sample_brownian_lattice(7, 2, 2.0**-6)
    big = sample_brownian_lattice(7, 5, 2.0**-6, margin=4)
    assert np.array_equal(big.restricted(2).core, small.core)


def test_lattice_statistics():
    dt = 1e-4
    W = sample_brownian_lattice(11, 3, dt)
    K = W.steps
    assert K == 10_000
    assert abs(W.row(3).mean()) < 4 * math.sqrt(dt / K)
    r = np.corrcoef(W.row(1), W.row(-1))[0, 1]
    assert abs(r) < 4 / math.sqrt(K)
    for n in range(-3, 4):
        v = W.row(n).var()
        assert abs(v - dt) < 5 * dt * math.sqrt(2 / K)


def test_lattice_rejects_bad_arguments():
    with pytest.raises(ValueError):
        sample_brownian_lattice(0, 2, 0.3)
    with pytest.raises(ValueError):
        sample_brownian_lattice(0, -1, 0.25)


def test_lattice_paths_and_coarsening():
    W = sample_brownian_lattice(3, 2, 2.0**-6, margin=4)
    P = W.paths()
    assert np.all(P[:, W.margin] == 0.0)
    assert np.allclose(np.diff(P, axis=1), W.increments)
    C = W.coarsened(2)
    assert C.steps == W.steps // 2 and C.margin == 2
    assert np.allclose(C.paths()[:, ::1], P[:, ::2])


def test_lattice_immutable():
    W = BrownianLattice.zeros(2, 0.25)
    with pytest.raises(ValueError):
        W.increments[0, 0] = 1.0


# --- mollifier ------------------------------------------------------------------


def test_bump_has_unit_integral():
    for eps in (1.0, 0.3):
        val, _ = integrate.quad(lambda x: bump(x, eps), -eps, eps, epsabs=1e-14)
        assert val == pytest.approx(1.0, abs=1e-12)


def test_multiplier_examples():
    for eps in (0.05, 0.1, 0.5, 1.0):
        assert mollifier_multipliers(eps, 4)(0) == pytest.approx(1.0, abs=1e-12)
    assert mollifier_multipliers(0.5, 4)(2) == pytest.approx(mollifier_multipliers(0.25, 4)(4), abs=1e-10)
    assert 0.99 < mollifier_multipliers(0.1, 2)(1) < 1.0


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.2, 0.5])
def test_multiplier_table_bounds_and_symmetry(eps):
    m = mollifier_multipliers(eps, 512)
    assert np.all(np.abs(m.multipliers) <= 1.0 + 1e-12)
    n = np.arange(1, 513)
    assert np.array_equal(m(n), m(-n))


def test_multiplier_matches_direct_quadrature():
    for eps, n in [(0.3, 1), (0.3, 7), (0.1, 25), (0.8, 3)]:
        assert mollifier_multipliers(eps, n)(n) == pytest.approx(quad_multiplier(eps, n), abs=1e-11)


def test_multiplier_tends_to_one():
    vals = [mollifier_multipliers(e, 5)(5) for e in (0.4, 0.2, 0.1, 0.05)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0.95


def test_mollifier_rejects_bad_eps():
    for eps in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            mollifier_multipliers(eps, 4)


def test_mollifier_contraction():
    rng = np.random.default_rng(0)
    mol = mollifier_multipliers(0.3, 64)
    for _ in range(20):
        w = FourierField(rng.standard_normal(2 * 40 + 1))
        assert sobolev_norm(mol.apply(w), 0.1) <= sobolev_norm(w, 0.1) * (1 + 1e-14)


def test_mollifier_approximation_constant_is_stable():
    # ||(delta - rho_eps) * w||_{L2} <= C eps^kappa ||w||_{H^kappa}; fitted C stays put across eps
    rng = np.random.default_rng(1)
    kappa = 0.5
    ws = [FourierField(rng.standard_normal(2 * 64 + 1)) for _ in range(10)]
    ratios = []
    for eps in (0.4, 0.2, 0.1):
        mol = mollifier_multipliers(eps, 64)
        r = max(sobolev_norm(w - mol.apply(w), 0.0) / (eps**kappa * sobolev_norm(w, kappa)) for w in ws)
        ratios.append(r)
    assert max(ratios) / min(ratios) < 3.0


# --- renormalisation constant ------------------------------------------------


def test_renorm_gamma0_is_l2_norm_of_kernel():
    for eps in (0.3, 0.5):
        # rho_eps is supported in (-eps, eps) inside the torus, so its L2(T) norm is a line integral
        val, _ = integrate.quad(lambda x: bump(x, eps) ** 2, -eps, eps, epsabs=1e-13, limit=200)
        assert renorm_constant(eps, 0.0) == pytest.approx(val, rel=1e-8)


def test_renorm_pointwise_identity():
    rng = np.random.default_rng(2)
    n_sum = 4096
    n = np.arange(-n_sum, n_sum + 1)
    for eps in (0.1, 0.3):
        m = mollifier_multipliers(eps, n_sum)(n)
        for gamma in (0.0, 0.1, 0.2):
            C = renorm_constant(eps, gamma, n_sum)
            for x in rng.uniform(0, 2 * np.pi, 3):
                lhs = np.sum(bracket(n) ** (2 * gamma) * (m * basis_eval(n, x)) ** 2)
                assert lhs == pytest.approx(C, rel=1e-8)


def test_renorm_monotone_in_eps():
    assert renorm_constant(0.1, 0.2) > renorm_constant(0.2, 0.2)


def test_renorm_rejects_short_sum():
    with pytest.raises(ValueError):
        renorm_constant(0.1, 0.1, 16)
    assert renorm_constant(0.1, 0.1, 16, tol=None) > 0


# --- rough diffusion row ------------------------------------------------------


def test_row_constant_field():
    c, gamma = 1.7, 0.1
    v = FourierField.from_modes(6, {0: c * math.sqrt(2 * math.pi)})  # v == c pointwise
    for n in (-3, 0, 4):
        row = rough_diffusion_row(v, n, gamma, Full())
        expect = np.zeros(13)
        expect[n + 6] = c * bracket(n) ** gamma
        assert np.allclose(row.coeffs, expect, atol=1e-13)


def test_row_product_to_sum():
    row = rough_diffusion_row(FourierField.basis(1, 4), 1, 0.0, Full())
    # cos^2(x)/pi = 1/(2pi) + cos(2x)/(2pi)
    assert row.coeff(0) == pytest.approx(math.sqrt(2 * math.pi) / (2 * math.pi))
    assert row.coeff(2) == pytest.approx(math.sqrt(math.pi) / (2 * math.pi))
    assert sum(abs(row.coeff(n)) > 1e-14 for n in range(-4, 5)) == 2


def test_row_mollified_is_scaled_truncated():
    rng = np.random.default_rng(3)
    v = FourierField(rng.standard_normal(2 * 8 + 1))
    for n in (-5, 2, 7):
        base = rough_diffusion_row(v, n, 0.1, Truncated(8))
        mol = rough_diffusion_row(v, n, 0.1, Mollified(0.3))
        assert np.allclose(mol.coeffs, mollifier_multipliers(0.3, 8)(n) * base.coeffs, atol=1e-14)


def test_row_inactive_mode_is_zero():
    v = FourierField(np.ones(9))
    assert np.all(rough_diffusion_row(v, 6, 0.1, Truncated(3)).coeffs == 0)


# --- time mollification ---------------------------------------------------------


def test_time_mollify_small_delta_reproduces_increments():
    W = sample_brownian_lattice(5, 2, 2.0**-10, margin=2)
    # delta = dt: the kernel has only its centre node on the grid
    inc = time_mollify(W, W.dt)
    assert np.allclose(inc, W.core, atol=W.dt)


def test_time_mollify_linear_path():
    dt = 2.0**-8
    K = 256
    margin = 16
    W = BrownianLattice.from_increments(np.full((1, K + 2 * margin), dt), dt, margin)
    delta = 10 * dt
    path = smoothed_path(W, delta)[0]
    t = np.arange(K + 1) * dt
    assert np.allclose(path, t, atol=1e-12)
    assert np.allclose(time_mollify(W, delta), dt, atol=1e-14)


def test_time_mollify_is_smooth():
    W = sample_brownian_lattice(9, 1, 2.0**-10, margin=40)
    sm = time_mollify(W, 0.03)
    # finite total variation well below the raw path's
    assert np.all(np.isfinite(sm))
    assert np.abs(sm).sum(axis=1).max() < 0.5 * np.abs(W.core).sum(axis=1).min()


def test_time_mollify_needs_margin():
    W = sample_brownian_lattice(1, 1, 2.0**-8, margin=2)
    with pytest.raises(ValueError):
        time_mollify(W, 0.1)


def test_variant_validation():
    with pytest.raises(ValueError):
        Truncated(0)
    with pytest.raises(ValueError):
        Mollified(1.5)
    with pytest.raises(ValueError):
        WongZakai(0.3, 0.0)
