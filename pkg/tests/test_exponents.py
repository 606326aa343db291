import math

import numpy as np
import pytest

from rshe.exponents import (
    alpha0_closed_form,
    check_conditions,
    derive_exponents,
    find_admissible,
    gamma0,
)


def test_gamma0_value():
    assert gamma0() == pytest.approx(0.104356, abs=5e-7)
    assert gamma0() == pytest.approx((5 - math.sqrt(21)) / 4, abs=1e-15)
    assert gamma0() < (3 - math.sqrt(5)) / 4


def test_alpha0_closed_form_examples():
    assert alpha0_closed_form(0.0) == 0.0
    assert alpha0_closed_form(gamma0()) == pytest.approx(2.0, abs=1e-10)
    assert alpha0_closed_form(0.05) == pytest.approx(0.4 / 0.71, rel=1e-12)
    with pytest.raises(ValueError):
        alpha0_closed_form(0.2)
    with pytest.raises(ValueError):
        alpha0_closed_form(-0.01)


def test_alpha0_strictly_increasing_below_threshold():
    g = np.linspace(0, gamma0(), 1000)
    a = np.array([alpha0_closed_form(x) for x in g])
    assert np.all(np.diff(a) > 0)


def test_alpha0_closed_form_matches_boundary_derivation():
    for g in np.linspace(0.005, 0.1, 20):
        mu = 0.5 - g
        e = derive_exponents(g, mu, mu / g, strict=False)
        assert e.alpha0 == pytest.approx(alpha0_closed_form(g), abs=1e-12)


def test_derive_exponents_example():
    e = derive_exponents(0.1, 0.4, 4.0)
    assert e.p == pytest.approx(4 / 3)
    assert e.kappa == pytest.approx(0.125)
    assert e.theta == pytest.approx(0.725)
    assert e.alpha0 == pytest.approx(0.5 / 0.275, rel=1e-12)
    assert e.theta * e.mu + (1 - e.theta) * (e.mu - 1) == pytest.approx(0.125, abs=1e-15)


def test_derive_exponents_gamma_zero_example():
    e = derive_exponents(0.0, 0.3, 2.0)
    assert (e.kappa, e.theta) == pytest.approx((0.25, 0.95))
    assert e.alpha0 == pytest.approx(20.0)
    assert not check_conditions(e).alpha0_lt_2


@pytest.mark.parametrize(
    "args, word",
    [((0.1, 0.05, 2.0), "mu > gamma"), ((0.1, 0.45, 2.0), "1/2 - gamma"),
     ((0.1, 0.3, 1.0), "q > 1"), ((0.1, 0.3, 3.5), "mu/gamma"), ((-0.1, 0.3, 2.0), "gamma >= 0")],
)
def test_derive_exponents_names_violation(args, word):
    with pytest.raises(ValueError, match=word):
        derive_exponents(*args)


def test_check_conditions_boundary_and_interior():
    r = check_conditions(derive_exponents(0.1, 0.4, 4.0))
    assert r.cond_a_slack == pytest.approx(0.0, abs=1e-14)
    assert not r.cond_a
    r = check_conditions(derive_exponents(0.1, 0.4, 3.9))
    assert r.cond_a and r.cond_a_slack > 0


def test_cond_c_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        g = rng.uniform(0, 0.24)
        mu = rng.uniform(g, 0.5 - g)
        q_hi = mu / g if g > 0 else 50.0
        q = rng.uniform(1.0, q_hi)
        if not (g < mu < 0.5 - g and 1 < q < q_hi):
            continue
        assert abs(check_conditions(derive_exponents(g, mu, q)).cond_c_residual) <= 1e-14


def test_find_admissible_examples():
    for g in (0.0, 0.05, 0.1):
        e = find_admissible(g, 400)
        assert e is not None
        r = check_conditions(e)
        assert r.admissible and r.min_slack > 0
    for g in (0.11, 0.2):
        assert find_admissible(g, 400) is None


def test_feasibility_monotone():
    found = [find_admissible(g, 200) is not None for g in (0.10, 0.08, 0.05, 0.02, 0.0)]
    first = found.index(True)
    assert all(found[first:])


def test_threshold_has_no_interior_point():
    assert find_admissible(gamma0(), 10_000) is None


def test_max_slack_root_is_gamma0():
    # the best attainable min-slack at the corner mu -> 1/2 - gamma, q -> mu/gamma is 2 - alpha0,
    # so bisection on its sign recovers gamma0
    lo, hi = 0.05, 0.2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        mu = 0.5 - mid
        r = check_conditions(derive_exponents(mid, mu, mu / mid, strict=False))
        lo, hi = (mid, hi) if r.alpha0_slack > 0 else (lo, mid)
    assert lo == pytest.approx(gamma0(), abs=1e-12)


def test_find_admissible_rejects_bad_input():
    with pytest.raises(ValueError):
        find_admissible(0.3)
    with pytest.raises(ValueError):
        find_admissible(0.05, 50)
