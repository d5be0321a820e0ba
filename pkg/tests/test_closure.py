import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import SQRT2M1, canonical_coeffs, canonical_laws, random_laws
from twofluid import kernels
from twofluid.closure import (
    CapillaryLaw,
    ModelCoefficients,
    PhaseLaw,
    Viscosities,
    closure_at,
    closure_field,
    coefficients_from_config,
    derive_coefficients,
    growth_rate,
    parse_keyvalue,
    solve_equilibrium,
)
from twofluid.errors import (
    ConfigError,
    InvalidLaw,
    NegativeAlpha4,
    NonPositiveMass,
)


def bisect(fun, lo, hi, tol=1e-15):
    flo = fun(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fun(mid) * flo > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * hi:
            break
    return 0.5 * (lo + hi)


def test_symmetric_equilibrium():
    eq = solve_equilibrium(PhaseLaw(2.0, 2.0), CapillaryLaw(0.0, 0.0))
    assert eq.rho_plus == pytest.approx(2.0, abs=1e-14)
    assert eq.rho_minus == pytest.approx(2.0, abs=1e-14)
    assert eq.alpha_plus == pytest.approx(0.5, abs=1e-15)
    assert eq.s2_plus == pytest.approx(4.0, abs=1e-13)
    assert eq.s2_minus == pytest.approx(4.0, abs=1e-13)
    assert eq.c2 == pytest.approx(2.0, abs=1e-13)


def test_offset_equilibrium():
    eq = solve_equilibrium(PhaseLaw(2.0, 2.0), CapillaryLaw(6.75, 0.0))
    assert eq.rho_plus == pytest.approx(3.0, abs=1e-13)
    assert eq.rho_minus == pytest.approx(1.5, abs=1e-13)
    assert abs(eq.residual(PhaseLaw(2.0, 2.0))) < 1e-12


def test_unequal_exponents_against_bisection():
    phase = PhaseLaw(2.0, 1.5)
    eq = solve_equilibrium(phase, CapillaryLaw(0.0, 0.0))
    ref = bisect(lambda r: r ** 2 - (r / (r - 1.0)) ** 1.5, 1.0 + 1e-9, 10.0)
    assert eq.rho_plus == pytest.approx(ref, rel=1e-13)
    assert abs(eq.residual(phase)) < 1e-12
    assert eq.dphi > 0


def test_closure_at_matches_equilibrium():
    phase, cap, _ = canonical_laws()
    a = solve_equilibrium(phase, cap)
    assert closure_at(1.0, 1.0, phase, cap).rho_plus == a.rho_plus
    warm = closure_at(1.0, 1.0, phase, cap, guess=5.0)
    assert warm.rho_plus == pytest.approx(a.rho_plus, abs=1e-13)


def test_closure_at_off_equilibrium():
    phase = PhaseLaw(2.0, 2.0)
    cap = CapillaryLaw(0.0, 0.0)
    eq = closure_at(1.1, 0.9, phase, cap)
    ref = bisect(lambda r: r ** 2 - (0.9 * r / (r - 1.1)) ** 2, 1.1 * (1 + 1e-9), 20.0)
    assert eq.rho_plus == pytest.approx(ref, rel=1e-13)
    assert abs(eq.alpha_plus + eq.alpha_minus - 1.0) < 1e-14
    assert abs(eq.alpha_plus * eq.rho_plus - 1.1) < 1e-14
    assert abs(eq.alpha_minus * eq.rho_minus - 0.9) < 1e-14


@pytest.mark.parametrize("R", [(0.0, 1.0), (1.0, -0.5), (-1.0, 1.0)])
def test_nonpositive_mass(R):
    phase, cap, _ = canonical_laws()
    with pytest.raises(NonPositiveMass):
        closure_at(*R, phase, cap)


def test_invalid_laws():
    with pytest.raises(InvalidLaw):
        PhaseLaw(0.5, 2.0)
    with pytest.raises(InvalidLaw):
        Viscosities(1.0, -1.0)
    with pytest.raises(InvalidLaw):
        Viscosities(1.0, 1.0, -2.0, 0.0)
    with pytest.raises(InvalidLaw):
        CapillaryLaw(math.nan, 1.0)


def test_canonical_coefficients():
    c = canonical_coeffs()
    assert (c.alpha1, c.alpha2, c.alpha3, c.alpha4) == pytest.approx((2.0, 2.25, 2.0, 1.75), abs=1e-13)
    assert c.beta1 == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert c.beta4 == pytest.approx(math.sqrt(1.75), abs=1e-14)
    assert c.beta2 == pytest.approx(2.25 * math.sqrt(2.0) / 1.75, abs=1e-13)
    assert c.beta3 == pytest.approx(2.0 * math.sqrt(1.75) / 2.0, abs=1e-13)
    assert c.nu_plus == pytest.approx(2.0) and c.nu_minus == pytest.approx(2.0)
    assert c.nu1_plus == pytest.approx(1.0) and c.nu2_plus == pytest.approx(1.0)
    assert c.theta == pytest.approx(0.125, abs=1e-14)


def test_abstract_theta():
    c = ModelCoefficients.from_betas(1.0, 2.0, 1.0, 1.0, 1.0, 1.0)
    assert c.theta == pytest.approx(SQRT2M1, abs=1e-15)
    assert c.kappa1 == pytest.approx(math.sqrt(2.0), abs=1e-15)
    assert c.kappa2 == 1.0
    assert c.kappa3 == pytest.approx(math.sqrt(8.0), abs=1e-14)
    assert (c.beta1, c.beta2, c.beta3, c.beta4) == pytest.approx((1.0, 2.0, 1.0, 1.0), abs=1e-15)


def test_zero_slope_is_neutral():
    c = canonical_coeffs(fp=0.0)
    assert abs(c.beta1 * c.beta4 - c.beta2 * c.beta3) < 1e-14
    assert c.theta == 0.0


@pytest.mark.parametrize("fp", [-1.0, -0.1, 0.0, 0.1, 1.0])
def test_theta_sign_follows_slope(fp):
    c = canonical_coeffs(fp)
    assert np.sign(c.theta) == max(np.sign(fp), 0.0)
    assert np.sign(c.beta2 * c.beta3 - c.beta1 * c.beta4) == np.sign(fp)


def test_theta_is_root_of_quadratic(canonical):
    c = canonical
    s = c.theta
    q = c.nu_plus * c.nu_minus * s * s + (c.nu_plus * c.beta4 ** 2 + c.nu_minus * c.beta1 ** 2) * s + c.det_term
    assert abs(q) < 1e-14
    # canonical quadratic is 4 s^2 + 7.5 s - 1
    assert 4 * 0.125 ** 2 + 7.5 * 0.125 - 1 == 0.0


def test_negative_alpha4():
    phase, _, visc = canonical_laws()
    cap = CapillaryLaw(0.0, 10.0)
    with pytest.raises(NegativeAlpha4):
        derive_coefficients(solve_equilibrium(phase, cap), visc, cap)


def test_identity_random_draws():
    rng = np.random.default_rng(1234)
    for _ in range(100):
        phase, cap, visc = random_laws(rng)
        eq = solve_equilibrium(phase, cap)
        c = derive_coefficients(eq, visc, cap)
        lhs = c.det_term
        rhs = -eq.c2 * cap.fp / eq.rho_plus
        assert lhs == pytest.approx(rhs, rel=1e-10)
        diff = c.beta1 * c.beta4 - c.beta2 * c.beta3
        closed = -eq.c2 * cap.fp / (math.sqrt(c.alpha1 * c.alpha4) * eq.rho_plus)
        assert diff == pytest.approx(closed, rel=1e-10)
        assert abs(eq.residual(phase)) < 1e-12 and eq.dphi > 0


@settings(max_examples=60, deadline=None)
@given(
    gp=st.floats(1.0, 4.0), gm=st.floats(1.0, 4.0),
    Rp=st.floats(0.05, 20.0), Rm=st.floats(0.05, 20.0),
    f1=st.floats(-2.0, 2.0), fp=st.floats(-2.0, 2.0),
)
def test_closure_properties(gp, gm, Rp, Rm, f1, fp):
    phase = PhaseLaw(gp, gm)
    cap = CapillaryLaw(f1, fp)
    eq = closure_at(Rp, Rm, phase, cap)
    eps = np.finfo(float).eps
    scale = eq.rho_plus ** gp + eq.rho_minus ** gm + abs(eq.fval)
    floor = 16 * eps * scale + 4 * eps * eq.rho_plus * eq.dphi
    assert abs(eq.residual(phase)) <= max(1e-12, floor)
    assert eq.rho_plus > Rp
    assert abs(eq.alpha_plus + eq.alpha_minus - 1.0) < 1e-14
    assert eq.dphi > 0 and eq.c2 > 0


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_closure_field_backends(backend, monkeypatch):
    monkeypatch.setattr(kernels, "_impl", kernels.get_backend(backend))
    phase, cap, _ = canonical_laws()
    rng = np.random.default_rng(5)
    Rp = 1.0 + 0.2 * rng.standard_normal((6, 5, 4))
    Rm = 1.0 + 0.2 * rng.standard_normal((6, 5, 4))
    eq = closure_field(Rp, Rm, phase, cap)
    for idx in [(0, 0, 0), (3, 2, 1), (5, 4, 3)]:
        ref = closure_at(Rp[idx], Rm[idx], phase, cap)
        assert eq.rho_plus[idx] == pytest.approx(ref.rho_plus, rel=1e-13)
    assert np.max(np.abs(eq.alpha_plus + eq.alpha_minus - 1.0)) < 1e-14


def test_closure_field_rejects_vacuum():
    phase, cap, _ = canonical_laws()
    with pytest.raises(NonPositiveMass):
        closure_field(np.array([1.0, 0.0]), np.array([1.0, 1.0]), phase, cap)


def test_config_parsing():
    text = """
    # canonical
    gamma_plus = 2
    gamma_minus = 2
    f1 = 0
    fp = 1
    mu_plus = 2   # shear
    mu_minus = 2
    """
    cfg = parse_keyvalue(text)
    assert cfg["mu_plus"] == 2.0
    c = coefficients_from_config(cfg)
    assert c.theta == pytest.approx(0.125, abs=1e-14)
    d = json.loads(c.to_json())
    assert set(d) >= {"beta1", "beta_plus", "nu1_plus", "theta", "kappa3"}


def test_config_direct_override():
    cfg = parse_keyvalue("beta1=1\nbeta2=2\nbeta3=1\nbeta4=1\nnu_plus=1\nnu_minus=1\n")
    assert coefficients_from_config(cfg).theta == pytest.approx(SQRT2M1, abs=1e-15)


@pytest.mark.parametrize("text", [
    "beta1=1\ngamma_plus=2",
    "gamma_plus",
    "gamma_plus=2\ngamma_plus=3",
    "beta1=1\nbeta2=2\nbeta3=1\nbeta4=-1\nnu_plus=1\nnu_minus=1",
    "gamma_plus=0.5\ngamma_minus=2\nf1=0\nfp=1\nmu_plus=1\nmu_minus=1",
    "gamma_plus=2\ngamma_minus=2\nf1=0\nfp=1\nmu_plus=1",
    "",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        coefficients_from_config(parse_keyvalue(text))


def test_growth_rate_clamped():
    c = ModelCoefficients.from_betas(1.0, 0.5, 1.0, 1.0, 1.0, 1.0)
    assert growth_rate(c) == 0.0 and not c.unstable
