import io
import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import abstract_coeffs, canonical_coeffs, canonical_laws, smooth_state
from twofluid import evolve as E, fields as F, modes as M, spectral as S
from twofluid.closure import closure_at
from twofluid.errors import NonPositiveMass, StepTooLarge
from twofluid.state import State


@pytest.fixture(scope="module")
def small():
    # 16^3 box of side 4 pi: dk = 1/2, retained radii up to ~4.3
    return F.BoxGrid(16, 4 * np.pi)


def full_operator(k, c):
    """8x8 generator on (n+, u+, n-, u-) for one wave vector, straight from the PDE."""
    k = np.asarray(k, float)
    r2 = k @ k
    b1, b2, b3, b4 = c.betas
    L = np.zeros((8, 8), dtype=complex)
    L[0, 1:4] = -1j * b1 * k
    L[4, 5:8] = -1j * b4 * k
    for base, nu1, nu2, (ga, gb) in ((1, c.nu1_plus, c.nu2_plus, (b1, b2)),
                                      (5, c.nu1_minus, c.nu2_minus, (b3, b4))):
        blk = slice(base, base + 3)
        L[blk, 0] = -1j * ga * k
        L[blk, 4] = -1j * gb * k
        L[blk, blk] = -nu1 * r2 * np.eye(3) - nu2 * np.outer(k, k)
    return L


def test_linear_identity_and_superposition(small):
    c = canonical_coeffs()
    rng = np.random.default_rng(0)
    a = smooth_state(small, rng, 1.0, kmax=5)
    b = smooth_state(small, rng, 1.0, kmax=5)
    assert np.array_equal(E.evolve_linear(a, c, 0.0).stacked(), a.stacked())
    prop = E.LinearPropagator(small, c)
    lhs = E.evolve_linear(a + b, c, 3.0, prop).stacked()
    rhs = (E.evolve_linear(a, c, 3.0, prop) + E.evolve_linear(b, c, 3.0, prop)).stacked()
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * np.max(np.abs(lhs))
    one = E.evolve_linear(a, c, 3.0, prop).stacked()
    two = E.evolve_linear(E.evolve_linear(a, c, 1.25, prop), c, 1.75, prop).stacked()
    assert np.max(np.abs(two - one)) < 1e-10 * np.max(np.abs(one))


def test_linear_matches_full_operator_oracle(small):
    c = canonical_coeffs()
    rng = np.random.default_rng(1)
    s = State.zeros(small)
    spec = np.zeros((8,) + small.spectral_shape, dtype=complex)
    picks = [(1, 2, 3), (3, 0, 0), (-2, 5, 1), (4, 4, 4), (0, 7, 2)]
    for idx in picks:
        spec[(slice(None),) + idx] = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    s = E.unpack(small, spec)
    spec = E.pack(s)  # Hermitian-consistent version
    t = 2.5
    out = E.pack(E.evolve_linear(s, c, t))
    for idx in picks:
        k = small.kd[(slice(None),) + idx]
        want = expm(t * full_operator(k, c)) @ spec[(slice(None),) + idx]
        got = out[(slice(None),) + idx]
        assert np.max(np.abs(got - want)) < 1e-10 * np.max(np.abs(want))


def test_linear_single_mode_rate_frozen():
    c = abstract_coeffs()
    grid = F.BoxGrid(8, 2 * np.pi)
    spec = np.zeros((8,) + grid.spectral_shape, dtype=complex)
    # eigenvector of the unstable root at r = 1 on the mode k = (1, 0, 0)
    lam = 0.31499298302077117
    b1, b2, b3, b4 = c.betas
    nup = c.nu_plus
    v = np.array([1.0, -lam / b1,
                  -(lam ** 2 + b1 ** 2 + nup * lam) / (b1 * b2),
                  (lam ** 3 + b1 ** 2 * lam + nup * lam ** 2) / (b1 * b2 * b4)])
    spec[0, 1, 0, 0] = v[0]
    spec[1:4, 1, 0, 0] = -1j * np.array([1.0, 0, 0]) * v[1]
    spec[4, 1, 0, 0] = v[2]
    spec[5:8, 1, 0, 0] = -1j * np.array([1.0, 0, 0]) * v[3]
    s = E.unpack(grid, spec)
    n0 = s.component_norms()
    for t in (0.5, 4.0, 12.0):
        nt = E.evolve_linear(s, c, t).component_norms()
        for a, b in zip(n0, nt):
            assert b / a == pytest.approx(math.exp(lam * t), rel=1e-12)


def test_growing_mode_two_sided_bound():
    c = canonical_coeffs()
    vt = c.theta / 10
    eta = S.eta_threshold(c, vt)
    grid = F.BoxGrid(32, M.box_for_eta(eta, 32, dealias=True))
    s = M.mode_to_state(M.build_mode(eta, c, grid, dealias=True))
    n0 = np.array(s.component_norms())
    prop = E.LinearPropagator(grid, c)
    for t in np.linspace(0, 10 / c.theta, 6)[1:]:
        nt = np.array(E.evolve_linear(s, c, t, prop).component_norms())
        lo = math.exp((c.theta - vt) * t) * n0
        hi = math.exp(c.theta * t) * n0
        assert np.all(nt >= lo * (1 - 1e-6)) and np.all(nt <= hi * (1 + 1e-6))


def test_incompressible_part_decays(small):
    c = canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(2), 1.0, kmax=5)
    prop = E.LinearPropagator(small, c)
    prev = None
    for t in (0.0, 0.5, 1.0, 3.0):
        st = E.evolve_linear(s, c, t, prop)
        psi = sum(F.spectral_l2(small, F.hodge_split(small, u).psi) for u in (st.u_plus, st.u_minus))
        if prev is not None:
            assert psi <= prev * (1 + 1e-12)
        prev = psi


def test_linear_grid_mismatch(small):
    c = canonical_coeffs()
    prop = E.LinearPropagator(F.BoxGrid(8, 1.0), c)
    with pytest.raises(F.GridMismatch):
        E.evolve_linear(State.zeros(small), c, 1.0, prop)


# -- nonlinear tendency -----------------------------------------------------------

def test_rhs_trivial_states(small):
    laws, c = canonical_laws(), canonical_coeffs()
    z = E.nonlinear_rhs(State.zeros(small), laws, c)
    assert np.all(z.stacked() == 0)
    s = State.zeros(small)
    s = State(small, np.full(small.shape, 0.3), s.u_plus, np.full(small.shape, -0.2), s.u_minus)
    assert np.max(np.abs(E.nonlinear_rhs(s, laws, c).stacked())) < 1e-13


def test_rhs_quadratic_leading_order(small):
    laws, c = canonical_laws(), canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(3), 1.0)
    ratios = [E.pack(E.nonlinear_rhs(s.scaled(eps), laws, c)) for eps in (1e-2, 1e-3, 1e-4)]
    q = [np.max(np.abs(x)) / eps ** 2 for x, eps in zip(ratios, (1e-2, 1e-3, 1e-4))]
    assert q[1] == pytest.approx(q[2], rel=2e-3)
    assert q[0] == pytest.approx(q[2], rel=2e-2)


def test_rhs_matches_conservative_form():
    laws, c = canonical_laws(), canonical_coeffs()
    grid = F.BoxGrid(32, 2 * np.pi)
    s = smooth_state(grid, np.random.default_rng(0), 0.05)
    a = E.nonlinear_rhs(s, laws, c, dealias=False).stacked()
    b = E.direct_rhs(s, laws, c).stacked()
    assert np.max(np.abs(a - b)) < 1e-8 * np.max(np.abs(b))


def test_coefficient_functions_by_finite_differences(small):
    laws, c = canonical_laws(0.7), canonical_coeffs(0.7)
    phase, cap, visc = laws
    terms = E.NonlinearTerms(small, laws, c)
    h = 1e-6
    for Rp, Rm in ((1.0, 1.0), (1.3, 0.8), (0.6, 1.5)):
        cl = closure_at(Rp, Rm, phase, cap)
        coef = terms.coefficients(cl)
        ap = lambda a, b: closure_at(a, b, phase, cap).alpha_plus
        dA_dRp = (ap(Rp + h, Rm) - ap(Rp - h, Rm)) / (2 * h)
        dA_dRm = (ap(Rp, Rm + h) - ap(Rp, Rm - h)) / (2 * h)
        assert coef["h_plus"] == pytest.approx(dA_dRp / Rp, rel=1e-7)
        assert coef["k_plus"] == pytest.approx(dA_dRm / Rp, rel=1e-7)
        assert coef["h_minus"] == pytest.approx(-dA_dRp / Rm, rel=1e-7)
        assert coef["k_minus"] == pytest.approx(-dA_dRm / Rm, rel=1e-7)
    eq = terms.coefficients(closure_at(1.0, 1.0, phase, cap))
    for key in ("g_plus", "gbar_plus", "g_minus", "gbar_minus", "l_plus", "l_minus"):
        assert abs(eq[key]) < 1e-14


def test_guard_trips():
    laws, c = canonical_laws(), canonical_coeffs()
    grid = F.BoxGrid(8, 2 * np.pi)
    s = State.zeros(grid)
    s.n_plus[0, 0, 0] = -2.0 * c.alpha1
    with pytest.raises(NonPositiveMass):
        E.nonlinear_rhs(s, laws, c, dealias=False)
    tr = E.evolve_nonlinear(s, laws, c, 1.0, 0.01, dealias=False, check_step=False)
    assert tr.status == "guard" and tr.rows == []


# -- integrator --------------------------------------------------------------------

def test_zero_nonlinearity_matches_linear(small):
    c = canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(4), 1.0, kmax=5)
    tr = E.evolve_nonlinear(s, None, c, 1.0, 0.02, sample_every=10, keep_states=True, nonlinear=False)
    prop = E.LinearPropagator(small, c)
    X0 = E.pack(s) * small.dealias_mask
    assert len(tr.times) == 6
    for t, X in zip(tr.times, tr.states):
        ref = prop.apply(X0, t)
        assert np.max(np.abs(X - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_step_too_large(small):
    c = canonical_coeffs()
    lim = E.max_rate(small, c)
    with pytest.raises(StepTooLarge):
        E.evolve_nonlinear(State.zeros(small), None, c, 1.0, 1.5 / lim, nonlinear=False)


def test_mean_conservation_and_order(small):
    laws, c = canonical_laws(), canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(5), 0.1)
    finals = []
    for dt in (0.025, 0.0125, 0.00625):
        tr = E.evolve_nonlinear(s, laws, c, 0.5, dt, sample_every=20, keep_states=True)
        assert tr.status == "complete"
        for X in tr.states:
            assert abs(X[0, 0, 0, 0] - tr.states[0][0, 0, 0, 0]) <= 1e-12
            assert abs(X[4, 0, 0, 0] - tr.states[0][4, 0, 0, 0]) <= 1e-12
        finals.append(tr.states[-1])
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert 3.5 <= math.log2(e1 / e2) <= 4.5


def test_series_csv(small):
    c = canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(6), 0.1)
    tr = E.evolve_nonlinear(s, None, c, 0.06, 0.02, nonlinear=False)
    buf = io.StringIO()
    tr.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,l2_total,h4_total,l2_n_plus,l2_u_plus,l2_n_minus,l2_u_minus,guard_min_R"
    assert len(lines) == 5
    row = [float(v) for v in lines[1].split(",")]
    assert row[1] == pytest.approx(sum(row[3:7]), rel=1e-15)
    assert row[2] >= row[1]
    assert np.all(np.diff(tr.column("t")) > 0)


# -- Duhamel ---------------------------------------------------------------------------

def test_duhamel_zero_nonlinearity(small):
    c = canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(7), 1.0)
    tr = E.evolve_nonlinear(s, None, c, 0.4, 0.02, keep_states=True, keep_tendencies=True,
                            nonlinear=False)
    t, res, ud = E.duhamel_residual(tr, None, c)
    assert res[0] == 0.0 and ud[0] == 0.0
    assert np.max(res) <= 1e-12 * max(1.0, s.norm())


def test_duhamel_second_order(small):
    laws, c = canonical_laws(), canonical_coeffs()
    s = smooth_state(small, np.random.default_rng(8), 0.1)
    tr = E.evolve_nonlinear(s, laws, c, 0.32, 0.005, keep_states=True, keep_tendencies=True)
    finals = [E.duhamel_residual(tr, laws, c, stride=k)[1][-1] for k in (1, 2, 4)]
    assert finals[1] / finals[0] == pytest.approx(4.0, rel=0.1)
    assert finals[2] / finals[1] == pytest.approx(4.0, rel=0.1)
    # recomputed tendencies give the same answer
    tr.tendencies = []
    again = E.duhamel_residual(tr, laws, c, stride=2)[1][-1]
    assert again == pytest.approx(finals[1], rel=1e-10)


# -- escape bookkeeping -------------------------------------------------------------

def test_escape_config():
    cfg = E.EscapeConfig(0.001, 0.1, 0.125)
    assert cfg.t_pred == pytest.approx(8 * math.log(200), rel=1e-15)
    assert cfg.t_pred == pytest.approx(42.38, abs=1e-2)
    assert cfg.vartheta == pytest.approx(1 / cfg.t_pred)
    ts = [E.EscapeConfig(e, 0.1, 0.125).t_pred for e in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(a < b for a, b in zip(ts, ts[1:]))
    with pytest.raises(ValueError):
        E.EscapeConfig(0.2, 0.1, 0.125)
    with pytest.raises(ValueError):
        E.EscapeConfig(0.01, 0.1, 0.125, monitor="h2")


def test_crossing_and_fit():
    t = np.linspace(0, 10, 41)
    y = 0.01 * np.exp(0.3 * t)
    assert E.growth_fit(t, y) == pytest.approx(0.3, rel=1e-12)
    assert E.crossing_time(t, y, 0.01 * math.exp(1.5)) == pytest.approx(5.0, rel=1e-12)
    assert E.crossing_time(t, y, 0.01 * math.exp(0.3 * 3.3)) == pytest.approx(3.3, rel=1e-12)
    assert E.crossing_time(t, y, 1e3) is None
    assert E.crossing_time(t, y, 1e-3) == 0.0
