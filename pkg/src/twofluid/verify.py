"""Invariant suite behind ``twofluid verify``.

Each check returns a :class:`Check` with status PASS, FAIL or SKIP and a one
line detail.  Checks that need an unstable configuration are skipped (with
the report stating "no unstable root") when ``beta1 beta4 >= beta2 beta3``.
"""
from __future__ import annotations

import functools
import math
import os
import tempfile
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from . import evolve as E
from . import fields as F
from . import modes as M
from . import spectral as S
from .closure import (CapillaryLaw, ModelCoefficients, PhaseLaw, Viscosities,
                      derive_coefficients, solve_equilibrium)
from .state import State, read_state, spectral_component_norms, write_state

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"


@dataclass
class Check:
    name: str
    status: str
    detail: str
    seconds: float = 0.0

    def line(self):
        return f"[{self.status}] {self.name}: {self.detail} ({self.seconds:.1f} s)"


def random_laws(rng):
    """Physically valid laws with f'(1) > 0 and alpha4 comfortably positive."""
    while True:
        phase = PhaseLaw(rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0))
        cap = CapillaryLaw(rng.uniform(-1.0, 1.0), rng.uniform(0.05, 1.5),
                           rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5))
        mu_p, mu_m = rng.uniform(0.2, 3.0, size=2)
        visc = Viscosities(mu_p, mu_m, rng.uniform(-0.5, 1.0) * mu_p, rng.uniform(-0.5, 1.0) * mu_m)
        eq = solve_equilibrium(phase, cap)
        a4 = eq.c2 * eq.rho_plus / eq.rho_minus - eq.c2 * eq.alpha_plus * cap.fp / eq.s2_plus
        if a4 > 0.05 * eq.c2:
            return phase, cap, visc


def random_coeffs(rng, unstable=None):
    while True:
        b = rng.uniform(0.3, 2.0, size=4)
        nu = rng.uniform(0.2, 3.0, size=2)
        c = ModelCoefficients.from_betas(*b, *nu)
        if unstable is None or c.unstable == unstable:
            return c


def identity_defect(laws):
    """Relative gap between b1 b4 - b2 b3 and its closed form."""
    phase, cap, visc = laws
    eq = solve_equilibrium(phase, cap)
    c = derive_coefficients(eq, visc, cap)
    lhs = c.beta1 * c.beta4 - c.beta2 * c.beta3
    rhs = -eq.c2 * cap.derivative(1.0) / (math.sqrt(c.alpha1 * c.alpha4) * eq.rho_plus)
    return abs(lhs - rhs) / abs(rhs)


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- individual checks ---------------------------------------------------------

def check_identity(c, laws, rng):
    draws = [random_laws(rng) for _ in range(100)]
    if laws is not None:
        draws.append(laws)
    worst = max(identity_defect(l) for l in draws)
    return worst <= 1e-10, f"max relative defect {worst:.2e} over {len(draws)} configs (tol 1e-10)"


def check_theta(c, laws, rng):
    b1, b2, b3, b4 = c.betas
    roots = np.roots([c.nu_plus * c.nu_minus, c.nu_plus * b4 ** 2 + c.nu_minus * b1 ** 2,
                      b1 ** 2 * b4 ** 2 - b1 * b2 * b3 * b4])
    ref = max(float(np.max(roots.real)), 0.0)
    err = abs(c.theta - ref)
    return err <= 1e-12 * max(1.0, ref), f"theta = {c.theta!r}, quadratic oracle {ref!r}"


def check_spectral_oracle(c, laws, rng, draws=1000):
    worst_root = worst_proj = worst_prop = 0.0
    for k in range(draws):
        cc = c if k == 0 else random_coeffs(rng)
        r = 10 ** rng.uniform(-2, 2)
        A = S.symbol_matrix(r, cc)
        lam = S.eigenvalues(r, cc)
        ref = np.linalg.eigvals(A)
        d = np.abs(lam[:, None] - ref[None, :])
        i, j = scipy.optimize.linear_sum_assignment(d)
        worst_root = max(worst_root, d[i, j].max() / max(1.0, np.abs(ref).max()))
        dec = S.decompose(r, cc)
        if not dec.degenerate:
            P = dec.projectors
            scale = max(1.0, np.abs(A).max())
            e1 = np.abs(P.sum(0) - np.eye(4)).max()
            e2 = max(np.abs(P[a] @ P[b] - (P[a] if a == b else 0)).max() for a in range(4) for b in range(4))
            e3 = np.abs(np.einsum("i,ijk->jk", dec.lambdas, P) - A).max() / scale
            worst_proj = max(worst_proj, e1, e2, e3)
        if r <= 10:
            t = rng.uniform(0.0, 5.0)
            refE = scipy.linalg.expm(t * A)
            got = S.propagator(r, cc, t)
            worst_prop = max(worst_prop, np.abs(got - refE).max() / np.abs(refE).max())
    ok = worst_root <= 1e-8 and worst_proj <= 1e-8 and worst_prop <= 1e-6
    return ok, (f"{draws} draws: roots {worst_root:.1e} (1e-8), projector identities "
                f"{worst_proj:.1e} (1e-8), propagator {worst_prop:.1e} (1e-6)")


def check_lambda1_bound(c, laws, rng):
    rs = np.geomspace(1e-3, 1e3, 10_000)
    l1 = S.lambda1(rs, c)
    below = bool(np.all(l1 < c.theta))
    return below, f"max lambda1 - theta = {float(np.max(l1 - c.theta)):.3e} over 1e4 radii in [1e-3, 1e3]"


def check_gap_slope(c, laws, rng):
    eta1 = S.eta_threshold(c, c.theta / 10)
    rs = np.geomspace(eta1, 100 * eta1, 200)
    slope = loglog_slope(rs, c.theta - S.lambda1(rs, c))
    return -1.3 <= slope <= -0.7, f"slope of theta - lambda1 on [eta1, 100 eta1] = {slope:.4f} (window [-1.3, -0.7])"


def check_expansions(c, laws, rng):
    lo = np.geomspace(S.ETA2 / 100, S.ETA2, 9)
    s_lo = loglog_slope(lo, [S.low_freq_expansion(r, c).defect for r in lo])
    eta1 = S.eta_threshold(c, c.theta / 10)
    hi = np.geomspace(eta1, 100 * eta1, 9)
    s_hi = loglog_slope(hi, [S.high_freq_expansion(r, c, eta1).defect for r in hi])
    p_lo = np.array([S.projector_asymptotics(r, c).defects for r in lo[:5]])
    shrink_lo = all(loglog_slope(lo[:5], p_lo[:, k]) > 0 for k in range(4))
    # the fast high-regime projector limits need distinct viscosities
    ch = c if abs(c.nu_plus - c.nu_minus) > 1e-3 * c.nu_plus else ModelCoefficients.from_betas(
        1.3, 2.1, 0.9, 1.1, 1.0, 2.0)
    e1h = S.eta_threshold(ch, ch.theta / 10)
    hr = np.geomspace(10 * e1h, 1000 * e1h, 5)
    p_hi = np.array([S.projector_asymptotics(r, ch, e1h).defects for r in hr])
    shrink_hi = all(loglog_slope(hr, p_hi[:, k]) < 0 for k in range(4))
    ok = s_lo >= 2.7 and s_hi <= -0.8 and shrink_lo and shrink_hi
    return ok, (f"low slope {s_lo:.2f} (>= 2.7), high slope {s_hi:.2f} (<= -0.8), "
                f"projector defects shrink: low {shrink_lo}, high {shrink_hi}")


def check_stability_contrast(c, laws, rng):
    phase, cap, visc = laws if laws is not None else (PhaseLaw(2.0, 2.0), CapillaryLaw(0.0, 1.0), Viscosities(2.0, 2.0))
    worst = -math.inf
    for fp in (-1.0, 0.0):
        cc = replace(cap, fp=fp)
        co = derive_coefficients(solve_equilibrium(phase, cc), visc, cc)
        worst = max(worst, S.spectral_bound(1e-3, 1e3, co, 10_000))
    return worst <= 1e-12, f"max Re lambda with f'(1) in (-1, 0): {worst:.3e} (<= 1e-12)"


def check_linear_bounds(c, laws, rng, n=64):
    vt = c.theta / 10
    eta = S.eta_threshold(c, vt)
    grid = F.BoxGrid(n, M.box_for_eta(eta, n, dealias=True))
    s = M.mode_to_state(M.build_mode(eta, c, grid, dealias=True))
    n0 = np.array(s.component_norms())
    prop = E.LinearPropagator(grid, c)
    slack = -math.inf
    for t in np.linspace(0, 10 / c.theta, 21)[1:]:
        nt = np.array(E.evolve_linear(s, c, t, prop).component_norms())
        lo = math.exp((c.theta - vt) * t) * n0
        hi = math.exp(c.theta * t) * n0
        slack = max(slack, float(np.max(lo / nt - 1.0)), float(np.max(nt / hi - 1.0)))
    return slack <= 1e-6, f"{n}^3, t in [0, 10/theta]: worst relative excursion {slack:+.2e} (<= 1e-6; negative means inside)"


def check_semigroup(c, laws, rng, states=100):
    eta1 = S.eta_threshold(c, c.theta / 10)
    grid = F.BoxGrid(16, 2 * np.pi * 8 / eta1)
    prop = E.LinearPropagator(grid, c)
    times = np.linspace(0, 20 / c.theta, 11)
    C = 0.0
    for _ in range(states):
        X = E.pack(State(grid, rng.standard_normal(grid.shape), rng.standard_normal((3,) + grid.shape),
                           rng.standard_normal(grid.shape), rng.standard_normal((3,) + grid.shape)))
        n0 = sum(spectral_component_norms(grid, E._parts(X), 0))
        for t in times:
            nt = sum(spectral_component_norms(grid, E._parts(prop.apply(X, t)), 0))
            C = max(C, nt / (math.exp(c.theta * t) * n0))
    return C <= 10.0, f"fitted prefactor C = {C:.4f} over {states} states, t in [0, 20/theta] (<= 10)"


def check_infrastructure(c, laws, rng):
    grid = F.BoxGrid(16, 2 * np.pi * 1.5)
    worst_planch = worst_hodge = 0.0
    for _ in range(20):
        f = rng.standard_normal(grid.shape)
        a, b = F.l2_norm(grid, f), F.spectral_l2(grid, F.forward(grid, f))
        worst_planch = max(worst_planch, abs(a - b) / a)
        g = F.forward(grid, rng.standard_normal(grid.shape))
        u = F.inverse(grid, F.grad(grid, g))
        parts = F.hodge_split(grid, u)
        back = F.hodge_reconstruct(grid, parts)
        worst_hodge = max(worst_hodge, F.spectral_l2(grid, parts.psi), float(np.max(np.abs(back - u))))
    st = State(grid, rng.standard_normal(grid.shape), rng.standard_normal((3,) + grid.shape),
                 rng.standard_normal(grid.shape), rng.standard_normal((3,) + grid.shape), 1.5)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "state.field")
        write_state(path, st)
        back = read_state(path)
    exact = back.stacked().tobytes() == st.stacked().tobytes() and back.t == st.t and back.grid == grid
    ok = exact and worst_planch <= 1e-12 and worst_hodge <= 1e-10
    return ok, (f"field file bit-exact {exact}, Plancherel {worst_planch:.1e} (1e-12), "
                f"Hodge {worst_hodge:.1e} (1e-10)")


@dataclass
class EscapeRun:
    cfg: E.EscapeConfig
    result: E.EscapeResult
    duhamel_ratios: tuple
    duhamel_start: float
    seconds: float
    duhamel_seconds: float


@functools.lru_cache(maxsize=4)
def escape_run(laws, eps=5e-4, eps0=0.05, n=32) -> EscapeRun:
    """Escape experiment plus a Duhamel refinement study from its final state.

    Cached per configuration: the run takes minutes.
    """
    phase, cap, visc = laws
    c = derive_coefficients(solve_equilibrium(phase, cap), visc, cap)
    cfg = E.EscapeConfig(eps, eps0, c.theta)
    eta = S.eta_threshold(c, cfg.vartheta)
    grid = F.BoxGrid(n, M.box_for_eta(eta, n, dealias=True))
    t0 = time.perf_counter()
    res = E.escape_experiment(cfg, laws, c, grid, eta, keep_trajectory=True)
    t1 = time.perf_counter()
    # the nonlinear part is largest near escape, so refine there
    start = res.trajectory.final
    tr = E.evolve_nonlinear(start, laws, c, 0.16, 0.0025, keep_states=True, keep_tendencies=True)
    fin = [E.duhamel_residual(tr, laws, c, stride=k)[1][-1] for k in (1, 2, 4)]
    res.trajectory = None
    return EscapeRun(cfg, res, (fin[1] / fin[0], fin[2] / fin[1]), start.t,
                     t1 - t0, time.perf_counter() - t1)


def escape_checks(c, laws, eps=5e-4, eps0=0.05, n=32):
    """Growth band, escape window and Duhamel order of the escape run."""
    run_ = escape_run(laws, eps, eps0, n)
    cfg, res = run_.cfg, run_.result
    lo, hi = c.theta - cfg.vartheta - 0.1 * c.theta, 1.1 * c.theta
    out = [Check("escape growth rate", PASS if lo <= res.growth_fit <= hi else FAIL,
                 f"fit {res.growth_fit:.4f} on t in [{res.fit_window[0]:.1f}, {res.fit_window[1]:.1f}], "
                 f"band [{lo:.4f}, {hi:.4f}]", run_.seconds)]
    if res.t_escape is None:
        out.append(Check("escape time", FAIL, f"no escape before t = {res.series[-1][0]:.2f}"))
    else:
        rel = res.relative_error
        out.append(Check("escape time", PASS if abs(rel) <= 0.25 else FAIL,
                         f"L2 escape at {res.t_escape:.3f} vs T = {res.t_pred:.3f} "
                         f"(relative {rel:+.3f}, window 0.25; H4 escape {res.t_escape_h4:.3f})"))
    q = run_.duhamel_ratios
    ok = all(3.5 <= x <= 4.5 for x in q)
    out.append(Check("Duhamel residual order", PASS if ok else FAIL,
                     f"window from t = {run_.duhamel_start:.2f}: residual ratios under halving "
                     f"{q[0]:.3f}, {q[1]:.3f} (expect ~4)", run_.duhamel_seconds))
    return out


CHECKS = [
    ("coefficient identity", check_identity, False),
    ("theta oracle", check_theta, False),
    ("spectral oracle", check_spectral_oracle, False),
    ("lambda1 below theta", check_lambda1_bound, True),
    ("gap decay slope", check_gap_slope, True),
    ("frequency expansions", check_expansions, True),
    ("stability contrast", check_stability_contrast, False),
    ("linear growth bounds", check_linear_bounds, True),
    ("semigroup bound", check_semigroup, True),
    ("infrastructure", check_infrastructure, False),
]


def run(c: ModelCoefficients, laws=None, quick=False, seed=0, emit=None):
    """Run the suite; returns the list of Check results (``emit`` gets each line)."""
    emit = emit or (lambda line: None)
    results = []
    if not c.unstable:
        emit(f"no unstable root: beta1*beta4 - beta2*beta3 = {c.beta1 * c.beta4 - c.beta2 * c.beta3!r} >= 0; "
             "instability checks skipped")
    for name, fn, needs_unstable in CHECKS:
        if needs_unstable and not c.unstable:
            chk = Check(name, SKIP, "no unstable root")
        else:
            rng = np.random.default_rng(seed)
            t0 = time.perf_counter()
            ok, detail = fn(c, laws, rng)
            chk = Check(name, PASS if ok else FAIL, detail, time.perf_counter() - t0)
        results.append(chk)
        emit(chk.line())
    if laws is None:
        extra = [Check("nonlinear escape", SKIP, "direct-beta config has no closure laws")]
    elif not c.unstable:
        extra = [Check("nonlinear escape", SKIP, "no unstable root")]
    elif quick:
        extra = [Check("nonlinear escape", SKIP, "skipped by --quick")]
    else:
        extra = escape_checks(c, laws)
    for chk in extra:
        results.append(chk)
        emit(chk.line())
    return results


def summary(results):
    count = {s: sum(r.status == s for r in results) for s in (PASS, FAIL, SKIP)}
    return f"verify: {count[PASS]} passed, {count[FAIL]} failed, {count[SKIP]} skipped"
