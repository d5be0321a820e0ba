"""Linear and nonlinear time evolution of the scaled two-fluid system.

The spectral state is kept as one stacked array of shape (8, n, n, nh) in
file order (n+, u+, n-, u-).  Linear evolution is exact per lattice mode:
the compressible 4-vector (n+, phi+, n-, phi-) is advanced by the cached
propagator of its shell and the divergence-free part of each velocity by its
heat factor.  The nonlinear integrator is an integrating-factor RK4 built
on the same propagators, so only the nonlinear tendency is discretized.
"""
from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fields as F
from . import kernels
from . import spectral as S
from .closure import ModelCoefficients, closure_field, solve_equilibrium
from .errors import GridMismatch, NoEscape, NonPositiveMass, StepTooLarge
from .modes import build_mode, mode_to_state
from .state import COMPONENT_NAMES, State, spectral_component_norms, write_state

__all__ = [
    "State", "LinearPropagator", "evolve_linear", "NonlinearTerms", "nonlinear_rhs",
    "direct_rhs", "Trajectory", "evolve_nonlinear", "EscapeConfig", "EscapeResult",
    "escape_experiment", "duhamel_residual", "max_rate", "SERIES_HEADER",
]

GUARD_MIN_R = 1e-6
SERIES_HEADER = ["t", "l2_total", "h4_total", "l2_n_plus", "l2_u_plus",
                 "l2_n_minus", "l2_u_minus", "guard_min_R"]


def pack(state: State):
    """Stacked spectral array (8, n, n, nh) of a physical state."""
    nph, uph, nmh, umh = state.spectral()
    return np.concatenate([nph[None], uph, nmh[None], umh])


def unpack(grid, X, t=0.0) -> State:
    return State.from_spectral(grid, (X[0], X[1:4], X[4], X[5:8]), t)


def _parts(X):
    return X[0], X[1:4], X[4], X[5:8]


def _velocity_gradient(grid, uh):
    """Physical ``du[i, j] = d_j u_i`` from spectral ``u``."""
    return np.stack([F.inverse(grid, F.grad(grid, uh[i])) for i in range(3)])


# -- exact linear evolution ------------------------------------------------------

class LinearPropagator:
    """Per-shell propagators and heat factors on a grid, cached by time step."""

    def __init__(self, grid: F.BoxGrid, c: ModelCoefficients, cache_size=8):
        self.grid = grid
        self.c = c
        live = grid.r > 0
        uniq, inv = np.unique(grid.shell2[live], return_inverse=True)
        shell = np.full(grid.spectral_shape, -1, dtype=np.int64)
        shell[live] = inv
        self.shell = shell.ravel()
        self.radii = grid.dk * np.sqrt(uniq.astype(float))
        self.kd = np.ascontiguousarray(grid.kd.reshape(3, -1))
        self._cache = OrderedDict()
        self._size = cache_size

    def factors(self, t):
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            self._cache.move_to_end(t)
            return hit
        r2 = self.radii ** 2
        out = (S.propagators(self.radii, self.c, t),
               np.exp(-self.c.nu1_plus * r2 * t),
               np.exp(-self.c.nu1_minus * r2 * t))
        self._cache[t] = out
        if len(self._cache) > self._size:
            self._cache.popitem(last=False)
        return out

    def apply(self, X, t):
        """``exp(t L) X`` for a stacked spectral array."""
        if t == 0:
            return np.array(X, copy=True)
        E, hp, hm = self.factors(t)
        m = self.shell.size
        a, b, cc, d = kernels.apply_modes(
            E, hp, hm, self.shell, self.kd,
            X[0].reshape(m), X[1:4].reshape(3, m), X[4].reshape(m), X[5:8].reshape(3, m),
        )
        sh = self.grid.spectral_shape
        return np.concatenate([np.reshape(a, (1,) + sh), np.reshape(b, (3,) + sh),
                               np.reshape(cc, (1,) + sh), np.reshape(d, (3,) + sh)])


def evolve_linear(s: State, c: ModelCoefficients, t, prop: Optional[LinearPropagator] = None) -> State:
    """Exact linear evolution of ``s`` over a time ``t >= 0``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    prop = prop or LinearPropagator(s.grid, c)
    if prop.grid != s.grid:
        raise GridMismatch("propagator and state live on different grids")
    if t == 0:
        return s.scaled(1.0)
    return unpack(s.grid, prop.apply(pack(s), t), s.t + t)


def max_rate(grid: F.BoxGrid, c: ModelCoefficients, dealias=True):
    """Largest ``|lambda_i(r)|`` over the (retained) lattice radii."""
    mask = grid.dealias_mask if dealias else np.ones(grid.spectral_shape, bool)
    sh = np.unique(grid.shell2[mask & (grid.r > 0)])
    if sh.size == 0:
        return 0.0
    lam = S.eigenvalues_batch(grid.dk * np.sqrt(sh.astype(float)), c)
    heat = max(c.nu1_plus, c.nu1_minus) * grid.dk ** 2 * float(sh.max())
    return float(max(np.max(np.abs(lam)), heat))


# -- nonlinear tendency ---------------------------------------------------------------

class NonlinearTerms:
    """Nonlinear tendency of the scaled system on a fixed grid.

    Coefficient functions are evaluated pointwise from the closure at
    ``R = 1 + n`` (unscaled ``n``).  The closure root of the previous call
    warm-starts the next one.  ``min_R`` holds the smallest fraction density
    seen by the last call.
    """

    def __init__(self, grid: F.BoxGrid, laws, c: ModelCoefficients, dealias=True):
        self.grid = grid
        self.phase, self.cap, self.visc = laws
        self.c = c
        self.eq = solve_equilibrium(self.phase, self.cap)
        self.dealias = dealias
        self.min_R = math.nan
        self._rho = None

    # pointwise closure and coefficient functions
    def closure(self, n_plus, n_minus):
        Rp = 1.0 + n_plus
        Rm = 1.0 + n_minus
        self.min_R = float(min(Rp.min(), Rm.min()))
        if not self.min_R > GUARD_MIN_R:
            raise NonPositiveMass(f"positivity guard tripped: min R = {self.min_R!r}")
        cl = closure_field(Rp, Rm, self.phase, self.cap, guess=self._rho)
        self._rho = cl.rho_plus
        return cl

    def coefficients(self, cl):
        """Pointwise ``g, gbar, h, k, l`` for both phases (dict of arrays)."""
        c, eq = self.c, self.eq
        C2 = cl.c2
        grow = 1.0 + cl.alpha_minus * cl.fprime / cl.s2_minus
        return {
            "g_plus": C2 * cl.rho_minus / cl.rho_plus - c.alpha1,
            "gbar_plus": C2 * grow - c.alpha2,
            "g_minus": C2 * cl.rho_plus / cl.rho_minus - C2 * cl.alpha_plus * cl.fprime / cl.s2_plus - c.alpha4,
            "gbar_minus": C2 - c.alpha3,
            "h_plus": C2 * cl.alpha_minus / (cl.R_plus * cl.s2_minus),
            "k_plus": -C2 * cl.alpha_plus * grow / (cl.R_plus * cl.s2_plus),
            "h_minus": -C2 * cl.alpha_minus / (cl.R_minus * cl.s2_minus),
            "k_minus": C2 * cl.alpha_plus * grow / (cl.R_minus * cl.s2_plus),
            "l_plus": 1.0 / cl.rho_plus - 1.0 / eq.rho_plus,
            "l_minus": 1.0 / cl.rho_minus - 1.0 / eq.rho_minus,
        }

    def _momentum(self, uh, u, dnp, dnm, coef, sign, mu, lam):
        """Unscaled nonlinear momentum tendency of one phase (physical, 3 comps)."""
        grid = self.grid
        inv = lambda a: F.inverse(grid, a)
        if sign > 0:
            gn, gbar = coef["g_plus"], coef["gbar_plus"]
            own, other = dnp, dnm
            h, k, l = coef["h_plus"], coef["k_plus"], coef["l_plus"]
        else:
            gn, gbar = coef["g_minus"], coef["gbar_minus"]
            own, other = dnm, dnp
            h, k, l = coef["h_minus"], coef["k_minus"], coef["l_minus"]
        # gradient of the volume fraction divided by the fraction density
        a = h * dnp + k * dnm
        du = _velocity_gradient(grid, uh)
        divu = du[0, 0] + du[1, 1] + du[2, 2]
        r2 = grid.r ** 2
        kdotu = np.sum(grid.kd * uh, axis=0)
        visc = inv(-mu * r2 * uh - (mu + lam) * grid.kd * kdotu[None])
        out = -gn * own - gbar * other
        out = out - np.einsum("jxyz,ijxyz->ixyz", u, du)
        out = out + mu * (np.einsum("ijxyz,jxyz->ixyz", du, a) + np.einsum("jixyz,jxyz->ixyz", du, a))
        out = out + lam * a * divu[None]
        out = out + l * visc
        return out

    def __call__(self, X):
        """Tendency ``(F1, F2, F3, F4)`` in scaled variables, stacked spectral."""
        grid, c = self.grid, self.c
        s1, s4 = math.sqrt(c.alpha1), math.sqrt(c.alpha4)
        Nh, Uh, Mh, Vh = _parts(X)
        nph, uph, nmh, umh = Nh / c.alpha1, Uh / s1, Mh / c.alpha4, Vh / s4
        inv = lambda a: F.inverse(grid, a)
        fwd = lambda a: F.forward(grid, a)
        n_p, n_m = inv(nph), inv(nmh)
        u_p, u_m = inv(uph), inv(umh)
        cl = self.closure(n_p, n_m)
        coef = self.coefficients(cl)
        dnp = inv(F.grad(grid, nph))
        dnm = inv(F.grad(grid, nmh))
        v = self.visc
        F1 = F.div(grid, fwd(-n_p[None] * u_p))
        F3 = F.div(grid, fwd(-n_m[None] * u_m))
        F2 = fwd(self._momentum(uph, u_p, dnp, dnm, coef, +1, v.mu_plus, v.lambda_plus))
        F4 = fwd(self._momentum(umh, u_m, dnp, dnm, coef, -1, v.mu_minus, v.lambda_minus))
        out = np.concatenate([(c.alpha1 * F1)[None], s1 * F2, (c.alpha4 * F3)[None], s4 * F4])
        if self.dealias:
            out *= grid.dealias_mask
        return out


def nonlinear_rhs(s: State, laws, c: ModelCoefficients, dealias=True) -> State:
    """Nonlinear tendency of the scaled system as a physical State."""
    terms = NonlinearTerms(s.grid, laws, c, dealias=dealias)
    X = pack(s)
    if dealias:
        X = X * s.grid.dealias_mask
    return unpack(s.grid, terms(X), s.t)


def direct_rhs(s: State, laws, c: ModelCoefficients) -> State:
    """Reference tendency from the conservative form of the momentum equations.

    Evaluates the full unscaled equations (pressure coupling with the closure
    coefficients, viscous stress divergence of ``alpha * S``) and subtracts the
    linear part.  It shares no coefficient function with ``nonlinear_rhs`` and
    serves only as a cross-check; no dealiasing is applied.
    """
    grid = s.grid
    phase, cap, visc = laws
    s1, s4 = math.sqrt(c.alpha1), math.sqrt(c.alpha4)
    Nh, Uh, Mh, Vh = _parts(pack(s))
    nph, uph, nmh, umh = Nh / c.alpha1, Uh / s1, Mh / c.alpha4, Vh / s4
    inv = lambda a: F.inverse(grid, a)
    fwd = lambda a: F.forward(grid, a)
    n_p, n_m = inv(nph), inv(nmh)
    Rp, Rm = 1.0 + n_p, 1.0 + n_m
    if not min(Rp.min(), Rm.min()) > GUARD_MIN_R:
        raise NonPositiveMass("positivity guard tripped")
    cl = closure_field(Rp, Rm, phase, cap)
    dRp = inv(F.grad(grid, nph))
    dRm = inv(F.grad(grid, nmh))

    def phase_rhs(uh, R, alpha, press, mu, lam, nu1, nu2, lin_p, lin_m):
        u = inv(uh)
        du = _velocity_gradient(grid, uh)
        divu = du[0, 0] + du[1, 1] + du[2, 2]
        stress = mu * (du + du.transpose(1, 0, 2, 3, 4)) + lam * divu * np.eye(3)[:, :, None, None, None]
        flux = np.stack([fwd(alpha * stress[i]) for i in range(3)])
        divs = inv(1j * np.einsum("jxyz,ijxyz->ixyz", grid.kd, flux))
        dudt = -np.einsum("jxyz,ijxyz->ixyz", u, du) - press + divs / R
        kdotu = np.sum(grid.kd * uh, axis=0)
        linear = -lin_p * dRp - lin_m * dRm + inv(-nu1 * grid.r ** 2 * uh - nu2 * grid.kd * kdotu[None])
        return dudt - linear

    C2 = cl.c2
    press_p = (C2 / cl.rho_plus) * (cl.rho_minus * dRp
                                     + cl.rho_plus * (1.0 + cl.alpha_minus * cl.fprime / cl.s2_minus) * dRm)
    press_m = (C2 / cl.rho_minus) * (cl.rho_minus * dRp
                                      + (cl.rho_plus - cl.rho_minus * cl.alpha_plus * cl.fprime / cl.s2_plus) * dRm)
    F2 = phase_rhs(uph, Rp, cl.alpha_plus, press_p, visc.mu_plus, visc.lambda_plus,
                   c.nu1_plus, c.nu2_plus, c.alpha1, c.alpha2)
    F4 = phase_rhs(umh, Rm, cl.alpha_minus, press_m, visc.mu_minus, visc.lambda_minus,
                   c.nu1_minus, c.nu2_minus, c.alpha3, c.alpha4)
    u_p, u_m = inv(uph), inv(umh)
    F1 = inv(F.div(grid, fwd(-n_p[None] * u_p)))
    F3 = inv(F.div(grid, fwd(-n_m[None] * u_m)))
    return State(grid, c.alpha1 * F1, s1 * F2, c.alpha4 * F3, s4 * F4, s.t)


# -- trajectories ---------------------------------------------------------------------

def norm_row(grid, X, t, c: ModelCoefficients):
    """One time-series row (see SERIES_HEADER) for a stacked spectral state."""
    parts = _parts(X)
    l2 = spectral_component_norms(grid, parts, 0)
    h4 = spectral_component_norms(grid, parts, 4)
    # fraction densities R = 1 + n / alpha, minimum over the grid
    mins = (F.inverse(grid, parts[0]).min() / c.alpha1, F.inverse(grid, parts[2]).min() / c.alpha4)
    return [float(t), float(sum(l2)), float(sum(h4))] + l2 + [1.0 + float(min(mins))]


@dataclass
class Trajectory:
    """Sampled output of a run.

    ``rows`` follow SERIES_HEADER.  ``states`` and ``tendencies`` hold stacked
    spectral arrays at the sample times when requested.  ``status`` is
    "complete", "stopped" (a stop condition fired) or "guard" (the positivity
    guard ended the run; the trajectory is truncated at the last good sample).
    """

    grid: F.BoxGrid
    dt: float
    rows: list = field(default_factory=list)
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    tendencies: list = field(default_factory=list)
    status: str = "complete"
    message: str = ""
    last: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def final(self) -> Optional[State]:
        """State at the last recorded sample."""
        if self.last is None:
            return None
        return unpack(self.grid, self.last, self.times[-1])

    def column(self, name):
        i = SERIES_HEADER.index(name)
        return np.array([row[i] for row in self.rows])

    def write_csv(self, path_or_file):
        write_series_csv(path_or_file, self.rows)


def write_series_csv(path_or_file, rows):
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])

    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
    else:
        emit(path_or_file)


def _steps(t_end, dt):
    if not (dt > 0 and t_end >= 0):
        raise ValueError("need dt > 0 and t_end >= 0")
    n = max(1, int(math.ceil(t_end / dt - 1e-9))) if t_end > 0 else 0
    return n, (t_end / n if n else dt)


def evolve_nonlinear(s: State, laws, c: ModelCoefficients, t_end, dt, sample_every=1,
                     keep_states=False, keep_tendencies=False, nonlinear=True, dealias=True,
                     stop: Optional[Callable] = None, snapshot: Optional[Callable] = None,
                     snapshot_every=None, check_step=True) -> Trajectory:
    """Integrating-factor RK4 for the scaled system.

    With ``h`` the step and ``E(t)`` the exact linear propagator:

        a = N(u),  b = N(E(h/2)(u + h/2 a)),  c = N(E(h/2) u + h/2 b),
        d = N(E(h) u + h E(h/2) c),
        u+ = E(h) u + h/6 (E(h) a + 2 E(h/2)(b + c) + d).

    The step is shrunk so that it divides ``t_end``.  ``stop(row)`` is asked
    after each sample and ends the run when true; ``snapshot(t, X)`` receives
    every ``snapshot_every``-th sample.  ``nonlinear=False`` forces the
    tendency to zero (laws may then be None).
    """
    grid = s.grid
    nsteps, h = _steps(t_end, dt)
    if check_step:
        lim = max_rate(grid, c, dealias)
        if h * lim > 1.0 + 1e-12:
            raise StepTooLarge(f"dt = {h!r} exceeds 1/max|lambda| = {1.0 / lim!r} on this grid")
    prop = LinearPropagator(grid, c)
    if nonlinear:
        terms = NonlinearTerms(grid, laws, c, dealias=dealias)
        N = terms
    else:
        N = lambda X: np.zeros_like(X)
    X = pack(s)
    if dealias:
        X = X * grid.dealias_mask
    traj = Trajectory(grid, h)
    t0 = s.t

    def record(k, X, a):
        t = t0 + k * h
        traj.last = X
        traj.rows.append(norm_row(grid, X, t, c))
        traj.times.append(t)
        if keep_states:
            traj.states.append(X.copy())
        if keep_tendencies:
            traj.tendencies.append(a.copy() if a is not None else N(X))
        if snapshot is not None and snapshot_every and (len(traj.rows) - 1) % snapshot_every == 0:
            snapshot(t, X)
        return stop is not None and stop(traj.rows[-1])

    try:
        a = N(X)
        if record(0, X, a):
            traj.status = "stopped"
            return traj
        for k in range(nsteps):
            Eh = prop.apply(X, h)
            b = N(prop.apply(X + 0.5 * h * a, 0.5 * h))
            cc = N(prop.apply(X, 0.5 * h) + 0.5 * h * b)
            d = N(Eh + h * prop.apply(cc, 0.5 * h))
            X = Eh + (h / 6.0) * (prop.apply(a, h) + 2.0 * prop.apply(b + cc, 0.5 * h) + d)
            a = N(X)
            if (k + 1) % sample_every == 0 or k + 1 == nsteps:
                if record(k + 1, X, a):
                    traj.status = "stopped"
                    return traj
    except NonPositiveMass as exc:
        traj.status = "guard"
        traj.message = str(exc)
    return traj


def duhamel_residual(traj: Trajectory, laws, c: ModelCoefficients, stride=1):
    """Residual of Duhamel's formula along a stored trajectory.

    With ``U_d(t) = U(t) - E(t) U(0)`` the integral ``int_0^t E(t - s) F(s) ds``
    is approximated by the trapezoid rule on every ``stride``-th stored sample
    (propagators exact).  Returns ``(times, residual, ud_norm)`` with L2 norms
    (sum over components).  Missing tendencies are recomputed from ``laws``.
    """
    grid = traj.grid
    if len(traj.states) != len(traj.times):
        raise ValueError("trajectory must keep its states at every sample")
    tend = traj.tendencies
    if len(tend) != len(traj.states):
        terms = NonlinearTerms(grid, laws, c)
        tend = [terms(X) for X in traj.states]
    idx = list(range(0, len(traj.states), stride))
    prop = LinearPropagator(grid, c)
    X0 = traj.states[idx[0]]
    lin = X0.copy()
    integral = np.zeros_like(X0)
    times, res, ud = [traj.times[idx[0]]], [0.0], [0.0]
    for p, q in zip(idx[:-1], idx[1:]):
        H = traj.times[q] - traj.times[p]
        lin = prop.apply(lin, H)
        integral = prop.apply(integral + 0.5 * H * tend[p], H) + 0.5 * H * tend[q]
        diff = traj.states[q] - lin
        times.append(traj.times[q])
        res.append(float(sum(spectral_component_norms(grid, _parts(diff - integral), 0))))
        ud.append(float(sum(spectral_component_norms(grid, _parts(diff), 0))))
    return np.array(times), np.array(res), np.array(ud)


# -- escape experiment --------------------------------------------------------------

@dataclass
class EscapeConfig:
    """Amplitudes and rates of the escape experiment.

    ``t_pred = ln(2 eps0 / eps) / theta`` and ``vartheta = 1 / t_pred``.
    """

    eps: float
    eps0: float
    theta: float
    vartheta: float = math.nan
    t_pred: float = math.nan
    monitor: str = "l2"

    def __post_init__(self):
        if not 0 < self.eps < self.eps0:
            raise ValueError("need 0 < eps < eps0")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.monitor not in ("l2", "h4"):
            raise ValueError("monitor must be 'l2' or 'h4'")
        self.t_pred = math.log(2.0 * self.eps0 / self.eps) / self.theta
        self.vartheta = 1.0 / self.t_pred


@dataclass
class EscapeResult:
    t_escape: Optional[float]
    t_escape_h4: Optional[float]
    growth_fit: float
    series: list
    t_pred: float
    delta0: float
    delta0_min: float
    m0: float
    eta: float
    dt: float
    status: str
    fit_window: tuple = (0.0, 0.0)
    linear_deviation: float = math.nan
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def relative_error(self):
        if self.t_escape is None:
            return math.nan
        return (self.t_escape - self.t_pred) / self.t_pred

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("trajectory", "series")}
        d["fit_window"] = list(self.fit_window)
        d["relative_error"] = self.relative_error
        d["series"] = [dict(zip(("t", "l2", "h4"), row[:3])) for row in self.series]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def crossing_time(t, y, level):
    """First time ``y`` reaches ``level``, log-linear between samples; None if never."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    hit = np.nonzero(y >= level)[0]
    if hit.size == 0:
        return None
    j = int(hit[0])
    if j == 0:
        return float(t[0])
    a, b = math.log(y[j - 1]), math.log(y[j])
    return float(t[j - 1] + (t[j] - t[j - 1]) * (math.log(level) - a) / (b - a))


def growth_fit(t, y):
    """Least-squares slope of ``log y`` against ``t``."""
    t = np.asarray(t, float)
    if t.size < 2:
        return math.nan
    return float(np.polyfit(t, np.log(np.asarray(y, float)), 1)[0])


def unit_mode_state(eta, c, grid, dealias=True):
    """Growing mode normalized to unit H4 norm (sum over the components)."""
    st = mode_to_state(build_mode(eta, c, grid, dealias))
    return st.scaled(1.0 / st.norm(4))


def escape_experiment(cfg: EscapeConfig, laws, c: ModelCoefficients, grid: F.BoxGrid, eta,
                      dt=None, sample_dt=0.25, t_end=None, dealias=True, strict=False,
                      keep_trajectory=False) -> EscapeResult:
    """Integrate from ``eps`` times the unit growing mode until the norm escapes.

    The threshold is ``delta0 = eps0 m0 / e`` with ``m0`` the L2 norm of the
    unit mode.  The run ends one sample after the monitored norm crosses it,
    or at ``t_end`` (default twice the predicted time).  The growth rate is
    fitted on the samples whose L2 norm stays below ``eps0**(2/3) delta0``.
    """
    unit = unit_mode_state(eta, c, grid, dealias)
    m0 = unit.norm(0)
    delta0 = cfg.eps0 * m0 / math.e
    s0 = unit.scaled(cfg.eps)
    t_end = 2.0 * cfg.t_pred if t_end is None else float(t_end)
    if dt is None:
        lim = max_rate(grid, c, dealias)
        dt = sample_dt / math.ceil(sample_dt * lim)
    every = max(1, int(round(sample_dt / dt)))
    col = 1 if cfg.monitor == "l2" else 2
    traj = evolve_nonlinear(s0, laws, c, t_end, dt, sample_every=every, dealias=dealias,
                            stop=lambda row: row[col] >= delta0)
    t = traj.column("t")
    l2 = traj.column("l2_total")
    h4 = traj.column("h4_total")
    t_l2 = crossing_time(t, l2, delta0)
    t_h4 = crossing_time(t, h4, delta0)
    win = l2 < cfg.eps0 ** (2.0 / 3.0) * delta0
    # contiguous early window only
    if not win.all():
        win[int(np.argmin(win)):] = False
    rate = growth_fit(t[win], l2[win])
    # deviation from the exact linear evolution over the same window
    prop = LinearPropagator(grid, c)
    X0 = pack(s0) * (grid.dealias_mask if dealias else 1.0)
    dev = 0.0
    for tk, yk in zip(t[win], l2[win]):
        lin = sum(spectral_component_norms(grid, _parts(prop.apply(X0, tk)), 0))
        dev = max(dev, abs(yk / lin - 1.0))
    monitored = t_l2 if cfg.monitor == "l2" else t_h4
    status = "escaped" if monitored is not None else ("guard" if traj.status == "guard" else "no escape")
    if monitored is None and strict:
        raise NoEscape(f"norm stayed below delta0 = {delta0!r} up to t = {t[-1]!r}")
    return EscapeResult(
        t_escape=t_l2, t_escape_h4=t_h4, growth_fit=rate,
        series=[row[:3] for row in traj.rows], t_pred=cfg.t_pred, delta0=delta0,
        delta0_min=min(cfg.eps0, delta0), m0=m0, eta=float(eta), dt=traj.dt, status=status,
        fit_window=(float(t[win][0]) if win.any() else 0.0, float(t[win][-1]) if win.any() else 0.0),
        linear_deviation=dev, trajectory=traj if keep_trajectory else None,
    )


def write_snapshot(path, grid, X, t):
    write_state(path, unpack(grid, X, t))
