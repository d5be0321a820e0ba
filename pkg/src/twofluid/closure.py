"""Thermodynamic closure of the two-fluid model and its linearization.

Given the fraction densities ``R+ = a+ rho+`` and ``R- = a- rho-`` the phase
density ``rho+`` is the unique root in ``(R+, inf)`` of

    phi(rho+) = P+(rho+) - P-(R- rho+ / (rho+ - R+)) - f(R-),

with ``P(rho) = rho**gamma`` for both phases.  Everything else (``rho-``,
volume fractions, sound speeds and the coupling coefficient ``C2``) follows
explicitly.  The equilibrium state ``R+ = R- = 1`` feeds the linear
coefficients alpha1..alpha4, their scaled versions beta1..beta4 and the
growth rate theta.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    InvalidLaw,
    NegativeAlpha4,
    NoConvergence,
    NonPositiveMass,
)

RESIDUAL_TOL = 1e-12
STEP_TOL = 1e-13
MAX_ITER = 200
FIELD_MAX_ITER = 50


@dataclass(frozen=True)
class PhaseLaw:
    """Barotropic laws ``P(rho) = rho**gamma`` for the two phases."""

    gamma_plus: float
    gamma_minus: float

    def __post_init__(self):
        for name in ("gamma_plus", "gamma_minus"):
            g = getattr(self, name)
            if not (math.isfinite(g) and g >= 1.0):
                raise InvalidLaw(f"{name} must be finite and >= 1, got {g!r}")

    def pressure_plus(self, rho):
        return rho ** self.gamma_plus

    def pressure_minus(self, rho):
        return rho ** self.gamma_minus

    def s2_plus(self, rho):
        return self.gamma_plus * rho ** (self.gamma_plus - 1.0)

    def s2_minus(self, rho):
        return self.gamma_minus * rho ** (self.gamma_minus - 1.0)


@dataclass(frozen=True)
class CapillaryLaw:
    """Cubic capillary pressure ``f(s) = f1 + fp (s-1) + c2 (s-1)^2 + c3 (s-1)^3``."""

    f1: float
    fp: float
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise InvalidLaw(f"capillary coefficient {f.name} is not finite")

    @property
    def coeffs(self):
        return np.array([self.f1, self.fp, self.c2, self.c3])

    def __call__(self, s):
        d = s - 1.0
        return self.f1 + d * (self.fp + d * (self.c2 + d * self.c3))

    def derivative(self, s):
        d = s - 1.0
        return self.fp + d * (2.0 * self.c2 + 3.0 * d * self.c3)


@dataclass(frozen=True)
class Viscosities:
    mu_plus: float
    mu_minus: float
    lambda_plus: float = 0.0
    lambda_minus: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise InvalidLaw(f"viscosity {f.name} is not finite")
        if self.mu_plus <= 0 or self.mu_minus <= 0:
            raise InvalidLaw("shear viscosities must be positive")
        if self.mu_plus + self.lambda_plus <= 0 or self.mu_minus + self.lambda_minus <= 0:
            raise InvalidLaw("mu + lambda must be positive for both phases")


@dataclass
class LocalClosure:
    """Pointwise thermodynamic state; every field may be a scalar or an array."""

    R_plus: float
    R_minus: float
    rho_plus: float
    rho_minus: float
    alpha_plus: float
    alpha_minus: float
    s2_plus: float
    s2_minus: float
    c2: float
    fval: float
    fprime: float

    @property
    def dphi(self):
        """Derivative of the closure residual with respect to rho+ at the root."""
        return self.s2_plus + self.s2_minus * self.R_minus * self.R_plus / (
            self.rho_plus - self.R_plus
        ) ** 2

    def residual(self, phase: PhaseLaw):
        return (
            phase.pressure_plus(self.rho_plus)
            - phase.pressure_minus(self.rho_minus)
            - self.fval
        )


def _assemble(Rp, Rm, rho_p, phase, cap):
    rho_m = Rm * rho_p / (rho_p - Rp)
    a_p = Rp / rho_p
    # a- from its own definition keeps R- = a- rho- exact; the sum is
    # then 1 up to rounding in the closure relation itself
    a_m = (rho_p - Rp) / rho_p
    sp = phase.s2_plus(rho_p)
    sm = phase.s2_minus(rho_m)
    c2 = sm * sp / (a_m * rho_p * sp + a_p * rho_m * sm)
    return LocalClosure(
        R_plus=Rp,
        R_minus=Rm,
        rho_plus=rho_p,
        rho_minus=rho_m,
        alpha_plus=a_p,
        alpha_minus=a_m,
        s2_plus=sp,
        s2_minus=sm,
        c2=c2,
        fval=cap(Rm),
        fprime=cap.derivative(Rm),
    )


def closure_at(R_plus, R_minus, phase: PhaseLaw, cap: CapillaryLaw, guess=None) -> LocalClosure:
    """Closure at a single point ``(R+, R-)``.

    ``guess`` optionally warm-starts the root search; an invalid guess
    (not above ``R+``) is silently replaced.
    """
    Rp = float(R_plus)
    Rm = float(R_minus)
    if not (Rp > 0.0 and Rm > 0.0):
        raise NonPositiveMass(f"fraction densities must be positive, got ({Rp!r}, {Rm!r})")
    g = np.nan if guess is None else float(guess)
    root, nfail, _, it = kernels.closure_newton(
        np.array([Rp]), np.array([Rm]), phase.gamma_plus, phase.gamma_minus,
        cap.coeffs, np.array([g]), MAX_ITER, RESIDUAL_TOL, STEP_TOL,
    )
    if nfail:
        raise NoConvergence(f"closure did not converge at ({Rp!r}, {Rm!r}) after {it} iterations")
    return _assemble(Rp, Rm, float(root[0]), phase, cap)


def solve_equilibrium(phase: PhaseLaw, cap: CapillaryLaw) -> LocalClosure:
    """Closure at the reference state ``R+ = R- = 1``."""
    return closure_at(1.0, 1.0, phase, cap)


def closure_field(R_plus, R_minus, phase: PhaseLaw, cap: CapillaryLaw, guess=None,
                  maxiter=FIELD_MAX_ITER) -> LocalClosure:
    """Vectorized closure over whole arrays.

    Arrays are swept in x-fastest order (the transpose of C order for
    ``[ix, iy, iz]`` indexing) so each point is warm-started from its
    x-neighbour.
    """
    Rp = np.asarray(R_plus, dtype=float)
    Rm = np.asarray(R_minus, dtype=float)
    if Rp.shape != Rm.shape:
        raise ValueError("R_plus and R_minus must share a shape")
    if not (np.all(Rp > 0.0) and np.all(Rm > 0.0)):
        raise NonPositiveMass(
            f"fraction densities must be positive (min R+ = {Rp.min()!r}, min R- = {Rm.min()!r})"
        )
    shape = Rp.shape
    order = tuple(range(Rp.ndim))[::-1]
    flat = lambda a: np.ascontiguousarray(np.transpose(a, order)).ravel()
    if guess is None:
        g = np.full(Rp.size, np.nan)
    else:
        g = np.array(flat(np.broadcast_to(np.asarray(guess, dtype=float), shape)))
    root, nfail, first, it = kernels.closure_newton(
        flat(Rp), flat(Rm), phase.gamma_plus, phase.gamma_minus, cap.coeffs, g,
        maxiter, RESIDUAL_TOL, STEP_TOL,
    )
    if nfail:
        raise NoConvergence(f"closure failed at {nfail} points (first flat index {first})")
    rho = np.transpose(root.reshape(shape[::-1]), order)
    return _assemble(Rp, Rm, rho, phase, cap)


@dataclass
class ModelCoefficients:
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta_plus: float
    beta_minus: float
    nu1_plus: float
    nu1_minus: float
    nu2_plus: float
    nu2_minus: float
    nu_plus: float
    nu_minus: float
    theta: float
    kappa1: float
    kappa2: float
    kappa3: float

    @property
    def unstable(self):
        return self.beta1 * self.beta4 < self.beta2 * self.beta3

    @property
    def det_term(self):
        """Constant ``b1^2 b4^2 - b1 b2 b3 b4`` of the growth-rate quadratic."""
        b1, b2, b3, b4 = self.betas
        return b1 * b1 * b4 * b4 - b1 * b2 * b3 * b4

    @property
    def betas(self):
        return self.beta1, self.beta2, self.beta3, self.beta4

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_betas(cls, beta1, beta2, beta3, beta4, nu_plus, nu_minus,
                   nu1_plus=None, nu1_minus=None):
        """Build coefficients directly from scaled values.

        The split of each total viscosity into shear and bulk parts only
        matters for the incompressible heat semigroup; it defaults to half
        and half.
        """
        vals = (beta1, beta2, beta3, beta4, nu_plus, nu_minus)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("direct coefficients must be finite")
        if beta1 <= 0 or beta4 <= 0:
            raise ConfigError("beta1 and beta4 must be positive")
        if nu_plus <= 0 or nu_minus <= 0:
            raise ConfigError("nu_plus and nu_minus must be positive")
        n1p = 0.5 * nu_plus if nu1_plus is None else float(nu1_plus)
        n1m = 0.5 * nu_minus if nu1_minus is None else float(nu1_minus)
        if not (0 < n1p <= nu_plus and 0 < n1m <= nu_minus):
            raise ConfigError("nu1 must lie in (0, nu]")
        a1 = beta1 * beta1
        a4 = beta4 * beta4
        return _finish(
            a1, beta2 * a4 / beta1, beta3 * a1 / beta4, a4,
            n1p, n1m, nu_plus - n1p, nu_minus - n1m,
        )


def _finish(a1, a2, a3, a4, n1p, n1m, n2p, n2m) -> ModelCoefficients:
    b1 = math.sqrt(a1)
    b4 = math.sqrt(a4)
    b2 = a2 * b1 / a4
    b3 = a3 * b4 / a1
    nup = n1p + n2p
    num = n1m + n2m
    k1sq = (b1 * b1 - b4 * b4) ** 2 / 4.0 + b1 * b2 * b3 * b4
    A = nup * b4 * b4 + num * b1 * b1
    c = b1 * b1 * b4 * b4 - b1 * b2 * b3 * b4
    k3sq = A * A - 4.0 * nup * num * c
    sq = lambda v: math.sqrt(v) if v >= 0 else math.nan
    ratio = lambda p, q: sq(p / q) if q != 0 else math.nan
    out = ModelCoefficients(
        alpha1=a1, alpha2=a2, alpha3=a3, alpha4=a4,
        beta1=b1, beta2=b2, beta3=b3, beta4=b4,
        beta_plus=ratio(b1, b2), beta_minus=ratio(b4, b3),
        nu1_plus=n1p, nu1_minus=n1m, nu2_plus=n2p, nu2_minus=n2m,
        nu_plus=nup, nu_minus=num,
        theta=0.0,
        kappa1=sq(k1sq), kappa2=(b1 * b1 + b4 * b4) / 2.0, kappa3=sq(k3sq),
    )
    out.theta = growth_rate(out)
    return out


def derive_coefficients(eq: LocalClosure, visc: Viscosities, cap: CapillaryLaw) -> ModelCoefficients:
    """Linearization coefficients at the equilibrium closure ``eq``."""
    C2 = eq.c2
    fp = cap.derivative(1.0)
    a1 = C2 * eq.rho_minus / eq.rho_plus
    a2 = C2 + C2 * eq.alpha_minus * fp / eq.s2_minus
    a3 = C2
    a4 = C2 * eq.rho_plus / eq.rho_minus - C2 * eq.alpha_plus * fp / eq.s2_plus
    if not a4 > 0.0:
        raise NegativeAlpha4(f"alpha4 = {a4!r} <= 0; f'(1) = {fp!r} is too large for these laws")
    return _finish(
        a1, a2, a3, a4,
        visc.mu_plus / eq.rho_plus,
        visc.mu_minus / eq.rho_minus,
        (visc.mu_plus + visc.lambda_plus) / eq.rho_plus,
        (visc.mu_minus + visc.lambda_minus) / eq.rho_minus,
    )


def growth_rate(c: ModelCoefficients) -> float:
    """Largest root of ``nu+ nu- s^2 + A s + (b1^2 b4^2 - b1 b2 b3 b4)``, clamped at 0.

    Written in the cancellation-free form ``-2 c0 / (A + sqrt(A^2 - 4 nu+ nu- c0))``.
    """
    b1, b2, b3, b4 = c.betas
    A = c.nu_plus * b4 * b4 + c.nu_minus * b1 * b1
    c0 = b1 * b1 * b4 * b4 - b1 * b2 * b3 * b4
    if c0 >= 0.0:
        return 0.0
    return -2.0 * c0 / (A + math.sqrt(A * A - 4.0 * c.nu_plus * c.nu_minus * c0))


# -- configuration -----------------------------------------------------------

LAW_KEYS = ("gamma_plus", "gamma_minus", "f1", "fp", "c2", "c3",
            "mu_plus", "mu_minus", "lambda_plus", "lambda_minus")
DIRECT_KEYS = ("beta1", "beta2", "beta3", "beta4", "nu_plus", "nu_minus",
               "nu1_plus", "nu1_minus")


def parse_keyvalue(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Values that parse as floats are returned as floats, everything else as
    stripped strings.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            v = float(val)
        except ValueError:
            out[key] = val
        else:
            if not math.isfinite(v):
                raise ConfigError(f"line {lineno}: {key} must be finite")
            out[key] = v
    return out


def _num(cfg, key, default=None):
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing required key {key!r}")
    if isinstance(v, str):
        raise ConfigError(f"{key} must be numeric, got {v!r}")
    return float(v)


def laws_from_config(cfg: dict):
    """Return ``(PhaseLaw, CapillaryLaw, Viscosities)`` from a parsed config."""
    try:
        phase = PhaseLaw(_num(cfg, "gamma_plus"), _num(cfg, "gamma_minus"))
        cap = CapillaryLaw(_num(cfg, "f1"), _num(cfg, "fp"),
                           _num(cfg, "c2", 0.0), _num(cfg, "c3", 0.0))
        visc = Viscosities(_num(cfg, "mu_plus"), _num(cfg, "mu_minus"),
                           _num(cfg, "lambda_plus", 0.0), _num(cfg, "lambda_minus", 0.0))
    except InvalidLaw as exc:
        raise ConfigError(str(exc)) from exc
    return phase, cap, visc


def has_laws(cfg: dict) -> bool:
    return any(k in cfg for k in LAW_KEYS)


def has_direct(cfg: dict) -> bool:
    return any(k in cfg for k in DIRECT_KEYS)


def coefficients_from_config(cfg: dict) -> ModelCoefficients:
    """Coefficients from either physical laws or the direct beta override."""
    laws, direct = has_laws(cfg), has_direct(cfg)
    if laws == direct:
        raise ConfigError("config must give exactly one of: physical laws, direct beta override")
    if direct:
        return ModelCoefficients.from_betas(
            _num(cfg, "beta1"), _num(cfg, "beta2"), _num(cfg, "beta3"), _num(cfg, "beta4"),
            _num(cfg, "nu_plus"), _num(cfg, "nu_minus"),
            cfg.get("nu1_plus"), cfg.get("nu1_minus"),
        )
    phase, cap, visc = laws_from_config(cfg)
    return derive_coefficients(solve_equilibrium(phase, cap), visc, cap)
