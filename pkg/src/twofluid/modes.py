"""Growing-mode initial data supported on a frequency shell ``[eta, 4 eta]``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fields as F
from . import spectral as S
from .closure import ModelCoefficients
from .errors import GridTooCoarse, StableParameters
from .state import State, write_state

MIN_SHELLS = 6


def _e(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a = _e(t)
    b = _e(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def cutoff(r, eta):
    """Radial cutoff: 1 on ``[1.5 eta, 3 eta]``, 0 outside ``(eta, 4 eta)``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    r = np.asarray(r, dtype=float)
    out = smooth_step((r - eta) / (0.5 * eta)) * smooth_step((4.0 * eta - r) / eta)
    return float(out) if out.ndim == 0 else out


def retained_cutoff(n, dealias):
    """Largest integer wavenumber kept on every axis."""
    return int(math.floor(n / 3.0)) if dealias else n // 2 - 1


def box_for_eta(eta, n, dealias=True):
    """Box side that puts the shell's outer radius ``4 eta`` on the retained cutoff."""
    kcut = retained_cutoff(n, dealias)
    return 2.0 * math.pi * (kcut / 4.0) / eta


def check_resolution(eta, grid: F.BoxGrid, dealias=False):
    """Raise GridTooCoarse unless the shell is resolved and retained."""
    lo, hi = eta / grid.dk, 4.0 * eta / grid.dk
    count = math.floor(hi) - math.ceil(lo) + 1
    if count < MIN_SHELLS:
        raise GridTooCoarse(
            f"only {count} integer radii lie in the shell [{lo:.3g}, {hi:.3g}] (need {MIN_SHELLS}); "
            "enlarge the box or eta"
        )
    kcut = retained_cutoff(grid.n, dealias)
    if hi > kcut + 1e-9:
        raise GridTooCoarse(
            f"shell outer radius {hi:.3g} (lattice units) exceeds the retained cutoff {kcut}"
        )


@dataclass
class GrowingMode:
    grid: F.BoxGrid
    eta: float
    nhat_plus: np.ndarray
    phihat_plus: np.ndarray
    nhat_minus: np.ndarray
    phihat_minus: np.ndarray
    lam: np.ndarray

    @property
    def amplitudes(self):
        return (self.nhat_plus, self.phihat_plus, self.nhat_minus, self.phihat_minus)

    def scaled(self, a):
        return GrowingMode(self.grid, self.eta, *(a * x for x in self.amplitudes), self.lam)

    def support(self):
        return (self.grid.r >= self.eta) & (self.grid.r <= 4.0 * self.eta)

    def norms(self):
        return [float(np.sqrt(F.spectral_sum(self.grid, x))) for x in self.amplitudes]


def build_mode(eta, c: ModelCoefficients, grid: F.BoxGrid, dealias=False) -> GrowingMode:
    """Eigenvector of the unstable root on each lattice mode, shaped by the cutoff."""
    if not c.unstable:
        raise StableParameters("no growing mode: beta1*beta4 >= beta2*beta3")
    check_resolution(eta, grid, dealias)
    r = grid.r
    phi = np.zeros(grid.spectral_shape)
    lam = np.zeros(grid.spectral_shape)
    live = (r > eta) & (r < 4.0 * eta)
    rl = r[live]
    # lambda1 depends on r only: solve once per distinct shell
    uniq, inv = np.unique(grid.shell2[live], return_inverse=True)
    l1 = S.lambda1(grid.dk * np.sqrt(uniq.astype(float)), c)[inv]
    lam[live] = l1
    phi[live] = cutoff(rl, eta)
    b1, b2, b3, b4 = c.betas
    nup = c.nu_plus
    n_p = np.zeros(grid.spectral_shape, dtype=complex)
    f_p = np.zeros_like(n_p)
    n_m = np.zeros_like(n_p)
    f_m = np.zeros_like(n_p)
    p = phi[live]
    n_p[live] = p
    f_p[live] = -(l1 / (b1 * rl)) * p
    n_m[live] = -((l1 ** 2 + b1 ** 2 * rl ** 2 + nup * l1 * rl ** 2) / (b1 * b2 * rl ** 2)) * p
    f_m[live] = ((l1 ** 3 + b1 ** 2 * l1 * rl ** 2 + nup * l1 ** 2 * rl ** 2) / (b1 * b2 * b4 * rl ** 3)) * p
    return GrowingMode(grid, float(eta), n_p, f_p, n_m, f_m, lam)


def mode_residual(m: GrowingMode, c: ModelCoefficients):
    """Largest ``|lambda1 x - A(r) x|`` over all lattice modes."""
    g = m.grid
    x = np.stack(m.amplitudes, axis=-1)
    live = g.r > 0
    A = S.symbol_matrix(g.r[live], c)
    v = x[live]
    res = m.lam[live][:, None] * v - np.einsum("mij,mj->mi", A, v)
    return float(np.max(np.abs(res))) if res.size else 0.0


def mode_to_state(m: GrowingMode, t=0.0) -> State:
    """Physical fields: ``n`` by inverse transform, ``u = -Lambda^-1 grad phi``."""
    g = m.grid
    return State.from_spectral(g, (
        m.nhat_plus, F.gradient_part(g, m.phihat_plus),
        m.nhat_minus, F.gradient_part(g, m.phihat_minus),
    ), t)


def write_mode(path, m: GrowingMode):
    write_state(path, mode_to_state(m), extra={"eta": m.eta})
