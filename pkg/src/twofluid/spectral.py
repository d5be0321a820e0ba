"""Spectral analysis of the compressible-part symbol at one radial frequency.

The linearized compressible system decouples per Fourier mode into a 4x4
real system in the variables (n+, phi+, n-, phi-).  Its symbol depends on the
wave vector only through ``r = |xi|``.  This module provides the symbol, the
characteristic quartic, ordered eigenvalues, Lagrange projectors, the
semigroup (propagator) and checks of the small/large ``r`` expansions.

Eigenvalue order used everywhere: real roots first by descending real part,
then complex-conjugate pairs by descending real part, positive imaginary
member first.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .closure import ModelCoefficients
from .errors import OutOfRegime, StableParameters

ETA2 = 0.01
DEGENERATE_TOL = 1e-6
# propagators fall back to the matrix exponential well before the projector
# degeneracy flag, since the Lagrange product loses ~ (|A|/gap)^3 eps
PROPAGATOR_GAP_TOL = 1e-3
REAL_TOL = 1e-9
LAMBDA1_TOL = 1e-12

DISPERSION_HEADER = ["r", "re_l1", "im_l1", "re_l2", "im_l2", "re_l3", "im_l3",
                     "re_l4", "im_l4", "theta"]


@dataclass
class QuarticCoeffs:
    """Coefficients of ``F(l) = c4 l^4 + c3 l^3 + c2 l^2 + c1 l + c0`` (``c4 = 1``)."""

    c4: float
    c3: float
    c2: float
    c1: float
    c0: float

    def as_tuple(self):
        return (self.c4, self.c3, self.c2, self.c1, self.c0)

    def __call__(self, lam):
        return (((self.c4 * lam + self.c3) * lam + self.c2) * lam + self.c1) * lam + self.c0


@dataclass
class SpectralDecomposition:
    r: float
    lambdas: np.ndarray
    projectors: Optional[np.ndarray]
    degenerate: bool
    gap: float = math.nan


@dataclass
class ExpansionReport:
    """Comparison of asymptotic eigenvalue formulas with actual roots.

    ``predicted[i]`` is matched to ``actual[i]`` by nearest distance.  In the
    high regime ``defect`` covers the two slow eigenvalues only; the fast pair
    is reported separately in ``defect_fast`` (the closed-form limits) and
    ``defect_fast_corrected`` (limits from the 2x2 effective fast block,
    which remain valid when nu+ = nu-).
    """

    regime: str
    r: float
    predicted: np.ndarray
    actual: np.ndarray
    defect: float
    defect_fast: Optional[float] = None
    defect_fast_corrected: Optional[float] = None
    predicted_fast_corrected: Optional[np.ndarray] = None


@dataclass
class ProjectorReport:
    regime: str
    r: float
    leading: np.ndarray
    actual: np.ndarray
    defects: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @property
    def defect(self):
        return float(np.max(self.defects))


# -- symbol and quartic -------------------------------------------------------

def symbol_matrix(r, c: ModelCoefficients):
    """Symbol of the compressible part; shape (4, 4), or (m, 4, 4) for array ``r``."""
    ra = np.asarray(r, dtype=float)
    if np.any(ra < 0):
        raise ValueError("r must be non-negative")
    rr = np.atleast_1d(ra)
    b1, b2, b3, b4 = c.betas
    a = np.zeros(rr.shape + (4, 4))
    r2 = rr * rr
    a[..., 0, 1] = -b1 * rr
    a[..., 1, 0] = b1 * rr
    a[..., 1, 1] = -c.nu_plus * r2
    a[..., 1, 2] = b2 * rr
    a[..., 2, 3] = -b4 * rr
    a[..., 3, 0] = b3 * rr
    a[..., 3, 2] = b4 * rr
    a[..., 3, 3] = -c.nu_minus * r2
    return a[0] if ra.ndim == 0 else a


def quartic_coeffs_array(r, c: ModelCoefficients):
    """Monic quartic coefficients (c3, c2, c1, c0) for every ``r``; shape (m, 4)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    b1, b2, b3, b4 = c.betas
    r2 = r * r
    r4 = r2 * r2
    out = np.empty(r.shape + (4,))
    out[..., 0] = (c.nu_plus + c.nu_minus) * r2
    out[..., 1] = (b1 * b1 + b4 * b4) * r2 + c.nu_plus * c.nu_minus * r4
    out[..., 2] = (c.nu_plus * b4 * b4 + c.nu_minus * b1 * b1) * r4
    out[..., 3] = (b1 * b1 * b4 * b4 - b1 * b2 * b3 * b4) * r4
    return out


def characteristic_coeffs(r, c: ModelCoefficients) -> QuarticCoeffs:
    if r < 0:
        raise ValueError("r must be non-negative")
    c3, c2, c1, c0 = quartic_coeffs_array(r, c)[0]
    return QuarticCoeffs(1.0, float(c3), float(c2), float(c1), float(c0))


# -- eigenvalues ---------------------------------------------------------------

def order_roots(z):
    """Order each row of roots by the package convention and enforce conjugate pairs.

    Roots are classified by sorting on ``|Im|``: a real quartic has 0, 2 or 4
    real roots and the non-real ones pair up with equal ``|Im|``.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    idx = np.argsort(np.abs(z.imag), axis=1, kind="stable")
    zs = np.take_along_axis(z, idx, axis=1)
    tol = REAL_TOL * np.maximum(1.0, np.abs(zs))
    cplx_lo = np.abs(zs[:, 1].imag) > tol[:, 1]
    cplx_hi = np.abs(zs[:, 3].imag) > tol[:, 3]

    def pair(a, b):
        # symmetrize a conjugate pair; positive imaginary member first
        top = np.where(a.imag >= b.imag, a, b)
        bot = np.where(a.imag >= b.imag, b, a)
        w = 0.5 * (top + np.conj(bot))
        w = w.real + 1j * np.abs(w.imag)
        return w, np.conj(w)

    def desc_real(a, b):
        swap = a.real < b.real
        return np.where(swap, b, a), np.where(swap, a, b)

    # case A: four real roots
    rr = np.sort(zs.real, axis=1)[:, ::-1]
    # case B: two real + one pair (pair sits in slots 2, 3)
    rb0, rb1 = desc_real(zs[:, 0].real + 0j, zs[:, 1].real + 0j)
    pb0, pb1 = pair(zs[:, 2], zs[:, 3])
    # case C: two pairs
    pa0, pa1 = pair(zs[:, 0], zs[:, 1])
    pc0, pc1 = pair(zs[:, 2], zs[:, 3])
    first = pa0.real >= pc0.real
    caseC = np.empty_like(zs)
    caseC[:, 0] = np.where(first, pa0, pc0)
    caseC[:, 1] = np.where(first, pa1, pc1)
    caseC[:, 2] = np.where(first, pc0, pa0)
    caseC[:, 3] = np.where(first, pc1, pa1)
    caseB = np.stack([rb0, rb1, pb0, pb1], axis=1)
    caseA = rr + 0j
    return np.where(cplx_lo[:, None], caseC, np.where(cplx_hi[:, None], caseB, caseA))


def eigenvalues_batch(r, c: ModelCoefficients):
    """Ordered, polished eigenvalues for an array of radii; shape (m, 4).

    ``r = 0`` rows are exact zeros.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    coeffs = quartic_coeffs_array(r, c)
    z = kernels.quartic_roots(coeffs)
    out = order_roots(z)
    out[r == 0] = 0.0
    return out


def eigenvalues(r, c: ModelCoefficients):
    """The four eigenvalues of the symbol at radius ``r`` (ordered)."""
    if not r > 0:
        raise ValueError("eigenvalues need r > 0")
    return eigenvalues_batch(r, c)[0]


def _G(lam, r, c):
    # F / r^4 written to avoid overflow at large r
    b1, b2, b3, b4 = c.betas
    A = c.nu_plus * b4 * b4 + c.nu_minus * b1 * b1
    inv2 = 1.0 / (r * r)
    return (
        lam ** 4 * inv2 * inv2
        + ((c.nu_plus + c.nu_minus) * lam ** 3 + (b1 * b1 + b4 * b4) * lam ** 2) * inv2
        + c.nu_plus * c.nu_minus * lam ** 2 + A * lam + c.det_term
    )


def _dG(lam, r, c):
    b1, b2, b3, b4 = c.betas
    A = c.nu_plus * b4 * b4 + c.nu_minus * b1 * b1
    inv2 = 1.0 / (r * r)
    return (
        4.0 * lam ** 3 * inv2 * inv2
        + (3.0 * (c.nu_plus + c.nu_minus) * lam ** 2 + 2.0 * (b1 * b1 + b4 * b4) * lam) * inv2
        + 2.0 * c.nu_plus * c.nu_minus * lam + A
    )


def lambda1(r, c: ModelCoefficients, tol=LAMBDA1_TOL):
    """The unique positive root of the quartic, by bisection on ``(0, theta]``.

    ``F`` is strictly increasing for ``l > 0`` with ``F(0) < 0 < F(theta)``,
    so the bracket is always valid.  After bisection to ``tol`` a few Newton
    steps confined to the final bracket restore full precision.  Accepts a
    scalar or an array of radii.
    """
    if not c.unstable:
        raise StableParameters("beta1*beta4 >= beta2*beta3: no positive real root")
    ra = np.asarray(r, dtype=float)
    rr = np.atleast_1d(ra)
    if np.any(rr <= 0):
        raise ValueError("lambda1 needs r > 0")
    lo = np.zeros_like(rr)
    hi = np.full_like(rr, c.theta)
    while True:
        mid = 0.5 * (lo + hi)
        neg = _G(mid, rr, c) < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
        if np.all(hi - lo <= tol):
            break
    x = 0.5 * (lo + hi)
    for _ in range(3):
        xn = x - _G(x, rr, c) / _dG(x, rr, c)
        x = np.where((xn >= lo) & (xn <= hi), xn, x)
    return float(x[0]) if ra.ndim == 0 else x


# -- projectors and propagator -----------------------------------------------

def _min_gap(lam):
    d = np.abs(lam[..., :, None] - lam[..., None, :])
    d[..., np.arange(4), np.arange(4)] = np.inf
    return d.min(axis=(-1, -2))


def _lagrange_projectors(A, lam):
    """Lagrange-product projectors for batched symbols ``A`` (m,4,4)."""
    m = A.shape[0]
    eye = np.eye(4)
    P = np.empty((m, 4, 4, 4), dtype=complex)
    for i in range(4):
        acc = np.broadcast_to(eye, (m, 4, 4)).astype(complex)
        for j in range(4):
            if j == i:
                continue
            fac = (A - lam[:, j, None, None] * eye) / (lam[:, i] - lam[:, j])[:, None, None]
            acc = acc @ fac
        P[:, i] = acc
    return P


def decompose(r, c: ModelCoefficients) -> SpectralDecomposition:
    """Eigenvalues and projectors at radius ``r > 0``."""
    if not r > 0:
        raise ValueError("projectors need r > 0")
    lam = eigenvalues(r, c)
    scale = np.max(np.abs(lam))
    gap = float(_min_gap(lam))
    degenerate = bool(gap < DEGENERATE_TOL * scale)
    P = None
    if not degenerate:
        P = _lagrange_projectors(symbol_matrix(r, c)[None], lam[None])[0]
    return SpectralDecomposition(r=float(r), lambdas=lam, projectors=P,
                                 degenerate=degenerate, gap=gap)


projectors = decompose


# Pade(13) scaling-and-squaring exponential for small dense matrices
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


def expm_small(A):
    """Matrix exponential of one (n,n) or a batch (m,n,n) of real/complex matrices."""
    A = np.asarray(A)
    single = A.ndim == 2
    A = A[None] if single else A
    n = A.shape[-1]
    norm = np.max(np.sum(np.abs(A), axis=-2), axis=-1)
    s = np.maximum(0, np.ceil(np.log2(np.maximum(norm, 1e-300) / _THETA13))).astype(int)
    As = A / (2.0 ** s)[:, None, None]
    b = _PADE13
    I = np.broadcast_to(np.eye(n), As.shape)
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I
    R = np.linalg.solve(V - U, V + U)
    for k in range(int(s.max()) if s.size else 0):
        sq = s > k
        R[sq] = R[sq] @ R[sq]
    return R[0] if single else R


def propagators(r, c: ModelCoefficients, t):
    """Real propagators ``exp(t A(r))`` for an array of radii; shape (m, 4, 4).

    Uses the spectral sum over projectors; rows with nearly coincident
    eigenvalues (or r = 0) use the scaling-and-squaring exponential instead.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    m = r.size
    out = np.empty((m, 4, 4))
    out[:] = np.eye(4)
    if t == 0 or m == 0:
        return out
    A = symbol_matrix(r, c).reshape(m, 4, 4)
    live = r > 0
    lam = eigenvalues_batch(np.where(live, r, 1.0), c)
    scale = np.max(np.abs(lam), axis=1)
    good = live & (_min_gap(lam) >= PROPAGATOR_GAP_TOL * scale)
    if good.any():
        P = _lagrange_projectors(A[good], lam[good])
        E = np.einsum("mi,mijk->mjk", np.exp(lam[good] * t), P)
        out[good] = E.real
    bad = live & ~good
    if bad.any():
        out[bad] = expm_small(t * A[bad])
    return out


def propagator(r, c: ModelCoefficients, t):
    """``exp(t A(r))`` at a single radius (complex dtype, imaginary part ~ 0)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if r == 0 or t == 0:
        return np.eye(4, dtype=complex)
    d = decompose(r, c)
    scale = np.max(np.abs(d.lambdas))
    if d.degenerate or d.gap < PROPAGATOR_GAP_TOL * scale:
        return expm_small(t * symbol_matrix(r, c)).astype(complex)
    return np.einsum("i,ijk->jk", np.exp(d.lambdas * t), d.projectors)


# -- asymptotics ---------------------------------------------------------------

def _match(pred, actual):
    """Permutation of ``actual`` minimizing the largest distance to ``pred``."""
    best = None
    for perm in itertools.permutations(range(len(actual))):
        d = np.abs(pred - actual[list(perm)])
        key = (d.max(), d.sum())
        if best is None or key < best[0]:
            best = (key, perm)
    return np.asarray(best[1])


def _low_prediction(r, c):
    b1, _, _, b4 = c.betas
    k1, k2 = c.kappa1, c.kappa2
    base = (c.nu_plus + c.nu_minus) / 4.0
    skew = (c.nu_plus * (b1 * b1 - b4 * b4) + c.nu_minus * (b4 * b4 - b1 * b1)) / (8.0 * k1)
    real = math.sqrt(max(k1 - k2, 0.0))
    osc = math.sqrt(k1 + k2)
    return np.array([
        -(base - skew) * r * r + real * r,
        -(base - skew) * r * r - real * r,
        -(base + skew) * r * r + 1j * osc * r,
        -(base + skew) * r * r - 1j * osc * r,
    ], dtype=complex)


def _fast_corrected(r, c):
    b1, b2, b3, b4 = c.betas
    g = math.sqrt(c.nu_plus * c.nu_minus)
    M = np.array([
        [-c.nu_plus * r * r + b1 * b1 / c.nu_plus, b2 * b4 / g],
        [b1 * b3 / g, -c.nu_minus * r * r + b4 * b4 / c.nu_minus],
    ])
    w = np.linalg.eigvals(M)
    # keep the paper's labels: the member closer to -nu+ r^2 first
    if abs(w[0] + c.nu_plus * r * r) > abs(w[1] + c.nu_plus * r * r):
        w = w[::-1]
    return w.astype(complex)


def low_freq_expansion(r, c: ModelCoefficients, eta2=ETA2) -> ExpansionReport:
    if not (0 < r <= eta2):
        raise OutOfRegime(f"low-frequency expansion needs 0 < r <= {eta2}, got {r}")
    pred = _low_prediction(r, c)
    lam = eigenvalues(r, c)
    act = lam[_match(pred, lam)]
    return ExpansionReport("low", float(r), pred, act, float(np.max(np.abs(pred - act))))


def high_freq_expansion(r, c: ModelCoefficients, eta1=None) -> ExpansionReport:
    if eta1 is None:
        eta1 = eta_threshold(c, c.theta / 10.0)
    if r < eta1:
        raise OutOfRegime(f"high-frequency expansion needs r >= {eta1}, got {r}")
    b1, _, _, b4 = c.betas
    A = c.nu_plus * b4 * b4 + c.nu_minus * b1 * b1
    pred = np.array([
        c.theta,
        (-A - c.kappa3) / (2.0 * c.nu_plus * c.nu_minus),
        -c.nu_plus * r * r + b1 * b1 / c.nu_plus,
        -c.nu_minus * r * r + b4 * b4 / c.nu_minus,
    ], dtype=complex)
    lam = eigenvalues(r, c)
    act = lam[_match(pred, lam)]
    corr = _fast_corrected(r, c)
    fast = lam[_match(np.concatenate([pred[:2], corr]), lam)][2:]
    return ExpansionReport(
        "high", float(r), pred, act,
        defect=float(np.max(np.abs(pred[:2] - act[:2]))),
        defect_fast=float(np.max(np.abs(pred[2:] - act[2:]))),
        defect_fast_corrected=float(np.max(np.abs(corr - fast))),
        predicted_fast_corrected=corr,
    )


def low_projector_limits(c: ModelCoefficients):
    """Leading-order projectors as r -> 0, in package eigenvalue order.

    Index 0 belongs to the positive real root, 1 to the negative real root,
    2 and 3 to the oscillating pair (positive imaginary part first).
    """
    b1, b2, b3, b4 = c.betas
    k1, k2 = c.kappa1, c.kappa2
    if not k1 > k2:
        raise StableParameters("low-frequency projector limits need kappa1 > kappa2")
    q = math.sqrt(k1 - k2)
    p = math.sqrt(k1 + k2)
    d14 = b4 * b4 - b1 * b1
    a = (2 * k1 + d14) / (8 * k1)
    e = (2 * k1 - d14) / (8 * k1)

    def real_pair(s):
        # s = +1 for the positive root, -1 for the negative root
        return np.array([
            [a, -s * b1 * (2 * k1 + d14) / (8 * k1 * q), -b1 * b2 / (4 * k1), s * b1 * b2 * b4 / (4 * k1 * q)],
            [-s * (b1 * (-d14 - 2 * k1) + 2 * b2 * b3 * b4) / (8 * k1 * q), a, s * b2 * q / (4 * k1), -b2 * b4 / (4 * k1)],
            [-b3 * b4 / (4 * k1), s * b1 * b3 * b4 / (4 * k1 * q), e, -s * b4 * (2 * k1 - d14) / (8 * k1 * q)],
            [s * b3 * q / (4 * k1), -b1 * b3 / (4 * k1), -s * (b4 * (d14 - 2 * k1) + 2 * b1 * b2 * b3) / (8 * k1 * q), e],
        ], dtype=complex)

    P3 = np.array([
        [e, 1j * b1 * (2 * k1 - d14) / (8 * k1 * p), b1 * b2 / (4 * k1), 1j * b1 * b2 * b4 / (4 * k1 * p)],
        [-1j * (b1 * (-d14 + 2 * k1) + 2 * b2 * b3 * b4) / (8 * k1 * p), e, -1j * b2 * p / (4 * k1), b2 * b4 / (4 * k1)],
        [b3 * b4 / (4 * k1), 1j * b1 * b3 * b4 / (4 * k1 * p), a, 1j * b4 * (2 * k1 + d14) / (8 * k1 * p)],
        [-1j * b3 * p / (4 * k1), b1 * b3 / (4 * k1), -1j * (b4 * (d14 + 2 * k1) + 2 * b1 * b2 * b3) / (8 * k1 * p), a],
    ], dtype=complex)
    return np.stack([real_pair(1.0), real_pair(-1.0), P3, np.conj(P3)])


def high_projector_limits(c: ModelCoefficients):
    """Leading-order projectors as r -> infinity, in the paper's labels
    (theta branch, slow decaying branch, fast + branch, fast - branch)."""
    b1, b2, b3, b4 = c.betas
    k3 = c.kappa3
    nup, num = c.nu_plus, c.nu_minus
    P1 = np.zeros((4, 4), dtype=complex)
    P1[0, 0] = (nup * b4 * b4 - num * b1 * b1 + k3) / (2 * k3)
    P1[0, 2] = -b1 * b2 * num / k3
    P1[2, 0] = -b3 * b4 * nup / k3
    P1[2, 2] = (num * b1 * b1 - nup * b4 * b4 + k3) / (2 * k3)
    P2 = np.zeros((4, 4), dtype=complex)
    P2[0, 0] = (num * b1 * b1 - nup * b4 * b4 + k3) / (2 * k3)
    P2[0, 2] = b1 * b2 * num / k3
    P2[2, 0] = b3 * b4 * nup / k3
    P2[2, 2] = (nup * b4 * b4 - num * b1 * b1 + k3) / (2 * k3)
    P3 = np.zeros((4, 4), dtype=complex)
    P3[1, 1] = 1.0
    P4 = np.zeros((4, 4), dtype=complex)
    P4[3, 3] = 1.0
    return np.stack([P1, P2, P3, P4])


def projector_asymptotics(r, c: ModelCoefficients, eta1=None, eta2=ETA2) -> ProjectorReport:
    """Compare computed projectors with their leading-order limits."""
    if 0 < r <= eta2:
        rep = low_freq_expansion(r, c, eta2)
        lead = low_projector_limits(c)
        regime = "low"
    else:
        if eta1 is None:
            eta1 = eta_threshold(c, c.theta / 10.0)
        if r < eta1:
            raise OutOfRegime(f"r = {r} lies between the expansion regimes ({eta2}, {eta1})")
        rep = high_freq_expansion(r, c, eta1)
        lead = high_projector_limits(c)
        regime = "high"
    d = decompose(r, c)
    if d.degenerate:
        raise OutOfRegime(f"spectrum degenerate at r = {r}")
    pred = rep.predicted.copy()
    if regime == "high":
        pred[2:] = rep.predicted_fast_corrected
    order = _match(pred, d.lambdas)
    P = d.projectors[order]
    defects = np.max(np.abs(P - lead), axis=(1, 2))
    return ProjectorReport(regime, float(r), lead, P, defects)


def spectral_bound(r_lo, r_hi, c: ModelCoefficients, samples=10_000):
    """Largest real part of the spectrum over geometrically spaced radii."""
    if samples == 1:
        rs = np.array([float(r_lo)])
    else:
        if not (0 < r_lo < r_hi):
            raise ValueError("need 0 < r_lo < r_hi")
        rs = np.geomspace(r_lo, r_hi, int(samples))
    lam = eigenvalues_batch(rs, c)
    return float(np.max(lam.real))


def eta_threshold(c: ModelCoefficients, vartheta, r_min=1e-3, r_max=1e6, per_decade=32):
    """Smallest radius beyond which ``lambda1(r) >= theta - vartheta``.

    Grid search on a geometric probe grid up to ``r_max``, refined by
    bisection between the last failing and first passing probe.  The tail
    beyond ``r_max`` is covered by ``theta - lambda1 = O(r^-2)`` (checked
    against the last probes).
    """
    if not c.unstable:
        raise StableParameters("eta threshold needs an unstable configuration")
    if not vartheta > 0:
        raise ValueError("vartheta must be positive")
    probes = np.geomspace(r_min, r_max, int(per_decade * math.log10(r_max / r_min)) + 1)
    if vartheta >= c.theta:
        return float(probes[0])
    target = c.theta - vartheta
    ok = lambda1(probes, c) >= target
    if ok[0]:
        return float(probes[0])
    bad = np.flatnonzero(~ok)
    last_bad = bad[-1]
    if last_bad == probes.size - 1:
        raise OutOfRegime(f"lambda1 stays below theta - vartheta up to r = {r_max}")
    lo, hi = probes[last_bad], probes[last_bad + 1]
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if lambda1(mid, c) >= target:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1.0 < 1e-12:
            break
    return float(hi)


# -- dispersion export ---------------------------------------------------------

def dispersion_table(r_min, r_max, samples, c: ModelCoefficients):
    """Rows ``[r, re/im of l1..l4, theta]`` over a geometric sweep."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rs = np.array([float(r_min)]) if samples == 1 else np.geomspace(r_min, r_max, int(samples))
    lam = eigenvalues_batch(rs, c)
    rows = np.empty((rs.size, 10))
    rows[:, 0] = rs
    rows[:, 1:9:2] = lam.real
    rows[:, 2:9:2] = lam.imag
    rows[:, 9] = c.theta
    return rows


def write_dispersion_csv(path_or_file, rows):
    """Write dispersion rows with shortest round-trip float formatting."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DISPERSION_HEADER)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)
