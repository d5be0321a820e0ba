"""Periodic-box fields: transforms, Fourier multipliers, Hodge split and norms.

Spectral data use the real-to-complex layout of ``scipy.fft.rfftn`` over the
last three axes, normalized so that coefficients are Fourier-series
coefficients:  ``f(x) = sum_k c_k exp(i k.x)``.  Hence ``grad <-> i k`` and

    int |f|^2 dx = L^3 sum_k |c_k|^2,

where the half-spectrum sum counts every ``kz`` plane except ``kz = 0`` and
``kz = n/2`` twice.

Odd derivatives use a wave vector with Nyquist components set to zero, which
keeps derivatives of real fields real.  The radius ``r = |k|`` is taken from
that same vector everywhere (multipliers, Hodge split, Sobolev weights), so
``div grad = -Lambda^2`` holds exactly on the grid.  Modes with ``r = 0``
(the mean and the pure-Nyquist corners) belong to neither Hodge part.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatch, UndefinedAtZero

SCHEMA = "field/1"


def _workers():
    env = os.environ.get("TWOFLUID_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


class BoxGrid:
    """Uniform ``n^3`` grid on the periodic box ``[0, L)^3``."""

    def __init__(self, n: int, box: float):
        n = int(n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {n}")
        if not (np.isfinite(box) and box > 0):
            raise ValueError(f"box side must be positive, got {box!r}")
        self.n = n
        self.box = float(box)
        self.nh = n // 2 + 1
        self.dk = 2.0 * np.pi / self.box
        self.dx = self.box / n
        self.workers = _workers()

    def __repr__(self):
        return f"BoxGrid(n={self.n}, box={self.box!r})"

    def __eq__(self, other):
        return isinstance(other, BoxGrid) and self.n == other.n and self.box == other.box

    def __hash__(self):
        return hash((self.n, self.box))

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.nh)

    @cached_property
    def coords(self):
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")

    @cached_property
    def kint(self):
        """Integer lattice indices (kx, ky, kz), broadcastable to the spectral shape."""
        k = sfft.fftfreq(self.n, 1.0 / self.n).astype(int)
        kz = np.arange(self.nh)
        return k[:, None, None], k[None, :, None], kz[None, None, :]

    @cached_property
    def kd(self):
        """Derivative wave vector (Nyquist components zeroed), shape (3, n, n, nh)."""
        out = np.zeros((3,) + self.spectral_shape)
        for ax, ki in enumerate(self.kint):
            kk = np.where(np.abs(ki) == self.n // 2, 0, ki) * self.dk
            out[ax] = np.broadcast_to(kk, self.spectral_shape)
        return out

    @cached_property
    def shell2(self):
        """Integer ``|k|^2`` in lattice units for the derivative wave vector."""
        m = np.zeros(self.spectral_shape, dtype=np.int64)
        for ki in self.kint:
            kk = np.where(np.abs(ki) == self.n // 2, 0, ki)
            m = m + kk * kk
        return m

    @cached_property
    def r(self):
        return self.dk * np.sqrt(self.shell2)

    @cached_property
    def weights(self):
        """Half-spectrum multiplicities for Plancherel sums, broadcastable."""
        w = np.full(self.nh, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w[None, None, :]

    @cached_property
    def dealias_mask(self):
        """2/3-rule mask: keep modes with every ``|k_i| <= n/3``."""
        cut = self.n / 3.0
        kx, ky, kz = self.kint
        return (np.abs(kx) <= cut) & (np.abs(ky) <= cut) & (np.abs(kz) <= cut)

    def check(self, arr, spectral=False, vector=None):
        """Raise GridMismatch unless ``arr`` has a shape living on this grid."""
        tail = self.spectral_shape if spectral else self.shape
        arr = np.asarray(arr)
        ok = arr.shape[-3:] == tail and arr.ndim in (3, 4)
        if ok and arr.ndim == 4:
            ok = arr.shape[0] == 3 if vector is None or vector else False
        elif ok and vector:
            ok = False
        if not ok:
            kind = "spectral" if spectral else "physical"
            raise GridMismatch(f"array of shape {arr.shape} is not a {kind} field on {self!r}")
        return arr


# -- transforms ------------------------------------------------------------------

def forward(grid: BoxGrid, f):
    """Physical samples -> Fourier coefficients (scalar or 3-vector)."""
    f = grid.check(f)
    return sfft.rfftn(f, axes=(-3, -2, -1), norm="forward", workers=grid.workers)


def inverse(grid: BoxGrid, c):
    """Fourier coefficients -> real physical samples."""
    c = grid.check(c, spectral=True)
    return sfft.irfftn(c, s=grid.shape, axes=(-3, -2, -1), norm="forward", workers=grid.workers)


def spectral_sum(grid: BoxGrid, c, weight=None):
    """``L^3 sum_k w(k) |c_k|^2`` over the half spectrum (components summed)."""
    a = np.abs(c) ** 2
    if weight is not None:
        a = a * weight
    if a.ndim == 4:
        a = a.sum(axis=0)
    return grid.box ** 3 * float(np.sum(a * grid.weights))


def l2_norm(grid: BoxGrid, f):
    """L2 norm from physical samples (rectangle rule, exact for trig polynomials)."""
    f = grid.check(f)
    return float(np.sqrt(np.sum(f * f) * grid.dx ** 3))


def spectral_l2(grid: BoxGrid, c):
    return float(np.sqrt(spectral_sum(grid, grid.check(c, spectral=True))))


def sobolev_norm(grid: BoxGrid, f, k: int, spectral=False):
    """``H^k`` norm ``(sum (1 + r^2)^k |c|^2)^(1/2)`` with Plancherel weights."""
    if int(k) != k or not 0 <= k <= 4:
        raise ValueError("Sobolev index must be an integer in 0..4")
    c = grid.check(f, spectral=True) if spectral else forward(grid, f)
    if k == 0:
        return float(np.sqrt(spectral_sum(grid, c)))
    return float(np.sqrt(spectral_sum(grid, c, (1.0 + grid.r ** 2) ** int(k))))


# -- multipliers -------------------------------------------------------------------

def apply_multiplier(grid: BoxGrid, c, m, zero=None):
    """Multiply coefficients by the symbol ``m``.

    ``m`` is an array broadcastable to the spectral shape or a callable
    ``m(kx, ky, kz)`` of the derivative wave-vector components.  Where ``r = 0``
    the value ``zero`` is used if given; otherwise the symbol must already be
    finite there, else UndefinedAtZero is raised.
    """
    c = grid.check(c, spectral=True)
    if callable(m):
        with np.errstate(divide="ignore", invalid="ignore"):
            m = m(*grid.kd)
    m = np.broadcast_to(np.asarray(m), grid.spectral_shape)
    at0 = grid.r == 0
    if zero is not None:
        m = np.where(at0, zero, m)
    elif not np.all(np.isfinite(m[at0])):
        raise UndefinedAtZero("multiplier is singular at r = 0 and no zero-mode rule was given")
    if not np.all(np.isfinite(m)):
        raise ValueError("multiplier is not finite on the lattice")
    return c * m


def lambda_power(grid: BoxGrid, c, s):
    """``Lambda^s`` (symbol ``r^s``); negative powers map ``r = 0`` modes to zero."""
    if s == 0:
        return np.array(c, copy=True)
    if s > 0:
        return apply_multiplier(grid, c, grid.r ** s)
    with np.errstate(divide="ignore"):
        m = grid.r ** s
    return apply_multiplier(grid, c, m, zero=0.0)


def grad(grid: BoxGrid, c):
    c = grid.check(c, spectral=True, vector=False)
    return 1j * grid.kd * c[None]


def div(grid: BoxGrid, cv):
    cv = grid.check(cv, spectral=True, vector=True)
    return 1j * np.sum(grid.kd * cv, axis=0)


def curl(grid: BoxGrid, cv):
    cv = grid.check(cv, spectral=True, vector=True)
    kx, ky, kz = grid.kd
    return 1j * np.stack([
        ky * cv[2] - kz * cv[1],
        kz * cv[0] - kx * cv[2],
        kx * cv[1] - ky * cv[0],
    ])


def dealias(grid: BoxGrid, c):
    return c * grid.dealias_mask


# -- Hodge decomposition ------------------------------------------------------------

@dataclass
class HodgeParts:
    """Compressible scalar ``phi = Lambda^-1 div u`` and remainder.

    All members are spectral.  ``psi`` is the divergence-free remainder of the
    velocity and ``rest`` holds the ``r = 0`` coefficients, which belong to
    neither part.
    """

    phi: np.ndarray
    psi: np.ndarray
    rest: np.ndarray


def _unit_k(grid):
    r = grid.r
    with np.errstate(invalid="ignore", divide="ignore"):
        khat = np.where(r > 0, grid.kd / np.where(r > 0, r, 1.0), 0.0)
    return khat


def hodge_split(grid: BoxGrid, u, spectral=False) -> HodgeParts:
    cu = grid.check(u, spectral=True, vector=True) if spectral else forward(grid, grid.check(u, vector=True))
    khat = _unit_k(grid)
    at0 = grid.r == 0
    kdotu = np.sum(khat * cu, axis=0)
    phi = 1j * kdotu
    grad_part = khat * kdotu[None]
    rest = np.where(at0[None], cu, 0.0)
    psi = cu - grad_part - rest
    return HodgeParts(phi=phi, psi=psi, rest=rest)


def gradient_part(grid: BoxGrid, phi):
    """Velocity ``-Lambda^-1 grad phi`` (spectral) generated by a compressible scalar."""
    return -1j * _unit_k(grid) * phi[None]


def hodge_reconstruct(grid: BoxGrid, parts: HodgeParts, spectral=False):
    cu = gradient_part(grid, parts.phi) + parts.psi + parts.rest
    return cu if spectral else inverse(grid, cu)


# -- field files -------------------------------------------------------------------

def write_fields(path, grid: BoxGrid, arrays, names, extra=None):
    """Write physical components as a field file.

    ``arrays`` has shape (components, n, n, n) indexed ``[c, ix, iy, iz]``;
    samples are stored little-endian float64 with x varying fastest.
    """
    arrays = np.asarray(arrays, dtype=float)
    if arrays.ndim == 3:
        arrays = arrays[None]
    if arrays.shape[1:] != grid.shape:
        raise GridMismatch(f"arrays of shape {arrays.shape} do not match {grid!r}")
    if len(names) != arrays.shape[0]:
        raise ValueError("one name per component is required")
    header = {"schema": SCHEMA, "n": grid.n, "box": grid.box,
              "components": int(arrays.shape[0]), "names": list(names)}
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode() + b"\n")
        for comp in arrays:
            fh.write(np.ascontiguousarray(comp.transpose(2, 1, 0)).astype("<f8").tobytes())


def read_fields(path):
    """Read a field file; returns ``(header, grid, arrays)``."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    if header.get("schema") != SCHEMA:
        raise ValueError(f"unsupported field schema {header.get('schema')!r}")
    grid = BoxGrid(header["n"], header["box"])
    k = int(header["components"])
    n = grid.n
    if len(payload) != 8 * k * n ** 3:
        raise GridMismatch(f"payload holds {len(payload)} bytes, expected {8 * k * n ** 3}")
    data = np.frombuffer(payload, dtype="<f8").reshape(k, n, n, n)
    arrays = np.ascontiguousarray(data.transpose(0, 3, 2, 1)).astype(float)
    return header, grid, arrays
