"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_ckernels`` module; selected
by :mod:`twofluid.kernels` when the extension is unavailable or disabled.
"""
import numpy as np

_EPS = np.finfo(float).eps


def _cap(R, fc):
    s = R - 1.0
    return fc[0] + s * (fc[1] + s * (fc[2] + s * fc[3]))


def _phi(x, Rp, Rm, gp, gm, fval):
    rm = Rm * x / (x - Rp)
    pp = x ** gp
    pm = rm ** gm
    dphi = gp * pp / x + gm * pm / rm * Rm * Rp / (x - Rp) ** 2
    return pp - pm - fval, dphi, pp + pm + np.abs(fval)


def closure_newton(Rp, Rm, gp, gm, fc, guess, maxiter=200, tol=1e-12, steptol=1e-13):
    """Solve the pressure-closure residual for rho_plus at every point.

    Returns ``(rho_plus, n_failed, first_failed_index, iterations)``.
    Points are solved simultaneously with a bracketed Newton iteration; the
    bracket's upper end is found by doubling from the warm start.
    """
    Rp = np.ascontiguousarray(Rp, dtype=float).ravel()
    Rm = np.ascontiguousarray(Rm, dtype=float).ravel()
    fc = np.asarray(fc, dtype=float)
    fval = _cap(Rm, fc)
    lo = Rp * (1.0 + 1e-12)
    x = np.asarray(guess, dtype=float).ravel().copy()
    bad = ~(x > lo) | ~np.isfinite(x)
    x[bad] = Rp[bad] + Rm[bad]

    iters = 0
    f, df, _ = _phi(x, Rp, Rm, gp, gm, fval)
    hi = np.where(f > 0.0, x, np.inf)
    lo = np.where(f <= 0.0, np.maximum(lo, x), lo)
    width = np.maximum(np.maximum(2.0 * np.abs(f / df), 1e-10 * x), 1e-12)
    need = ~np.isfinite(hi)
    while need.any() and iters < maxiter:
        iters += 1
        cand = x[need] + width[need]
        fcand, _, _ = _phi(cand, Rp[need], Rm[need], gp, gm, fval[need])
        pos = fcand > 0.0
        idx = np.flatnonzero(need)
        hi[idx[pos]] = cand[pos]
        lo[idx[~pos]] = cand[~pos]
        width[idx[~pos]] *= 2.0
        need = ~np.isfinite(hi)

    done = np.zeros(x.shape, dtype=bool)
    step = np.full(x.shape, np.inf)
    while iters < maxiter:
        iters += 1
        f, df, scale = _phi(x, Rp, Rm, gp, gm, fval)
        # residual noise floor: rounding of the terms plus rounding of x itself
        ftol = np.maximum(tol, 8.0 * _EPS * scale + 2.0 * _EPS * x * df)
        stol = np.maximum(steptol, 4.0 * _EPS * x)
        dx = f / df
        done = (np.abs(f) <= ftol) & ((np.abs(dx) <= stol) | (step <= stol))
        if done.all():
            break
        hi = np.where(f > 0.0, np.minimum(hi, x), hi)
        lo = np.where(f <= 0.0, np.maximum(lo, x), lo)
        xn = x - dx
        out = ~((xn > lo) & (xn < hi))
        xn[out] = 0.5 * (lo[out] + hi[out])
        xn[done] = x[done]
        step = np.abs(xn - x)
        x = xn
    failed = np.flatnonzero(~done)
    first = int(failed[0]) if failed.size else -1
    return x, int(failed.size), first, iters


def quartic_roots(coeffs):
    """Roots of monic quartics ``l^4 + c3 l^3 + c2 l^2 + c1 l + c0``.

    ``coeffs`` has shape (m, 4) holding (c3, c2, c1, c0).  The roots come from
    the eigenvalues of the scaled companion matrix, then are Newton polished
    on the unscaled polynomial.
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=float))
    m = c.shape[0]
    s = np.max(np.abs(c) ** (1.0 / np.arange(1, 5)), axis=1)
    s[s == 0.0] = 1.0
    cs = c / s[:, None] ** np.arange(1, 5)
    comp = np.zeros((m, 4, 4))
    comp[:, 0, :] = -cs
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    z = np.linalg.eigvals(comp) * s[:, None]
    return polish(c, z)


def _horner(c, z):
    c3, c2, c1, c0 = (c[:, k, None] for k in range(4))
    p = (((z + c3) * z + c2) * z + c1) * z + c0
    dp = ((4.0 * z + 3.0 * c3) * z + 2.0 * c2) * z + c1
    return p, dp


def polish(c, z, sweeps=8):
    z = np.array(z, dtype=complex)
    p, dp = _horner(c, z)
    for _ in range(sweeps):
        with np.errstate(divide="ignore", invalid="ignore"):
            zn = z - p / dp
        pn, dpn = _horner(c, zn)
        better = np.isfinite(zn) & (np.abs(pn) < np.abs(p))
        if not better.any():
            break
        z = np.where(better, zn, z)
        p = np.where(better, pn, p)
        dp = np.where(better, dpn, dp)
    return z


def apply_modes(E, heat_p, heat_m, shell, kd, nplus, uplus, nminus, uminus):
    """Advance every Fourier mode by its cached linear propagator.

    ``E[shell[j]]`` is the real 4x4 propagator acting on
    (n+, phi+, n-, phi-) with phi = i k.u / |k|; the divergence-free remainder
    of each velocity is multiplied by the matching heat factor.  Modes with
    ``shell == -1`` (|k| = 0) are copied unchanged.  All state arrays are
    flattened over modes; velocities have shape (3, M).
    """
    r = np.sqrt(np.sum(kd * kd, axis=0))
    live = shell >= 0
    rs = np.where(live, r, 1.0)
    khat = kd / rs

    def split(u):
        kdotu = np.sum(khat * u, axis=0)
        return 1j * kdotu, u - khat * kdotu

    php, psip = split(uplus)
    phm, psim = split(uminus)
    v = np.stack([nplus, php, nminus, phm])
    Es = E[np.where(live, shell, 0)]
    w = np.einsum("mij,jm->im", Es, v)
    hp = heat_p[np.where(live, shell, 0)]
    hm = heat_m[np.where(live, shell, 0)]
    up = -1j * khat * w[1] + hp * psip
    um = -1j * khat * w[3] + hm * psim
    out_np = np.where(live, w[0], nplus)
    out_nm = np.where(live, w[2], nminus)
    out_up = np.where(live, up, uplus)
    out_um = np.where(live, um, uminus)
    return out_np, out_up, out_nm, out_um
