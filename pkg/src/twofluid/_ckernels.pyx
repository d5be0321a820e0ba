# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_pykernels`` for the contract)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs, sqrt, isfinite, INFINITY
from scipy.linalg.cython_lapack cimport dhseqr

cnp.import_array()

cdef double EPS = 2.220446049250313e-16

ctypedef double complex cplx


cdef inline double _cap(double R, double[::1] fc) noexcept nogil:
    cdef double s = R - 1.0
    return fc[0] + s * (fc[1] + s * (fc[2] + s * fc[3]))


cdef inline double _powg(double x, double g) noexcept nogil:
    # small integer exponents are common and pow() dominates the solve
    if g == 2.0:
        return x * x
    if g == 1.0:
        return x
    if g == 3.0:
        return x * x * x
    return pow(x, g)


cdef inline void _phi(double x, double Rp, double Rm, double gp, double gm,
                      double fval, double* f, double* df, double* scale) noexcept nogil:
    cdef double rm = Rm * x / (x - Rp)
    cdef double pp = _powg(x, gp)
    cdef double pm = _powg(rm, gm)
    f[0] = pp - pm - fval
    df[0] = gp * pp / x + gm * pm / rm * Rm * Rp / ((x - Rp) * (x - Rp))
    scale[0] = pp + pm + fabs(fval)


cdef int _solve_point(double Rp, double Rm, double gp, double gm, double fval,
                      double x, int maxiter, double tol, double steptol,
                      double* root, int* used) noexcept nogil:
    cdef double lo = Rp * (1.0 + 1e-12)
    cdef double hi = INFINITY
    cdef double f, df, scale, width, cand, fc_, dfc, sc, dx, xn
    cdef double step = INFINITY
    cdef double ftol, stol
    cdef int it = 0
    if not (x > lo) or not isfinite(x):
        x = Rp + Rm
    _phi(x, Rp, Rm, gp, gm, fval, &f, &df, &scale)
    if f > 0.0:
        hi = x
    else:
        lo = x
        width = 2.0 * fabs(f / df)
        if width < 1e-10 * x:
            width = 1e-10 * x
        if width < 1e-12:
            width = 1e-12
        while it < maxiter:
            it += 1
            cand = x + width
            _phi(cand, Rp, Rm, gp, gm, fval, &fc_, &dfc, &sc)
            if fc_ > 0.0:
                hi = cand
                break
            lo = cand
            width *= 2.0
    while it < maxiter:
        it += 1
        _phi(x, Rp, Rm, gp, gm, fval, &f, &df, &scale)
        # residual noise floor: rounding of the terms plus rounding of x itself
        ftol = 8.0 * EPS * scale + 2.0 * EPS * x * df
        if ftol < tol:
            ftol = tol
        stol = 4.0 * EPS * x
        if stol < steptol:
            stol = steptol
        dx = f / df
        if fabs(f) <= ftol and (fabs(dx) <= stol or step <= stol):
            root[0] = x
            used[0] = it
            return 1
        if f > 0.0:
            if x < hi:
                hi = x
        elif x > lo:
            lo = x
        xn = x - dx
        if not (xn > lo and xn < hi):
            xn = 0.5 * (lo + hi)
        step = fabs(xn - x)
        x = xn
    root[0] = x
    used[0] = it
    return 0


cdef inline double _pick(double a, double b, double Rp, double Rm, double gp,
                         double gm, double fval) noexcept nogil:
    cdef double fa, fb, d, s
    if not (b > Rp * (1.0 + 1e-12)) or not isfinite(b):
        return a
    _phi(a, Rp, Rm, gp, gm, fval, &fa, &d, &s)
    _phi(b, Rp, Rm, gp, gm, fval, &fb, &d, &s)
    return a if fabs(fa) < fabs(fb) else b


def closure_newton(Rp, Rm, double gp, double gm, fc, guess, int maxiter=200,
                   double tol=1e-12, double steptol=1e-13):
    """Per-point closure solve; each point is warm-started from the previous
    point's root in memory order (pass x-fastest flattened arrays)."""
    cdef double[::1] rp = np.ascontiguousarray(Rp, dtype=np.float64).ravel()
    cdef double[::1] rmv = np.ascontiguousarray(Rm, dtype=np.float64).ravel()
    cdef double[::1] fcv = np.ascontiguousarray(fc, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(guess, dtype=np.float64).ravel()
    cdef Py_ssize_t n = rp.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef int nfail = 0, first = -1, used = 0, maxused = 0, ok
    cdef double start, prev = -1.0, fval
    cdef double lo
    with nogil:
        for i in range(n):
            fval = _cap(rmv[i], fcv)
            start = g[i]
            lo = rp[i] * (1.0 + 1e-12)
            if prev > lo and (not (start > lo) or not isfinite(start)):
                start = prev
            elif prev > lo and fabs(prev - start) > 0.0:
                # neighbour root is a valid warm start; prefer the closer residual
                start = _pick(prev, start, rp[i], rmv[i], gp, gm, fval)
            ok = _solve_point(rp[i], rmv[i], gp, gm, fval, start, maxiter, tol,
                              steptol, &o[i], &used)
            if used > maxused:
                maxused = used
            if ok:
                prev = o[i]
            else:
                nfail += 1
                if first < 0:
                    first = <int>i
                prev = -1.0
    return out, nfail, first, maxused


cdef inline void _horner(double c3, double c2, double c1, double c0, cplx z,
                         cplx* p, cplx* dp) noexcept nogil:
    p[0] = (((z + c3) * z + c2) * z + c1) * z + c0
    dp[0] = ((4.0 * z + 3.0 * c3) * z + 2.0 * c2) * z + c1


cdef inline double cabs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


def quartic_roots(coeffs):
    """Companion-matrix eigenvalues (LAPACK dhseqr) plus Newton polishing."""
    cdef double[:, ::1] c = np.ascontiguousarray(np.atleast_2d(coeffs), dtype=np.float64)
    cdef Py_ssize_t m = c.shape[0], j
    out = np.empty((m, 4), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef double h[16]
    cdef double wr[4]
    cdef double wi[4]
    cdef double z[1]
    cdef double work[64]
    cdef int n = 4, ilo = 1, ihi = 4, ldh = 4, ldz = 1, lwork = 64, info = 0
    cdef char job = b'E'
    cdef char compz = b'N'
    cdef double s, t, sk
    cdef int k, sweep
    cdef cplx zz, zn, p, dp, pn, dpn
    with nogil:
        for j in range(m):
            s = 0.0
            for k in range(4):
                t = pow(fabs(c[j, k]), 1.0 / (k + 1))
                if t > s:
                    s = t
            if s == 0.0:
                s = 1.0
            for k in range(16):
                h[k] = 0.0
            sk = s
            for k in range(4):
                # column-major: first row holds the negated scaled coefficients
                h[4 * k] = -c[j, k] / sk
                sk *= s
            h[1] = 1.0
            h[6] = 1.0
            h[11] = 1.0
            dhseqr(&job, &compz, &n, &ilo, &ihi, h, &ldh, wr, wi, z, &ldz,
                   work, &lwork, &info)
            for k in range(4):
                zz = (wr[k] + 1j * wi[k]) * s
                _horner(c[j, 0], c[j, 1], c[j, 2], c[j, 3], zz, &p, &dp)
                for sweep in range(8):
                    if dp == 0:
                        break
                    zn = zz - p / dp
                    _horner(c[j, 0], c[j, 1], c[j, 2], c[j, 3], zn, &pn, &dpn)
                    if not (cabs2(pn) < cabs2(p)):
                        break
                    zz = zn
                    p = pn
                    dp = dpn
                o[j, k] = zz
    return out


def apply_modes(E, heat_p, heat_m, shell, kd, nplus, uplus, nminus, uminus):
    """Fused Hodge split, 4x4 propagation and reconstruction per mode."""
    cdef double[:, :, ::1] e = np.ascontiguousarray(E, dtype=np.float64)
    cdef double[::1] hp = np.ascontiguousarray(heat_p, dtype=np.float64)
    cdef double[::1] hm = np.ascontiguousarray(heat_m, dtype=np.float64)
    cdef cnp.int64_t[::1] sh = np.ascontiguousarray(shell, dtype=np.int64)
    cdef double[:, ::1] k = np.ascontiguousarray(kd, dtype=np.float64)
    cdef cplx[::1] a = np.ascontiguousarray(nplus, dtype=np.complex128)
    cdef cplx[:, ::1] up = np.ascontiguousarray(uplus, dtype=np.complex128)
    cdef cplx[::1] b = np.ascontiguousarray(nminus, dtype=np.complex128)
    cdef cplx[:, ::1] um = np.ascontiguousarray(uminus, dtype=np.complex128)
    cdef Py_ssize_t m = a.shape[0], j
    o_np = np.empty(m, dtype=np.complex128)
    o_nm = np.empty(m, dtype=np.complex128)
    o_up = np.empty((3, m), dtype=np.complex128)
    o_um = np.empty((3, m), dtype=np.complex128)
    cdef cplx[::1] onp = o_np
    cdef cplx[::1] onm = o_nm
    cdef cplx[:, ::1] oup = o_up
    cdef cplx[:, ::1] oum = o_um
    cdef double kx, ky, kz, r
    cdef cplx dp_, dm_, v0, v1, v2, v3, w1, w3
    cdef Py_ssize_t s_
    cdef double* E_
    with nogil:
        for j in range(m):
            s_ = sh[j]
            if s_ < 0:
                onp[j] = a[j]
                onm[j] = b[j]
                oup[0, j] = up[0, j]
                oup[1, j] = up[1, j]
                oup[2, j] = up[2, j]
                oum[0, j] = um[0, j]
                oum[1, j] = um[1, j]
                oum[2, j] = um[2, j]
                continue
            kx = k[0, j]
            ky = k[1, j]
            kz = k[2, j]
            r = sqrt(kx * kx + ky * ky + kz * kz)
            kx /= r
            ky /= r
            kz /= r
            dp_ = kx * up[0, j] + ky * up[1, j] + kz * up[2, j]
            dm_ = kx * um[0, j] + ky * um[1, j] + kz * um[2, j]
            v0 = a[j]
            v1 = 1j * dp_
            v2 = b[j]
            v3 = 1j * dm_
            E_ = &e[s_, 0, 0]
            onp[j] = E_[0] * v0 + E_[1] * v1 + E_[2] * v2 + E_[3] * v3
            w1 = E_[4] * v0 + E_[5] * v1 + E_[6] * v2 + E_[7] * v3
            onm[j] = E_[8] * v0 + E_[9] * v1 + E_[10] * v2 + E_[11] * v3
            w3 = E_[12] * v0 + E_[13] * v1 + E_[14] * v2 + E_[15] * v3
            oup[0, j] = -1j * kx * w1 + hp[s_] * (up[0, j] - kx * dp_)
            oup[1, j] = -1j * ky * w1 + hp[s_] * (up[1, j] - ky * dp_)
            oup[2, j] = -1j * kz * w1 + hp[s_] * (up[2, j] - kz * dp_)
            oum[0, j] = -1j * kx * w3 + hm[s_] * (um[0, j] - kx * dm_)
            oum[1, j] = -1j * ky * w3 + hm[s_] * (um[1, j] - ky * dm_)
            oum[2, j] = -1j * kz * w3 + hm[s_] * (um[2, j] - kz * dm_)
    return o_np, o_up, o_nm, o_um
