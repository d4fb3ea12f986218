# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coordinate pass.

Mirrors :mod:`covact._pypass` step for step. Complex arrays are accessed
through their interleaved ``float64`` views (re, im) and all complex
arithmetic is spelled out on real parts.
"""

import numpy as np

from libc.math cimport fabs, log1p, isfinite
from libc.stdlib cimport malloc, free
from posix.time cimport clock_gettime, timespec, CLOCK_MONOTONIC
from scipy.linalg.cython_lapack cimport dgeev, zpotrf, zpotri

BACKEND = "cython"

cdef double TIE_TOL = 1e-12
cdef double IMAG_TOL = 1e-8
cdef double DEFLATE_TOL = 1e-300
cdef double SINGULAR_TOL = 1e-14
REFRESH_TOL = 1e-2
cdef int NEWTON_STEPS = 3


cdef inline double _now() noexcept nogil:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <double>ts.tv_sec + 1e-9 * <double>ts.tv_nsec


cdef inline bint _in_domain(const double* gamma, int B, double d) noexcept nogil:
    cdef int j
    for j in range(B):
        if 1.0 + d * gamma[j] <= 0.0:
            return False
    return True


cdef inline double _phi(const double* gamma, const double* rho, int B, double d) noexcept nogil:
    cdef double s = 0.0, t, u
    cdef int j
    for j in range(B):
        t = d * gamma[j]
        u = 1.0 + t
        s += log1p(t) - t / u + d * rho[j] / u
    return s


cdef inline double _phi_scale(const double* gamma, const double* rho, int B, double d) noexcept nogil:
    cdef double s = 0.0, t, u
    cdef int j
    for j in range(B):
        t = d * gamma[j]
        u = 1.0 + t
        s += fabs(log1p(t)) + fabs(t / u) + fabs(d * rho[j] / u)
    return s


cdef inline double _fmax(double x, double y) noexcept nogil:
    return x if x > y else y


cdef inline double _dphi(const double* gamma, const double* rho, int B, double d) noexcept nogil:
    cdef double s = 0.0, u
    cdef int j
    for j in range(B):
        u = 1.0 + d * gamma[j]
        s += (rho[j] + d * gamma[j] * gamma[j]) / (u * u)
    return s


cdef inline double _d2phi(const double* gamma, const double* rho, int B, double d) noexcept nogil:
    cdef double s = 0.0, u, g2
    cdef int j
    for j in range(B):
        u = 1.0 + d * gamma[j]
        g2 = gamma[j] * gamma[j]
        s += (g2 * u - 2.0 * gamma[j] * (rho[j] + d * g2)) / (u * u * u)
    return s


cdef void _build_poly(const double* gamma, const double* rho, int B,
                      double* coeffs, double* work) noexcept nogil:
    cdef int i, j, k, deg, rep
    cdef double c0, c1
    for k in range(2 * B):
        coeffs[k] = 0.0
    for j in range(B):
        work[0] = 1.0
        deg = 0
        for i in range(B):
            if i == j:
                continue
            for rep in range(2):
                work[deg + 1] = 0.0
                for k in range(deg + 1, 0, -1):
                    work[k] += gamma[i] * work[k - 1]
                deg += 1
        c0 = rho[j]
        c1 = gamma[j] * gamma[j]
        for k in range(deg + 1):
            coeffs[k] += c0 * work[k]
            coeffs[k + 1] += c1 * work[k]


cdef struct RootWork:
    double* comp
    double* wr
    double* wi
    double* work
    int lwork


cdef int _real_roots(const double* c, int ncoef, RootWork* rw, double* roots, int* nroots) noexcept nogil:
    """Companion-matrix real roots; returns nonzero on LAPACK failure."""
    cdef double cmax = 0.0, dummy = 0.0
    cdef int n = ncoef - 1, k, r, col, info = 0, one = 1
    cdef char jobn = b'N'
    nroots[0] = 0
    for k in range(ncoef):
        if fabs(c[k]) > cmax:
            cmax = fabs(c[k])
    if cmax == 0.0:
        return 0
    while n > 0 and fabs(c[n]) < DEFLATE_TOL * cmax:
        n -= 1
    if n == 0:
        return 0
    if n == 1:
        roots[0] = -c[0] / c[1]
        nroots[0] = 1
        return 0
    for k in range(n * n):
        rw.comp[k] = 0.0
    for col in range(n):
        rw.comp[col * n] = -c[n - 1 - col] / c[n]
    for r in range(1, n):
        rw.comp[r + (r - 1) * n] = 1.0
    dgeev(&jobn, &jobn, &n, rw.comp, &n, rw.wr, rw.wi, &dummy, &one, &dummy, &one,
          rw.work, &rw.lwork, &info)
    if info != 0:
        return 1
    for k in range(n):
        if not (isfinite(rw.wr[k]) and isfinite(rw.wi[k])):
            return 1
        if fabs(rw.wi[k]) < IMAG_TOL * (1.0 + fabs(rw.wr[k])):
            roots[nroots[0]] = rw.wr[k]
            nroots[0] += 1
    return 0


cdef double _polish(const double* gamma, const double* rho, int B, double r,
                    double lower, double upper) noexcept nogil:
    cdef int it
    cdef double h, r_new
    for it in range(NEWTON_STEPS):
        h = _d2phi(gamma, rho, B, r)
        if h == 0.0 or not isfinite(h):
            break
        r_new = r - _dphi(gamma, rho, B, r) / h
        if not (lower <= r_new <= upper) or not _in_domain(gamma, B, r_new):
            break
        if fabs(_dphi(gamma, rho, B, r_new)) >= fabs(_dphi(gamma, rho, B, r)):
            break
        r = r_new
    return r


cdef int _solve(const double* gamma, const double* rho, int B, double lower, double upper,
                double* coeffs, double* pwork, RootWork* rw, double* roots, double* cands,
                double* vals, double* scales, double* d_out, double* val_out) noexcept nogil:
    cdef int nr = 0, nc = 0, k, status
    cdef double best, bd
    cdef int kb
    cands[nc] = lower; nc += 1
    cands[nc] = upper; nc += 1
    if lower < 0.0 < upper:
        cands[nc] = 0.0; nc += 1
    _build_poly(gamma, rho, B, coeffs, pwork)
    status = _real_roots(coeffs, 2 * B, rw, roots, &nr)
    if status != 0:
        return status
    for k in range(nr):
        if lower < roots[k] < upper and _in_domain(gamma, B, roots[k]):
            cands[nc] = _polish(gamma, rho, B, roots[k], lower, upper)
            nc += 1
    best = 1e308
    kb = 0
    for k in range(nc):
        if _in_domain(gamma, B, cands[k]):
            vals[k] = _phi(gamma, rho, B, cands[k])
            scales[k] = _phi_scale(gamma, rho, B, cands[k])
            if vals[k] < best:
                best = vals[k]
                kb = k
        else:
            vals[k] = 1e308
            scales[k] = 0.0
    if best == 1e308:
        return 1
    # ties within TIE_TOL relative to the term magnitude: lower, upper, smallest |d|
    if vals[0] <= best + TIE_TOL * _fmax(scales[0], scales[kb]):
        d_out[0] = lower; val_out[0] = vals[0]
        return 0
    if vals[1] <= best + TIE_TOL * _fmax(scales[1], scales[kb]):
        d_out[0] = upper; val_out[0] = vals[1]
        return 0
    bd = 1e308
    for k in range(2, nc):
        if vals[k] <= best + TIE_TOL * _fmax(scales[k], scales[kb]) and fabs(cands[k]) < bd:
            bd = fabs(cands[k])
            d_out[0] = cands[k]
            val_out[0] = vals[k]
    return 0


cdef int _refresh(double* Ij, const double* Dj, const double* Hj, int L, double* work) noexcept nogil:
    # Ij <- (Dj + Hj)^{-1} by Cholesky. A row-major Hermitian matrix read
    # column-major is its conjugate, and the conjugate of the inverse read
    # back row-major is the inverse again, so no transposes are needed.
    cdef int n = L, info = 0, r, c, m = 2 * L * L
    cdef char uplo = b'L'
    for r in range(m):
        work[r] = Dj[r] + Hj[r]
    zpotrf(&uplo, &n, <double complex*>work, &n, &info)
    if info != 0:
        return 1
    zpotri(&uplo, &n, <double complex*>work, &n, &info)
    if info != 0:
        return 1
    # valid entries sit in the row-major upper triangle
    for r in range(L):
        Ij[2 * (r * L + r)] = work[2 * (r * L + r)]
        Ij[2 * (r * L + r) + 1] = 0.0
        for c in range(r + 1, L):
            Ij[2 * (r * L + c)] = work[2 * (r * L + c)]
            Ij[2 * (r * L + c) + 1] = work[2 * (r * L + c) + 1]
            Ij[2 * (c * L + r)] = work[2 * (r * L + c)]
            Ij[2 * (c * L + r) + 1] = -work[2 * (r * L + c) + 1]
    return 0


cdef struct Buffers:
    double* V
    double* c1
    double* gam
    double* rho
    double* coef
    double* coeffs
    double* pwork
    double* roots
    double* cands
    double* vals
    double* scales
    double* chol
    RootWork rw


cdef int _alloc(Buffers* buf, int B, int L) noexcept nogil:
    cdef int n = 2 * B - 1
    if n < 1:
        n = 1
    buf.V = <double*>malloc(sizeof(double) * 2 * B * L)
    buf.c1 = <double*>malloc(sizeof(double) * B)
    buf.gam = <double*>malloc(sizeof(double) * B)
    buf.rho = <double*>malloc(sizeof(double) * B)
    buf.coef = <double*>malloc(sizeof(double) * B)
    buf.coeffs = <double*>malloc(sizeof(double) * 2 * B)
    buf.pwork = <double*>malloc(sizeof(double) * 2 * B)
    buf.roots = <double*>malloc(sizeof(double) * n)
    buf.cands = <double*>malloc(sizeof(double) * (n + 3))
    buf.vals = <double*>malloc(sizeof(double) * (n + 3))
    buf.scales = <double*>malloc(sizeof(double) * (n + 3))
    buf.chol = <double*>malloc(sizeof(double) * 2 * L * L)
    buf.rw.lwork = 8 * n + 8
    buf.rw.comp = <double*>malloc(sizeof(double) * n * n)
    buf.rw.wr = <double*>malloc(sizeof(double) * n)
    buf.rw.wi = <double*>malloc(sizeof(double) * n)
    buf.rw.work = <double*>malloc(sizeof(double) * buf.rw.lwork)
    if (buf.V == NULL or buf.c1 == NULL or buf.gam == NULL or buf.rho == NULL
            or buf.coef == NULL or buf.coeffs == NULL or buf.pwork == NULL or buf.roots == NULL
            or buf.cands == NULL or buf.vals == NULL or buf.scales == NULL or buf.chol == NULL or buf.rw.comp == NULL or buf.rw.wr == NULL
            or buf.rw.wi == NULL or buf.rw.work == NULL):
        return 1
    return 0


cdef void _free(Buffers* buf) noexcept nogil:
    free(buf.V); free(buf.c1); free(buf.gam); free(buf.rho); free(buf.coef)
    free(buf.coeffs); free(buf.pwork); free(buf.roots); free(buf.cands); free(buf.vals); free(buf.scales); free(buf.chol)
    free(buf.rw.comp); free(buf.rw.wr); free(buf.rw.wi); free(buf.rw.work)


def solve_subproblem(gamma, beta, double lower, double upper, rho=None):
    """Compiled twin of :func:`covact.subproblem.solve_subproblem`.

    ``rho = gamma - beta`` may be passed directly to avoid cancellation.
    """
    cdef double[::1] g = np.ascontiguousarray(gamma, dtype=np.float64)
    if rho is None:
        rho = np.asarray(gamma, dtype=np.float64) - np.asarray(beta, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(rho, dtype=np.float64)
    cdef int B = g.shape[0], status
    cdef double d = 0.0, val = 0.0
    cdef Buffers buf
    if b.shape[0] != B or B < 1:
        raise ValueError("gamma and rho must be nonempty and of equal length")
    if _alloc(&buf, B, 1) != 0:
        _free(&buf)
        raise MemoryError()
    status = _solve(&g[0], &b[0], B, lower, upper, buf.coeffs, buf.pwork, &buf.rw,
                    buf.roots, buf.cands, buf.vals, buf.scales, &d, &val)
    _free(&buf)
    if status != 0:
        from .errors import RootFindingFailure
        raise RootFindingFailure("companion eigenvalue computation failed")
    return d, val


def coordinate_pass(double[::1] a, inv_covs, resid_covs, sample_covs, sig_rows,
                    const double[:, ::1] gains, coords, double update_threshold,
                    Py_ssize_t resym_every, Py_ssize_t[::1] resym_counter,
                    double refresh_tol=REFRESH_TOL):
    """Compiled twin of :func:`covact._pypass.coordinate_pass` (same return tuple)."""
    cdef double[:, :, ::1] inv = inv_covs.view(np.float64)
    cdef double[:, :, ::1] res = resid_covs.view(np.float64)
    cdef const double[:, :, ::1] hat = np.ascontiguousarray(sample_covs).view(np.float64)
    cdef const double[:, ::1] sig = np.ascontiguousarray(sig_rows).view(np.float64)
    cdef const Py_ssize_t[::1] idx = np.ascontiguousarray(coords, dtype=np.intp)
    cdef int B = gains.shape[0], L = sig.shape[1] // 2
    cdef Py_ssize_t n_coords = idx.shape[0], t, i
    cdef Py_ssize_t row = 2 * L
    cdef int j, r, c, status, bad, minor
    cdef double *Ij
    cdef double *Dj
    cdef const double *s
    cdef double *v
    cdef double vr, vi, wr, wi, ar, ai, c1, c2, k, den, sr, si, kd, xr, xi, d = 0.0, val = 0.0, new, step
    cdef double t0, t1, t2, t_stats = 0.0, t_root = 0.0, t_rank = 0.0, delta = 0.0
    cdef long successful = 0, unnecessary = 0, skipped = 0
    cdef Buffers buf
    if inv.shape[0] != B or res.shape[0] != B or hat.shape[0] != B or inv.shape[1] != L or gains.shape[1] != a.shape[0]:
        raise ValueError("inconsistent array shapes")
    if n_coords == 0:
        return 0, 0, 0, 0.0, 0.0, 0.0, 0.0
    if _alloc(&buf, B, L) != 0:
        _free(&buf)
        raise MemoryError()
    with nogil:
        for t in range(n_coords):
            i = idx[t]
            t0 = _now()
            s = &sig[i, 0]
            for j in range(B):
                Ij = &inv[j, 0, 0]
                Dj = &res[j, 0, 0]
                v = &buf.V[2 * L * j]
                c1 = 0.0
                for r in range(L):
                    vr = 0.0
                    vi = 0.0
                    for c in range(L):
                        ar = Ij[r * row + 2 * c]
                        ai = Ij[r * row + 2 * c + 1]
                        vr = vr + ar * s[2 * c] - ai * s[2 * c + 1]
                        vi = vi + ar * s[2 * c + 1] + ai * s[2 * c]
                    v[2 * r] = vr
                    v[2 * r + 1] = vi
                    c1 = c1 + s[2 * r] * vr + s[2 * r + 1] * vi
                # c2 = v^H (Sigma_j - Sigma_hat_j) v, the gradient term without cancellation
                c2 = 0.0
                for r in range(L):
                    wr = 0.0
                    wi = 0.0
                    for c in range(L):
                        ar = Dj[r * row + 2 * c]
                        ai = Dj[r * row + 2 * c + 1]
                        wr = wr + ar * v[2 * c] - ai * v[2 * c + 1]
                        wi = wi + ar * v[2 * c + 1] + ai * v[2 * c]
                    c2 = c2 + v[2 * r] * wr + v[2 * r + 1] * wi
                buf.c1[j] = c1
                buf.gam[j] = gains[j, i] * c1
                buf.rho[j] = gains[j, i] * c2
            t1 = _now()
            t_stats += t1 - t0
            status = _solve(buf.gam, buf.rho, B, -a[i], 1.0 - a[i], buf.coeffs, buf.pwork,
                            &buf.rw, buf.roots, buf.cands, buf.vals, buf.scales, &d, &val)
            t2 = _now()
            t_root += t2 - t1
            if status != 0:
                skipped += 1
                unnecessary += 1
                continue
            minor = fabs(d) <= update_threshold
            if d == 0.0:
                unnecessary += 1
                continue
            if d == 1.0 - a[i]:
                new = 1.0
            elif d == -a[i]:
                new = 0.0
            else:
                new = a[i] + d
                if new < 0.0:
                    new = 0.0
                elif new > 1.0:
                    new = 1.0
            step = new - a[i]
            if step == 0.0:
                unnecessary += 1
                continue
            bad = 0
            for j in range(B):
                buf.coef[j] = step * gains[j, i]
                if 1.0 + buf.coef[j] * buf.c1[j] <= SINGULAR_TOL:
                    bad = 1
            if bad:
                skipped += 1
                unnecessary += 1
                t_rank += _now() - t2
                continue
            a[i] = new
            for j in range(B):
                # Sigma_j - Sigma_hat_j gains coef_j * s s^H
                Dj = &res[j, 0, 0]
                kd = buf.coef[j]
                for r in range(L):
                    Dj[r * row + 2 * r] += kd * (s[2 * r] * s[2 * r] + s[2 * r + 1] * s[2 * r + 1])
                    for c in range(r + 1, L):
                        sr = kd * (s[2 * r] * s[2 * c] + s[2 * r + 1] * s[2 * c + 1])
                        si = kd * (s[2 * r + 1] * s[2 * c] - s[2 * r] * s[2 * c + 1])
                        Dj[r * row + 2 * c] += sr
                        Dj[r * row + 2 * c + 1] += si
                        Dj[c * row + 2 * r] += sr
                        Dj[c * row + 2 * r + 1] -= si
                Ij = &inv[j, 0, 0]
                den = 1.0 + buf.coef[j] * buf.c1[j]
                if den < refresh_tol and _refresh(Ij, Dj, &hat[j, 0, 0], L, buf.chol) == 0:
                    continue
                v = &buf.V[2 * L * j]
                k = buf.coef[j] / den
                for r in range(L):
                    Ij[r * row + 2 * r] -= k * (v[2 * r] * v[2 * r] + v[2 * r + 1] * v[2 * r + 1])
                    for c in range(r + 1, L):
                        # x = v_r conj(v_c); lower triangle gets conj(x)
                        xr = k * (v[2 * r] * v[2 * c] + v[2 * r + 1] * v[2 * c + 1])
                        xi = k * (v[2 * r + 1] * v[2 * c] - v[2 * r] * v[2 * c + 1])
                        Ij[r * row + 2 * c] -= xr
                        Ij[r * row + 2 * c + 1] -= xi
                        Ij[c * row + 2 * r] -= xr
                        Ij[c * row + 2 * r + 1] += xi
            if minor:
                unnecessary += 1
            else:
                successful += 1
            delta += val
            resym_counter[0] += 1
            if resym_every > 0 and resym_counter[0] >= resym_every:
                for j in range(B):
                    Ij = &inv[j, 0, 0]
                    for r in range(L):
                        Ij[r * row + 2 * r + 1] = 0.0
                        for c in range(r + 1, L):
                            xr = 0.5 * (Ij[r * row + 2 * c] + Ij[c * row + 2 * r])
                            xi = 0.5 * (Ij[r * row + 2 * c + 1] - Ij[c * row + 2 * r + 1])
                            Ij[r * row + 2 * c] = xr
                            Ij[r * row + 2 * c + 1] = xi
                            Ij[c * row + 2 * r] = xr
                            Ij[c * row + 2 * r + 1] = -xi
                resym_counter[0] = 0
            t_rank += _now() - t2
    _free(&buf)
    return successful, unnecessary, skipped, delta, t_stats, t_root, t_rank
