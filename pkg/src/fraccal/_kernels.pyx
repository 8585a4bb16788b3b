# cython: language_level=3
"""Compiled hot kernels: Bessel K, tail quadrature and cyclic Jacobi.

Same signatures and algorithms as ``fraccal._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cosh, exp, fabs, log, pow, sin, sinh, sqrt

cnp.import_array()

cdef double EPS = 1e-16
cdef double PI = 3.141592653589793
cdef double SERIES_LIMIT = 2.0
cdef double ASYMPTOTIC_LIMIT = 12.0

cdef double[9] LANCZOS = [
    0.99999999999980993, 676.5203681218851, -1259.1392167224028,
    771.32342877765313, -176.61502916214059, 12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
]
cdef double[8] RGAMMA = [
    1.0, 0.5772156649015329, -0.6558780715202538, -0.0420026350340952,
    0.1665386113822915, -0.0421977345555443, -0.0096219715278770,
    0.0072189432466630,
]


cdef double _gamma(double x) noexcept nogil:
    cdef double acc, t
    cdef int i
    if x < 0.5:
        return PI / (sin(PI * x) * _gamma(1.0 - x))
    x -= 1.0
    acc = LANCZOS[0]
    for i in range(1, 9):
        acc += LANCZOS[i] / (x + i)
    t = x + 7.5
    return sqrt(2.0 * PI) * pow(t, x + 0.5) * exp(-t) * acc


def gamma(double x):
    return _gamma(x)


cdef void _temme_gammas(double mu, double* out) noexcept nogil:
    cdef double m2, gampl, gammi
    if fabs(mu) < 1e-2:
        m2 = mu * mu
        out[0] = -(RGAMMA[1] + m2 * (RGAMMA[3] + m2 * (RGAMMA[5] + m2 * RGAMMA[7])))
        out[1] = RGAMMA[0] + m2 * (RGAMMA[2] + m2 * (RGAMMA[4] + m2 * RGAMMA[6]))
        out[2] = out[1] - mu * out[0]
        out[3] = out[1] + mu * out[0]
        return
    gampl = 1.0 / _gamma(1.0 + mu)
    gammi = 1.0 / _gamma(1.0 - mu)
    out[0] = (gammi - gampl) / (2.0 * mu)
    out[1] = 0.5 * (gammi + gampl)
    out[2] = gampl
    out[3] = gammi


cdef void _k_series(double mu, double z, double* kmu, double* k1) noexcept nogil:
    cdef double g[4]
    cdef double pimu, fact, x2, d, e, fact2, ff, total, ee, p, q, c, dd, total1, delta
    cdef int i
    _temme_gammas(mu, g)
    pimu = PI * mu
    fact = 1.0 if fabs(pimu) < EPS else pimu / sin(pimu)
    x2 = 0.5 * z
    d = -log(x2)
    e = mu * d
    fact2 = 1.0 if fabs(e) < EPS else sinh(e) / e
    ff = fact * (g[0] * cosh(e) + g[1] * fact2 * d)
    total = ff
    ee = exp(e)
    p = 0.5 * ee / g[2]
    q = 0.5 / (ee * g[3])
    c = 1.0
    dd = x2 * x2
    total1 = p
    for i in range(1, 200):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c *= dd / i
        p /= (i - mu)
        q /= (i + mu)
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if fabs(delta) < fabs(total) * EPS:
            break
    kmu[0] = total
    k1[0] = total1 * 2.0 / z


cdef void _k_fraction(double mu, double z, double* kmu, double* k1) noexcept nogil:
    cdef double b, d, h, delh, q1, q2, a1, q, c, a, s, qnew, dels
    cdef int i
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = d
    delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = a1
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 100000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if fabs(dels / s) < EPS:
            break
    h = a1 * h
    kmu[0] = sqrt(PI / (2.0 * z)) * exp(-z) / s
    k1[0] = kmu[0] * (mu + z + 0.5 - h) / z


cdef double _k_asymptotic(double nu, double z) noexcept nogil:
    cdef double four_nu2 = 4.0 * nu * nu
    cdef double total = 1.0, term = 1.0, new
    cdef int k
    for k in range(1, 60):
        new = term * (four_nu2 - (2 * k - 1) * (2 * k - 1)) / (k * 8.0 * z)
        if fabs(new) >= fabs(term):
            break
        total += new
        term = new
        if fabs(new) <= EPS * fabs(total):
            break
    return sqrt(PI / (2.0 * z)) * exp(-z) * total


cdef double _bessel_k(double nu, double z) noexcept nogil:
    cdef int nl = <int>(nu + 0.5)
    cdef double mu = nu - nl
    cdef double kmu, k1, tmp
    cdef int i
    if z > ASYMPTOTIC_LIMIT:
        return _k_asymptotic(nu, z)
    if z < SERIES_LIMIT:
        _k_series(mu, z, &kmu, &k1)
    else:
        _k_fraction(mu, z, &kmu, &k1)
    for i in range(1, nl + 1):
        tmp = (mu + i) * 2.0 / z * k1 + kmu
        kmu = k1
        k1 = tmp
    return kmu


def bessel_k(double nu, z):
    """K_nu(z) for real nu >= 0 and z > 0, elementwise."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(z, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(flat)
    cdef Py_ssize_t i, n = flat.shape[0]
    with nogil:
        for i in range(n):
            out[i] = _bessel_k(nu, flat[i])
    return out.reshape(np.shape(z))


cdef double _integrand(int kind, double nu, double power, double u) noexcept nogil:
    cdef double z, kv
    if u <= 0.0:
        if kind == 0:
            return power * pow(2.0, nu - 1.0) * _gamma(nu)
        return power * pow(2.0, 2.0 * nu - 2.0) * _gamma(nu) * _gamma(nu)
    z = pow(u, power)
    kv = _bessel_k(nu, z)
    if kind == 0:
        return pow(z, 1.0 - nu) * kv * power * pow(u, power - 1.0)
    return z * kv * kv * power * pow(u, power - 1.0)


cdef double _simpson(int kind, double nu, double power, double a, double b,
                     double fa, double fm, double fb, double whole, double tol,
                     int depth, int max_depth) noexcept nogil:
    cdef double m = 0.5 * (a + b)
    cdef double lm = 0.5 * (a + m), rm = 0.5 * (m + b)
    cdef double flm = _integrand(kind, nu, power, lm)
    cdef double frm = _integrand(kind, nu, power, rm)
    cdef double left = (b - a) / 12.0 * (fa + 4.0 * flm + fm)
    cdef double right = (b - a) / 12.0 * (fm + 4.0 * frm + fb)
    cdef double delta = left + right - whole
    if depth >= max_depth or fabs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson(kind, nu, power, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth)
            + _simpson(kind, nu, power, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth))


def tail_integral(int kind, double nu, double a, double b, double power,
                  double rtol, int max_depth):
    """Adaptive Simpson over [a, b] in u = z**(1/power).

    kind 0 integrates z**(1 - nu) K_nu(z), kind 1 integrates z K_nu(z)**2.
    The absolute tolerance is rtol times a 16-panel Simpson estimate.
    """
    cdef double ua = pow(a, 1.0 / power), ub = pow(b, 1.0 / power)
    cdef double fe[17]
    cdef double fm[16]
    cdef double whole[16]
    cdef double h, est = 0.0, tol, total = 0.0
    cdef int i
    if ub <= ua:
        return 0.0
    h = (ub - ua) / 16.0
    with nogil:
        for i in range(17):
            fe[i] = _integrand(kind, nu, power, ua + i * h)
        for i in range(16):
            fm[i] = _integrand(kind, nu, power, ua + (i + 0.5) * h)
            whole[i] = h / 6.0 * (fe[i] + 4.0 * fm[i] + fe[i + 1])
            est += whole[i]
        tol = rtol * fabs(est)
        for i in range(16):
            if tol == 0.0:
                break
            total += _simpson(kind, nu, power, ua + i * h, ua + (i + 1) * h,
                              fe[i], fm[i], fe[i + 1], whole[i], tol / 16.0, 0, max_depth)
    return total


def jacobi_eigh(a, double tol, int max_sweeps):
    """Cyclic-by-row Jacobi. Returns unsorted eigenvalues, vectors, sweeps.

    Rows are rotated and mirrored into columns by symmetry; eigenvectors are
    accumulated as rows of a transposed array so every update is contiguous.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] arr = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = arr.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vec_t = np.eye(n)
    cdef double[:, ::1] A = arr
    cdef double[:, ::1] W = vec_t
    cdef double fro = 0.0, off, apq, app, aqq, theta, t, c, s, akp, akq
    cdef Py_ssize_t i, j, k, p, q
    cdef int sweep = 0
    with nogil:
        for i in range(n):
            for j in range(n):
                fro += A[i, j] * A[i, j]
        fro = sqrt(fro)
        while True:
            off = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        off += A[i, j] * A[i, j]
            off = sqrt(off)
            if off <= tol * fro or sweep >= max_sweeps:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    app = A[p, p]
                    aqq = A[q, q]
                    theta = (aqq - app) / (2.0 * apq)
                    if theta == 0.0:
                        t = 1.0
                    elif theta > 0.0:
                        t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        if k == p or k == q:
                            continue
                        akp = A[p, k]
                        akq = A[q, k]
                        A[p, k] = c * akp - s * akq
                        A[q, k] = s * akp + c * akq
                        A[k, p] = A[p, k]
                        A[k, q] = A[q, k]
                    A[p, p] = app - t * apq
                    A[q, q] = aqq + t * apq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for k in range(n):
                        akp = W[p, k]
                        akq = W[q, k]
                        W[p, k] = c * akp - s * akq
                        W[q, k] = s * akp + c * akq
            sweep += 1
    return np.diag(arr).copy(), vec_t.T.copy(), sweep
