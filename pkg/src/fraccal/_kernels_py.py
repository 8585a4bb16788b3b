"""Pure numpy implementations of the hot kernels.

Mirrors the compiled module ``fraccal._kernels`` function for function so the
two can be swapped at import time and benchmarked against each other.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-16
SERIES_LIMIT = 2.0
ASYMPTOTIC_LIMIT = 12.0

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

# Taylor coefficients of 1/Gamma(1 + x) around 0.
_RGAMMA = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
)


def gamma(x: float) -> float:
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS[0]
    for i in range(1, 9):
        acc += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    """Return gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)."""
    if abs(mu) < 1e-2:
        m2 = mu * mu
        gam1 = -(_RGAMMA[1] + m2 * (_RGAMMA[3] + m2 * (_RGAMMA[5] + m2 * _RGAMMA[7])))
        gam2 = _RGAMMA[0] + m2 * (_RGAMMA[2] + m2 * (_RGAMMA[4] + m2 * _RGAMMA[6]))
        gampl = gam2 - mu * gam1
        gammi = gam2 + mu * gam1
        return gam1, gam2, gampl, gammi
    gampl = 1.0 / gamma(1.0 + mu)
    gammi = 1.0 / gamma(1.0 - mu)
    return (gammi - gampl) / (2.0 * mu), 0.5 * (gammi + gampl), gampl, gammi


def _k_series(mu: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < EPS else pimu / math.sin(pimu)
    x2 = 0.5 * z
    d = -np.log(x2)
    e = mu * d
    with np.errstate(invalid="ignore", divide="ignore"):
        fact2 = np.where(np.abs(e) < EPS, 1.0, np.sinh(e) / e)
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    ee = np.exp(e)
    p = 0.5 * ee / gampl
    q = 0.5 / (ee * gammi)
    c = np.ones_like(z)
    dd = x2 * x2
    total1 = p.copy()
    for i in range(1, 200):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * dd / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total += delta
        total1 += c * (p - i * ff)
        if np.all(np.abs(delta) < np.abs(total) * EPS):
            break
    return total, total1 * 2.0 / z


def _k_fraction(mu: float, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = 2.0 * (1.0 + z)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(z)
    q2 = np.ones_like(z)
    a1 = 0.25 - mu * mu
    q = np.full_like(z, a1)
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, 100000):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        if np.all(np.abs(dels / s) < EPS):
            break
    h = a1 * h
    kmu = np.sqrt(math.pi / (2.0 * z)) * np.exp(-z) / s
    k1 = kmu * (mu + z + 0.5 - h) / z
    return kmu, k1


def _k_asymptotic(nu: float, z: np.ndarray) -> np.ndarray:
    four_nu2 = 4.0 * nu * nu
    total = np.ones_like(z)
    term = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for k in range(1, 60):
        new = term * (four_nu2 - (2 * k - 1) ** 2) / (k * 8.0 * z)
        grow = np.abs(new) >= np.abs(term)
        active &= ~grow
        if not active.any():
            break
        total = np.where(active, total + new, total)
        term = np.where(active, new, term)
        active &= np.abs(new) > EPS * np.abs(total)
    return np.sqrt(math.pi / (2.0 * z)) * np.exp(-z) * total


def bessel_k(nu: float, z: np.ndarray) -> np.ndarray:
    """K_nu(z) for real nu >= 0 and z > 0, elementwise."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    nl = int(nu + 0.5)
    mu = nu - nl
    lo = z < SERIES_LIMIT
    hi = z > ASYMPTOTIC_LIMIT
    mid = ~(lo | hi)
    for mask, route in ((lo, _k_series), (mid, _k_fraction)):
        if mask.any():
            zz = z[mask]
            kmu, k1 = route(mu, zz)
            for i in range(1, nl + 1):
                kmu, k1 = k1, (mu + i) * 2.0 / zz * k1 + kmu
            out[mask] = kmu
    if hi.any():
        out[hi] = _k_asymptotic(nu, z[hi])
    return out


def _integrand(kind: int, nu: float, power: float, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    zero = u <= 0.0
    if zero.any():
        if kind == 0:
            out[zero] = power * 2.0 ** (nu - 1.0) * gamma(nu)
        else:
            out[zero] = power * 2.0 ** (2.0 * nu - 2.0) * gamma(nu) ** 2
    pos = ~zero
    if pos.any():
        uu = u[pos]
        zz = uu**power
        kv = bessel_k(nu, zz)
        jac = power * uu ** (power - 1.0)
        if kind == 0:
            out[pos] = zz ** (1.0 - nu) * kv * jac
        else:
            out[pos] = zz * kv * kv * jac
    return out


def tail_integral(
    kind: int, nu: float, a: float, b: float, power: float, rtol: float, max_depth: int
) -> float:
    """Adaptive Simpson over [a, b] in u = z**(1/power).

    kind 0 integrates z**(1 - nu) K_nu(z), kind 1 integrates z K_nu(z)**2.
    The absolute tolerance is rtol times a 16-panel Simpson estimate.
    """
    ua = a ** (1.0 / power)
    ub = b ** (1.0 / power)
    if ub <= ua:
        return 0.0
    edges = np.linspace(ua, ub, 17)
    mids = 0.5 * (edges[:-1] + edges[1:])
    fe = _integrand(kind, nu, power, edges)
    fm = _integrand(kind, nu, power, mids)
    widths = np.diff(edges)
    whole = widths / 6.0 * (fe[:-1] + 4.0 * fm + fe[1:])
    tol = rtol * abs(whole.sum())
    if tol == 0.0:
        return 0.0
    lo, hi = edges[:-1], edges[1:]
    flo, fmid, fhi = fe[:-1], fm, fe[1:]
    tols = np.full(16, tol / 16.0)
    depth = np.zeros(16, dtype=int)
    total = 0.0
    while lo.size:
        mid = 0.5 * (lo + hi)
        ql = 0.5 * (lo + mid)
        qr = 0.5 * (mid + hi)
        vals = _integrand(kind, nu, power, np.concatenate([ql, qr]))
        fql, fqr = vals[: lo.size], vals[lo.size :]
        h = hi - lo
        left = h / 12.0 * (flo + 4.0 * fql + fmid)
        right = h / 12.0 * (fmid + 4.0 * fqr + fhi)
        delta = left + right - whole
        done = (np.abs(delta) <= 15.0 * tols) | (depth >= max_depth)
        total += float(np.sum((left + right + delta / 15.0)[done]))
        keep = ~done
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        flo, fmid, fhi = (
            np.concatenate([flo[keep], fmid[keep]]),
            np.concatenate([fql[keep], fqr[keep]]),
            np.concatenate([fmid[keep], fhi[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) / 2.0
        depth = np.concatenate([depth[keep], depth[keep]]) + 1
    return total


def _round_robin(n: int):
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        yield np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])
        players = [players[0], players[-1]] + players[1:-1]


def jacobi_eigh(a: np.ndarray, tol: float, max_sweeps: int):
    """Cyclic Jacobi with round-robin ordering; disjoint rotations are batched.

    Returns unsorted eigenvalues, eigenvector columns and the sweep count.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    fro = np.linalg.norm(a)
    schedule = list(_round_robin(n))
    sweeps = 0
    for sweeps in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * fro or sweeps == max_sweeps:
            break
        for p, q in schedule:
            apq = a[p, q]
            nz = apq != 0.0
            if not nz.any():
                continue
            p, q, apq = p[nz], q[nz], apq[nz]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            app, aqq = a[p, p] - t * apq, a[q, q] + t * apq
            colp, colq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * colp - s * colq
            a[:, q] = s * colp + c * colq
            rowp, rowq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rowp - s[:, None] * rowq
            a[q, :] = s[:, None] * rowp + c[:, None] * rowq
            a[p, p], a[q, q] = app, aqq
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, sweeps
