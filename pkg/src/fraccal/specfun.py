"""Gamma, modified Bessel K, Bessel J zeros and the extension-kernel tails.

The modified Bessel function uses three regimes:

* ``z < 2``: Temme's power series for ``K_mu, K_{mu+1}`` (|mu| <= 1/2),
  a cancellation-free form of ``(pi/2)(I_{-nu} - I_nu)/sin(pi nu)``;
* ``2 <= z <= 12``: Steed's continued fraction;
* ``z > 12``: the Hankel asymptotic series truncated at its smallest term.

Orders above 1/2 are reached by one upward recurrence step.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels_py
from ._backend import kernels

SIMPSON_TOL = 1e-10
SIMPSON_DEPTH = 40
TAIL_WINDOW = 40.0
J_SERIES_LIMIT = 12.0


def _check_order(s: float, name: str = "s") -> float:
    s = float(s)
    if not (0.0 < s < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {s}")
    return s


def gamma(x):
    """Lanczos Gamma (g=7, 9 terms) with reflection below 1/2."""
    if np.ndim(x):
        return np.array([gamma(v) for v in np.ravel(x)]).reshape(np.shape(x))
    x = float(x)
    if x <= 0.0 and x == math.floor(x):
        raise ValueError(f"gamma has a pole at {x}")
    return _kernels_py.gamma(x)


def c_s(s: float) -> float:
    """Normalising constant of the reduction integral, 2^(2s-1) G(s)/G(1-s)."""
    s = _check_order(s)
    return 2.0 ** (2 * s - 1) * gamma(s) / gamma(1 - s)


def c_bar(s: float) -> float:
    """Neumann trace constant 4^s G(s) / (2 s |G(-s)|)."""
    s = _check_order(s)
    return 4.0**s * gamma(s) / (2 * s * abs(gamma(-s)))


def c_tilde(s: float) -> float:
    """Extension profile constant 2^(1-s) / G(s)."""
    s = _check_order(s)
    return 2.0 ** (1 - s) / gamma(s)


def kernel_mass(s: float) -> float:
    """Integral of z^(1-s) K_s(z) over (0, inf), equal to 2^(-s) G(1-s)."""
    s = _check_order(s)
    return 2.0 ** (-s) * gamma(1 - s)


def bessel_k(nu: float, z) -> np.ndarray:
    """Modified Bessel function of the second kind for nu in (0, 1), z > 0."""
    nu = _check_order(nu, "nu")
    arr = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("bessel_k needs finite z > 0")
    out = kernels.bessel_k(nu, arr.ravel()).reshape(arr.shape)
    return out if out.ndim else float(out)


def bessel_k_route(nu: float, z, route: str) -> np.ndarray:
    """Evaluate one regime of ``bessel_k`` regardless of z (diagnostics)."""
    nu = _check_order(nu, "nu")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if route == "asymptotic":
        return _kernels_py._k_asymptotic(nu, z)
    fn = {"series": _kernels_py._k_series, "fraction": _kernels_py._k_fraction}[route]
    nl = int(nu + 0.5)
    mu = nu - nl
    kmu, k1 = fn(mu, z)
    for i in range(1, nl + 1):
        kmu, k1 = k1, (mu + i) * 2.0 / z * k1 + kmu
    return kmu


def bessel_j(nu: float, z) -> np.ndarray:
    """Bessel J_nu for real nu > -1, z > 0: series up to 12, Hankel beyond."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty_like(z)
    small = z <= J_SERIES_LIMIT
    if small.any():
        zz = z[small]
        x2 = 0.5 * zz
        term = x2**nu / gamma(nu + 1.0)
        total = term.copy()
        for k in range(1, 200):
            term = -term * x2 * x2 / (k * (k + nu))
            total += term
            if np.all(np.abs(term) < 1e-17 * np.maximum(np.abs(total), 1e-300)):
                break
        out[small] = total
    big = ~small
    if big.any():
        zz = z[big]
        mu = 4.0 * nu * nu
        p = np.ones_like(zz)
        q = np.zeros_like(zz)
        term = np.ones_like(zz)
        active = np.ones(zz.shape, dtype=bool)
        for k in range(1, 80):
            new = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * zz)
            active &= np.abs(new) < np.abs(term)
            if not active.any():
                break
            sign = (-1) ** (k // 2)
            contrib = np.where(active, sign * new, 0.0)
            if k % 2:
                q += contrib
            else:
                p += contrib
            term = np.where(active, new, term)
            active &= np.abs(new) > 1e-17
        chi = zz - (0.5 * nu + 0.25) * math.pi
        out[big] = np.sqrt(2.0 / (math.pi * zz)) * (p * np.cos(chi) - q * np.sin(chi))
    return out


def mcmahon_zero(s: float, m) -> np.ndarray:
    """McMahon estimate of the m-th positive zero of J_{-s}, with the 1/beta term."""
    nu = -float(s)
    beta = (np.asarray(m, dtype=float) + 0.5 * nu - 0.25) * math.pi
    return beta - (4 * nu * nu - 1) / (8 * beta)


def bessel_j_neg_zeros(s: float, m_max: int, tol: float = 1e-10) -> np.ndarray:
    """First ``m_max`` positive zeros of J_{-s}.

    Sign changes are located on a grid of step 0.1 and each bracket is refined
    by bisection with a secant step until |J_{-s}| <= tol.
    """
    s = _check_order(s)
    if m_max < 1:
        raise ValueError("m_max must be positive")
    nu = -s
    upper = float(mcmahon_zero(s, m_max)) + 2.0
    grid = np.arange(0.05, upper + 0.1, 0.1)
    vals = bessel_j(nu, grid)
    change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if change.size < m_max:
        raise RuntimeError("failed to bracket the requested Bessel zeros")
    roots = []
    for i in change[:m_max]:
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        x = 0.5 * (a + b)
        for it in range(200):
            x = b - fb * (b - a) / (fb - fa)
            if it % 3 == 2 or not (a < x < b):
                x = 0.5 * (a + b)
            fx = float(bessel_j(nu, x)[0])
            if fx == 0.0 or b - a <= 4e-16 * x:
                break
            if np.sign(fx) == np.sign(fa):
                a, fa = x, fx
            else:
                b, fb = x, fx
        if abs(float(bessel_j(nu, x)[0])) > tol:
            raise RuntimeError(f"zero refinement stalled near {x}")
        roots.append(x)
    return np.array(roots)


def _segment(kind: int, nu: float, a: float, b: float, rtol: float, depth: int) -> float:
    """Integral over [a, b]; the part below z = 1 uses z = u^(1/(2-2nu))."""
    total = 0.0
    if a < 1.0:
        top = min(b, 1.0)
        total += kernels.tail_integral(kind, nu, a, top, 1.0 / (2.0 - 2.0 * nu), rtol, depth)
        a = top
    if b > a:
        total += kernels.tail_integral(kind, nu, a, b, 1.0, rtol, depth)
    return total


def _remainder(kind: int, nu: float, z: float) -> float:
    a1 = (4 * nu * nu - 1) / 8.0
    if kind == 0:
        b = 0.5 - nu
        return math.sqrt(math.pi / 2) * z**b * math.exp(-z) * (1 + (b + a1) / z)
    return math.pi / 4 * math.exp(-2 * z) * (1 + 2 * a1 / z)


def _tail(kind: int, nu: float, L: float, rtol: float, depth: int) -> float:
    top = max(L, 1.0) + TAIL_WINDOW
    return _segment(kind, nu, L, top, rtol, depth) + _remainder(kind, nu, top)


def _tail_many(kind: int, nu: float, xs, rtol: float, depth: int) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise ValueError("tail arguments must be finite and non-negative")
    uniq = np.unique(xs)
    vals = np.empty_like(uniq)
    vals[-1] = _tail(kind, nu, float(uniq[-1]), rtol, depth)
    for i in range(len(uniq) - 2, -1, -1):
        vals[i] = vals[i + 1] + _segment(kind, nu, float(uniq[i]), float(uniq[i + 1]), rtol, depth)
    return vals[np.searchsorted(uniq, xs)]


def kernel_tail(s: float, L, tol: float = SIMPSON_TOL, max_depth: int = SIMPSON_DEPTH):
    """Integral of z^(1-s) K_s(z) over (L, inf).

    Array input is evaluated cumulatively from the largest argument down, so
    the result is monotone in L by construction.
    """
    s = _check_order(s)
    if np.ndim(L):
        return _tail_many(0, s, L, tol, max_depth)
    L = float(L)
    if L < 0 or not math.isfinite(L):
        raise ValueError("L must be finite and non-negative")
    return _tail(0, s, L, tol, max_depth)


def bessel_square_tail(nu: float, X, tol: float = SIMPSON_TOL, max_depth: int = SIMPSON_DEPTH):
    """Integral of z K_nu(z)^2 over (X, inf)."""
    nu = _check_order(nu, "nu")
    if np.ndim(X):
        return _tail_many(1, nu, X, tol, max_depth)
    X = float(X)
    if X < 0 or not math.isfinite(X):
        raise ValueError("X must be finite and non-negative")
    return _tail(1, nu, X, tol, max_depth)
