"""Cylinder eigensystems, Weyl counts, compression singular values, entropy
bounds and decay fits for the ill-posedness experiments (one base dimension)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import specfun
from .core import Geometry, Region
from .eigen import EigenBasis, analytic_basis
from .extension import profile
from .fracop import analyze, singular_values_square, sobolev_weights, source_dictionary

SAMPLES_PER_UNIT = 8
ASYMPTOTIC_START = 5.0


@dataclass(frozen=True)
class CylinderSpectrum:
    R: float
    s: float
    dim: int
    l: np.ndarray
    m: np.ndarray
    values: np.ndarray

    def count(self, lam) -> np.ndarray:
        return np.searchsorted(self.values, np.asarray(lam, dtype=float), side="right")


def cylinder_spectrum(basis: EigenBasis, R: float, s: float, count: int) -> CylinderSpectrum:
    """First ``count`` values mu_l + j_m^2 / R^2 with j_m the zeros of J_{-s}.

    Raises when the base modes or the zeros cannot certify the first ``count``.
    """
    mu = basis.eigenvalues
    m_max = 16
    while True:
        j = specfun.bessel_j_neg_zeros(s, m_max)
        L, M = np.meshgrid(np.arange(1, mu.size + 1), np.arange(1, m_max + 1), indexing="ij")
        vals = (mu[:, None] + (j[None, :] / R) ** 2).ravel()
        order = np.lexsort((M.ravel(), L.ravel(), vals))
        if order.size < count:
            raise ValueError("not enough base modes for the requested count")
        top = vals[order[count - 1]]
        if top <= mu[0] + (j[-1] / R) ** 2:
            break
        m_max *= 2
        if m_max > 4096:
            raise ValueError("insufficient Bessel zeros for the requested count")
    if top > mu[-1] + (j[0] / R) ** 2:
        raise ValueError("base spectrum too short to certify the requested count")
    pick = order[:count]
    return CylinderSpectrum(float(R), float(s), basis.geometry.dim, L.ravel()[pick], M.ravel()[pick], vals[pick])


@dataclass(frozen=True)
class WeylTable:
    lam: np.ndarray
    N: np.ndarray
    ratio: np.ndarray
    band: float
    slope: float
    slope_target: float


def weyl_count_check(spec: CylinderSpectrum, lam_grid=None) -> WeylTable:
    """N(Lam) against R Lam^((n+1)/2); band is max/min ratio over the top half.

    Counts are exact only below the last computed value (ties there may have
    been cut), so the grid must stay strictly under it.

    ``slope`` is the log-log slope of lambda_k on k over the top half of the
    computed values, to compare with 2/(n+1).
    """
    n = spec.dim
    vals = spec.values
    if lam_grid is None:
        lam_grid = np.linspace(vals[0], vals[vals < vals[-1]].max(), 64)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.max() >= vals[-1]:
        raise ValueError("grid exceeds the computed spectrum")
    N = spec.count(lam_grid)
    ratio = N / (spec.R * lam_grid ** (0.5 * (n + 1)))
    top = lam_grid >= 0.5 * (lam_grid.min() + lam_grid.max())
    band = float(ratio[top].max() / ratio[top].min())
    k = np.arange(1, vals.size + 1)
    half = k > vals.size // 2
    slope = float(np.polyfit(np.log(k[half]), np.log(vals[half]), 1)[0])
    return WeylTable(lam_grid, N, ratio, band, slope, 2.0 / (n + 1))


def height_panels(R: float, order: int = 12, n_geometric: int = 30, max_width: float = 0.125):
    """Gauss-Legendre rule on (0, R): geometric panels toward 0, widths <= max_width."""
    if order * (1.0 / max_width) < SAMPLES_PER_UNIT:
        raise ValueError("height grid coarser than the sampling criterion")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = [0.0]
    for e in list(R * 2.0 ** -np.arange(n_geometric, 0, -1)) + [R]:
        while e - edges[-1] > max_width:
            edges.append(edges[-1] + max_width)
        edges.append(e)
    edges = np.array(edges)
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]).ravel()
    weights = (0.5 * (b - a)[:, None] * w).ravel()
    return nodes, weights


@dataclass(frozen=True)
class Compression:
    sigma: np.ndarray
    rank: int
    samples: int
    meta: dict


def compression_singulars(
    basis: EigenBasis,
    O: Region,
    O_plus: Region,
    R: float,
    s: float,
    J: int = 64,
    chunk: int = 64,
) -> Compression:
    """Singular values of f -> u_0 on (Omega minus O+) x (0, R).

    Samples carry the weight (w_t t^(1-2s) h)^(1/2) so the Euclidean norm is the
    discrete L2(t^(1-2s)) norm; sources are the O dictionary under H^-s
    weights. The tall matrix is reduced by a chunked QR over heights.
    """
    if not O_plus.contains_closure(O):
        raise ValueError("O_plus must contain the closure of O")
    g = basis.geometry
    d = source_dictionary(O, J)
    C = analyze(d.elements, basis).values
    lam = basis.eigenvalues
    t, wt = height_panels(R)
    G = profile(s, lam[None, :], t[:, None]) * np.sqrt(wt * t ** (1 - 2 * s))[:, None]
    outside = ~O_plus.mask()
    Px = np.sqrt(g.cell_volume) * basis.vectors[outside]
    Rq = np.zeros((0, J))
    for i in range(0, t.size, chunk):
        block = np.concatenate([Px @ (G[k][:, None] * C) for k in range(i, min(i + chunk, t.size))])
        Rq = np.linalg.qr(np.vstack([Rq, block]), mode="r")
    Gs = C.T @ (sobolev_weights(basis, -s)[:, None] * C)
    Rs = np.linalg.cholesky(0.5 * (Gs + Gs.T)).T
    M = np.linalg.solve(Rs.T, Rq.T).T
    sigma, _, _, rank = singular_values_square(M)
    return Compression(sigma, rank, int(t.size * outside.sum()), {"R": R, "s": s, "J": J, "K": basis.size})


def compression_norm_bound(s: float, lam1: float) -> float:
    """Full-height weighted L2 norm of the first mode at unit H^-s norm.

    Every single-mode norm is below it, so it bounds sigma_1.
    """
    return float(specfun.c_tilde(s) * np.sqrt(specfun.bessel_square_tail(s, 0.0) / lam1))


def mode_tail_norms(s: float, lam, R: float) -> np.ndarray:
    """Weighted H^1 norm above height R of each mode at unit H^-s norm.

    tau^2 = c~_s^2 [(1 + 1/lam) I_s(sqrt(lam) R) + I_{1-s}(sqrt(lam) R)] with
    I_nu(X) = int_X^inf z K_nu(z)^2 dz.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    X = np.sqrt(lam) * R
    a = specfun.bessel_square_tail(s, X)
    b = specfun.bessel_square_tail(1 - s, X)
    return specfun.c_tilde(s) * np.sqrt((1 + 1 / lam) * a + b)


def tail_operator_bound(s: float, lam1: float, R: float) -> float:
    """Operator-norm surrogate of the restriction above height R.

    Per-mode tails fall with lambda, so the first mode sets the norm.
    """
    if np.sqrt(lam1) * R < ASYMPTOTIC_START:
        raise ValueError("sqrt(lam1) R below the asymptotic threshold 5")
    return float(mode_tail_norms(s, lam1, R)[0])


def quadrature_tail_norm(s: float, lam: float, R: float, order: int = 40, width: float = 0.5, span: float = 40.0) -> float:
    """Direct Gauss-Legendre value of the single-mode tail norm (independent route)."""
    x, w = np.polynomial.legendre.leggauss(order)
    top = R + span / np.sqrt(lam)
    edges = np.arange(R, top + width / np.sqrt(lam), width / np.sqrt(lam))
    a, b = edges[:-1], edges[1:]
    t = (0.5 * (b - a)[:, None] * x + 0.5 * (a + b)[:, None]).ravel()
    wt = (0.5 * (b - a)[:, None] * w).ravel()
    c = lam ** (0.5 * s)
    g = c * profile(s, lam, t)
    dg = -c * specfun.c_tilde(s) * lam ** (0.5 * (1 - s)) * specfun.bessel_k(1 - s, np.sqrt(lam) * t) * t**s
    weight = wt * t ** (1 - 2 * s)
    return float(np.sqrt(np.sum(weight * ((1 + lam) * g * g + dg * dg))))


def fit_tail_constant(s: float, lam1: float, Rs) -> float:
    """Smallest C with tail_operator_bound <= C exp(-sqrt(lam1) R) on ``Rs``."""
    Rs = np.asarray(Rs, dtype=float)
    return float(max(tail_operator_bound(s, lam1, R) * np.exp(np.sqrt(lam1) * R) for R in Rs))


@dataclass(frozen=True)
class EntropyBounds:
    N: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def entropy_from_singulars(sigma, N_max: int, C: float = 1.0, c1: float = 0.5) -> EntropyBounds:
    """sup_k e^(-N/2k) g_k and C sup_k e^(-c1 N/k) g_k, g_k = (sigma_1...sigma_k)^(1/k).

    The absolute constants are surrogates; with the defaults both sides coincide.
    """
    sig = np.asarray(sigma, dtype=float)
    if np.any(sig <= 0) or np.any(np.diff(sig) > 0):
        raise ValueError("singular values must be positive and nonincreasing")
    k = np.arange(1, sig.size + 1)
    gk = np.exp(np.cumsum(np.log(sig)) / k)
    N = np.arange(1, N_max + 1)
    lower = np.max(np.exp(-N[:, None] / (2.0 * k[None, :])) * gk[None, :], axis=1)
    upper = C * np.max(np.exp(-c1 * N[:, None] / k[None, :]) * gk[None, :], axis=1)
    return EntropyBounds(N, lower, upper)


@dataclass(frozen=True)
class DecayFit:
    logC: float
    c: float
    correlation: float


def decay_fit(sigma, p: float, k=None) -> DecayFit:
    """Least squares log sigma_k = logC - c k^p; k defaults to 1..n."""
    sig = np.asarray(sigma, dtype=float)
    k = np.arange(1, sig.size + 1) if k is None else np.asarray(k, dtype=float)
    if sig.size < 8:
        raise ValueError("need at least 8 values")
    if np.ptp(sig) == 0:
        raise ValueError("degenerate singular values")
    x, y = k**p, np.log(sig)
    slope, icpt = np.polyfit(x, y, 1)
    return DecayFit(float(icpt), float(-slope), float(np.corrcoef(x, y)[0, 1]))


def default_compression_setup(n: int = 511):
    """Unit interval with O = (3/8, 5/8) and a collar of 1/64 for O+."""
    g = Geometry.interval(1.0, n)
    O = Region.from_box(g, [(0.375, 0.625)], "O")
    O_plus = Region.from_box(g, [(0.359375, 0.640625)], "O_plus")
    return g, O, O_plus, analytic_basis(g, n, spectrum="discrete")
