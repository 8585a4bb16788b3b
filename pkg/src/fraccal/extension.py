"""Extension solutions, Neumann traces, the height-integral reduction and
propagation-of-smallness experiments.

The extension of a source with coefficients c_k is
``u(x, t) = c~_s sum_k c_k K_s(sqrt(lam_k) t) (t / sqrt(lam_k))^s phi_k(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .core import Region
from .eigen import EigenBasis
from .fracop import SpectralCoeffs, analyze, check_mean_zero, solve_sts, sobolev_weights

GL_ORDER = 20
PANEL_RATIO = 0.5
N_PANELS = 64
REDUCTION_TOL = 1e-6
ALPHA_GRID = np.round(np.arange(0.05, 0.951, 0.05), 2)


def profile(s: float, lam, t) -> np.ndarray:
    """Mode profile c~_s K_s(sqrt(lam) t)(t/sqrt(lam))^s, broadcast over lam and t.

    Equals lam^-s at t = 0.
    """
    s = specfun._check_order(s)
    lam, t = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(t, dtype=float))
    shape = lam.shape
    lam, t = lam.ravel(), t.ravel()
    out = lam ** (-s)
    pos = t > 0
    if np.any(pos):
        rl = np.sqrt(lam[pos])
        out[pos] = specfun.c_tilde(s) * specfun.bessel_k(s, rl * t[pos]) * (t[pos] / rl) ** s
    return out.reshape(shape) if shape else float(out[0])


def profile_derivative(s: float, lam, t) -> np.ndarray:
    """d/dt of ``profile`` for t > 0: -c~_s lam^((1-s)/2) K_{1-s}(sqrt(lam) t) t^s."""
    lam, t = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("derivative needs t > 0")
    z = np.sqrt(lam) * t
    return -specfun.c_tilde(s) * lam ** (0.5 * (1 - s)) * specfun.bessel_k(1 - s, z) * t**s


@dataclass(frozen=True)
class ExtensionSlice:
    basis: EigenBasis
    coeffs: np.ndarray
    t: float
    values: np.ndarray


def _coeffs(f, basis: EigenBasis) -> np.ndarray:
    if isinstance(f, SpectralCoeffs):
        return f.values
    return analyze(f, basis).values


def extension_eval(s: float, f, basis: EigenBasis, t: float) -> ExtensionSlice:
    """Extension of source ``f`` (field or coefficients) at height t >= 0."""
    if t < 0:
        raise ValueError("height must be non-negative")
    c = _coeffs(f, basis)
    g = profile(s, basis.eigenvalues, t)
    return ExtensionSlice(basis, c, float(t), basis.vectors @ (g * c))


def extension_block(s: float, c: np.ndarray, basis: EigenBasis, ts) -> np.ndarray:
    """Values on nodes x heights, shape (n_nodes, len(ts))."""
    G = profile(s, basis.eigenvalues[:, None], np.asarray(ts, dtype=float)[None, :])
    return basis.vectors @ (c[:, None] * G)


@dataclass(frozen=True)
class NeumannResidual:
    residual: float
    probe_residuals: np.ndarray
    orders: np.ndarray


def neumann_trace_residual(s: float, f, basis: EigenBasis, probes) -> NeumannResidual:
    """Relative L2 gap between the weighted Neumann trace and f.

    At each probe t the derivative is a centred difference with step 1e-3 t;
    the trace -c_bar t^(1-2s) du/dt has leading error t^(2-2s), which the
    last two probes remove by Richardson extrapolation.
    """
    probes = np.asarray(probes, dtype=float)
    if probes.size < 2 or np.any(probes <= 0) or np.any(np.diff(probes) >= 0):
        raise ValueError("probes must be positive and strictly decreasing")
    c = _coeffs(f, basis)
    lam = basis.eigenvalues
    norm_f = np.sqrt(np.sum(c * c))
    traces = []
    for t in probes:
        d = 1e-3 * t
        du = (profile(s, lam, t + d) - profile(s, lam, t - d)) / (2 * d)
        traces.append(-specfun.c_bar(s) * t ** (1 - 2 * s) * du * c)
    traces = np.array(traces)
    if norm_f == 0:
        zeros = np.zeros(probes.size)
        return NeumannResidual(0.0, zeros, zeros[1:])
    errs = np.sqrt(np.sum((traces - c) ** 2, axis=1)) / norm_f
    p = 2 - 2 * s
    q = (probes[-1] / probes[-2]) ** p
    extrap = (traces[-1] - q * traces[-2]) / (1 - q)
    res = float(np.sqrt(np.sum((extrap - c) ** 2)) / norm_f)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(errs[1:] / errs[:-1]) / np.log(probes[1:] / probes[:-1])
    return NeumannResidual(res, errs, orders)


def height_rule(T: float, n_panels: int = N_PANELS, order: int = GL_ORDER):
    """Gauss-Legendre nodes and weights on (0, T] over geometric panels.

    Panels are [T r^(j+1), T r^j]; the last one reaches down to 0 and carries
    the integrable endpoint behaviour of the t^(1-2s) weight.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    edges = T * PANEL_RATIO ** np.arange(n_panels + 1)
    edges[-1] = 0.0
    nodes, weights = [], []
    for a, b in zip(edges[1:], edges[:-1]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def tail_bound(s: float, c: np.ndarray, basis: EigenBasis, L) -> np.ndarray:
    """c~_s * int_{sqrt(lam_1) L}^inf z^(1-s) K_s dz * |f|_{H^-1}, for each L."""
    lam1 = basis.eigenvalues[0]
    hm1 = np.sqrt(np.sum(sobolev_weights(basis, -1.0) * c * c))
    return specfun.c_tilde(s) * specfun.kernel_tail(s, np.sqrt(lam1) * np.atleast_1d(L)) * hm1


@dataclass(frozen=True)
class ReductionResult:
    analytic: np.ndarray
    numeric: np.ndarray
    analytic_modes: np.ndarray
    numeric_modes: np.ndarray
    discrepancy: float
    tail_bound: float
    t_max: float
    meta: dict = field(default_factory=dict)


def choose_height(s: float, c: np.ndarray, basis: EigenBasis, tol: float) -> tuple[float, float]:
    """Smallest T = 2^j with tail bound <= tol/2 relative to |L^-1 f|."""
    target = np.sqrt(np.sum((c / basis.eigenvalues) ** 2))
    if target == 0:
        return 1.0, 0.0
    Ts = 2.0 ** np.arange(0, 12)
    bounds = tail_bound(s, c, basis, Ts)
    ok = np.nonzero(bounds <= 0.5 * tol * target)[0]
    if ok.size == 0:
        raise ValueError("tail bound exceeds tolerance for every admissible height")
    return float(Ts[ok[0]]), float(bounds[ok[0]])


def reduction_integral(
    s: float, f, basis: EigenBasis, t_max: float | None = None, tol: float = REDUCTION_TOL
) -> ReductionResult:
    """c_s int_0^inf t^(1-2s) u(., t) dt by two independent routes.

    The analytic route uses the per-mode factor c_s c~_s lam^-1 * mass; the
    numeric route integrates the Bessel profile over (0, T] with graded
    Gauss-Legendre panels and discards the part above T, whose size is
    reported as ``tail_bound``.
    """
    if basis.geometry.periodic and not isinstance(f, SpectralCoeffs):
        check_mean_zero(f, basis.geometry)
    c = _coeffs(f, basis)
    lam = basis.eigenvalues
    factor = specfun.c_s(s) * specfun.c_tilde(s) * specfun.kernel_mass(s)
    ana = factor * c / lam
    if t_max is None:
        t_max, tb = choose_height(s, c, basis, tol)
    else:
        tb = float(tail_bound(s, c, basis, t_max)[0])
    nodes, weights = height_rule(t_max)
    G = profile(s, lam[:, None], nodes[None, :])
    num = specfun.c_s(s) * c * (G @ (weights * nodes ** (1 - 2 * s)))
    scale = max(np.sqrt(np.sum(ana * ana)), 1e-300)
    disc = float(np.sqrt(np.sum((ana - num) ** 2)) / scale) if np.any(c) else 0.0
    return ReductionResult(
        basis.vectors @ ana, basis.vectors @ num, ana, num, disc, tb, t_max,
        {"s": s, "panels": N_PANELS, "order": GL_ORDER},
    )


def truncation_tail_bound(s: float, f, basis: EigenBasis, L: float) -> tuple[float, float]:
    """Measured H^1 norm of int_L^inf t^(1-2s) u dt and its a-priori bound.

    Both use one cumulative tail evaluation, so the per-mode tails never
    exceed the first-mode tail and the domination is exact. The norms are the
    homogeneous spectral ones (weights lam^(+-1)) on every geometry; on the
    circle's mean-zero space they are equivalent to the (1 + lam) norms.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    c = _coeffs(f, basis)
    lam = basis.eigenvalues
    args = np.sqrt(lam) * L
    tails = specfun.kernel_tail(s, np.concatenate([[np.sqrt(lam[0]) * L], args]))
    ct = specfun.c_tilde(s)
    modes = ct * tails[1:] * c / lam
    measured = float(np.sqrt(np.sum(lam * modes**2)))
    bound = float(ct * tails[0] * np.sqrt(np.sum(c * c / lam)))
    return measured, bound


def random_coeffs(rng: np.random.Generator, basis: EigenBasis, s: float, count: int) -> np.ndarray:
    """Columns uniform on [-1, 1] per mode, rescaled to unit H^-s norm."""
    c = rng.uniform(-1.0, 1.0, size=(basis.size, count))
    norms = np.sqrt(np.sum(sobolev_weights(basis, -s)[:, None] * c * c, axis=0))
    return c / norms


@dataclass(frozen=True)
class Ball:
    x0: tuple
    t0: float
    r: float


def ball_norms(s: float, C: np.ndarray, basis: EigenBasis, x0, t0: float, radii, ht: float | None = None):
    """Weighted L2(t^(1-2s)) norms over balls around (x0, t0), cell midpoint rule.

    Cells are the node cells in x times a uniform t-grid; a cell counts when
    its centre lies in the ball. Returns shape (len(radii), n_samples).
    """
    g = basis.geometry
    radii = np.asarray(radii, dtype=float)
    rmax = radii.max()
    ht = ht or float(min(g.spacing))
    lo = max(t0 - rmax, 0.0)
    nt = int(np.ceil((t0 + rmax - lo) / ht))
    ts = lo + (np.arange(nt) + 0.5) * ht
    X = g.nodes().reshape(g.size, g.dim)
    d2 = np.sum((X - np.asarray(x0, dtype=float)) ** 2, axis=1)[:, None] + (ts - t0)[None, :] ** 2
    vol = g.cell_volume * ht
    G = profile(s, basis.eigenvalues[:, None], ts[None, :])
    w = ts ** (1 - 2 * s)
    out = np.empty((radii.size, C.shape[1]))
    near = np.nonzero(np.min(d2, axis=1) <= rmax * rmax)[0]
    V = basis.vectors[near]
    for j in range(C.shape[1]):
        U = V @ (C[:, j : j + 1] * G)
        for i, r in enumerate(radii):
            inside = d2[near] <= r * r
            out[i, j] = np.sqrt(vol * np.sum(w[None, :] * U * U * inside))
    return out


@dataclass(frozen=True)
class ThreeBallsResult:
    alpha: float
    C: float
    violations: int
    ratios: np.ndarray
    norms: np.ndarray
    calibration: dict


def _check_ball(basis: EigenBasis, region: Region, x0, t0: float, r: float, delta0: float):
    if t0 - 4 * r <= delta0:
        raise ValueError("largest ball reaches below the height delta0")
    ext = region.extent
    for ax, x in enumerate(np.atleast_1d(x0)):
        if x - 4 * r < ext[ax][0] or x + 4 * r > ext[ax][1]:
            raise ValueError("largest ball leaves the cylinder above O")


def three_balls_norms(s, C, basis, x0, t0, r):
    return ball_norms(s, C, basis, x0, t0, [r, 2 * r, 4 * r])


def fit_three_balls(norms: np.ndarray, safety: float = 2.0) -> tuple[float, float, dict]:
    """Best (alpha, C) on calibration norms.

    For each grid alpha, C_alpha is ``safety`` times the largest ratio
    |B2| / (|B1|^alpha |B4|^(1-alpha)); the alpha with the smallest C_alpha wins.
    """
    n1, n2, n4 = norms
    keep = n4 > 0
    table = {}
    for a in ALPHA_GRID:
        ratio = n2[keep] / (n1[keep] ** a * n4[keep] ** (1 - a))
        table[float(a)] = safety * float(ratio.max()) if ratio.size else safety
    alpha = min(table, key=lambda a: (table[a], a))
    return alpha, table[alpha], table


def three_balls_check(
    s: float,
    basis: EigenBasis,
    region: Region,
    x0,
    t0: float,
    r: float,
    delta0: float = 0.05,
    n_samples: int = 100,
    n_calibration: int = 50,
    seed: int = 0,
) -> ThreeBallsResult:
    """Empirical three-balls inequality for random extension solutions.

    (alpha, C) are fitted on a calibration draw and the violations are
    counted on an independent draw of ``n_samples`` solutions.
    """
    _check_ball(basis, region, x0, t0, r, delta0)
    rng = np.random.default_rng(seed)
    cal = three_balls_norms(s, random_coeffs(rng, basis, s, n_calibration), basis, x0, t0, r)
    alpha, C, table = fit_three_balls(cal)
    test = three_balls_norms(s, random_coeffs(rng, basis, s, n_samples), basis, x0, t0, r)
    n1, n2, n4 = test
    rhs = C * n1**alpha * n4 ** (1 - alpha)
    viol = int(np.sum(n2 > rhs))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, n2 / rhs, 0.0)
    return ThreeBallsResult(alpha, C, viol, ratios, test, {"table": table, "seed": seed})


@dataclass(frozen=True)
class BoundaryBulkTable:
    tau: np.ndarray
    epsilon: np.ndarray
    bulk: np.ndarray
    slope: float


def boundary_bulk_check(
    s: float,
    bases: list,
    reference: EigenBasis,
    taus,
    region: Region,
    source: np.ndarray,
    x0,
    radius: float,
) -> BoundaryBulkTable:
    """Trace gap on O against the half-ball bulk gap of the extensions.

    ``bases[i]`` is the eigenbasis of the metric with amplitude ``taus[i]``;
    every metric must agree with the reference on the closure of O+. The
    records are epsilon = |u_1 - u_2|_{L2(O)} and the weighted L2 norm of the
    extension difference over the half ball of ``radius`` around (x0, 0).
    """
    g = reference.geometry
    mask = region.mask()
    h = float(min(g.spacing))
    nt = int(np.ceil(radius / h))
    ts = (np.arange(nt) + 0.5) * h
    X = g.nodes().reshape(g.size, g.dim)
    d2 = np.sum((X - np.asarray(x0, dtype=float)) ** 2, axis=1)[:, None] + ts[None, :] ** 2
    inside = d2 <= radius * radius
    w = ts ** (1 - 2 * s)
    vol = g.cell_volume * h

    def ext(b):
        return extension_block(s, analyze(source, b).values, b, ts)

    u_ref = solve_sts(s, source, reference)
    U_ref = ext(reference)
    eps, bulk = [], []
    for b in bases:
        du = solve_sts(s, source, b) - u_ref
        eps.append(np.sqrt(g.cell_volume * np.sum(du[mask] ** 2)))
        D = ext(b) - U_ref
        bulk.append(np.sqrt(vol * np.sum(w[None, :] * D * D * inside)))
    eps, bulk = np.array(eps), np.array(bulk)
    pos = (eps > 0) & (bulk > 0)
    slope = float(np.polyfit(np.log(eps[pos]), np.log(bulk[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return BoundaryBulkTable(np.asarray(taus, dtype=float), eps, bulk, slope)
