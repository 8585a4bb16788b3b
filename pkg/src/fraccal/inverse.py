"""Runge approximation, interior Dirichlet-to-Neumann maps, Alessandrini
identities and the metric-family experiments linking the data operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Geometry, Metric, Region
from .eigen import assemble_stiffness, closed_region_nodes, discrete_basis, energy_matrix
from .fracop import (
    OperatorMatrix,
    SingularSystem,
    SourceDict,
    build_sts_matrix,
    operator_norm,
    operator_norm_diff,
    source_dictionary,
    svd,
    trace_basis,
)

BOUND_SLACK = 4 * np.finfo(float).eps
TRANSFER_BETAS = (0.25, 0.5, 1.0, 2.0)


# metric families


def cosine_bump(region: Region) -> Callable:
    """Tensor cos^2 bump on the physical extent of ``region``, exactly 0 outside.

    It is C^1 and vanishes on the closure ring of the region."""
    ext = region.extent

    def bump(*x):
        out = 1.0
        for xi, (a, b) in zip(x, ext):
            c, w = 0.5 * (a + b), b - a
            u = np.abs(np.asarray(xi, dtype=float) - c) / w
            out = out * np.where(u < 0.5, np.cos(np.pi * u) ** 2, 0.0)
        return out

    return bump


def bump_metric(geometry: Geometry, region: Region, tau: float, theta: float = 0.5) -> Metric:
    """Isotropic metric Id + tau * bump(region)."""
    b = cosine_bump(region)
    return Metric.from_function(geometry, lambda *x: 1.0 + tau * b(*x), theta, region)


def geometric_taus(n: int = 10) -> np.ndarray:
    return 2.0 ** -np.arange(1, n + 1)


def _check_agree_outside(m1: Metric, m2: Metric, region: Region) -> None:
    g = m1.geometry
    if m2.geometry != g:
        raise ValueError("metrics live on different grids")
    outside = np.ones(g.closed_shape, dtype=bool)
    off = 0 if g.periodic else 1
    outside[tuple(slice(lo + off, hi + off) for lo, hi in region.box)] = False
    if np.max(np.abs(m1.coefficients[outside] - m2.coefficients[outside]), initial=0.0) > 1e-14:
        raise ValueError(f"metrics differ outside region {region.label}")


# local solves


def local_solve(metric: Metric, f: np.ndarray) -> np.ndarray:
    """v = L_a^{-1} f with zero Dirichlet data (columns of f solved together)."""
    return np.linalg.solve(assemble_stiffness(metric), f)


def dual_gram(dictionary: SourceDict, reference: Metric, order: float = 1.0) -> np.ndarray:
    """H^{-1} Gram of the zero-extended dictionary, measured for ``reference``.

    Uses the stiffness solve, so no eigenbasis is needed for order 1.
    """
    if order != 1.0:
        raise ValueError("direct dual Gram exists for order 1 only")
    D = dictionary.elements
    G = reference.geometry.cell_volume * D.T @ local_solve(reference, D)
    return 0.5 * (G + G.T)


def local_sts_matrix(metric: Metric, dictionary: SourceDict, src_gram: np.ndarray, n_trace: int | None = None) -> OperatorMatrix:
    """f -> v^f|_O for L_a v = f, in O's Neumann cosines with H^1(O) weights."""
    v = local_solve(metric, dictionary.elements)
    mask = dictionary.region.mask()
    psi, nu = trace_basis(dictionary.region, n_trace or dictionary.size)
    entries = metric.geometry.cell_volume * psi.T @ v[mask]
    return OperatorMatrix(entries, src_gram, 1.0 + nu, {"order": 1})


# Runge approximation


@dataclass(frozen=True)
class RungeProblem:
    metric: Metric
    O: Region
    A: Region
    dictionary: SourceDict
    T: OperatorMatrix
    system: SingularSystem
    A_plus: Region | None = None

    @property
    def sigma(self) -> np.ndarray:
        return self.system.sigma


def build_runge_T(metric: Metric, O: Region, A: Region, J: int | None = None, A_plus: Region | None = None) -> RungeProblem:
    """T f = v^f|_A for sources in the dictionary of O.

    Source weights are the identity-metric H^{-1} Gram (a fixed reference, so T
    is linear in 1/a); targets carry the discrete L2(A) Gram.
    """
    g = metric.geometry
    if not O.closure_disjoint(A):
        raise ValueError("regions O and A overlap")
    if A_plus is not None and (not A_plus.contains(A) or not O.closure_disjoint(A_plus)):
        raise ValueError("A_plus must contain A and stay away from O")
    J = J or (12 if g.dim == 1 else 25)
    d = source_dictionary(O, J)
    v = local_solve(metric, d.elements)
    entries = v[A.mask()]
    src = dual_gram(d, Metric.identity(g))
    tgt = np.full(A.size, g.cell_volume)
    T = OperatorMatrix(entries, src, tgt, {"source": "H^-1", "target": "L2(A)"})
    return RungeProblem(metric, O, A, d, T, svd(T), A_plus)


@dataclass(frozen=True)
class RungeResult:
    f: np.ndarray
    error: float
    source_norm: float
    target_norm: float
    kept: int
    flagged: bool


def _l2(rp: RungeProblem, w: np.ndarray) -> float:
    return float(np.sqrt(rp.metric.geometry.cell_volume * np.sum(w * w)))


def runge_approximate(rp: RungeProblem, w: np.ndarray, alpha: float) -> RungeResult:
    """Truncated-SVD source f = sum_{sigma_j >= alpha} (beta_j / sigma_j) phi_j.

    Only resolved singular values (index below the numerical rank) are used.

    ``f`` holds dictionary coefficients; ``source_norm`` is its H^-1 norm,
    evaluated in singular coordinates as (sum (beta_j/sigma_j)^2)^(1/2).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    w = np.asarray(w, dtype=float)
    ss = rp.system
    cv = rp.metric.geometry.cell_volume
    keep = (ss.sigma >= alpha) & (np.arange(ss.sigma.size) < ss.rank)
    beta = cv * ss.left[:, keep].T @ w
    coef = beta / ss.sigma[keep]
    f = ss.right[:, keep] @ coef
    err = _l2(rp, rp.T.entries @ f - w)
    return RungeResult(f, err, float(np.sqrt(np.sum(coef * coef))), _l2(rp, w), int(keep.sum()), not keep.any())


def runge_bound_holds(res: RungeResult, alpha: float) -> bool:
    """|f| <= |w| / alpha, up to a few units of rounding."""
    return res.source_norm <= res.target_norm / alpha * (1 + BOUND_SLACK)


def _box_coords(geometry: Geometry, box) -> np.ndarray:
    axes = [geometry.closed_axis(i)[lo:hi] for i, (lo, hi) in enumerate(box)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([x.ravel() for x in grids], axis=1)


def box_dirichlet_solve(metric: Metric, region: Region, g_ring: np.ndarray) -> tuple[np.ndarray, tuple]:
    """a-harmonic extension of ring data into the closed box of ``region``.

    Returns the values on the closed box (flattened) and the box itself.
    """
    box, ring, inner = closed_region_nodes(region)
    K = energy_matrix(metric, box)
    u = np.zeros((K.shape[0],) + np.shape(g_ring)[1:])
    u[ring] = g_ring
    u[inner] = -np.linalg.solve(K[np.ix_(inner, inner)], K[np.ix_(inner, ring)] @ g_ring)
    return u, box


def harmonic_targets(metric: Metric, A_plus: Region, A: Region, polys: Sequence[Callable]) -> np.ndarray:
    """Solutions in A_plus with polynomial boundary data, restricted to A."""
    box, ring, _ = closed_region_nodes(A_plus)
    X = _box_coords(metric.geometry, box)
    data = np.stack([np.asarray(p(*X.T), dtype=float) * np.ones(len(X)) for p in polys], axis=1)
    u, _ = box_dirichlet_solve(metric, A_plus, data[ring])
    shape = tuple(hi - lo for lo, hi in box)
    off = 1
    sub = tuple(slice(lo + off - b0, hi + off - b0) for (lo, hi), (b0, _) in zip(A.box, box))
    return np.stack([u[:, j].reshape(shape)[sub].ravel() for j in range(u.shape[1])], axis=1)


DEFAULT_POLYS = (
    lambda *x: 1.0,
    lambda *x: x[0],
    lambda *x: x[-1],
    lambda *x: x[0] * x[-1],
    lambda *x: x[0] ** 2 - x[-1] ** 2,
)


@dataclass(frozen=True)
class TradeoffTable:
    eps: np.ndarray
    error: np.ndarray
    source_norm: np.ndarray
    alpha: np.ndarray
    reachable: np.ndarray
    mu: float


def runge_tradeoff_table(rp: RungeProblem, w: np.ndarray, eps_schedule) -> TradeoffTable:
    """For each eps the largest cutoff alpha (a singular value) giving relative error <= eps.

    mu is the slope of log|f| against log(1/eps) over reachable rows with f != 0.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    sig = rp.sigma[: rp.system.rank]
    cands = np.concatenate([[sig[0] * 2.0], sig])
    results = [runge_approximate(rp, w, a) for a in cands]
    wn = results[0].target_norm
    rows = []
    for e in eps:
        pick = None
        for a, r in zip(cands, results):
            if r.error <= e * wn:
                pick = (a, r)
                break
        if pick is None:
            a, r = cands[-1], results[-1]
            rows.append((r.error / wn, r.source_norm, a, False))
        else:
            rows.append((pick[1].error / wn, pick[1].source_norm, pick[0], True))
    err, norm, alpha, ok = (np.array(c) for c in zip(*rows))
    use = ok & (norm > 0)
    mu = float("nan")
    if use.sum() >= 2 and np.ptp(np.log(eps[use])) > 0:
        mu = float(np.polyfit(np.log(1 / eps[use]), np.log(norm[use]), 1)[0])
    return TradeoffTable(eps, err, norm, alpha, ok.astype(bool), mu)


# Dirichlet-to-Neumann maps


def ring_cycle(region: Region) -> np.ndarray:
    """Ring indices (within the closed box) ordered along the boundary cycle."""
    box, ring, _ = closed_region_nodes(region)
    shape = tuple(hi - lo for lo, hi in box)
    if len(shape) == 1:
        return np.array([0, shape[0] - 1])
    mx, my = shape
    path = [(i, 0) for i in range(mx)] + [(mx - 1, j) for j in range(1, my)]
    path += [(i, my - 1) for i in range(mx - 2, -1, -1)] + [(0, j) for j in range(my - 2, 0, -1)]
    return np.array([i * my + j for i, j in path])


def cycle_fourier(P: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Real Fourier basis on a P-cycle, orthonormal for the weight h, with frequencies."""
    k = np.arange(P)
    cols, freq = [np.full(P, 1.0 / np.sqrt(P * h))], [0]
    for m in range(1, P // 2 + 1):
        c = np.cos(2 * np.pi * m * k / P)
        cols.append(c / np.sqrt(h * np.sum(c * c)))
        freq.append(m)
        if 2 * m < P:
            sn = np.sin(2 * np.pi * m * k / P)
            cols.append(sn / np.sqrt(h * np.sum(sn * sn)))
            freq.append(m)
    return np.stack(cols, axis=1), np.array(freq, dtype=float)


@dataclass(frozen=True)
class DtNMatrix:
    """Nodal DtN map on the boundary cycle of A_plus, g -> conormal flux functional."""

    region: Region
    metric: Metric
    cycle: np.ndarray
    entries: np.ndarray
    asymmetry: float
    basis: np.ndarray
    freq: np.ndarray


def build_dtn(metric: Metric, A_plus: Region) -> DtNMatrix:
    """Schur complement of the closed-box energy matrix onto the boundary ring.

    Entry (i, j) is the energy pairing of the a-harmonic extension of the j-th
    boundary node function with any extension of the i-th one.
    """
    box, ring, inner = closed_region_nodes(A_plus)
    cyc = ring_cycle(A_plus)
    K = energy_matrix(metric, box)
    Kbb = K[np.ix_(cyc, cyc)]
    Kbi = K[np.ix_(cyc, inner)]
    Lam = Kbb - Kbi @ np.linalg.solve(K[np.ix_(inner, inner)], Kbi.T)
    asym = float(np.max(np.abs(Lam - Lam.T)))
    Lam = 0.5 * (Lam + Lam.T)
    g = metric.geometry
    if g.dim == 1:
        F, freq = np.eye(2), np.zeros(2)
    else:
        ext = A_plus.extent
        perimeter = 2 * sum(b - a for a, b in ext)
        F, freq = cycle_fourier(len(cyc), perimeter / len(cyc))
    return DtNMatrix(A_plus, metric, cyc, Lam, asym, F, freq)


def dtn_operator(d: DtNMatrix) -> OperatorMatrix:
    """DtN in boundary Fourier coordinates, H^{1/2} -> H^{-1/2} weights.

    In 1D the two boundary values carry Euclidean weights.
    """
    M = d.basis.T @ d.entries @ d.basis
    if d.metric.geometry.dim == 1:
        return OperatorMatrix(M, np.ones(2), np.ones(2), {"norm": "euclidean"})
    w = np.sqrt(1.0 + d.freq**2)
    return OperatorMatrix(M, w, 1.0 / w, {"norm": "H^1/2 -> H^-1/2"})


# Alessandrini identities


def _closed(g: Geometry, v: np.ndarray) -> np.ndarray:
    out = np.zeros(g.closed_shape)
    out[tuple(slice(1, -1) for _ in range(g.dim))] = v.reshape(g.shape)
    return out


def _grad_pairing(a: np.ndarray, u: np.ndarray, v: np.ndarray, h: tuple, dim: int) -> float:
    """sum over inner nodes of h^d grad u . a grad v with centred differences.

    ``a`` holds scalar (1D) or 2x2 tensor (2D) values on the same array as u, v.
    """
    core = tuple(slice(1, -1) for _ in range(dim))
    gu, gv = [], []
    for ax in range(dim):
        fwd = [slice(1, -1)] * dim
        bwd = [slice(1, -1)] * dim
        fwd[ax] = slice(2, None)
        bwd[ax] = slice(None, -2)
        gu.append((u[tuple(fwd)] - u[tuple(bwd)]) / (2 * h[ax]))
        gv.append((v[tuple(fwd)] - v[tuple(bwd)]) / (2 * h[ax]))
    vol = float(np.prod(h))
    if dim == 1:
        return float(vol * np.sum(a[core] * gu[0] * gv[0]))
    ac = a[core]
    total = 0.0
    for i in range(2):
        for j in range(2):
            total += np.sum(gu[i] * ac[..., i, j] * gv[j])
    return float(vol * total)


@dataclass(frozen=True)
class AlessandriniResult:
    lhs: float
    rhs: float
    residual: float


def alessandrini_residual(m1: Metric, m2: Metric, mode: str, pair, region: Region) -> AlessandriniResult:
    """Both sides of the bilinear identity for the data gap.

    ``sts``: pair = (f1, f2) sources, region = A where the metrics may differ;
    lhs = ((L1^-1 - L2^-1) f1, f2), rhs = int grad v1 . (a2 - a1) grad v2.
    ``dtn``: pair = (g1, g2) data on the ring of region = A_plus;
    lhs = <(Lam1 - Lam2) g1, g2>, rhs = int grad w1 . (a1 - a2) grad w2.
    The lhs is the exact discrete pairing; the rhs uses node-centred
    differences, so the residual is a quadrature error of order h^2.
    """
    g = m1.geometry
    if mode == "sts":
        _check_agree_outside(m1, m2, region)
        f1, f2 = (np.asarray(p, dtype=float) for p in pair)
        v1 = local_solve(m1, f1)
        v2 = local_solve(m2, f2)
        lhs = g.cell_volume * float(f2 @ (v1 - local_solve(m2, f1)))
        da = m2.coefficients - m1.coefficients
        rhs = _grad_pairing(da, _closed(g, v1), _closed(g, v2), g.spacing, g.dim)
    elif mode == "dtn":
        g1, g2 = (np.asarray(p, dtype=float) for p in pair)
        d1, d2 = build_dtn(m1, region), build_dtn(m2, region)
        _check_agree_outside(m1, m2, region)
        lhs = float(g2 @ (d1.entries - d2.entries) @ g1)
        u1, box = _cycle_solve(m1, region, d1.cycle, g1)
        u2, _ = _cycle_solve(m2, region, d2.cycle, g2)
        shape = tuple(hi - lo for lo, hi in box)
        sub = tuple(slice(lo, hi) for lo, hi in box)
        da = (m1.coefficients - m2.coefficients)[sub]
        rhs = _grad_pairing(da, u1.reshape(shape), u2.reshape(shape), g.spacing, g.dim)
    else:
        raise ValueError("mode must be 'sts' or 'dtn'")
    return AlessandriniResult(lhs, rhs, abs(lhs - rhs))


def _cycle_solve(metric: Metric, region: Region, cycle: np.ndarray, data: np.ndarray):
    box, ring, _ = closed_region_nodes(region)
    full = np.zeros(len(ring))
    pos = {int(r): i for i, r in enumerate(ring)}
    for k, c in enumerate(cycle):
        full[pos[int(c)]] = data[k]
    return box_dirichlet_solve(metric, region, full)


def refinement_order(hs, residuals) -> float:
    hs, r = np.asarray(hs, dtype=float), np.asarray(residuals, dtype=float)
    return float(np.polyfit(np.log(hs), np.log(r), 1)[0])


# metric-family experiments


@dataclass
class FamilyTable:
    tau: np.ndarray
    columns: dict
    fits: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)


def _strictly_decreasing_in_tau_down(x: np.ndarray) -> bool:
    """Along the schedule (tau decreasing) the values strictly decrease."""
    return bool(np.all(np.diff(x) < 0))


def sts_vs_dtn_experiment(
    geometry: Geometry, O: Region, A: Region, A_plus: Region, taus, J: int = 12, n_fit: int = 3, safety: float = 2.0
) -> FamilyTable:
    """Local source-to-solution gap against DtN gap along Id + tau * bump(A).

    C is ``safety`` times the largest ratio on the first ``n_fit`` rows and is
    then checked on every row; gamma is the slope of log|dLam| on log|dL1|.
    """
    taus = np.asarray(taus, dtype=float)
    base = Metric.identity(geometry)
    d = source_dictionary(O, J)
    src = dual_gram(d, base)
    L0 = local_sts_matrix(base, d, src)
    D0 = dtn_operator(build_dtn(base, A_plus))
    dl, dn = [], []
    for tau in taus:
        m = bump_metric(geometry, A, float(tau))
        dl.append(operator_norm_diff(local_sts_matrix(m, d, src), L0))
        dn.append(operator_norm_diff(dtn_operator(build_dtn(m, A_plus)), D0))
    dl, dn = np.array(dl), np.array(dn)
    C = safety * float(np.max(dl[:n_fit] / dn[:n_fit]))
    gamma = float(np.polyfit(np.log(dl), np.log(dn), 1)[0])
    checks = {
        "sts_decreasing": _strictly_decreasing_in_tau_down(dl),
        "dtn_decreasing": _strictly_decreasing_in_tau_down(dn),
        "direction_one": bool(np.all(dl <= C * dn)),
    }
    return FamilyTable(taus, {"dL1": dl, "dLam": dn}, {"C": C, "gamma": gamma}, checks)


def stability_transfer_experiment(
    s: float, geometry: Geometry, O: Region, A: Region, taus, J: int = 12, betas=TRANSFER_BETAS
) -> FamilyTable:
    """Fractional data gap eps_s against the local gap delta_1 along the family.

    Rows with eps_s >= 1/2 are dropped. For each trial beta the sup of
    delta_1 |log eps_s|^beta is reported, with a power fit delta_1 ~ eps_s^p
    and a logarithmic fit delta_1 ~ |log eps_s|^-beta.
    """
    taus = np.asarray(taus, dtype=float)
    base = Metric.identity(geometry)
    b0 = discrete_basis(base)
    d = source_dictionary(O, J)
    src1 = dual_gram(d, base)
    S0 = build_sts_matrix(s, b0, d)
    L0 = local_sts_matrix(base, d, src1)
    eps, delta = [], []
    for tau in taus:
        m = bump_metric(geometry, A, float(tau))
        bm = discrete_basis(m)
        eps.append(operator_norm_diff(build_sts_matrix(s, bm, d, src_basis=b0), S0))
        delta.append(operator_norm_diff(local_sts_matrix(m, d, src1), L0))
    eps, delta = np.array(eps), np.array(delta)
    keep = eps < 0.5
    t, e, dl = taus[keep], eps[keep], delta[keep]
    cols = {"eps_s": e, "delta_1": dl}
    for b in betas:
        cols[f"beta_{b:g}"] = dl * np.abs(np.log(e)) ** b
    fits = {"excluded": int((~keep).sum())}
    if keep.sum() >= 2:
        fits["power_p"] = float(np.polyfit(np.log(e), np.log(dl), 1)[0])
        fits["log_beta"] = float(-np.polyfit(np.log(np.abs(np.log(e))), np.log(dl), 1)[0])
        for b in betas:
            fits[f"sup_beta_{b:g}"] = float(np.max(cols[f"beta_{b:g}"]))
    checks = {
        "eps_decreasing": _strictly_decreasing_in_tau_down(e),
        "delta_decreasing": _strictly_decreasing_in_tau_down(dl),
    }
    return FamilyTable(t, cols, fits, checks)
