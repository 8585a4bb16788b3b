"""Spectral fractional operators, source dictionaries and weighted SVDs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Region, ScalarField
from .eigen import EigenBasis, symmetric_eig

MEAN_TOL = 1e-10
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SpectralCoeffs:
    basis: EigenBasis
    values: np.ndarray


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def analyze(u, basis: EigenBasis) -> SpectralCoeffs:
    """Coefficients against the L2-orthonormal basis.

    Accepts a field or an array whose first axis runs over the nodes.
    """
    v = _vals(u)
    if v.shape[0] != basis.geometry.size:
        raise ValueError("field does not live on the basis grid")
    return SpectralCoeffs(basis, basis.geometry.cell_volume * (basis.vectors.T @ v))


def synthesize(c: SpectralCoeffs) -> np.ndarray:
    return c.basis.vectors @ c.values


def _power(lam: np.ndarray, s: float, periodic: bool) -> np.ndarray:
    if np.any(lam <= 0):
        raise ValueError("basis contains a non-positive eigenvalue")
    return lam**s


def apply_frac(s: float, u, basis: EigenBasis) -> np.ndarray:
    """L^s u through the basis (negative s gives the inverse powers)."""
    c = analyze(u, basis)
    scale = _power(basis.eigenvalues, s, basis.geometry.periodic)
    return basis.vectors @ (scale.reshape((-1,) + (1,) * (c.values.ndim - 1)) * c.values)


def check_mean_zero(f, geometry) -> None:
    v = _vals(f)
    mean = geometry.cell_volume * v.sum(axis=0)
    norm = np.sqrt(geometry.cell_volume * np.sum(v * v, axis=0))
    length = np.sqrt(np.prod(geometry.extents))
    if np.any(np.abs(mean) > MEAN_TOL * np.maximum(norm, 1e-300) * length):
        raise ValueError("periodic source must have zero mean")


def solve_sts(s: float, f, basis: EigenBasis) -> np.ndarray:
    """Source-to-solution map u = L^{-s} f."""
    if basis.geometry.periodic:
        check_mean_zero(f, basis.geometry)
    return apply_frac(-s, f, basis)


def sobolev_weights(basis: EigenBasis, r: float) -> np.ndarray:
    """lam^r on Dirichlet grids, (1 + lam)^r on the circle."""
    lam = basis.eigenvalues
    return (1.0 + lam) ** r if basis.geometry.periodic else lam**r


def sobolev_norm(r: float, c: SpectralCoeffs) -> float:
    return float(np.sqrt(np.sum(sobolev_weights(c.basis, r) * c.values**2)))


@dataclass(frozen=True)
class SourceDict:
    """Zero-extended sub-box Dirichlet eigenfunctions of a region (columns)."""

    region: Region
    elements: np.ndarray
    eigenvalues: np.ndarray
    modes: tuple

    @property
    def size(self) -> int:
        return self.elements.shape[1]


def _sub_sines(m: int, h: float, js) -> np.ndarray:
    ell = (m + 1) * h
    i = np.arange(1, m + 1)
    return np.stack([np.sqrt(2.0 / ell) * np.sin(j * np.pi * i / (m + 1)) for j in js], axis=1)


def _sub_cosines(m: int, h: float, js) -> np.ndarray:
    ell = m * h
    i = np.arange(m)
    cols = []
    for j in js:
        if j == 0:
            cols.append(np.full(m, 1.0 / np.sqrt(ell)))
        else:
            cols.append(np.sqrt(2.0 / ell) * np.cos(j * np.pi * (i + 0.5) / m))
    return np.stack(cols, axis=1)


def _tensor_modes(shape, h, J, start, count_fn, lam_fn):
    """First J tensor index pairs sorted by eigenvalue then index."""
    pairs = [(a, b) for a in range(start, count_fn(0)) for b in range(start, count_fn(1))]
    lam = [lam_fn(0, a) + lam_fn(1, b) for a, b in pairs]
    order = sorted(range(len(pairs)), key=lambda k: (lam[k], pairs[k]))[:J]
    if len(order) < J:
        raise ValueError("region too small for the requested count")
    return [pairs[k] for k in order], np.array([lam[k] for k in order])


def source_dictionary(region: Region, J: int, mean_zero: bool = False) -> SourceDict:
    """First J sub-box Dirichlet eigenfunctions of ``region``, zero-extended.

    With ``mean_zero`` (circle sources) only even sine indices are used; their
    discrete means vanish exactly.
    """
    g = region.geometry
    h = g.spacing
    full = np.zeros((g.size, J))
    mask = region.mask()
    if g.dim == 1:
        m = region.shape[0]
        js = list(range(2, 2 * J + 1, 2)) if mean_zero else list(range(1, J + 1))
        if js[-1] > m:
            raise ValueError(f"region has {m} nodes, too few for {J} sub-box modes")
        ell = (m + 1) * h[0]
        full[mask] = _sub_sines(m, h[0], js)
        lam = (np.array(js) * np.pi / ell) ** 2
        return SourceDict(region, full, lam, tuple(js))
    if mean_zero:
        raise ValueError("mean-zero dictionaries exist on the circle only")
    (mx, my) = region.shape
    ells = [(mx + 1) * h[0], (my + 1) * h[1]]
    pairs, lam = _tensor_modes(
        region.shape, h, J, 1, lambda ax: region.shape[ax] + 1,
        lambda ax, j: (j * np.pi / ells[ax]) ** 2,
    )
    sx = _sub_sines(mx, h[0], range(1, mx + 1))
    sy = _sub_sines(my, h[1], range(1, my + 1))
    for col, (a, b) in enumerate(pairs):
        full[mask, col] = np.outer(sx[:, a - 1], sy[:, b - 1]).ravel()
    return SourceDict(region, full, lam, tuple(pairs))


def trace_basis(region: Region, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Sub-box Neumann eigenvectors on the region nodes and their eigenvalues.

    Columns are orthonormal in the discrete L2 pairing on the region.
    """
    g = region.geometry
    h = g.spacing
    if g.dim == 1:
        m = region.shape[0]
        if J > m:
            raise ValueError("region too small for the requested trace count")
        js = list(range(J))
        return _sub_cosines(m, h[0], js), (np.array(js) * np.pi / (m * h[0])) ** 2
    mx, my = region.shape
    ells = [mx * h[0], my * h[1]]
    pairs, lam = _tensor_modes(
        region.shape, h, J, 0, lambda ax: region.shape[ax],
        lambda ax, j: (j * np.pi / ells[ax]) ** 2,
    )
    cx = _sub_cosines(mx, h[0], range(mx))
    cy = _sub_cosines(my, h[1], range(my))
    cols = [np.outer(cx[:, a], cy[:, b]).ravel() for a, b in pairs]
    return np.stack(cols, axis=1), lam


def dictionary_gram(dictionary: SourceDict, basis: EigenBasis, r: float) -> np.ndarray:
    """Gram matrix of the dictionary in the dual norm H^{-r} of the ambient basis."""
    c = analyze(dictionary.elements, basis).values
    w = sobolev_weights(basis, -r)
    G = c.T @ (w[:, None] * c)
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class OperatorMatrix:
    """Operator in (target, source) coordinates with SPD Gram weights.

    Norms are ``|x|^2 = x^T G x``; a 1D weight array stands for a diagonal
    Gram matrix.
    """

    entries: np.ndarray
    src_gram: np.ndarray
    tgt_gram: np.ndarray
    meta: dict = field(default_factory=dict)


def build_sts_matrix(
    s: float,
    basis: EigenBasis,
    dictionary: SourceDict,
    target: str = "cosine",
    n_trace: int | None = None,
    src_order: float | None = None,
    tgt_order: float | None = None,
    src_basis: EigenBasis | None = None,
) -> OperatorMatrix:
    """Matrix of f -> (L^{-s} f)|_O on the dictionary of O.

    ``target="cosine"`` projects traces on the Neumann cosines of O with
    weights (1 + nu_j)^tgt_order (an H^r(O) norm); ``target="dict"`` pairs
    them with the dictionary itself. Source weights are the H^{-src_order}
    Gram of the zero extensions measured in ``src_basis`` (default: basis).
    """
    J = dictionary.size
    if basis.size < min(8 * J, basis.geometry.size):
        raise ValueError("basis too small for the dictionary (need K >= 8J)")
    src_order = s if src_order is None else src_order
    tgt_order = s if tgt_order is None else tgt_order
    u = solve_sts(s, dictionary.elements, basis)
    mask = dictionary.region.mask()
    w = basis.geometry.cell_volume
    if target == "cosine":
        psi, nu = trace_basis(dictionary.region, n_trace or J)
        entries = w * psi.T @ u[mask]
        tgt = (1.0 + nu) ** tgt_order
    elif target == "dict":
        entries = w * dictionary.elements[mask].T @ u[mask]
        tgt = np.ones(J)
    else:
        raise ValueError("target must be 'cosine' or 'dict'")
    src = dictionary_gram(dictionary, src_basis or basis, src_order)
    return OperatorMatrix(entries, src, tgt, {"s": s, "target": target})


@dataclass(frozen=True)
class SingularSystem:
    """Weighted singular triplets.

    ``right[:, j]`` are source coordinates orthonormal in the source Gram,
    ``left[:, j]`` target coordinates orthonormal in the target Gram, and
    ``op.entries @ right[:, j] = sigma[j] * left[:, j]``. ``rank`` counts
    the values above RANK_RTOL * sigma_1, the range where they are resolved.
    """

    sigma: np.ndarray
    left: np.ndarray
    right: np.ndarray
    rank: int


def _chol_upper(G: np.ndarray) -> np.ndarray:
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        if np.any(G <= 0):
            raise ValueError("weights must be positive")
        return np.diag(np.sqrt(G))
    return np.linalg.cholesky(G).T


def singular_values_square(C: np.ndarray):
    """SVD of a square matrix from the Jacobi eigenpairs of [[0, C], [C^T, 0]].

    The augmented matrix keeps absolute accuracy eps*|C| for every singular
    value, which the normal matrix C^T C would square away.
    """
    p = C.shape[0]
    H = np.zeros((2 * p, 2 * p))
    H[:p, p:] = C
    H[p:, :p] = C.T
    w, V = symmetric_eig(H)
    top = np.argsort(-w, kind="stable")[:p]
    sigma = np.abs(w[top])
    order = np.argsort(-sigma, kind="stable")
    top, sigma = top[order], sigma[order]
    right = np.sqrt(2.0) * V[p:, top]
    q, r = np.linalg.qr(right)
    right = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    floor = 64 * np.finfo(float).eps * max(sigma[0], 1e-300) * p
    rank = int(np.sum(sigma > floor))
    left = np.zeros((p, p))
    left[:, :rank] = (C @ right[:, :rank]) / sigma[:rank]
    if rank < p:
        q, _ = np.linalg.qr(np.hstack([left[:, :rank], np.eye(p)]))
        left[:, rank:] = q[:, rank:p]
    return sigma, left, right, rank


def weighted_entries(op: OperatorMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Rt = _chol_upper(op.tgt_gram)
    Rs = _chol_upper(op.src_gram)
    B = Rt @ np.linalg.solve(Rs.T, op.entries.T).T
    return B, Rt, Rs


def svd(op: OperatorMatrix) -> SingularSystem:
    """Singular system of Rt M Rs^{-1}, with G = R^T R for both Grams."""
    B, Rt, Rs = weighted_entries(op)
    m, n = B.shape
    if m >= n:
        Q, R = np.linalg.qr(B)
        sigma, ul, vr, rank = singular_values_square(R)
        U, Vw = Q @ ul, vr
    else:
        Q, R = np.linalg.qr(B.T)
        sigma, ul, vr, rank = singular_values_square(R.T)
        U, Vw = ul, Q @ vr
    left = np.linalg.solve(Rt, U)
    right = np.linalg.solve(Rs, Vw)
    rank = int(np.sum(sigma >= RANK_RTOL * sigma[0])) if sigma[0] > 0 else 0
    return SingularSystem(sigma, left, right, rank)


def operator_norm(op: OperatorMatrix) -> float:
    return float(svd(op).sigma[0])


def operator_norm_diff(op1: OperatorMatrix, op2: OperatorMatrix) -> float:
    """Largest weighted singular value of op1 - op2 (weights must agree)."""
    if op1.entries.shape != op2.entries.shape:
        raise ValueError("operator shapes differ")
    for a, b in ((op1.src_gram, op2.src_gram), (op1.tgt_gram, op2.tgt_gram)):
        if np.shape(a) != np.shape(b) or not np.allclose(a, b, rtol=1e-12, atol=0.0):
            raise ValueError("operators carry different weights")
    return operator_norm(OperatorMatrix(op1.entries - op2.entries, op1.src_gram, op1.tgt_gram))
