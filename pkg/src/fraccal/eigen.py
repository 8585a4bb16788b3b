"""Stiffness assembly, the Jacobi eigensolver and spectral bases.

The operator ``-div(a grad u)`` is discretised through its energy. In 1D each
edge carries the midpoint average ``(a_i + a_{i+1})/2``. In 2D every grid cell
is split into two right triangles; on each triangle the gradient is constant
and the tensor uses the edge-midpoint averages of ``a11`` and ``a22`` along
its two legs and the vertex mean of ``a12``. For diagonal tensors this is the
conservative five-point stencil. The lumped mass is the cell volume, so the
returned matrix ``S = K / h^d`` is symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .core import Geometry, Metric, Region

OFF_TOL = 1e-11
RESIDUAL_TOL = 1e-8
MAX_UNKNOWNS = {1: 2000, 2: 3600}
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class EigenBasis:
    """L2-orthonormal eigenvectors (columns) with ascending eigenvalues."""

    geometry: Geometry
    eigenvalues: np.ndarray
    vectors: np.ndarray
    kind: str
    mean_zero: bool = False
    metric: Metric | None = field(default=None, compare=False, repr=False)
    modes: tuple | None = field(default=None, compare=False, repr=False)

    @property
    def size(self) -> int:
        return int(self.eigenvalues.size)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Sample analytic eigenfunctions at arbitrary 1D points, (len(x), K)."""
        if self.modes is None or self.geometry.dim != 1:
            raise ValueError("pointwise evaluation needs a 1D analytic basis")
        return _analytic_1d(self.geometry, np.asarray(x, dtype=float), self.modes)

    def truncated(self, k: int) -> EigenBasis:
        if not (1 <= k <= self.size):
            raise ValueError("truncation outside basis size")
        modes = None if self.modes is None else self.modes[:k]
        return EigenBasis(
            self.geometry, self.eigenvalues[:k], self.vectors[:, :k], self.kind,
            self.mean_zero, self.metric, modes,
        )


def _fd_symbol(k: np.ndarray, h: float, L: float) -> np.ndarray:
    """Eigenvalues (2/h sin(k pi h / 2L))^2 of the Dirichlet FD Laplacian."""
    return (2.0 / h * np.sin(k * np.pi * h / (2.0 * L))) ** 2


def _analytic_1d(g: Geometry, x: np.ndarray, modes) -> np.ndarray:
    L = g.extents[0]
    cols = []
    for mode in modes:
        if g.periodic:
            m, part = mode
            arg = 2.0 * np.pi * m * x / L
            cols.append(np.sqrt(2.0 / L) * (np.cos(arg) if part == "cos" else np.sin(arg)))
        else:
            cols.append(np.sqrt(2.0 / L) * np.sin(mode * np.pi * x / L))
    return np.stack(cols, axis=1)


def analytic_basis(
    g: Geometry, K: int, mean_zero: bool = False, spectrum: str = "continuum"
) -> EigenBasis:
    """Identity-metric eigenpairs from closed forms.

    ``spectrum="continuum"`` gives the Laplacian eigenvalues and enforces the
    Nyquist guard (frequency index <= n/4 per axis). ``spectrum="discrete"``
    returns the same sampled vectors with their exact finite-difference
    eigenvalues, valid up to the grid resolution.
    """
    if spectrum not in ("continuum", "discrete"):
        raise ValueError("spectrum must be 'continuum' or 'discrete'")
    if K < 1:
        raise ValueError("K must be positive")
    if g.periodic and not mean_zero:
        raise ValueError("circle bases must be built with mean_zero=True")
    limit = [n // 4 if spectrum == "continuum" else n for n in g.n_nodes]
    h = g.spacing
    if g.kind == "interval":
        if K > limit[0]:
            raise ValueError(f"K={K} exceeds the resolution guard {limit[0]}")
        k = np.arange(1, K + 1)
        L = g.extents[0]
        lam = (k * np.pi / L) ** 2 if spectrum == "continuum" else _fd_symbol(k, h[0], L)
        modes = tuple(int(v) for v in k)
        vec = _analytic_1d(g, g.axis(0), modes)
        return EigenBasis(g, lam, vec, "analytic", False, None, modes)
    if g.kind == "circle":
        n = g.n_nodes[0]
        mmax = n // 4 if spectrum == "continuum" else (n - 1) // 2
        if K > 2 * mmax:
            raise ValueError(f"K={K} exceeds the resolution guard {2 * mmax}")
        L = g.extents[0]
        m = np.repeat(np.arange(1, (K + 1) // 2 + 1), 2)[:K]
        parts = ["cos", "sin"] * ((K + 1) // 2)
        modes = tuple((int(mi), p) for mi, p in zip(m, parts[:K]))
        if spectrum == "continuum":
            lam = (2 * np.pi * m / L) ** 2
        else:
            lam = (2.0 / h[0] * np.sin(np.pi * m * h[0] / L)) ** 2
        vec = _analytic_1d(g, g.axis(0), modes)
        return EigenBasis(g, lam.astype(float), vec, "analytic", True, None, modes)
    # rectangle: tensor products sorted by eigenvalue, ties by (kx, ky)
    (Lx, Ly), (nx, ny) = g.extents, g.n_nodes
    kx = np.arange(1, limit[0] + 1)
    ky = np.arange(1, limit[1] + 1)
    if spectrum == "continuum":
        lx, ly = (kx * np.pi / Lx) ** 2, (ky * np.pi / Ly) ** 2
    else:
        lx, ly = _fd_symbol(kx, h[0], Lx), _fd_symbol(ky, h[1], Ly)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    LAM = lx[KX - 1] + ly[KY - 1]
    order = np.lexsort((KY.ravel(), KX.ravel(), LAM.ravel()))
    if K > order.size:
        raise ValueError("K exceeds the resolution guard")
    chosen = order[:K]
    cutoff = min(lx[-1] + ly[0], lx[0] + ly[-1]) if spectrum == "continuum" else np.inf
    if LAM.ravel()[chosen[-1]] >= cutoff and K < order.size:
        raise ValueError("K exceeds the resolution guard along one axis")
    X, Y = g.axis(0), g.axis(1)
    vecs = []
    modes = []
    for idx in chosen:
        a, b = int(KX.ravel()[idx]), int(KY.ravel()[idx])
        fx = np.sqrt(2.0 / Lx) * np.sin(a * np.pi * X / Lx)
        fy = np.sqrt(2.0 / Ly) * np.sin(b * np.pi * Y / Ly)
        vecs.append(np.outer(fx, fy).ravel())
        modes.append((a, b))
    return EigenBasis(g, LAM.ravel()[chosen].astype(float), np.stack(vecs, axis=1), "analytic", False, None, tuple(modes))


def _triangles(shape: tuple[int, int]):
    """Vertex index triples (corner, x-neighbour, y-neighbour) of all triangles.

    The lower triangle of cell (i, j) has its right angle at (i, j); the upper
    one at (i+1, j+1). Gradients are (u[xn] - u[c]) / hx, (u[yn] - u[c]) / hy
    up to the sign fixed by the orientation array.
    """
    nx, ny = shape
    I, J = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    flat = lambda i, j: i * ny + j
    lower = np.stack([flat(I, J), flat(I + 1, J), flat(I, J + 1)], axis=1)
    upper = np.stack([flat(I + 1, J + 1), flat(I, J + 1), flat(I + 1, J)], axis=1)
    return lower, upper


def _energy_2d(coeff: np.ndarray, h: tuple[float, float]) -> np.ndarray:
    """Energy matrix on a closed 2D node box from nodal tensors (nx, ny, 2, 2)."""
    nx, ny = coeff.shape[:2]
    a11, a12, a22 = coeff[..., 0, 0].ravel(), coeff[..., 0, 1].ravel(), coeff[..., 1, 1].ravel()
    hx, hy = h
    area = 0.5 * hx * hy
    N = nx * ny
    K = np.zeros((N, N))
    for tri in _triangles((nx, ny)):
        c, xn, yn = tri[:, 0], tri[:, 1], tri[:, 2]
        t11 = 0.5 * (a11[c] + a11[xn])
        t22 = 0.5 * (a22[c] + a22[yn])
        t12 = (a12[c] + a12[xn] + a12[yn]) / 3.0
        # gradient rows over local vertices (c, xn, yn); orientation sign
        # cancels in the quadratic form, so both triangles share it
        gx = np.array([-1.0, 1.0, 0.0]) / hx
        gy = np.array([-1.0, 0.0, 1.0]) / hy
        local = (
            t11[:, None, None] * np.outer(gx, gx)
            + t22[:, None, None] * np.outer(gy, gy)
            + t12[:, None, None] * (np.outer(gx, gy) + np.outer(gy, gx))
        ) * area
        if np.any(t11 * t22 - t12**2 <= 0):
            raise ValueError("triangle tensor is not positive definite")
        rows = np.repeat(tri, 3, axis=1)
        cols = np.tile(tri, (1, 3))
        np.add.at(K, (rows.ravel(), cols.ravel()), local.reshape(len(tri), 9).ravel())
    return K


def _energy_1d(coeff: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    n = coeff.size
    K = np.zeros((n, n))
    if periodic:
        i = np.arange(n)
        j = (i + 1) % n
    else:
        i = np.arange(n - 1)
        j = i + 1
    w = 0.5 * (coeff[i] + coeff[j]) / h
    np.add.at(K, (i, i), w)
    np.add.at(K, (j, j), w)
    np.add.at(K, (i, j), -w)
    np.add.at(K, (j, i), -w)
    return K


def energy_matrix(metric: Metric, closed_box: tuple[tuple[int, int], ...] | None = None) -> np.ndarray:
    """Energy (stiffness) matrix on a box of closed-grid nodes, half-open ranges."""
    g = metric.geometry
    a = metric.coefficients
    if closed_box is not None:
        a = a[tuple(slice(lo, hi) for lo, hi in closed_box)]
    if g.dim == 1:
        return _energy_1d(a, g.spacing[0], g.periodic and closed_box is None)
    return _energy_2d(a, g.spacing)


def assemble_stiffness(metric: Metric) -> np.ndarray:
    """Symmetric matrix of -div(a grad) on the stored nodes."""
    g = metric.geometry
    if g.size > MAX_UNKNOWNS[g.dim]:
        raise ValueError(f"grid has {g.size} unknowns, cap is {MAX_UNKNOWNS[g.dim]}")
    K = energy_matrix(metric)
    if not g.periodic:
        inner = np.zeros(g.closed_shape, dtype=bool)
        inner[tuple(slice(1, -1) for _ in range(g.dim))] = True
        idx = np.nonzero(inner.ravel())[0]
        K = K[np.ix_(idx, idx)]
    S = K / g.cell_volume
    return 0.5 * (S + S.T)


def closed_region_nodes(region: Region) -> tuple[tuple[tuple[int, int], ...], np.ndarray, np.ndarray]:
    """Closed-grid box of a region with its closure ring.

    Returns the box, the flat indices (within that box) of the boundary ring
    and of the interior nodes.
    """
    g = region.geometry
    off = 0 if g.periodic else 1
    box = tuple((lo + off - 1, hi + off + 1) for lo, hi in region.box)
    shape = tuple(hi - lo for lo, hi in box)
    ring = np.ones(shape, dtype=bool)
    ring[tuple(slice(1, -1) for _ in shape)] = False
    flat = ring.ravel()
    return box, np.nonzero(flat)[0], np.nonzero(~flat)[0]


def symmetric_eig(S: np.ndarray, tol: float = OFF_TOL, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a dense symmetric matrix.

    Returns ascending eigenvalues and orthonormal eigenvector columns; each
    column's largest-magnitude entry (first on ties) is made positive.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix has non-finite entries")
    scale = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > 1e-14 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    if S.shape[0] == 1:
        return S[0].copy(), np.ones((1, 1))
    w, V, sweeps = kernels.jacobi_eigh(0.5 * (S + S.T), tol, max_sweeps)
    if sweeps >= max_sweeps:
        raise RuntimeError("Jacobi did not converge")
    order = np.argsort(w, kind="stable")
    w, V = w[order], V[:, order]
    lead = np.argmax(np.abs(V) > (1 - 1e-9) * np.abs(V).max(axis=0), axis=0)
    V = V * np.sign(V[lead, np.arange(V.shape[1])])
    resid = np.linalg.norm(S @ V - V * w)
    if resid > RESIDUAL_TOL * max(scale, 1e-300):
        raise RuntimeError(f"eigen residual {resid:.3e} above tolerance")
    return w, V


def _align_clusters(lam: np.ndarray, vec: np.ndarray, ref: np.ndarray, weight: float):
    """Make eigenvectors deterministic against a reference orthonormal basis.

    Within clusters of (relatively) equal eigenvalues the vectors are rotated
    onto the reference directions they overlap most, ordered by the index of
    the dominant reference mode; every vector gets a positive dominant
    coefficient.
    """
    coef = weight * ref.T @ vec
    n = lam.size
    out = vec.copy()
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and abs(lam[stop] - lam[start]) <= TIE_RTOL * max(abs(lam[start]), 1.0):
            stop += 1
        block = slice(start, stop)
        if stop - start > 1:
            c = coef[:, block]
            weight_per_mode = np.sum(c * c, axis=1)
            picks = np.sort(np.argsort(-weight_per_mode, kind="stable")[: stop - start])
            u, _, vt = np.linalg.svd(c[picks].T)
            rot = u @ vt
            out[:, block] = vec[:, block] @ rot
            coef[:, block] = weight * ref.T @ out[:, block]
        start = stop
    dominant = np.argmax(np.abs(coef), axis=0)
    out *= np.sign(coef[dominant, np.arange(n)])
    return out, dominant


def discrete_basis(metric: Metric, K: int | None = None) -> EigenBasis:
    """First K eigenpairs of the discrete operator, L2-normalised.

    The circle drops its constant null mode. Degenerate eigenvalues are
    ordered by the dominant identity-metric mode they resemble.
    """
    g = metric.geometry
    S = assemble_stiffness(metric)
    w_node = g.cell_volume
    lam, V = symmetric_eig(S)
    V = V / np.sqrt(w_node)
    mean_zero = g.periodic
    if g.periodic:
        lam, V = lam[1:], V[:, 1:]
    total = lam.size
    K = total if K is None else int(K)
    if not (1 <= K <= total):
        raise ValueError(f"K must lie in [1, {total}]")
    n_ref = total
    if g.periodic:
        n_ref = 2 * ((g.n_nodes[0] - 1) // 2)
    ref = analytic_basis(g, n_ref, mean_zero=mean_zero, spectrum="discrete").vectors
    V, _ = _align_clusters(lam, V, ref, w_node)
    return EigenBasis(g, lam[:K].copy(), V[:, :K].copy(), "discrete", mean_zero, metric)
