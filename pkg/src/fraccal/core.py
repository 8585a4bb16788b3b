"""Grids, node-box regions, nodal fields and conductivity metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

KINDS = ("interval", "rectangle", "circle")
LABELS = ("O", "O_plus", "A", "A_plus", "O_prime")
MIN_NODES = 8


@dataclass(frozen=True)
class Geometry:
    """Uniform grid on an interval, a rectangle (both Dirichlet) or a circle.

    Dirichlet grids store interior nodes only: ``x_i = i*h`` for
    ``i = 1..n`` with ``h = L/(n+1)``. The circle stores ``x_i = i*h`` for
    ``i = 0..n-1`` with ``h = L/n``. Flattened node order is C order.
    """

    kind: str
    extents: tuple[float, ...]
    n_nodes: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")
        dim = 2 if self.kind == "rectangle" else 1
        if len(self.extents) != dim or len(self.n_nodes) != dim:
            raise ValueError(f"{self.kind} needs {dim} extents and node counts")
        if any(not np.isfinite(e) or e <= 0 for e in self.extents):
            raise ValueError("extents must be positive")
        if any(int(n) != n or n < MIN_NODES for n in self.n_nodes):
            raise ValueError(f"need at least {MIN_NODES} nodes per axis")

    @classmethod
    def interval(cls, length: float, n: int) -> Geometry:
        return cls("interval", (float(length),), (int(n),))

    @classmethod
    def rectangle(cls, lengths: Sequence[float], n: Sequence[int]) -> Geometry:
        return cls("rectangle", tuple(float(v) for v in lengths), tuple(int(v) for v in n))

    @classmethod
    def circle(cls, length: float, n: int) -> Geometry:
        return cls("circle", (float(length),), (int(n),))

    @property
    def dim(self) -> int:
        return len(self.n_nodes)

    @property
    def periodic(self) -> bool:
        return self.kind == "circle"

    @property
    def boundary(self) -> str:
        return "periodic" if self.periodic else "dirichlet"

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.periodic:
            return (self.extents[0] / self.n_nodes[0],)
        return tuple(L / (n + 1) for L, n in zip(self.extents, self.n_nodes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.n_nodes))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n_nodes)

    def axis(self, i: int) -> np.ndarray:
        """Stored node coordinates along axis ``i``."""
        h = self.spacing[i]
        if self.periodic:
            return np.arange(self.n_nodes[i]) * h
        return np.arange(1, self.n_nodes[i] + 1) * h

    def closed_axis(self, i: int) -> np.ndarray:
        """Node coordinates including the Dirichlet boundary nodes."""
        if self.periodic:
            return self.axis(i)
        return np.arange(self.n_nodes[i] + 2) * self.spacing[i]

    @property
    def closed_shape(self) -> tuple[int, ...]:
        if self.periodic:
            return self.shape
        return tuple(n + 2 for n in self.n_nodes)

    def nodes(self) -> np.ndarray:
        """Flattened node coordinates, shape (size, dim)."""
        grids = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


@dataclass(frozen=True)
class Region:
    """Axis-aligned box of stored nodes, given as half-open index ranges.

    For Dirichlet grids the box must leave at least one stored node on each
    side, so its closure (one node further out) is still interior. Sub-box
    eigenfunctions then vanish on the closure ring, and the physical extent
    is ``(x[lo-1], x[hi])``.
    """

    geometry: Geometry
    box: tuple[tuple[int, int], ...]
    label: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"unknown region label {self.label!r}")
        if len(self.box) != self.geometry.dim:
            raise ValueError("box dimension does not match geometry")
        for (lo, hi), n in zip(self.box, self.geometry.n_nodes):
            if not (1 <= lo < hi <= n - 1):
                raise ValueError(f"region {self.label} empty or touching the boundary")

    @classmethod
    def from_box(
        cls, geometry: Geometry, bounds: Sequence[tuple[float, float]], label: str
    ) -> Region:
        """Region of stored nodes strictly inside the physical box ``bounds``."""
        box = []
        tol = 1e-9 * max(geometry.spacing)
        for i, (a, b) in enumerate(bounds):
            x = geometry.axis(i)
            inside = np.nonzero((x > a + tol) & (x < b - tol))[0]
            if inside.size == 0:
                raise ValueError(f"region {label} contains no nodes")
            box.append((int(inside[0]), int(inside[-1]) + 1))
        return cls(geometry, tuple(box), label)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in self.box)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def extent(self) -> tuple[tuple[float, float], ...]:
        """Physical box spanned by the closure ring."""
        out = []
        for i, (lo, hi) in enumerate(self.box):
            h = self.geometry.spacing[i]
            x = self.geometry.axis(i)
            out.append((float(x[lo] - h), float(x[hi - 1] + h)))
        return tuple(out)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.geometry.shape, dtype=bool)
        m[tuple(slice(lo, hi) for lo, hi in self.box)] = True
        return m.ravel()

    def indices(self) -> np.ndarray:
        return np.nonzero(self.mask())[0]

    def contains(self, other: Region) -> bool:
        return all(a[0] <= b[0] and b[1] <= a[1] for a, b in zip(self.box, other.box))

    def contains_closure(self, other: Region) -> bool:
        """True when ``other`` together with its closure ring sits inside self."""
        return all(a[0] <= b[0] - 1 and b[1] + 1 <= a[1] for a, b in zip(self.box, other.box))

    def disjoint(self, other: Region) -> bool:
        return any(a[1] <= b[0] or b[1] <= a[0] for a, b in zip(self.box, other.box))

    def closure_disjoint(self, other: Region) -> bool:
        """True when no node of either box lies in the other's closure (rings may touch)."""
        return any(a[1] < b[0] or b[1] < a[0] for a, b in zip(self.box, other.box))


@dataclass(frozen=True)
class ScalarField:
    """Nodal values on the whole grid, or on a region when ``region`` is set."""

    geometry: Geometry
    values: np.ndarray
    region: Region | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        expected = self.region.size if self.region is not None else self.geometry.size
        if vals.shape != (expected,):
            raise ValueError(f"field has {vals.shape} values, expected ({expected},)")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)


def inner_product_l2(u: ScalarField | np.ndarray, v: ScalarField | np.ndarray, geometry: Geometry | None = None) -> float:
    """Discrete L2 pairing with uniform cell-volume weights."""
    if isinstance(u, ScalarField):
        geometry = u.geometry
        if isinstance(v, ScalarField) and (v.geometry != u.geometry or v.region != u.region):
            raise ValueError("fields live on different grids or regions")
    if geometry is None:
        raise ValueError("geometry required for raw arrays")
    a = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    b = v.values if isinstance(v, ScalarField) else np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return float(geometry.cell_volume * np.dot(a, b))


def restrict(u: ScalarField, region: Region) -> ScalarField:
    if u.region is not None:
        raise ValueError("field is already restricted")
    if region.geometry != u.geometry:
        raise ValueError("region belongs to another grid")
    return ScalarField(u.geometry, u.values[region.mask()], region)


def extend_by_zero(u: ScalarField) -> ScalarField:
    if u.region is None:
        raise ValueError("field is not restricted to a region")
    full = np.zeros(u.geometry.size)
    full[u.region.mask()] = u.values
    return ScalarField(u.geometry, full)


@dataclass(frozen=True)
class Metric:
    """Conductivity sampled on the closed grid (boundary nodes included).

    Coefficient shapes: ``closed_shape`` for scalar 1D metrics and
    ``closed_shape + (2, 2)`` for symmetric tensors in 2D. ``theta`` is the
    ellipticity constant; every node must satisfy
    ``theta <= eig(a) <= 1/theta``. If ``identity_outside`` is given, nodes
    outside that region's box must carry the identity.
    """

    geometry: Geometry
    coefficients: np.ndarray
    theta: float = 0.5
    identity_outside: Region | None = None
    source: Callable | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        a = np.asarray(self.coefficients, dtype=float)
        g = self.geometry
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        want = g.closed_shape if g.dim == 1 else g.closed_shape + (2, 2)
        if a.shape != want:
            raise ValueError(f"metric coefficients have shape {a.shape}, expected {want}")
        if not np.all(np.isfinite(a)):
            raise ValueError("metric coefficients must be finite")
        if g.dim == 1:
            lo, hi = a, a
        else:
            if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0.0, atol=1e-14):
                raise ValueError("metric tensor is not symmetric")
            ev = np.linalg.eigvalsh(a)
            lo, hi = ev[..., 0], ev[..., -1]
        slack = 1e-12
        if np.any(lo < self.theta * (1 - slack)) or np.any(hi > (1 + slack) / self.theta):
            raise ValueError("metric violates the ellipticity sandwich")
        if self.identity_outside is not None:
            outside = np.ones(g.closed_shape, dtype=bool)
            off = 0 if g.periodic else 1
            outside[tuple(slice(lo_ + off, hi_ + off) for lo_, hi_ in self.identity_outside.box)] = False
            eye = 1.0 if g.dim == 1 else np.eye(2)
            if np.max(np.abs(a[outside] - eye), initial=0.0) > 1e-14:
                raise ValueError("metric differs from the identity outside its region")
        object.__setattr__(self, "coefficients", a)

    @classmethod
    def identity(cls, geometry: Geometry, theta: float = 1.0) -> Metric:
        shape = geometry.closed_shape
        if geometry.dim == 1:
            coeff = np.ones(shape)
        else:
            coeff = np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        return cls(geometry, coeff, theta)

    @classmethod
    def from_function(
        cls,
        geometry: Geometry,
        func: Callable,
        theta: float = 0.5,
        identity_outside: Region | None = None,
    ) -> Metric:
        """Sample ``func`` on the closed grid.

        In 2D ``func(x, y)`` may return scalars (isotropic) or (..., 2, 2).
        """
        axes = [geometry.closed_axis(i) for i in range(geometry.dim)]
        if geometry.dim == 1:
            coeff = np.asarray(func(axes[0]), dtype=float) * np.ones(axes[0].shape)
        else:
            X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
            val = np.asarray(func(X, Y), dtype=float)
            if val.shape == X.shape:
                val = val[..., None, None] * np.eye(2)
            coeff = val
        return cls(geometry, coeff, theta, identity_outside, func)

    def scaled(self, factor: float, theta: float | None = None) -> Metric:
        return Metric(self.geometry, self.coefficients * factor, theta or self.theta, None)

    def scalar_part(self) -> np.ndarray:
        """Coefficient at stored nodes (1D) or the tensor at stored nodes (2D)."""
        if self.geometry.periodic:
            return self.coefficients
        return self.coefficients[tuple(slice(1, -1) for _ in range(self.geometry.dim))]
