"""Partitions of [0,1], piecewise-constant projection/injection, and discrete norms.

Cells are left-open right-closed ]x_{i-1}, x_i]; the point x=0 is assigned
to the first cell.  Cell averaging of the singular power-law kernel uses
exact double antiderivatives, never quadrature near the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    ConstantKernel,
    ConvolutionPowerLaw,
    KernelSpec,
    SeparableSmooth,
    TabulatedKernel,
)

DENSE_KERNEL_CAP = 4096


class NonFiniteValue(Exception):
    """Quadrature produced NaN or infinity."""


class UnsupportedSingularity(Exception):
    """Cell averaging has no closed form for this singular kernel."""


class MeshMismatch(Exception):
    """Operands live on different meshes."""


@dataclass(frozen=True)
class Mesh:
    """Partition 0 = x_0 < x_1 < ... < x_n = 1 of the unit interval."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        object.__setattr__(self, "boundaries", b)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("mesh needs at least one cell")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must increase strictly from 0 to 1")

    @property
    def n(self) -> int:
        return len(self.boundaries) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def delta(self) -> float:
        """Largest cell size."""
        return float(self.widths.max())

    def cell_index(self, x):
        """Index of the cell ]x_{i-1}, x_i] containing x; x=0 maps to cell 0."""
        idx = np.searchsorted(self.boundaries, x, side="left") - 1
        return np.clip(idx, 0, self.n - 1)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])


def uniform_mesh(n: int) -> Mesh:
    if n < 1:
        raise ValueError("n must be positive")
    return Mesh(np.linspace(0.0, 1.0, n + 1))


@dataclass
class GridFunction:
    """Cell-averaged state: one value per mesh cell."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n,):
            raise ValueError(f"expected {self.mesh.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteValue("grid function values must be finite")
        self.values = v

    def copy(self) -> "GridFunction":
        return GridFunction(self.mesh, self.values.copy())


@dataclass(frozen=True)
class DiscreteKernel:
    """Symmetric nonnegative cell-averaged kernel matrix on a mesh."""

    mesh: Mesh
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        n = self.mesh.n
        if m.shape != (n, n):
            raise ValueError(f"kernel matrix must be {n}x{n}")
        if n > DENSE_KERNEL_CAP:
            raise ValueError(f"dense kernel storage capped at n={DENSE_KERNEL_CAP}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteValue("kernel matrix entries must be finite")
        if np.any(m < 0):
            raise ValueError("kernel matrix must be nonnegative")
        if not np.array_equal(m, m.T):
            raise ValueError("kernel matrix must be symmetric")
        object.__setattr__(self, "matrix", m)


_gauss_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_rule(order: int):
    if order not in _gauss_cache:
        x, w = np.polynomial.legendre.leggauss(order)
        _gauss_cache[order] = (x, w)
    return _gauss_cache[order]


def _cell_averages(f, mesh: Mesh, order: int) -> np.ndarray:
    """Gauss-Legendre cell averages of f, vectorized over all cells."""
    x, w = _gauss_rule(order)
    a = mesh.boundaries[:-1][:, None]
    h = mesh.widths[:, None]
    pts = a + 0.5 * h * (x[None, :] + 1.0)
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape != pts.shape:
        vals = np.broadcast_to(vals, pts.shape)
    return 0.5 * vals @ w


def project_function(f, mesh: Mesh, quadrature_order: int = 8) -> GridFunction:
    """Piecewise-constant projection: per-cell averages (1/h_i) int_cell f."""
    avg = _cell_averages(f, mesh, quadrature_order)
    if not np.all(np.isfinite(avg)):
        raise NonFiniteValue("projection produced non-finite cell averages")
    return GridFunction(mesh, avg)


def inject_eval(u: GridFunction, x) -> float:
    """Piecewise-constant injection of u evaluated at x."""
    return u.values[u.mesh.cell_index(x)]


def project_kernel(kernel: KernelSpec, mesh: Mesh, quadrature_order: int = 8) -> DiscreteKernel:
    """Cell-averaged kernel matrix K_ij = (1/(h_i h_j)) int int_{cell i x cell j} K.

    The power-law family uses exact double antiderivatives (finite on
    diagonal cells for beta < 1); smooth variants use Gauss quadrature.
    """
    n = mesh.n
    b = mesh.boundaries
    h = mesh.widths

    if isinstance(kernel, ConstantKernel):
        m = np.full((n, n), float(kernel.c))
    elif isinstance(kernel, ConvolutionPowerLaw):
        # With c_beta = (1-beta)(2-beta)/2, the double antiderivative of
        # c_beta |z|^(-beta) is H(z) = |z|^(2-beta) / 2, valid through z=0.
        e = 2.0 - kernel.beta

        def H(z):
            return 0.5 * np.abs(z) ** e

        lo = b[:-1]
        hi = b[1:]
        m = (
            H(hi[:, None] - lo[None, :])
            - H(hi[:, None] - hi[None, :])
            - H(lo[:, None] - lo[None, :])
            + H(lo[:, None] - hi[None, :])
        ) / (h[:, None] * h[None, :])
    elif isinstance(kernel, SeparableSmooth):
        av = _cell_averages(kernel.a, mesh, quadrature_order)
        m = np.outer(av, av)
    elif isinstance(kernel, TabulatedKernel):
        if kernel.table.mesh.n != n or not np.array_equal(kernel.table.mesh.boundaries, b):
            raise MeshMismatch("tabulated kernel lives on a different mesh")
        m = kernel.table.matrix.copy()
    else:
        raise UnsupportedSingularity(f"cannot cell-average kernel {kernel!r}")

    if not np.all(np.isfinite(m)):
        raise NonFiniteValue("kernel cell averaging produced non-finite entries")
    m = 0.5 * (m + m.T)
    return DiscreteKernel(mesh, m)


def norm_lq(u: GridFunction, q) -> float:
    """Mesh-weighted l^q norm, equal to the L^q norm of the injected function."""
    v = np.abs(u.values)
    if q is np.inf or q == np.inf:
        return float(v.max()) if len(v) else 0.0
    if q < 1:
        raise ValueError("q must be >= 1")
    h = u.mesh.widths
    return float((h @ v**q) ** (1.0 / q))


def matrix_norm_linf_q(kd: DiscreteKernel, q) -> float:
    """L^{inf,q} norm of the injected kernel: max_i (sum_j h_j K_ij^q)^(1/q)."""
    m = kd.matrix
    if q is np.inf or q == np.inf:
        return float(m.max()) if m.size else 0.0
    if q not in (1, 2):
        raise ValueError("q must be one of 1, 2, inf")
    h = kd.mesh.widths
    return float(((m**q) @ h).max() ** (1.0 / q))


def modulus_of_smoothness(f, h: float, q, samples: int = 32, grid: int = 4096) -> float:
    """Grid estimate of the first-order L^q modulus of smoothness at scale h.

    sup over shifts |z| < h of the L^q norm of f(.+z) - f(.) restricted to
    the overlap of [0,1] with its shifted copy.  Diagnostic only: its decay
    in h predicts the smoothness exponent governing spatial rates.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xs = (np.arange(grid) + 0.5) / grid
    fx = np.asarray(f(xs), dtype=float)
    best = 0.0
    for z in np.linspace(0.0, h, samples + 1)[1:]:
        mask = xs + z <= 1.0
        if not mask.any():
            continue
        diff = np.abs(np.asarray(f(xs[mask] + z), dtype=float) - fx[mask])
        if q is np.inf or q == np.inf:
            val = float(diff.max())
        else:
            val = float((np.sum(diff**q) / grid) ** (1.0 / q))
        best = max(best, val)
    return best
