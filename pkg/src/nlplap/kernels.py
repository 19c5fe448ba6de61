"""Continuum interaction kernels on [0,1]^2 and their integral norms.

A kernel is a symmetric nonnegative function K(x, y).  The singular
convolution family |x-y|^(-beta) is handled with closed-form
antiderivatives; smooth families fall back to quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DivergentNorm(Exception):
    """Requested integral norm does not exist (integral diverges)."""


def _powerlaw_coeff(beta: float) -> float:
    return 0.5 * (1.0 - beta) * (2.0 - beta)


@dataclass(frozen=True)
class ConvolutionPowerLaw:
    """K(x, y) = c_beta * |x - y|^(-beta) with c_beta = (1-beta)(2-beta)/2.

    Singular on the diagonal but integrable for beta in (0, 1); the
    normalization makes the total integral over the unit square equal 1.
    """

    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0,1), got {self.beta}")

    def __call__(self, x, y):
        z = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        with np.errstate(divide="ignore"):
            return _powerlaw_coeff(self.beta) * z ** (-self.beta)


@dataclass(frozen=True)
class ConstantKernel:
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("constant kernel must be nonnegative")

    def __call__(self, x, y):
        return np.broadcast_to(np.float64(self.c), np.broadcast(np.asarray(x), np.asarray(y)).shape).copy()


@dataclass(frozen=True)
class SeparableSmooth:
    """K(x, y) = a(x) * a(y) for a smooth positive profile a.

    Default profile a(x) = 1 + x.  Bounded and smooth, so it serves as
    the canonical regular test kernel for rate studies.
    """

    a: Callable[[np.ndarray], np.ndarray] = field(default=lambda x: 1.0 + np.asarray(x, dtype=float))
    description: str = "a(x) = 1 + x"

    def __call__(self, x, y):
        return np.asarray(self.a(x), dtype=float) * np.asarray(self.a(y), dtype=float)


@dataclass(frozen=True)
class TabulatedKernel:
    """Piecewise-constant kernel backed by a cell-averaged matrix.

    ``table`` is a DiscreteKernel (see nlplap.meshes); evaluation injects
    the matrix back onto [0,1]^2.
    """

    table: object  # DiscreteKernel; typed loosely to avoid a module cycle

    def __call__(self, x, y):
        mesh = self.table.mesh
        i = mesh.cell_index(x)
        j = mesh.cell_index(y)
        return self.table.matrix[i, j]


KernelSpec = ConvolutionPowerLaw | ConstantKernel | SeparableSmooth | TabulatedKernel


def eval_kernel(kernel: KernelSpec, x: float, y: float) -> float:
    """Evaluate K(x, y); returns +inf on the diagonal of a singular kernel."""
    return float(np.asarray(kernel(x, y)))


def norm_linf_q(kernel: KernelSpec, q, resolution: int = 2048) -> float:
    """sup_x (int |K(x,y)|^q dy)^(1/q) for q in {1, 2, inf}.

    Closed form for the power-law family (the sup is attained at x=1/2);
    quadrature on a fine grid otherwise.  Raises DivergentNorm when the
    slice integral does not exist.
    """
    if q not in (1, 2, np.inf):
        raise ValueError(f"q must be one of 1, 2, inf; got {q}")

    if isinstance(kernel, ConvolutionPowerLaw):
        b = kernel.beta
        c = _powerlaw_coeff(b)
        if q is np.inf or q == np.inf:
            raise DivergentNorm("power-law kernel is unbounded")
        if q * b >= 1.0:
            raise DivergentNorm(f"|z|^(-{q}*{b}) is not integrable near z=0")
        # int_0^1 |x-y|^(-q b) dy = (x^(1-qb) + (1-x)^(1-qb)) / (1-qb), maximal at x = 1/2.
        s = 1.0 - q * b
        val = c**q * 2.0 * 0.5**s / s
        return float(val ** (1.0 / q))

    if isinstance(kernel, ConstantKernel):
        return float(kernel.c)

    if isinstance(kernel, TabulatedKernel):
        from .meshes import matrix_norm_linf_q

        return matrix_norm_linf_q(kernel.table, q)

    # SeparableSmooth: sup_x a(x) * ||a||_q on a fine grid.
    xs = (np.arange(resolution) + 0.5) / resolution
    ax = np.asarray(kernel.a(xs), dtype=float)
    amax = float(ax.max())
    if q is np.inf or q == np.inf:
        return amax * amax
    aq = float(np.mean(ax**q) ** (1.0 / q))
    return amax * aq


def norm_l1(kernel: KernelSpec, resolution: int = 2048) -> float:
    """Total integral of K over the unit square."""
    if isinstance(kernel, ConvolutionPowerLaw):
        # Closed form: the normalization was chosen to make this exactly 1.
        b = kernel.beta
        return float(_powerlaw_coeff(b) * 2.0 / ((1.0 - b) * (2.0 - b)))
    if isinstance(kernel, ConstantKernel):
        return float(kernel.c)
    if isinstance(kernel, TabulatedKernel):
        kd = kernel.table
        h = kd.mesh.widths
        return float(h @ kd.matrix @ h)
    xs = (np.arange(resolution) + 0.5) / resolution
    ia = float(np.mean(np.asarray(kernel.a(xs), dtype=float)))
    return ia * ia


def kernel_from_config(variant: str, params: dict) -> KernelSpec:
    """Build a kernel from flat config keys (kernel.variant, kernel.beta, kernel.c)."""
    variant = variant.lower()
    if variant in ("powerlaw", "convolutionpowerlaw", "power_law"):
        return ConvolutionPowerLaw(beta=float(params.get("beta", 0.5)))
    if variant == "constant":
        return ConstantKernel(c=float(params.get("c", 1.0)))
    if variant in ("separable", "separablesmooth", "separable_smooth"):
        return SeparableSmooth()
    raise ValueError(f"unknown kernel variant '{variant}'")
