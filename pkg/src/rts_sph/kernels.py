"""Smoothing kernels for SPH density and force evaluation.

The usual kernel triple for particle liquids: poly6 for density sums,
the spiky kernel gradient for pressure forces (its gradient does not
vanish as particles approach, which prevents clustering), and the
viscosity kernel Laplacian, which is non-negative inside the support so
shear forces always damp relative motion. All three have compact
support of radius ``h`` and are identically zero outside it.

The scalar ``@njit`` helpers are the single source of the formulas used
inside the compiled particle loops; :class:`KernelSet` wraps the same
math in vectorized form for tests, demos, and anything array-shaped.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = ["KernelSet", "poly6_w", "spiky_grad_scale", "viscosity_lap"]


@njit(inline="always")
def poly6_w(r2, h2, c_poly6):
    """Poly6 kernel value from a squared distance.

    c_poly6 = 315 / (64 pi h^9). Zero at and beyond the support radius.
    """
    d = h2 - r2
    if d <= 0.0:
        return 0.0
    return c_poly6 * d * d * d


@njit(inline="always")
def spiky_grad_scale(r, h, c_spiky):
    """Scalar factor s(r) such that grad W_spiky(x_ij) = s(r) * x_ij.

    c_spiky = -45 / (pi h^6); the returned factor is c_spiky*(h-r)^2/r,
    negative inside the support, so s(r)*x_ij points from i toward j
    (downhill). Zero at r = 0 and outside the support.
    """
    if r <= 0.0 or r >= h:
        return 0.0
    d = h - r
    return c_spiky * d * d / r


@njit(inline="always")
def viscosity_lap(r, h, c_visc):
    """Laplacian of the viscosity kernel; c_visc = 45 / (pi h^6)."""
    d = h - r
    if d <= 0.0:
        return 0.0
    return c_visc * d


@dataclass
class KernelSet:
    """Precomputed kernel constants for a support radius ``h``.

    All vectorized methods accept numpy arrays and return zeros outside
    the support, so callers never need to mask distances themselves.
    """

    h: float
    h2: float = field(init=False)
    c_poly6: float = field(init=False)
    c_spiky: float = field(init=False)
    c_visc: float = field(init=False)

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError("kernel support radius must be positive")
        h = float(self.h)
        self.h = h
        self.h2 = h * h
        self.c_poly6 = 315.0 / (64.0 * np.pi * h**9)
        self.c_spiky = -45.0 / (np.pi * h**6)
        self.c_visc = 45.0 / (np.pi * h**6)

    # ------------------------------------------------------------------
    # vectorized forms
    # ------------------------------------------------------------------

    def density(self, r):
        """Poly6 kernel W(r); accepts scalars or arrays of distances."""
        r = np.asarray(r, dtype=np.float64)
        d = np.clip(self.h2 - r * r, 0.0, None)
        return self.c_poly6 * d**3

    def grad_pressure(self, offsets):
        """Spiky kernel gradient for offset vectors x_i - x_j.

        offsets has shape (..., 3); the result has the same shape. The
        gradient points along -offset inside the support (repulsive
        pressure convention) and is zero at the origin.
        """
        offsets = np.asarray(offsets, dtype=np.float64)
        r = np.linalg.norm(offsets, axis=-1)
        d = np.where((r > 0.0) & (r < self.h), self.h - r, 0.0)
        scale = self.c_spiky * d * d / np.maximum(r, 1e-300)
        return scale[..., None] * offsets

    def laplacian_viscosity(self, r):
        """Viscosity kernel Laplacian; non-negative inside the support."""
        r = np.asarray(r, dtype=np.float64)
        return np.where(r < self.h, self.c_visc * np.clip(self.h - r, 0.0, None), 0.0)
