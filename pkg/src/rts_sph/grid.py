"""Uniform block grid: particle binning, candidate search, block maxima.

Blocks are cubes of edge ``r`` (the kernel support for synchronous
stepping, a slightly larger 2.2*spacing for PCISPH major steps). The
grid covers the domain box plus enough padding to hold the boundary
shell. Binning is a stable counting sort over linearized block ids, so
member order inside a block is ascending particle index and every
downstream reduction is order-deterministic.

Boundary particles are culled before binning: one participates only if
a fluid particle occupies its block or one of the 26 adjacent blocks.
Per-block fields (occupancy, regions, maxima) are small dense arrays of
shape ``dims`` since desk-scale domains stay a few thousand blocks.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .errors import NumericalError

__all__ = ["BlockGrid", "neighbor_min", "dilate_mask"]


# ----------------------------------------------------------------------
# dense 3-D stencil helpers (shared with region assignment)
# ----------------------------------------------------------------------


def neighbor_min(field: np.ndarray, pad_value) -> np.ndarray:
    """Minimum over each cell's 26 adjacent cells (self excluded)."""
    padded = np.pad(field, 1, constant_values=pad_value)
    out = np.full_like(field, pad_value)
    nx, ny, nz = field.shape
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                view = padded[1 + dx : 1 + dx + nx, 1 + dy : 1 + dy + ny, 1 + dz : 1 + dz + nz]
                np.minimum(out, view, out=out)
    return out


def dilate_mask(mask: np.ndarray, layers: int = 1) -> np.ndarray:
    """Chebyshev dilation of a boolean mask by ``layers`` blocks."""
    out = mask
    nx, ny, nz = mask.shape
    for _ in range(layers):
        padded = np.pad(out, 1, constant_values=False)
        acc = out.copy()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    if dx == dy == dz == 0:
                        continue
                    acc |= padded[1 + dx : 1 + dx + nx, 1 + dy : 1 + dy + ny, 1 + dz : 1 + dz + nz]
        out = acc
    return out


# ----------------------------------------------------------------------
# compiled kernels
# ----------------------------------------------------------------------


@njit(cache=True)
def _counting_sort(cell_ids, n_cells):
    """Stable counting sort; returns (starts, order) CSR over cells."""
    n = cell_ids.shape[0]
    starts = np.zeros(n_cells + 1, dtype=np.int64)
    for k in range(n):
        starts[cell_ids[k] + 1] += 1
    for c in range(n_cells):
        starts[c + 1] += starts[c]
    fill = starts[:-1].copy()
    order = np.empty(n, dtype=np.int64)
    for k in range(n):
        c = cell_ids[k]
        order[fill[c]] = k
        fill[c] += 1
    return starts, order


@njit(cache=True, parallel=True)
def _search_neighbors(
    pos,
    starts,
    order,
    nx,
    ny,
    nz,
    origin,
    inv_r,
    h2,
    refresh,
    layers,
    nbr,
    cnt,
):
    """Fill fixed-width neighbor tables for the particles in ``refresh``.

    Candidates come from the (2L+1)^3 blocks around each particle's
    current position; only true neighbors (squared distance < h2,
    including the particle itself) are stored. Returns the number of
    entries dropped to table overflow (0 in a healthy run).
    """
    nmax = nbr.shape[1]
    overflow = 0
    for t in prange(refresh.shape[0]):
        i = refresh[t]
        lay = layers[t]
        cx = int((pos[i, 0] - origin[0]) * inv_r)
        cy = int((pos[i, 1] - origin[1]) * inv_r)
        cz = int((pos[i, 2] - origin[2]) * inv_r)
        if cx < 0:
            cx = 0
        elif cx >= nx:
            cx = nx - 1
        if cy < 0:
            cy = 0
        elif cy >= ny:
            cy = ny - 1
        if cz < 0:
            cz = 0
        elif cz >= nz:
            cz = nz - 1
        n = 0
        lost = 0
        for ax in range(max(0, cx - lay), min(nx, cx + lay + 1)):
            for ay in range(max(0, cy - lay), min(ny, cy + lay + 1)):
                base = (ax * ny + ay) * nz
                for az in range(max(0, cz - lay), min(nz, cz + lay + 1)):
                    c = base + az
                    for k in range(starts[c], starts[c + 1]):
                        j = order[k]
                        dx = pos[i, 0] - pos[j, 0]
                        dy = pos[i, 1] - pos[j, 1]
                        dz = pos[i, 2] - pos[j, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 < h2:
                            if n < nmax:
                                nbr[i, n] = j
                                n += 1
                            else:
                                lost += 1
        cnt[i] = n
        overflow += lost
    return overflow


@njit(cache=True)
def _reduce_max(values, cell_ids, out):
    for k in range(values.shape[0]):
        c = cell_ids[k]
        v = values[k]
        if v > out[c]:
            out[c] = v
    return out


@njit(cache=True, parallel=True)
def _count_missing(
    pos,
    starts,
    order,
    nx,
    ny,
    nz,
    origin,
    inv_r,
    h2,
    refresh,
    nbr,
    cnt,
):
    """Count true neighbors absent from the freshly built tables.

    ``starts``/``order`` must come from an exhaustive grid built at the
    same positions (block edge >= support radius, one layer searched),
    so every true neighbor is among its candidates.
    """
    missing = 0
    for t in prange(refresh.shape[0]):
        i = refresh[t]
        cx = min(max(int((pos[i, 0] - origin[0]) * inv_r), 0), nx - 1)
        cy = min(max(int((pos[i, 1] - origin[1]) * inv_r), 0), ny - 1)
        cz = min(max(int((pos[i, 2] - origin[2]) * inv_r), 0), nz - 1)
        lost = 0
        for ax in range(max(0, cx - 1), min(nx, cx + 2)):
            for ay in range(max(0, cy - 1), min(ny, cy + 2)):
                base = (ax * ny + ay) * nz
                for az in range(max(0, cz - 1), min(nz, cz + 2)):
                    c = base + az
                    for k in range(starts[c], starts[c + 1]):
                        j = order[k]
                        dx = pos[i, 0] - pos[j, 0]
                        dy = pos[i, 1] - pos[j, 1]
                        dz = pos[i, 2] - pos[j, 2]
                        if dx * dx + dy * dy + dz * dz < h2:
                            found = False
                            for q in range(cnt[i]):
                                if nbr[i, q] == j:
                                    found = True
                                    break
                            if not found:
                                lost += 1
        missing += lost
    return missing


# ----------------------------------------------------------------------
# grid object
# ----------------------------------------------------------------------


class BlockGrid:
    """Block decomposition of the (padded) domain at a fixed block edge."""

    def __init__(self, domain_min, domain_max, block_size: float, pad: float = 0.0):
        lo = np.asarray(domain_min, dtype=np.float64) - pad
        hi = np.asarray(domain_max, dtype=np.float64) + pad
        self.block_size = float(block_size)
        self.inv_block = 1.0 / self.block_size
        self.origin = lo
        self.dims = tuple(
            max(1, int(math.ceil((h - l) / self.block_size - 1e-12))) for l, h in zip(lo, hi)
        )
        self.n_cells = int(np.prod(self.dims))
        nf = 0
        self.n_fluid = nf
        self.fluid_cells: np.ndarray | None = None
        self.starts: np.ndarray | None = None
        self.order: np.ndarray | None = None
        self.occupancy: np.ndarray | None = None
        self.boundary_active: np.ndarray | None = None

    @classmethod
    def for_scene(cls, scene, mode: str) -> "BlockGrid":
        pad = scene.boundary_layers * scene.spacing
        return cls(scene.domain_min, scene.domain_max, scene.block_size(mode), pad=pad)

    # ------------------------------------------------------------------

    def cell_coords(self, positions: np.ndarray) -> np.ndarray:
        c = np.floor((positions - self.origin) * self.inv_block).astype(np.int64)
        return np.clip(c, 0, np.asarray(self.dims) - 1)

    def cell_ids(self, positions: np.ndarray) -> np.ndarray:
        c = self.cell_coords(positions)
        _, ny, nz = self.dims
        return (c[:, 0] * ny + c[:, 1]) * nz + c[:, 2]

    def rebuild(self, pos: np.ndarray, n_fluid: int) -> None:
        """Re-bin particles; ``pos`` holds fluid rows first, boundary after.

        Fluid positions outside the padded grid abort the run (the wall
        clamp should make that impossible); boundary particles with no
        fluid in their own or an adjacent block are culled from the
        candidate structure.
        """
        fluid = pos[:n_fluid]
        lo = self.origin
        hi = self.origin + np.asarray(self.dims) * self.block_size
        bad = ~np.all((fluid >= lo) & (fluid <= hi), axis=1) | ~np.isfinite(fluid).all(axis=1)
        if bad.any():
            raise NumericalError(
                f"{int(bad.sum())} fluid particle(s) left the simulation domain "
                f"(first index {int(np.flatnonzero(bad)[0])})"
            )
        self.n_fluid = n_fluid
        self.fluid_cells = self.cell_ids(fluid)
        counts = np.bincount(self.fluid_cells, minlength=self.n_cells)
        self.occupancy = (counts > 0).reshape(self.dims)

        if len(pos) > n_fluid:
            allowed = dilate_mask(self.occupancy, 1).ravel()
            bcells = self.cell_ids(pos[n_fluid:])
            self.boundary_active = allowed[bcells]
            included = np.concatenate(
                [np.arange(n_fluid), n_fluid + np.flatnonzero(self.boundary_active)]
            )
            ids = np.concatenate([self.fluid_cells, bcells[self.boundary_active]])
        else:
            self.boundary_active = np.zeros(0, dtype=bool)
            included = np.arange(n_fluid)
            ids = self.fluid_cells
        starts, local_order = _counting_sort(ids, self.n_cells)
        self.starts = starts
        self.order = included[local_order]

    # ------------------------------------------------------------------

    def search_into(
        self,
        pos: np.ndarray,
        refresh: np.ndarray,
        layers: np.ndarray,
        h: float,
        nbr: np.ndarray,
        cnt: np.ndarray,
    ) -> None:
        """Refresh the neighbor tables of ``refresh`` at current positions."""
        if self.starts is None:
            raise RuntimeError("grid not built; call rebuild() first")
        if refresh.size == 0:
            return
        nx, ny, nz = self.dims
        overflow = _search_neighbors(
            pos,
            self.starts,
            self.order,
            nx,
            ny,
            nz,
            self.origin,
            self.inv_block,
            h * h,
            refresh,
            layers,
            nbr,
            cnt,
        )
        if overflow:
            raise NumericalError(
                f"neighbor table overflow: {int(overflow)} entries dropped "
                f"(table width {nbr.shape[1]}); the particle distribution has collapsed"
            )

    def neighbors(self, pos: np.ndarray, point_index: int, layers: int = 1) -> np.ndarray:
        """Candidate indices around one particle (superset of true neighbors)."""
        if self.starts is None:
            raise RuntimeError("grid not built; call rebuild() first")
        nx, ny, nz = self.dims
        cx, cy, cz = self.cell_coords(pos[point_index : point_index + 1])[0]
        out = []
        for ax in range(max(0, cx - layers), min(nx, cx + layers + 1)):
            for ay in range(max(0, cy - layers), min(ny, cy + layers + 1)):
                for az in range(max(0, cz - layers), min(nz, cz + layers + 1)):
                    c = (ax * ny + ay) * nz + az
                    out.append(self.order[self.starts[c] : self.starts[c + 1]])
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def reduce_fluid_max(self, values: np.ndarray) -> np.ndarray:
        """Per-block maximum of a fluid scalar; zeros in fluid-free blocks."""
        out = np.zeros(self.n_cells)
        _reduce_max(values, self.fluid_cells, out)
        return out

    def count_missing_neighbors(
        self,
        pos: np.ndarray,
        n_fluid: int,
        refresh: np.ndarray,
        h: float,
        nbr: np.ndarray,
        cnt: np.ndarray,
    ) -> int:
        """Audit freshly refreshed tables against an exhaustive fresh grid."""
        if refresh.size == 0:
            return 0
        oracle = BlockGrid(
            self.origin,
            self.origin + np.asarray(self.dims) * self.block_size,
            max(h, self.block_size),
        )
        oracle.rebuild(pos[:n_fluid], n_fluid)
        # Re-include every boundary particle: the audit must see the same
        # passive neighbors the solver can see.
        if len(pos) > n_fluid:
            ids = np.concatenate([oracle.fluid_cells, oracle.cell_ids(pos[n_fluid:])])
            starts, local_order = _counting_sort(ids, oracle.n_cells)
            oracle.starts = starts
            oracle.order = local_order
        nx, ny, nz = oracle.dims
        return int(
            _count_missing(
                pos,
                oracle.starts,
                oracle.order,
                nx,
                ny,
                nz,
                oracle.origin,
                oracle.inv_block,
                h * h,
                refresh,
                nbr,
                cnt,
            )
        )
