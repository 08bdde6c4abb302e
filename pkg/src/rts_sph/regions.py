"""Region assignment: per-block time steps and the derived block sets.

A region id n means the block's particles step at n times the base step.
Assignment picks the largest n whose step length passes the stability
criteria (sound-speed bound, force bound, velocity fraction bound); all
three are monotone in n, so the passing set is always a prefix 1..n*.

On top of the raw field sit three block-level refinements:
  * smoothing: blocks bordering a smaller-step region drop to that
    neighbor's step so the step size never jumps across one block edge;
  * fast-region expansion: regions 1 and 2 grow outward a few layers so
    fast particles stay inside a conservatively stepped zone;
  * observed blocks: blocks bordering a smaller-step region (on the
    larger side) or bordering error blocks, whose particles are watched
    for density disruption during partial corrections.

All fields are dense arrays over the grid dims; empty blocks hold 0.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import dilate_mask, neighbor_min

__all__ = [
    "assign_regions",
    "smooth_regions",
    "expand_fast_regions",
    "derive_observed",
]

_EMPTY = 127  # stand-in region for empty blocks in min-stencils


def assign_regions(
    v_max: np.ndarray,
    f_max: np.ndarray,
    occupied: np.ndarray,
    *,
    dt_base: float,
    block_size: float,
    particle_mass: float,
    sound_speed: float,
    lambda_v: float,
    lambda_f: float,
    alpha: float,
    betas,
    n_max: int,
    use_sound_criterion: bool,
) -> np.ndarray:
    """Per-block region ids from per-block maxima.

    ``v_max``/``f_max``/``occupied`` are flat arrays over the grid cells.
    A zero maximum force means the force bound does not constrain the
    step. Returns int8 region ids, 0 for empty blocks.
    """
    region = np.where(occupied, np.int8(1), np.int8(0))
    r = block_size
    for n in range(2, n_max + 1):
        dt_n = n * dt_base
        ok = occupied & (region == n - 1)
        if use_sound_criterion:
            if not dt_n <= lambda_v * r / sound_speed:
                break
        with np.errstate(divide="ignore", over="ignore"):
            force_bound = lambda_f * np.sqrt(r * particle_mass / f_max)
        ok = ok & ((f_max == 0.0) | (dt_n <= force_bound))
        beta_n = betas[n]
        if math.isfinite(beta_n):
            ok = ok & (dt_n * v_max / r <= alpha * beta_n)
        region[ok] = n
    return region


def smooth_regions(region: np.ndarray, dims) -> tuple[np.ndarray, np.ndarray]:
    """One min-with-neighbors pass over the pre-assignment field.

    Every occupied block takes min(own, min of 26 occupied neighbors),
    read entirely from the input field so block order cannot matter.
    Returns (new field, mask of blocks whose region dropped).
    """
    field = region.reshape(dims)
    pre = np.where(field > 0, field, np.int8(_EMPTY))
    nm = neighbor_min(pre, np.int8(_EMPTY))
    new = np.minimum(field, nm)
    new[field == 0] = 0
    rmin = (new < field).ravel()
    return new.ravel(), rmin


def expand_fast_regions(region: np.ndarray, dims, layers: int = 4) -> np.ndarray:
    """Grow regions 1 and 2 by ``layers`` blocks of 26-adjacency.

    The growth is geometric (a Chebyshev ball), passing through empty
    blocks, but only occupied blocks with a larger region are rewritten.
    Region 1 wins where both expansions land.
    """
    field = region.reshape(dims)
    new = field.copy()
    near2 = dilate_mask(field == 2, layers)
    new[(field > 2) & near2] = 2
    near1 = dilate_mask(field == 1, layers)
    new[(field > 1) & near1] = 1
    return new.ravel()


def derive_observed(region: np.ndarray, dims, error_blocks: np.ndarray) -> np.ndarray:
    """Mask of observed blocks for the final region field.

    A block is observed when it is occupied and either borders a block
    with a strictly smaller region (it sits on the larger-step side of a
    transition) or borders an error block without being one itself.
    """
    field = region.reshape(dims)
    occupied = field > 0
    pre = np.where(occupied, field, np.int8(_EMPTY))
    nm = neighbor_min(pre, np.int8(_EMPTY))
    observed = occupied & (nm < field)
    err = error_blocks.reshape(dims)
    if err.any():
        observed |= occupied & dilate_mask(err, 1) & ~err
    return observed.ravel()
