"""Weakly compressible SPH, synchronous or regionally time-stepped.

Both modes share one step path: neighbor search, density and Tait
pressure, symmetric pressure plus viscosity forces, then a predictor
applied to every particle and a corrector applied to particles whose
true step just ended. The baseline runs that path with every particle
active at a global adaptive step; the regional mode runs it at the base
step with only expired-validity (or pre-empted) particles active, so the
two produce bit-identical trajectories when every block is pinned to
region 1 and the baseline step is capped at the base step.

The corrector needs the time since each particle's previous force
evaluation; ``dt_since`` accumulates predictor lengths and is snapshot
into ``dt_corr`` whenever a particle recomputes, which makes substepping
an exact interpolation for constant acceleration.
"""

from __future__ import annotations

import math
import time

import numpy as np
from numba import njit, prange

from .errors import NumericalError
from .grid import BlockGrid
from .kernels import KernelSet, poly6_w, spiky_grad_scale, viscosity_lap
from .regions import assign_regions, smooth_regions
from .scene import TAIT_GAMMA, Scene, seed_particles
from .stats import StepStats

__all__ = ["WcsphSolver", "tait_pressure", "NEIGHBOR_WIDTH"]

NEIGHBOR_WIDTH = 128


def tait_pressure(rho: float, rest_density: float, sound_speed: float) -> float:
    """Stiff equation of state, clamped so free surfaces carry no suction."""
    b = rest_density * sound_speed * sound_speed / TAIT_GAMMA
    p = b * ((rho / rest_density) ** TAIT_GAMMA - 1.0)
    return p if p > 0.0 else 0.0


@njit(cache=True, parallel=True)
def _density_pressure(pos, nbr, cnt, idx, mass, h2, c_poly6, b_stiff, rho0, rho, pres):
    for t in prange(idx.shape[0]):
        i = idx[t]
        acc = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            acc += poly6_w(dx * dx + dy * dy + dz * dz, h2, c_poly6)
        r = mass * acc
        rho[i] = r
        ratio = r / rho0
        p = b_stiff * (ratio**7 - 1.0)
        pres[i] = p if p > 0.0 else 0.0


@njit(cache=True, parallel=True)
def _forces(pos, vel, nbr, cnt, idx, mass, h, c_spiky, c_visc, mu, rho0, n_fluid, rho, pres, grav, force):
    m2 = mass * mass
    inv_rho0_sq = 1.0 / (rho0 * rho0)
    for t in prange(idx.shape[0]):
        i = idx[t]
        rho_i = rho[i]
        p_i = pres[i]
        term_i = p_i / (rho_i * rho_i)
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            if j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r >= h:
                continue
            if j < n_fluid:
                rho_j = rho[j]
                term = term_i + pres[j] / (rho_j * rho_j)
                s = m2 * term * spiky_grad_scale(r, h, c_spiky)
                fx -= s * dx
                fy -= s * dy
                fz -= s * dz
                lap = mu * m2 * viscosity_lap(r, h, c_visc) / (rho_i * rho_j)
                fx += lap * (vel[j, 0] - vel[i, 0])
                fy += lap * (vel[j, 1] - vel[i, 1])
                fz += lap * (vel[j, 2] - vel[i, 2])
            else:
                # static wall sample: mirrored pressure at rest density
                term = term_i + p_i * inv_rho0_sq
                s = m2 * term * spiky_grad_scale(r, h, c_spiky)
                fx -= s * dx
                fy -= s * dy
                fz -= s * dz
        force[i, 0] = fx + mass * grav[0]
        force[i, 1] = fy + mass * grav[1]
        force[i, 2] = fz + mass * grav[2]


class WcsphSolver:
    """Driver for one scene; ``mode`` is "baseline" or "rts".

    ``dt_cap`` bounds the baseline's adaptive step (defaults to the
    scene base step, which also keeps the regional mode's region-1 step
    and the baseline step identical). ``pin_region`` forces every
    occupied block to one region, and ``apply_correction`` can disable
    the end-of-true-step correction; both exist for controlled
    experiments.
    """

    mode_names = ("baseline", "rts")

    def __init__(
        self,
        scene: Scene,
        mode: str = "rts",
        dt_cap: float | None = None,
        pin_region: int | None = None,
        apply_correction: bool = True,
        track_rho_variance: bool = False,
        audit_neighbors: bool = False,
        n_regions: int = 4,
    ):
        if mode not in self.mode_names:
            raise ValueError(f"unknown wcsph mode {mode!r}")
        self.scene = scene
        self.mode = mode
        self.pin_region = pin_region
        self.apply_correction = apply_correction
        self.track_rho_variance = track_rho_variance
        self.audit_neighbors = audit_neighbors
        self.n_regions = n_regions

        self.kernel = KernelSet(scene.support_radius)
        self.dt_base = scene.base_dt("wcsph")
        self.dt_cap = self.dt_base if dt_cap is None else dt_cap
        self.mass = scene.particle_mass
        self.mu = scene.viscosity * scene.rest_density
        self.b_stiff = scene.rest_density * scene.sound_speed**2 / TAIT_GAMMA
        self.betas = scene.betas(n_regions)
        self.alpha = scene.alpha_for("wcsph")

        fluid, boundary = seed_particles(scene)
        self.n_fluid = len(fluid)
        self.pos = np.concatenate([fluid, boundary]) if len(boundary) else fluid.copy()
        nf = self.n_fluid
        self.vel = np.zeros((nf, 3))
        self.acc = np.zeros((nf, 3))
        self.acc_prev = np.zeros((nf, 3))
        self.force = np.zeros((nf, 3))
        self.rho = np.full(nf, scene.rest_density)
        self.pres = np.zeros(nf)
        self.dt_since = np.zeros(nf)
        self.dt_corr = np.zeros(nf)
        self.validity = np.zeros(nf, dtype=np.int32)
        self.region = np.ones(nf, dtype=np.int8)
        self.compute = np.ones(nf, dtype=bool)
        self.nbr = np.zeros((nf, NEIGHBOR_WIDTH), dtype=np.int64)
        self.cnt = np.zeros(nf, dtype=np.int64)

        self.grid = BlockGrid.for_scene(scene, "wcsph")
        self.gravity = np.asarray(scene.gravity)
        self._clamp_lo = np.asarray(scene.domain_min) + 0.1 * scene.spacing
        self._clamp_hi = np.asarray(scene.domain_max) - 0.1 * scene.spacing

        self.step_index = 0
        self.sim_time = 0.0
        self.missed_neighbors_total = 0
        self._missed_last = 0
        self._timers = {"neighbor": 0.0, "physics": 0.0, "rts": 0.0}

    # ------------------------------------------------------------------

    def cfl_bound(self) -> float:
        """Global adaptive step bound (uncapped) from current maxima."""
        scene = self.scene
        r = self.grid.block_size
        eq1 = scene.lambda_v * r / scene.sound_speed
        f_max = float(np.max(np.linalg.norm(self.force, axis=1))) if self.n_fluid else 0.0
        eq2 = scene.lambda_f * math.sqrt(r * self.mass / f_max) if f_max > 0.0 else math.inf
        return min(eq1, eq2)

    def particle_regions(self) -> np.ndarray:
        return self.region if self.mode == "rts" else np.ones(self.n_fluid, dtype=np.int8)

    def advance(self) -> list[StepStats]:
        return [self.step()]

    # ------------------------------------------------------------------

    def step(self) -> StepStats:
        for key in self._timers:
            self._timers[key] = 0.0
        t0 = time.perf_counter()
        self.grid.rebuild(self.pos, self.n_fluid)
        self._timers["neighbor"] += time.perf_counter() - t0

        if self.mode == "rts":
            t0 = time.perf_counter()
            self._assign_and_propagate()
            self._timers["rts"] += time.perf_counter() - t0
            dt = self.dt_base
            idx = np.flatnonzero(self.compute)
        else:
            dt = min(self.cfl_bound(), self.dt_cap)
            idx = np.arange(self.n_fluid)

        self._advance(dt, idx)

        self.step_index += 1
        self.sim_time += dt
        stats = StepStats(
            step=self.step_index,
            time=self.sim_time,
            dt=dt,
            n_compute=int(idx.size),
            frac_compute=idx.size / max(1, self.n_fluid),
            missed_neighbors=self._missed_last,
            t_neighbor=self._timers["neighbor"],
            t_physics=self._timers["physics"],
            t_rts=self._timers["rts"],
        )
        if self.track_rho_variance:
            stats.rho_var = float(np.var(self.rho))
        return stats

    # ------------------------------------------------------------------

    def _assign_and_propagate(self) -> None:
        scene = self.scene
        v_max = self.grid.reduce_fluid_max(np.linalg.norm(self.vel, axis=1))
        f_max = self.grid.reduce_fluid_max(np.linalg.norm(self.force, axis=1))
        occ = self.grid.occupancy.ravel()
        raw = assign_regions(
            v_max,
            f_max,
            occ,
            dt_base=self.dt_base,
            block_size=self.grid.block_size,
            particle_mass=self.mass,
            sound_speed=scene.sound_speed,
            lambda_v=scene.lambda_v,
            lambda_f=scene.lambda_f,
            alpha=self.alpha,
            betas=self.betas,
            n_max=self.n_regions,
            use_sound_criterion=True,
        )
        field, _ = smooth_regions(raw, self.grid.dims)
        if self.pin_region is not None:
            field = np.where(occ, np.int8(self.pin_region), np.int8(0))
        block_n = field[self.grid.fluid_cells]

        self.validity -= 1
        renew = (self.validity <= 0) | (block_n != self.region)
        self.compute = renew
        self.region = np.where(renew, block_n, self.region)
        self.validity = np.where(renew, block_n.astype(np.int32), self.validity)

    def _advance(self, dt: float, idx: np.ndarray) -> None:
        k = self.kernel
        nf = self.n_fluid
        self._missed_last = 0
        if idx.size:
            t0 = time.perf_counter()
            layers = np.ones(idx.size, dtype=np.int64)
            self.grid.search_into(self.pos, idx, layers, k.h, self.nbr, self.cnt)
            self._timers["neighbor"] += time.perf_counter() - t0
            if self.audit_neighbors:
                self._missed_last = self.grid.count_missing_neighbors(self.pos, nf, idx, k.h, self.nbr, self.cnt)
                self.missed_neighbors_total += self._missed_last

            t0 = time.perf_counter()
            _density_pressure(
                self.pos, self.nbr, self.cnt, idx, self.mass, k.h2, k.c_poly6,
                self.b_stiff, self.scene.rest_density, self.rho, self.pres,
            )
            if not math.isfinite(float(np.sum(self.rho[idx]))):
                raise NumericalError("non-finite density; the simulation has blown up")
            self.dt_corr[idx] = self.dt_since[idx]
            self.dt_since[idx] = 0.0
            self.acc_prev[idx] = self.acc[idx]
            _forces(
                self.pos, self.vel, self.nbr, self.cnt, idx, self.mass, k.h,
                k.c_spiky, k.c_visc, self.mu, self.scene.rest_density, nf,
                self.rho, self.pres, self.gravity, self.force,
            )
            self.acc[idx] = self.force[idx] / self.mass
            self._timers["physics"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        fluid = self.pos[:nf]
        fluid += self.vel * dt + self.acc * (0.5 * dt * dt)
        self.vel += self.acc * dt
        self.dt_since += dt
        if self.apply_correction and idx.size:
            da = self.acc[idx] - self.acc_prev[idx]
            dtc = self.dt_corr[idx][:, None]
            self.pos[idx] += da * (dtc * dtc / 6.0)
            self.vel[idx] += da * (dtc / 2.0)
        self._clamp()
        self._timers["physics"] += time.perf_counter() - t0

    def _clamp(self) -> None:
        fluid = self.pos[: self.n_fluid]
        lo = fluid < self._clamp_lo
        hi = fluid > self._clamp_hi
        breached = lo | hi
        if breached.any():
            self.vel[breached] = 0.0
            np.clip(fluid, self._clamp_lo, self._clamp_hi, out=fluid)
