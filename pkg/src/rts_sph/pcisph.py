"""Predictive-corrective incompressible SPH with a regional mode.

The regional mode advances in major steps of N base (minor) steps. Block
regions, their 4-layer expansions of regions 1 and 2, the observed-block
set, and the overpopulated grid (blocks of 2.2x spacing instead of 2x)
are all fixed at major-step start; minor steps then run a scheduled
density correction where slow regions receive fewer iterations, while
particles refresh their cached neighborhoods only when their validity
expires (region 1 every minor step with a two-layer search, region 2
every second minor step, regions 3 and 4 once per major step).

Two density-error figures drive every convergence decision. The maximum
error is the worst per-particle compression (expansion clamps to zero).
The average error is the compression of the mean fluid density, so the
rarefied free-surface layers offset interior compression; it only rises
above zero when the fluid body as a whole is squeezed, which makes it
the indicator used to choose between global and local extra passes.

Within one minor step the correction loop handles three particle sets on
top of the schedule: S_e, particles whose compression error exceeds half
the allowed maximum, corrected on every iteration; S_ob, particles in
observed blocks, whose density is re-predicted each iteration to catch
disruption from corrections next door; and, when
errors linger past the scheduled iterations, either extra global passes
(rerunning the schedule from its top row) or purely local passes over
S_e, chosen by the average compression error. A local phase that fails to converge within its
attempt budget reverts the pressure field to its entry snapshot and
falls back to global passes. A minor step that needs more than 6 global
passes terminates the major step early and halves subsequent majors to
two minor steps for the next ten majors.

Baselines: a constant-step solver and a globally adaptive one, both
running the standard synchronous correction (at least 3 iterations,
until max error < eta_max and average < eta_avg).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import ConfigError, NumericalError
from .grid import BlockGrid, neighbor_min
from .kernels import KernelSet, poly6_w, spiky_grad_scale, viscosity_lap
from .regions import assign_regions, derive_observed, expand_fast_regions, smooth_regions
from .scene import Scene, seed_particles
from .stats import StepStats
from .wcsph import NEIGHBOR_WIDTH

__all__ = [
    "PcisphSolver",
    "MajorStepController",
    "DEFAULT_SCHEDULE",
    "VALIDITY_PERIOD",
    "validate_schedule",
    "pci_delta",
]

# Refresh period in minor steps, indexed by region id. Region 3 is slow
# enough that its refresh is deferred to the next major step, same as
# region 4.
VALIDITY_PERIOD = np.array([0, 1, 2, 4, 4], dtype=np.int32)

# One tuple per minor step; each inner tuple is one correction iteration
# and lists the regions scheduled for it. Totals per major: region 1
# gets 3 per minor, region 2 gets 3 per two consecutive minors, regions
# 3 and 4 get 5 per major with a double dose on the first minor.
DEFAULT_SCHEDULE = (
    ((1, 2, 3, 4), (1, 2, 3, 4), (1,)),
    ((1, 2, 3, 4), (1,), (1,)),
    ((1, 2, 3, 4), (1, 2), (1,)),
    ((1, 2, 3, 4), (1,), (1,)),
)


def validate_schedule(schedule, n_regions: int = 4) -> None:
    """Check the five legality constraints; raise ConfigError on failure.

    1. every region appears in at least one iteration of every minor step;
    2. on the first minor step, every region appears at least twice;
    3. region 1 appears at least three times on every minor step;
    4. region 2 totals at least 3 over any two consecutive minor steps
       (cyclically across majors);
    5. every region n totals at least 3 over any window of n consecutive
       minor steps (cyclically), its own true step length.
    """
    n_minor = len(schedule)
    counts = np.zeros((n_minor, n_regions + 1), dtype=int)
    for j, rows in enumerate(schedule):
        for row in rows:
            for n in row:
                if not 1 <= n <= n_regions:
                    raise ConfigError(f"schedule names region {n} outside 1..{n_regions}")
                counts[j, n] += 1
    for j in range(n_minor):
        for n in range(1, n_regions + 1):
            if counts[j, n] < 1:
                raise ConfigError(f"region {n} receives no iteration on minor step {j + 1}")
    for n in range(1, n_regions + 1):
        if counts[0, n] < 2:
            raise ConfigError(f"region {n} receives fewer than 2 iterations on the first minor step")
    for j in range(n_minor):
        if counts[j, 1] < 3:
            raise ConfigError(f"region 1 receives fewer than 3 iterations on minor step {j + 1}")
    for n in range(1, n_regions + 1):
        window = 2 if n == 2 else min(n, n_minor)
        for j in range(n_minor):
            total = sum(counts[(j + k) % n_minor, n] for k in range(window))
            if total < 3:
                raise ConfigError(
                    f"region {n} receives {total} < 3 iterations in the "
                    f"{window}-minor window starting at minor step {j + 1}"
                )


def pci_delta(scene: Scene, dt: float) -> float:
    """Pressure stiffness per unit density error for a minor step of dt.

    Uses the standard prototype of a particle with a completely filled
    lattice neighborhood at the scene spacing.
    """
    factor = _template_factor(scene.support_radius, scene.spacing)
    m = scene.particle_mass
    return scene.rest_density**2 / (2.0 * dt * dt * m * m * factor)


def _template_factor(h: float, spacing: float) -> float:
    c_spiky = -45.0 / (math.pi * h**6)
    sum_grad = np.zeros(3)
    sum_dot = 0.0
    reach = int(math.ceil(h / spacing))
    for ix in range(-reach, reach + 1):
        for iy in range(-reach, reach + 1):
            for iz in range(-reach, reach + 1):
                if ix == iy == iz == 0:
                    continue
                offset = np.array([ix, iy, iz]) * spacing
                r = math.sqrt(float(offset @ offset))
                if r >= h:
                    continue
                grad = spiky_grad_scale(r, h, c_spiky) * (-offset)
                sum_grad += grad
                sum_dot += float(grad @ grad)
    return float(sum_grad @ sum_grad) + sum_dot


@dataclass
class MajorStepController:
    """Tracks the temporary halving of the major step after hard frames."""

    n_nominal: int = 4
    n_current: int = 4
    recovery_left: int = 0

    def note_major(self, early_terminated: bool) -> None:
        if early_terminated:
            self.n_current = 2
            self.recovery_left = 10
        elif self.recovery_left > 0:
            self.recovery_left -= 1
            if self.recovery_left == 0:
                self.n_current = self.n_nominal


# ----------------------------------------------------------------------
# compiled passes
# ----------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _ext_forces(pos, vel, nbr, cnt, idx, mass, h, c_visc, mu, rho0, n_fluid, grav, out):
    m2 = mass * mass
    inv_rho0_sq = 1.0 / (rho0 * rho0)
    for t in prange(idx.shape[0]):
        i = idx[t]
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            if j >= n_fluid or j == i:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r >= h:
                continue
            lap = mu * m2 * viscosity_lap(r, h, c_visc) * inv_rho0_sq
            fx += lap * (vel[j, 0] - vel[i, 0])
            fy += lap * (vel[j, 1] - vel[i, 1])
            fz += lap * (vel[j, 2] - vel[i, 2])
        out[i, 0] = fx + mass * grav[0]
        out[i, 1] = fy + mass * grav[1]
        out[i, 2] = fz + mass * grav[2]


@njit(cache=True, parallel=True)
def _predict_motion(pos, vel, f_ext, f_p, dt, inv_mass, xstar, vstar):
    for i in prange(vel.shape[0]):
        vx = vel[i, 0] + dt * inv_mass * (f_ext[i, 0] + f_p[i, 0])
        vy = vel[i, 1] + dt * inv_mass * (f_ext[i, 1] + f_p[i, 1])
        vz = vel[i, 2] + dt * inv_mass * (f_ext[i, 2] + f_p[i, 2])
        vstar[i, 0] = vx
        vstar[i, 1] = vy
        vstar[i, 2] = vz
        xstar[i, 0] = pos[i, 0] + dt * vx
        xstar[i, 1] = pos[i, 1] + dt * vy
        xstar[i, 2] = pos[i, 2] + dt * vz


@njit(cache=True, parallel=True)
def _predict_density(xstar, pos, nbr, cnt, idx, mass, h2, c_poly6, rho0, n_fluid, rho_star, err):
    for t in prange(idx.shape[0]):
        i = idx[t]
        acc = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            if j < n_fluid:
                dx = xstar[i, 0] - xstar[j, 0]
                dy = xstar[i, 1] - xstar[j, 1]
                dz = xstar[i, 2] - xstar[j, 2]
            else:
                dx = xstar[i, 0] - pos[j, 0]
                dy = xstar[i, 1] - pos[j, 1]
                dz = xstar[i, 2] - pos[j, 2]
            acc += poly6_w(dx * dx + dy * dy + dz * dz, h2, c_poly6)
        rho = mass * acc
        rho_star[i] = rho
        diff = rho - rho0
        err[i] = diff / rho0 if diff > 0.0 else 0.0


@njit(cache=True, parallel=True)
def _pressure_forces(xstar, pos, nbr, cnt, idx, mass, h, c_spiky, rho0, n_fluid, p, out):
    m2 = mass * mass
    inv_rho0_sq = 1.0 / (rho0 * rho0)
    for t in prange(idx.shape[0]):
        i = idx[t]
        term_i = p[i] * inv_rho0_sq
        fx = 0.0
        fy = 0.0
        fz = 0.0
        for k in range(cnt[i]):
            j = nbr[i, k]
            if j == i:
                continue
            if j < n_fluid:
                dx = xstar[i, 0] - xstar[j, 0]
                dy = xstar[i, 1] - xstar[j, 1]
                dz = xstar[i, 2] - xstar[j, 2]
                term = term_i + p[j] * inv_rho0_sq
            else:
                dx = xstar[i, 0] - pos[j, 0]
                dy = xstar[i, 1] - pos[j, 1]
                dz = xstar[i, 2] - pos[j, 2]
                term = term_i + term_i
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r <= 0.0 or r >= h:
                continue
            s = m2 * term * spiky_grad_scale(r, h, c_spiky)
            fx -= s * dx
            fy -= s * dy
            fz -= s * dz
        out[i, 0] = fx
        out[i, 1] = fy
        out[i, 2] = fz


# ----------------------------------------------------------------------
# solver
# ----------------------------------------------------------------------


class PcisphSolver:
    """Driver for one scene; ``mode`` is "const", "adaptive", or "rts"."""

    mode_names = ("const", "adaptive", "rts")

    def __init__(
        self,
        scene: Scene,
        mode: str = "rts",
        dt: float | None = None,
        schedule=DEFAULT_SCHEDULE,
        pin_region: int | None = None,
        audit_neighbors: bool = False,
        iteration_cap: int = 24,
        local_attempts: int = 4,
        n_regions: int = 4,
    ):
        if mode not in self.mode_names:
            raise ValueError(f"unknown pcisph mode {mode!r}")
        validate_schedule(schedule, n_regions)
        self.scene = scene
        self.mode = mode
        self.schedule = schedule
        self.pin_region = pin_region
        self.audit_neighbors = audit_neighbors
        self.iteration_cap = iteration_cap
        self.local_attempts = local_attempts
        self.n_regions = n_regions

        self.kernel = KernelSet(scene.support_radius)
        if dt is not None:
            self.dt = dt
        elif mode == "const":
            self.dt = scene.const_dt()
        else:
            self.dt = scene.base_dt("pcisph")
        self.mass = scene.particle_mass
        self.inv_mass = 1.0 / self.mass
        self.mu = scene.viscosity * scene.rest_density
        self.betas = scene.betas(n_regions)
        self.alpha = scene.alpha_for("pcisph")
        self.controller = MajorStepController(n_nominal=scene.minor_steps, n_current=scene.minor_steps)
        self._delta_factor = _template_factor(self.kernel.h, scene.spacing)

        fluid, boundary = seed_particles(scene)
        self.n_fluid = len(fluid)
        self.pos = np.concatenate([fluid, boundary]) if len(boundary) else fluid.copy()
        nf = self.n_fluid
        self.vel = np.zeros((nf, 3))
        self.f_ext = np.zeros((nf, 3))
        self.f_p = np.zeros((nf, 3))
        self.p = np.zeros(nf)
        self.rho_star = np.full(nf, scene.rest_density)
        self.err = np.zeros(nf)
        self.xstar = fluid.copy()
        self.vstar = np.zeros((nf, 3))
        self.region = np.ones(nf, dtype=np.int8)
        self.validity = np.zeros(nf, dtype=np.int32)
        self.compute = np.ones(nf, dtype=bool)
        self.in_se = np.zeros(nf, dtype=bool)
        self.in_sob = np.zeros(nf, dtype=bool)
        self.nbr = np.zeros((nf, NEIGHBOR_WIDTH), dtype=np.int64)
        self.cnt = np.zeros(nf, dtype=np.int64)

        grid_mode = "pcisph" if mode == "rts" else "wcsph"
        self.grid = BlockGrid.for_scene(scene, grid_mode)
        self.block_region = np.zeros(self.grid.n_cells, dtype=np.int8)
        self.gravity = np.asarray(scene.gravity)
        self._clamp_lo = np.asarray(scene.domain_min) + 0.1 * scene.spacing
        self._clamp_hi = np.asarray(scene.domain_max) - 0.1 * scene.spacing

        self.step_index = 0
        self.sim_time = 0.0
        self.missed_neighbors_total = 0
        self.local_entered_total = 0
        self.local_reverted_total = 0
        self._timers = {"neighbor": 0.0, "physics": 0.0, "rts": 0.0}

    # ------------------------------------------------------------------

    def delta(self, dt: float) -> float:
        rho0 = self.scene.rest_density
        return rho0 * rho0 / (2.0 * dt * dt * self.mass * self.mass * self._delta_factor)

    def particle_regions(self) -> np.ndarray:
        return self.region if self.mode == "rts" else np.ones(self.n_fluid, dtype=np.int8)

    def advance(self) -> list[StepStats]:
        """One scheduling unit: a major step for rts, one step otherwise."""
        if self.mode == "rts":
            return self.major_step()
        return [self.sync_step()]

    # ------------------------------------------------------------------
    # synchronous baselines
    # ------------------------------------------------------------------

    def sync_step(self) -> StepStats:
        for key in self._timers:
            self._timers[key] = 0.0
        nf = self.n_fluid
        dt = self.dt
        all_idx = np.arange(nf)

        t0 = time.perf_counter()
        self.grid.rebuild(self.pos, nf)
        self.grid.search_into(self.pos, all_idx, np.ones(nf, dtype=np.int64), self.kernel.h, self.nbr, self.cnt)
        self._timers["neighbor"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        _ext_forces(
            self.pos, self.vel, self.nbr, self.cnt, all_idx, self.mass, self.kernel.h,
            self.kernel.c_visc, self.mu, self.scene.rest_density, nf, self.gravity, self.f_ext,
        )
        self.p[:] = 0.0
        self.f_p[:] = 0.0
        iters, corrected = self._correct_all(dt, all_idx)
        self._integrate(dt)
        self._timers["physics"] += time.perf_counter() - t0

        max_err = float(self.err.max()) if nf else 0.0
        avg_err = self._avg_err()
        if self.mode == "adaptive":
            self._adapt_dt(iters)
        self.step_index += 1
        self.sim_time += dt
        return StepStats(
            step=self.step_index,
            time=self.sim_time,
            dt=dt,
            n_compute=nf,
            frac_compute=1.0,
            iterations=iters,
            corrected=corrected,
            iters_r1=iters, iters_r2=iters, iters_r3=iters, iters_r4=iters,
            max_err=max_err,
            avg_err=avg_err,
            t_neighbor=self._timers["neighbor"],
            t_physics=self._timers["physics"],
            t_rts=self._timers["rts"],
        )

    def _avg_err(self) -> float:
        """Compression of the mean fluid density, as a fraction of rest.

        Signed per-particle deviations are averaged before clamping, so
        under-dense surface particles offset compressed interior ones.
        """
        if not self.n_fluid:
            return 0.0
        mean = float(self.rho_star.mean())
        return max(0.0, mean / self.scene.rest_density - 1.0)

    def _accumulate_pressure(self, idx: np.ndarray, delta: float) -> None:
        """Jacobi pressure update over `idx` from the latest predicted
        densities, clamped non-negative."""
        pi = self.p[idx] + delta * (self.rho_star[idx] - self.scene.rest_density)
        np.maximum(pi, 0.0, out=pi)
        self.p[idx] = pi

    def _correct_all(self, dt: float, all_idx: np.ndarray) -> tuple[int, int]:
        scene = self.scene
        k = self.kernel
        nf = self.n_fluid
        delta = self.delta(dt)
        it = 0
        corrected = 0
        while True:
            _predict_motion(self.pos, self.vel, self.f_ext, self.f_p, dt, self.inv_mass, self.xstar, self.vstar)
            _predict_density(
                self.xstar, self.pos, self.nbr, self.cnt, all_idx, self.mass, k.h2,
                k.c_poly6, scene.rest_density, nf, self.rho_star, self.err,
            )
            self._accumulate_pressure(all_idx, delta)
            _pressure_forces(
                self.xstar, self.pos, self.nbr, self.cnt, all_idx, self.mass, k.h,
                k.c_spiky, scene.rest_density, nf, self.p, self.f_p,
            )
            it += 1
            corrected += nf
            if not math.isfinite(float(self.rho_star.max())):
                raise NumericalError("non-finite predicted density; the simulation has blown up")
            converged = self.err.max() < scene.eta_max and self._avg_err() < scene.eta_avg
            if it >= 3 and converged:
                return it, corrected
            if it > self.iteration_cap + 3:
                raise NumericalError(
                    f"pressure solve did not converge within {it} iterations "
                    f"(max error {self.err.max():.4%} of rest density)"
                )

    def _adapt_dt(self, iters: int) -> None:
        v_max = float(np.max(np.linalg.norm(self.vel, axis=1))) if self.n_fluid else 0.0
        cfl_ok = v_max * self.dt <= 0.4 * self.kernel.h
        if iters <= 5 and cfl_ok:
            self.dt = min(self.dt * 1.002, 2.0 * self.scene.base_dt("pcisph"))
        else:
            self.dt = max(self.dt * 0.8, 0.1 * self.scene.const_dt())

    # ------------------------------------------------------------------
    # regional mode
    # ------------------------------------------------------------------

    def major_step(self) -> list[StepStats]:
        n_minor = self.controller.n_current

        for key in self._timers:
            self._timers[key] = 0.0
        t0 = time.perf_counter()
        self.grid.rebuild(self.pos, self.n_fluid)
        self._timers["neighbor"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        self._assign_major_regions(n_minor)
        self._timers["rts"] += time.perf_counter() - t0

        rows_all = self.schedule
        stats_rows: list[StepStats] = []
        early_major = False
        for j in range(n_minor):
            minor_stats = self._minor_step(j, rows_all[j], last=(j == n_minor - 1))
            stats_rows.append(minor_stats)
            if minor_stats.early_term:
                early_major = True
                break
        self.controller.note_major(early_major)
        return stats_rows

    def _assign_major_regions(self, n_minor: int) -> None:
        occ = self.grid.occupancy.ravel()
        v_max = self.grid.reduce_fluid_max(np.linalg.norm(self.vel, axis=1))
        f_max = self.grid.reduce_fluid_max(np.linalg.norm(self.f_ext + self.f_p, axis=1))
        raw = assign_regions(
            v_max,
            f_max,
            occ,
            dt_base=self.dt,
            block_size=self.grid.block_size,
            particle_mass=self.mass,
            sound_speed=self.scene.sound_speed,
            lambda_v=self.scene.lambda_v,
            lambda_f=self.scene.lambda_f,
            alpha=self.alpha,
            betas=self.betas,
            n_max=min(self.n_regions, n_minor),
            use_sound_criterion=False,
        )
        field, _ = smooth_regions(raw, self.grid.dims)
        field = expand_fast_regions(field, self.grid.dims)
        if self.pin_region is not None:
            field = np.where(occ, np.int8(self.pin_region), np.int8(0))
        self.block_region = field
        self.region = field[self.grid.fluid_cells]
        self.validity = VALIDITY_PERIOD[self.region]
        self.compute[:] = True
        self.in_se[:] = False
        self._refresh_observed()

    def _refresh_observed(self) -> None:
        se_blocks = np.zeros(self.grid.n_cells, dtype=bool)
        if self.in_se.any():
            se_blocks[self.grid.fluid_cells[self.in_se]] = True
        obs = derive_observed(self.block_region, self.grid.dims, se_blocks)
        self.in_sob = obs[self.grid.fluid_cells]

    def _minor_step(self, j: int, rows, last: bool) -> StepStats:
        scene = self.scene
        k = self.kernel
        nf = self.n_fluid
        dt = self.dt
        missed = 0
        # report per-minor phase times; major-start overhead lands on minor 1
        timer_base = dict(self._timers)

        refresh_idx = np.flatnonzero(self.compute)
        t0 = time.perf_counter()
        if refresh_idx.size:
            layers = np.where(self.region[refresh_idx] == 1, 2, 1).astype(np.int64)
            self.grid.search_into(self.pos, refresh_idx, layers, k.h, self.nbr, self.cnt)
        self._timers["neighbor"] += time.perf_counter() - t0

        if self.audit_neighbors and refresh_idx.size:
            missed = self.grid.count_missing_neighbors(self.pos, nf, refresh_idx, k.h, self.nbr, self.cnt)
            self.missed_neighbors_total += missed

        t0 = time.perf_counter()
        if refresh_idx.size:
            _ext_forces(
                self.pos, self.vel, self.nbr, self.cnt, refresh_idx, self.mass, k.h,
                k.c_visc, self.mu, scene.rest_density, nf, self.gravity, self.f_ext,
            )
        self.p[:] = 0.0
        self.f_p[:] = 0.0
        self._timers["physics"] += time.perf_counter() - t0

        iters, corrected, region_iters, g_count, early = self._correct_scheduled(dt, rows)

        t0 = time.perf_counter()
        self._integrate(dt)
        self._timers["physics"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        self.validity -= 1
        expired = self.validity <= 0
        self.compute = expired
        self.validity[expired] = VALIDITY_PERIOD[self.region[expired]]
        if not last:
            self._mark_timestep_updates()
        self._timers["rts"] += time.perf_counter() - t0

        self.step_index += 1
        self.sim_time += dt
        return StepStats(
            step=self.step_index,
            time=self.sim_time,
            dt=dt,
            n_compute=int(refresh_idx.size),
            frac_compute=refresh_idx.size / max(1, nf),
            iterations=iters,
            corrected=corrected,
            iters_r1=region_iters[1],
            iters_r2=region_iters[2],
            iters_r3=region_iters[3],
            iters_r4=region_iters[4],
            max_err=float(self.err.max()),
            avg_err=self._avg_err(),
            early_term=int(early),
            missed_neighbors=missed,
            t_neighbor=self._timers["neighbor"] - timer_base["neighbor"],
            t_physics=self._timers["physics"] - timer_base["physics"],
            t_rts=self._timers["rts"] - timer_base["rts"],
        )

    def _correct_scheduled(self, dt: float, rows) -> tuple[int, int, list, int, bool]:
        """The region-scheduled correction loop for one minor step."""
        scene = self.scene
        k = self.kernel
        nf = self.n_fluid
        delta = self.delta(dt)
        self.in_se[:] = False
        t0 = time.perf_counter()
        self._refresh_observed()
        self._timers["rts"] += time.perf_counter() - t0

        it = 0
        g_count = 0
        corrected = 0
        region_iters = [0, 0, 0, 0, 0]
        local_active = False
        local_banned = False
        local_run = 0
        snap_p = snap_fp = None
        early = False

        while True:
            if local_active:
                turn = np.zeros(nf, dtype=bool)
            else:
                row = rows[g_count % len(rows)]
                turn = np.isin(self.region, row)
                for n in row:
                    if n <= self.n_regions:
                        region_iters[n] += 1
            pred_idx = np.flatnonzero(turn | self.in_se | self.in_sob)
            force_idx = np.flatnonzero(turn | self.in_se)

            t0 = time.perf_counter()
            _predict_motion(self.pos, self.vel, self.f_ext, self.f_p, dt, self.inv_mass, self.xstar, self.vstar)
            _predict_density(
                self.xstar, self.pos, self.nbr, self.cnt, pred_idx, self.mass, k.h2,
                k.c_poly6, scene.rest_density, nf, self.rho_star, self.err,
            )
            # Pressure accumulates only where forces are recomputed this
            # iteration. The observed shell is check-only: incrementing
            # its pressure without refreshing its forces feeds unbalanced
            # pair forces to the error set and the solve diverges.
            self._accumulate_pressure(force_idx, delta)
            self._timers["physics"] += time.perf_counter() - t0

            # Both memberships track the latest predictions, so particles
            # disturbed by corrections next door graduate into the error
            # set on the following iteration.
            t0 = time.perf_counter()
            self.in_se = self.err > 0.5 * scene.eta_max
            self._refresh_observed()
            self._timers["rts"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            _pressure_forces(
                self.xstar, self.pos, self.nbr, self.cnt, force_idx, self.mass, k.h,
                k.c_spiky, scene.rest_density, nf, self.p, self.f_p,
            )
            self._timers["physics"] += time.perf_counter() - t0

            it += 1
            corrected += int(pred_idx.size)
            if local_active:
                local_run += 1
            else:
                g_count += 1

            if not math.isfinite(float(self.rho_star[pred_idx].max() if pred_idx.size else 0.0)):
                raise NumericalError("non-finite predicted density; the simulation has blown up")
            max_err = float(self.err.max())
            avg_err = self._avg_err()
            converged = max_err < scene.eta_max and avg_err < scene.eta_avg
            if converged:
                if it >= 3:
                    break
                continue
            if it < 3:
                continue

            # error remains after the minimum schedule: pick the next
            # iteration's flavor, or give up on a failing local phase
            if local_active:
                if local_run >= self.local_attempts:
                    self.p[:] = snap_p
                    self.f_p[:] = snap_fp
                    local_active = False
                    local_banned = True
                    self.local_reverted_total += 1
            else:
                avg_pct = avg_err * 100.0
                if avg_pct < scene.rho_T and not local_banned and self.in_se.any():
                    local_active = True
                    local_run = 0
                    snap_p = self.p.copy()
                    snap_fp = self.f_p.copy()
                    self.local_entered_total += 1
            if g_count > 6:
                early = True
            if g_count > self.iteration_cap:
                raise NumericalError(
                    f"pressure solve used {g_count} global iterations in one minor step "
                    f"(max error {max_err:.4%} of rest density)"
                )
        return it, corrected, region_iters, g_count, early

    def _mark_timestep_updates(self) -> None:
        """Mid-major pre-emption: blocks whose particles now violate their
        region's bounds drop to the newly required step, pulling their
        26-neighbors down with them; affected particles recompute on the
        next minor step."""
        occ = self.grid.occupancy.ravel()
        v_max = self.grid.reduce_fluid_max(np.linalg.norm(self.vel, axis=1))
        f_max = self.grid.reduce_fluid_max(np.linalg.norm(self.f_ext + self.f_p, axis=1))
        required = assign_regions(
            v_max,
            f_max,
            occ,
            dt_base=self.dt,
            block_size=self.grid.block_size,
            particle_mass=self.mass,
            sound_speed=self.scene.sound_speed,
            lambda_f=self.scene.lambda_f,
            lambda_v=self.scene.lambda_v,
            alpha=self.alpha,
            betas=self.betas,
            n_max=min(self.n_regions, self.controller.n_current),
            use_sound_criterion=False,
        )
        cur = self.block_region
        violating = occ & (required < cur) & (cur > 0)
        if not violating.any():
            return
        dims = self.grid.dims
        vfield = np.where(violating, required, np.int8(127)).reshape(dims)
        spread = np.minimum(vfield, neighbor_min(vfield, np.int8(127)))
        new_field = np.where(occ, np.minimum(cur, spread.ravel()), np.int8(0))
        changed = new_field < cur
        self.block_region = new_field
        pmask = changed[self.grid.fluid_cells]
        if pmask.any():
            self.region[pmask] = new_field[self.grid.fluid_cells[pmask]]
            self.compute[pmask] = True
            self.validity[pmask] = VALIDITY_PERIOD[self.region[pmask]]

    # ------------------------------------------------------------------

    def _integrate(self, dt: float) -> None:
        self.vel += (self.f_ext + self.f_p) * (dt * self.inv_mass)
        fluid = self.pos[: self.n_fluid]
        fluid += self.vel * dt
        lo = fluid < self._clamp_lo
        hi = fluid > self._clamp_hi
        breached = lo | hi
        if breached.any():
            self.vel[breached] = 0.0
            np.clip(fluid, self._clamp_lo, self._clamp_hi, out=fluid)
