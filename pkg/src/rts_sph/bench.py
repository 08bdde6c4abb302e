"""Run driver, frame export, and run-to-run comparison.

A run directory holds frame_00000.bin .. frame_NNNNN.bin, stats.csv
(one row per step; per minor step in regional PCISPH), and meta.json
with the scene hash and phase totals. Frames store fluid particles
only: a fixed header followed by float32 positions and uint8 region
ids, little-endian throughout, so any plotting script can parse them
with a one-line struct format.

compare() takes two run directories and reports the wall-clock speedup
of the second run over the first, the iteration and work ratios, and
the maximum center-of-mass deviation between the two frame sequences
as a fraction of the domain diagonal. Runs of different scenes are
refused via the scene hash.
"""

from __future__ import annotations

import json
import math
import struct
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .pcisph import PcisphSolver
from .scene import Scene
from .stats import StepStats, write_stats
from .wcsph import WcsphSolver

__all__ = [
    "SOLVER_NAMES",
    "make_solver",
    "run_simulation",
    "compare",
    "write_frame",
    "read_frame",
    "frame_files",
]

FRAME_MAGIC = b"RTSF"
FRAME_VERSION = 1
_HEADER = struct.Struct("<4sIId")

SOLVER_NAMES = ("wcsph", "wcsph-rts", "pcisph-const", "pcisph-adaptive", "pcisph-rts")


def make_solver(scene: Scene, name: str, **kwargs):
    if name == "wcsph":
        return WcsphSolver(scene, mode="baseline", **kwargs)
    if name == "wcsph-rts":
        return WcsphSolver(scene, mode="rts", **kwargs)
    if name == "pcisph-const":
        return PcisphSolver(scene, mode="const", **kwargs)
    if name == "pcisph-adaptive":
        return PcisphSolver(scene, mode="adaptive", **kwargs)
    if name == "pcisph-rts":
        return PcisphSolver(scene, mode="rts", **kwargs)
    raise ConfigError(f"unknown solver {name!r}; expected one of {', '.join(SOLVER_NAMES)}")


# ----------------------------------------------------------------------
# frame files
# ----------------------------------------------------------------------


def write_frame(path: Path, sim_time: float, positions: np.ndarray, regions: np.ndarray) -> None:
    count = positions.shape[0]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, count, sim_time))
        f.write(np.ascontiguousarray(positions, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(regions, dtype=np.uint8).tobytes())


def read_frame(path: Path) -> tuple[float, np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated frame header")
    magic, version, count, sim_time = _HEADER.unpack_from(raw)
    if magic != FRAME_MAGIC:
        raise ConfigError(f"{path}: not a frame file (bad magic {magic!r})")
    if version != FRAME_VERSION:
        raise ConfigError(f"{path}: unsupported frame version {version}")
    need = _HEADER.size + count * (12 + 1)
    if len(raw) != need:
        raise ConfigError(f"{path}: expected {need} bytes for {count} particles, found {len(raw)}")
    pos = np.frombuffer(raw, dtype="<f4", count=count * 3, offset=_HEADER.size).reshape(count, 3)
    reg = np.frombuffer(raw, dtype=np.uint8, count=count, offset=_HEADER.size + count * 12)
    return sim_time, pos, reg


def frame_files(run_dir: Path) -> list[Path]:
    return sorted(Path(run_dir).glob("frame_*.bin"))


# ----------------------------------------------------------------------
# run driver
# ----------------------------------------------------------------------


def run_simulation(
    scene: Scene,
    solver_name: str,
    duration: float,
    fps: int,
    out_dir: Path,
    *,
    stats_path: Path | None = None,
    frames_only: bool = False,
    solver_kwargs: dict | None = None,
) -> dict:
    """Simulate ``duration`` seconds, exporting frames at ``fps``.

    Frame 0 is the initial state; frame k is written at the first step
    boundary reaching k/fps (a major-step boundary in regional PCISPH).
    Returns the meta dict that is also written to meta.json.
    """
    if duration < 0:
        raise ConfigError("duration must be >= 0")
    if fps < 1:
        raise ConfigError("fps must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    solver = make_solver(scene, solver_name, **(solver_kwargs or {}))
    n_frames = max(1, math.ceil(duration * fps))
    nf = solver.n_fluid

    write_frame(out_dir / "frame_00000.bin", 0.0, solver.pos[:nf], solver.particle_regions())
    next_k = 1
    rows: list[StepStats] = []
    wall = 0.0
    while solver.sim_time < duration - 1e-9:
        t0 = time.perf_counter()
        batch = solver.advance()
        wall += time.perf_counter() - t0
        rows.extend(batch)
        while next_k < n_frames and solver.sim_time >= next_k / fps - 1e-9:
            write_frame(out_dir / f"frame_{next_k:05d}.bin", solver.sim_time, solver.pos[:nf], solver.particle_regions())
            next_k += 1
    while next_k < n_frames:
        write_frame(out_dir / f"frame_{next_k:05d}.bin", solver.sim_time, solver.pos[:nf], solver.particle_regions())
        next_k += 1

    if not frames_only:
        write_stats(Path(stats_path) if stats_path else out_dir / "stats.csv", rows)

    meta = {
        "solver": solver_name,
        "scene_hash": scene.scene_hash(),
        "n_fluid": nf,
        "duration": duration,
        "fps": fps,
        "n_frames": n_frames,
        "steps": len(rows),
        "wall_time": wall,
        "t_neighbor": float(sum(r.t_neighbor for r in rows)),
        "t_physics": float(sum(r.t_physics for r in rows)),
        "t_rts": float(sum(r.t_rts for r in rows)),
        "iterations_total": int(sum(r.iterations for r in rows)),
        "corrected_total": int(sum(r.corrected for r in rows)),
        "compute_total": int(sum(r.n_compute for r in rows)),
        "early_terms": int(sum(r.early_term for r in rows)),
        "missed_neighbors": int(getattr(solver, "missed_neighbors_total", 0)),
        "domain_diagonal": scene.domain_diagonal,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2))
    return meta


# ----------------------------------------------------------------------
# comparison report
# ----------------------------------------------------------------------


def _load_meta(run_dir: Path) -> dict:
    meta_path = Path(run_dir) / "meta.json"
    if not meta_path.exists():
        raise ConfigError(f"{run_dir}: no meta.json; not a run directory")
    return json.loads(meta_path.read_text())


def _com_trajectory(run_dir: Path) -> tuple[np.ndarray, np.ndarray]:
    times = []
    coms = []
    for path in frame_files(run_dir):
        t, pos, _ = read_frame(path)
        times.append(t)
        coms.append(pos.mean(axis=0))
    if not times:
        raise ConfigError(f"{run_dir}: no frames found")
    return np.asarray(times), np.asarray(coms, dtype=np.float64)


def compare(run_a: Path, run_b: Path) -> dict:
    """Report run_b relative to run_a (speedup > 1 means b was faster)."""
    meta_a = _load_meta(run_a)
    meta_b = _load_meta(run_b)
    if meta_a["scene_hash"] != meta_b["scene_hash"]:
        raise ConfigError(
            "runs simulate different scenes "
            f"({meta_a['scene_hash']} vs {meta_b['scene_hash']}); refusing to compare"
        )

    times_a, com_a = _com_trajectory(run_a)
    times_b, com_b = _com_trajectory(run_b)
    fps = meta_a["fps"]
    n_common = min(len(times_a), len(times_b))
    targets = np.arange(n_common) / fps
    t_end = min(times_a[-1], times_b[-1])
    targets = targets[targets <= t_end + 1e-9] if n_common > 1 else targets[:1]
    dev = np.zeros(len(targets))
    for axis in range(3):
        a = np.interp(targets, times_a, com_a[:, axis])
        b = np.interp(targets, times_b, com_b[:, axis])
        dev += (a - b) ** 2
    dev = np.sqrt(dev)

    work_a = meta_a["corrected_total"] or meta_a["compute_total"]
    work_b = meta_b["corrected_total"] or meta_b["compute_total"]
    diagonal = meta_a["domain_diagonal"]
    return {
        "speedup": meta_a["wall_time"] / meta_b["wall_time"] if meta_b["wall_time"] else float("inf"),
        "iteration_ratio": meta_b["iterations_total"] / meta_a["iterations_total"] if meta_a["iterations_total"] else float("nan"),
        "work_ratio": work_b / work_a if work_a else float("nan"),
        "com_deviation": float(dev.max()),
        "com_deviation_frac": float(dev.max() / diagonal),
        "frames_compared": int(len(targets)),
        "solver_a": meta_a["solver"],
        "solver_b": meta_b["solver"],
    }
