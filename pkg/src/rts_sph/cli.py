"""Benchmark command line.

Two subcommands: ``run`` simulates a scene with any solver mode and
exports frames plus per-step statistics; ``compare`` reads two run
directories and prints the speedup, iteration/work ratios, and the
center-of-mass deviation between them.

Exit codes: 0 success, 1 configuration or usage errors, 2 numerical
abort (the simulation blew up or the pressure solve stopped converging).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .bench import SOLVER_NAMES, compare, run_simulation
from .errors import ConfigError, NumericalError
from .scene import PRESET_NAMES, load_scene

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    # bad flags are configuration errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rts-sph-bench",
        description="Particle liquid benchmark: regional time stepping vs global-step baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a scene, exporting frames and statistics")
    run.add_argument("--scene", required=True,
                     help=f"scene config path or preset ({', '.join(PRESET_NAMES)})")
    run.add_argument("--solver", required=True, choices=SOLVER_NAMES)
    run.add_argument("--duration", type=float, default=1.0, help="simulated seconds (default 1.0)")
    run.add_argument("--fps", type=int, default=30, help="frame export rate (default 30)")
    run.add_argument("--out", required=True, help="output directory for frames/stats/meta")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: RTS_SPH_THREADS or the numba default)")
    run.add_argument("--deterministic", action="store_true",
                     help="pin the thread count (1 unless --threads is given)")
    run.add_argument("--stats", default=None, help="stats CSV path (default OUT/stats.csv)")
    run.add_argument("--dt-base", type=float, default=None, help="override the base step in seconds")
    run.add_argument("--minor-steps", type=int, choices=(2, 4), default=None,
                     help="minor steps per PCISPH major step")
    run.add_argument("--frames-only", action="store_true", help="skip the stats file")
    run.add_argument("--audit-neighbors", action="store_true",
                     help="count true neighbors missing from candidate sets (slow)")

    cmp_parser = sub.add_parser("compare", help="compare two run directories (B relative to A)")
    cmp_parser.add_argument("run_a", help="reference run directory")
    cmp_parser.add_argument("run_b", help="run directory measured against the reference")
    return parser


def _configure_threads(args) -> None:
    requested = args.threads
    if requested is None:
        env = os.environ.get("RTS_SPH_THREADS")
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError(f"RTS_SPH_THREADS={env!r} is not an integer") from None
    if requested is None and args.deterministic:
        requested = 1
    if requested is not None:
        if requested < 1:
            raise ConfigError("thread count must be >= 1")
        import numba

        numba.set_num_threads(min(requested, numba.config.NUMBA_NUM_THREADS))


def _cmd_run(args) -> int:
    scene = load_scene(args.scene)
    overrides = {}
    if args.dt_base is not None:
        overrides["dt_base"] = args.dt_base
    if args.minor_steps is not None:
        overrides["minor_steps"] = args.minor_steps
    if overrides:
        scene = dataclasses.replace(scene, **overrides)
    _configure_threads(args)

    solver_kwargs = {}
    if args.audit_neighbors:
        solver_kwargs["audit_neighbors"] = True
    meta = run_simulation(
        scene,
        args.solver,
        args.duration,
        args.fps,
        Path(args.out),
        stats_path=args.stats,
        frames_only=args.frames_only,
        solver_kwargs=solver_kwargs,
    )

    steps = max(1, meta["steps"])
    phases = meta["t_neighbor"] + meta["t_physics"] + meta["t_rts"]
    print(f"solver {meta['solver']} on {meta['n_fluid']} fluid particles")
    print(f"simulated {meta['duration']:g} s in {meta['steps']} steps, {meta['n_frames']} frames")
    print(f"wall time {meta['wall_time']:.2f} s ({meta['iterations_total'] / steps:.2f} iterations/step)")
    if phases > 0:
        print(
            "breakdown: neighbor {:.1f}%  physics {:.1f}%  rts {:.1f}%".format(
                100.0 * meta["t_neighbor"] / phases,
                100.0 * meta["t_physics"] / phases,
                100.0 * meta["t_rts"] / phases,
            )
        )
    if args.audit_neighbors:
        print(f"missed neighbors: {meta['missed_neighbors']}")
    return 0


def _cmd_compare(args) -> int:
    report = compare(Path(args.run_a), Path(args.run_b))
    print(f"comparing {report['solver_b']} against {report['solver_a']}")
    print(f"wall-clock speedup:  {report['speedup']:.2f}x")
    print(f"iteration ratio:     {report['iteration_ratio']:.3f}")
    print(f"work ratio:          {report['work_ratio']:.3f}")
    print(
        "max COM deviation:   {:.6f} m ({:.3f}% of the domain diagonal, {} frames)".format(
            report["com_deviation"],
            100.0 * report["com_deviation_frac"],
            report["frames_compared"],
        )
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
