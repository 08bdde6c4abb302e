"""Show the PCISPH correction schedule doing less work where it can.

First prints the iteration schedule itself (which regions are corrected
on each iteration row of each minor step), then runs the regional
solver on a dam break and reports, per minor step, how many iterations
each region received and how many particles were touched, next to what
a synchronous solver would have done (every particle, every iteration).
"""

import argparse

from rts_sph import PcisphSolver, preset_scene
from rts_sph.pcisph import DEFAULT_SCHEDULE


def print_schedule() -> None:
    print("schedule (rows = correction iterations within a minor step):")
    for j, rows in enumerate(DEFAULT_SCHEDULE, start=1):
        text = ", ".join("{" + ",".join(f"R{n}" for n in row) + "}" for row in rows)
        print(f"  minor {j}: {text}")
    totals = [
        sum(1 for rows in DEFAULT_SCHEDULE for row in rows if n in row)
        for n in (1, 2, 3, 4)
    ]
    print(f"  iterations per major step by region: {totals}\n")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="dam_break")
    ap.add_argument("--majors", type=int, default=8)
    args = ap.parse_args()

    print_schedule()
    scene = preset_scene(args.preset)
    solver = PcisphSolver(scene, mode="rts")
    nf = solver.n_fluid
    print(f"{args.preset}: {nf} fluid particles, minor dt {solver.dt:.3e} s\n")

    sync_work = 0
    rts_work = 0
    for major in range(args.majors):
        minors = solver.advance()
        for st in minors:
            rts_work += st.corrected
            sync_work += 3 * nf
            flags = " early-term" if st.early_term else ""
            print(
                f"major {major + 1} t={st.time:8.5f}s  iters/region "
                f"[{st.iters_r1} {st.iters_r2} {st.iters_r3} {st.iters_r4}]  "
                f"corrected {st.corrected:7d}  max_err {st.max_err:6.3%}{flags}"
            )

    print(
        f"\ncorrection work (particle-iterations): regional {rts_work:,} vs "
        f"{sync_work:,} for a 3-iteration synchronous solver at the same dt "
        f"({rts_work / sync_work:.2f}x)"
    )


if __name__ == "__main__":
    main()
