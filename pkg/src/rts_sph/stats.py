"""Per-step counters and timings shared by the solvers and the bench CLI."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields


@dataclass
class StepStats:
    """One solver step (one minor step for scheduled pressure solves).

    ``corrected`` counts particle-iterations of density correction (the
    work metric used by the benchmark report); ``iters_r1``..``iters_r4``
    count correction iterations applied to each region this step. The
    three wall-time buckets are neighbor work (binning plus search),
    physics (forces, pressure, integration), and regional-stepping
    overhead (maxima, region fields, validity and set bookkeeping).
    ``missed_neighbors`` is filled only when the audit is enabled.
    """

    step: int = 0
    time: float = 0.0
    dt: float = 0.0
    n_compute: int = 0
    frac_compute: float = 0.0
    iterations: int = 0
    corrected: int = 0
    iters_r1: int = 0
    iters_r2: int = 0
    iters_r3: int = 0
    iters_r4: int = 0
    max_err: float = 0.0
    avg_err: float = 0.0
    rho_var: float = 0.0
    early_term: int = 0
    missed_neighbors: int = 0
    t_neighbor: float = 0.0
    t_physics: float = 0.0
    t_rts: float = 0.0


STAT_COLUMNS = tuple(f.name for f in fields(StepStats))


def write_stats(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STAT_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, name) for name in STAT_COLUMNS])


def read_stats(path) -> list[StepStats]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            out.append(StepStats(**{f.name: _convert(f, rec[f.name]) for f in fields(StepStats)}))
    return out


def _convert(field, raw: str):
    if field.type in ("int", int):
        return int(raw)
    return float(raw)
