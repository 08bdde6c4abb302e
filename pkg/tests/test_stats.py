"""CSV roundtrip for the per-step counters."""

from dataclasses import asdict

from rts_sph.stats import STAT_COLUMNS, StepStats, read_stats, write_stats


def test_roundtrip_preserves_values(tmp_path):
    rows = [
        StepStats(step=1, time=1.25e-3, dt=1.25e-3, n_compute=100, frac_compute=0.1,
                  iterations=4, corrected=400, iters_r1=4, iters_r2=2, iters_r3=1,
                  iters_r4=1, max_err=0.0087, avg_err=0.00042, rho_var=1.5e-4,
                  early_term=0, missed_neighbors=0, t_neighbor=0.01, t_physics=0.02,
                  t_rts=0.003),
        StepStats(step=2, time=2.5e-3, dt=1.25e-3, early_term=1, missed_neighbors=3),
    ]
    path = tmp_path / "stats.csv"
    write_stats(path, rows)
    back = read_stats(path)
    assert len(back) == 2
    for a, b in zip(rows, back):
        assert asdict(a) == asdict(b)


def test_round_trip_types(tmp_path):
    path = tmp_path / "stats.csv"
    write_stats(path, [StepStats(step=7, iterations=9)])
    (row,) = read_stats(path)
    assert isinstance(row.step, int)
    assert isinstance(row.iterations, int)
    assert isinstance(row.dt, float)
    assert isinstance(row.frac_compute, float)


def test_header_matches_field_order(tmp_path):
    path = tmp_path / "stats.csv"
    write_stats(path, [])
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == STAT_COLUMNS


def test_empty_file_roundtrip(tmp_path):
    path = tmp_path / "stats.csv"
    write_stats(path, [])
    assert read_stats(path) == []
