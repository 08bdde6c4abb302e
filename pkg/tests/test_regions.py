"""Region assignment, smoothing, expansion, and observed-block derivation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rts_sph import assign_regions, derive_observed, expand_fast_regions, smooth_regions
from rts_sph.grid import dilate_mask, neighbor_min

MASS = 0.008  # 1000 kg/m^3 at 0.02 m spacing


def assign(v, f, occ=None, *, dt_base, block=0.04, c=100.0, alpha=1.0,
           betas=(np.nan, np.inf, 0.4, 0.08, 0.016), n_max=4, sound=False):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if occ is None:
        occ = np.ones(len(v), dtype=bool)
    return assign_regions(
        v, f, occ,
        dt_base=dt_base, block_size=block, particle_mass=MASS, sound_speed=c,
        lambda_v=0.4, lambda_f=0.25, alpha=alpha, betas=np.asarray(betas),
        n_max=n_max, use_sound_criterion=sound,
    )


# ----------------------------------------------------------------------
# per-block criteria
# ----------------------------------------------------------------------


def test_sound_criterion_caps_region():
    # acoustic bound lambda_v * r / c = 0.4*0.04/100 = 1.6e-4 s: with a
    # base step of 1e-4 s the doubled step 2e-4 already exceeds it
    r = assign([0.0], [0.0], dt_base=1e-4, sound=True)
    assert r[0] == 1
    # at dt_b = bound/4 the region-4 step equals the bound bit for bit
    bound = 0.4 * 0.04 / 100.0
    r = assign([0.0], [0.0], dt_base=0.25 * bound, sound=True)
    assert r[0] == 4


def test_sound_criterion_scales_inversely_with_sound_speed():
    # power-of-two sound speeds keep the halving exact in floats
    bound = 0.4 * 0.04 / 128.0
    r_slow = assign([0.0], [0.0], dt_base=0.25 * bound, c=128.0, sound=True)
    r_fast = assign([0.0], [0.0], dt_base=0.25 * bound, c=256.0, sound=True)
    assert r_slow[0] == 4
    assert r_fast[0] == 2  # halved acoustic bound halves the usable step


def test_velocity_criterion_worked_example():
    # 2 dt_b V / r = 0.477 exceeds alpha*beta_2 = 0.4, so the block
    # stays in region 1 despite zero force
    dt_b = 3.5e-4
    block = 0.044
    v = 0.477 * block / (2.0 * dt_b)
    r = assign([v], [0.0], dt_base=dt_b, block=block, alpha=1.0)
    assert r[0] == 1
    # just under the bound: region 2 becomes reachable (beta_3 then caps it)
    v_ok = 0.399 * block / (2.0 * dt_b)
    r = assign([v_ok], [0.0], dt_base=dt_b, block=block, alpha=1.0)
    assert r[0] == 2


def test_velocity_thresholds_all_regions():
    # desk-scale thresholds for dt_b=3.5e-4, r=0.044, alpha=1:
    # region 2 needs V <= 25.14, 3 needs V <= 3.352, 4 needs V <= 0.5029
    dt_b, block = 3.5e-4, 0.044
    cases = [(30.0, 1), (4.0, 2), (0.6, 3), (0.4, 4), (0.0, 4)]
    for v, expected in cases:
        r = assign([v], [0.0], dt_base=dt_b, block=block, alpha=1.0)
        assert r[0] == expected, f"V={v}"


def test_force_criterion():
    # dt_n <= lambda_f sqrt(r m / F): with r=0.04, m=0.008 the bound is
    # 0.25*sqrt(3.2e-4/F); F=100 N gives 4.47e-4 s, allowing region 2
    # at dt_b=2e-4 (4e-4 fits) but not region 3 (6e-4 exceeds)
    r = assign([0.0], [100.0], dt_base=2e-4)
    assert r[0] == 2
    # zero force leaves the step unconstrained
    r = assign([0.0], [0.0], dt_base=2e-4)
    assert r[0] == 4


def test_empty_blocks_stay_zero():
    occ = np.array([True, False, True])
    r = assign([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], occ, dt_base=1e-4)
    assert list(r) == [4, 0, 4]


def test_n_max_caps_assignment():
    r = assign([0.0], [0.0], dt_base=1e-4, n_max=2)
    assert r[0] == 2


@settings(max_examples=200, deadline=None)
@given(
    v=st.floats(min_value=0.0, max_value=50.0),
    f=st.floats(min_value=0.0, max_value=500.0),
    bump_v=st.floats(min_value=0.0, max_value=10.0),
    bump_f=st.floats(min_value=0.0, max_value=100.0),
)
def test_region_monotone_in_maxima(v, f, bump_v, bump_f):
    base = assign([v], [f], dt_base=7e-4, block=0.044)[0]
    harder = assign([v + bump_v], [f + bump_f], dt_base=7e-4, block=0.044)[0]
    assert harder <= base


@settings(max_examples=100, deadline=None)
@given(
    v=st.floats(min_value=0.0, max_value=50.0),
    f=st.floats(min_value=0.0, max_value=500.0),
)
def test_sound_criterion_only_restricts(v, f):
    with_sound = assign([v], [f], dt_base=4e-5, sound=True)[0]
    without = assign([v], [f], dt_base=4e-5, sound=False)[0]
    assert with_sound <= without


# ----------------------------------------------------------------------
# smoothing
# ----------------------------------------------------------------------


def field_1d(values):
    arr = np.asarray(values, dtype=np.int8)
    return arr, (len(values), 1, 1)


def test_smoothing_strip_example():
    # [1,1,3,3,3] -> [1,1,1,3,3]: the first region-3 block borders a 1
    raw, dims = field_1d([1, 1, 3, 3, 3])
    new, rmin = smooth_regions(raw, dims)
    assert list(new) == [1, 1, 1, 3, 3]
    assert list(rmin) == [False, False, True, False, False]


def test_smoothing_checkerboard_collapses_to_ones():
    field = np.fromfunction(lambda x, y, z: ((x + y + z) % 2) + 1, (6, 6, 6)).astype(np.int8)
    new, _ = smooth_regions(field.ravel(), (6, 6, 6))
    assert (new == 1).all()


def test_smoothing_never_raises_a_region():
    rng = np.random.default_rng(11)
    for _ in range(50):
        field = rng.integers(0, 5, size=(6, 5, 4)).astype(np.int8)
        new, rmin = smooth_regions(field.ravel(), field.shape)
        flat = field.ravel()
        assert (new <= flat).all()
        assert ((new < flat) == rmin).all()
        assert (new[flat == 0] == 0).all()


def test_smoothing_matches_min_of_neighbors_oracle():
    rng = np.random.default_rng(12)
    for _ in range(200):
        field = rng.integers(0, 5, size=(5, 6, 4)).astype(np.int8)
        new, _ = smooth_regions(field.ravel(), field.shape)
        pre = np.where(field > 0, field, np.int8(127))
        expected = np.minimum(field, neighbor_min(pre, np.int8(127)))
        expected[field == 0] = 0
        assert np.array_equal(new.reshape(field.shape), expected)


def test_smoothing_is_single_pass():
    # [1,3,5...] with a long gradient: one pass only pulls direct
    # neighbors down; the far end keeps its value (no cascading)
    raw, dims = field_1d([1, 4, 4, 4])
    new, _ = smooth_regions(raw, dims)
    assert list(new) == [1, 1, 4, 4]


# ----------------------------------------------------------------------
# expansion
# ----------------------------------------------------------------------


def test_expansion_grows_region_one_into_cube():
    field = np.full((11, 11, 11), 4, dtype=np.int8)
    field[5, 5, 5] = 1
    out = expand_fast_regions(field.ravel(), field.shape).reshape(field.shape)
    ones = out == 1
    assert ones.sum() == 9**3
    assert ones[1:10, 1:10, 1:10].all()


def test_expansion_grows_region_two():
    field = np.full((11, 11, 11), 4, dtype=np.int8)
    field[5, 5, 5] = 2
    out = expand_fast_regions(field.ravel(), field.shape).reshape(field.shape)
    assert (out == 2).sum() == 9**3


def test_expansion_region_one_wins_overlap():
    field = np.full((13, 5, 5), 4, dtype=np.int8)
    field[2, 2, 2] = 1
    field[8, 2, 2] = 2
    out = expand_fast_regions(field.ravel(), field.shape).reshape(field.shape)
    # block (6,2,2) is within 4 of both seeds: region 1 takes precedence
    assert out[6, 2, 2] == 1
    assert out[11, 2, 2] == 2  # reached only by the region-2 seed
    assert out[12, 2, 2] == 2
    assert (out > 0).all()


def test_expansion_does_not_touch_empty_blocks():
    field = np.full((9, 9, 9), 4, dtype=np.int8)
    field[4, 4, 4] = 1
    field[0, 0, 0] = 0
    out = expand_fast_regions(field.ravel(), field.shape).reshape(field.shape)
    assert out[0, 0, 0] == 0


def test_expansion_matches_chebyshev_dilation():
    rng = np.random.default_rng(13)
    for _ in range(30):
        field = rng.integers(0, 5, size=(7, 6, 5)).astype(np.int8)
        out = expand_fast_regions(field.ravel(), field.shape).reshape(field.shape)
        near2 = dilate_mask(field == 2, 4)
        near1 = dilate_mask(field == 1, 4)
        expected = field.copy()
        expected[(field > 2) & near2] = 2
        expected[(expected > 1) & near1 & (field > 0)] = 1
        assert np.array_equal(out, expected)


# ----------------------------------------------------------------------
# observed blocks
# ----------------------------------------------------------------------


def test_observed_along_region_steps():
    # regions [1,1,2,2]: only the first region-2 block touches a
    # smaller-step region and is observed
    raw, dims = field_1d([1, 1, 2, 2])
    obs = derive_observed(raw, dims, np.zeros(4, dtype=bool))
    assert list(obs) == [False, False, True, False]


def test_observed_ignores_empty_neighbors():
    raw, dims = field_1d([0, 2, 2, 2])
    obs = derive_observed(raw, dims, np.zeros(4, dtype=bool))
    assert not obs.any()


def test_observed_wraps_error_blocks():
    field = np.full((5, 5, 5), 2, dtype=np.int8)
    err = np.zeros((5, 5, 5), dtype=bool)
    err[2, 2, 2] = True
    obs = derive_observed(field.ravel(), field.shape, err.ravel()).reshape(field.shape)
    assert not obs[2, 2, 2]  # the error block itself is handled via S_e
    assert obs[1:4, 1:4, 1:4].sum() == 26  # its full occupied shell
    assert not obs[0].any()


def test_observed_error_shell_respects_occupancy():
    field = np.array([0, 2, 2], dtype=np.int8)
    err = np.array([False, True, False])
    obs = derive_observed(field, (3, 1, 1), err)
    assert list(obs) == [False, False, True]
