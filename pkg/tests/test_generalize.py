from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reidrisk.generalize import (
    generalize_dataset,
    generalize_spatial,
    generalize_temporal,
    profile_grid,
    record_points,
)
from reidrisk.model import DataError, GeneralizationProfile, Point, RawDataset, RawRecord, SpatialHierarchy
from reidrisk.synthgen import SynthConfig, generate

H = SpatialHierarchy(
    ["zip", "district", "municipality"],
    {
        "zip": {"t1": "z1", "t2": "z1", "t3": "z2"},
        "district": {"t1": "d1", "t2": "d1", "t3": "d1"},
        "municipality": {"t1": "m1", "t2": "m1", "t3": "m1"},
    },
)
DAY0 = datetime(2013, 3, 1)


def test_spatial_lookup():
    assert generalize_spatial("t1", "zip", H) == "z1"
    assert generalize_spatial("t3", "Municipality", H) == "m1"


def test_spatial_unmapped():
    with pytest.raises(DataError, match="t9 unmapped at zip"):
        generalize_spatial("t9", "zip", H)


def test_temporal_slices():
    assert generalize_temporal(datetime(2013, 3, 1, 16, 50), 6, DAY0) == 2
    assert generalize_temporal(datetime(2013, 3, 24, 19, 56), 24, DAY0) == 23


def test_four_pm_and_seven_pm():
    four, seven = datetime(2013, 3, 1, 16, 0), datetime(2013, 3, 1, 19, 0)
    assert (generalize_temporal(four, 6, DAY0), generalize_temporal(seven, 6, DAY0)) == (2, 3)
    assert generalize_temporal(four, 12, DAY0) == generalize_temporal(seven, 12, DAY0) == 1


def test_temporal_before_start():
    with pytest.raises(DataError):
        generalize_temporal(datetime(2013, 2, 28, 23, 59), 1, DAY0)


def _raw(rows):
    return RawDataset.from_records([RawRecord(u, t, ts) for u, t, ts in rows])


def test_dedup_under_coarsening():
    raw = _raw([("u1", "t1", datetime(2013, 3, 1, 10, 5)), ("u1", "t2", datetime(2013, 3, 1, 11, 30))])
    ds = generalize_dataset(raw, GeneralizationProfile("zip", 6), H)
    assert ds.trace_of("u1") == {Point("z1", 1)}
    assert ds.record_counts.tolist() == [2]


def test_single_record():
    raw = _raw([("u1", "t3", datetime(2013, 3, 2, 0, 0))])
    ds = generalize_dataset(raw, GeneralizationProfile("zip", 1), H)
    assert ds.trace_of("u1") == {Point("z2", 0)}
    assert ds.trace_sizes.tolist() == [1]


def test_unmapped_tower_fails_run():
    raw = _raw([("u1", "t1", DAY0), ("u2", "t9", DAY0)])
    with pytest.raises(DataError, match="t9"):
        generalize_dataset(raw, GeneralizationProfile("zip", 1), H)


def test_grid_is_cross_product():
    grid = profile_grid(["zip", "district", "municipality"], [1, 6, 12, 24])
    assert [p.label for p in grid] == ["Z1", "Z6", "Z12", "Z24", "D1", "D6", "D12", "D24", "M1", "M6", "M12", "M24"]


SMALL = SynthConfig(n_users=60, n_towers=40, zone_counts=(25, 8, 3), period_days=7, calls_median=12)
LEVELS = ("zip", "district", "municipality")
HOURS = (1, 6, 12, 24)


def _comparable_pairs():
    for i, fine_s in enumerate(LEVELS):
        for coarse_s in LEVELS[i:]:
            for j, fine_t in enumerate(HOURS):
                for coarse_t in HOURS[j:]:
                    if (fine_s, fine_t) != (coarse_s, coarse_t):
                        yield GeneralizationProfile(fine_s, fine_t), GeneralizationProfile(coarse_s, coarse_t)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coarsening_shrinks_every_trace(seed):
    raw, h = generate(SynthConfig(**{**SMALL.__dict__, "seed": seed}))
    sizes = {p: generalize_dataset(raw, p, h).trace_sizes for p in profile_grid(LEVELS, HOURS)}
    for fine, coarse in _comparable_pairs():
        assert (sizes[coarse] <= sizes[fine]).all()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_coarse_point_is_function_of_fine_point(seed):
    raw, h = generate(SynthConfig(**{**SMALL.__dict__, "seed": seed}))
    records = list(raw.records())
    start = raw.period_start.astype(datetime)

    def points(profile):
        zone = h.mapping(profile.spatial_level)
        g = profile.temporal_granularity
        return [(zone[r.tower_id], int((r.timestamp - start).total_seconds() // (3600 * g))) for r in records]

    table = {p: points(p) for p in profile_grid(LEVELS, HOURS)}
    for fine, coarse in _comparable_pairs():
        seen = {}
        for f, c in zip(table[fine], table[coarse]):
            assert seen.setdefault(f, c) == c


def test_generalize_is_deterministic():
    raw, h = generate(SynthConfig(**{**SMALL.__dict__, "seed": 5}))
    p = GeneralizationProfile("district", 6)
    a, b = generalize_dataset(raw, p, h), generalize_dataset(raw, p, h)
    assert a.traces == b.traces
    assert np.array_equal(a.post_users, b.post_users)


def test_record_points_dedupes_in_order():
    raw = _raw([("u1", "t1", datetime(2013, 3, 1, 10, 5)), ("u1", "t2", datetime(2013, 3, 1, 11, 30)),
                ("u1", "t3", datetime(2013, 3, 1, 9, 0))])
    pts = record_points(raw, [1, 2, 0], GeneralizationProfile("zip", 6), H)
    assert pts == (Point("z1", 1), Point("z2", 1))


def test_fast_path_matches_generic_construction():
    from reidrisk.generalize import _slices, _zone_codes
    from reidrisk.model import GeneralizedDataset
    from reidrisk.synthgen import SynthConfig, generate

    raw, h = generate(SynthConfig(n_users=300, n_towers=50, zone_counts=(30, 8, 3), period_days=5, seed=4))
    for level in h.levels:
        for hours in (1, 6, 24):
            prof = GeneralizationProfile(level, hours)
            fast = generalize_dataset(raw, prof, h)
            slow = GeneralizedDataset.from_codes(prof, raw.user_ids, h.zones(level), raw.user_idx,
                                                 _zone_codes(raw, level, h), _slices(raw, hours))
            for name in ("user_ids", "zone_ids", "point_zone", "point_slice", "trace_indptr",
                         "trace_points", "trace_counts", "post_indptr", "post_users"):
                np.testing.assert_array_equal(getattr(fast, name), getattr(slow, name), err_msg=name)
