import io

import numpy as np
import pytest

from reidrisk.ingest import write_cdr, write_spatial_map
from reidrisk.synthgen import DEFAULT_DIURNAL, SynthConfig, generate

SMALL = SynthConfig(n_users=400, n_towers=120, zone_counts=(60, 12, 4), period_days=10, seed=7)


def _bytes(raw, hierarchy):
    a, b = io.StringIO(), io.StringIO()
    write_cdr(raw, a)
    write_spatial_map(hierarchy, b)
    return a.getvalue(), b.getvalue()


def test_single_user_single_call():
    cfg = SynthConfig(n_users=1, n_towers=3, zone_counts=(3, 2, 1), calls_median=1, calls_sigma=0, period_days=2)
    raw, h = generate(cfg)
    assert len(raw) == 1 and raw.n_users == 1
    assert raw.period_start <= raw.times[0].astype(object) < raw.period_end
    assert raw.tower_ids[raw.tower_idx[0]] in h.mapping("zip")


def test_deterministic():
    assert _bytes(*generate(SMALL)) == _bytes(*generate(SMALL))
    other = SynthConfig(**{**SMALL.__dict__, "seed": 8})
    assert _bytes(*generate(SMALL)) != _bytes(*generate(other))


def test_every_user_and_tower_covered():
    raw, h = generate(SMALL)
    assert raw.n_users == SMALL.n_users
    assert np.all(np.diff(raw.user_offsets) >= 1)
    for level in h.levels:
        assert set(h.mapping(level)) == set(h.tower_ids)
    assert [len(h.zones(lv)) for lv in h.levels] == list(SMALL.zone_counts)


def test_default_hierarchy_sizes_and_nesting():
    raw, h = generate(SynthConfig(n_users=10))
    assert [len(h.zones(lv)) for lv in h.levels] == [2130, 156, 56]
    for fine, coarse in zip(h.levels, h.levels[1:]):
        parent = {}
        for t in h.tower_ids:
            z, p = h.mapping(fine)[t], h.mapping(coarse)[t]
            assert parent.setdefault(z, p) == p


def test_call_count_median():
    cfg = SynthConfig(n_users=10_000, period_days=30)
    raw, _ = generate(cfg)
    counts = np.diff(raw.user_offsets)
    assert abs(np.median(counts) - cfg.calls_median) <= 0.1 * cfg.calls_median


def test_diurnal_profile():
    raw, _ = generate(SynthConfig(n_users=3000, n_towers=200, zone_counts=(100, 20, 5), seed=2))
    hours = (raw.times.astype("datetime64[h]") - raw.times.astype("datetime64[D]")).astype(int)
    observed = np.bincount(hours, minlength=24)
    w = np.asarray(DEFAULT_DIURNAL) / sum(DEFAULT_DIURNAL)
    expected = w * observed.sum()
    chi2 = ((observed - expected) ** 2 / expected).sum()
    assert chi2 < 80  # 23 dof; p-value far below 1e-6 beyond this


def test_timestamps_span_period():
    raw, _ = generate(SMALL)
    days = (raw.times.astype("datetime64[D]") - raw.times.min().astype("datetime64[D]")).astype(int)
    assert days.max() == SMALL.period_days - 1


@pytest.mark.parametrize("kwargs", [
    {"n_towers": 10, "zone_counts": (20, 5, 2)},
    {"zone_counts": (100, 200, 50)},
    {"n_users": 0},
    {"zone_counts": (10, 5)},
    {"diurnal": (1,) * 23},
])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)
