"""Spatial and temporal coarsening of raw records into generalized datasets."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .model import (
    DataError,
    GeneralizationProfile,
    GeneralizedDataset,
    Point,
    RawDataset,
    SpatialHierarchy,
)


def generalize_spatial(tower_id: str, level: str, hierarchy: SpatialHierarchy) -> str:
    lv = hierarchy.resolve_level(level)
    pos = hierarchy.tower_positions([tower_id])[0]
    if pos < 0:
        raise DataError(f"{tower_id} unmapped at {lv}")
    return hierarchy.zones(lv)[hierarchy.codes(lv)[pos]]


def generalize_temporal(timestamp, granularity_hours: int, period_start) -> int:
    """Index of the ``granularity_hours``-wide slice holding ``timestamp``.

    Slices start at local midnight of ``period_start`` (which callers normally
    pass already floored to midnight).
    """
    t = np.datetime64(timestamp, "m")
    anchor = np.datetime64(period_start, "D").astype("datetime64[m]")
    if t < np.datetime64(period_start, "m"):
        raise DataError(f"timestamp {t} precedes period start {period_start}")
    minutes = int((t - anchor).astype(np.int64))
    return minutes // (60 * granularity_hours)


def _slices(raw: RawDataset, granularity_hours: int) -> np.ndarray:
    return raw.minutes // (60 * granularity_hours)


def _tower_zones(raw: RawDataset, level: str, hierarchy: SpatialHierarchy) -> np.ndarray:
    """Zone code of each of ``raw.tower_ids``."""
    pos = hierarchy.tower_positions(raw.tower_ids)
    if (pos < 0).any():
        missing = raw.tower_ids[np.flatnonzero(pos < 0)[0]]
        raise DataError(f"{missing} unmapped at {hierarchy.resolve_level(level)}")
    return hierarchy.codes(level)[pos]


def _zone_codes(raw: RawDataset, level: str, hierarchy: SpatialHierarchy) -> np.ndarray:
    return _tower_zones(raw, level, hierarchy)[raw.tower_idx]


def generalize_dataset(
    raw: RawDataset, profile: GeneralizationProfile, hierarchy: SpatialHierarchy
) -> GeneralizedDataset:
    """Map every record to (zone, slice) and collapse duplicates per user."""
    level = hierarchy.resolve_level(profile.spatial_level)
    profile = GeneralizationProfile(level, profile.temporal_granularity)
    zones = hierarchy.zones(level)
    n_slices = period_slices(raw, profile.temporal_granularity)
    indptr, cells, counts = _kernels.generalized_traces(
        raw.user_offsets.astype(np.int64), raw.tower_idx, _tower_zones(raw, level, hierarchy).astype(np.int64),
        raw.minutes, 60 * profile.temporal_granularity, n_slices,
    )
    # dense cell -> point numbering keeps (zone, slice) order
    used = np.zeros(len(zones) * n_slices, dtype=bool)
    used[cells] = True
    cell_ids = np.flatnonzero(used)
    point_of_cell = np.cumsum(used, dtype=np.int64) - 1
    zones_used, zone_code = np.unique(cell_ids // n_slices, return_inverse=True)
    return GeneralizedDataset(
        profile,
        np.asarray(raw.user_ids, dtype=object),
        np.asarray(zones, dtype=object)[zones_used],
        zone_code.astype(np.int32),
        (cell_ids % n_slices).astype(np.int32),
        indptr,
        point_of_cell[cells].astype(np.int32),
        counts,
    )


def record_points(
    raw: RawDataset, record_index, profile: GeneralizationProfile, hierarchy: SpatialHierarchy
) -> tuple[Point, ...]:
    """Generalized points of selected raw records, first-seen order, duplicates removed.

    Lets the same raw auxiliary knowledge be projected through several
    profiles.
    """
    idx = np.asarray(record_index, dtype=np.int64)
    level = hierarchy.resolve_level(profile.spatial_level)
    pos = hierarchy.tower_positions(raw.tower_ids[raw.tower_idx[idx]])
    if (pos < 0).any():
        raise DataError(f"{raw.tower_ids[raw.tower_idx[idx[pos < 0][0]]]} unmapped at {level}")
    zone_names = hierarchy.zones(level)[hierarchy.codes(level)[pos]]
    slices = _slices(raw, profile.temporal_granularity)[idx]
    out: dict[Point, None] = {}
    for z, s in zip(zone_names, slices):
        out[Point(z, int(s))] = None
    return tuple(out)


def profile_grid(spatial_levels, temporal_granularities) -> list[GeneralizationProfile]:
    return [GeneralizationProfile(s, int(t)) for s in spatial_levels for t in temporal_granularities]


def period_slices(raw: RawDataset, granularity_hours: int) -> int:
    return -(-raw.period_minutes // (60 * granularity_hours))

