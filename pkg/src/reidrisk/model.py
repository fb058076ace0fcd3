"""Domain types shared across the package.

Raw data is held column-wise (numpy arrays of integer codes into sorted
string tables) so that datasets with millions of records stay cheap;
row-level views (``RawRecord``, ``UserTrace``, ``Point``) are materialised
on demand.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import cached_property
from typing import NamedTuple, Optional
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from . import _kernels

MINUTES_PER_DAY = 24 * 60


class DataError(ValueError):
    """Malformed or inconsistent input data (as opposed to bad arguments)."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class HierarchyError(DataError):
    pass


# ---------------------------------------------------------------------------
# raw records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawRecord:
    caller_id: str
    tower_id: str
    timestamp: datetime
    receiver_id: Optional[str] = None


def _to_minutes(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind != "M":
        arr = np.array([np.datetime64(v) for v in values])
    return arr.astype("datetime64[m]")


def _factorize(values, name: str) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(values, pd.Categorical):
        # factorize keeps category order, which need not be lexicographic
        values = values.remove_unused_categories()
        values = values.reorder_categories(sorted(values.categories, key=str))
    else:
        values = pd.Series(values, dtype=object).astype(str)
    codes, uniques = pd.factorize(values, sort=True)
    uniques = np.asarray(uniques, dtype=object)
    if (codes < 0).any():
        raise DataError(f"missing {name} in record {int(np.flatnonzero(codes < 0)[0])}")
    if len(uniques) and uniques[0] == "":
        raise DataError(f"empty {name} in record {int(np.flatnonzero(codes == 0)[0])}")
    return codes.astype(np.int32), uniques


def _floor_day(t: np.datetime64) -> np.datetime64:
    return t.astype("datetime64[D]").astype("datetime64[m]")


class RawDataset:
    """Call records grouped by caller, stored as coded columns.

    Timestamps are naive wall-clock times in ``timezone``; slice arithmetic
    downstream works on that local calendar time.
    """

    def __init__(
        self,
        caller_ids: Sequence[str],
        tower_ids: Sequence[str],
        timestamps,
        receiver_ids: Optional[Sequence[Optional[str]]] = None,
        timezone: str = "UTC",
        period_start: Optional[datetime] = None,
        period_end: Optional[datetime] = None,
    ):
        times = _to_minutes(timestamps)
        if not (len(caller_ids) == len(tower_ids) == len(times)):
            raise ValueError("column lengths differ")
        if len(times) == 0:
            raise DataError("dataset has no records")
        ZoneInfo(timezone)  # raises on unknown zone names
        self.timezone = timezone

        user_idx, self.user_ids = _factorize(caller_ids, "caller_id")
        tower_idx, self.tower_ids = _factorize(tower_ids, "tower_id")
        order = np.lexsort((times.astype(np.int64), user_idx))
        self.user_idx = user_idx[order]
        self.tower_idx = tower_idx[order]
        self.times = times[order]
        if receiver_ids is not None:
            self.receivers = pd.Categorical(receiver_ids)[order]
        else:
            self.receivers = None

        lo, hi = self.times.min(), self.times.max()
        start = np.datetime64(period_start, "m") if period_start is not None else _floor_day(lo)
        end = (
            np.datetime64(period_end, "m")
            if period_end is not None
            else _floor_day(hi) + np.timedelta64(MINUTES_PER_DAY, "m")
        )
        if lo < start or hi >= end:
            raise DataError(f"timestamps fall outside period [{start}, {end})")
        self.period_start = start
        self.period_end = end
        for arr in (self.user_idx, self.tower_idx, self.times):
            arr.flags.writeable = False

    @classmethod
    def from_records(cls, records: Iterable[RawRecord], **kwargs) -> "RawDataset":
        records = list(records)
        return cls(
            [r.caller_id for r in records],
            [r.tower_id for r in records],
            [r.timestamp for r in records],
            receiver_ids=[r.receiver_id for r in records],
            **kwargs,
        )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def period_minutes(self) -> int:
        return int((self.period_end - self.period_start).astype(np.int64))

    @cached_property
    def minutes(self) -> np.ndarray:
        """Minutes since midnight of the period's first day, per record."""
        anchor = self.period_start.astype("datetime64[D]").astype("datetime64[m]")
        out = (self.times - anchor).astype(np.int64)
        out.flags.writeable = False
        return out

    @cached_property
    def user_offsets(self) -> np.ndarray:
        counts = np.bincount(self.user_idx, minlength=self.n_users)
        return np.concatenate(([0], np.cumsum(counts)))

    def records(self) -> Iterator[RawRecord]:
        for i in range(len(self)):
            yield self._record(i)

    def records_for(self, user_id: str) -> list[RawRecord]:
        u = int(np.searchsorted(self.user_ids, user_id))
        if u >= self.n_users or self.user_ids[u] != user_id:
            raise KeyError(user_id)
        lo, hi = self.user_offsets[u], self.user_offsets[u + 1]
        return [self._record(i) for i in range(lo, hi)]

    def _record(self, i: int) -> RawRecord:
        rec = None if self.receivers is None else self.receivers[i]
        return RawRecord(
            caller_id=self.user_ids[self.user_idx[i]],
            tower_id=self.tower_ids[self.tower_idx[i]],
            timestamp=self.times[i].astype(datetime),
            receiver_id=None if pd.isna(rec) else str(rec),
        )


# ---------------------------------------------------------------------------
# spatial hierarchy
# ---------------------------------------------------------------------------


class SpatialHierarchy:
    """Nested tower -> zone mappings, levels ordered finest to coarsest.

    Level names are matched case-insensitively.  Zone ids per level are kept
    in a sorted table and each tower carries an integer code into it.
    """

    def __init__(self, levels: Sequence[str], tower_to_zone: Mapping[str, Mapping[str, str]]):
        levels = list(levels)
        if not levels:
            raise HierarchyError("hierarchy needs at least one level")
        if len({lv.lower() for lv in levels}) != len(levels):
            raise HierarchyError(f"duplicate level names in {levels}")
        towers = sorted(set().union(*(m.keys() for m in tower_to_zone.values())))
        table = []
        for lv in levels:
            mapping = tower_to_zone[lv]
            missing = [t for t in towers if t not in mapping]
            if missing:
                raise HierarchyError(f"tower {missing[0]} unmapped at {lv}")
            table.append([mapping[t] for t in towers])
        self._init_arrays(levels, np.array(towers, dtype=object), table)

    @classmethod
    def from_columns(cls, levels: Sequence[str], tower_ids, zone_columns) -> "SpatialHierarchy":
        """Build from one tower column plus one zone column per level (no duplicates)."""
        self = cls.__new__(cls)
        tower_ids = np.asarray(tower_ids, dtype=object)
        order = np.argsort(tower_ids.astype(str), kind="stable")
        sorted_towers = tower_ids[order]
        if len(sorted_towers) > 1 and (sorted_towers[1:] == sorted_towers[:-1]).any():
            raise HierarchyError("duplicate tower rows")
        self._init_arrays(list(levels), sorted_towers, [np.asarray(c, dtype=object)[order] for c in zone_columns])
        return self

    def _init_arrays(self, levels, towers, columns):
        self.levels = tuple(levels)
        self.tower_ids = towers
        self._zones: dict[str, np.ndarray] = {}
        self._codes: dict[str, np.ndarray] = {}
        for lv, col in zip(self.levels, columns):
            names, codes = np.unique(np.asarray(col).astype(str), return_inverse=True)
            self._zones[lv] = names.astype(object)
            self._codes[lv] = codes.astype(np.int32)
        self._check_nesting()

    def _check_nesting(self):
        for fine, coarse in zip(self.levels, self.levels[1:]):
            f, c = self._codes[fine], self._codes[coarse]
            order = np.lexsort((c, f))
            fs, cs = f[order], c[order]
            bad = np.flatnonzero((fs[1:] == fs[:-1]) & (cs[1:] != cs[:-1]))
            if len(bad):
                t1, t2 = self.tower_ids[order[bad[0]]], self.tower_ids[order[bad[0] + 1]]
                raise HierarchyError(
                    f"nesting violated: towers {t1} and {t2} share {fine} zone "
                    f"{self._zones[fine][fs[bad[0]]]} but differ at {coarse}"
                )

    def resolve_level(self, name: str) -> str:
        for lv in self.levels:
            if lv.lower() == name.lower():
                return lv
        raise KeyError(f"unknown spatial level {name!r}; known: {', '.join(self.levels)}")

    def zones(self, level: str) -> np.ndarray:
        return self._zones[self.resolve_level(level)]

    def codes(self, level: str) -> np.ndarray:
        """Zone code (index into ``zones(level)``) for each tower in ``tower_ids`` order."""
        return self._codes[self.resolve_level(level)]

    def tower_positions(self, tower_ids) -> np.ndarray:
        """Row index of each tower id; -1 where unmapped."""
        tower_ids = np.asarray(tower_ids, dtype=object).astype(str)
        known = self.tower_ids.astype(str)
        pos = np.searchsorted(known, tower_ids)
        pos = np.minimum(pos, len(known) - 1)
        hit = known[pos] == tower_ids
        return np.where(hit, pos, -1)

    def mapping(self, level: str) -> dict[str, str]:
        lv = self.resolve_level(level)
        zones = self._zones[lv]
        return {t: zones[c] for t, c in zip(self.tower_ids, self._codes[lv])}

    def __len__(self) -> int:
        return len(self.tower_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpatialHierarchy):
            return NotImplemented
        return self.levels == other.levels and all(self.mapping(lv) == other.mapping(lv) for lv in self.levels)


# ---------------------------------------------------------------------------
# generalized data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class GeneralizationProfile:
    spatial_level: str
    temporal_granularity: int

    def __post_init__(self):
        g = self.temporal_granularity
        if not isinstance(g, (int, np.integer)) or g < 1 or 24 % g:
            raise ValueError(f"temporal granularity must divide 24 hours, got {g!r}")

    @property
    def label(self) -> str:
        return f"{self.spatial_level[:1].upper()}{self.temporal_granularity}"

    def __str__(self) -> str:
        return self.label


class Point(NamedTuple):
    zone_id: str
    slice_index: int


@dataclass(frozen=True)
class UserTrace:
    user_id: str
    points: frozenset

    def __post_init__(self):
        object.__setattr__(self, "points", frozenset(Point(*p) for p in self.points))
        if not self.points:
            raise ValueError(f"trace of {self.user_id} is empty")

    @property
    def size(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class AuxPoints:
    user_id: str
    points: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(Point(*p) for p in self.points)
        if len(set(pts)) != len(pts):
            raise ValueError("auxiliary points contain duplicates")
        object.__setattr__(self, "points", pts)


def _frozen(*arrays):
    for a in arrays:
        a.flags.writeable = False


class GeneralizedDataset:
    """Immutable D_g: deduplicated per-user traces plus the point -> users index.

    Traces and postings are CSR arrays over dense integer ids.  User ids and
    points are numbered in lexicographic order, so integer order within a
    trace or posting equals identifier order.
    """

    def __init__(self, profile, user_ids, zone_ids, point_zone, point_slice,
                 trace_indptr, trace_points, trace_counts):
        self.profile = profile
        self.user_ids = user_ids
        self.zone_ids = zone_ids
        self.point_zone = point_zone
        self.point_slice = point_slice
        self.trace_indptr = trace_indptr
        self.trace_points = trace_points
        self.trace_counts = trace_counts

        self.post_indptr, self.post_users = _kernels.postings(
            np.asarray(trace_indptr, dtype=np.int64), np.asarray(trace_points, dtype=np.int32), len(point_zone)
        )
        _frozen(self.user_ids, self.zone_ids, self.point_zone, self.point_slice, self.trace_indptr,
                self.trace_points, self.trace_counts, self.post_users, self.post_indptr)

    @classmethod
    def from_codes(cls, profile, user_ids, zone_ids, rec_user, rec_zone, rec_slice) -> "GeneralizedDataset":
        """Dedupe per-record (user, zone, slice) codes into traces.

        ``user_ids`` and ``zone_ids`` must be sorted; codes index into them.
        Users with no record are dropped.
        """
        rec_user = np.asarray(rec_user, dtype=np.int64)
        rec_zone = np.asarray(rec_zone, dtype=np.int64)
        rec_slice = np.asarray(rec_slice, dtype=np.int64)
        n_slices = int(rec_slice.max()) + 1
        cells = len(zone_ids) * n_slices
        key = rec_user * cells + rec_zone * n_slices + rec_slice
        uniq, counts = np.unique(key, return_counts=True)
        users, cell = np.divmod(uniq, cells)

        # uniq is sorted, so users already is
        first = np.empty(len(users), dtype=bool)
        first[:1] = True
        np.not_equal(users[1:], users[:-1], out=first[1:])
        present = users[first]
        users = np.cumsum(first) - 1
        cell_ids, point_of = np.unique(cell, return_inverse=True)
        zones_used, zone_code = np.unique(cell_ids // n_slices, return_inverse=True)
        indptr = np.concatenate(([0], np.cumsum(np.bincount(users, minlength=len(present)))))
        return cls(
            profile,
            np.asarray(user_ids, dtype=object)[present],
            np.asarray(zone_ids, dtype=object)[zones_used],
            zone_code.astype(np.int32),
            (cell_ids % n_slices).astype(np.int32),
            indptr.astype(np.int64),
            point_of.astype(np.int32),
            counts.astype(np.int32),
        )

    @property
    def n(self) -> int:
        return len(self.user_ids)

    @property
    def n_points(self) -> int:
        return len(self.point_zone)

    def __len__(self) -> int:
        return self.n

    @cached_property
    def trace_sizes(self) -> np.ndarray:
        return np.diff(self.trace_indptr)

    @cached_property
    def record_counts(self) -> np.ndarray:
        """Raw records per user (after generalization, before dedup)."""
        return np.add.reduceat(self.trace_counts, self.trace_indptr[:-1]).astype(np.int64)

    @cached_property
    def _user_pos(self) -> dict:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def _point_pos(self) -> dict:
        return {self.point(i): i for i in range(self.n_points)}

    def user_index(self, user_id: str) -> int:
        try:
            return self._user_pos[user_id]
        except KeyError:
            raise KeyError(f"unknown user {user_id!r}") from None

    def point_index(self, point) -> int:
        return self._point_pos[Point(*point)]

    def point(self, idx: int) -> Point:
        return Point(self.zone_ids[self.point_zone[idx]], int(self.point_slice[idx]))

    def trace_of(self, user_id: str) -> frozenset:
        u = self.user_index(user_id)
        return frozenset(self.point(p) for p in self.trace_points[self.trace_indptr[u]:self.trace_indptr[u + 1]])

    def posting(self, point) -> tuple:
        p = self._point_pos.get(Point(*point))
        if p is None:
            return ()
        return tuple(self.user_ids[self.post_users[self.post_indptr[p]:self.post_indptr[p + 1]]])

    @cached_property
    def traces(self) -> tuple:
        return tuple(UserTrace(u, self.trace_of(u)) for u in self.user_ids)

    @cached_property
    def inverted_index(self) -> Mapping:
        return {self.point(p): self.posting(self.point(p)) for p in range(self.n_points)}


def build_generalized_dataset(traces: Iterable[UserTrace], profile: GeneralizationProfile) -> GeneralizedDataset:
    traces = list(traces)
    if not traces:
        raise ValueError("no traces given")
    seen = set()
    for t in traces:
        if t.user_id in seen:
            raise ValueError(f"duplicate user_id {t.user_id!r}")
        seen.add(t.user_id)
    user_ids = np.array(sorted(seen), dtype=object)
    zone_ids = np.array(sorted({p.zone_id for t in traces for p in t.points}), dtype=object)
    upos = {u: i for i, u in enumerate(user_ids)}
    zpos = {z: i for i, z in enumerate(zone_ids)}
    rows = [(upos[t.user_id], zpos[p.zone_id], p.slice_index) for t in traces for p in t.points]
    rec_user, rec_zone, rec_slice = (np.array(c, dtype=np.int64) for c in zip(*rows))
    if (rec_slice < 0).any():
        raise ValueError("slice_index must be non-negative")
    return GeneralizedDataset.from_codes(profile, user_ids, zone_ids, rec_user, rec_zone, rec_slice)
