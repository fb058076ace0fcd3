"""Synthetic CDR data with a nested spatial hierarchy.

Each user gets a small set of anchor towers (home plus a few others, mostly
inside the home municipality) visited with Zipf weights, a log-normal call
volume, and call times drawn from a diurnal profile.  Enough sparsity and
skew for desk-scale experiments; no trajectory realism intended.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np
import pandas as pd

from .model import RawDataset, SpatialHierarchy

# relative call volume per hour of day, 00h..23h
DEFAULT_DIURNAL = (
    1, 0.5, 0.3, 0.2, 0.2, 0.4, 1, 2.5, 4, 5, 5.5, 6,
    6, 5.5, 5.5, 5.5, 6, 6.5, 7, 7, 6, 5, 3.5, 2,
)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 10_000
    n_towers: int = 2130
    level_names: tuple = ("zip", "district", "municipality")
    zone_counts: tuple = (2130, 156, 56)
    period_days: int = 30
    start_date: date = date(2013, 3, 1)
    calls_median: float = 50.0
    calls_sigma: float = 1.0
    n_anchors: int = 5
    zipf_exponent: float = 1.0
    locality: float = 0.8  # chance a non-home anchor lies in the home municipality
    diurnal: tuple = DEFAULT_DIURNAL
    timezone: str = "UTC"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_users", "n_towers", "period_days", "n_anchors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if len(self.level_names) != len(self.zone_counts) or not self.zone_counts:
            raise ValueError("need one zone count per level")
        if min(self.zone_counts) < 1:
            raise ValueError("zone counts must be positive")
        chain = (self.n_towers,) + tuple(self.zone_counts)
        for finer, coarser in zip(chain, chain[1:]):
            if finer < coarser:
                raise ValueError(f"infeasible branching {chain}: a finer level cannot have fewer zones")
        if self.calls_median < 1 or self.calls_sigma < 0:
            raise ValueError("calls_median must be >= 1 and calls_sigma >= 0")
        if len(self.diurnal) != 24 or min(self.diurnal) < 0 or sum(self.diurnal) <= 0:
            raise ValueError("diurnal profile needs 24 non-negative weights")
        if not 0 <= self.locality <= 1:
            raise ValueError("locality must lie in [0, 1]")


def _ids(prefix: str, n: int) -> np.ndarray:
    width = len(str(n))
    return np.array([f"{prefix}{i:0{width}d}" for i in range(1, n + 1)], dtype=object)


def _surjection(rng, n_from: int, n_to: int) -> np.ndarray:
    """Random map of n_from items onto n_to groups, every group hit at least once."""
    parents = np.concatenate([np.arange(n_to), rng.integers(0, n_to, size=n_from - n_to)])
    return rng.permutation(parents)


def generate_hierarchy(config: SynthConfig, rng: np.random.Generator) -> tuple[SpatialHierarchy, np.ndarray]:
    """Hierarchy plus each tower's coarsest-level zone code."""
    towers = _ids("T", config.n_towers)
    codes = np.arange(config.n_towers)
    columns = []
    chain = (config.n_towers,) + tuple(config.zone_counts)
    for lv, (n_from, n_to) in zip(config.level_names, zip(chain, chain[1:])):
        codes = _surjection(rng, n_from, n_to)[codes]
        columns.append(_ids(lv[:1].upper(), n_to)[codes])
    return SpatialHierarchy.from_columns(config.level_names, towers, columns), codes


def generate(config: SynthConfig = SynthConfig()) -> tuple[RawDataset, SpatialHierarchy]:
    rng = np.random.default_rng(config.seed)
    hierarchy, top_zone = generate_hierarchy(config, rng)
    n = config.n_users

    user_ids = np.array([rng.bytes(11).hex().upper() for _ in range(n)], dtype=object)
    if len(set(user_ids)) != n:
        raise RuntimeError("pseudonym collision; pick another seed")
    calls = np.maximum(
        1, np.rint(rng.lognormal(np.log(config.calls_median), config.calls_sigma, size=n))
    ).astype(np.int64)

    # anchors: home tower, then others near home with prob `locality`
    by_zone = np.argsort(top_zone, kind="stable")
    zone_start = np.searchsorted(top_zone[by_zone], np.arange(config.zone_counts[-1]))
    zone_size = np.bincount(top_zone, minlength=config.zone_counts[-1])
    home = rng.integers(0, config.n_towers, size=n)
    k = config.n_anchors
    local = rng.random((n, k - 1)) < config.locality
    hz = top_zone[home][:, None]
    nearby = by_zone[zone_start[hz] + (rng.random((n, k - 1)) * zone_size[hz]).astype(np.int64)]
    anywhere = rng.integers(0, config.n_towers, size=(n, k - 1))
    anchors = np.concatenate([home[:, None], np.where(local, nearby, anywhere)], axis=1)

    weights = np.arange(1, k + 1, dtype=np.float64) ** -config.zipf_exponent
    cdf = np.cumsum(weights / weights.sum())
    rec_user = np.repeat(np.arange(n), calls)
    m = len(rec_user)
    slot = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), k - 1)
    rec_tower = anchors[rec_user, slot]

    hour_p = np.asarray(config.diurnal, dtype=np.float64)
    hours = rng.choice(24, size=m, p=hour_p / hour_p.sum())
    days = rng.integers(0, config.period_days, size=m)
    minutes = rng.integers(0, 60, size=m)
    start = np.datetime64(config.start_date, "m")
    times = start + (days * 1440 + hours * 60 + minutes).astype("timedelta64[m]")
    receivers = rng.integers(0, n, size=m)

    raw = RawDataset(
        pd.Categorical.from_codes(rec_user, categories=user_ids),
        pd.Categorical.from_codes(rec_tower, categories=hierarchy.tower_ids),
        times,
        receiver_ids=pd.Categorical.from_codes(receivers, categories=user_ids),
        timezone=config.timezone,
        period_start=start.astype(object),
        period_end=(start + np.timedelta64(config.period_days * 1440, "m")).astype(object),
    )
    return raw, hierarchy
