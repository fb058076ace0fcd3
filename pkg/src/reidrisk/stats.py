"""Bootstrap intervals, Pareto dominance and report assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def bootstrap_ci(values, B: int = 1000, alpha: float = 0.05, seed=0) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean.

    Resamples ``values`` with replacement ``B`` times and returns the
    ``alpha/2`` and ``1 - alpha/2`` quantiles of the resampled means.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = values.size
    means = np.empty(B)
    chunk = max(1, 2_000_000 // n)
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        means[lo:hi] = values[rng.integers(0, n, size=(hi - lo, n))].mean(axis=1)
    low, high = np.quantile(means, [alpha / 2, 1 - alpha / 2])
    # float summation can step a hair outside the data range
    lo_v, hi_v = values.min(), values.max()
    return float(np.clip(low, lo_v, hi_v)), float(np.clip(high, lo_v, hi_v))


@dataclass(frozen=True)
class ParetoPoint:
    label: str
    utility: float
    privacy: float

    def __post_init__(self):
        if not (np.isfinite(self.utility) and np.isfinite(self.privacy)):
            raise ValueError(f"{self.label}: non-finite coordinates")

    def dominates(self, other: "ParetoPoint") -> bool:
        return (
            self.utility >= other.utility
            and self.privacy >= other.privacy
            and (self.utility > other.utility or self.privacy > other.privacy)
        )


@dataclass
class ParetoResult:
    nondominated: list
    dominated: list  # (point, dominator) pairs; the dominator is itself nondominated

    def labels(self) -> tuple[list, dict]:
        return [p.label for p in self.nondominated], {p.label: d.label for p, d in self.dominated}


def pareto_front(points: Sequence[ParetoPoint]) -> ParetoResult:
    """Split points into the nondominated set and the dominated rest.

    Both coordinates are maximised.  Each dominated point is paired with the
    nondominated point of highest (utility, privacy) that dominates it.
    """
    points = list(points)
    front = [p for p in points if not any(q.dominates(p) for q in points)]
    ranked = sorted(front, key=lambda q: (-q.utility, -q.privacy, q.label))
    dominated = []
    for p in points:
        if p in front:
            continue
        dominated.append((p, next(q for q in ranked if q.dominates(p))))
    return ParetoResult(front, dominated)


@dataclass(frozen=True)
class UtilityEntry:
    score: float
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None


@dataclass
class AssessmentReport:
    metrics: list
    utilities: dict = field(default_factory=dict)  # profile label -> UtilityEntry
    pareto: Optional[ParetoResult] = None
    config: dict = field(default_factory=dict)


def build_report(metrics, utilities=None, pareto: bool = False, config: Optional[dict] = None) -> AssessmentReport:
    """Bundle per-profile metrics with utilities and, optionally, the Pareto split.

    ``utilities`` maps profiles (or their labels) to ``UtilityEntry``;
    level names match case-insensitively.
    Profiles whose information ratio is undefined (all users censored) are
    left out of the Pareto split.
    """
    def key(p):
        if isinstance(p, str):
            return p
        return (p.spatial_level.lower(), p.temporal_granularity)

    table = {key(k): v for k, v in (utilities or {}).items()}
    matched = {}
    for m in metrics:
        label = m.profile.label
        entry = table.get(key(m.profile), table.get(label))
        if entry is not None:
            matched[label] = entry
        elif pareto:
            raise ValueError(f"no utility for {label}")
    result = None
    if pareto:
        result = pareto_front(
            [ParetoPoint(m.profile.label, matched[m.profile.label].score, m.r) for m in metrics if m.r is not None]
        )
    return AssessmentReport(list(metrics), matched, result, dict(config or {}))
