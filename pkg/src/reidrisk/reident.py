"""Reidentification risk: equivalence classes, unicity, information cost and ratio.

An adversary knows some of a target's generalized points.  The target's
equivalence class is every user whose trace contains all of them; the target
is reidentified when that class is a singleton.  Information cost is the
number of the target's points, drawn in random order, needed to get there.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .model import AuxPoints, GeneralizationProfile, GeneralizedDataset, Point
from .stats import bootstrap_ci

# stream tags keep cost and unicity draws independent under one seed
_COST_STREAM = 0
_UNICITY_STREAM = 1

_U64 = (1 << 64) - 1


class CensoredPolicy(str, Enum):
    EXCLUDE = "exclude"
    COUNT_AS_FULL = "count_as_full"


class TraceSizeBasis(str, Enum):
    DISTINCT_POINTS = "distinct_points"
    RAW_RECORDS = "raw_records"


@dataclass(frozen=True)
class ReidentConfig:
    trials_per_user: int = 10
    unicity_trials: int = 1000
    p_values: tuple = (1, 2, 3, 4, 5)
    seed: int = 0
    censored_policy: CensoredPolicy = CensoredPolicy.EXCLUDE
    trace_size_basis: TraceSizeBasis = TraceSizeBasis.DISTINCT_POINTS
    bootstrap_resamples: int = 1000
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "p_values", tuple(int(p) for p in self.p_values))
        object.__setattr__(self, "censored_policy", CensoredPolicy(self.censored_policy))
        object.__setattr__(self, "trace_size_basis", TraceSizeBasis(self.trace_size_basis))
        if self.trials_per_user < 1:
            raise ValueError("trials_per_user must be >= 1")
        if self.unicity_trials < 1:
            raise ValueError("unicity_trials must be >= 1")
        if any(p < 1 for p in self.p_values):
            raise ValueError(f"p values must be >= 1, got {self.p_values}")
        if list(self.p_values) != sorted(set(self.p_values)):
            raise ValueError("p values must be strictly ascending")


@dataclass(frozen=True)
class CostOutcome:
    user_id: str
    cost: Optional[int]  # None: censored, the full trace does not single the user out
    trace_size: int

    @property
    def censored(self) -> bool:
        return self.cost is None


@dataclass(frozen=True)
class UnicityEstimate:
    p: int
    value: Optional[float]
    eligible: int
    trials: int


@dataclass
class RiskMetrics:
    profile: GeneralizationProfile
    c: Optional[float]
    r: Optional[float]
    gain: Optional[float]
    nonreident_fraction: float
    ci_c: Optional[tuple]
    ci_r: Optional[tuple]
    unicity: dict = field(default_factory=dict)
    k_anonymity: int = 1
    entropy_bits: float = 0.0
    n: int = 0
    n_censored: int = 0
    R: int = 10
    seed: int = 0
    censored_policy: str = CensoredPolicy.EXCLUDE.value
    trace_size_basis: str = TraceSizeBasis.DISTINCT_POINTS.value


# ---------------------------------------------------------------------------
# exact, per-query operations
# ---------------------------------------------------------------------------


def equivalence_class(dataset: GeneralizedDataset, aux: AuxPoints) -> set:
    """Users whose trace contains every auxiliary point."""
    u = dataset.user_index(aux.user_id)
    if not aux.points:
        return set(dataset.user_ids)
    pidx = []
    for p in aux.points:
        try:
            pidx.append(dataset.point_index(p))
        except KeyError:
            raise ValueError(f"aux point {p} not in the trace of {aux.user_id}") from None
    own = dataset.trace_points[dataset.trace_indptr[u]:dataset.trace_indptr[u + 1]]
    missing = np.setdiff1d(pidx, own)
    if len(missing):
        raise ValueError(f"aux point {dataset.point(int(missing[0]))} not in the trace of {aux.user_id}")

    pidx.sort(key=lambda p: dataset.post_indptr[p + 1] - dataset.post_indptr[p])
    members = None
    for p in pidx:
        post = dataset.post_users[dataset.post_indptr[p]:dataset.post_indptr[p + 1]]
        members = post if members is None else np.intersect1d(members, post, assume_unique=True)
        if len(members) == 1:
            break
    return set(dataset.user_ids[members])


def cost_for_permutation(dataset: GeneralizedDataset, user_id: str, ordering: Sequence[Point]) -> CostOutcome:
    """Shortest prefix of ``ordering`` that isolates ``user_id``."""
    trace = dataset.trace_of(user_id)
    ordering = [Point(*p) for p in ordering]
    if len(ordering) != len(trace) or set(ordering) != trace:
        raise ValueError(f"ordering is not a permutation of the trace of {user_id}")
    members = None
    for k, p in enumerate(ordering, start=1):
        post = set(dataset.posting(p))
        members = post if members is None else members & post
        if len(members) == 1:
            return CostOutcome(user_id, k, len(trace))
    return CostOutcome(user_id, None, len(trace))


def k_anonymity_level(dataset: GeneralizedDataset) -> int:
    return int(full_class_sizes(dataset).min())


def empirical_entropy(dataset: GeneralizedDataset) -> float:
    """Shannon entropy (bits) of points over all distinct (user, point) pairs."""
    counts = np.diff(dataset.post_indptr).astype(np.float64)
    counts = counts[counts > 0]
    prob = counts / counts.sum()
    return float(-(prob * np.log2(prob)).sum()) + 0.0


# ---------------------------------------------------------------------------
# Monte Carlo estimates
# ---------------------------------------------------------------------------


def user_keys(user_ids) -> np.ndarray:
    """Stable 64-bit key per user id (seeds per-user random streams)."""
    return np.array(
        [int.from_bytes(hashlib.blake2b(str(u).encode(), digest_size=8).digest(), "little") for u in user_ids],
        dtype=np.uint64,
    )


def _arrays(dataset: GeneralizedDataset):
    return dataset.trace_indptr, dataset.trace_points, dataset.post_indptr, dataset.post_users


def full_class_sizes(dataset: GeneralizedDataset) -> np.ndarray:
    """|E_i| when the adversary knows user i's whole trace."""
    cached = dataset.__dict__.get("_full_class_sizes")
    if cached is None:
        cached = _kernels.full_class_sizes(*_arrays(dataset))
        cached.flags.writeable = False
        dataset.__dict__["_full_class_sizes"] = cached
    return cached


def _monte_carlo(dataset: GeneralizedDataset, seed: int, cost_trials: int = 0,
                 basis: TraceSizeBasis = TraceSizeBasis.DISTINCT_POINTS, uni_trials: int = 0, pmax: int = 1):
    """(class sizes, mean costs, unicity histogram) from one kernel pass."""
    t_indptr, t_pts, p_indptr, p_users = _arrays(dataset)
    sizes, costs, hist = _kernels.user_risk(
        user_keys(dataset.user_ids), np.uint64(seed & _U64),
        int(cost_trials), _COST_STREAM, TraceSizeBasis(basis) is TraceSizeBasis.RAW_RECORDS,
        int(uni_trials), _UNICITY_STREAM, int(pmax), _kernels.user_blocks(dataset.n),
        t_indptr, t_pts, dataset.trace_counts, p_indptr, p_users,
    )
    if "_full_class_sizes" not in dataset.__dict__:
        sizes.flags.writeable = False
        dataset.__dict__["_full_class_sizes"] = sizes
    return sizes, costs, hist


def expected_costs(dataset: GeneralizedDataset, trials: int, seed: int,
                   basis: TraceSizeBasis = TraceSizeBasis.DISTINCT_POINTS) -> np.ndarray:
    """Per-user mean information cost over ``trials`` random orderings.

    Array aligned with ``dataset.user_ids``; NaN for censored users.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return _monte_carlo(dataset, seed, cost_trials=trials, basis=basis)[1]


def _check_p(p_values) -> list:
    p_values = sorted(int(p) for p in p_values)
    if not p_values or p_values[0] < 1:
        raise ValueError(f"p must be >= 1, got {p_values}")
    return p_values


def _unicity_from_hist(dataset: GeneralizedDataset, hist: np.ndarray, p_values, trials: int) -> dict:
    unique_by = np.cumsum(hist[:, 1:], axis=1)  # unique_by[u, p-1]: rounds unique within p draws
    sizes = dataset.trace_sizes
    out = {}
    for p in p_values:
        eligible = sizes >= p
        n_elig = int(eligible.sum())
        value = float(unique_by[eligible, p - 1].sum() / (n_elig * trials)) if n_elig else None
        out[p] = UnicityEstimate(p, value, n_elig, int(trials))
    return out


def unicity_table(dataset: GeneralizedDataset, p_values: Sequence[int], trials: int, seed: int) -> dict:
    """u_p for every p from one set of nested draws per (user, round).

    Sampling p points without replacement is the length-p prefix of a random
    ordering, so one ordering answers all p and u_p is monotone in p per round.
    """
    p_values = _check_p(p_values)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hist = _monte_carlo(dataset, seed, uni_trials=trials, pmax=p_values[-1])[2]
    return _unicity_from_hist(dataset, hist, p_values, trials)


def unicity(dataset: GeneralizedDataset, p: int, trials: int, seed: int) -> UnicityEstimate:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    est = unicity_table(dataset, [p], trials, seed)[p]
    if est.eligible == 0:
        raise ValueError(f"no user has {p} points (largest trace has {int(dataset.trace_sizes.max())})")
    return est


def _ci(values, config: ReidentConfig, tag: int, estimate: float):
    if len(values) == 0:
        return None
    low, high = bootstrap_ci(values, B=config.bootstrap_resamples, alpha=config.alpha,
                             seed=[config.seed & _U64, tag])
    # percentile intervals can miss a skewed mean by a hair; keep the bracket
    return (min(low, estimate), max(high, estimate))


def assess(dataset: GeneralizedDataset, config: ReidentConfig = ReidentConfig()) -> RiskMetrics:
    if dataset.n == 0:
        raise ValueError("empty dataset")
    raw = config.trace_size_basis is TraceSizeBasis.RAW_RECORDS
    sizes = (dataset.record_counts if raw else dataset.trace_sizes).astype(np.float64)
    p_values = _check_p(config.p_values)
    class_sizes, costs, hist = _monte_carlo(
        dataset, config.seed, config.trials_per_user, config.trace_size_basis, config.unicity_trials, p_values[-1],
    )
    censored = class_sizes > 1
    ratios = costs / sizes

    if config.censored_policy is CensoredPolicy.COUNT_AS_FULL:
        costs = np.where(censored, sizes, costs)
        ratios = np.where(censored, 1.0, ratios)
    else:
        costs, ratios = costs[~censored], ratios[~censored]

    c = float(costs.mean()) if len(costs) else None
    r = float(ratios.mean()) if len(ratios) else None
    return RiskMetrics(
        profile=dataset.profile,
        c=c,
        r=r,
        gain=None if r is None else 1.0 - r,
        nonreident_fraction=float(censored.mean()),
        ci_c=_ci(costs, config, 0, c),
        ci_r=_ci(ratios, config, 1, r),
        unicity=_unicity_from_hist(dataset, hist, p_values, config.unicity_trials),
        k_anonymity=int(class_sizes.min()),
        entropy_bits=empirical_entropy(dataset),
        n=dataset.n,
        n_censored=int(censored.sum()),
        R=config.trials_per_user,
        seed=config.seed,
        censored_policy=config.censored_policy.value,
        trace_size_basis=config.trace_size_basis.value,
    )

