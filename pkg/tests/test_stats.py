from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reidrisk.model import GeneralizationProfile
from reidrisk.reident import RiskMetrics
from reidrisk.stats import ParetoPoint, UtilityEntry, bootstrap_ci, build_report, pareto_front


def test_bootstrap_constant():
    assert bootstrap_ci([2.5] * 7) == (2.5, 2.5)


def test_bootstrap_binary():
    low, high = bootstrap_ci([0, 1] * 50, B=5000)
    assert 0 <= low < 0.5 < high <= 1


def test_bootstrap_errors():
    with pytest.raises(ValueError):
        bootstrap_ci([])
    with pytest.raises(ValueError):
        bootstrap_ci([1.0], B=0)
    with pytest.raises(ValueError):
        bootstrap_ci([1.0], alpha=1.0)


def test_bootstrap_deterministic():
    vals = np.random.default_rng(1).random(40)
    assert bootstrap_ci(vals, seed=5) == bootstrap_ci(vals, seed=5)


def _exhaustive_quantile(values, q):
    means = sorted(sum(t) / len(values) for t in product(values, repeat=len(values)))
    cdf = np.arange(1, len(means) + 1) / len(means)
    # q must sit well inside one atom for the Monte Carlo quantile to be exact
    assert np.min(np.abs(cdf - q)) > 0.01
    return means[int(np.searchsorted(cdf, q))]


@pytest.mark.parametrize("values", [(0.0, 1.0, 5.0), (2.0, 3.0, 11.0), (1.0, 1.5, 4.0)])
def test_bootstrap_matches_all_27_resamples(values):
    alpha = 0.2
    low, high = bootstrap_ci(values, B=40_000, alpha=alpha, seed=3)
    assert low == pytest.approx(_exhaustive_quantile(values, alpha / 2), abs=1e-9)
    assert high == pytest.approx(_exhaustive_quantile(values, 1 - alpha / 2), abs=1e-9)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30), st.integers(0, 2**32))
def test_bootstrap_within_range(values, seed):
    low, high = bootstrap_ci(values, B=200, seed=seed)
    assert min(values) <= low <= high <= max(values)


# ---------------------------------------------------------------------------


Z1 = ParetoPoint("Z1", 9.3, 0.07)
M24 = ParetoPoint("M24", 4.0, 0.51)
D24 = ParetoPoint("D24", 4.0, 0.29)


def test_pareto_fixture():
    front, dominated = pareto_front([Z1, M24]).labels()
    assert sorted(front) == ["M24", "Z1"] and dominated == {}
    front, dominated = pareto_front([Z1, M24, D24]).labels()
    assert sorted(front) == ["M24", "Z1"] and dominated == {"D24": "M24"}


def test_pareto_singleton_and_ties():
    assert pareto_front([ParetoPoint("x", 5, 0.5)]).labels() == (["x"], {})
    front, _ = pareto_front([ParetoPoint("a", 5, 0.5), ParetoPoint("b", 5, 0.5)]).labels()
    assert sorted(front) == ["a", "b"]


def test_pareto_rejects_non_finite():
    with pytest.raises(ValueError):
        ParetoPoint("x", float("nan"), 0.1)


points = st.lists(
    st.builds(ParetoPoint, st.text("abcdef", min_size=1, max_size=3),
              st.integers(1, 10).map(float), st.integers(0, 10).map(lambda v: v / 10)),
    min_size=1, max_size=12,
)


@given(points)
def test_dominance_relation(pts):
    for p in pts:
        assert not p.dominates(p)
        for q in pts:
            for s in pts:
                if p.dominates(q) and q.dominates(s):
                    assert p.dominates(s)
    res = pareto_front(pts)
    assert len(res.nondominated) + len(res.dominated) == len(pts)
    for p in res.nondominated:
        assert not any(q.dominates(p) for q in pts)
    for p, d in res.dominated:
        assert d.dominates(p) and d in res.nondominated


@given(points, st.data())
def test_adding_dominated_point_keeps_front(pts, data):
    base = pareto_front(pts).nondominated
    anchor = data.draw(st.sampled_from(pts))
    extra = ParetoPoint("new", anchor.utility - data.draw(st.integers(0, 3)),
                        anchor.privacy - data.draw(st.integers(1, 3)) / 10)
    after = pareto_front(pts + [extra])
    assert after.nondominated == base
    assert extra in [p for p, _ in after.dominated]


# ---------------------------------------------------------------------------


def _metrics(level, hours, r):
    return RiskMetrics(
        profile=GeneralizationProfile(level, hours), c=2.0, r=r, gain=None if r is None else 1 - r,
        nonreident_fraction=0.0, ci_c=None, ci_r=None, unicity={}, k_anonymity=1, entropy_bits=1.0,
        n=10, n_censored=0, R=10, seed=0, censored_policy="exclude", trace_size_basis="distinct_points",
    )


GRID = [_metrics(lv, h, 0.05 * (i + 1)) for i, (lv, h) in
        enumerate((lv, h) for lv in ("zip", "district", "municipality") for h in (1, 6, 12, 24))]


def test_report_full_grid():
    utilities = {m.profile: UtilityEntry(10 - i * 0.5) for i, m in enumerate(GRID)}
    report = build_report(GRID, utilities, pareto=True, config={"seed": 0})
    assert len(report.metrics) == 12 and len(report.utilities) == 12
    assert len(report.pareto.nondominated) + len(report.pareto.dominated) == 12
    assert report.config == {"seed": 0}


def test_report_without_utilities():
    report = build_report(GRID)
    assert report.pareto is None and report.utilities == {}


def test_report_missing_utility():
    utilities = {m.profile.label: UtilityEntry(5.0) for m in GRID if m.profile.label != "D12"}
    with pytest.raises(ValueError, match="no utility for D12"):
        build_report(GRID, utilities, pareto=True)


def test_report_skips_undefined_ratio():
    metrics = [_metrics("zip", 1, 0.1), _metrics("zip", 24, None)]
    report = build_report(metrics, {m.profile.label: UtilityEntry(5.0) for m in metrics}, pareto=True)
    assert [p.label for p in report.pareto.nondominated] == ["Z1"]
