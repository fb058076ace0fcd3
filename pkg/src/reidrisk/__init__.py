"""Reidentification risk of generalized spatio-temporal event data."""

from .generalize import generalize_dataset, generalize_spatial, generalize_temporal, profile_grid
from .model import (
    AuxPoints,
    DataError,
    GeneralizationProfile,
    GeneralizedDataset,
    HierarchyError,
    Point,
    RawDataset,
    RawRecord,
    SpatialHierarchy,
    UserTrace,
    build_generalized_dataset,
)
from .reident import (
    CensoredPolicy,
    CostOutcome,
    ReidentConfig,
    RiskMetrics,
    TraceSizeBasis,
    UnicityEstimate,
    assess,
    cost_for_permutation,
    empirical_entropy,
    equivalence_class,
    expected_costs,
    k_anonymity_level,
    unicity,
    unicity_table,
)
from .stats import AssessmentReport, ParetoPoint, bootstrap_ci, build_report, pareto_front
from .synthgen import SynthConfig, generate

__version__ = "0.1.0"
