from .geometry import (
    BuildingInfoReport, CertificateReport, ChainMetricReport, DeltaEstimate, FlagModel, GermReport,
    TranslationLengthReport, VertexDistanceReport, WallModel,
)
from .walk import (
    BirkhoffReport, CltReport, ConvergenceReport, DriftReport, HittingReport,
    HyperbolicTimeReport, OppositeReport, ProportionReport, TrackingReport, TrackingSummary,
)
from .experiment import Backend, CriterionResult, ExperimentConfig, MetricKind, ReportKind, RunManifest, SuiteReport

__all__ = [
    'BuildingInfoReport', 'CertificateReport', 'ChainMetricReport', 'DeltaEstimate', 'FlagModel', 'GermReport',
    'TranslationLengthReport', 'VertexDistanceReport', 'WallModel',
    'BirkhoffReport', 'CltReport', 'ConvergenceReport', 'DriftReport', 'HittingReport',
    'HyperbolicTimeReport', 'OppositeReport', 'ProportionReport', 'TrackingReport', 'TrackingSummary',
    'Backend', 'CriterionResult', 'ExperimentConfig', 'MetricKind', 'ReportKind', 'RunManifest', 'SuiteReport',
]
