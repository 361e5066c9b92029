from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class DriftReport(BaseModel):
    """Empirical rate of escape at the final horizon."""
    n: int = Field(..., ge=1, description="Final horizon")
    trials: int = Field(..., ge=1)
    lambda_hat: float = Field(..., ge=0)
    standard_error: Optional[float] = None
    ci95: Optional[Tuple[float, float]] = Field(None, description="Normal-approximation interval; absent for one trial")
    checkpoints: List[int] = Field(default_factory=list)
    per_n_means: List[float] = Field(default_factory=list, description="Mean d(Z_n o, o)/n per checkpoint")
    drift_vector: Optional[Tuple[float, float]] = Field(None, description="(lambda_a, lambda_b) for the building")
    drift_vector_ci95: Optional[List[Tuple[float, float]]] = None
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_interval(self) -> 'DriftReport':
        if self.ci95 is not None and not self.ci95[0] <= self.lambda_hat <= self.ci95[1]:
            raise ValueError('lambda_hat must lie inside ci95')
        if any(m < 0 for m in self.per_n_means):
            raise ValueError('per_n_means must be nonnegative')
        return self

    @property
    def excludes_zero(self) -> bool:
        return self.ci95 is not None and self.ci95[0] > 0


class CltReport(BaseModel):
    """Normalized fluctuations (d(Z_n o, o) - n lambda) / sqrt(n) and a fitted-normal KS test."""
    n: int = Field(..., ge=1)
    trials: int = Field(..., ge=1)
    samples: List[float]
    sigma_hat: float = Field(..., ge=0)
    ks_statistic: Optional[float] = None
    ks_p_value: Optional[float] = None
    degenerate: bool = False
    alpha: float = 0.01
    method: str = "lilliefors-monte-carlo"

    @model_validator(mode='after')
    def validate_samples(self) -> 'CltReport':
        if len(self.samples) != self.trials:
            raise ValueError('samples count must equal trials')
        return self

    @property
    def gaussian_accepted(self) -> bool:
        return not self.degenerate and self.ks_p_value is not None and self.ks_p_value > self.alpha


class ProportionReport(BaseModel):
    """Fraction of trials whose position is certified, per checkpoint."""
    certifier: str
    trials: int = Field(..., ge=1)
    checkpoints: List[int]
    fractions: List[float]
    log_slope: Optional[float] = Field(None, description="Slope of log(1 - fraction) against n")
    nondecreasing: bool = True
    vanished: bool = Field(False, description="Every trial certified at every fitted checkpoint")


class HittingReport(BaseModel):
    """Empirical law of the stabilized germ flag at o."""
    basepoint: str
    start: str
    n: int
    trials: int
    window: int
    frequencies: Dict[int, float] = Field(default_factory=dict, description="flag_id -> frequency")
    stabilization_n: List[Optional[int]] = Field(default_factory=list)
    stabilized_fraction: float = Field(..., ge=0, le=1)
    tv_residual: Optional[float] = None
    method: str = "left-shift re-germing of final positions"


class BirkhoffReport(BaseModel):
    """Time averages of visits of Z_k^-1 o to flag cylinders."""
    n: int
    trials: int
    averages: Dict[int, float] = Field(default_factory=dict, description="flag_id -> mean time average")
    symmetric_measure: bool = True
    warnings: List[str] = Field(default_factory=list)


class OppositeReport(BaseModel):
    n: int
    pairs: int
    fraction: float = Field(..., ge=0, le=1)
    search_radius: int = Field(..., ge=0)


class TrackingReport(BaseModel):
    """e_n = d(Z_n o, gamma(n)) / n along a sector ray."""
    trial_id: int
    checkpoints: List[int]
    errors: List[float]
    drift_vector: Tuple[float, float]
    singular: bool = False


class TrackingSummary(BaseModel):
    checkpoints: List[int]
    median_errors: List[float]
    trials: int
    singular: bool = False


class ConvergenceReport(BaseModel):
    """Mean of (Z_n o | Z_N o)_o / d(o, Z_n o) per checkpoint."""
    n_final: int
    checkpoints: List[int]
    ratios: List[float]


class HyperbolicTimeReport(BaseModel):
    trials: int
    search_radius: int
    times: List[Optional[int]]
    finite_fraction: float = Field(..., ge=0, le=1)
    median_time: Optional[float] = None
