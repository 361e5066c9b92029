from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from app.services.laurent import check_modulus
from app.services.presets import PRESETS
from app.services.walk_engine import geometric_schedule


class Backend(str, Enum):
    """Spaces a walk can run on."""
    LINE = "line"
    GRID2 = "grid2"
    TREE_FLATS = "tree_flats"
    BUILDING_SL3 = "building_sl3"


class MetricKind(str, Enum):
    """Metric used on the tree of flats."""
    WORD = "word"
    DL = "dl"


class ReportKind(str, Enum):
    """Estimators that can be requested for a run."""
    DRIFT = "drift"
    CLT = "clt"
    CONTRACTING = "contracting"
    HITTING = "hitting"
    OPPOSITE = "opposite"
    TRACKING = "tracking"
    HYPERBOLIC = "hyperbolic"
    CONVERGENCE = "convergence"


BUILDING_ONLY = {ReportKind.HITTING, ReportKind.OPPOSITE, ReportKind.TRACKING, ReportKind.HYPERBOLIC}
CERTIFIED_BACKENDS = {Backend.TREE_FLATS, Backend.BUILDING_SL3}


class ExperimentConfig(BaseModel):
    """A fully validated simulate run."""
    backend: Backend
    q: int = Field(2, description="Residue field size (prime), building only")
    L: int = Field(0, ge=0, description="Separation constant of the chain metric")
    K: int = Field(2, ge=2, description="Power bound of the contraction search")
    metric: MetricKind = MetricKind.WORD
    preset: Optional[str] = Field(None, description="Step-measure preset; backend default when omitted")
    n_steps: int = Field(..., ge=1)
    n_trials: int = Field(..., ge=1)
    seed: int = Field(0, ge=0, lt=1 << 64)
    checkpoints: Optional[List[int]] = Field(None, description="Explicit checkpoint list")
    checkpoint_start: int = Field(1, ge=1)
    checkpoint_factor: int = Field(2, ge=2)
    reports: List[ReportKind] = Field(default_factory=list)
    certify: bool = True
    out_dir: Optional[str] = None

    @field_validator('q')
    def validate_q(cls, v):
        check_modulus(v)
        return v

    @model_validator(mode='after')
    def validate_run(self) -> 'ExperimentConfig':
        known = PRESETS[self.backend.value]
        if self.preset is not None and self.preset not in known:
            raise ValueError(f"preset: unknown preset {self.preset!r} for {self.backend.value}; "
                             f"expected one of {', '.join(sorted(known))}")
        if self.checkpoints is not None:
            if not self.checkpoints:
                raise ValueError('checkpoints: must not be empty')
            if any(n < 1 or n > self.n_steps for n in self.checkpoints):
                raise ValueError(f'checkpoints: every checkpoint must lie in [1, {self.n_steps}]')
        if self.metric == MetricKind.DL and self.backend != Backend.TREE_FLATS:
            raise ValueError('metric: the chain metric is only defined on tree_flats')
        for r in self.reports:
            if r in BUILDING_ONLY and self.backend != Backend.BUILDING_SL3:
                raise ValueError(f'reports: {r.value} needs the building_sl3 backend')
            if r == ReportKind.CONTRACTING and self.backend not in CERTIFIED_BACKENDS:
                raise ValueError('reports: contracting needs a backend with a certificate')
            if r == ReportKind.CONTRACTING and not self.certify:
                raise ValueError('reports: contracting needs certificates (drop --no-certify)')
        return self

    def schedule(self) -> Tuple[int, ...]:
        if self.checkpoints is not None:
            return tuple(sorted(set(self.checkpoints) | {self.n_steps}))
        return geometric_schedule(self.n_steps, self.checkpoint_start, self.checkpoint_factor)


class CriterionResult(BaseModel):
    """Verdict of one acceptance or run criterion."""
    name: str
    passed: bool
    detail: str = ""
    metrics: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    elapsed_seconds: float = Field(0.0, ge=0)


class RunManifest(BaseModel):
    """Echo of a run with digests of everything it wrote."""
    tool: str
    version: str
    config: Dict[str, Any]
    schedule: List[int]
    csv_path: Optional[str] = None
    csv_sha256: Optional[str] = None
    reports: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    report_digests: Dict[str, str] = Field(default_factory=dict)
    criteria: List[CriterionResult] = Field(default_factory=list)
    constants: Dict[str, Any] = Field(default_factory=dict)
    cache: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    wall_clock_seconds: float = Field(0.0, ge=0)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)


class SuiteReport(BaseModel):
    """Outcome of an acceptance suite run."""
    suite: str
    seed: Optional[int] = Field(None, description="Seed override; pinned per-criterion seeds when absent")
    scale: float = Field(1.0, gt=0)
    results: List[CriterionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)
