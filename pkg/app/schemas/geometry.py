from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class DeltaEstimate(BaseModel):
    """Smallest delta satisfying the four-point condition on a point set."""
    delta: float = Field(..., ge=0, description="Minimal delta on the examined quadruples")
    delta_exact: Optional[str] = Field(
        None,
        description="Exact rational value when all distances are integers"
    )
    sample_size: int = Field(..., ge=4, description="Number of points examined")
    quadruples: int = Field(..., ge=0, description="Number of (o, x, y, z) quadruples examined")
    exhaustive: bool = False
    witness: Optional[List[int]] = Field(
        None,
        description="Indices (o, x, y, z) of a quadruple attaining delta"
    )


class TranslationLengthReport(BaseModel):
    """Orbit growth d(g^n o, o)/n of one group element."""
    element: str
    lower_bound: Optional[float] = Field(
        None,
        description="Gromov-product lower bound on the translation length, when certified"
    )
    stable_estimate: float = Field(..., ge=0, description="d(g^N o, o) / N")
    N: int = Field(..., ge=1)
    max_deviation: float = Field(0.0, ge=0, description="max over n <= N of |d(g^n o, o)/n - estimate|")
    profile: List[float] = Field(default_factory=list, description="d(g^n o, o)/n for n = 1..N")

    @model_validator(mode='after')
    def validate_profile(self) -> 'TranslationLengthReport':
        if self.profile and len(self.profile) != self.N:
            raise ValueError('profile must have exactly N entries')
        return self


class WallModel(BaseModel):
    """Serialized wall of the tree of flats."""
    prefix: str
    family: str
    offset: str


class ChainMetricReport(BaseModel):
    """Word metric and chain metric between two vertices of the tree of flats."""
    x: str
    y: str
    L: int = Field(0, ge=0)
    word_distance: int = Field(..., ge=0)
    chain_distance: int = Field(..., ge=0)
    chain: List[WallModel] = Field(default_factory=list, description="A witnessing maximum L-chain")


class FlagModel(BaseModel):
    """Serialized flag of PG(2, q)."""
    point: List[int]
    line: List[int]
    flag_id: int


class CertificateReport(BaseModel):
    """Verdict of a contraction or hyperbolicity certificate."""
    backend: str
    element: str
    certified: bool
    kind: str = Field(..., description="'contracting' or 'hyperbolic'")
    witness_wall: Optional[WallModel] = None
    witness_image: Optional[WallModel] = None
    witness_power: Optional[int] = None
    flags: List[FlagModel] = Field(default_factory=list, description="Opposite germs toward g^-1 o and g o")
    displacement_profile: List[float] = Field(default_factory=list)
    translation: Optional[TranslationLengthReport] = None


class BuildingInfoReport(BaseModel):
    """Local combinatorics of the building at the standard vertex."""
    q: int
    flags: int = Field(..., description="Chambers through a vertex: (q^2+q+1)(q+1)")
    opposite_per_flag: int
    gallery_diameter: int
    neighbors: int = Field(..., description="Vertices adjacent to a vertex: 2(q^2+q+1)")
    base_type: int = Field(..., ge=0, le=2)


class VertexDistanceReport(BaseModel):
    """Vector and CAT(0) distance between two vertices."""
    x: str
    y: str
    a: int = Field(..., ge=0)
    b: int = Field(..., ge=0)
    cat0_distance: float = Field(..., ge=0)
    type_x: int = Field(..., ge=0, le=2)
    type_y: int = Field(..., ge=0, le=2)
    regular: Optional[bool] = Field(None, description="Absent when x = y")


class GermReport(BaseModel):
    """Germ at o of the segment [o, y]."""
    o: str
    y: str
    kind: str = Field(..., description="'flag', 'point' or 'line'")
    point: Optional[List[int]] = None
    line: Optional[List[int]] = None
    flag_id: Optional[int] = None
