"""
Space-agnostic coarse geometry: Gromov products, four-point delta, shadows,
Busemann values and translation-length certificates.

A space is any object following the SpaceHandle protocol. Integer distances
are handled exactly (Fractions for half-integers); float distances are used
as they come.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Any, List, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

import numpy as np

from app.schemas.geometry import DeltaEstimate, TranslationLengthReport

logger = logging.getLogger(__name__)

DELTA_MARGIN_FACTOR = 8  # caller margin C = factor * empirical delta
DELTA_BLOCK = 32  # rows per vectorized block in estimate_delta

Scalar = Union[int, Fraction, float]


class HyperbolicGeometryError(Exception):
    """Custom exception for coarse-geometry errors"""
    pass


@runtime_checkable
class SpaceHandle(Protocol):
    """Metric space with a basepoint and an isometric group action."""
    name: str

    @property
    def basepoint(self) -> Any: ...

    @property
    def identity(self) -> Any: ...

    def distance(self, x: Any, y: Any) -> Scalar: ...

    def act(self, g: Any, x: Any) -> Any: ...

    def compose(self, g: Any, h: Any) -> Any: ...

    def inverse(self, g: Any) -> Any: ...

    def format_element(self, g: Any) -> str: ...


def _exact(*values: Scalar) -> bool:
    return all(isinstance(v, Rational) for v in values)


def _half(v: Scalar) -> Scalar:
    return Fraction(v) / 2 if isinstance(v, Rational) else v / 2


def gromov_product(space: SpaceHandle, o: Any, x: Any, y: Any) -> Scalar:
    """(x|y)_o = (d(o,x) + d(o,y) - d(x,y)) / 2."""
    return _half(space.distance(o, x) + space.distance(o, y) - space.distance(x, y))


def four_point_defect(space: SpaceHandle, o: Any, x: Any, y: Any, z: Any) -> Scalar:
    """min((x|z)_o, (z|y)_o) - (x|y)_o."""
    return min(gromov_product(space, o, x, z), gromov_product(space, o, z, y)) - gromov_product(space, o, x, y)


def distance_matrix(space: SpaceHandle, points: Sequence[Any]) -> np.ndarray:
    n = len(points)
    values = [[space.distance(points[i], points[j]) if i < j else None for j in range(n)] for i in range(n)]
    flat = [v for row in values for v in row if v is not None]
    exact = all(isinstance(v, int) for v in flat)
    d = np.zeros((n, n), dtype=np.int64 if exact else np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = values[i][j]
    return d


def estimate_delta(space: SpaceHandle, points: Sequence[Any], exhaustive: bool = False) -> DeltaEstimate:
    """Minimal delta for the four-point condition over all quadruples of points.

    Basepoints range over the same set. For integer metrics the doubled Gromov
    products are integers and the result is exact.

    Raises:
        HyperbolicGeometryError: If fewer than 4 points are given
    """
    points = list(points)
    n = len(points)
    if n < 4:
        raise HyperbolicGeometryError(f"estimate_delta needs at least 4 points, got {n}")
    d = distance_matrix(space, points)
    best = None
    witness = None
    for o in range(n):
        g2 = d[o][:, None] + d[o][None, :] - d  # doubled Gromov products at o
        for start in range(0, n, DELTA_BLOCK):
            block = g2[start:start + DELTA_BLOCK]
            m = np.minimum(block[:, None, :], g2[None, :, :])  # [x, y, z]
            zs = m.argmax(axis=2)
            defect = m.max(axis=2) - block
            idx = np.unravel_index(int(defect.argmax()), defect.shape)
            value = defect[idx]
            if best is None or value > best:
                best = value
                x, y = int(idx[0]) + start, int(idx[1])
                witness = [o, x, y, int(zs[idx])]
    exact = np.issubdtype(d.dtype, np.integer)
    if exact:
        delta = Fraction(int(best), 2)
        delta = max(delta, Fraction(0))
        result = DeltaEstimate(delta=float(delta), delta_exact=str(delta), sample_size=n,
                               quadruples=n ** 4, exhaustive=exhaustive, witness=witness)
    else:
        result = DeltaEstimate(delta=max(float(best) / 2, 0.0), sample_size=n,
                               quadruples=n ** 4, exhaustive=exhaustive, witness=witness)
    logger.debug("Estimated delta=%s on %d points of %s", result.delta, n, space.name)
    return result


def hyperbolicity_margin(estimate: DeltaEstimate) -> float:
    """Caller margin C for loxodromic_lower_bound."""
    return DELTA_MARGIN_FACTOR * estimate.delta


# Shadows and Busemann functions

@dataclass(frozen=True)
class Shadow:
    """S_o(x, R): points y with (y|o)_x <= R."""
    viewpoint: Any
    center: Any
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("Shadow radius must be nonnegative")


def in_shadow(space: SpaceHandle, shadow: Shadow, y: Any) -> bool:
    return gromov_product(space, shadow.center, y, shadow.viewpoint) <= shadow.radius


def busemann_value(space: SpaceHandle, x: Any, y: Any, o: Any) -> Scalar:
    """b_x^o(y) = d(x, y) - d(x, o)."""
    return space.distance(x, y) - space.distance(x, o)


def busemann_cocycle(space: SpaceHandle, g: Any, x: Any, o: Any) -> Scalar:
    """beta(g, x) = b_x(g^-1 o)."""
    return busemann_value(space, x, space.act(space.inverse(g), o), o)


def busemann_cocycle_residual(space: SpaceHandle, g1: Any, g2: Any, x: Any, o: Any) -> Scalar:
    """b_x(g1 g2 o) - [b_{g1^-1 x}(g2 o) + b_x(g1 o)], summed exactly."""
    g1g2o = space.act(space.compose(g1, g2), o)
    x1 = space.act(space.inverse(g1), x)
    terms = [
        space.distance(x, g1g2o), -space.distance(x, o),
        -space.distance(x1, space.act(g2, o)), space.distance(x1, o),
        -space.distance(x, space.act(g1, o)), space.distance(x, o),
    ]
    if _exact(*terms):
        return sum(Fraction(t) for t in terms)
    return math.fsum(terms)


# Translation length

def loxodromic_lower_bound(space: SpaceHandle, g: Any, o: Any, C: float) -> Optional[Scalar]:
    """d(o, go) - 2(go|g^-1 o)_o when d(o, go) >= 2(go|g^-1 o)_o + C and the bound is positive."""
    if C < 0:
        raise ValueError("Margin C must be nonnegative")
    go = space.act(g, o)
    ginv_o = space.act(space.inverse(g), o)
    d = space.distance(o, go)
    gp = gromov_product(space, o, go, ginv_o)
    bound = d - 2 * gp
    if d >= 2 * gp + C and bound > 0:
        return bound
    return None


def stable_translation_length(space: SpaceHandle, g: Any, o: Any, N: int) -> TranslationLengthReport:
    """d(g^N o, o)/N with the per-n ratios for convergence diagnostics."""
    if N < 1:
        raise ValueError("N must be at least 1")
    profile: List[float] = []
    x = o
    for n in range(1, N + 1):
        x = space.act(g, x)
        profile.append(float(space.distance(x, o)) / n)
    estimate = profile[-1]
    return TranslationLengthReport(
        element=space.format_element(g),
        stable_estimate=estimate,
        N=N,
        max_deviation=max(abs(p - estimate) for p in profile),
        profile=profile,
    )


def translation_report(space: SpaceHandle, g: Any, o: Any, N: int, C: float = 0.0) -> TranslationLengthReport:
    """stable_translation_length with the Gromov-product lower bound filled in."""
    report = stable_translation_length(space, g, o, N)
    bound = loxodromic_lower_bound(space, g, o, C)
    report.lower_bound = float(bound) if bound is not None else None
    return report


# Metric spot checks

def metric_violations(space: SpaceHandle, points: Sequence[Any], elements: Sequence[Any],
                      tolerance: float = 0.0) -> List[Tuple[str, Tuple[int, ...]]]:
    """Symmetry, identity, triangle and isometry failures on the given samples."""
    failures: List[Tuple[str, Tuple[int, ...]]] = []
    n = len(points)
    d = [[space.distance(points[i], points[j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            if d[i][j] != d[j][i]:
                failures.append(("symmetry", (i, j)))
            if (d[i][j] == 0) != (points[i] == points[j]):
                failures.append(("identity", (i, j)))
            for k in range(n):
                if d[i][k] > d[i][j] + d[j][k] + tolerance:
                    failures.append(("triangle", (i, j, k)))
    for e, g in enumerate(elements):
        for i in range(n):
            for j in range(i + 1, n):
                if space.distance(space.act(g, points[i]), space.act(g, points[j])) != d[i][j]:
                    failures.append(("isometry", (e, i, j)))
    return failures


def is_geodesic_triple(space: SpaceHandle, x: Any, y: Any, z: Any) -> bool:
    """True iff y lies on a geodesic from x to z: d(x,z) = d(x,y) + d(y,z)."""
    d_xz = space.distance(x, z)
    d_sum = space.distance(x, y) + space.distance(y, z)
    if _exact(d_xz, d_sum):
        return d_xz == d_sum
    return math.isclose(d_xz, d_sum, rel_tol=1e-12, abs_tol=1e-12)
