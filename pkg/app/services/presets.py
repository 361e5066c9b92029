"""
Backend and step-measure presets shared by the CLI and the acceptance suite.
"""
import logging
from typing import Callable, Dict, List, Tuple

from app.services import tree_flats as tf
from app.services.laurent import LaurentMatrix, LaurentPoly
from app.services.spaces import BuildingSpace, GridSpace, LineSpace, TreeFlatsSpace
from app.services.walk_engine import StepMeasure

logger = logging.getLogger(__name__)

BACKENDS = ("line", "grid2", "tree_flats", "building_sl3")

DEFAULT_PRESETS: Dict[str, str] = {
    "line": "pm1",
    "grid2": "pm1",
    "tree_flats": "standard",
    "building_sl3": "elementary",
}


def build_space(backend: str, q: int = 2, L: int = 0, metric: str = "word", K: int = 2):
    """Instantiate the backend space.

    Raises:
        ValueError: If the backend is unknown
    """
    if backend == "line":
        return LineSpace()
    if backend == "grid2":
        return GridSpace()
    if backend == "tree_flats":
        return TreeFlatsSpace(metric=metric, L=L, K=K)
    if backend == "building_sl3":
        return BuildingSpace(q=q)
    raise ValueError(f"Unknown backend {backend!r}; expected one of {', '.join(BACKENDS)}")


# Measure builders

def _line_pm1(space) -> StepMeasure:
    return StepMeasure.uniform([1, -1], space, labels=["+1", "-1"])


def _line_plus1(space) -> StepMeasure:
    return StepMeasure.uniform([1], space, labels=["+1"])


def _grid_pm1(space) -> StepMeasure:
    support = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    return StepMeasure.uniform(support, space, labels=[str(s) for s in support])


def _tree_standard(space) -> StepMeasure:
    return StepMeasure.uniform(tf.GENERATORS, space, labels=[str(g) for g in tf.GENERATORS])


def _tree_flat(space) -> StepMeasure:
    support = [g for g in tf.GENERATORS if g.first.tag == "A"]
    return StepMeasure.uniform(support, space, labels=[str(g) for g in support])


def _tree_bline(space) -> StepMeasure:
    support = [g for g in tf.GENERATORS if g.first.tag == "B"]
    return StepMeasure.uniform(support, space, labels=[str(g) for g in support])


def _elementary(space: BuildingSpace, exponents: Tuple[int, ...]) -> StepMeasure:
    q = space.q
    support: List[LaurentMatrix] = []
    seen = set()
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            for k in exponents:
                for c in range(1, q):
                    g = LaurentMatrix.elementary(q, i, j, LaurentPoly.monomial(q, k, c))
                    if g not in seen:
                        seen.add(g)
                        support.append(g)
    return StepMeasure.uniform(support, space, labels=[space.format_element(g) for g in support])


def _building_elementary(space: BuildingSpace) -> StepMeasure:
    return _elementary(space, (1, -1))


def _building_elementary_full(space: BuildingSpace) -> StepMeasure:
    return _elementary(space, (1, -1, 0))


def _building_diagonal(space: BuildingSpace) -> StepMeasure:
    g = LaurentMatrix.diag(space.q, (1, 0, -1))
    return StepMeasure.uniform([g], space, labels=[space.format_element(g)])


def _building_elliptic(space: BuildingSpace) -> StepMeasure:
    g = LaurentMatrix.elementary(space.q, 0, 1, LaurentPoly.monomial(space.q, -1))
    return StepMeasure.uniform([g], space, labels=[space.format_element(g)])


PRESETS: Dict[str, Dict[str, Callable]] = {
    "line": {"pm1": _line_pm1, "plus1": _line_plus1},
    "grid2": {"pm1": _grid_pm1},
    "tree_flats": {"standard": _tree_standard, "flat": _tree_flat, "bline": _tree_bline},
    "building_sl3": {
        "elementary": _building_elementary,
        "elementary_full": _building_elementary_full,
        "diagonal": _building_diagonal,
        "elliptic": _building_elliptic,
    },
}


def preset_names(backend: str) -> List[str]:
    return sorted(PRESETS.get(backend, {}))


def build_measure(space, backend: str, preset: str = None) -> StepMeasure:
    """Step measure for a named preset (the backend default when preset is None).

    Raises:
        ValueError: If the backend or preset is unknown
    """
    if backend not in PRESETS:
        raise ValueError(f"Unknown backend {backend!r}")
    name = preset or DEFAULT_PRESETS[backend]
    try:
        builder = PRESETS[backend][name]
    except KeyError:
        raise ValueError(
            f"Unknown preset {name!r} for {backend}; expected one of {', '.join(preset_names(backend))}"
        ) from None
    measure = builder(space)
    logger.debug("Preset %s/%s: %d support elements, symmetric=%s",
                 backend, name, len(measure.support), measure.symmetric)
    return measure
