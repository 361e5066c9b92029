"""
certify: contraction (tree_flats) or hyperbolicity (building_sl3) verdict for one element.
"""
import logging

from app.cli.deps import EXIT_OK, UsageError, emit, get_space, parse_with
from app.schemas.geometry import CertificateReport, FlagModel, WallModel
from app.services import building_a2 as bt
from app.services import tree_flats as tf
from app.services.hyperbolic_core import translation_report

logger = logging.getLogger(__name__)

DEFAULT_PROFILE_LENGTH = 10


def register(subparsers) -> None:
    p = subparsers.add_parser("certify", help="Certify an element as contracting or hyperbolic")
    p.add_argument("--backend", required=True, choices=("tree_flats", "building_sl3"))
    p.add_argument("--element", required=True, help='e.g. "B(1)" or "diag(t,1,t^-1)"')
    p.add_argument("--q", type=int, default=2)
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--n-max", type=int, default=DEFAULT_PROFILE_LENGTH, help="Displacement profile length")
    p.add_argument("--json", action="store_true", help="Print JSON instead of text")
    p.set_defaults(handler=handle, command_parser=p)


def wall_model(w: tf.Wall) -> WallModel:
    return WallModel(prefix=str(w.prefix), family=w.family.value, offset=str(w.offset))


def flag_model(f: bt.Flag) -> FlagModel:
    return FlagModel(point=list(f.point), line=list(f.line), flag_id=bt.flag_id(f))


def certify_tree_flats(space, g: tf.GroupWord, K: int, n_max: int) -> CertificateReport:
    witness = None if g.is_identity else tf.find_contraction_witness(g, space.L, K)
    translation = translation_report(space, g, space.basepoint, n_max)
    return CertificateReport(
        backend="tree_flats", element=str(g), certified=witness is not None, kind="contracting",
        witness_wall=wall_model(witness.wall) if witness else None,
        witness_image=wall_model(witness.image) if witness else None,
        witness_power=witness.power if witness else None,
        displacement_profile=[p * n for n, p in enumerate(translation.profile, start=1)],
        translation=translation,
    )


def certify_building(space, g, n_max: int) -> CertificateReport:
    try:
        witness = bt.hyperbolic_witness(g, space.base)
    except bt.BuildingError as e:
        raise UsageError(str(e)) from e
    translation = translation_report(space, g, space.base, n_max)
    return CertificateReport(
        backend="building_sl3", element=space.format_element(g), certified=witness is not None,
        kind="hyperbolic", flags=[flag_model(f) for f in witness] if witness else [],
        displacement_profile=bt.displacement_profile(g, space.base, n_max),
        translation=translation,
    )


def render(report: CertificateReport) -> str:
    lines = [f"element: {report.element}", f"{report.kind}: {'true' if report.certified else 'false'}"]
    if report.witness_wall is not None:
        lines.append(f"witness wall: {report.witness_wall.prefix} {report.witness_wall.family} "
                     f"{report.witness_wall.offset} -> power {report.witness_power} -> "
                     f"{report.witness_image.prefix} {report.witness_image.family} {report.witness_image.offset}")
    if report.flags:
        back, forward = report.flags
        lines.append(f"flag toward g^-1 o: point={back.point} line={back.line} (id {back.flag_id})")
        lines.append(f"flag toward g o:    point={forward.point} line={forward.line} (id {forward.flag_id})")
    lines.append("displacement profile: " + ", ".join(f"{d:.4f}" for d in report.displacement_profile))
    if report.translation is not None:
        lines.append(f"stable translation estimate: {report.translation.stable_estimate:.4f}")
        if report.translation.lower_bound is not None:
            lines.append(f"Gromov-product lower bound: {report.translation.lower_bound:.4f}")
    return "\n".join(lines)


def handle(args) -> int:
    if args.n_max < 1:
        raise UsageError("--n-max must be at least 1")
    if args.K < 2:
        raise UsageError("--K must be at least 2")
    space = get_space(args)
    g = parse_with(space.parse_element, args.element)
    if args.backend == "tree_flats":
        report = certify_tree_flats(space, g, args.K, args.n_max)
    else:
        report = certify_building(space, g, args.n_max)
    emit(report, render(report), args.json)
    return EXIT_OK
