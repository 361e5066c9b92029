"""
building: local combinatorics, vertex distances and germs in the A~2 building.
"""
import networkx as nx

from app.cli.deps import EXIT_OK, UsageError, emit, parse_with
from app.schemas.geometry import BuildingInfoReport, GermReport, VertexDistanceReport
from app.services import building_a2 as bt
from app.services.laurent import check_modulus


def register(subparsers) -> None:
    p = subparsers.add_parser("building", help="Query the A~2 building of SL3(F_q((t)))")
    actions = p.add_subparsers(dest="action", required=True)

    info = actions.add_parser("info", help="Flag and neighbour counts at a vertex")
    info.add_argument("--q", type=int, default=2)
    info.add_argument("--json", action="store_true")
    info.set_defaults(handler=handle_info, command_parser=info)

    distance = actions.add_parser("distance", help="Vector distance between two vertices")
    distance.add_argument("--q", type=int, default=2)
    distance.add_argument("--x", default="I", help="Matrix whose columns span the lattice")
    distance.add_argument("--y", required=True)
    distance.add_argument("--json", action="store_true")
    distance.set_defaults(handler=handle_distance, command_parser=distance)

    germ = actions.add_parser("germ", help="Germ at o of the segment [o, y]")
    germ.add_argument("--q", type=int, default=2)
    germ.add_argument("--o", default="I")
    germ.add_argument("--y", required=True)
    germ.add_argument("--json", action="store_true")
    germ.set_defaults(handler=handle_germ, command_parser=germ)


def _q(args) -> int:
    try:
        return check_modulus(args.q)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _vertex(text: str, q: int) -> bt.LatticeClass:
    m = parse_with(lambda s: bt.parse_element(s, q), text, "matrix")
    try:
        return bt.LatticeClass.of(m)
    except bt.BuildingError as e:
        raise UsageError(f"{text!r} does not define a lattice: {e}") from e


def building_info(q: int) -> BuildingInfoReport:
    flags = bt.all_flags(q)
    base = bt.LatticeClass.standard(q)
    return BuildingInfoReport(
        q=q, flags=len(flags),
        opposite_per_flag=sum(bt.flags_opposite(flags[0], f) for f in flags),
        gallery_diameter=nx.diameter(bt.flag_graph(q)),
        neighbors=len(bt.neighbors(base)),
        base_type=bt.vertex_type(base),
    )


def handle_info(args) -> int:
    report = building_info(_q(args))
    text = (f"q = {report.q}\nflags per vertex: {report.flags}\nopposite flags per flag: "
            f"{report.opposite_per_flag}\ngallery diameter: {report.gallery_diameter}\n"
            f"neighbours per vertex: {report.neighbors}")
    emit(report, text, args.json)
    return EXIT_OK


def handle_distance(args) -> int:
    q = _q(args)
    x, y = _vertex(args.x, q), _vertex(args.y, q)
    v = bt.vector_distance(x, y)
    report = VertexDistanceReport(
        x=str(x), y=str(y), a=v.a, b=v.b, cat0_distance=bt.cat0_length(v),
        type_x=bt.vertex_type(x), type_y=bt.vertex_type(y),
        regular=None if v.is_zero else v.is_regular,
    )
    text = (f"vector distance: ({report.a}, {report.b})\ncat0 distance: {report.cat0_distance:.6f}\n"
            f"types: {report.type_x} -> {report.type_y}\nregular: {report.regular}")
    emit(report, text, args.json)
    return EXIT_OK


def handle_germ(args) -> int:
    q = _q(args)
    o, y = _vertex(args.o, q), _vertex(args.y, q)
    if o == y:
        raise UsageError("o and y are the same vertex; the germ is undefined")
    g = bt.germ_flag(o, y)
    if isinstance(g, bt.Flag):
        report = GermReport(o=str(o), y=str(y), kind="flag", point=list(g.point), line=list(g.line),
                            flag_id=bt.flag_id(g))
    elif g.point is not None:
        report = GermReport(o=str(o), y=str(y), kind="point", point=list(g.point))
    else:
        report = GermReport(o=str(o), y=str(y), kind="line", line=list(g.line))
    text = f"germ: {report.kind} point={report.point} line={report.line}"
    if report.flag_id is not None:
        text += f" (flag id {report.flag_id})"
    emit(report, text, args.json)
    return EXIT_OK
