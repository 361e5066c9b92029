"""
dl: word metric and chain metric d_L between two vertices of the tree of flats.
"""
from app.cli.commands.certify import wall_model
from app.cli.deps import EXIT_OK, UsageError, emit, parse_with
from app.schemas.geometry import ChainMetricReport
from app.services import tree_flats as tf


def register(subparsers) -> None:
    p = subparsers.add_parser("dl", help="Compare the word metric with the chain metric d_L")
    p.add_argument("--backend", default="tree_flats", choices=("tree_flats",))
    p.add_argument("--x", default="e", help='Word such as "A(1,0).B(2)"; "e" is the identity')
    p.add_argument("--y", required=True)
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=handle, command_parser=p)


def chain_report(x: tf.GroupWord, y: tf.GroupWord, L: int) -> ChainMetricReport:
    d = tf.word_distance(x, y)
    chain = tf.longest_l_chain(x, y, L) if d >= 2 else []
    return ChainMetricReport(
        x=str(x), y=str(y), L=L, word_distance=d,
        chain_distance=tf.chain_metric_dL(x, y, L),
        chain=[wall_model(w) for w in chain],
    )


def handle(args) -> int:
    if args.L < 0:
        raise UsageError("--L must be nonnegative")
    x = parse_with(tf.GroupWord.parse, args.x, "word")
    y = parse_with(tf.GroupWord.parse, args.y, "word")
    report = chain_report(x, y, args.L)
    lines = [
        f"d({report.x}, {report.y}) = {report.word_distance}",
        f"d_{report.L}({report.x}, {report.y}) = {report.chain_distance}",
    ]
    for w in report.chain:
        lines.append(f"  chain wall: {w.prefix} {w.family} {w.offset}")
    emit(report, "\n".join(lines), args.json)
    return EXIT_OK
