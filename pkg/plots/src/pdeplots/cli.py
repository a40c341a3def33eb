"""pdeplots command line: one subcommand per figure kind.

Mirrors the pderl CLI conventions: exit 0 on success, 2 for usage errors,
1 for runtime errors (missing files, schema mismatches); the written path
is printed as `figure=<path>`.
"""
import argparse
import sys

from .figures import FigureRequest, render
from .schemas import SchemaError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pdeplots",
        description="Render figures from pderl run logs and exports.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("curves", help="mean/std reward curves across seeds")
    c.add_argument("--log", required=True, metavar="CSV",
                   help="run log (train.csv)")
    c.add_argument("--phase", default="train", choices=("train", "eval"))
    c.add_argument("--smooth", type=int, default=1, metavar="N",
                   help="trailing moving-average window (default 1 = off)")
    c.add_argument("--out", default="curves.png", metavar="PNG")

    b = sub.add_parser("ci-bars", help="phase means with harness-computed CIs")
    b.add_argument("--stats", required=True, metavar="CSV",
                   help="stats table written by `pderl stats`")
    b.add_argument("--out", default="ci_bars.png", metavar="PNG")

    h = sub.add_parser("ks-heatmap", help="space-time heatmap of a trajectory")
    h.add_argument("--traj", required=True, metavar="CSV",
                   help="trajectory export written by `pderl export-traj`")
    h.add_argument("--control-start", type=int, default=100, metavar="T",
                   help="controller-ON step marker (default 100)")
    h.add_argument("--out", default="ks_heatmap.png", metavar="PNG")

    f = sub.add_parser("ns-fields", help="final flow field vs reference")
    f.add_argument("--field", required=True, metavar="CSV",
                   help="field export written by `pderl export-traj`")
    f.add_argument("--out", default="ns_fields.png", metavar="PNG")
    return p


def _request(args: argparse.Namespace) -> FigureRequest:
    if args.command == "curves":
        return FigureRequest("curves", (args.log,), args.out,
                             smooth=args.smooth, phase=args.phase)
    if args.command == "ci-bars":
        return FigureRequest("ci_bars", (args.stats,), args.out)
    if args.command == "ks-heatmap":
        return FigureRequest("ks_heatmap", (args.traj,), args.out,
                             control_start=args.control_start)
    return FigureRequest("ns_fields", (args.field,), args.out)


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        out = render(_request(args))
    except (SchemaError, FileNotFoundError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"figure={out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
