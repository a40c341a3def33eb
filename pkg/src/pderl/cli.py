"""Command-line entry point.

Subcommands: train, eval, gen-reference, stats, export-traj.  Every
experiment-config key is also a flag (flag > config file > default); errors
exit 2 for configuration problems and 1 for runtime failures, each with a
one-line message on stderr.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from . import harness, ns


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for f in fields(harness.ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        names = [flag, "--seed"] if f.name == "seeds" else [flag]
        parser.add_argument(*names, dest=f.name, metavar="V",
                            help=f"config key {f.name} (default "
                                 f"{harness.render_value(f.name, f.default)})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pderl",
        description="Feedback control of parametric PDEs with reinforcement "
                    "learning: training, evaluation and log tooling.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run seeded training")
    train.add_argument("--config", metavar="FILE",
                       help="flat key = value config file")
    train.add_argument("--resume", action="store_true",
                       help="continue from checkpoints in the output directory")
    train.add_argument("--show-config", action="store_true",
                       help="print the fully resolved config and exit")
    _add_config_flags(train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint with the "
                                     "deterministic policy")
    ev.add_argument("--checkpoint", required=True, metavar="PATH")
    ev.add_argument("--mu", type=float, default=None,
                    help="pin evaluation to one parameter value")
    ev.add_argument("--eval-seed", type=int, default=0)
    ev.add_argument("--episodes", type=int, default=None,
                    help="evaluation episode count (default: eval_mu_count)")
    ev.add_argument("--out", metavar="FILE", default=None,
                    help="evaluation log path (default: eval.csv next to "
                         "the checkpoint)")

    gen = sub.add_parser("gen-reference", help="generate the flow-tracking "
                                               "reference trajectory")
    gen.add_argument("--out", required=True, metavar="FILE")
    gen.add_argument("--horizon", type=int, default=None)

    st = sub.add_parser("stats", help="summarize a run log as a CSV table")
    st.add_argument("--log", required=True, metavar="FILE")
    st.add_argument("--phases", default="", metavar="N,N",
                    help="episode boundaries for per-phase rows, e.g. 500,1000")
    st.add_argument("--phase", default="train", choices=("train", "eval"),
                    help="which records to summarize")
    st.add_argument("--out", metavar="FILE", default=None,
                    help="output CSV path (default: print to stdout)")

    ex = sub.add_parser("export-traj", help="export one deterministic episode "
                                            "as a CSV time series")
    ex.add_argument("--checkpoint", required=True, metavar="PATH")
    ex.add_argument("--mu", type=float, default=None)
    ex.add_argument("--traj-seed", type=int, default=0)
    ex.add_argument("--free-steps", type=int, default=0,
                    help="steps with the controller off before the policy "
                         "takes over")
    ex.add_argument("--out", metavar="FILE", default=None,
                    help="trajectory CSV path (default: traj.csv next to "
                         "the checkpoint)")
    return parser


def _resolve_checkpoint(path_text: str) -> Path:
    """Accept an exact base/.json path, a run directory, or its ckpt prefix."""
    path = Path(path_text)
    manifest = harness._ckpt_paths(path)[0]
    if manifest.exists():
        return manifest.with_suffix("")
    search = path if path.is_dir() else path.parent
    matches = sorted(search.glob("ckpt_s*.json"))
    if len(matches) == 1:
        return matches[0].with_suffix("")
    if not matches:
        raise FileNotFoundError(f"no checkpoint at {path_text}")
    names = ", ".join(m.stem for m in matches)
    raise RuntimeError(f"{path_text} is ambiguous; checkpoints found: {names}")


def _cmd_train(args) -> int:
    overrides = {f.name: getattr(args, f.name)
                 for f in fields(harness.ExperimentConfig)
                 if getattr(args, f.name) is not None}
    file_text = None
    if args.config:
        try:
            file_text = Path(args.config).read_text()
        except OSError as e:
            raise harness.ConfigError(f"cannot read config file: {e}") from None
    cfg = harness.resolve_config(file_text, overrides)
    if args.show_config:
        sys.stdout.write(harness.config_text(cfg))
        return 0
    harness.run_training(cfg, progress=print, resume=args.resume)
    return 0


def _cmd_eval(args) -> int:
    base = _resolve_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else base.parent / "eval.csv"
    harness.run_evaluation(base, out, mu=args.mu, eval_seed=args.eval_seed,
                           episodes=args.episodes, progress=print)
    return 0


def _cmd_gen_reference(args) -> int:
    if args.horizon is not None and args.horizon < 1:
        raise harness.ConfigError("horizon must be positive")
    cfg = ns.NsConfig() if args.horizon is None else ns.NsConfig(horizon=args.horizon)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ns.generate_reference(args.out, cfg)
    print(f"reference={args.out}")
    return 0


def _cmd_stats(args) -> int:
    try:
        boundaries = tuple(int(p) for p in args.phases.split(",") if p.strip())
    except ValueError:
        raise harness.ConfigError(f"bad --phases value: {args.phases!r}") from None
    records = harness.read_runlog(args.log)
    rows = harness.compute_stats(records, phase=args.phase, boundaries=boundaries)
    if args.out:
        path = harness.write_stats_csv(rows, args.out)
        print(f"stats={path}")
    else:
        lines = [harness.STATS_HEADER]
        for row in rows:
            lo = "" if row["ci_low"] is None else repr(row["ci_low"])
            hi = "" if row["ci_high"] is None else repr(row["ci_high"])
            lines.append(f"{row['phase']},{row['n']},{row['mean']!r},"
                         f"{row['std']!r},{lo},{hi}")
        sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _cmd_export_traj(args) -> int:
    base = _resolve_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else base.parent / "traj.csv"
    written = harness.export_trajectory(base, out, mu=args.mu,
                                        traj_seed=args.traj_seed,
                                        free_steps=args.free_steps)
    for p in written:
        print(f"trajectory={p}")
    return 0


_COMMANDS = {"train": _cmd_train, "eval": _cmd_eval,
             "gen-reference": _cmd_gen_reference, "stats": _cmd_stats,
             "export-traj": _cmd_export_traj}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on unknown flags, 0 on --help
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except harness.ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
