"""Command-line entry point: ``expertrecon <command> [options]``.

Commands::

    reconcile     reconcile every quantity of a panel
    score         score experts, equal weights and the reconciled fit
    sensitivity   reconciled probability and prior correlation grids
    delphi        init | add-round | groups | bundle | status | finalize

Exit codes: 0 success, 1 input error, 2 finished but not converged.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .. import __version__
from ..delphi import InputError, Quantity, Study
from .commands import EXIT_INPUT, EXIT_OK, cmd_delphi, cmd_reconcile, cmd_score, cmd_sensitivity
from .config import load_config

__all__ = ["main", "build_parser"]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON or YAML run configuration")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="format of tabular outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expertrecon", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconcile", help="reconcile a panel")
    _common(p)
    p.add_argument("--panel", type=Path, help="judgement table (overrides the config)")
    p.add_argument("--groups", type=Path, help="expert_id,group labels file")
    p.add_argument("--kind", choices=("auto", "continuous", "event", "proportion"))

    p = sub.add_parser("score", help="score forecasters against realizations")
    _common(p)
    p.add_argument("--panel", type=Path)
    p.add_argument("--groups", type=Path)
    p.add_argument("--realizations", type=Path)

    p = sub.add_parser("sensitivity", help="prior sensitivity grids for an event panel")
    _common(p)
    p.add_argument("--panel", type=Path)
    p.add_argument("--groups", type=Path)

    p = sub.add_parser("delphi", help="Delphi round management")
    dsub = p.add_subparsers(dest="action", required=True)
    d = dsub.add_parser("init", help="create a study directory")
    d.add_argument("--study", type=Path, required=True)
    d.add_argument("--name", default=None)
    d.add_argument("--experts", required=True, help="comma-separated expert ids")
    d.add_argument("--quantity", action="append", required=True,
                   help="id[:quantile|event[:p_low]], repeatable")
    d.add_argument("--max-rounds", type=int, default=3)
    d.add_argument("--change-rtol", type=float, default=0.0)
    d = dsub.add_parser("add-round", help="record the next round from a CSV")
    d.add_argument("--study", type=Path, required=True)
    d.add_argument("--input", type=Path, required=True)
    d = dsub.add_parser("groups", help="assign groups from an expert_id,group CSV")
    d.add_argument("--study", type=Path, required=True)
    d.add_argument("--labels", type=Path, required=True)
    d = dsub.add_parser("bundle", help="anonymised bundle of a round")
    d.add_argument("--study", type=Path, required=True)
    d.add_argument("--round", type=int)
    d.add_argument("--output", type=Path)
    d = dsub.add_parser("status", help="stopping check")
    d.add_argument("--study", type=Path, required=True)
    d = dsub.add_parser("finalize", help="final panel, then reconcile")
    d.add_argument("--study", type=Path, required=True)
    d.add_argument("--force", action="store_true", help="finalize without a stopping criterion")
    _common(d)
    return parser


def _parse_quantity(text: str) -> Quantity:
    parts = text.split(":")
    if len(parts) > 3 or not parts[0]:
        raise InputError(f"cannot parse quantity {text!r}")
    kind = parts[1] if len(parts) > 1 else "quantile"
    try:
        p_low = float(parts[2]) if len(parts) > 2 else 0.05
        return Quantity(parts[0], kind, p_low)
    except ValueError as exc:
        raise InputError(str(exc))


def _run(args) -> int:
    if args.command == "delphi" and args.action == "init":
        experts = [e.strip() for e in args.experts.split(",") if e.strip()]
        try:
            Study.create(args.study, args.name or args.study.name,
                         [_parse_quantity(q) for q in args.quantity], experts,
                         max_rounds=args.max_rounds, change_rtol=args.change_rtol)
        except (ValueError, FileExistsError) as exc:
            raise InputError(str(exc), args.study)
        print(f"created study in {args.study}")
        return EXIT_OK

    overrides = {k: getattr(args, k, None)
                 for k in ("seed", "chains", "out", "format", "panel", "groups", "kind",
                           "realizations")}
    cfg = load_config(getattr(args, "config", None), **overrides)
    if args.command == "reconcile":
        return cmd_reconcile(cfg)
    if args.command == "score":
        return cmd_score(cfg)
    if args.command == "sensitivity":
        return cmd_sensitivity(cfg)
    return cmd_delphi(
        cfg, args.action, study_dir=args.study,
        input_path=getattr(args, "input", None) or getattr(args, "labels", None),
        round_index=getattr(args, "round", None), output=getattr(args, "output", None),
        force=getattr(args, "force", False),
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        code = _run(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if code == 2:
        print("warning: at least one chain did not converge", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
