"""Command-line entry point: ``trex run|sample|cluster|train|report|attribute``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import trajectory
from .errors import ConfigError, SchemaError, TrexError
from .pipeline import STAGES, Pipeline, StageFailure, attribute_external, load_config
from .report import export_json, render_table

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
DEFAULT_OUT = "trex-out"

log = logging.getLogger("trex")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", default="mo-corridor", help="config JSON path or bundled config name")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out-dir", default=os.environ.get("TREX_OUT_DIR", DEFAULT_OUT))
    p.add_argument("--workers", type=int, help="parallel complementary-policy fits")
    p.add_argument("--encoder", help="window encoder id")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trex", description="Preference-level trajectory attribution.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline, or one stage with --stage")
    _common(run)
    run.add_argument("--stage", choices=("all", *STAGES), default="all")

    for name, text in (
        ("sample", "train or load experts and sample datasets"),
        ("train", "fit original and complementary policies"),
        ("report", "evaluate policies and write reports"),
    ):
        _common(sub.add_parser(name, help=text))
    cl = sub.add_parser("cluster", help="split, encode and cluster windows")
    _common(cl)
    cl.add_argument("--dataset", help="external dataset (line-delimited JSON) to cluster instead of the sampled one")

    at = sub.add_parser("attribute", help="attribution metrics from externally supplied returns")
    at.add_argument("--returns", required=True, help="JSON file of original and per-cluster returns")
    at.add_argument("--preference", help="comma-separated weights selecting one table, e.g. 0.5,0.5")
    at.add_argument("--out-dir", help="also write report JSON files here")
    at.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.encoder is not None:
        changes["encoder"] = args.encoder
    return cfg.replace(**changes) if changes else cfg


def _parse_pref(text: str):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse preference {text!r}") from None


def cmd_attribute(args) -> int:
    pref = _parse_pref(args.preference) if args.preference else None
    reports = attribute_external(args.returns, pref)
    for rep in reports:
        print(render_table(rep))
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            export_json(rep, out / f"report-{rep.preference.tag}.json")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    if cfg.encoder not in trajectory.ENCODERS:
        raise ConfigError(f"unknown encoder {cfg.encoder!r}; known: {sorted(trajectory.ENCODERS)}")
    pipe = Pipeline(cfg, args.out_dir)
    stage = args.command if args.command != "run" else args.stage
    if stage == "all":
        reports = pipe.run()
    elif stage == "cluster" and getattr(args, "dataset", None):
        ds = trajectory.read_dataset(args.dataset, source="external")
        pipe.run_stage("cluster", prefs=[ds.preference], dataset=args.dataset)
        reports = []
    else:
        reports = pipe.run_stage(stage)
    for rep in reports:
        print(render_table(rep))
    log.info("outputs in %s", pipe.out_dir)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "attribute":
            return cmd_attribute(args)
        return cmd_pipeline(args)
    except (ConfigError, SchemaError) as exc:
        print(f"trex: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"trex: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except TrexError as exc:
        print(f"trex: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
