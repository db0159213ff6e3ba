"""Command-line entry point: ingest, gen-toy, train, sample, eval.

Every command takes ``--config <path>`` and repeatable ``--set key=value``
overrides. On failure a single line ``error<TAB><kind><TAB><message>`` is
written to stderr and the exit code is 1.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import RunConfig, load_config


def _cmd_ingest(cfg: RunConfig, args) -> str:
    from .data import ingest
    index = ingest(cfg)
    counts = {s: len(index.by_split(s)) for s in ("train", "val", "test")}
    return f"ingested {len(index.entries)} dialogs {counts} into {cfg.cache_dir}"


def _cmd_gen_toy(cfg: RunConfig, args) -> str:
    from .toy import gen_toy
    out = args.out or cfg.data_root
    plans = gen_toy(out, cfg.toy_dialogs, cfg.toy_seconds, cfg.seed, split=args.split, prefix=args.prefix)
    return f"wrote {len(plans)} toy dialogs to {out}"


def _cmd_train(cfg: RunConfig, args) -> str:
    from .train import train
    params = train(cfg)
    return f"trained {params.step} steps; checkpoint {cfg.checkpoint}; log {cfg.log_path}"


def _cmd_sample(cfg: RunConfig, args) -> str:
    from .generate import sample_to_bvh
    if not cfg.dialog:
        raise ValueError("no dialog given; use --set dialog=<id>")
    return f"wrote {sample_to_bvh(cfg)}"


def _cmd_eval(cfg: RunConfig, args) -> str:
    from .metrics import evaluate
    rows = evaluate(cfg)
    agg = rows[-1]
    return f"evaluated {len(rows) - 1} dialogs; report {cfg.report}; spearman {agg.get('condition_spearman')}"


COMMANDS = {"ingest": _cmd_ingest, "gen-toy": _cmd_gen_toy, "train": _cmd_train,
            "sample": _cmd_sample, "eval": _cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadgest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "gen-toy":
            p.add_argument("--out", help="output directory (default: data_root)")
            p.add_argument("--split", default="train", choices=["train", "val", "test"])
            p.add_argument("--prefix", default="toy", help="dialog id prefix")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.set)
        print(COMMANDS[args.command](cfg, args))
    except Exception as e:  # one-line machine-parseable failure
        msg = str(e).replace("\n", " ").replace("\t", " ")
        print(f"error\t{type(e).__name__}\t{msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
