"""Command-line entry point.

Subcommands: generate, run, train-attn, estimate-sto, report.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from asyncse.experiments import (
    ConfigError,
    DataError,
    ExperimentConfig,
    cmd_estimate_sto,
    cmd_generate,
    cmd_report,
    cmd_run,
    cmd_train_attn,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--jobs", type=int, help="worker threads for per-node stages")
    parser.add_argument("--output-dir", help="override the config output directory")
    parser.add_argument("--sro-max-ppm", type=float, help="run a single SRO sweep value")
    parser.add_argument("--sto-max-ms", type=float, help="run a single STO sweep value")
    parser.add_argument("--reference-node", type=int, help="override the reference node")
    parser.add_argument("--verbose", action="store_true", help="debug logging")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.reference_node is not None:
        cfg.reference_node = args.reference_node
    if args.sro_max_ppm is not None and args.sto_max_ms is not None:
        raise ConfigError("choose either --sro-max-ppm or --sto-max-ms, not both")
    if args.sro_max_ppm is not None:
        cfg.sweep_axis = "sro"
        cfg.sweep_max_values = [0.0, args.sro_max_ppm]
    if args.sto_max_ms is not None:
        cfg.sweep_axis = "sto"
        cfg.sweep_max_values = [0.0, args.sto_max_ms]
    cfg.verbose = bool(args.verbose)
    cfg.__post_init__()  # re-validate after overrides
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncse",
        description="Distributed speech enhancement experiments over "
        "asynchronized simulated microphone networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="render scenes to WAVs + manifests")
    _add_common(p_gen)

    p_run = sub.add_parser("run", help="run the configured sweep, emit results.csv")
    _add_common(p_run)

    p_train = sub.add_parser("train-attn", help="train a mask head for one system")
    _add_common(p_train)
    p_train.add_argument(
        "--system",
        default="async-trained-attention",
        help="sync-trained | async-trained | async-trained-attention",
    )

    p_est = sub.add_parser("estimate-sto", help="similarity matrices + STO estimates")
    _add_common(p_est)
    p_est.add_argument("--scene", type=int, default=0, help="scene index")
    p_est.add_argument("--node", type=int, default=0, help="observing node id")
    p_est.add_argument(
        "--sto-ms", default="0,80,112,48", help="four comma-separated injected STOs (ms)"
    )
    p_est.add_argument("--checkpoint", help="attention checkpoint (defaults to the trained one)")

    p_rep = sub.add_parser("report", help="summarise a results CSV")
    p_rep.add_argument("--input", required=True, help="results.csv path")
    p_rep.add_argument("--out", help="write the summary CSV here")
    p_rep.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            cmd_report(args.input, args.out)
            return EXIT_OK
        cfg = _load_config(args)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "run":
            cmd_run(cfg)
        elif args.command == "train-attn":
            cmd_train_attn(cfg, args.system)
        elif args.command == "estimate-sto":
            sto = [float(v) for v in args.sto_ms.split(",")]
            cmd_estimate_sto(cfg, args.scene, args.node, sto, args.checkpoint)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
