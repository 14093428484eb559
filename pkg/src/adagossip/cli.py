"""Command line: ``run``, ``sweep`` and ``predict-bytes``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import SWEEP_AXES, ConfigError, parse_config, predicted_bytes_per_epoch, run_experiment, sweep


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--preset", help="named preset, e.g. paper/cifar10-ring16-topk90-adag")
    p.add_argument("--algorithm", choices=["dsgd", "deepsqueeze", "choco", "adag", "gossip_only_choco", "gossip_only_adag"])
    p.add_argument("--topology", help="ring | dyck32 | torus:RxC | full")
    p.add_argument("--agents", type=int)
    p.add_argument("--compressor", help="none | topk:F | quant:B")
    p.add_argument("--topk-scope", choices=["model", "layer"], help="top-k over the whole model or per parameter tensor")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--nesterov", choices=["true", "false"])
    p.add_argument("--model", choices=["mlp", "logreg"])
    p.add_argument("--val-samples", type=int)
    p.add_argument("--seeds", help="comma separated, e.g. 1,2,3")
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_const", const="true", help="record wall-clock seconds (breaks byte-identical replay)")
    p.add_argument("--out", help="metrics CSV path")


_NOT_CONFIG = {"command", "config", "axis", "values", "verbose"}


def _config_from(args: argparse.Namespace):
    overrides = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None}
    return parse_config(args.config, overrides)


def _parse_values(axis: str, text: str) -> list:
    conv = int if axis == "agents" else float
    return [conv(v) for v in text.split(",") if v.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="adagossip", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment over its seeds")
    _add_run_flags(run_p)

    sweep_p = sub.add_parser("sweep", help="rerun an experiment across values of one hyperparameter")
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument("--values", required=True, help="comma separated values")

    pb = sub.add_parser("predict-bytes", help="per-agent MB transmitted per epoch")
    pb.add_argument("--params", type=int, required=True)
    pb.add_argument("--samples", type=int, required=True)
    pb.add_argument("--agents", type=int, required=True)
    pb.add_argument("--batch", type=int, default=32)
    pb.add_argument("--topology", default="ring")
    pb.add_argument("--compressor", default="none")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")

    try:
        if args.command == "predict-bytes":
            mb = predicted_bytes_per_epoch(args.params, args.samples, args.agents, args.batch, args.topology, args.compressor)
            print(f"{mb:.6g}")
            return 0
        cfg = _config_from(args)
        if args.command == "run":
            result = run_experiment(cfg)
            print(json.dumps(result.summary, indent=2, default=str))
            return 1 if result.summary["errors"] else 0
        rows = sweep(cfg, args.axis, _parse_values(args.axis, args.values), out=cfg.out)
        for r in rows:
            print(json.dumps(r, default=str))
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
