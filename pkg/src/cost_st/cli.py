"""``cost-st`` command line.

Exit codes: 0 success, 2 configuration problem, 3 bad or misaligned data,
4 training diverged, 1 anything else raised by the package.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import CONFIG_ENV, load_config
from .errors import CostError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cost-st", description="Two-stage mean + residual-diffusion forecasting.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config file (default: ${CONFIG_ENV})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set train.epochs=5 (repeatable)")
    common.add_argument("--workdir", help="shortcut for --set workdir=PATH")
    common.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset and its truth sidecar")
    g.add_argument("--out", help="output .stbin path (default: WORKDIR/data.stbin)")
    sub.add_parser("train-mean", parents=[common], help="stage 1: fit the conditional-mean model")
    sub.add_parser("train-diffusion", parents=[common], help="stage 2: fit the residual denoiser")
    sub.add_parser("train", parents=[common], help="both stages in order")
    f = sub.add_parser("forecast", parents=[common], help="sample the ensemble for the test windows")
    f.add_argument("--out", help="ensemble path (default: WORKDIR/ensemble.ens)")
    f.add_argument("--jobs", type=int, help="parallel member groups")
    e = sub.add_parser("evaluate", parents=[common], help="score an ensemble against the series")
    e.add_argument("--ensemble", help="ensemble path (default: WORKDIR/ensemble.ens)")
    e.add_argument("--data", help="series holding the truth (default: the configured data)")
    e.add_argument("--out-dir", help="where report/tables go (default: WORKDIR)")
    r = sub.add_parser("pipeline", parents=[common], help="gen-data, train, forecast, evaluate")
    r.add_argument("--jobs", type=int)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    overrides = list(args.overrides)
    if args.workdir:
        overrides.append(f"workdir={args.workdir}")
    try:
        cfg = load_config(args.config, overrides)
        cmd = args.command
        if cmd == "gen-data":
            print(pipeline.gen_data(cfg, args.out))
        elif cmd == "train-mean":
            print(pipeline.run_train_mean(cfg))
        elif cmd == "train-diffusion":
            print(pipeline.run_train_diffusion(cfg))
        elif cmd == "train":
            for path in pipeline.run_train(cfg):
                print(path)
        elif cmd == "forecast":
            print(pipeline.run_forecast(cfg, args.out, args.jobs))
        elif cmd == "evaluate":
            pipeline.run_evaluate(cfg, args.ensemble, args.data, args.out_dir)
            out = args.out_dir or cfg.workdir
            sys.stdout.write((pipeline.Path(out) / pipeline.REPORT_FILE).read_text())
        elif cmd == "pipeline":
            pipeline.run_pipeline(cfg, args.jobs)
            sys.stdout.write((pipeline.workdir(cfg) / pipeline.REPORT_FILE).read_text())
    except CostError as exc:
        print(f"cost-st: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cost-st: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
