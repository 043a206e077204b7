"""Command-line entry point: ``cegan {train,eval,compare,gradcheck}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_io
from .data import DATASET_KINDS, DatasetSpec
from .gradcheck import TOLERANCE, run_suite
from .harness import compare, evaluate, run_training
from .nets import CheckpointError


def _train(args) -> int:
    cfg = config_io.load(args.config, args.set)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    art = run_training(cfg)
    rep = art.final_report
    print(f"{art.output_dir}: {art.generations} generations, modes_covered={rep.modes_covered}/"
          f"{rep.n_modes} high_quality_ratio={rep.high_quality_ratio:.4f}")
    if not art.completed:
        print(f"aborted: {art.error}", file=sys.stderr)
        return 1
    return 0


def _eval(args) -> int:
    dataset = DatasetSpec(args.dataset, args.sigma, args.scale, args.csv or "")
    try:
        rep = evaluate(args.checkpoint, dataset, args.n, seed=args.seed, samples_path=args.samples,
                       min_count=args.min_count)
    except (CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"modes_covered={rep.modes_covered}/{rep.n_modes}")
    print(f"high_quality_ratio={rep.high_quality_ratio:.6f}")
    print("per_mode_counts=" + ",".join(str(c) for c in rep.per_mode_counts))
    return 0


def _compare(args) -> int:
    configs = [config_io.load(p, args.set) for p in args.configs]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    rows = compare(configs, seeds, args.output_dir, args.workers)
    print("name,runs,modes_mean,modes_sd,ratio_mean,ratio_sd")
    for r in rows:
        print(r.csv())
    return 0


def _gradcheck(args) -> int:
    results = run_suite(args.instances, args.seed)
    ok = True
    for name, err in results.items():
        passed = err < TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name:28s} max_rel_err={err:.3e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cegan", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("config", type=Path)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="evaluate a generator checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--dataset", choices=DATASET_KINDS, default="ring8")
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--csv", default=None, help="points file for --dataset custom_csv")
    p.add_argument("-n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None,
                   help="noise seed (default: the stream recorded in the checkpoint)")
    p.add_argument("--samples", type=Path, default=None, help="write the samples to this CSV")
    p.add_argument("--min-count", type=int, default=20)
    p.set_defaults(func=_eval)

    p = sub.add_parser("compare", help="run several configs over shared seeds")
    p.add_argument("configs", nargs="+", type=Path)
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of every objective")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
