"""Which operator produced the selected parent, per window of generations.

    python scripts/operator_selection.py --iterations 5000 --window 500
"""

import argparse
from pathlib import Path

from cegan import config as config_io
from cegan.harness import read_log, run_training
from cegan.metrics import OPERATORS, operator_selection_stats

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=CONFIGS / "ring8_cegan.ini")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--window", type=int, default=500)
    ap.add_argument("--log", type=Path, default=None, help="analyse an existing log.csv instead of training")
    ap.add_argument("--output-dir", type=Path, default=Path("runs/operator_selection"))
    args = ap.parse_args()

    if args.log is None:
        cfg = config_io.load(args.config, args.set + [f"evolution.iterations={args.iterations}"])
        cfg.output_dir = str(args.output_dir)
        log_path = run_training(cfg).log_path
    else:
        log_path = args.log
    rows = read_log(log_path)
    print("window_start," + ",".join(OPERATORS))
    for k, counts in enumerate(operator_selection_stats(rows, args.window)):
        print(f"{k * args.window}," + ",".join(str(counts[op]) for op in OPERATORS))
    total = operator_selection_stats(rows)
    print("total," + ",".join(str(total[op]) for op in OPERATORS))


if __name__ == "__main__":
    main()
