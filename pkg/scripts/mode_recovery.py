"""Mode recovery on ring8: CE-GAN against the minimax-only baseline over several seeds.

    python scripts/mode_recovery.py --seeds 0,1,2,3,4 --output-dir runs/mode_recovery
"""

import argparse
from pathlib import Path

from cegan import config as config_io
from cegan.harness import compare, read_csv_rows

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", nargs="+", type=Path,
                    default=[CONFIGS / "ring8_cegan.ini", CONFIGS / "ring8_minimax.ini"])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--iterations", type=int, default=None)
    ap.add_argument("--output-dir", type=Path, default=Path("runs/mode_recovery"))
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    overrides = [f"evolution.iterations={args.iterations}"] if args.iterations is not None else []
    configs = [config_io.load(p, overrides) for p in args.configs]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = compare(configs, seeds, args.output_dir, args.workers)

    print("config,seed,generation,modes_covered,high_quality_ratio")
    for k, cfg in enumerate(configs):
        for s in seeds:
            metrics = args.output_dir / f"{k:02d}_{cfg.name}" / f"seed{s}" / "metrics.csv"
            for line in read_csv_rows(metrics):
                g, modes, ratio = line.split(",")[:3]
                print(f"{cfg.name},{s},{g},{modes},{float(ratio):.4f}")
    print()
    print("name,runs,modes_mean,modes_sd,ratio_mean,ratio_sd")
    for r in rows:
        print(r.csv())


if __name__ == "__main__":
    main()
