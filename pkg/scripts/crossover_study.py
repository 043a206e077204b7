"""Probe crossover events mid-training: child vs parent fitness, refinement, better vs worse basis.

    python scripts/crossover_study.py --warmup 2000 --every 100 --count 30
"""

import argparse
import statistics
from pathlib import Path

from cegan import config as config_io
from cegan.evolution import init_state
from cegan.studies import crossover_study

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=CONFIGS / "ring8_cegan.ini")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--warmup", type=int, default=2000)
    ap.add_argument("--every", type=int, default=100)
    ap.add_argument("--count", type=int, default=30)
    ap.add_argument("--budget", type=int, default=50, help="distillation steps for the basis comparison")
    args = ap.parse_args()

    cfg = config_io.load(args.config, args.set)
    state = init_state(cfg.evolution, cfg.generator, cfg.discriminator, cfg.dataset, cfg.noise)
    events = crossover_study(state, args.warmup, args.every, args.count,
                             extra_steps=50 * cfg.evolution.k_cross, budget=args.budget)

    print("generation,parent_x,parent_y,child,worse_basis_child,refined_fraction,better_loss,worse_loss")
    for e in events:
        print(f"{e.generation},{e.parent_fitness[0]:.6f},{e.parent_fitness[1]:.6f},{e.child_fitness:.6f},"
              f"{e.worse_child_fitness:.6f},{e.refined_fraction:.4f},{e.better_budget_loss:.3e},"
              f"{e.worse_budget_loss:.3e}")
    n = len(events)
    print()
    print(f"child >= better parent:        {sum(e.child_beats_parents for e in events)}/{n}")
    print(f"worse-basis child >= better:   {sum(e.worse_child_fitness >= max(e.parent_fitness) for e in events)}/{n}")
    print(f"better-basis child >= worse-basis child: {sum(e.child_fitness >= e.worse_child_fitness for e in events)}/{n}")
    print(f"refined below 10% of initial:  {sum(e.refined_fraction < 0.1 for e in events)}/{n} "
          f"(median fraction {statistics.median(e.refined_fraction for e in events):.3f})")
    print(f"better-init lower budget loss: {sum(e.better_init_wins for e in events)}/{n}")


if __name__ == "__main__":
    main()
