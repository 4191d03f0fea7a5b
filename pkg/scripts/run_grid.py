"""Train the architecture x window-size grid on synthetic data for several seeds.

    python3 scripts/run_grid.py --seeds 0 1 2 --out runs/grid
"""

import argparse
import json
import logging
import time
from pathlib import Path

from crdnn.experiment import desk_grid_config, mean_micro_f1_by_arch, run_experiment_grid
from crdnn.synth import class_fractions, generate_dataset


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--cycles", type=int, default=119)
    p.add_argument("--out", default="runs/grid")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(seed=args.data_seed, total_cycles=args.cycles)
    frac = class_fractions(data)
    print(f"class fractions travel/loading/unloading: {frac.round(4).tolist()}")

    grids, summary = [], {"class_fractions": frac.tolist(), "seeds": {}}
    t0 = time.perf_counter()
    for seed in args.seeds:
        g = run_experiment_grid(data, cfg=desk_grid_config(seed))
        grids.append(g)
        table = g.table()
        print(f"\nseed {seed}\n{table}")
        (out / f"grid_seed{seed}.txt").write_text(table + "\n")
        summary["seeds"][seed] = {f"{c.arch}_ws{c.window_size}": c.metrics for c in g.cells if c.error is None}
    summary["mean_micro_f1"] = mean_micro_f1_by_arch(grids)
    summary["minutes"] = (time.perf_counter() - t0) / 60
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print("\nmean micro-F1 by architecture:", summary["mean_micro_f1"])
    print(f"total {summary['minutes']:.1f} min")


if __name__ == "__main__":
    main()
