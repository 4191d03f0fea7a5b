"""Regeneration gain over friction, cruise speed and payload.

    python3 scripts/regen_sweep.py --out runs/regen.csv
"""

import argparse
from pathlib import Path

import numpy as np

from crdnn.regen import KMH, RegenScenario, rows_to_csv, sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/regen.csv")
    args = p.parse_args()

    mus = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3]
    speeds = [s * KMH for s in (5.0, 10.0, 15.0, 20.0)]
    masses = [0.0, 2000.0, 4000.0, 6000.0]
    rows = sweep(RegenScenario(), mus, speeds, masses)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(rows_to_csv(rows))

    print("gain at 4 t payload (rows: mu, columns: km/h)")
    print("mu     " + "".join(f"{s / KMH:>8.0f}" for s in speeds))
    for mu in mus:
        cells = [r["efficiency_gain"] for r in rows if r["mu"] == mu and r["material_mass_kg"] == 4000.0]
        print(f"{mu:<7}" + "".join(f"{100 * g:>7.1f}%" for g in cells))
    print(f"\nwrote {len(rows)} rows to {args.out}; max gain {100 * np.max([r['efficiency_gain'] for r in rows]):.1f}%")


if __name__ == "__main__":
    main()
