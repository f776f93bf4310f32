"""Generate the synthetic stand-in for the UCI Concrete Slump Test file.

The real file (slump_test.data) could not be bundled. This writes a file with
the same header, row count and column ranges so the pipeline can be exercised
end to end; drop the real file in its place to run on the original data.

    python scripts/make_concrete_standin.py src/privlr/data/concrete_slump.csv
"""

import csv
import sys

import numpy as np

COLUMNS = [
    "No", "Cement", "Slag", "Fly ash", "Water", "SP", "Coarse Aggr.",
    "Fine Aggr.", "SLUMP(cm)", "FLOW(cm)", "Compressive Strength (28-day)(Mpa)",
]
# (low, high) per mix component, kg/m^3 except SP
RANGES = [
    (137.0, 374.0), (0.0, 193.0), (0.0, 260.0), (160.0, 240.0),
    (4.4, 19.0), (708.0, 1050.0), (640.0, 902.0),
]
N_ROWS = 103


def main(path):
    rng = np.random.default_rng(20241018)
    lo = np.array([r[0] for r in RANGES])
    hi = np.array([r[1] for r in RANGES])
    mix = lo + (hi - lo) * rng.beta(2.0, 2.0, size=(N_ROWS, len(RANGES)))
    cement, slag, ash, water, sp, coarse, fine = mix.T
    strength = (
        0.095 * cement + 0.02 * slag + 0.06 * ash - 0.15 * water
        + 0.25 * sp + 0.005 * coarse + 0.01 * fine + 20.0
        + rng.normal(0.0, 2.5, N_ROWS)
    )
    slump = np.clip(0.12 * water - 0.02 * coarse + rng.normal(0, 5, N_ROWS), 0, 29)
    flow = np.clip(20 + 1.6 * slump + rng.normal(0, 6, N_ROWS), 20, 78)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for i in range(N_ROWS):
            row = [i + 1] + [f"{v:.1f}" for v in mix[i]]
            row += [f"{slump[i]:.1f}", f"{flow[i]:.1f}", f"{strength[i]:.2f}"]
            w.writerow(row)


if __name__ == "__main__":
    main(sys.argv[1])
