"""How the required sensor precision falls as the error bound is relaxed.

Sweeps gamma for the cislunar scenario, prints the kappa of every
channel next to the allowable bearing noise and writes the table to
``sweep_<norm>.csv`` for ``plot_results.py``.

Run with ``python demos/gamma_sweep.py [h2|hinf] [outdir]``.
"""
import sys
from pathlib import Path

import numpy as np

from lpvp import noise_angle, sweep_gamma
from lpvp.cr3bp import build_scenario
from lpvp.serialization import write_sweep_csv


def main(norm="h2", out="."):
    plant = build_scenario().plant
    gammas = np.geomspace(0.05, 1.0, 8)
    sw = sweep_gamma(plant, norm, gammas, workers=4)
    print(f"{norm}: optimal cost non-increasing in gamma: {sw.monotone}")
    print("gamma     " + "".join(f"{n:>13}" for n in plant.channel_names) + "   theta1 deg")
    for g, res in zip(sw.gammas, sw.results):
        if not res.ok:
            print(f"{g:<9.4g} {res.status}")
            continue
        ang = noise_angle(res.kappa[0], res.kappa[1]).from_sin_deg
        print(f"{g:<9.4g} " + "".join(f"{k:13.4g}" for k in res.kappa) + f"   {ang:9.3f}")
    path = write_sweep_csv(Path(out) / f"sweep_{norm}.csv", sw.results, plant.n_y)
    print(f"wrote {path}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
