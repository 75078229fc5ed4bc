"""Plot a gamma sweep and a simulation trace written by the CLI or the demos.

Needs the ``plots`` extra (matplotlib).

    python demos/plot_results.py sweep_h2.csv trace_h2.csv --out figures
"""
import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from lpvp.serialization import read_csv  # noqa: E402


def plot_sweep(path, out):
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "optimal"]
    g = [float(r["gamma"]) for r in rows]
    fig, ax = plt.subplots(1, 2, figsize=(10, 4))
    for name in rows[0]:
        if name.startswith("kappa"):
            ax[0].loglog(g, [float(r[name]) for r in rows], "o-", label=name)
    ax[0].set_xlabel("gamma")
    ax[0].set_ylabel("precision kappa")
    ax[0].legend(fontsize=8)
    ax[1].semilogx(g, [float(r["theta1_deg"]) for r in rows], "o-")
    ax[1].set_xlabel("gamma")
    ax[1].set_ylabel("allowable theta1 noise [deg]")
    fig.tight_layout()
    dest = out / f"{Path(path).stem}.png"
    fig.savefig(dest, dpi=120)
    return dest


def plot_trace(path, out):
    header, data = read_csv(path)
    t = data[:, 0]
    fig, ax = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    for j, name in enumerate(("eps1", "eps2")):
        ax[j].plot(t, data[:, header.index(name)])
        ax[j].set_ylabel(name)
    ax[-1].set_xlabel("t [normalized]")
    fig.tight_layout()
    dest = out / f"{Path(path).stem}.png"
    fig.savefig(dest, dpi=120)
    return dest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("sweep", nargs="?", help="sweep CSV")
    ap.add_argument("trace", nargs="?", help="trace CSV")
    ap.add_argument("--out", default=".", help="directory for PNG files")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        print(f"wrote {plot_sweep(args.sweep, out)}")
    if args.trace:
        print(f"wrote {plot_trace(args.trace, out)}")


if __name__ == "__main__":
    main()
