"""Plot compression ratio against chunk size from a `sim compression` CSV.

    streamvault --format csv sim compression --out compression.csv
    python scripts/plot_compression.py compression.csv compression.png
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load(path):
    curve, whole = {}, {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["experiment"] != "compression":
                continue
            metric = row["metric"]
            if metric not in ("ratio", "sealed_ratio"):
                continue
            if row["series"] == "chunked":
                curve.setdefault(metric, []).append((int(row["param"]), float(row["value"])))
            elif row["series"] == "whole":
                whole[metric] = float(row["value"])
    return {m: sorted(v) for m, v in curve.items()}, whole


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    curve, whole = load(sys.argv[1])
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, label in (("ratio", "payload"), ("sealed_ratio", "sealed chunk")):
        if metric in curve:
            xs, ys = zip(*curve[metric])
            ax.plot(xs, ys, marker="o", label=label)
    if "ratio" in whole:
        ax.axhline(whole["ratio"], linestyle="--", color="gray", label="whole dataset")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("chunk size (records)")
    ax.set_ylabel("compression ratio")
    ax.legend()
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=150)


if __name__ == "__main__":
    main()
