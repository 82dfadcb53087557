"""L1 distance between the noisy and deterministic densities over a range of noise levels."""
import argparse
import csv

import numpy as np

from thermoform.config import load_config
from thermoform.perturbation import stability_curve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--eps", type=float, nargs="+", default=list(0.02 / 2 ** np.arange(6)))
    ap.add_argument("--depth", type=int)
    ap.add_argument("--out", default="stability_sweep.csv")
    args = ap.parse_args()
    cfg = load_config(args.config)
    fmap = cfg.build_map()
    curve = stability_curve(fmap, cfg.build_potential(fmap), args.eps, args.depth or cfg.depth, cfg.noise_nodes)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "l1_distance", "theta_eps"])
        for pt in curve:
            w.writerow([f"{pt.eps:.17g}", f"{pt.l1:.17g}", f"{pt.theta_eps:.17g}"])
            print(f"eps {pt.eps:.3e}  L1 {pt.l1:.3e}  Theta {pt.theta_eps:.4f}")
    e = np.array([pt.eps for pt in curve])
    d = np.array([pt.l1 for pt in curve])
    keep = d > 0
    if keep.sum() >= 2:
        print(f"log-log slope {np.polyfit(np.log(e[keep]), np.log(d[keep]), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
