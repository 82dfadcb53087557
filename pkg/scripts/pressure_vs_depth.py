"""Leading eigenvalue, pressure and spectral ratio of the cylinder model as depth grows."""
import argparse
import csv
import math

from thermoform.config import load_config
from thermoform.transfer import spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--depths", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    ap.add_argument("--out", default="pressure_vs_depth.csv")
    args = ap.parse_args()
    cfg = load_config(args.config)
    fmap = cfg.build_map()
    pot = cfg.build_potential(fmap)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "lambda", "pressure", "gap"])
        for n in args.depths:
            sd = spectrum(fmap, pot, n)
            w.writerow([n, f"{sd.lam:.17g}", f"{math.log(sd.lam):.17g}", f"{sd.gap:.17g}"])
            print(f"depth {n:2d}  P = {math.log(sd.lam):.10f}  gap = {sd.gap:.4f}")


if __name__ == "__main__":
    main()
