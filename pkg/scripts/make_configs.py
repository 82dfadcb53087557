"""Write the example run configurations into configs/."""
import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "configs"


def benchmark_map(delta0=0.1):
    b = 9.0 * (1.0 - 1.0 / (3.0 * (1.0 + delta0)))
    return {
        "name": f"benchmark-delta0-{delta0}",
        "breaks": [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
        "branches": [
            {"kind": "quadratic", "coeffs": [0.0, 1.0 / (1.0 + delta0), b]},
            {"kind": "affine", "slope": 3.0, "offset": -1.0},
            {"kind": "affine", "slope": 3.0, "offset": -2.0},
        ],
        "q": 1,
        "delta0": delta0,
    }


DOUBLING = {"name": "doubling", "breaks": [0.0, 0.5, 1.0],
            "branches": [{"kind": "affine", "slope": 2.0, "offset": 0.0},
                         {"kind": "affine", "slope": 2.0, "offset": -1.0}]}

GOLD = (1.0 + math.sqrt(5.0)) / 2.0
GOLDEN = {"name": "golden-mean", "breaks": [0.0, 1.0 / GOLD, 1.0],
          "branches": [{"kind": "affine", "slope": GOLD, "offset": 0.0},
                       {"kind": "affine", "slope": GOLD, "offset": -1.0}]}

ZERO = {"kind": "affine", "params": [0.0, 0.0]}
TENT = {"kind": "tent", "params": [0.0, 0.5]}

CONFIGS = {
    "doubling": {"map": DOUBLING, "potential": ZERO, "gamma": 0.9, "depth": 10,
                 "observable": {"kind": "sin", "mode": 1}},
    "two_shift": {"map": DOUBLING, "potential": {"kind": "constant_per_atom", "params": [0.0, "log(2)"]},
                  "depth": 10, "observable": {"kind": "indicator", "atom": 0}},
    "golden_mean": {"map": GOLDEN, "potential": ZERO, "depth": 12,
                    "observable": {"kind": "indicator", "atom": 0}},
    "benchmark": {"map": benchmark_map(), "potential": ZERO, "gamma": 0.9, "depth": 10},
    "benchmark_tent": {"map": benchmark_map(), "potential": TENT, "gamma": 0.9, "depth": 10,
                       "eps_list": [0.01, 0.005, 0.0025]},
    "benchmark_wide_potential": {"map": benchmark_map(),
                                 "potential": {"kind": "constant_per_atom", "params": [0.0, "log(3)", 0.0]},
                                 "gamma": 0.9, "depth": 8},
}


def main():
    OUT.mkdir(exist_ok=True)
    for name, cfg in CONFIGS.items():
        (OUT / f"{name}.json").write_text(json.dumps(cfg, indent=2) + "\n")
        print(f"wrote configs/{name}.json")


if __name__ == "__main__":
    main()
