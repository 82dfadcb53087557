"""Hölder potentials with certified interval bounds.

Every potential supports vectorized evaluation and an enclosure
``bounds(lo, hi)`` of its range over ``[lo, hi]``; the enclosures are exact
for the closed forms offered here, which is what makes the cylinder-level
sums over ``sup φ`` sound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidPotentialError

KINDS = ("constant_per_atom", "affine", "tent", "cosine")


@dataclass(frozen=True)
class Potential:
    """A potential on [0, 1).

    kind / params:
      constant_per_atom  params = values, one per atom (``breaks`` required)
      affine             a + b*x
      tent               a + b*min(x, 1 - x)      (continuous on the circle)
      cosine             a + b*cos(2*pi*x)
    """

    kind: str
    params: tuple
    alpha: float = 1.0
    breaks: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidPotentialError(f"unknown potential kind {self.kind!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidPotentialError(f"Hölder exponent must lie in (0, 1], got {self.alpha}")
        params = tuple(float(v) for v in self.params)
        if not all(math.isfinite(v) for v in params):
            raise InvalidPotentialError("potential parameters must be finite")
        object.__setattr__(self, "params", params)
        if self.kind == "constant_per_atom":
            if self.breaks is None or len(self.breaks) != len(params) + 1:
                raise InvalidPotentialError("constant_per_atom needs one value per atom and the atom breaks")
            object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        elif len(params) != 2:
            raise InvalidPotentialError(f"{self.kind} takes two parameters (a, b)")

    # construction helpers

    @classmethod
    def zero(cls):
        return cls("affine", (0.0, 0.0))

    @classmethod
    def per_atom(cls, values, breaks, alpha=1.0):
        return cls("constant_per_atom", tuple(values), alpha, tuple(breaks))

    def shifted(self, t):
        """The potential φ + t."""
        if self.kind == "constant_per_atom":
            return replace(self, params=tuple(v + t for v in self.params))
        a, b = self.params
        return replace(self, params=(a + t, b))

    def normalized(self):
        """Shift so that inf φ = 0."""
        return self.shifted(-self.min)

    # evaluation

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant_per_atom":
            idx = np.searchsorted(self.breaks, x, side="right") - 1
            idx = np.clip(idx, 0, len(self.params) - 1)
            return np.asarray(self.params)[idx]
        a, b = self.params
        if self.kind == "affine":
            return a + b * x
        if self.kind == "tent":
            return a + b * np.minimum(x, 1.0 - x)
        return a + b * np.cos(2.0 * np.pi * x)

    def bounds(self, lo, hi):
        """Exact (inf, sup) of φ over [lo, hi], elementwise."""
        lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        if self.kind == "constant_per_atom":
            vals = np.asarray(self.params)
            i0 = np.clip(np.searchsorted(self.breaks, lo, side="right") - 1, 0, len(vals) - 1)
            # hi is treated as an open end; it belongs to the atom of hi - 0
            i1 = np.clip(np.searchsorted(self.breaks, hi, side="left") - 1, 0, len(vals) - 1)
            i1 = np.maximum(i1, i0)
            same = i0 == i1
            if np.all(same):
                return vals[i0], vals[i0]
            inf = np.empty(np.broadcast(lo, hi).shape)
            sup = np.empty_like(inf)
            for pos in np.ndindex(inf.shape):
                seg = vals[i0[pos]:i1[pos] + 1]
                inf[pos], sup[pos] = seg.min(), seg.max()
            return inf, sup
        a, b = self.params
        if self.kind == "affine":
            t_lo, t_hi = lo, hi
        elif self.kind == "tent":
            t_ends = np.minimum(np.minimum(lo, 1 - lo), np.minimum(hi, 1 - hi))
            t_peak = np.where((lo <= 0.5) & (hi >= 0.5), 0.5,
                              np.maximum(np.minimum(lo, 1 - lo), np.minimum(hi, 1 - hi)))
            t_lo, t_hi = t_ends, t_peak
        else:
            c_lo_end = np.cos(2 * np.pi * lo)
            c_hi_end = np.cos(2 * np.pi * hi)
            t_hi = np.where((lo <= 0.0) | (hi >= 1.0), 1.0, np.maximum(c_lo_end, c_hi_end))
            t_lo = np.where((lo <= 0.5) & (hi >= 0.5), -1.0, np.minimum(c_lo_end, c_hi_end))
        v1, v2 = a + b * t_lo, a + b * t_hi
        return np.minimum(v1, v2), np.maximum(v1, v2)

    # norms

    @property
    def lipschitz(self):
        if self.kind == "constant_per_atom":
            return 0.0
        b = abs(self.params[1])
        return 2.0 * np.pi * b if self.kind == "cosine" else b

    def seminorm(self, diameter=1.0):
        """Bound on sup |φ(x) - φ(y)| / |x - y|^α for x, y in one atom of the given diameter."""
        if self.alpha == 1.0:
            return self.lipschitz
        return self.lipschitz * diameter ** (1.0 - self.alpha)

    @property
    def min(self):
        return float(self.bounds(0.0, 1.0)[0]) if self.kind != "constant_per_atom" else min(self.params)

    @property
    def max(self):
        return float(self.bounds(0.0, 1.0)[1]) if self.kind != "constant_per_atom" else max(self.params)

    @property
    def oscillation(self):
        return self.max - self.min

    def to_dict(self):
        d = {"kind": self.kind, "params": list(self.params), "alpha": self.alpha}
        if self.breaks is not None:
            d["breaks"] = list(self.breaks)
        return d
