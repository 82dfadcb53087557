"""Cylinder combinatorics, frequent-bad-word counting, Pliss times and hyperbolic times.

Words are tuples of 0-based atom indices.  Admissible words of a fixed depth
are enumerated in lexicographic order, so the base-d integer code of a word
is strictly increasing along the enumeration and doubles as a lookup key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ContractError

DEPTH_CAP = 14


@dataclass(frozen=True, eq=False)
class Cylinders:
    """All admissible words of one depth with their intervals.

    ``prefix[r]`` / ``suffix[r]`` index the words ``w[:-1]`` / ``w[1:]`` among
    the cylinders of depth n-1 (both 0 at depth 1).
    """

    depth: int
    n_atoms: int
    words: np.ndarray
    codes: np.ndarray
    left: np.ndarray
    right: np.ndarray
    prefix: np.ndarray
    suffix: np.ndarray
    fmap: object = field(default=None, repr=False)

    def __len__(self):
        return len(self.codes)

    @property
    def width(self):
        return self.right - self.left

    @property
    def mid(self):
        return 0.5 * (self.left + self.right)

    @property
    def head(self):
        return self.words[:, 0]

    def index_of_codes(self, codes):
        """Row indices of the given word codes; -1 where the word is not admissible."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, len(self.codes) - 1)
        return np.where(self.codes[pos] == codes, pos, -1)

    def index(self, word):
        if len(word) != self.depth:
            raise ContractError(f"word of length {len(word)} at depth {self.depth}")
        return int(self.index_of_codes([word_code(word, self.n_atoms)])[0])

    def locate(self, x):
        """Row of the cylinder containing each point x."""
        x = np.asarray(x, dtype=float)
        return np.clip(np.searchsorted(self.left, x, side="right") - 1, 0, len(self) - 1)

    def coarser(self, depth):
        return _cylinders(self.fmap, depth)

    def word(self, r):
        return tuple(int(s) for s in self.words[r])


def word_code(word, d):
    code = 0
    for s in word:
        code = code * d + int(s)
    return code


def check_depth(depth, cap=DEPTH_CAP):
    if depth < 1:
        raise ContractError("depth must be >= 1")
    if depth > cap:
        raise ContractError(f"depth {depth} exceeds the enumeration cap {cap}")


def cylinders(fmap, depth, cap=DEPTH_CAP) -> Cylinders:
    check_depth(depth, cap)
    return _cylinders(fmap, depth)


@lru_cache(maxsize=64)
def _cylinders(fmap, depth):
    d = fmap.n_atoms
    if depth == 1:
        idx = np.arange(d)
        return Cylinders(1, d, idx[:, None].astype(np.int8), idx.astype(np.int64),
                         fmap.lefts.copy(), fmap.rights.copy(),
                         np.zeros(d, dtype=np.int64), np.zeros(d, dtype=np.int64), fmap)
    prev = _cylinders(fmap, depth - 1)
    T = fmap.transition
    blocks = []
    for a in range(d):
        rows = np.flatnonzero(T[a, prev.head])
        if rows.size:
            blocks.append((a, rows))
    words, codes, left, right, suffix = [], [], [], [], []
    scale = np.int64(d) ** (depth - 1)
    for a, rows in blocks:
        w = np.empty((rows.size, depth), dtype=np.int8)
        w[:, 0] = a
        w[:, 1:] = prev.words[rows]
        words.append(w)
        codes.append(a * scale + prev.codes[rows])
        left.append(fmap.inverse_branch(a, prev.left[rows]))
        right.append(fmap.inverse_branch(a, prev.right[rows]))
        suffix.append(rows)
    words = np.concatenate(words)
    codes = np.concatenate(codes)
    prefix = prev.index_of_codes(codes // d)
    return Cylinders(depth, d, words, codes, np.concatenate(left), np.concatenate(right),
                     prefix, np.concatenate(suffix), fmap)


def is_admissible(fmap, word):
    if len(word) == 0 or any(not 0 <= s < fmap.n_atoms for s in word):
        return False
    return all(fmap.transition[a, b] for a, b in zip(word, word[1:]))


def itinerary(fmap, x, n):
    """Atoms visited by x, f(x), ..., f^{n-1}(x)."""
    if n < 1:
        raise ContractError("n must be >= 1")
    out = []
    x = float(x)
    for _ in range(n):
        out.append(int(fmap.atom_of(x)))
        x = float(fmap(x))
    return tuple(out)


def orbit(fmap, x, n):
    xs = np.empty(n)
    x = float(x)
    for i in range(n):
        xs[i] = x
        x = float(fmap(x))
    return xs


def cylinder_interval(fmap, word):
    """[lo, hi) of the points whose itinerary starts with ``word``; None if inadmissible."""
    word = tuple(int(s) for s in word)
    if not is_admissible(fmap, word):
        return None
    lo, hi = fmap.breaks[word[-1]], fmap.breaks[word[-1] + 1]
    for a in reversed(word[:-1]):
        lo = float(fmap.inverse_branch(a, lo))
        hi = float(fmap.inverse_branch(a, hi))
    return lo, hi


# ---------------------------------------------------------------------------
# counting words with many bad symbols

def count_frequent_words(p, q, gamma, n):
    """Exact number of length-n words over p good and q bad symbols with more than γn bad ones.

    Returns (count, rate) with rate = log(count)/n, or -inf when count is 0.
    """
    if not 0.0 < gamma < 1.0:
        raise ContractError("gamma must lie in (0, 1)")
    if n < 1 or p < 0 or q < 0 or p + q < 2:
        raise ContractError("need n >= 1 and p + q >= 2")
    r_min = math.floor(exact_fraction(gamma) * n) + 1
    count = sum(math.comb(n, r) * p ** (n - r) * q ** r for r in range(r_min, n + 1))
    rate = math.log(count) / n if count > 0 else -math.inf
    return count, rate


def exact_fraction(x):
    """The rational a float was written as (0.7 -> 7/10), not its binary expansion."""
    return Fraction(repr(float(x))) if isinstance(x, float) else Fraction(x)


def stirling_kk(gamma):
    """Largest integer kk with γ ≥ kk/(kk+1); 0 when γ < 1/2."""
    g = exact_fraction(gamma)
    return int(g / (1 - g))


def stirling_rate_bound(p, q, kk):
    """Closed-form upper bound on the growth rate of frequent-bad-word counts for γ ≥ kk/(kk+1)."""
    if kk < 1:
        raise ContractError("kk must be >= 1")
    if q < 1:
        return -math.inf
    return (math.log1p(1.0 / kk) + math.log1p(kk) / kk + math.log(p) / (kk + 1) + math.log(q))


# ---------------------------------------------------------------------------
# Pliss times and hyperbolic times

@dataclass(frozen=True)
class PlissResult:
    indices: tuple
    theta: float
    n: int

    @property
    def density_ok(self):
        return len(self.indices) > self.theta * self.n


def record_times(b, c1):
    """1-based times m with sum_{j=k+1}^{m} b_j >= c1 (m - k) for every 0 <= k < m."""
    b = np.asarray(b, dtype=float)
    S = np.concatenate([[0.0], np.cumsum(b - c1)])
    run_max = np.maximum.accumulate(S)[:-1]
    return tuple(int(m) for m in np.flatnonzero(S[1:] >= run_max) + 1)


def pliss_times(b, A, c1, c2):
    b = np.asarray(b, dtype=float)
    n = b.size
    if n == 0:
        raise ContractError("empty sequence")
    if not A >= c2 > c1 > 0:
        raise ContractError(f"need A >= c2 > c1 > 0, got A={A}, c1={c1}, c2={c2}")
    if np.any(b > A):
        raise ContractError(f"b_i <= A fails: max b = {b.max()} > {A}")
    if b.sum() < c2 * n - 1e-12 * max(1.0, abs(c2 * n)):
        raise ContractError(f"sum b_i >= c2 n fails: {b.sum()} < {c2 * n}")
    theta = (c2 - c1) / (A - c1)
    return PlissResult(record_times(b, c1), theta, n)


def hyperbolic_times(fmap, x, n, c):
    """All m <= n such that the last j derivative factors of the length-m orbit multiply to >= e^{2cj}, every j <= m."""
    if c <= 0:
        raise ContractError("c must be > 0")
    logs = np.log(np.abs(fmap.derivative(orbit(fmap, x, n))))
    return list(record_times(logs, 2.0 * c))


def hyperbolic_mask(fmap, cyl: Cylinders, c):
    """Certified hyperbolic words: the test is run on per-atom derivative infima."""
    n = cyl.depth
    log_inf = np.log(fmap.derivative_bounds[:, 0])
    L = log_inf[cyl.words.astype(np.intp)]
    tails = np.cumsum(L[:, ::-1], axis=1)
    need = 2.0 * c * np.arange(1, n + 1)
    return np.all(tails >= need - 1e-13, axis=1)


def hyperbolic_cylinders(fmap, n, c, cap=DEPTH_CAP):
    if c <= 0:
        raise ContractError("c must be > 0")
    cyl = cylinders(fmap, n, cap)
    mask = hyperbolic_mask(fmap, cyl, c)
    return {cyl.word(r) for r in np.flatnonzero(mask)}


def contraction_and_distortion_constants(fmap, potential, c):
    """(C, A, K): backward contraction, Birkhoff-sum distortion and Jacobian distortion constants."""
    if c <= 0:
        raise ContractError("c must be > 0")
    alpha = potential.alpha
    C = 1.0
    semi = potential.seminorm(fmap.eps)
    A = semi * C ** alpha / (1.0 - math.exp(-c * alpha))
    K = math.exp(A * fmap.eps ** alpha)
    return C, A, K
