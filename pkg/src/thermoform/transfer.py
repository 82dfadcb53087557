"""Transfer operator: pointwise application, cylinder discretization and leading spectral data.

The depth-n model replaces the operator by a sparse matrix over admissible
n-cylinders: ``M[w, w'] = exp(phi(mid w'))`` whenever ``w' = (a,) + w[:-1]``
and atom a maps over atom ``w[0]``.  Its right eigenvector is the density h,
its left eigenvector the conformal measure nu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ConvergenceError
from .symbolic import Cylinders, contraction_and_distortion_constants, cylinders, hyperbolic_mask

RTOL = 1e-12
MAX_ITER = 20_000


# ---------------------------------------------------------------------------
# pointwise operator

def apply_transfer(fmap, potential, g, x, n=1):
    """(L^n g)(x) = sum over f^n(y) = x of exp(S_n phi(y)) g(y); vectorized over x."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    ys = x_arr.copy()
    owner = np.arange(ys.size)
    logw = np.zeros(ys.size)
    for _ in range(n):
        tab = fmap.preimage_table(ys)
        ok = ~np.isnan(tab)
        owner = np.broadcast_to(owner[:, None], tab.shape)[ok]
        logw = np.broadcast_to(logw[:, None], tab.shape)[ok]
        ys = tab[ok]
        logw = logw + potential(ys)
    terms = np.exp(logw) * np.asarray(g(ys), dtype=float)
    out = np.bincount(owner, weights=terms, minlength=x_arr.size)
    return out if np.ndim(x) else float(out[0])


# ---------------------------------------------------------------------------
# cylinder model

def coarsen(cyl: Cylinders, values, depth):
    """Sum cylinder weights over the words sharing their first ``depth`` symbols."""
    if depth == cyl.depth:
        return np.asarray(values, dtype=float)
    if not 1 <= depth < cyl.depth:
        raise ContractError("coarsening depth must lie in [1, depth]")
    shift = np.int64(cyl.n_atoms) ** (cyl.depth - depth)
    target = cyl.coarser(depth)
    idx = target.index_of_codes(cyl.codes // shift)
    return np.bincount(idx, weights=values, minlength=len(target))


def model_cylinders(fmap, depth, cap=None):
    return cylinders(fmap, depth) if cap is None else cylinders(fmap, depth, cap)


def collocated_potential(potential, cyl):
    return np.asarray(potential(cyl.mid), dtype=float)


def transfer_matrix(fmap, potential, depth, cap=None):
    """Sparse CSR matrix of the depth-n cylinder model of the transfer operator."""
    cyl = model_cylinders(fmap, depth, cap)
    d = fmap.n_atoms
    weights = np.exp(collocated_potential(potential, cyl))
    scale = np.int64(d) ** (depth - 1)
    base = cyl.codes // d
    rows, cols = [], []
    for a in range(d):
        col = cyl.index_of_codes(a * scale + base)
        ok = (col >= 0) & fmap.transition[a, cyl.head]
        rows.append(np.flatnonzero(ok))
        cols.append(col[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = len(cyl)
    return sp.csr_matrix((weights[cols], (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class SpectralData:
    lam: float
    h: np.ndarray
    nu: np.ndarray
    gap: float
    bracket: tuple
    iterations: int
    depth: int | None = None
    fmap: object = field(default=None, repr=False)
    potential: object = field(default=None, repr=False)

    @property
    def pressure(self):
        return math.log(self.lam)

    P = pressure

    @property
    def cylinders(self):
        if self.fmap is None:
            raise ContractError("spectral data carries no map")
        return model_cylinders(self.fmap, self.depth, max(self.depth, 14))

    @property
    def bracket_width(self):
        return (self.bracket[1] - self.bracket[0]) / self.lam

    def nu_integral(self, g):
        """Midpoint quadrature of g against nu on the model cylinders."""
        return float(self.nu @ np.asarray(g(self.cylinders.mid), dtype=float))


def _power(op, n, tol, max_iter, what):
    x = np.ones(n)
    lo = hi = float("nan")
    for it in range(1, max_iter + 1):
        y = op(x)
        if np.any(y <= 0.0):
            # not yet positive; keep iterating from the nonnegative vector
            s = y.sum()
            if s <= 0:
                raise ConvergenceError(f"{what}: iterate vanished", (lo, hi), it)
            x = y / s + 1e-300
            continue
        ratio = y / x
        lo, hi = float(ratio.min()), float(ratio.max())
        x = y / y.max()
        if hi - lo <= tol * hi:
            return 0.5 * (lo + hi), x, (lo, hi), it
    raise ConvergenceError(f"{what}: Collatz-Wielandt bracket did not close", (lo, hi), max_iter)


def _subdominant(M, lam, h, nu, iters=400, window=50, seed=0):
    rng = np.random.default_rng(seed)
    n = M.shape[0]
    if n == 1:
        return 0.0

    def deflate(v):
        return v - h * (nu @ v)

    x = deflate(rng.standard_normal(n))
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return 0.0
    x /= nx
    logs = []
    for _ in range(iters):
        y = deflate(M @ x)
        ny = np.linalg.norm(y)
        if ny <= 1e-13 * lam:
            return 0.0
        logs.append(math.log(ny))
        x = y / ny
    return min(1.0, math.exp(np.mean(logs[-window:])) / lam)


def leading_spectrum(M, tol=RTOL, max_iter=MAX_ITER, gap=True) -> SpectralData:
    """Leading eigenvalue with two-sided Collatz-Wielandt brackets, h, nu and |lambda_2|/lambda."""
    M = sp.csr_matrix(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or (M.data < 0).any():
        raise ContractError("need a square nonnegative matrix")
    MT = M.T.tocsr()
    lam, h, br, it = _power(lambda v: M @ v, n, tol, max_iter, "right eigenvector")
    lam_l, nu, _, it_l = _power(lambda v: MT @ v, n, tol, max_iter, "left eigenvector")
    nu = nu / nu.sum()
    h = h / (nu @ h)
    g = _subdominant(M, lam, h, nu) if gap else float("nan")
    return SpectralData(lam, h, nu, g, br, max(it, it_l))


def spectrum(fmap, potential, depth, tol=RTOL, gap=True, cap=None) -> SpectralData:
    M = transfer_matrix(fmap, potential, depth, cap)
    sd = leading_spectrum(M, tol=tol, gap=gap)
    return SpectralData(sd.lam, sd.h, sd.nu, sd.gap, sd.bracket, sd.iterations, depth, fmap, potential)


@dataclass
class DensityTrace:
    lam: float
    h: np.ndarray
    nu: np.ndarray
    diffs: list
    lam_trace: list
    iterates: list


def power_iterate_density(fmap, potential, depth, tol=1e-10, max_iter=5000, keep_iterates=False):
    """Iterate g -> M g / lambda_k from g = 1, lambda_k = <nu_k, M g>/<nu_k, g>, until sup|g_{k+1} - g_k| < tol."""
    M = transfer_matrix(fmap, potential, depth)
    MT = M.T.tocsr()
    n = M.shape[0]
    g = np.ones(n)
    nu = np.full(n, 1.0 / n)
    diffs, lams, iterates = [], [], []
    for _ in range(max_iter):
        Mg = M @ g
        lam = float(nu @ Mg) / float(nu @ g)
        g_new = Mg / lam
        nu = MT @ nu
        nu /= nu.sum()
        diff = float(np.max(np.abs(g_new - g)))
        diffs.append(diff)
        lams.append(lam)
        g = g_new
        if keep_iterates:
            iterates.append(g.copy())
        if diff < tol:
            break
    else:
        raise ConvergenceError("density iteration did not settle; check the Lasota-Yorke constants",
                               (min(lams[-10:]), max(lams[-10:])), max_iter)
    # one more left sweep pass to polish nu at the final lambda
    for _ in range(200):
        nxt = MT @ nu
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - nu)) < 1e-15:
            nu = nxt
            break
        nu = nxt
    h = g / float(nu @ g)
    return DensityTrace(lams[-1], h, nu, diffs, lams, iterates)


def jacobian_check(nu, fmap, potential, lam, depth):
    """Worst relative defect of nu(f(w)) = sum over w of lam*exp(-phi) dnu, over words of length <= depth."""
    cyl = model_cylinders(fmap, depth)
    rhs = lam * np.exp(-collocated_potential(potential, cyl)) * nu
    if depth == 1:
        lhs = fmap.transition.astype(float) @ nu
        return float(np.max(np.abs(lhs - rhs) / lhs))
    nu_prev = coarsen(cyl, nu, depth - 1)
    lhs = nu_prev[cyl.suffix]
    worst = 0.0
    for m in range(depth, 0, -1):
        L = coarsen(cyl, lhs, m)
        R = coarsen(cyl, rhs, m)
        worst = max(worst, float(np.max(np.abs(L - R) / L)))
    return worst


def birkhoff_sup(fmap, potential, cyl):
    """Certified upper bound on S_n phi over each n-cylinder: sum of sups over f^j(cylinder)."""
    n = cyl.depth
    idx = np.arange(len(cyl))
    total = np.zeros(len(cyl))
    cur = cyl
    for j in range(n):
        sup = potential.bounds(cur.left, cur.right)[1]
        total += sup[idx]
        if j < n - 1:
            idx = cur.suffix[idx]
            cur = cur.coarser(n - j - 1)
    return total


@dataclass
class PartitionSums:
    Z: np.ndarray
    normalized: np.ndarray
    cesaro: np.ndarray
    K1: float
    grid: np.ndarray
    g_n: np.ndarray
    upper_ok: bool
    lower_ok: bool


def weak_gibbs_constant(fmap, potential, c, nu1=None):
    """Distortion constant K times the image-mass factor max(sup nu(f R_i), 1/inf nu(f R_i))."""
    _, _, K = contraction_and_distortion_constants(fmap, potential, c)
    if nu1 is None:
        return K
    img = fmap.transition.astype(float) @ nu1
    return K * max(img.max(), 1.0 / img.min())


def partition_sums(fmap, potential, n, c, lam=None, grid=100, spectral_depth=8):
    """Z_j over certified hyperbolic j-cylinders, j = 1..n, and g_n on a uniform grid."""
    sd = spectrum(fmap, potential, spectral_depth, gap=False)
    lam = sd.lam if lam is None else lam
    _, A, _ = contraction_and_distortion_constants(fmap, potential, c)
    nu1 = coarsen(sd.cylinders, sd.nu, 1)
    # sup-versus-point slack costs one more distortion factor
    K1 = weak_gibbs_constant(fmap, potential, c, nu1) * math.exp(A * fmap.eps ** potential.alpha)
    Z = np.empty(n)
    for j in range(1, n + 1):
        cyl = cylinders(fmap, j)
        mask = hyperbolic_mask(fmap, cyl, c)
        Z[j - 1] = np.exp(birkhoff_sup(fmap, potential, cyl)[mask]).sum() if mask.any() else 0.0
    normalized = Z / lam ** np.arange(1, n + 1)
    cesaro = np.cumsum(normalized) / np.arange(1, n + 1)
    cyl = cylinders(fmap, n)
    mask = hyperbolic_mask(fmap, cyl, c)
    wts = np.exp(birkhoff_sup(fmap, potential, cyl)) * mask
    xs = (np.arange(grid) + 0.5) / grid
    per_atom = np.bincount(cyl.words[:, -1].astype(np.intp), weights=wts, minlength=fmap.n_atoms)
    g_n = fmap.transition.astype(float).T @ per_atom
    g_n = g_n[fmap.atom_of(xs)]
    return PartitionSums(Z, normalized, cesaro, K1, xs, g_n,
                         bool(normalized[-1] <= K1), bool(cesaro[-1] >= 1.0 / K1))


def finite_rank_apply(fmap, potential, nu, n, g, x, nu_depth=None):
    """T_n g(x) = L^n(pi_n g)(x): nu-average g over n-cylinders, then apply L^n exactly."""
    D = n if nu_depth is None else nu_depth
    if D < n:
        raise ContractError("nu must live at depth >= n")
    fine = model_cylinders(fmap, D)
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise ContractError("nu must charge every cylinder")
    gi = nu * np.asarray(g(fine.mid), dtype=float)
    coarse = model_cylinders(fmap, n)
    avg = coarsen(fine, gi, n) / coarsen(fine, nu, n)

    def proj(y):
        return avg[coarse.locate(y)]

    return apply_transfer(fmap, potential, proj, x, n)
