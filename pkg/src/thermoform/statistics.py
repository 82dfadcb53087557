"""Correlations, Green-Kubo variance, CLT checks and large deviations for the equilibrium state.

Quadrature estimators run on the cylinder model; orbit estimators use true
orbits generated from mu: a symbolic path is drawn from the model's memory-(n-1)
chain and the points are obtained by pulling a tail point back through the
inverse branches, which keeps every orbit exact up to rounding.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy import stats as sps

from .equilibrium import EquilibriumState, constrained_scan
from .errors import ContractError, HorizonError
from .transfer import transfer_matrix

QUAD_FLOOR = 1e-13


def _values(u, xs):
    return np.asarray(u(xs), dtype=float) if callable(u) else np.broadcast_to(float(u), np.shape(xs))


def _normalized_matrix(state: EquilibriumState):
    return transfer_matrix(state.fmap, state.potential, state.depth) / state.lam


# ---------------------------------------------------------------------------
# correlations

@dataclass
class CorrelationSeries:
    values: np.ndarray
    stderr: np.ndarray
    estimator: str
    mean_u: float
    mean_v: float

    @property
    def noise_floor(self):
        if self.estimator == "quadrature":
            return np.full(self.values.shape, QUAD_FLOOR)
        return 3.0 * self.stderr


def correlation(state: EquilibriumState, u, v, N, estimator="quadrature", **orbit_kw):
    """C(n) = int (u o f^n) v dmu - int u dmu int v dmu for n = 0..N."""
    if estimator == "quadrature":
        if N > state.depth:
            raise HorizonError(f"N = {N} exceeds the depth-{state.depth} horizon; use the orbit estimator")
        sd = state.spectral
        cyl = state.cylinders
        mid = cyl.mid
        uw = _values(u, mid)
        vw = _values(v, mid)
        Mt = _normalized_matrix(state)
        mu_u, mu_v = float(state.mu @ uw), float(state.mu @ vw)
        w = vw * sd.h
        out = np.empty(N + 1)
        for n in range(N + 1):
            out[n] = float((sd.nu * uw) @ w) - mu_u * mu_v
            w = Mt @ w
        return CorrelationSeries(out, np.zeros(N + 1), "quadrature", mu_u, mu_v)
    if estimator == "orbit":
        return orbit_correlation(state, u, v, N, **orbit_kw)
    raise ContractError(f"unknown estimator {estimator!r}")


@dataclass
class DecayFit:
    tau: float
    K: float
    resolved: bool
    used: int

    @property
    def below_resolution(self):
        return not self.resolved


def decay_fit(series, floor=None, min_points=5):
    """Least-squares fit of log|C(n)| = log K + n log tau over entries above the noise floor."""
    if isinstance(series, CorrelationSeries):
        vals = series.values
        floor = series.noise_floor if floor is None else floor
    else:
        vals = np.asarray(series, dtype=float)
        floor = QUAD_FLOOR if floor is None else floor
    floor = np.broadcast_to(floor, vals.shape)
    n = np.arange(vals.size)
    keep = np.abs(vals) > floor
    if keep.sum() < min_points:
        return DecayFit(float("nan"), float("nan"), False, int(keep.sum()))
    slope, icept = np.polyfit(n[keep], np.log(np.abs(vals[keep])), 1)
    return DecayFit(float(math.exp(slope)), float(math.exp(icept)), True, int(keep.sum()))


@dataclass
class GreenKubo:
    sigma2: float
    tail: float
    clipped: bool
    degenerate: bool
    series: CorrelationSeries = field(repr=False, default=None)


def green_kubo_variance(state: EquilibriumState, u, cutoff, degenerate_tol=1e-10):
    """sigma^2 = C(0) + 2 sum_{j=1}^{cutoff} C(j) with a geometric tail bound."""
    if cutoff < 1:
        raise ContractError("cutoff must be >= 1")
    series = correlation(state, u, u, cutoff)
    C = series.values
    raw = C[0] + 2.0 * C[1:].sum()
    fit = decay_fit(series)
    tail = 0.0
    if fit.resolved and fit.tau < 1:
        tail = 2.0 * fit.K * fit.tau ** (cutoff + 1) / (1.0 - fit.tau)
    scale = max(abs(C[0]), 1e-300)
    degenerate = raw <= max(tail, degenerate_tol * scale) or C[0] <= QUAD_FLOOR
    clipped = raw < 0
    return GreenKubo(max(raw, 0.0), tail, clipped, bool(degenerate), series)


def projection_norm_decay(state: EquilibriumState, u, N):
    """||E(u | f^-n Borel)||_2 for n = 0..N; u is expected to be centered."""
    if N > state.depth:
        raise HorizonError(f"N = {N} exceeds the depth-{state.depth} horizon")
    sd = state.spectral
    uw = _values(u, state.cylinders.mid)
    Mt = _normalized_matrix(state)
    w = uw * sd.h
    out = np.empty(N + 1)
    for n in range(N + 1):
        out[n] = math.sqrt(max(float(state.mu @ (w / sd.h) ** 2), 0.0))
        w = Mt @ w
    return out


# ---------------------------------------------------------------------------
# sampling orbits from mu

class OrbitSampler:
    """Draws exact orbit segments distributed according to the model's mu."""

    def __init__(self, state: EquilibriumState):
        self.state = state
        cyl = state.cylinders
        self.cyl = cyl
        self.fmap = state.fmap
        mu = state.mu
        self.cdf = np.cumsum(mu)
        self.cdf /= self.cdf[-1]
        if cyl.depth == 1:
            self.group_start = np.zeros(1, dtype=np.int64)
            self.group_mass = np.array([1.0])
            self.suffix = np.zeros(len(cyl), dtype=np.int64)
        else:
            n_short = len(cyl.coarser(cyl.depth - 1))
            # rows sharing a prefix are contiguous in lexicographic order
            self.group_start = np.searchsorted(cyl.prefix, np.arange(n_short))
            self.group_mass = np.bincount(cyl.prefix, weights=mu, minlength=n_short)
            self.suffix = cyl.suffix
        self.before = np.concatenate([[0.0], np.cumsum(mu)])
        self.heads = cyl.head.astype(np.int8)

    def initial_rows(self, rng, size):
        return np.minimum(np.searchsorted(self.cdf, rng.random(size), side="right"), len(self.cdf) - 1)

    def step(self, rows, rng):
        g = self.suffix[rows]
        start = self.group_start[g]
        target = self.before[start] + rng.random(rows.size) * self.group_mass[g]
        nxt = np.searchsorted(self.before, target, side="right") - 1
        # stay inside the group when rounding lands on its edge
        if self.cyl.depth > 1:
            end = np.append(self.group_start[1:], len(self.cyl))[g] - 1
            nxt = np.clip(nxt, start, end)
        return np.clip(nxt, 0, len(self.cyl) - 1)

    def symbols(self, rng, chains, length):
        """Atom sequences (chains, length) and the final window row."""
        rows = self.initial_rows(rng, chains)
        out = np.empty((chains, length), dtype=np.int8)
        for j in range(length):
            out[:, j] = self.heads[rows]
            rows = self.step(rows, rng)
        return out, rows

    def tail_points(self, rng, rows):
        lo, hi = self.cyl.left[rows], self.cyl.right[rows]
        return lo + rng.random(rows.size) * (hi - lo)

    def pull_back(self, syms_col, x):
        out = np.empty_like(x)
        for a in range(self.fmap.n_atoms):
            m = syms_col == a
            if np.any(m):
                out[m] = self.fmap.inverse_branch(a, x[m])
        return out

    def orbits(self, rng, chains, length):
        syms, rows = self.symbols(rng, chains, length)
        x = self.tail_points(rng, rows)
        pts = np.empty((chains, length))
        for j in range(length - 1, -1, -1):
            x = self.pull_back(syms[:, j], x)
            pts[:, j] = x
        return pts

    def birkhoff_sums(self, rng, chains, length, u):
        syms, rows = self.symbols(rng, chains, length)
        x = self.tail_points(rng, rows)
        total = np.zeros(chains)
        for j in range(length - 1, -1, -1):
            x = self.pull_back(syms[:, j], x)
            total += _values(u, x)
        return total


def _chunk_seeds(seed, n_chunks):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chunks)]


def _run_chunks(fn, seed, n_chunks, threads):
    rngs = _chunk_seeds(seed, n_chunks)
    if threads is None or threads <= 1:
        return [fn(i, r) for i, r in enumerate(rngs)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_chunks), rngs))


def sample_mu(state, size, seed=0, threads=1, chunk=4096):
    """i.i.d. points from mu: a depth-n cylinder by inverse CDF, then a point inside it by pullback."""
    sampler = OrbitSampler(state)
    n_chunks = max(1, math.ceil(size / chunk))
    sizes = [min(chunk, size - i * chunk) for i in range(n_chunks)]

    def work(i, rng):
        return sampler.orbits(rng, sizes[i], 1)[:, 0]

    return np.concatenate(_run_chunks(work, seed, n_chunks, threads))


def orbit_correlation(state, u, v, N, length=1024, chains=1024, seed=0, threads=1, chunk=128):
    """C(n) from time averages along ``chains`` exact orbits of ``length + N`` points each."""
    sampler = OrbitSampler(state)
    n_chunks = max(1, math.ceil(chains / chunk))
    sizes = [min(chunk, chains - i * chunk) for i in range(n_chunks)]

    def work(i, rng):
        pts = sampler.orbits(rng, sizes[i], length + N)
        return _values(u, pts), _values(v, pts)

    parts = _run_chunks(work, seed, n_chunks, threads)
    uu = np.concatenate([p[0] for p in parts])
    vv = np.concatenate([p[1] for p in parts])
    mu_u, mu_v = float(uu[:, :length].mean()), float(vv[:, :length].mean())
    per_chain = np.stack([np.mean((uu[:, n:n + length] - mu_u) * (vv[:, :length] - mu_v), axis=1)
                          for n in range(N + 1)], axis=1)
    vals = per_chain.mean(axis=0)
    se = per_chain.std(axis=0, ddof=1) / math.sqrt(per_chain.shape[0])
    return CorrelationSeries(vals, se, "orbit", mu_u, mu_v)


@dataclass
class CLTResult:
    ks: float
    sigma_hat: float
    sigma2: float
    degenerate: bool
    normalized_sums: np.ndarray = field(repr=False, default=None)


def clt_empirical_test(state, u, n, samples, seed=0, sigma2=None, cutoff=None, threads=1, chunk=2000):
    """KS distance between n^{-1/2} (S_n u - n int u dmu) over μ-samples and N(0, sigma^2)."""
    if sigma2 is None:
        gk = green_kubo_variance(state, u, cutoff or state.depth)
        sigma2, degenerate = gk.sigma2, gk.degenerate
    else:
        degenerate = sigma2 <= 0
    if degenerate:
        return CLTResult(float("nan"), 0.0, sigma2, True)
    mean = state.integrate(u) if callable(u) else float(u)
    sampler = OrbitSampler(state)
    n_chunks = max(1, math.ceil(samples / chunk))
    sizes = [min(chunk, samples - i * chunk) for i in range(n_chunks)]

    def work(i, rng):
        return sampler.birkhoff_sums(rng, sizes[i], n, u)

    sums = np.concatenate(_run_chunks(work, seed, n_chunks, threads))
    z = (sums - n * mean) / math.sqrt(n)
    ks = float(sps.kstest(z, "norm", args=(0.0, math.sqrt(sigma2))).statistic)
    return CLTResult(ks, float(z.std(ddof=1)), sigma2, False, z)


# ---------------------------------------------------------------------------
# large deviations

def _lattice(values, max_den=1000, tol=1e-12):
    """Express the values as integer multiples of a common step, or None."""
    fr = [Fraction(float(v)).limit_denominator(max_den) for v in values]
    if any(abs(float(f) - float(v)) > tol for f, v in zip(fr, values)):
        return None
    den = math.lcm(*[f.denominator for f in fr])
    ints = [int(f * den) for f in fr]
    g = math.gcd(*ints) or 1
    return np.array([i // g for i in ints], dtype=np.int64), g / den


@dataclass
class DeviationCurve:
    n: np.ndarray
    prob: np.ndarray
    rate: np.ndarray
    limit: float
    resolved: bool


def deviation_probabilities_exact(state: EquilibriumState, u_atoms, rho, n_list):
    """mu{|S_n u / n - int u| >= rho} by dynamic programming over (window, accumulated sum)."""
    lat = _lattice(u_atoms)
    if lat is None:
        raise ContractError("exact quadrature needs u constant on atoms with commensurable values")
    k, step = lat
    cyl = state.cylinders
    mu = state.mu
    sampler = OrbitSampler(state)
    rows = np.arange(len(cyl))
    # transition matrix of the window chain
    if cyl.depth == 1:
        Q = np.tile(mu, (len(cyl), 1))
        Q = sp.csr_matrix(Q)
    else:
        start = sampler.group_start[sampler.suffix]
        end = np.append(sampler.group_start[1:], len(cyl))[sampler.suffix]
        r_idx = np.repeat(rows, end - start)
        c_idx = np.concatenate([np.arange(s, e) for s, e in zip(start, end)])
        probs = mu[c_idx] / sampler.group_mass[sampler.suffix[r_idx]]
        Q = sp.csr_matrix((probs, (r_idx, c_idx)), shape=(len(cyl), len(cyl)))
    QT = Q.T.tocsr()
    ku = k[cyl.head.astype(np.intp)]
    kmin, kmax = int(k.min()), int(k.max())
    mean = float(mu @ (ku * step))
    n_max = max(n_list)
    width = (kmax - kmin) * n_max + 1
    prob = np.zeros((len(cyl), width))
    prob[rows, ku - kmin] = mu
    out = {}
    for n in range(1, n_max + 1):
        if n in n_list:
            s = (np.arange(width) + kmin * n) * step / n
            mass = prob.sum(axis=0)
            out[n] = float(mass[np.abs(s - mean) >= rho - 1e-12].sum())
        if n == n_max:
            break
        nxt = QT @ prob
        shifted = np.zeros_like(nxt)
        for val in np.unique(ku):
            m = ku == val
            sh = int(val - kmin)
            shifted[m, sh:] = nxt[m, :width - sh] if sh else nxt[m]
        prob = shifted
    return np.array([out[n] for n in n_list])


def deviation_probabilities_mc(state, u, rho, n_list, samples=20000, seed=0, threads=1, chunk=2000):
    mean = state.integrate(u)
    sampler = OrbitSampler(state)
    n_max = max(n_list)
    n_chunks = max(1, math.ceil(samples / chunk))
    sizes = [min(chunk, samples - i * chunk) for i in range(n_chunks)]

    def work(i, rng):
        pts = sampler.orbits(rng, sizes[i], n_max)
        cs = np.cumsum(_values(u, pts), axis=1)
        return np.array([np.sum(np.abs(cs[:, n - 1] / n - mean) >= rho) for n in n_list])

    hits = np.sum(_run_chunks(work, seed, n_chunks, threads), axis=0)
    return hits / samples


def extrapolate_rate(n, rate):
    """Fit r(n) = r_inf + a log(n)/n + b/n and return r_inf."""
    n = np.asarray(n, dtype=float)
    A = np.column_stack([np.ones_like(n), np.log(n) / n, 1.0 / n])
    coef, *_ = np.linalg.lstsq(A, rate, rcond=None)
    return float(coef[0])


def deviation_rate(state: EquilibriumState, u, rho, n_list, method="exact", **mc_kw):
    """(1/n) log mu{|S_n u/n - int u| >= rho} for n in n_list, plus the extrapolated limit."""
    if rho <= 0:
        raise ContractError("rho must be > 0")
    n_list = sorted(int(n) for n in n_list)
    if method == "exact":
        fmap = state.fmap
        u_atoms = _values(u, 0.5 * (fmap.lefts + fmap.rights))
        prob = deviation_probabilities_exact(state, u_atoms, rho, n_list)
    elif method == "mc":
        prob = deviation_probabilities_mc(state, u, rho, n_list, **mc_kw)
    else:
        raise ContractError(f"unknown method {method!r}")
    with np.errstate(divide="ignore"):
        rate = np.log(prob) / np.asarray(n_list)
    ok = np.isfinite(rate)
    if ok.sum() == 0:
        return DeviationCurve(np.asarray(n_list), prob, rate, float("nan"), False)
    limit = extrapolate_rate(np.asarray(n_list)[ok], rate[ok]) if ok.sum() >= 3 else float(rate[ok][-1])
    return DeviationCurve(np.asarray(n_list), prob, rate, limit, True)


@dataclass
class RateBound:
    value: float
    feasible: bool
    scan: object = field(repr=False, default=None)


def rate_bound_scan(state: EquilibriumState, u, rho, density=6, depth=4):
    """sup{h_eta + int phi d eta - P : |int u d eta - int u dmu| >= rho} over memory-1 Markov measures."""
    center = state.integrate(u)
    res = constrained_scan(state.fmap, state.potential, state.pressure, u, center, rho, density, depth)
    if not res.feasible:
        return RateBound(float("nan"), False, res)
    return RateBound(res.defect, True, res)
