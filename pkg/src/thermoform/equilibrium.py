"""Equilibrium state mu = h nu on the cylinder model and the identities it satisfies."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ContractError, ThermoformError
from .symbolic import cylinders, hyperbolic_mask, orbit
from .transfer import SpectralData, coarsen, collocated_potential


class CorruptedDensityError(ThermoformError, ArithmeticError):
    pass


class SupportError(ThermoformError, ValueError):
    pass


@dataclass(frozen=True)
class EquilibriumState:
    mu: np.ndarray
    spectral: SpectralData
    invariance_defect: float

    @property
    def depth(self):
        return self.spectral.depth

    @property
    def fmap(self):
        return self.spectral.fmap

    @property
    def potential(self):
        return self.spectral.potential

    @property
    def cylinders(self):
        return self.spectral.cylinders

    @property
    def lam(self):
        return self.spectral.lam

    @property
    def pressure(self):
        return self.spectral.pressure

    def marginal(self, depth):
        return coarsen(self.cylinders, self.mu, depth)

    def integrate(self, u):
        """Cylinder-midpoint quadrature of a function against mu."""
        return float(self.mu @ np.asarray(u(self.cylinders.mid), dtype=float))


def shifted_marginal(cyl, weights):
    """Weights of the words w[1:] (depth n-1) under the given depth-n weights."""
    return np.bincount(cyl.suffix, weights=weights, minlength=len(cyl.coarser(cyl.depth - 1)))


def equilibrium_measure(spectral: SpectralData) -> EquilibriumState:
    if spectral.fmap is None:
        raise ContractError("spectral data must come from transfer.spectrum")
    mu = spectral.h * spectral.nu
    mu = mu / mu.sum()
    cyl = spectral.cylinders
    if cyl.depth == 1:
        # a pushforward needs two symbols; nothing to compare at depth 1
        defect = float("nan")
    else:
        defect = float(np.max(np.abs(coarsen(cyl, mu, cyl.depth - 1) - shifted_marginal(cyl, mu))))
    return EquilibriumState(mu, spectral, defect)


def cylinder_g(state: EquilibriumState):
    """g on depth-n cylinders: exp(phi(w)) h(w) / (lambda h(w[1:]))."""
    sd = state.spectral
    cyl = state.cylinders
    phi = collocated_potential(sd.potential, cyl)
    if cyl.depth == 1:
        # h is constant on the depth-1 model
        return np.exp(phi) / sd.lam
    # h depends on the first n-1 symbols only; read it off through the prefix index
    h_short = np.zeros(len(cyl.coarser(cyl.depth - 1)))
    h_short[cyl.prefix] = sd.h
    h_next = h_short[cyl.suffix]
    if np.any(h_next <= 0):
        raise CorruptedDensityError("density is not positive")
    return np.exp(phi) * sd.h / (sd.lam * h_next)


def g_function(state: EquilibriumState, x):
    """g(x) = exp(phi) h(x) / (lambda h(f(x))), with phi collocated on the model's cylinders."""
    cyl = state.cylinders
    g = cylinder_g(state)
    return g[cyl.locate(x)]


def g_preimage_sum(state: EquilibriumState, x):
    """sum over f(y) = x of g(y), vectorized over x."""
    tab = state.fmap.preimage_table(x)
    ok = ~np.isnan(tab)
    vals = np.zeros_like(tab)
    vals[ok] = g_function(state, tab[ok])
    return vals.sum(axis=1)


def rokhlin_entropy(state: EquilibriumState, g_values=None):
    """h_mu = -int log g dmu."""
    g = cylinder_g(state) if g_values is None else np.asarray(g_values, dtype=float)
    m = state.mu > 0
    return float(-(state.mu[m] @ np.log(g[m])))


def pressure_identity_defect(state: EquilibriumState):
    entropy = rokhlin_entropy(state)
    integral = float(state.mu @ collocated_potential(state.potential, state.cylinders))
    return entropy, integral, entropy + integral - state.pressure


def weak_gibbs_ratio(state_or_spectral, word, c, K=None):
    """nu(w) / exp(S_n phi(x_w) - n P) for a certified hyperbolic word w, x_w its midpoint."""
    sd = state_or_spectral.spectral if isinstance(state_or_spectral, EquilibriumState) else state_or_spectral
    fmap, pot = sd.fmap, sd.potential
    n = len(word)
    if n > sd.depth:
        raise ContractError("word longer than the model depth")
    cyl_n = cylinders(fmap, n)
    r = cyl_n.index(word)
    if r < 0:
        raise ContractError(f"word {word} is not admissible")
    if not hyperbolic_mask(fmap, cyl_n, c)[r]:
        raise ContractError(f"word {word} is not a certified hyperbolic cylinder")
    nu_n = coarsen(sd.cylinders, sd.nu, n)
    x = 0.5 * (cyl_n.left[r] + cyl_n.right[r])
    S = float(np.sum(pot(orbit(fmap, x, n))))
    ratio = float(nu_n[r] / math.exp(S - n * sd.pressure))
    if K is not None and not (1.0 / K <= ratio <= K):
        raise ContractError(f"weak Gibbs ratio {ratio} outside [{1 / K}, {K}]")
    return ratio


def weak_gibbs_ratios(spectral: SpectralData, n, c):
    """All ratios on certified hyperbolic n-cylinders (vectorized version of weak_gibbs_ratio)."""
    fmap, pot = spectral.fmap, spectral.potential
    cyl = cylinders(fmap, n)
    mask = hyperbolic_mask(fmap, cyl, c)
    nu_n = coarsen(spectral.cylinders, spectral.nu, n)
    x = cyl.mid[mask]
    S = np.zeros(x.size)
    for _ in range(n):
        S += pot(x)
        x = fmap(x)
    return nu_n[mask] / np.exp(S - n * spectral.pressure)


def measure_equivalence_diagnostic(nu1, nu2, mask=None):
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    if nu1.shape != nu2.shape:
        raise ContractError("measures live on different cylinder sets")
    if np.any(nu1 <= 0) or np.any(nu2 <= 0):
        raise SupportError("measure with a zero-weight cylinder")
    r = nu1 / nu2
    if mask is not None:
        r = r[np.asarray(mask, dtype=bool)]
    return float(r.min()), float(r.max())


def conditional_expectation_check(state: EquilibriumState, psi, depth):
    """Max over depth-(n-1) cylinders C of |int_{f^-1 C} E(psi | f^-1 B) dmu - int_{f^-1 C} psi dmu|."""
    if depth < 2:
        raise ContractError("depth must be >= 2")
    if depth > state.depth:
        raise ContractError("depth exceeds the model depth")
    cyl = state.cylinders
    D = cyl.depth
    mu = state.mu
    g = cylinder_g(state)
    vals = np.asarray(psi(cyl.mid), dtype=float)
    first = coarsen(cyl, mu, D - 1)
    # mass of f(w) under mu times the transfer-weighted value, grouped by w[1:]
    lhs_w = first[cyl.suffix] * g * vals
    rhs_w = mu * vals
    short = cyl.coarser(D - 1)
    lhs = np.bincount(cyl.suffix, weights=lhs_w, minlength=len(short))
    rhs = np.bincount(cyl.suffix, weights=rhs_w, minlength=len(short))
    if depth - 1 < D - 1:
        lhs = coarsen(short, lhs, depth - 1)
        rhs = coarsen(short, rhs, depth - 1)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# variational principle over memory-1 Markov measures

@dataclass
class MarkovCandidate:
    P: np.ndarray
    pi: np.ndarray
    entropy: float
    integral: float

    @property
    def value(self):
        return self.entropy + self.integral


@dataclass
class ScanResult:
    best: MarkovCandidate
    pressure: float
    table: list = field(default_factory=list)
    feasible: bool = True
    mu1: np.ndarray | None = None

    @property
    def value(self):
        return self.best.value if self.feasible else -math.inf

    @property
    def defect(self):
        """sup value - P (should be <= 0)."""
        return self.value - self.pressure

    @property
    def weight_error(self):
        return float(np.max(np.abs(self.best.pi - self.mu1))) if self.mu1 is not None else float("nan")


class MarkovFamily:
    """Memory-1 Markov measures supported on the transition graph, parametrized row by row."""

    def __init__(self, fmap, potential, depth=4):
        self.fmap = fmap
        self.T = fmap.transition
        self.d = fmap.n_atoms
        self.allowed = [np.flatnonzero(self.T[i]) for i in range(self.d)]
        self.cyl = cylinders(fmap, depth)
        w = self.cyl.words.astype(np.intp)
        self.first = w[:, 0]
        self.steps = w[:, :-1] * self.d + w[:, 1:]
        self.phi = collocated_potential(potential, self.cyl)

    @property
    def n_free(self):
        return sum(len(a) - 1 for a in self.allowed)

    def matrix_from_rows(self, rows):
        P = np.zeros((self.d, self.d))
        for i, r in enumerate(rows):
            P[i, self.allowed[i]] = r
        return P

    def matrix_from_logits(self, theta):
        rows, pos = [], 0
        for a in self.allowed:
            z = np.concatenate([[0.0], theta[pos:pos + len(a) - 1]])
            pos += len(a) - 1
            z = np.exp(z - z.max())
            rows.append(z / z.sum())
        return self.matrix_from_rows(rows)

    def logits_from_matrix(self, P):
        out = []
        for i, a in enumerate(self.allowed):
            r = np.maximum(P[i, a], 1e-300)
            out.extend(np.log(r[1:] / r[0]))
        return np.asarray(out)

    def stationary(self, P):
        vals, vecs = np.linalg.eig(P.T)
        v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        v = np.abs(v)
        return v / v.sum()

    def weights(self, P, pi):
        with np.errstate(divide="ignore"):
            logP = np.log(P).ravel()
            lw = np.log(pi)[self.first] + logP[self.steps].sum(axis=1)
        return np.exp(lw)

    def evaluate(self, P, extra=None):
        pi = self.stationary(P)
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(P > 0, P * np.log(P), 0.0)
        entropy = float(-(pi @ plogp.sum(axis=1)))
        eta = self.weights(P, pi)
        integral = float(eta @ self.phi)
        cand = MarkovCandidate(P, pi, entropy, integral)
        if extra is not None:
            cand.extra = float(eta @ extra)
        return cand

    def grid(self, density):
        per_row = []
        for a in self.allowed:
            m = len(a)
            pts = [np.array(c, dtype=float) / density
                   for c in itertools.product(range(density + 1), repeat=m) if sum(c) == density]
            # keep the interior of the simplex so the chain stays on the full graph
            pts = [(p + 1e-3) / (1 + 1e-3 * m) for p in pts]
            per_row.append(pts)
        for rows in itertools.product(*per_row):
            yield self.matrix_from_rows(rows)


def _family_for(fmap, potential, depth):
    if potential.kind == "constant_per_atom" and tuple(potential.breaks) == tuple(fmap.breaks):
        depth = 2
    return MarkovFamily(fmap, potential, depth)


def variational_scan(fmap, potential, pressure, density=6, depth=4, refine=True, mu1=None,
                     keep_table=False):
    """Sup of h_eta + int phi d eta over memory-1 Markov measures: simplex grid, then local refinement."""
    fam = _family_for(fmap, potential, depth)
    best, table = None, []
    for P in fam.grid(density):
        cand = fam.evaluate(P)
        if keep_table:
            table.append(cand)
        if best is None or cand.value > best.value:
            best = cand
    if refine and fam.n_free:
        res = optimize.minimize(lambda t: -fam.evaluate(fam.matrix_from_logits(t)).value,
                                fam.logits_from_matrix(best.P), method="BFGS",
                                options={"gtol": 1e-12, "maxiter": 5000})
        cand = fam.evaluate(fam.matrix_from_logits(res.x))
        if cand.value >= best.value:
            best = cand
    return ScanResult(best, pressure, table, True, mu1)


def constrained_scan(fmap, potential, pressure, u_values_fn, center, rho, density=6, depth=4):
    """sup{h_eta + int phi d eta - P : |int u d eta - center| >= rho} over memory-1 Markov measures."""
    fam = _family_for(fmap, potential, depth)
    if fam.cyl.depth < 2 and potential.kind != "constant_per_atom":
        raise ContractError("quadrature depth too small")
    u = np.asarray(u_values_fn(fam.cyl.mid), dtype=float)
    best = {+1: None, -1: None}
    for P in fam.grid(density):
        cand = fam.evaluate(P, extra=u)
        for s in (+1, -1):
            if s * (cand.extra - center) >= rho and (best[s] is None or cand.value > best[s].value):
                best[s] = cand
    results = []
    for s, start in best.items():
        if start is None:
            continue

        def obj(t):
            return -fam.evaluate(fam.matrix_from_logits(t)).value

        def con(t, s=s):
            return s * (fam.evaluate(fam.matrix_from_logits(t), extra=u).extra - center) - rho

        res = optimize.minimize(obj, fam.logits_from_matrix(start.P), method="SLSQP",
                                constraints=[{"type": "ineq", "fun": con}],
                                options={"ftol": 1e-14, "maxiter": 1000})
        cand = fam.evaluate(fam.matrix_from_logits(res.x), extra=u)
        if s * (cand.extra - center) >= rho - 1e-9 and cand.value > start.value:
            results.append(cand)
        else:
            results.append(start)
    if not results:
        return ScanResult(None, pressure, [], False)
    return ScanResult(max(results, key=lambda c: c.value), pressure, [], True)
