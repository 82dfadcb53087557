"""Birkhoff cones of Hölder functions and the constants that make the transfer operator contract them.

Cone elements are handled as callables sampled on a ``Grid``: a fixed set of
points per atom (for the seminorm pairs) plus a uniform set of z-samples (for
the infimum).  Seminorms only compare points of the same atom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractError, HypothesisViolation
from .transfer import apply_transfer


@dataclass(frozen=True)
class Grid:
    breaks: tuple
    per_atom: int = 64
    z_count: int = 128

    @cached_property
    def points(self):
        b = np.asarray(self.breaks, dtype=float)
        k = (np.arange(self.per_atom) + 0.5) / self.per_atom
        return (b[:-1, None] + np.diff(b)[:, None] * k[None, :]).ravel()

    @cached_property
    def atom(self):
        return np.repeat(np.arange(len(self.breaks) - 1), self.per_atom)

    @cached_property
    def z(self):
        return (np.arange(self.z_count) + 0.5) / self.z_count

    @cached_property
    def pairs(self):
        """Ordered same-atom index pairs (i, j), i != j."""
        n = self.per_atom
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        off = ii != jj
        ii, jj = ii[off], jj[off]
        d = len(self.breaks) - 1
        base = (np.arange(d) * n)[:, None]
        return (base + ii[None, :]).ravel(), (base + jj[None, :]).ravel()

    def distances(self, alpha):
        i, j = self.pairs
        return np.abs(self.points[i] - self.points[j]) ** alpha


def _sample(g, xs):
    return np.asarray(g(xs), dtype=float) if callable(g) else np.asarray(g, dtype=float)


def grid_seminorm(g, grid: Grid, alpha=1.0):
    """max over same-atom grid pairs of |g(x) - g(y)| / |x - y|^alpha."""
    v = _sample(g, grid.points)
    i, j = grid.pairs
    return float(np.max(np.abs(v[i] - v[j]) / grid.distances(alpha)))


def grid_inf(g, grid: Grid):
    return float(min(_sample(g, grid.points).min(), _sample(g, grid.z).min()))


def grid_sup(g, grid: Grid):
    return float(max(_sample(g, grid.points).max(), _sample(g, grid.z).max()))


def in_cone(g, L, grid: Grid, alpha=1.0):
    """(membership, margin) with margin = L * inf g - |||g|||_alpha on the grid."""
    inf = grid_inf(g, grid)
    margin = L * inf - grid_seminorm(g, grid, alpha)
    return bool(inf > 0 and margin >= 0), margin


def _functionals(g, L, grid, alpha):
    """Values of the linear functionals cutting out the cone: g(z), and L|x-y|^a g(z) - (g(x) - g(y))."""
    px = _sample(g, grid.points)
    pz = _sample(g, grid.z)
    i, j = grid.pairs
    a = L * grid.distances(alpha)
    diff = px[i] - px[j]
    pair_part = a[:, None] * pz[None, :] - diff[:, None]
    return np.concatenate([pz, pair_part.ravel()])


def cone_metric(h, g, L, grid: Grid, alpha=1.0):
    """Projective metric Psi_L(h, g) = log(B/A), A/B the inf/sup of the functional ratios g/h."""
    fh = _functionals(h, L, grid, alpha)
    fg = _functionals(g, L, grid, alpha)
    if np.any(fh <= 0):
        raise ContractError("first argument is not inside the cone")
    if np.any(fg <= 0):
        raise ContractError("second argument is not inside the cone")
    r = fg / fh
    return float(math.log(r.max()) - math.log(r.min()))


# ---------------------------------------------------------------------------
# constants

def _branch_counts(fmap):
    """Per target atom: number of good and bad inverse branches."""
    T = fmap.transition
    bad = T[: fmap.q].sum(axis=0)
    good = T[fmap.q:].sum(axis=0)
    return good, bad


def lasota_yorke_constants(fmap, potential, lam, alpha=None, strict=True):
    """(Theta, C) with |||L~g|||_a <= Theta |||g|||_a + C ||g||_inf."""
    a = potential.alpha if alpha is None else alpha
    good, bad = _branch_counts(fmap)
    contraction = good * fmap.sigma1 ** (-a) + bad * (1.0 + fmap.effective_delta0) ** a
    emax = math.exp(potential.max)
    theta = float(np.max(emax * contraction)) / lam
    exp_semi = emax * potential.seminorm(fmap.eps)
    C = exp_semi * float(np.max(contraction)) / lam
    if strict and theta >= 1.0:
        raise HypothesisViolation("e.epsilon3", f"Lasota-Yorke factor Theta = {theta} >= 1")
    return theta, C


def default_theta0(theta, max_phi):
    return 0.9 * min(1.0, math.exp(-max_phi)) + 0.1 * theta


def invariance_factor(theta, C, max_phi, L, theta0, d=1, eps=1.0, alpha=1.0):
    """sigma with L~(cone_L) inside cone_{sigma L}."""
    if not theta < theta0 < 1.0:
        raise ContractError(f"need Theta < Theta0 < 1, got Theta={theta}, Theta0={theta0}")
    C1 = C * (1.0 + d * eps ** alpha)
    if L <= C1 / (theta0 - theta):
        raise ContractError(f"L = {L} must exceed C1/(Theta0 - Theta) = {C1 / (theta0 - theta)}")
    sigma = theta0 * math.exp(max_phi)
    if sigma >= 1.0:
        raise HypothesisViolation("e.epsilon3", f"invariance factor sigma = {sigma} >= 1")
    return sigma


def diameter_bound(sigma, L, d, eps, alpha):
    if not 0.0 < sigma < 1.0:
        raise ContractError("need 0 < sigma < 1")
    return 2.0 * math.log((1 + sigma) / (1 - sigma)) + 2.0 * math.log1p(sigma * L * d * eps ** alpha)


def contraction_rate(delta):
    if delta < 0:
        raise ContractError("diameter must be >= 0")
    return 1.0 if math.isinf(delta) else math.tanh(delta / 4.0)


def norm_gap_bound(psi, v_norm):
    """(e^Psi - 1) * ||v||; valid for cone elements with equal integrals."""
    return math.expm1(psi) * v_norm


@dataclass(frozen=True)
class ConeParams:
    L: float
    alpha: float
    d: int
    eps: float


@dataclass(frozen=True)
class ConeConstants:
    theta: float
    C: float
    C1: float
    theta0: float
    L: float
    sigma: float
    delta: float
    rate: float
    params: ConeParams

    def to_dict(self):
        return {k: getattr(self, k) for k in ("theta", "C", "C1", "theta0", "L", "sigma", "delta", "rate")}


def cone_constants(fmap, potential, lam, theta0=None, L=None, L_factor=2.0):
    """Chain Lasota-Yorke -> invariance factor -> diameter -> contraction rate."""
    theta, C = lasota_yorke_constants(fmap, potential, lam)
    t0 = default_theta0(theta, potential.max) if theta0 is None else theta0
    d, eps, a = fmap.n_atoms, fmap.eps, potential.alpha
    C1 = C * (1.0 + d * eps ** a)
    if L is None:
        if not theta < t0:
            raise ContractError(f"need Theta < Theta0, got Theta={theta}, Theta0={t0}")
        L = max(L_factor * C1 / (t0 - theta), 1.0)
    sigma = invariance_factor(theta, C, potential.max, L, t0, d, eps, a)
    delta = diameter_bound(sigma, L, d, eps, a)
    return ConeConstants(theta, C, C1, t0, L, sigma, delta, contraction_rate(delta),
                         ConeParams(L, a, d, eps))


def two_norm(g, L, grid, alpha=1.0):
    """sup|g| + |||g|||_alpha / L, the norm that cone distances are converted into."""
    return grid_sup(lambda x: np.abs(_sample(g, x)), grid) + grid_seminorm(g, grid, alpha) / L


@dataclass
class ConeTrace:
    psi: np.ndarray
    ratios: np.ndarray
    sup_gap: np.ndarray
    gap_bound: np.ndarray


def contraction_trace(fmap, potential, g, ref, lam, L, grid: Grid, steps, integral=None):
    """Psi_L between lam^-n L^n g and lam^-n L^n ref for n = 0..steps, with sup-norm gaps.

    When ``integral`` (a functional on callables) is given, g is rescaled to the
    integral of ref first, so the gap bound (e^Psi - 1) * sup of the reference iterate applies.
    """
    a = potential.alpha
    scale = 1.0 if integral is None else integral(ref) / integral(g)
    xs = np.concatenate([grid.points, grid.z])
    psi = np.empty(steps + 1)
    gap = np.empty(steps + 1)
    bound = np.empty(steps + 1)
    for n in range(steps + 1):
        if n == 0:
            gn = lambda x: scale * _sample(g, x)  # noqa: E731
            rn = ref
        else:
            gn = lambda x, n=n: scale * apply_transfer(fmap, potential, g, x, n) / lam ** n  # noqa: E731
            rn = lambda x, n=n: apply_transfer(fmap, potential, ref, x, n) / lam ** n  # noqa: E731
        vg, vr = _sample(gn, xs), _sample(rn, xs)
        psi[n] = cone_metric(rn, gn, L, grid, a)
        gap[n] = float(np.max(np.abs(vg - vr)))
        bound[n] = norm_gap_bound(psi[n], float(np.max(np.abs(vr))))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.concatenate([[np.nan], psi[1:] / psi[:-1]])
    return ConeTrace(psi, ratios, gap, bound)
