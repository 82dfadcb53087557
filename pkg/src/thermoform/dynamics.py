"""Piecewise-monotone Markov maps of [0, 1) and the standing-hypothesis checker.

Atoms are half-open intervals ``[b_i, b_{i+1})``.  Atoms ``0 .. q-1`` are the
"bad" atoms where the map may contract a little; the remaining ones are the
uniformly expanding "good" atoms.  Atom indices are 0-based throughout the
package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InverseBranchError, InvalidPotentialError, MapDefinitionError

BREAK_TOL = 1e-9


@dataclass(frozen=True)
class Branch:
    """Increasing polynomial branch c0 + c1*x + c2*x**2 on one atom."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        if len(c) == 2:
            c = c + (0.0,)
        if len(c) != 3:
            raise MapDefinitionError("branch needs 2 (affine) or 3 (quadratic) coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def affine(cls, slope, offset):
        return cls((offset, slope, 0.0))

    @property
    def kind(self):
        return "affine" if self.coeffs[2] == 0.0 else "quadratic"

    def __call__(self, x):
        c0, c1, c2 = self.coeffs
        return c0 + x * (c1 + c2 * x)

    def derivative(self, x):
        _, c1, c2 = self.coeffs
        return c1 + 2.0 * c2 * np.asarray(x, dtype=float)

    def inverse(self, y, lo, hi, atom=None):
        """Solve branch(x) = y for x in [lo, hi]; vectorized over y."""
        c0, c1, c2 = self.coeffs
        y = np.asarray(y, dtype=float)
        if c2 == 0.0:
            x = (y - c0) / c1
        else:
            cc = c0 - y
            disc = c1 * c1 - 4.0 * c2 * cc
            if np.any(disc < -1e-12):
                bad = np.atleast_1d(y)[np.atleast_1d(disc) < -1e-12][0]
                raise InverseBranchError(atom, float(bad), (lo, hi), "negative discriminant")
            sq = np.sqrt(np.maximum(disc, 0.0))
            # stable root selection: the increasing branch is the + root when c1 > 0
            qq = -0.5 * (c1 + math.copysign(1.0, c1) * sq)
            with np.errstate(divide="ignore", invalid="ignore"):
                r1 = qq / c2
                r2 = np.where(qq != 0.0, cc / qq, r1)
            in1 = (r1 >= lo - 1e-9) & (r1 <= hi + 1e-9)
            x = np.where(in1, r1, r2)
        ok = (x >= lo - 1e-9) & (x <= hi + 1e-9)
        if not np.all(ok):
            bad = np.atleast_1d(y)[~np.atleast_1d(ok)][0]
            raise InverseBranchError(atom, float(bad), (lo, hi), "root outside bracket")
        return np.clip(x, lo, hi)

    def to_dict(self):
        c0, c1, c2 = self.coeffs
        if c2 == 0.0:
            return {"kind": "affine", "slope": c1, "offset": c0}
        return {"kind": "quadratic", "coeffs": [c0, c1, c2]}


@dataclass(frozen=True)
class MarkovMap1D:
    """Piecewise increasing Markov map of [0, 1).

    ``breaks`` are the d+1 atom endpoints 0 = b_0 < ... < b_d = 1 and
    ``branches[i]`` is the polynomial used on atom i.  ``q`` counts the bad
    atoms.  ``delta0`` may be given; it is derived from the derivative bounds
    otherwise.
    """

    breaks: tuple
    branches: tuple
    q: int = 0
    delta0: float | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        b = tuple(float(v) for v in self.breaks)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "branches", tuple(
            br if isinstance(br, Branch) else Branch(tuple(br)) for br in self.branches))
        d = len(b) - 1
        if d < 1 or b[0] != 0.0 or b[-1] != 1.0 or any(x >= y for x, y in zip(b, b[1:])):
            raise MapDefinitionError("breaks must increase strictly from 0 to 1")
        if len(self.branches) != d:
            raise MapDefinitionError(f"{d} atoms but {len(self.branches)} branches")
        if not 0 <= self.q < d:
            raise MapDefinitionError("need 0 <= q < number of atoms (at least one good atom)")
        for i, br in enumerate(self.branches):
            lo, hi = self.derivative_bounds[i]
            if lo <= 0.0:
                raise MapDefinitionError(f"branch {i} is not increasing on its atom")
        self.transition  # validates the Markov property
        if self.delta0 is not None:
            floor = 1.0 / (1.0 + self.delta0)
            if self.derivative_bounds[:, 0].min() < floor - 1e-12:
                raise MapDefinitionError("some |f'| < 1/(1+delta0)")

    # geometry

    @property
    def n_atoms(self):
        return len(self.breaks) - 1

    @property
    def p(self):
        return self.n_atoms - self.q

    @cached_property
    def lefts(self):
        return np.asarray(self.breaks[:-1])

    @cached_property
    def rights(self):
        return np.asarray(self.breaks[1:])

    @cached_property
    def widths(self):
        return self.rights - self.lefts

    @property
    def eps(self):
        """Largest atom diameter."""
        return float(self.widths.max())

    @cached_property
    def derivative_bounds(self):
        """(inf f', sup f') per atom; exact since f' is affine on each atom."""
        out = np.empty((self.n_atoms, 2))
        for i, br in enumerate(self.branches):
            ends = br.derivative(np.array([self.breaks[i], self.breaks[i + 1]]))
            out[i] = ends.min(), ends.max()
        return out

    @property
    def sigma1(self):
        """Smallest expansion factor over the good atoms."""
        return float(self.derivative_bounds[self.q:, 0].min())

    @property
    def effective_delta0(self):
        if self.delta0 is not None:
            return float(self.delta0)
        return max(0.0, 1.0 / float(self.derivative_bounds[:, 0].min()) - 1.0)

    @cached_property
    def images(self):
        """Index range [start, stop) of atoms covered by each branch image."""
        out = []
        b = np.asarray(self.breaks)
        for i, br in enumerate(self.branches):
            y0, y1 = float(br(self.breaks[i])), float(br(self.breaks[i + 1]))
            s = np.flatnonzero(np.abs(b - y0) < BREAK_TOL)
            e = np.flatnonzero(np.abs(b - y1) < BREAK_TOL)
            if len(s) != 1 or len(e) != 1 or e[0] <= s[0]:
                raise MapDefinitionError(
                    f"image [{y0}, {y1}] of atom {i} is not a union of atoms (Markov property)")
            out.append((int(s[0]), int(e[0])))
        return tuple(out)

    @cached_property
    def transition(self):
        """Boolean matrix T[i, j] = (atom j lies in the image of atom i)."""
        T = np.zeros((self.n_atoms, self.n_atoms), dtype=bool)
        for i, (s, e) in enumerate(self.images):
            T[i, s:e] = True
        T.setflags(write=False)
        return T

    @cached_property
    def preimage_counts(self):
        """Number of preimages of a point of atom j."""
        return self.transition.sum(axis=0)

    @property
    def degree(self):
        """Common preimage count k, or None when it varies from atom to atom."""
        c = self.preimage_counts
        return int(c[0]) if np.all(c == c[0]) else None

    @cached_property
    def mixing_time(self):
        """Least N with T^N > 0 entrywise, or None if the transition graph is not primitive."""
        T = self.transition.astype(np.int64)
        P = T.copy()
        for n in range(1, self.n_atoms ** 2 - 2 * self.n_atoms + 3):
            if np.all(P > 0):
                return n
            P = np.minimum(P @ T, 1)
        return None

    # pointwise evaluation

    def atom_of(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0.0) | (x >= 1.0)):
            raise DomainError("points must lie in [0, 1)")
        return np.searchsorted(self.breaks, x, side="right") - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.atom_of(x)
        out = np.empty_like(x)
        for i, br in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = br(x[m])
        return np.mod(out, 1.0)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.atom_of(x)
        out = np.empty_like(x)
        for i, br in enumerate(self.branches):
            m = idx == i
            if np.any(m):
                out[m] = br.derivative(x[m])
        return out

    def inverse_branch(self, i, y):
        return self.branches[i].inverse(y, self.breaks[i], self.breaks[i + 1], atom=i)

    def preimage_table(self, x):
        """Array of shape (len(x), n_atoms): preimage through branch i, NaN where none."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j = self.atom_of(x)
        out = np.full((x.size, self.n_atoms), np.nan)
        for i in range(self.n_atoms):
            m = self.transition[i, j]
            if np.any(m):
                # atoms are half-open, so a root rounded onto the right end moves one ulp back
                out[m, i] = np.minimum(self.inverse_branch(i, x[m]), np.nextafter(self.breaks[i + 1], 0.0))
        return out

    # serialization

    def to_dict(self):
        return {
            "breaks": list(self.breaks),
            "branches": [br.to_dict() for br in self.branches],
            "q": self.q,
            "delta0": self.delta0,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d):
        branches = []
        for spec in d["branches"]:
            kind = spec.get("kind", "affine")
            if kind == "affine":
                branches.append(Branch.affine(spec["slope"], spec.get("offset", 0.0)))
            elif kind == "quadratic":
                branches.append(Branch(tuple(spec["coeffs"])))
            else:
                raise MapDefinitionError(f"unknown branch kind {kind!r}")
        return cls(tuple(d["breaks"]), tuple(branches), int(d.get("q", 0)),
                   d.get("delta0"), d.get("name", ""))


def evaluate(fmap: MarkovMap1D, x):
    """f(x) for scalar x."""
    return float(fmap(np.float64(x)))


def preimages(fmap: MarkovMap1D, x):
    """Sorted list of the points y with f(y) = x."""
    row = fmap.preimage_table([x])[0]
    return sorted(float(v) for v in row[~np.isnan(row)])


def derivative(fmap: MarkovMap1D, x):
    return float(fmap.derivative(np.float64(x)))


# ---------------------------------------------------------------------------
# hypothesis verification

@dataclass
class ConditionRecord:
    name: str
    passed: bool
    slack: float
    required: bool = True
    note: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "slack": self.slack,
                "required": self.required, "note": self.note}


@dataclass
class HypothesisReport:
    records: list
    constants: dict

    @property
    def passed(self):
        return all(r.passed for r in self.records if r.required)

    def __getitem__(self, name):
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def failures(self):
        return [r.name for r in self.records if r.required and not r.passed]

    def to_dict(self):
        return {"passed": self.passed, "records": [r.to_dict() for r in self.records],
                "constants": self.constants}

    def format_table(self):
        lines = [f"{'condition':<14}{'required':>9}{'pass':>6}{'slack':>26}  note"]
        for r in self.records:
            lines.append(f"{r.name:<14}{'yes' if r.required else 'no':>9}"
                         f"{'ok' if r.passed else 'FAIL':>6}{r.slack:>26.17g}  {r.note}")
        lines.append("")
        for k, v in self.constants.items():
            lines.append(f"  {k:<12} = {v}")
        return "\n".join(lines)


def effective_gamma(fmap, gamma):
    # with no bad atoms every orbit visits the bad region with frequency 0
    return gamma if fmap.q > 0 else 0.0


def default_c(fmap, gamma, delta0=None):
    """The c making (1+δ0)^γ σ1^{-(1-γ)} = e^{-4c}; negative when no c > 0 exists."""
    d0 = fmap.effective_delta0 if delta0 is None else delta0
    g = effective_gamma(fmap, gamma)
    return -0.25 * (g * math.log1p(d0) - (1.0 - g) * math.log(fmap.sigma1))


def _sample_log_derivative(fmap, mask_fn, n=10_000):
    """log|f'| sampled on an n-point grid per atom selected by mask_fn."""
    vals = []
    for i in range(fmap.n_atoms):
        xs = np.linspace(fmap.breaks[i], fmap.breaks[i + 1], n, endpoint=False)
        dv = fmap.branches[i].derivative(xs)
        sel = mask_fn(i, dv)
        vals.append(np.log(np.abs(dv[sel])))
    vals = np.concatenate(vals) if vals else np.array([])
    return vals


def verify_hypotheses(fmap, potential, gamma, c=None, *, c0_method="count", count_n=200,
                      gamma0=None, check_alpha=None):
    """Check (H1)-(H4) and the constant restrictions for (map, potential).

    ``c0_method`` is "count" (finite-n rate of the exact frequent-word count
    at ``count_n``) or "stirling" (the closed-form upper bound).  Returns a
    HypothesisReport; nothing is raised for failed conditions.
    """
    from .symbolic import count_frequent_words, stirling_kk, stirling_rate_bound

    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if not (math.isfinite(potential.max) and math.isfinite(potential.min)):
        raise InvalidPotentialError("potential oscillation is unbounded")
    if c is None:
        c = default_c(fmap, gamma)
    alpha = potential.alpha if check_alpha is None else check_alpha
    p, q = fmap.p, fmap.q
    counts = fmap.preimage_counts
    k = int(counts.min())
    d0 = fmap.effective_delta0
    s1 = fmap.sigma1
    g_eff = effective_gamma(fmap, gamma)
    osc = potential.oscillation
    records = []

    # (H1)
    dmin = float(fmap.derivative_bounds[:, 0].min())
    notes = []
    slack = min(dmin - 1.0 / (1.0 + d0), s1 - 1.0)
    structural = True
    if fmap.degree is None:
        structural = False
        notes.append("preimage count varies by atom")
    if fmap.mixing_time is None:
        structural = False
        notes.append("transition graph not primitive")
    if k <= q:
        structural = False
        notes.append("k <= q")
    notes.append("sigma1 read as expansion factor > 1")
    records.append(ConditionRecord("H1", structural and slack >= -1e-12 and s1 > 1.0, slack,
                                   note="; ".join(notes)))

    # c0(f): exact counting or closed-form bound
    if c0_method == "count":
        _, c0 = count_frequent_words(p, q, gamma, count_n)
    elif c0_method == "stirling":
        kk = stirling_kk(gamma)
        c0 = stirling_rate_bound(p, q, kk) if kk >= 1 else math.log(p + q)
    else:
        raise ValueError(f"unknown c0_method {c0_method!r}")
    # no frequent bad words at all (q = 0): the count bound is vacuous
    c0 = max(c0, 0.0) if q == 0 else c0
    log_k = math.log(k)
    theta_factor = (k - q) / k * s1 ** (-alpha) + q / k * (1.0 + d0) ** alpha
    eps_ly = -math.log(theta_factor)
    eps_budget = min(log_k - c0, eps_ly)

    # (H2): oscillation below the combined budget
    records.append(ConditionRecord("H2", osc < eps_budget, eps_budget - osc,
                                   note=f"oscillation {osc:.6g} vs budget eps0"))
    # (H3) is vacuous in dimension one: log||Λ^0 Df|| = 0 < log k
    records.append(ConditionRecord("H3", log_k > 0.0, log_k, note="d = 1"))

    # (H4) and its constants, sampled on a 10^4-point grid per region
    sigma2 = dmin
    v_logs = _sample_log_derivative(fmap, lambda i, dv: dv < s1)
    v_outside_w = 0
    for i in range(fmap.n_atoms):
        xs = np.linspace(fmap.breaks[i], fmap.breaks[i + 1], 10_000, endpoint=False)
        dv = fmap.branches[i].derivative(xs)
        if i >= q:
            v_outside_w += int(np.sum(dv < s1))
    good_logs = _sample_log_derivative(fmap, lambda i, dv: np.full(dv.shape, i >= q))
    if v_logs.size:
        m1, m2 = float(v_logs.min()), float(v_logs.max())
    else:
        m1 = m2 = None
    M1, M2 = float(good_logs.min()), float(good_logs.max())
    beta = m2 - m1 if v_logs.size else 0.0
    h4_slack = min(sigma2 - q, (M1 - m2) if v_logs.size else math.inf)
    records.append(ConditionRecord("H4", h4_slack > 0 and v_outside_w == 0, h4_slack, required=False,
                                   note="alternative to H3; beta reported, not assumed"))

    # (e.4)
    lhs = (1.0 + d0) ** g_eff * s1 ** (-(1.0 - g_eff))
    rhs = math.exp(-4.0 * c)
    e4_slack = rhs - lhs
    e4_note = "q = 0: bad-visit frequency is 0" if q == 0 else ""
    if c <= 0:
        e4_note = (e4_note + "; " if e4_note else "") + "requires c > 0"
    records.append(ConditionRecord("e.4", c > 0 and e4_slack >= -1e-12 * max(1.0, lhs), e4_slack,
                                   note=e4_note))
    # (e.epsilon2) with eps0 = oscillation of phi
    records.append(ConditionRecord("e.epsilon2", osc < log_k - c0, log_k - c0 - osc,
                                   note=f"c0 via {c0_method}"))
    # (e.epsilon3)
    e3 = 1.0 - math.exp(osc) * theta_factor
    records.append(ConditionRecord("e.epsilon3", e3 > 0, e3))

    # these restrictions need gamma0, which the user supplies
    h_top = float(np.log(max(abs(np.linalg.eigvals(fmap.transition.astype(float))))))
    rho = None
    if gamma0 is not None and v_logs.size:
        X = gamma0 * m1 + (1.0 - gamma0) * M1 - math.log1p(d0)
        Y = gamma * m2 + (1.0 - gamma) * M2
        records.append(ConditionRecord("e.5", Y < X, X - Y, required=False))
        rho = Y / X if X > 0 else None
        e1 = (1.0 - rho) * h_top - osc if rho is not None else float("nan")
        records.append(ConditionRecord("e.epsilon1", bool(e1 > 0), e1, required=False,
                                       note="rho = supremum of admissible values"))
    else:
        records.append(ConditionRecord("e.5", False, float("nan"), required=False,
                                       note="gamma0 not supplied"))
        records.append(ConditionRecord("e.epsilon1", False, float("nan"), required=False,
                                       note="gamma0 not supplied"))

    constants = {
        "gamma": gamma, "c": c, "c0": c0, "eps0_budget": eps_budget, "k": k, "p": p, "q": q,
        "sigma1": s1, "delta0": d0, "alpha": alpha, "sigma2": sigma2, "m1": m1, "m2": m2,
        "M1": M1, "M2": M2, "beta": beta, "rho": rho, "gamma0": gamma0, "h_top": h_top,
        "oscillation": osc,
    }
    return HypothesisReport(records, constants)
