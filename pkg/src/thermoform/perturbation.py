"""Transfer operator averaged over small additive noise, and the stability of its invariant density.

The random map is f_w(x) = f(x) + w (mod 1) with w uniform on [-eps, eps].
Averaging is done by Gauss-Legendre quadrature, so the perturbed operator is
deterministic: (L_eps g)(x) = sum_j w_j (L g)(x - w_j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .cones import lasota_yorke_constants
from .errors import ContractError
from .symbolic import cylinders
from .transfer import apply_transfer, leading_spectrum, spectrum, transfer_matrix

MIN_NODES = 8


@dataclass(frozen=True)
class NoiseModel:
    eps: float
    nodes: int = 16
    kind: str = "additive-uniform"

    def __post_init__(self):
        if self.eps < 0:
            raise ContractError("noise amplitude must be >= 0")
        if self.eps > 0 and self.nodes < MIN_NODES:
            raise ContractError(f"need at least {MIN_NODES} quadrature nodes")

    @cached_property
    def quadrature(self):
        """Symmetric nodes in [-eps, eps] and weights summing to 1."""
        if self.eps == 0:
            return np.array([0.0]), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        return self.eps * x, 0.5 * w

    def check(self, fmap):
        limit = 0.5 * float(fmap.widths.min())
        if self.eps >= limit:
            raise ContractError(f"eps = {self.eps} must stay below half the smallest atom ({limit})")

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps, "nodes": self.nodes}


def perturbed_transfer_apply(fmap, potential, noise: NoiseModel, g, x):
    noise.check(fmap)
    nodes, weights = noise.quadrature
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.shape(x))
    for w_j, o_j in zip(weights, nodes):
        out = out + w_j * apply_transfer(fmap, potential, g, np.mod(x - o_j, 1.0))
    return out if np.ndim(x) else float(out)


def perturbed_matrix(fmap, potential, noise: NoiseModel, depth, M=None):
    """Row w of the result is sum_j w_j * row of M at the cylinder containing mid(w) - w_j."""
    noise.check(fmap)
    M = transfer_matrix(fmap, potential, depth) if M is None else M
    if noise.eps == 0:
        return M
    cyl = cylinders(fmap, depth)
    nodes, weights = noise.quadrature
    n = len(cyl)
    rows = np.tile(np.arange(n), len(nodes))
    cols = np.concatenate([cyl.locate(np.mod(cyl.mid - o, 1.0)) for o in nodes])
    vals = np.repeat(weights, n)
    S = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return (S @ M).tocsr()


@dataclass(frozen=True)
class PerturbedSpectrum:
    noise: NoiseModel
    lam: float
    h: np.ndarray
    nu: np.ndarray


def perturbed_spectrum(fmap, potential, noise, depth):
    sd = leading_spectrum(perturbed_matrix(fmap, potential, noise, depth), gap=False)
    return PerturbedSpectrum(noise, sd.lam, sd.h, sd.nu)


def perturbed_ly_constants(fmap, potential, noise: NoiseModel, depth=8, lam=None):
    """(Theta_eps, C_eps): the translations leave derivatives unchanged, only lambda moves."""
    noise.check(fmap)
    lam0 = spectrum(fmap, potential, depth, gap=False).lam if lam is None else lam
    theta, C = lasota_yorke_constants(fmap, potential, lam0)
    lam_eps = lam0 if noise.eps == 0 else perturbed_spectrum(fmap, potential, noise, depth).lam
    return theta * lam0 / lam_eps, C * lam0 / lam_eps


@dataclass
class OperatorDistance:
    defects: np.ndarray
    C: float
    theta: float


def operator_distance(fmap, potential, noise: NoiseModel, n, test_bank, depth=8):
    """lambda^-k sup |L_eps^k g - L^k g| over the bank for k = 1..n, on the depth-D cylinder model."""
    M = transfer_matrix(fmap, potential, depth)
    P = perturbed_matrix(fmap, potential, noise, depth, M)
    lam = leading_spectrum(M, gap=False).lam
    mid = cylinders(fmap, depth).mid
    G = np.column_stack([np.asarray(g(mid), dtype=float) for g in test_bank])
    a, b = G.copy(), G.copy()
    defects = np.empty(n)
    for k in range(n):
        a = (M @ a) / lam
        b = (P @ b) / lam
        defects[k] = float(np.max(np.abs(a - b)))
    ks = np.arange(1, n + 1)
    pos = defects > 0
    if pos.sum() >= 2:
        slope, icept = np.polyfit(ks[pos], np.log(defects[pos]), 1)
        theta = math.exp(slope)
        C = float(np.max(defects[pos] / theta ** ks[pos]))
    else:
        theta, C = 0.0, float(defects.max())
    return OperatorDistance(defects, C, theta)


@dataclass
class StabilityPoint:
    eps: float
    l1: float
    theta_eps: float


def stability_curve(fmap, potential, eps_list, depth, nodes=16):
    """L1(nu) distance between the perturbed and deterministic densities for each eps."""
    base = spectrum(fmap, potential, depth, gap=False)
    theta, _ = lasota_yorke_constants(fmap, potential, base.lam)
    out = []
    for eps in eps_list:
        noise = NoiseModel(float(eps), nodes)
        ps = perturbed_spectrum(fmap, potential, noise, depth)
        h_eps = ps.h / float(base.nu @ ps.h)
        out.append(StabilityPoint(float(eps), float(base.nu @ np.abs(h_eps - base.h)),
                                  theta * base.lam / ps.lam))
    return out
