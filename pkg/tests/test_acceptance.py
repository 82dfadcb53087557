"""Acceptance suite: one test per criterion, each recording a one-line verdict."""
import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import GOLD, indicator
from thermoform.cli import main as cli_main
from thermoform.cli import random_cone_element
from thermoform.config import RunConfig
from thermoform.cones import (Grid, cone_constants, cone_metric, contraction_trace, grid_seminorm,
                              lasota_yorke_constants)
from thermoform.dynamics import default_c
from thermoform.equilibrium import (conditional_expectation_check, equilibrium_measure,
                                    pressure_identity_defect, rokhlin_entropy, variational_scan,
                                    weak_gibbs_ratios)
from thermoform.perturbation import NoiseModel, perturbed_matrix, perturbed_transfer_apply, stability_curve
from thermoform.statistics import (clt_empirical_test, correlation, decay_fit, deviation_rate,
                                   green_kubo_variance, rate_bound_scan)
from thermoform.symbolic import count_frequent_words, pliss_times, stirling_kk, stirling_rate_bound
from thermoform.transfer import (apply_transfer, jacobian_check, leading_spectrum, spectrum,
                                 transfer_matrix, weak_gibbs_constant, coarsen)


def note(request, text):
    request.node.user_properties.append(("detail", text))
    print(text)


def bernoulli_kl(x, p):
    return x * math.log(x / p) + (1 - x) * math.log((1 - x) / (1 - p))


@pytest.fixture(scope="module")
def two_shift_state(doubling, two_shift):
    return equilibrium_measure(spectrum(doubling, two_shift, 10))


@pytest.fixture(scope="module")
def bench_tent_spec(bench, tent):
    return spectrum(bench, tent, 10)


@pytest.fixture(scope="module")
def bench_zero_spec(bench, zero):
    return spectrum(bench, zero, 10)


@pytest.mark.criterion(1, "closed-form spectral oracle")
def test_closed_form_spectrum(request, doubling, golden, two_shift, zero):
    sd = spectrum(doubling, two_shift, 10)
    nu1 = coarsen(sd.cylinders, sd.nu, 1)
    h_spread = float(sd.h.max() - sd.h.min())
    gold = spectrum(golden, zero, 12)
    lam_err = abs(sd.lam - 3.0) / 3.0
    gold_err = abs(gold.lam - GOLD)
    nu_err = float(np.max(np.abs(nu1 - [1 / 3, 2 / 3])))
    note(request, f"2-shift lambda rel err {lam_err:.1e}, nu err {nu_err:.1e}, h spread {h_spread:.1e}, "
                  f"gap {sd.gap:.1e}; golden lambda err {gold_err:.1e}")
    assert lam_err <= 1e-12
    assert nu_err <= 1e-12
    assert h_spread <= 1e-12
    assert sd.gap == 0.0
    assert gold_err <= 1e-10


@pytest.mark.criterion(2, "pressure identity")
def test_pressure_identity(request, two_shift_state, bench_tent_spec, bench_zero_spec):
    ent, integ, d2 = pressure_identity_defect(two_shift_state)
    _, _, dt = pressure_identity_defect(equilibrium_measure(bench_tent_spec))
    _, _, dz = pressure_identity_defect(equilibrium_measure(bench_zero_spec))
    note(request, f"2-shift {ent:.5f} + {integ:.5f} - log 3 = {d2:.1e}; benchmark tent {dt:.1e}, zero {dz:.1e}")
    assert abs(ent - 0.63651) < 5e-6 and abs(integ - 0.46210) < 5e-6
    assert abs(d2) <= 1e-12
    assert abs(dt) <= 1e-5 and abs(dz) <= 1e-5


@pytest.mark.criterion(3, "Jacobian of the conformal measure")
def test_jacobian(request, bench, tent, bench_tent_spec, bench_zero_spec, zero):
    et = jacobian_check(bench_tent_spec.nu, bench, tent, bench_tent_spec.lam, 10)
    ez = jacobian_check(bench_zero_spec.nu, bench, zero, bench_zero_spec.lam, 10)
    note(request, f"max relative defect over depths <= 10: tent {et:.1e}, zero {ez:.1e}")
    assert et <= 1e-6 and ez <= 1e-6


@pytest.mark.criterion(4, "weak Gibbs bounds on hyperbolic cylinders")
def test_weak_gibbs(request, bench, tent, bench_tent_spec, doubling, two_shift):
    c = default_c(bench, 0.9)
    nu1 = coarsen(bench_tent_spec.cylinders, bench_tent_spec.nu, 1)
    K = weak_gibbs_constant(bench, tent, c, nu1)
    lo, hi, count = np.inf, -np.inf, 0
    for n in range(1, 11):
        r = weak_gibbs_ratios(bench_tent_spec, n, c)
        count += r.size
        lo, hi = min(lo, r.min()), max(hi, r.max())
    sd2 = spectrum(doubling, two_shift, 10)
    r2 = np.concatenate([weak_gibbs_ratios(sd2, n, 0.1) for n in range(1, 11)])
    err2 = float(np.max(np.abs(r2 - 1.0)))
    note(request, f"{count} certified cylinders, ratios in [{lo:.4f}, {hi:.4f}], K = {K:.3f}; "
                  f"2-shift max |ratio - 1| = {err2:.1e}")
    assert count > 0
    assert 1.0 / K <= lo and hi <= K
    assert err2 <= 1e-12


def pliss_oracle(b, c1):
    n = len(b)
    return tuple(m for m in range(1, n + 1)
                 if all(sum(b[k:m]) >= c1 * (m - k) for k in range(m)))


@pytest.mark.criterion(5, "Pliss lemma against brute force")
def test_pliss(request):
    rng = np.random.default_rng(5)
    A, c1, c2 = 1.0, 0.125, 0.25
    mism, thin = 0, 0
    trials = 10_000
    for _ in range(trials):
        n = int(rng.integers(1, 40))
        b = rng.integers(-32, 33, n) / 32.0  # dyadic values keep partial sums exact
        deficit = c2 * n - b.sum()
        if deficit > 0:  # lift the smallest entries until sum >= c2 n
            for i in np.argsort(b):
                add = min(A - b[i], deficit)
                b[i] += math.ceil(add * 32) / 32.0
                deficit = c2 * n - b.sum()
                if deficit <= 0:
                    break
        b = np.minimum(b, A)
        res = pliss_times(b, A, c1, c2)
        if res.indices != pliss_oracle(list(b), c1):
            mism += 1
        if not res.density_ok:
            thin += 1
    note(request, f"{trials} sequences: {mism} mismatches, {thin} below theta*n")
    assert mism == 0 and thin == 0


def bad_symbol_counts(p, q, n):
    """Number of bad symbols (digits < q) in every base-(p+q) word of length n."""
    codes = np.arange((p + q) ** n)
    bad = np.zeros(codes.size, dtype=np.int64)
    for _ in range(n):
        codes, digit = np.divmod(codes, p + q)
        bad += digit < q
    return bad


def naive_count(p, q, gamma, n):
    threshold = Fraction(repr(gamma)) * n
    return sum(int(c) for b, c in zip(*np.unique(bad_symbol_counts(p, q, n), return_counts=True)) if b > threshold)


@pytest.mark.criterion(6, "counting words with many bad symbols")
def test_counting(request):
    mism = 0
    for (p, q), n, g in itertools.product([(2, 1), (1, 2), (2, 2)], range(1, 11), [0.5, 0.7, 0.9]):
        if count_frequent_words(p, q, g, n)[0] != naive_count(p, q, g, n):
            mism += 1
    for g in [0.5, 0.7, 0.9]:
        if count_frequent_words(2, 1, g, 12)[0] != naive_count(2, 1, g, 12):
            mism += 1
    gammas = [0.5, 0.7, 0.9, 0.99]
    rates = [count_frequent_words(2, 1, g, 200)[1] for g in gammas]
    bounds = [stirling_rate_bound(2, 1, stirling_kk(g)) for g in gammas]
    rates2 = [count_frequent_words(2, 2, g, 200)[1] for g in gammas]
    note(request, f"{mism} count mismatches; n=200 rates {np.round(rates, 4).tolist()} "
                  f"vs bounds {np.round(bounds, 4).tolist()}; q=2 rates {np.round(rates2, 4).tolist()}")
    assert mism == 0
    assert all(r <= b for r, b in zip(rates, bounds))
    assert all(np.diff(rates) < 0) and all(np.diff(rates2) < 0)
    # approach to log q from above
    assert rates[-1] - math.log(1) < rates[0] - math.log(1)
    assert math.log(2) < rates2[-1] < rates2[0]


def random_pl(rng, nodes):
    xs = np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, nodes - 2)]))
    v = rng.uniform(-1, 1, nodes)
    slopes = np.abs(np.diff(v) / np.diff(xs))
    return (lambda x: np.interp(x, xs, v)), float(slopes.max()), float(np.abs(v).max())


@pytest.mark.criterion(7, "Lasota-Yorke inequality")
def test_lasota_yorke(request, bench, zero, tent, bench_tent_spec):
    theta0, _ = lasota_yorke_constants(bench, zero, 3.0)
    oracle = (2.0 / 3.0 + 1.1) / 3.0
    theta, C = lasota_yorke_constants(bench, tent, bench_tent_spec.lam)
    grid = Grid(bench.breaks, 64, 16)
    rng = np.random.default_rng(7)
    worst = np.inf
    for _ in range(100):
        g, semi, sup = random_pl(rng, int(rng.integers(3, 20)))
        Lg = lambda x: apply_transfer(bench, tent, g, x) / bench_tent_spec.lam  # noqa: E731
        worst = min(worst, theta * semi + C * sup - grid_seminorm(Lg, grid))
    note(request, f"Theta(zero) = {theta0:.12f} (oracle {oracle:.12f}); tent Theta = {theta:.4f}, "
                  f"C = {C:.4f}, min slack over 100 functions {worst:.3e}")
    assert abs(theta0 - oracle) <= 1e-12
    assert abs(theta0 - 0.5889) < 5e-5
    assert worst >= 0


@pytest.mark.criterion(8, "cone contraction")
def test_cone_contraction(request, bench, tent, bench_tent_spec):
    lam = bench_tent_spec.lam
    cc = cone_constants(bench, tent, lam)
    grid = Grid(bench.breaks, 24, 48)
    rng = np.random.default_rng(8)
    sL = cc.sigma * cc.L
    max_psi, max_ratio = 0.0, 0.0
    for _ in range(50):
        g1 = random_cone_element(rng, sL, grid)
        g2 = random_cone_element(rng, sL, grid)
        psi0 = cone_metric(g1, g2, cc.L, grid)
        Lg1 = lambda x: apply_transfer(bench, tent, g1, x)  # noqa: E731
        Lg2 = lambda x: apply_transfer(bench, tent, g2, x)  # noqa: E731
        psi1 = cone_metric(Lg1, Lg2, cc.L, grid)
        max_psi = max(max_psi, psi0)
        max_ratio = max(max_ratio, psi1 / psi0)
    g = random_cone_element(rng, sL, grid)
    tr = contraction_trace(bench, tent, g, lambda x: np.ones(np.shape(x)), lam, cc.L, grid, 6,
                           integral=bench_tent_spec.nu_integral)
    dominated = bool(np.all(tr.sup_gap[1:] <= tr.gap_bound[1:] * (1 + 1e-6) + 1e-9))
    note(request, f"max Psi {max_psi:.3f} <= Delta {cc.delta:.3f}; max step ratio {max_ratio:.3f} "
                  f"<= tanh(Delta/4) + 0.02 = {cc.rate + 0.02:.4f}; sup-norm trace dominated: {dominated}")
    assert max_psi <= cc.delta
    assert max_ratio <= cc.rate + 0.02
    assert dominated


@pytest.mark.criterion(9, "decay of correlations")
def test_decay(request, two_shift_state, bench_zero_spec, doubling):
    u = indicator(0.0, 0.5)
    c2 = correlation(two_shift_state, u, u, 10).values
    bern = float(np.max(np.abs(c2[1:])))
    st = equilibrium_measure(bench_zero_spec)
    s = lambda x: np.sin(2 * np.pi * np.asarray(x))  # noqa: E731
    fit = decay_fit(correlation(st, s, s, 10))
    gap = bench_zero_spec.gap
    note(request, f"Bernoulli max |C(n>=1)| = {bern:.1e}; benchmark fitted tau = {fit.tau:.4f} "
                  f"vs spectral ratio {gap:.4f} + 0.05")
    assert bern <= 1e-12
    assert fit.resolved and fit.tau <= gap + 0.05


@pytest.mark.criterion(10, "central limit theorem")
def test_clt(request, two_shift_state):
    u = indicator(0.0, 0.5)
    gk = green_kubo_variance(two_shift_state, u, 10)
    res = clt_empirical_test(two_shift_state, u, 10_000, 10_000, seed=10, sigma2=gk.sigma2, threads=4)
    cob = lambda x: u(np.mod(2 * np.asarray(x), 1.0)) - u(x)  # noqa: E731
    gk_cob = green_kubo_variance(two_shift_state, cob, 10)
    note(request, f"sigma^2 - 2/9 = {gk.sigma2 - 2 / 9:.1e}; KS = {res.ks:.4f}; "
                  f"coboundary degenerate: {gk_cob.degenerate}")
    assert abs(gk.sigma2 - 2 / 9) <= 1e-10
    assert res.ks <= 0.02
    assert gk_cob.degenerate


@pytest.mark.criterion(11, "large deviations")
def test_large_deviations(request, doubling, two_shift):
    st = equilibrium_measure(spectrum(doubling, two_shift, 2))
    u = indicator(0.0, 0.5)
    curve = deviation_rate(st, u, 0.2, [50, 100, 200, 400, 800, 1600])
    target = -min(bernoulli_kl(1 / 3 + 0.2, 1 / 3), bernoulli_kl(1 / 3 - 0.2, 1 / 3))
    bound = rate_bound_scan(st, u, 0.2)
    note(request, f"extrapolated rate {curve.limit:.4f} vs {target:.4f}; scan bound {bound.value:.4f}")
    assert curve.resolved and abs(curve.limit - target) <= 0.05
    assert abs(bound.value - target) <= 1e-3
    assert bound.feasible and bound.value < 0


@pytest.mark.criterion(12, "Rokhlin formula")
def test_rokhlin(request, two_shift_state, golden, zero, bench_tent_spec):
    e2 = rokhlin_entropy(two_shift_state)
    exact2 = -(1 / 3 * math.log(1 / 3) + 2 / 3 * math.log(2 / 3))
    eg = rokhlin_entropy(equilibrium_measure(spectrum(golden, zero, 12)))
    st = equilibrium_measure(bench_tent_spec)
    ce = conditional_expectation_check(st, lambda x: np.cos(2 * np.pi * np.asarray(x)), 10)
    note(request, f"2-shift entropy err {e2 - exact2:.1e}; golden err {eg - math.log(GOLD):.1e}; "
                  f"conditional expectation defect {ce:.1e}")
    assert abs(e2 - exact2) <= 1e-6
    assert abs(eg - math.log(GOLD)) <= 1e-6
    assert ce <= 1e-6


@pytest.mark.criterion(13, "stochastic stability")
def test_stochastic_stability(request, bench, tent, doubling, zero):
    curve = stability_curve(bench, tent, [1e-2, 5e-3, 2.5e-3], 8)
    l1 = [p.l1 for p in curve]
    M = transfer_matrix(bench, tent, 8)
    P0 = perturbed_matrix(bench, tent, NoiseModel(0.0), 8, M)
    base, pert = leading_spectrum(M), leading_spectrum(P0)
    exact0 = (P0 is M and base.lam == pert.lam and np.array_equal(base.h, pert.h)
              and np.array_equal(base.nu, pert.nu))
    xs = np.linspace(0, 1, 257)[:-1]
    g = lambda x: np.sin(4 * np.pi * np.asarray(x))  # noqa: E731
    a = apply_transfer(doubling, zero, g, xs)
    b0 = perturbed_transfer_apply(doubling, zero, NoiseModel(0.0), g, xs)
    exact0 = exact0 and np.array_equal(a, b0)
    eps = 0.01
    damp = math.sin(2 * math.pi * eps) / (2 * math.pi * eps)
    four = float(np.max(np.abs(perturbed_transfer_apply(doubling, zero, NoiseModel(eps), g, xs)
                                - damp * 2 * np.sin(2 * np.pi * xs))))
    note(request, f"L1 distances {[f'{v:.2e}' for v in l1]}; eps=0 bit-exact: {exact0}; "
                  f"Fourier damping error {four:.1e}")
    assert l1[0] > l1[1] > l1[2]
    assert exact0
    assert four <= 1e-8


@pytest.mark.criterion(14, "variational principle over Markov measures")
def test_variational(request, doubling, two_shift, golden, zero, bench):
    worst_excess, worst_weights = -np.inf, 0.0
    for fmap, pot, depth in [(doubling, two_shift, 8), (golden, zero, 10), (bench, zero, 8)]:
        st = equilibrium_measure(spectrum(fmap, pot, depth))
        res = variational_scan(fmap, pot, st.pressure, mu1=st.marginal(1))
        worst_excess = max(worst_excess, res.defect)
        worst_weights = max(worst_weights, res.weight_error)
    note(request, f"max sup - P = {worst_excess:.1e}; max argmax weight error {worst_weights:.1e}")
    assert worst_excess <= 1e-6
    assert worst_weights <= 1e-6


@pytest.mark.criterion(15, "reproducibility across thread counts")
def test_reproducibility(request, tmp_path):
    cfg = tmp_path / "cfg.json"
    src = {"map": {"breaks": [0.0, 0.5, 1.0], "branches": [{"kind": "affine", "slope": 2.0},
                                                            {"kind": "affine", "slope": 2.0, "offset": -1.0}]},
           "potential": {"kind": "constant_per_atom", "params": [0.0, "log(2)"]},
           "observable": {"kind": "indicator", "atom": 0}, "depth": 8, "N": 6,
           "clt_n": 400, "clt_samples": 5000, "ldp_n": [20, 40, 80]}
    RunConfig.from_dict(src)
    cfg.write_text(json.dumps(src))
    runs = [("decay", ["--estimator", "orbit"], "decay.csv"), ("clt", [], "clt.csv"),
            ("ldp", ["--method", "mc"], "ldp.csv")]
    same = []
    for cmd, extra, name in runs:
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"{cmd}-{threads}"
            assert cli_main([cmd, str(cfg), "--out", str(out), "--threads", str(threads),
                             "--seed", "15", *extra]) == 0
            outs.append((out / name).read_bytes())
        same.append(outs[0] == outs[1])
    note(request, f"byte-identical CSVs for threads 1 vs 4: {dict(zip([r[0] for r in runs], same))}")
    assert all(same)
