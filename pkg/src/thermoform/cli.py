"""Command-line front end: ``thermoform <subcommand> [config] [flags]``.

Every run writes ``manifest.json`` plus the subcommand's CSV/JSON files into
the output directory.  Exit status: 0 success, 1 numerical failure,
2 hypothesis violation, 64 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .errors import ContractError, HorizonError, HypothesisViolation, ThermoformError

EXIT_OK, EXIT_NUMERIC, EXIT_HYPOTHESIS, EXIT_USAGE = 0, 1, 2, 64

CSV_COLUMNS = {
    "verify": "report.json only",
    "pressure": "pressure.csv: lambda, P, gap, bracket_lo, bracket_hi, bracket_width",
    "density": "density.csv: word, left, width, h, nu",
    "cones": "cones.csv: n, psi, ratio, sup_gap, gap_bound",
    "pliss": "pliss.csv: index, value",
    "hyptimes": "hyptimes.csv: index, value",
    "count": "count.csv: gamma, n, count, rate, stirling_bound",
    "equilibrium": "equilibrium.csv: word, mu, g",
    "scan": "scan.csv: P_ij..., entropy, integral, value",
    "decay": "decay.csv: n, C, stderr",
    "clt": "clt.csv: sample_quantile, normal_quantile",
    "ldp": "ldp.csv: n, probability, rate",
    "perturb": "perturb.csv: eps, l1_distance, theta_eps, defect_envelope",
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def clean(obj):
    """JSON-safe copy: arrays to lists, numpy scalars to Python, NaN/inf to null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj, **kw):
    return json.dumps(clean(obj), sort_keys=True, allow_nan=False, **kw)


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=2) + "\n")


def word_str(w):
    return "-".join(str(int(s)) for s in w)


# ---------------------------------------------------------------------------
# subcommands; each returns (exit status, summary dict)

def cmd_verify(cfg, args, out):
    from .dynamics import verify_hypotheses
    fmap = cfg.build_map()
    rep = verify_hypotheses(fmap, cfg.build_potential(fmap), cfg.gamma, cfg.c,
                            c0_method=cfg.c0_method, count_n=cfg.count_n, gamma0=cfg.gamma0)
    print(rep.format_table())
    write_json(os.path.join(out, "report.json"), rep.to_dict())
    print(dumps(rep.to_dict()))
    if not rep.passed:
        print("violated: " + ", ".join(rep.failures), file=sys.stderr)
        return EXIT_HYPOTHESIS, rep.to_dict()
    return EXIT_OK, rep.to_dict()


def cmd_pressure(cfg, args, out):
    from .transfer import leading_spectrum, transfer_matrix
    fmap = cfg.build_map()
    pot = cfg.build_potential(fmap)
    M = transfer_matrix(fmap, pot, cfg.depth, cfg.depth_cap)
    sd = leading_spectrum(M, tol=cfg.rtol)
    print(f"P = {sd.pressure:.7f}")
    print(f"lambda = {fmt(sd.lam)}")
    print(f"gap = {fmt(sd.gap)}")
    print(f"bracket = [{fmt(sd.bracket[0])}, {fmt(sd.bracket[1])}] (relative width {fmt(sd.bracket_width)})")
    write_csv(os.path.join(out, "pressure.csv"),
              ["lambda", "P", "gap", "bracket_lo", "bracket_hi", "bracket_width"],
              [[sd.lam, sd.pressure, sd.gap, sd.bracket[0], sd.bracket[1], sd.bracket_width]])
    if args.dump_matrix:
        coo = M.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(args.dump_matrix, "w") as fh:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {fmt(v)}\n")
    return EXIT_OK, {"lambda": sd.lam, "P": sd.pressure, "gap": sd.gap}


def cmd_density(cfg, args, out):
    from .transfer import spectrum
    fmap = cfg.build_map()
    sd = spectrum(fmap, cfg.build_potential(fmap), cfg.depth, tol=cfg.rtol, gap=False, cap=cfg.depth_cap)
    cyl = sd.cylinders
    rows = ([word_str(cyl.words[r]), cyl.left[r], cyl.right[r] - cyl.left[r], sd.h[r], sd.nu[r]]
            for r in range(len(cyl)))
    write_csv(os.path.join(out, "density.csv"), ["word", "left", "width", "h", "nu"], rows)
    print(f"wrote {len(cyl)} cylinders at depth {cfg.depth}")
    return EXIT_OK, {"cylinders": len(cyl), "lambda": sd.lam}


def random_cone_element(rng, sigma_L, grid, alpha=1.0, nodes=12):
    """1 + s*w with w a random circle-continuous piecewise-linear function, scaled into the cone."""
    from .cones import grid_seminorm
    xs = np.linspace(0.0, 1.0, nodes + 1)
    v = rng.uniform(-1.0, 1.0, nodes + 1)
    v[-1] = v[0]

    def w(x):
        return np.interp(np.mod(np.asarray(x, dtype=float), 1.0), xs, v)

    sw = grid_seminorm(w, grid, alpha)
    s = min(0.5, 0.9 * sigma_L / (sw + 0.9 * sigma_L))
    return lambda x: 1.0 + s * w(x)


def cmd_cones(cfg, args, out):
    from .cones import Grid, cone_constants, contraction_trace
    from .transfer import spectrum
    fmap = cfg.build_map()
    pot = cfg.build_potential(fmap)
    sd = spectrum(fmap, pot, min(cfg.depth, 10), tol=cfg.rtol, gap=False)
    lam = sd.lam
    cc = cone_constants(fmap, pot, lam, theta0=cfg.theta0, L=cfg.L)
    table = cc.to_dict() | {"tanh(delta/4)": cc.rate}
    for k, v in table.items():
        print(f"{k:<14} {fmt(v)}")
    grid = Grid(fmap.breaks, min(cfg.grid_per_atom, 32), min(cfg.z_samples, 64))
    g = random_cone_element(np.random.default_rng(cfg.seed), cc.sigma * cc.L, grid, pot.alpha)
    tr = contraction_trace(fmap, pot, g, lambda x: np.ones(np.shape(x)), lam, cc.L, grid, cfg.cone_steps,
                          integral=sd.nu_integral)
    write_csv(os.path.join(out, "cones.csv"), ["n", "psi", "ratio", "sup_gap", "gap_bound"],
              zip(range(cfg.cone_steps + 1), tr.psi, tr.ratios, tr.sup_gap, tr.gap_bound))
    write_json(os.path.join(out, "cones.json"), table)
    return EXIT_OK, table


def _read_sequence(path):
    vals = []
    with open(path) as fh:
        for row in csv.reader(fh):
            if not row or not row[-1].strip():
                continue
            try:
                vals.append(float(row[-1]))
            except ValueError:
                continue  # header
    if not vals:
        raise UsageError(f"no numbers found in {path}")
    return np.array(vals)


def cmd_pliss(cfg, args, out):
    from .symbolic import pliss_times
    b = _read_sequence(args.sequence)
    A = args.A if args.A is not None else float(b.max())
    res = pliss_times(b, A, args.c1, args.c2)
    write_csv(os.path.join(out, "pliss.csv"), ["index", "value"], [[i, b[i - 1]] for i in res.indices])
    summary = {"n": res.n, "count": len(res.indices), "theta": res.theta, "density_ok": res.density_ok,
               "A": A, "c1": args.c1, "c2": args.c2}
    write_json(os.path.join(out, "pliss.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def cmd_hyptimes(cfg, args, out):
    from .symbolic import hyperbolic_times
    fmap = cfg.build_map()
    c = args.c if args.c is not None else cfg.c
    if c is None:
        raise UsageError("hyptimes needs --c (or c in the config)")
    times = hyperbolic_times(fmap, args.x, args.n, c)
    write_csv(os.path.join(out, "hyptimes.csv"), ["index", "value"], [[i, 1] for i in times])
    summary = {"x": args.x, "n": args.n, "c": c, "count": len(times)}
    write_json(os.path.join(out, "hyptimes.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def cmd_count(cfg, args, out):
    from .symbolic import count_frequent_words, stirling_kk, stirling_rate_bound
    count, rate = count_frequent_words(args.p, args.q, args.gamma, args.n)
    kk = stirling_kk(args.gamma)
    bound = stirling_rate_bound(args.p, args.q, kk) if kk >= 1 else float("nan")
    write_csv(os.path.join(out, "count.csv"), ["gamma", "n", "count", "rate", "stirling_bound"],
              [[args.gamma, args.n, count, rate, bound]])
    summary = {"p": args.p, "q": args.q, "gamma": args.gamma, "n": args.n, "count": str(count),
               "rate": rate, "stirling_kk": kk, "stirling_bound": bound}
    write_json(os.path.join(out, "count.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def _state(cfg, depth=None):
    from .equilibrium import equilibrium_measure
    from .transfer import spectrum
    fmap = cfg.build_map()
    pot = cfg.build_potential(fmap)
    return equilibrium_measure(spectrum(fmap, pot, depth or cfg.depth, tol=cfg.rtol, cap=cfg.depth_cap))


def cmd_equilibrium(cfg, args, out):
    from .equilibrium import cylinder_g, pressure_identity_defect
    st = _state(cfg)
    entropy, integral, defect = pressure_identity_defect(st)
    summary = {"P": st.pressure, "entropy": entropy, "integral_phi": integral, "identity_defect": defect,
               "invariance_defect": st.invariance_defect}
    for k, v in summary.items():
        print(f"{k:<18} {fmt(v)}")
    cyl = st.cylinders
    g = cylinder_g(st)
    write_csv(os.path.join(out, "equilibrium.csv"), ["word", "mu", "g"],
              ([word_str(cyl.words[r]), st.mu[r], g[r]] for r in range(len(cyl))))
    write_json(os.path.join(out, "equilibrium.json"), summary)
    return EXIT_OK, summary


def cmd_scan(cfg, args, out):
    from .equilibrium import variational_scan
    st = _state(cfg)
    res = variational_scan(st.fmap, st.potential, st.pressure, density=cfg.scan_density,
                           mu1=st.marginal(1), keep_table=True)
    d = st.fmap.n_atoms
    header = [f"P_{i}{j}" for i in range(d) for j in range(d)] + ["entropy", "integral", "value"]
    write_csv(os.path.join(out, "scan.csv"), header,
              (list(c.P.ravel()) + [c.entropy, c.integral, c.value] for c in res.table))
    summary = {"sup": res.value, "P": st.pressure, "defect": res.defect, "argmax": res.best.P,
               "argmax_weights": res.best.pi, "mu_weights": st.marginal(1), "weight_error": res.weight_error}
    write_json(os.path.join(out, "scan.json"), summary)
    print(f"sup = {fmt(res.value)}  P = {fmt(st.pressure)}  defect = {fmt(res.defect)}")
    return EXIT_OK, summary


def cmd_decay(cfg, args, out):
    from .statistics import correlation, decay_fit
    st = _state(cfg)
    u = cfg.build_observable(st.fmap)
    kw = {}
    if args.estimator == "orbit":
        kw = {"seed": cfg.seed, "threads": cfg.effective_threads}
    try:
        series = correlation(st, u, u, cfg.N, args.estimator, **kw)
    except HorizonError as exc:
        raise UsageError(f"{exc} (raise depth, lower --N, or use --estimator orbit)") from exc
    write_csv(os.path.join(out, "decay.csv"), ["n", "C", "stderr"],
              ([n, series.values[n], series.stderr[n]] for n in range(cfg.N + 1)))
    fit = decay_fit(series)
    summary = {"tau": fit.tau, "K": fit.K, "resolved": fit.resolved, "gap": st.spectral.gap,
               "estimator": args.estimator}
    write_json(os.path.join(out, "decay.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def cmd_clt(cfg, args, out):
    from scipy import stats as sps
    from .statistics import clt_empirical_test, green_kubo_variance
    st = _state(cfg)
    u = cfg.build_observable(st.fmap)
    gk = green_kubo_variance(st, u, min(cfg.cutoff, st.depth))
    if gk.degenerate:
        summary = {"degenerate": True, "sigma2": gk.sigma2, "tail": gk.tail}
        write_json(os.path.join(out, "clt.json"), summary)
        write_csv(os.path.join(out, "clt.csv"), ["sample_quantile", "normal_quantile"], [])
        print(dumps(summary))
        return EXIT_OK, summary
    res = clt_empirical_test(st, u, cfg.clt_n, cfg.clt_samples, seed=cfg.seed, sigma2=gk.sigma2,
                             threads=cfg.effective_threads)
    probs = (np.arange(1, 100)) / 100.0
    sq = np.quantile(res.normalized_sums, probs)
    nq = sps.norm.ppf(probs, scale=math.sqrt(gk.sigma2))
    write_csv(os.path.join(out, "clt.csv"), ["sample_quantile", "normal_quantile"], zip(sq, nq))
    summary = {"degenerate": False, "ks": res.ks, "sigma2": gk.sigma2, "sigma_hat": res.sigma_hat,
               "tail": gk.tail, "n": cfg.clt_n, "samples": cfg.clt_samples}
    write_json(os.path.join(out, "clt.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def cmd_ldp(cfg, args, out):
    from .statistics import deviation_rate, rate_bound_scan
    st = _state(cfg, depth=args.model_depth)
    u = cfg.build_observable(st.fmap)
    kw = {} if args.method == "exact" else {"seed": cfg.seed, "threads": cfg.effective_threads}
    curve = deviation_rate(st, u, cfg.rho, cfg.ldp_n, method=args.method, **kw)
    write_csv(os.path.join(out, "ldp.csv"), ["n", "probability", "rate"],
              zip(curve.n, curve.prob, curve.rate))
    bound = rate_bound_scan(st, u, cfg.rho, density=cfg.scan_density)
    summary = {"limit": curve.limit, "resolved": curve.resolved, "rate_bound": bound.value,
               "bound_feasible": bound.feasible, "rho": cfg.rho}
    write_json(os.path.join(out, "ldp.json"), summary)
    print(dumps(summary))
    return EXIT_OK, summary


def cmd_perturb(cfg, args, out):
    from .perturbation import NoiseModel, operator_distance, stability_curve
    fmap = cfg.build_map()
    pot = cfg.build_potential(fmap)
    eps_list = args.eps_list if args.eps_list is not None else cfg.eps_list
    curve = stability_curve(fmap, pot, eps_list, cfg.depth, cfg.noise_nodes)
    bank = [lambda x: np.cos(2 * np.pi * np.asarray(x)) / (1 + 2 * np.pi),
            lambda x: np.sin(2 * np.pi * np.asarray(x)) / (1 + 2 * np.pi),
            lambda x: np.minimum(x, 1 - np.asarray(x)) / 1.5]
    rows = []
    for pt in curve:
        od = operator_distance(fmap, pot, NoiseModel(pt.eps, cfg.noise_nodes), 4, bank,
                               depth=min(cfg.depth, 8))
        rows.append([pt.eps, pt.l1, pt.theta_eps, od.C])
    write_csv(os.path.join(out, "perturb.csv"), ["eps", "l1_distance", "theta_eps", "defect_envelope"], rows)
    summary = {"noise_model": NoiseModel(0.0, cfg.noise_nodes).to_dict() | {"eps": eps_list},
               "points": [dict(zip(["eps", "l1", "theta_eps", "defect_envelope"], r)) for r in rows]}
    write_json(os.path.join(out, "perturb.json"), summary)
    for r in rows:
        print(" ".join(fmt(v) for v in r))
    return EXIT_OK, summary


COMMANDS = {
    "verify": cmd_verify, "pressure": cmd_pressure, "density": cmd_density, "cones": cmd_cones,
    "pliss": cmd_pliss, "hyptimes": cmd_hyptimes, "count": cmd_count, "equilibrium": cmd_equilibrium,
    "scan": cmd_scan, "decay": cmd_decay, "clt": cmd_clt, "ldp": cmd_ldp, "perturb": cmd_perturb,
}
NO_CONFIG = {"pliss", "count"}


def build_parser():
    p = Parser(prog="thermoform", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="subcommand", parser_class=Parser)
    sub.required = True

    def add(name, help_text):
        sp_ = sub.add_parser(name, help=help_text, description=f"{help_text}  Output: {CSV_COLUMNS[name]}")
        if name not in NO_CONFIG:
            sp_.add_argument("config", help="JSON run configuration")
        sp_.add_argument("--out", help="output directory (default: config output_dir or ./out)")
        sp_.add_argument("--threads", type=int, help="worker threads (default: available cores)")
        sp_.add_argument("--seed", type=int)
        sp_.add_argument("--depth", type=int)
        return sp_

    v = add("verify", "Check the standing hypotheses and constant restrictions.")
    v.add_argument("--gamma", type=float)
    v.add_argument("--c", type=float)
    v.add_argument("--c0-method", choices=["count", "stirling"])
    v.add_argument("--gamma0", type=float)
    pr = add("pressure", "Leading eigenvalue, pressure and spectral ratio of the cylinder model.")
    pr.add_argument("--dump-matrix", metavar="PATH", help="write the matrix as 'row col value' lines")
    add("density", "Density h and conformal measure nu over the depth-n cylinders.")
    cn = add("cones", "Cone constants and empirical projective contraction.")
    cn.add_argument("--L", type=float)
    cn.add_argument("--theta0", type=float)
    pl = add("pliss", "Pliss times of a sequence read from CSV (last column).")
    pl.add_argument("sequence", help="CSV file with one number per row")
    pl.add_argument("--A", type=float)
    pl.add_argument("--c1", type=float, required=True)
    pl.add_argument("--c2", type=float, required=True)
    hy = add("hyptimes", "Hyperbolic times along the orbit of x.")
    hy.add_argument("--x", type=float, required=True)
    hy.add_argument("--n", type=int, required=True)
    hy.add_argument("--c", type=float)
    co = add("count", "Count words with a large fraction of bad symbols.")
    co.add_argument("--p", type=int, required=True)
    co.add_argument("--q", type=int, required=True)
    co.add_argument("--gamma", type=float, required=True)
    co.add_argument("--n", type=int, required=True)
    add("equilibrium", "Equilibrium state, entropy and the pressure identity.")
    add("scan", "Variational scan over memory-1 Markov measures.")
    de = add("decay", "Correlation function of the configured observable.")
    de.add_argument("--estimator", choices=["quadrature", "orbit"], default="quadrature")
    de.add_argument("--N", type=int)
    cl = add("clt", "Green-Kubo variance and Kolmogorov-Smirnov test of normalized Birkhoff sums.")
    cl.add_argument("--n", type=int, dest="clt_n")
    cl.add_argument("--samples", type=int, dest="clt_samples")
    ld = add("ldp", "Large-deviation rate curve and variational rate bound.")
    ld.add_argument("--rho", type=float)
    ld.add_argument("--method", choices=["exact", "mc"], default="exact")
    ld.add_argument("--model-depth", type=int, default=2, help="model depth for the rate computation")
    pe = add("perturb", "Stability of the density under additive noise.")
    pe.add_argument("--eps-list", type=float, nargs="+")
    return p


OVERRIDES = ("threads", "seed", "depth", "gamma", "c", "c0_method", "gamma0", "L", "theta0", "N",
             "clt_n", "clt_samples", "rho")


def _versions():
    return {"thermoform": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        if args.command in NO_CONFIG:
            cfg = None
        else:
            cfg = load_config(args.config)
            overrides = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
            if overrides:
                cfg = RunConfig.from_dict(cfg.to_dict() | overrides)
        out = args.out or (cfg.output_dir if cfg else "out")
        os.makedirs(out, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"thermoform: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, summary, error = EXIT_OK, None, None
    try:
        status, summary = COMMANDS[args.command](cfg, args, out)
    except UsageError as exc:
        status, error = EXIT_USAGE, str(exc)
    except ConfigError as exc:
        status, error = EXIT_USAGE, str(exc)
    except HypothesisViolation as exc:
        status, error = EXIT_HYPOTHESIS, str(exc)
    except (ThermoformError, ArithmeticError, ContractError) as exc:
        status, error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    if error:
        print(f"thermoform: {error}", file=sys.stderr)
    manifest = {
        "manifest_version": 1,
        "subcommand": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": cfg.to_dict() if cfg else None,
        "arguments": {k: v for k, v in vars(args).items() if k != "command"},
        "seed": cfg.seed if cfg else None,
        "threads": cfg.effective_threads if cfg else None,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "exit_status": status,
        "error": error,
        "summary": summary,
    }
    write_json(os.path.join(out, "manifest.json"), manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())
