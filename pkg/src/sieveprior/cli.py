"""Command-line front end: ``sieveprior <subcommand> [options]``.

Exit status is 0 on success, 1 on a validation error (bad flag, bad config
key, missing file) and 2 on a runtime failure. Outputs are written to a
temporary file and renamed into place, so no partial file is ever visible.
"""

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile

import numpy as np

from . import __version__
from .basis import HaarBasis, SplineBasis
from .expfam import FAMILIES, make_density
from .harness import (ExperimentConfig, TruthSpec, best_spline_fit,
                      contraction_experiment, evidence_lower_bound_mc, fit_slope, make_truth,
                      rate_slope, tail_bound_mc)
from .metrics import divergences
from .sieve import ModelIndex, build_sieve, summability
from .entropy import verify_assumption_1

__all__ = ["main", "run", "ConfigError", "load_config", "atomic_write"]

OUTDIR_ENV = "SIEVEPRIOR_OUTDIR"


class ConfigError(ValueError):
    """Invalid user input; the message names the offending key."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}\n{self.format_usage()}")


def fmt(x):
    """Lossless text for floats (17 significant digits)."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def atomic_write(path, text):
    path = os.path.abspath(path)
    folder = os.path.dirname(path)
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _json_text(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _out_dir(args):
    return args.out_dir or os.environ.get(OUTDIR_ENV) or os.getcwd()


def _emit(args, name, text):
    """Write to --out if given, else into the output directory as `name`."""
    path = args.out if getattr(args, "out", None) else os.path.join(_out_dir(args), name)
    atomic_write(path, text)
    return path


# ---------------------------------------------------------------------------
# value parsing

_NUM = re.compile(r"^\s*(-)?\s*(log\s*\(?\s*([0-9.eE+-]+)\s*\)?|[0-9.eE+-]+|inf)\s*$")


def parse_number(token, key):
    """Float or log<x> (natural log), optionally negated: '1.5', 'log2', '-log(3)'."""
    m = _NUM.match(token)
    if not m:
        raise ConfigError(f"{key}: cannot parse {token!r} as a number")
    sign = -1.0 if m.group(1) else 1.0
    try:
        if m.group(3) is not None:
            return sign * math.log(float(m.group(3)))
        return sign * float(m.group(2))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {token!r} as a number") from exc


def parse_list(text, key, cast=float):
    if text is None:
        return None
    parts = [p for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: empty list")
    if cast is float:
        return [parse_number(p, key) for p in parts]
    try:
        return [cast(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


# ---------------------------------------------------------------------------
# config files

SIM_KEYS = {"truth", "family", "bounds", "rho", "n_grid", "radius", "replicates", "seed",
            "mc", "method", "eta_mode"}
TRUTH_KEYS = {"kind", "name", "scale", "s", "theta", "q", "k", "besov_alpha", "H0", "seed",
              "M", "sigma"}


def load_config(path):
    """Read a JSON run config (or a previous summary carrying a ``config`` key)."""
    if not os.path.isfile(path):
        raise ConfigError(f"config: file not found: {path}")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def validate_sim_config(cfg, family):
    unknown = set(cfg) - SIM_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config key")
    if "truth" not in cfg or not isinstance(cfg["truth"], dict):
        raise ConfigError("truth: required object")
    t = cfg["truth"]
    bad = set(t) - TRUTH_KEYS
    if bad:
        raise ConfigError(f"truth.{sorted(bad)[0]}: unknown key")
    if "kind" not in t:
        raise ConfigError("truth.kind: required")
    fam = cfg.get("family", family)
    if fam not in FAMILIES:
        raise ConfigError(f"family: must be one of {list(FAMILIES)}")
    if family == "spline-regression" and fam != "spline-regression":
        raise ConfigError("family: regression-sim needs family 'spline-regression'")
    if family != "spline-regression" and fam == "spline-regression":
        raise ConfigError("family: density-sim needs a density family")
    if (t["kind"] == "regression") != (fam == "spline-regression"):
        raise ConfigError("truth.kind: does not match the family")
    for key in ("replicates", "mc", "seed"):
        if key in cfg and (not isinstance(cfg[key], int) or isinstance(cfg[key], bool)
                           or cfg[key] < (0 if key == "seed" else 1)):
            raise ConfigError(f"{key}: must be a {'nonnegative' if key == 'seed' else 'positive'} integer")
    if "n_grid" in cfg:
        ng = cfg["n_grid"]
        if not isinstance(ng, list) or not ng or not all(isinstance(n, int) and n >= 1 for n in ng):
            raise ConfigError("n_grid: must be a nonempty list of positive integers")
    if "rho" in cfg and cfg["rho"] is not None and not (isinstance(cfg["rho"], (int, float)) and cfg["rho"] > 0):
        raise ConfigError("rho: must be positive")
    if "method" in cfg and cfg["method"] not in ("auto", "uniform", "tempered"):
        raise ConfigError("method: must be auto, uniform or tempered")
    if "eta_mode" in cfg and cfg["eta_mode"] not in ("literal", "lemma10"):
        raise ConfigError("eta_mode: must be literal or lemma10")
    if "bounds" in cfg:
        b = cfg["bounds"]
        allowed = {"lmax", "Lmax"} if fam == "haar-density" else {"kmax", "qmax", "Lmax"}
        if not isinstance(b, dict) or set(b) - allowed:
            raise ConfigError(f"bounds: allowed keys for {fam} are {sorted(allowed)}")
        for k, v in b.items():
            if not isinstance(v, int) or v < (0 if k in ("kmax", "lmax") else 1):
                raise ConfigError(f"bounds.{k}: must be an integer in range")
    if "radius" in cfg:
        r = cfg["radius"]
        if not isinstance(r, dict) or set(r) - {"c", "exponent", "log_power", "absolute"}:
            raise ConfigError("radius: allowed keys are c, exponent, log_power, absolute")
    cfg = dict(cfg)
    cfg["family"] = fam
    try:
        return ExperimentConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(args):
    fam = args.family
    bounds = {"Lmax": args.lmax}
    if fam == "haar-density":
        bounds["lmax"] = args.level_max
    else:
        bounds.update(kmax=args.kmax, qmax=args.qmax)
    bounds = {k: v for k, v in bounds.items() if v is not None}
    if fam == "spline-regression" and (args.sigma is None or args.M is None):
        raise ConfigError("sigma: regression constants need --sigma and --M")
    spec = build_sieve(fam, bounds, rho=args.rho, sigma=args.sigma, M=args.M,
                       eta_mode=args.eta_mode)
    rows = []
    for j, c in spec.models:
        rows.append([fam, "" if j.k is None else j.k, "" if j.q is None else j.q, j.L,
                     "" if j.l is None else j.l, c.A, c.m, c.C, c.eta, c.log_a])
    text = _csv_text(["family", "k", "q", "L", "l", "A", "m", "C", "eta", "log_a"], rows)
    part, limit = summability(fam, spec.indices())
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"# gamma={fmt(spec.gamma)} rho={fmt(spec.rho)} kappa={fmt(spec.kappa)} "
          f"sum_exp_minus_C={fmt(part)} lattice_limit={fmt(limit)} "
          f"excluded_weight_bound={fmt(spec.tail_bound)}", file=sys.stderr)
    return 0


def _density_from_args(args):
    theta = parse_list(args.theta, "theta")
    if args.family == "haar-density":
        basis = HaarBasis(args.level)
    else:
        basis = SplineBasis.from_kq(args.k, args.q)
    try:
        return make_density(basis, np.asarray(theta))
    except ValueError as exc:
        raise ConfigError(f"theta: {exc}") from exc


def _truth_from_name(text):
    if text == "uniform":
        return make_truth(TruthSpec("uniform"))
    if text.startswith("smooth:"):
        return make_truth(TruthSpec("smooth", name=text.split(":", 1)[1]))
    raise ConfigError(f"truth: expected 'uniform' or 'smooth:<name>', got {text!r}")


def cmd_divergence(args):
    f = _truth_from_name(args.truth)
    g = _density_from_args(args)
    rep = divergences(f, g)
    lines = [f"d_H = {rep.hellinger:.6f}", f"D = {rep.kl_D:.6f}", f"V = {rep.v:.6f}",
             f"V' = {rep.v_centered:.6f}", f"L2 = {rep.l2:.6f}",
             f"sup_log_ratio = {rep.sup_log_ratio:.6f}"]
    print("\n".join(lines))
    if args.out:
        atomic_write(args.out, _json_text({k: fmt(v) for k, v in rep.as_dict().items()}))
    return 0


def cmd_entropy(args):
    j = ModelIndex("spline-density", L=args.L, k=args.k, q=args.q)
    rows = verify_assumption_1(j, trials=args.trials, rho=args.rho, cloud_size=args.cloud_size,
                               seed=args.seed)
    text = _csv_text(["r", "delta", "ball_size", "covering", "bound", "ratio",
                      "global_covering", "global_bound", "global_ratio"],
                     [[r.r, r.delta, r.ball_size, r.covering, r.bound, r.ratio,
                       r.global_covering, r.global_bound, r.global_ratio] for r in rows])
    path = _emit(args, "entropy_check.csv", text)
    worst = max(r.ratio for r in rows)
    print(f"worst ratio {fmt(worst)} over {len(rows)} trials -> {path}")
    return 0


def cmd_bounds(args):
    if args.check == "lemma8":
        j = ModelIndex("spline-density", L=1, k=1, q=1)
        t = args.t if args.t is not None else 25.0 / args.n
        freq, bound, pi_b, _ = evidence_lower_bound_mc(j, make_truth(TruthSpec("uniform")), args.n, t,
                                                       args.replicates, args.seed)
        text = _csv_text(["n", "t", "pi_ball", "frequency", "bound"], [[args.n, t, pi_b, freq, bound]])
    else:
        if args.check == "lemma7":
            j = ModelIndex("spline-density", L=1, k=1, q=1)
            truth = make_truth(TruthSpec("uniform"))
            kw = {}
        else:
            j = ModelIndex("spline-regression", L=1, k=0, q=1)
            truth = make_truth(TruthSpec("regression", name="zero", M=args.M, sigma=args.sigma))
            kw = dict(M=args.M, sigma=args.sigma, c0=args.c0)
        xi = parse_list(args.xi, "xi")
        rows = tail_bound_mc(j, truth, xi, args.n, args.replicates, args.seed, **kw)
        text = _csv_text(["xi", "frequency", "envelope", "events", "replicates", "informative"],
                         [[r.xi, r.frequency, r.envelope, r.events, r.replicates, int(r.informative)]
                          for r in rows])
    path = _emit(args, f"bounds_{args.check}.csv", text)
    print(f"wrote {path}")
    return 0


def cmd_approx(args):
    ks = parse_list(args.ks, "ks", int)
    truth = _truth_from_name(args.truth)
    rows, errs = [], []
    for k in ks:
        fit = best_spline_fit(truth, args.q, k)
        rows.append([k, fit.sup_error, fit.D, fit.V, fit.index.L])
        errs.append(fit.sup_error)
    slope, ci, degenerate = fit_slope(np.array(ks) + 1.0, np.array(errs))
    path = _emit(args, "approx_check.csv", _csv_text(["k", "sup_error", "D", "V", "L"], rows))
    print(f"slope vs log(k+1): {fmt(slope)} (95% CI {fmt(ci[0])}, {fmt(ci[1])}) -> {path}")
    return 0


def _sim(args, family):
    cfg = load_config(args.config) if args.config else {}
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if args.mc is not None:
        cfg["mc"] = args.mc
    if args.n_grid is not None:
        cfg["n_grid"] = parse_list(args.n_grid, "n_grid", int)
    if "truth" not in cfg:
        cfg["truth"] = ({"kind": "regression", "name": "sin", "scale": 0.5, "M": 1.0, "sigma": 0.5}
                        if family == "spline-regression" else {"kind": "uniform"})
    if family == "spline-regression":
        cfg.setdefault("family", family)
        cfg.setdefault("radius", {"c": [3.0]})
    config = validate_sim_config(cfg, family)
    try:
        make_truth(config.truth)
    except ValueError as exc:
        raise ConfigError(f"truth: {exc}") from exc
    if args.workers < 1:
        raise ConfigError("workers: must be >= 1")
    result = contraction_experiment(config, workers=args.workers)
    stem = "density_sim" if family != "spline-regression" else "regression_sim"
    out = _out_dir(args)
    header = ["n", "replicate", "radius_pos", "radius", "tail_mass", "tail_se", "log_tail"]
    csv_path = atomic_write(os.path.join(out, f"{stem}.csv"),
                            _csv_text(header, [[r[h] for h in header] for r in result.rows]))
    summary = {"config": config.to_dict(), "seed": config.seed,
               "medians": [{"n": n, "radius_pos": p, "median_log_tail": fmt(v)}
                           for (n, p), v in sorted(result.medians.items())],
               "replicates": result.replicate_rows, "version": __version__}
    if len(config.n_grid) >= 3:
        try:
            slope, ci, degenerate = rate_slope(result)
            summary["half_mass_slope"] = {"slope": fmt(slope), "ci": [fmt(ci[0]), fmt(ci[1])],
                                          "degenerate": degenerate}
        except ValueError as exc:
            summary["half_mass_slope"] = {"error": str(exc)}
    json_path = atomic_write(os.path.join(out, f"{stem}.json"), _json_text(summary))
    for (n, p), v in sorted(result.medians.items()):
        print(f"n={n} radius#{p} median log tail mass {fmt(v)}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def build_parser():
    p = _Parser(prog="sieveprior", description="Sieve-prior constants, checks and simulations.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTDIR_ENV} or cwd)")

    c = sub.add_parser("constants", help="dump (index, A, m, C, eta, log a) as CSV")
    c.add_argument("--family", default="spline-density", choices=FAMILIES)
    c.add_argument("--kmax", type=int)
    c.add_argument("--qmax", type=int)
    c.add_argument("--lmax", type=int, help="largest L")
    c.add_argument("--level-max", type=int, help="largest Haar level l")
    c.add_argument("--rho", type=float)
    c.add_argument("--sigma", type=float)
    c.add_argument("--M", type=float)
    c.add_argument("--eta-mode", default="literal", choices=("literal", "lemma10"))
    c.add_argument("--out", help="CSV path (default stdout)")
    c.set_defaults(func=cmd_constants)

    d = sub.add_parser("divergence", help="divergences between a truth and a model density")
    d.add_argument("--truth", default="uniform", help="'uniform' or 'smooth:<name>'")
    d.add_argument("--family", default="spline-density", choices=("spline-density", "haar-density"))
    d.add_argument("--theta", required=True, help="comma-separated coefficients, e.g. 'log2,0'")
    d.add_argument("--q", type=int, default=1)
    d.add_argument("--k", type=int, default=0)
    d.add_argument("--level", type=int, default=0)
    d.add_argument("--out", help="optional JSON path")
    d.set_defaults(func=cmd_divergence)

    e = sub.add_parser("entropy-check", help="greedy covering counts vs (A r/delta)^m")
    common(e)
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--q", type=int, default=1)
    e.add_argument("--L", type=int, default=1)
    e.add_argument("--trials", type=int, default=20)
    e.add_argument("--rho", type=float, default=0.056)
    e.add_argument("--cloud-size", type=int, default=2 ** 14)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_entropy)

    b = sub.add_parser("bounds-check", help="Monte Carlo checks of the tail inequalities")
    common(b)
    b.add_argument("--check", default="lemma7", choices=("lemma7", "lemma9", "lemma8"))
    b.add_argument("--n", type=int, default=200)
    b.add_argument("--replicates", type=int, default=2000)
    b.add_argument("--xi", default="50,100,150,200,300,400,800")
    b.add_argument("--t", type=float)
    b.add_argument("--M", type=float, default=1.0)
    b.add_argument("--sigma", type=float, default=1.0)
    b.add_argument("--c0", type=float, default=2.0)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    a = sub.add_parser("approx-check", help="sup-error decay of least-squares spline fits")
    common(a)
    a.add_argument("--truth", default="smooth:abs")
    a.add_argument("--q", type=int, default=2)
    a.add_argument("--ks", default="4,8,16,32")
    a.add_argument("--out")
    a.set_defaults(func=cmd_approx)

    for name, fam in (("density-sim", "spline-density"), ("regression-sim", "spline-regression")):
        s = sub.add_parser(name, help="replicated posterior tail-mass experiment")
        common(s)
        s.add_argument("--config", help="JSON config (or a previous summary)")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicates", type=int)
        s.add_argument("--mc", type=int)
        s.add_argument("--n-grid")
        s.add_argument("--workers", type=int, default=1)
        s.set_defaults(func=lambda a_, fam=fam: _sim(a_, fam))
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise ConfigError(parser.format_usage() + "sieveprior: a subcommand is required")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
