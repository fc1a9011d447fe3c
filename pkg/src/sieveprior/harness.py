"""End-to-end experiments: truths, spline approximations, contraction sweeps,
rate slopes and Monte Carlo checks of exponential tail inequalities.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sstats
from scipy.special import logsumexp

from ._kit import ModelKit
from ._quad import integrate, merge_breaks, panel_rule
from .basis import HaarBasis, SplineBasis
from .expfam import SplineFunction, check_membership, make_density, sample
from .metrics import c1_constant, divergences, gaussian_closed_forms
from .posterior import Dataset, posterior_tail_mass
from .sieve import ModelIndex, build_sieve, constraint_for, eta_for, gamma_for

__all__ = [
    "NAMED_FUNCTIONS",
    "TruthSpec",
    "DensityTruth",
    "RegressionTruth",
    "make_truth",
    "besov_coefficients",
    "besov_sum",
    "ApproximationTarget",
    "best_spline_fit",
    "sup_error_curve",
    "RadiusRule",
    "ExperimentConfig",
    "ExperimentResult",
    "contraction_experiment",
    "fit_slope",
    "rate_slope",
    "TailRow",
    "tail_bound_mc",
    "evidence_lower_bound_mc",
    "u_envelope_mc",
    "draw_data",
]

BESOV_LEVELS = 12
BESOV_FILL = 0.81

NAMED_FUNCTIONS = {
    "zero": (lambda x: np.zeros_like(x), None, math.inf),
    "sin": (lambda x: np.sin(2 * np.pi * x), None, math.inf),
    "abs": (lambda x: np.abs(x - 0.5), (0.5,), 1.0),
    "kink": (lambda x: (x - 0.5) * np.abs(x - 0.5), (0.5,), 2.0),
}


# ---------------------------------------------------------------------------
# truths


@dataclass(frozen=True)
class TruthSpec:
    """Declarative description of a truth f_o.

    kind is one of ``uniform``, ``logspline`` (theta, q, k), ``smooth``
    (name, scale, s), ``besov`` (besov_alpha, H0, seed) or ``regression``
    (name, scale, M, sigma).
    """

    kind: str
    name: str = None
    scale: float = 1.0
    s: float = None
    theta: tuple = None
    q: int = None
    k: int = None
    besov_alpha: float = None
    H0: float = None
    seed: int = 0
    M: float = None
    sigma: float = None

    def to_dict(self):
        d = asdict(self)
        if d["theta"] is not None:
            d["theta"] = list(d["theta"])
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "theta" in d and d["theta"] is not None:
            d["theta"] = tuple(float(t) for t in d["theta"])
        return cls(**d)


@dataclass(frozen=True)
class DensityTruth:
    """Normalized density exp(g - log int e^g) from an unnormalized log-density g."""

    g: object
    log_norm: float
    breakpoints: np.ndarray
    label: str
    M0: float = math.nan
    coefficients: np.ndarray = None

    def log_pdf(self, x):
        return np.asarray(self.g(np.atleast_1d(np.asarray(x, dtype=float))), float) - self.log_norm

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def __call__(self, x):
        return self.pdf(x)


@dataclass(frozen=True)
class RegressionTruth:
    f: object
    breakpoints: np.ndarray
    label: str
    M: float
    sigma: float
    M0: float = math.nan

    def __call__(self, x):
        return np.asarray(self.f(np.atleast_1d(np.asarray(x, dtype=float))), dtype=float)


def _measured_derivative_sup(fun, s, breaks):
    """sup |D^r f| for r = floor(s) (capped at 3) by finite differences away from breaks."""
    r = 3 if not math.isfinite(s) else int(math.floor(s))
    x = np.linspace(0, 1, 2 ** 14 + 1)
    h = x[1] - x[0]
    v = np.asarray(fun(x), dtype=float)
    for _ in range(r):
        v = np.diff(v) / h
        x = 0.5 * (x[1:] + x[:-1])
    keep = np.ones_like(x, dtype=bool)
    for b in breaks:
        keep &= np.abs(x - b) > (r + 1) * h
    return float(np.max(np.abs(v[keep]))) if keep.any() else math.nan


def _normalize(g, breaks, label, M0=math.nan, coefficients=None):
    b = merge_breaks(breaks, base=32)
    shift = float(np.max(g(panel_rule(b, 4)[0])))
    mass = integrate(lambda x: np.exp(g(x) - shift), b, rtol=1e-13)
    return DensityTruth(g, shift + math.log(mass), b, label, M0, coefficients)


def besov_coefficients(besov_alpha, H0, seed, levels=BESOV_LEVELS, fill=BESOV_FILL):
    """Haar coefficients d_{j1,k1}, j1 = 0..levels, meeting the weighted-sum budget exactly.

    Level energies decay geometrically (share proportional to 2^{-j1}); within a
    level the directions are Gaussian. The weighted sum
    sum_j (2^{j+1} - 1)^{2 alpha} sum_k d^2 equals fill * H0^2.
    """
    if not besov_alpha > 0 or not H0 > 0:
        raise ValueError("besov truths need besov_alpha > 0 and H0 > 0")
    rng = np.random.default_rng(seed)
    share = 2.0 ** -np.arange(levels + 1)
    share /= share.sum()
    out = []
    for j1 in range(levels + 1):
        z = rng.standard_normal(2 ** j1)
        weight = (2 ** (j1 + 1) - 1) ** (2 * besov_alpha)
        out.append(z * math.sqrt(share[j1] * fill * H0 ** 2 / (weight * (z @ z))))
    return out


def besov_sum(coefs, besov_alpha):
    return math.fsum((2 ** (j1 + 1) - 1) ** (2 * besov_alpha) * float(d @ d)
                     for j1, d in enumerate(coefs))


def make_truth(spec):
    """Evaluable truth for a TruthSpec (normalized density or regression function)."""
    kind = spec.kind
    if kind == "uniform":
        return DensityTruth(lambda x: np.zeros_like(x), 0.0, np.array([0.0, 1.0]), "uniform", 0.0)
    if kind == "logspline":
        basis = SplineBasis.from_kq(spec.k, spec.q)
        d = make_density(basis, np.asarray(spec.theta, dtype=float))
        return DensityTruth(lambda x: basis.combine(d.theta, x), d.psi, basis.breakpoints,
                            f"logspline(k={spec.k},q={spec.q})")
    if kind == "smooth":
        fun, breaks, s = _named(spec.name)
        g = lambda x: spec.scale * fun(x)
        s = spec.s if spec.s is not None else s
        return _normalize(g, breaks, f"smooth({spec.name})", _measured_derivative_sup(g, s, breaks or ()))
    if kind == "besov":
        coefs = besov_coefficients(spec.besov_alpha, spec.H0, spec.seed)
        basis = HaarBasis(BESOV_LEVELS)
        theta = np.concatenate(coefs)
        cells = basis.cell_values(theta)

        def g(x):
            return cells[basis.cell_of(x)]

        b = basis.breakpoints
        log_norm = float(logsumexp(cells) - math.log(cells.size))
        return DensityTruth(g, log_norm, b, f"besov(alpha={spec.besov_alpha},H0={spec.H0})",
                            coefficients=theta)
    if kind == "regression":
        if spec.M is None or spec.sigma is None:
            raise ValueError("regression truths need M and sigma")
        fun, breaks, s = _named(spec.name)
        f = lambda x: spec.scale * fun(x)
        grid = np.linspace(0, 1, 2 ** 14 + 1)
        sup = float(np.max(np.abs(f(grid))))
        if not sup < spec.M:
            raise ValueError(f"regression truth violates ||f_o||_inf < M: {sup} >= {spec.M}")
        s = spec.s if spec.s is not None else s
        return RegressionTruth(f, merge_breaks(breaks), f"regression({spec.name})", spec.M,
                               spec.sigma, _measured_derivative_sup(f, s, breaks or ()))
    raise ValueError(f"unknown truth kind {kind!r}")


def _named(name):
    if name not in NAMED_FUNCTIONS:
        raise ValueError(f"unknown named function {name!r}; choose from {sorted(NAMED_FUNCTIONS)}")
    return NAMED_FUNCTIONS[name]


# ---------------------------------------------------------------------------
# spline approximation


@dataclass(frozen=True)
class ApproximationTarget:
    index: ModelIndex
    beta: np.ndarray
    sup_error: float
    D: float
    V: float
    eta: float = math.nan

    def eq4_left_side(self, n):
        """max(D, V) + eta_j / n."""
        return max(self.D, self.V) + self.eta / n


def _fine_grid(basis, target):
    return merge_breaks(basis.breakpoints, getattr(target, "breakpoints", None), base=2 ** 14)


def best_spline_fit(target, q, k, grid=4096, family=None, Lmax=200, rho=None):
    """Least-squares spline fit of log f_o (densities) or f_o (regression).

    The coefficients are shifted to sum to zero for densities (the fitted
    density is unchanged). The reported sup error is max |log f_o - log f_beta|
    (resp. |f_o - f_beta|) on a fine grid, and the model index uses the
    smallest L with beta in Theta_j.
    """
    regression = isinstance(target, RegressionTruth)
    family = family or ("spline-regression" if regression else "spline-density")
    basis = SplineBasis.from_kq(k, q)
    if basis.m > grid // 4:
        raise ValueError(f"k = {k} is too large for a {grid}-point fitting grid")
    x = np.linspace(0, 1, grid)
    B = basis(x)
    y = target(x) if regression else target.log_pdf(x)
    if np.linalg.cond(B.T @ B) > 1e12:
        raise ValueError("normal equations are ill-conditioned")
    beta = np.linalg.lstsq(B, y, rcond=None)[0]
    fine = _fine_grid(basis, target)
    fine = np.concatenate([fine, np.linspace(0, 1, 2 ** 16 + 1)])
    if regression:
        err = float(np.max(np.abs(target(fine) - basis.combine(beta, fine))))
        fit = SplineFunction(basis, beta)
        D, V, _ = gaussian_closed_forms(target, fit, target.sigma)
    else:
        beta = beta - beta.mean()
        dens = make_density(basis, beta)
        err = float(np.max(np.abs(target.log_pdf(fine) - dens.log_pdf(fine))))
        rep = divergences(target, dens)
        D, V = rep.kl_D, rep.v
    index = None
    M = getattr(target, "M", None)
    for L in range(1, Lmax + 1):
        j = ModelIndex(family, L=L, k=k, q=q)
        if check_membership(beta, constraint_for(j, M=M)):
            index = j
            break
    if index is None:
        raise ValueError(f"no L <= {Lmax} puts the fitted coefficients in Theta_j")
    if regression:
        gamma = gamma_for(family, rho=rho, M=M, sigma=target.sigma)
        eta = eta_for(index, gamma, M=M, sigma=target.sigma)
    else:
        eta = eta_for(index, gamma_for(family, rho=rho))
    return ApproximationTarget(index, beta, err, D, V, eta)


def sup_error_curve(target, q, ks, grid=4096):
    """Sup errors of least-squares fits over a list of interior-knot counts."""
    return np.array([best_spline_fit(target, q, k, grid).sup_error for k in ks])


# ---------------------------------------------------------------------------
# contraction experiments


@dataclass(frozen=True)
class RadiusRule:
    """Radii c * n^{-exponent} * (log n)^{log_power}, plus fixed absolute radii."""

    c: tuple = (2.0,)
    exponent: float = 1.0 / 3.0
    log_power: float = 0.0
    absolute: tuple = ()

    def radii(self, n):
        rel = [c * n ** (-self.exponent) * math.log(n) ** self.log_power for c in self.c]
        return np.array(rel + list(self.absolute), dtype=float)


@dataclass(frozen=True)
class ExperimentConfig:
    truth: TruthSpec
    family: str = "spline-density"
    bounds: dict = field(default_factory=lambda: {"kmax": 3, "qmax": 2, "Lmax": 2})
    rho: float = None
    n_grid: tuple = (100, 400, 1600)
    radius: RadiusRule = RadiusRule()
    replicates: int = 8
    seed: int = 0
    mc: int = 20000
    method: str = "auto"
    eta_mode: str = "literal"

    def to_dict(self):
        d = asdict(self)
        d["truth"] = self.truth.to_dict()
        d["n_grid"] = list(self.n_grid)
        d["radius"] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.radius).items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["truth"] = TruthSpec.from_dict(d["truth"])
        if "radius" in d:
            r = dict(d["radius"])
            for key in ("c", "absolute"):
                if key in r:
                    r[key] = tuple(float(v) for v in np.atleast_1d(r[key]))
            d["radius"] = RadiusRule(**r)
        if "n_grid" in d:
            d["n_grid"] = tuple(int(n) for n in d["n_grid"])
        return cls(**d)


@dataclass(frozen=True)
class ExperimentResult:
    """Rows per (n, replicate, radius), per-replicate diagnostics, and medians."""

    rows: list
    replicate_rows: list
    medians: dict
    config: dict
    seed: int

    def median_log_tail(self, n, radius_pos=0):
        return self.medians[(int(n), int(radius_pos))]

    def statistic(self, name):
        """Median over replicates of a per-replicate statistic, per n (sorted)."""
        ns = sorted({r["n"] for r in self.replicate_rows})
        vals = [float(np.median([r[name] for r in self.replicate_rows if r["n"] == n]))
                for n in ns]
        return np.array(ns, dtype=float), np.array(vals)


def draw_data(truth, n, seed):
    """Synthetic sample of size n from a density truth or regression truth."""
    if isinstance(truth, RegressionTruth):
        rng = np.random.default_rng(seed)
        x = rng.random(n)
        y = truth(x) + truth.sigma * rng.standard_normal(n)
        return Dataset(x, y, truth.sigma)
    if n == 0:
        return Dataset(np.zeros(0))
    return Dataset(sample(truth, seed, n))


def _task_seed(root, *key):
    return int(np.random.SeedSequence(entropy=int(root), spawn_key=tuple(key)).generate_state(1)[0])


def _run_cell(args):
    config, n_pos, n, rep = args
    truth = make_truth(config.truth)
    spec = _sieve_for(config, truth)
    data = draw_data(truth, n, _task_seed(config.seed, n_pos, rep, 0))
    radii = config.radius.radii(n)
    est = posterior_tail_mass(spec, data, truth, radii, mc=config.mc,
                              seed=_task_seed(config.seed, n_pos, rep, 1), method=config.method)
    rows = []
    for pos, (r, t, se) in enumerate(zip(radii, est.tail_mass, est.tail_se)):
        log_tail = float(est.log_U[pos] - est.log_V)
        rows.append({"n": n, "replicate": rep, "radius_pos": pos, "radius": float(r),
                     "tail_mass": float(t), "tail_se": float(se), "log_tail": log_tail})
    top = int(np.argmax(est.log_weights))
    rep_row = {"n": n, "replicate": rep, "half_mass_radius": est.median_distance,
               "log_V": est.log_V, "top_model": est.models[top].label(),
               "top_weight": float(np.exp(est.log_weights[top])),
               "model_weights": {j.label(): float(w) for j, w in
                                 zip(est.models, np.exp(est.log_weights))},
               "flags": list(est.flags)}
    return rows, rep_row


def _sieve_for(config, truth):
    if config.family == "spline-regression":
        return build_sieve(config.family, config.bounds, rho=config.rho, sigma=truth.sigma,
                           M=truth.M, eta_mode=config.eta_mode)
    return build_sieve(config.family, config.bounds, rho=config.rho, eta_mode=config.eta_mode)


def contraction_experiment(config, workers=1):
    """Replicated posterior tail masses over the n-grid and radius rule.

    Every (n, replicate) cell gets seeds derived from (seed, n position,
    replicate), and results are merged in that order, so `workers` does not
    affect the output. Medians are taken over replicates of log tail mass.
    """
    tasks = [(config, i, int(n), rep) for i, n in enumerate(config.n_grid)
             for rep in range(config.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    rep_rows = [rr for _, rr in results]
    medians = {}
    for n in config.n_grid:
        for pos in {r["radius_pos"] for r in rows}:
            vals = [r["log_tail"] for r in rows if r["n"] == n and r["radius_pos"] == pos]
            medians[(int(n), pos)] = float(np.median(vals))
    return ExperimentResult(rows, rep_rows, medians, config.to_dict(), config.seed)


def fit_slope(ns, values, level=0.95):
    """Least-squares slope of log(values) on log(ns) with a t-based interval.

    Returns (slope, (lo, hi), degenerate) where degenerate flags a constant
    statistic (slope 0 by definition, zero-width interval).
    """
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.size < 3:
        raise ValueError("need at least 3 n-values for a slope")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("the statistic must be positive and finite")
    y = np.log(values)
    if np.ptp(y) == 0:
        return 0.0, (0.0, 0.0), True
    x = np.log(ns)
    res = sstats.linregress(x, y)
    df = ns.size - 2
    half = sstats.t.ppf(0.5 + level / 2, df) * res.stderr if df > 0 else math.inf
    return float(res.slope), (float(res.slope - half), float(res.slope + half)), False


def rate_slope(result, statistic="half_mass_radius", threshold=0.5):
    """Slope of the chosen statistic against n.

    ``half_mass_radius``: replicate median of the posterior-median distance.
    ``threshold``: smallest evaluated radius whose median tail mass is below
    `threshold`.
    """
    if statistic == "half_mass_radius":
        ns, vals = result.statistic("half_mass_radius")
    elif statistic == "threshold":
        ns = sorted({r["n"] for r in result.rows})
        vals = []
        for n in ns:
            cand = sorted((r["radius"], result.medians[(n, r["radius_pos"])])
                          for r in result.rows if r["n"] == n and r["replicate"] == 0)
            ok = [rad for rad, lt in cand if lt < math.log(threshold)]
            vals.append(ok[0] if ok else math.nan)
        ns, vals = np.array(ns, dtype=float), np.array(vals)
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    return fit_slope(ns, vals)


# ---------------------------------------------------------------------------
# tail inequalities on low-dimensional models


@dataclass(frozen=True)
class TailRow:
    xi: float
    frequency: float
    envelope: float
    events: int
    replicates: int

    @property
    def informative(self):
        return self.envelope <= 1.0


def _theta_grid(kit, size):
    """Members of Theta_j on a regular grid of the free box (1-D or 2-D)."""
    d = kit.free_dim
    if d == 1:
        z = np.linspace(-1, 1, size)[:, None] * kit.half_widths
    elif d == 2:
        side = int(math.ceil(math.sqrt(size)))
        g = np.linspace(-1, 1, side)
        z = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2) * kit.half_widths
    else:
        raise ValueError(f"theta grids need a 1-D or 2-D model, got {d} free dimensions")
    thetas = kit.embed(z)
    return thetas[kit.mask(thetas)]


def tail_bound_mc(index, truth, xi_grid, n, replicates, seed, gamma=None, theta_grid=2048,
                  M=None, sigma=None, c0=None):
    """Empirical frequency of the uniform log-likelihood-ratio tail event vs. its envelope.

    Density families: the event is
    {exists theta: (1/n) sum log(f_theta/f_o)(X_i) >= -gamma d_H^2 + xi/n},
    envelope 15.1 exp(-(1 - 4 gamma) xi/8). Regression: the event is
    {(1/n) sum (Y - f_o)^2 - (Y - f_theta)^2 >= -gamma ||f_o - f_theta||^2 + xi/n
    + 0.0224 |mean eps| sqrt(xi/n)} intersected with
    {mean|eps| <= c0, mean eps^2 <= c0^2}, envelope
    15.1 exp(-c1 (1 - 4 gamma) xi/8). The supremum over theta runs over a
    grid of Theta_j, which can only miss events.
    """
    regression = index.family == "spline-regression"
    if gamma is None:
        gamma = gamma_for(index.family, M=M, sigma=sigma, c0=c0) if regression else gamma_for(index.family)
    if not 0 < gamma < 0.25:
        raise ValueError(f"gamma must lie in (0, 0.25), got {gamma}")
    xi = np.asarray(xi_grid, dtype=float)
    kit = ModelKit(index, M=M, sigma=sigma)
    thetas = _theta_grid(kit, theta_grid)
    dist = kit.distance_evaluator(truth)(thetas)
    bonus = n * gamma * dist ** 2
    rng_root = np.random.SeedSequence(int(seed))
    best = np.empty(replicates)
    eps_bar = np.zeros(replicates)
    cond = np.ones(replicates, dtype=bool)
    if regression:
        c0 = 2 * sigma if c0 is None else c0
        for r, ss in enumerate(rng_root.spawn(replicates)):
            rng = np.random.default_rng(ss)
            x = rng.random(n)
            eps = sigma * rng.standard_normal(n)
            y = truth(x) + eps
            fo = truth(x)
            ft = kit.log_pdf(thetas, x)
            gain = ((y - fo) ** 2).sum() - ((y[None, :] - ft) ** 2).sum(axis=1)
            best[r] = np.max(gain + bonus)
            eps_bar[r] = eps.mean()
            cond[r] = np.abs(eps).mean() <= c0 and (eps ** 2).mean() <= c0 ** 2
        rate = c1_constant(M, sigma) * (1 - 4 * gamma) / 8
    else:
        for r, ss in enumerate(rng_root.spawn(replicates)):
            data = draw_data(truth, n, ss)
            st = kit.statistics(data)
            ll = kit.log_likelihood(thetas, st) - float(np.sum(truth.log_pdf(data.x)))
            best[r] = np.max(ll + bonus)
        rate = (1 - 4 * gamma) / 8
    rows = []
    for x_i in xi:
        need = x_i + 0.0224 * np.abs(eps_bar) * math.sqrt(x_i * n) if regression else x_i
        ev = int(np.sum((best >= need) & cond))
        rows.append(TailRow(float(x_i), ev / replicates, 15.1 * math.exp(-rate * x_i), ev,
                            replicates))
    return rows


def _prior_draws(kit, size, rng):
    """Uniform draws from Theta_j (normalized Lebesgue prior) by rejection from the box."""
    out = []
    total = 0
    while total < size:
        z = kit.draw_free(rng, 4 * size)
        th = kit.embed(z)
        th = th[kit.mask(th)]
        out.append(th)
        total += th.shape[0]
    return np.vstack(out)[:size]


def _divergence_rows(kit, truth, thetas):
    """D(f_o || f_theta) and V'(f_o || f_theta) for many theta by Gauss quadrature."""
    nodes, weights = panel_rule(merge_breaks(kit.basis.breakpoints, truth.breakpoints, base=32), 16)
    lo = truth.log_pdf(nodes)
    fo = np.exp(lo)
    lr = lo[None, :] - kit.log_pdf(thetas, nodes)
    D = (lr * fo) @ weights
    Vc = ((lr - D[:, None]) ** 2 * fo) @ weights
    return D, Vc


def evidence_lower_bound_mc(index, truth, n, t, replicates, seed, prior_mc=20000, theta_grid=2048):
    """Failure frequency of V_n >= (1/2) pi(B_D(t)) exp(-2 n t) on a 1-D density model.

    The prior is the normalized Lebesgue measure on Theta_j. pi(B_D(t)), with
    B_D(t) = {D(f_o||f_theta) <= t, V'(f_o||f_theta) <= t}, is measured by
    Monte Carlo over the prior; V_n = int prod f_theta/f_o(X_i) dpi is computed
    on a grid of Theta_j. Returns (frequency, bound 2/(n t), pi_B, log V_n values).
    """
    kit = ModelKit(index)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(1,)))
    draws = _prior_draws(kit, prior_mc, rng)
    D, Vc = _divergence_rows(kit, truth, draws)
    pi_b = float(np.mean((D <= t) & (Vc <= t)))
    thetas = _theta_grid(kit, theta_grid)
    log_vn = np.empty(replicates)
    for r, ss in enumerate(np.random.SeedSequence(int(seed)).spawn(replicates)):
        data = draw_data(truth, n, ss)
        st = kit.statistics(data)
        ll = kit.log_likelihood(thetas, st) - float(np.sum(truth.log_pdf(data.x)))
        log_vn[r] = logsumexp(ll) - math.log(ll.size)
    thresh = math.log(0.5 * pi_b) - 2 * n * t if pi_b > 0 else -math.inf
    freq = float(np.mean(log_vn < thresh))
    return freq, 2.0 / (n * t), pi_b, log_vn


def u_envelope_mc(index, truth, n, s, replicates, seed, gamma=None, theta_grid=2048, log_alpha=0.0):
    """Frequency of U_n > alpha exp(-gamma n s^2/2) for a single 1-D density model.

    U_n integrates prod f_theta/f_o(X_i) over {d_H(f_o, f_theta) > s} against
    the normalized Lebesgue prior on Theta_j (alpha = 1 unless given).
    Returns (frequency, envelope 15.1 exp(-(1 - 4 gamma) gamma n s^2/16)).
    """
    gamma = gamma_for(index.family) if gamma is None else gamma
    kit = ModelKit(index)
    thetas = _theta_grid(kit, theta_grid)
    far = kit.distance_evaluator(truth)(thetas) > s
    hits = 0
    for ss in np.random.SeedSequence(int(seed)).spawn(replicates):
        data = draw_data(truth, n, ss)
        st = kit.statistics(data)
        ll = kit.log_likelihood(thetas, st) - float(np.sum(truth.log_pdf(data.x)))
        log_u = logsumexp(ll[far]) - math.log(ll.size) if far.any() else -math.inf
        hits += log_u > log_alpha - gamma * n * s * s / 2
    env = 15.1 * math.exp(-(1 - 4 * gamma) * gamma * n * s * s / 16)
    return hits / replicates, env
