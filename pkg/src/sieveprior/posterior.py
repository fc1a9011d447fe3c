"""Monte Carlo evidence, U_n, V_n and posterior tail mass for a sieve prior.

Each model's prior pi_j is unnormalized Lebesgue measure on Theta_j (inside
its affine hull). Integrals over Theta_j are estimated by importance
sampling in the model's free coordinates, with either the uniform box
distribution or a defensive Gaussian mixture tuned on a tempered pilot.
Everything stays in the log domain until the final ratio.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from ._kit import ModelKit

__all__ = [
    "Dataset",
    "EvidenceEstimate",
    "ModelDraws",
    "PosteriorEstimate",
    "log_likelihood",
    "model_evidence",
    "draw_model",
    "posterior_tail_mass",
    "model_posterior",
    "weighted_median",
]

CHUNK = 8192
DEFENSIVE = 0.1
TEMPER_SWITCH = 500


@dataclass(frozen=True)
class Dataset:
    """Density data (x only) or regression data (x, y with known sigma)."""

    x: np.ndarray
    y: np.ndarray = None
    sigma: float = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        if np.any(~np.isfinite(x)) or np.any(x < 0) or np.any(x > 1):
            raise ValueError("X_i must lie in [0, 1]")
        object.__setattr__(self, "x", x)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape != x.shape:
                raise ValueError("x and y must have the same length")
            if not np.all(np.isfinite(y)):
                raise ValueError("Y_i must be finite")
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("regression data need a known sigma > 0")
            object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def is_regression(self):
        return self.y is not None


def log_likelihood(model, data):
    """Sum of log p(Z_i) for a density (``log_pdf``) or regression function."""
    if data.n == 0:
        return 0.0
    if data.is_regression:
        s = data.sigma
        resid = data.y - np.asarray(model(data.x), dtype=float)
        return float(-data.n * math.log(math.sqrt(2 * math.pi) * s) - resid @ resid / (2 * s * s))
    return float(np.sum(model.log_pdf(data.x)))


def _logmeanexp(lw):
    if lw.size == 0:
        return -math.inf
    return float(logsumexp(lw) - math.log(lw.size))


def _log_se(lw):
    """Delta-method standard error of log(mean(exp(lw)))."""
    if lw.size < 2 or not np.isfinite(lw).any():
        return math.inf
    w = np.exp(lw - np.max(lw))
    mean = w.mean()
    return float(w.std(ddof=1) / (math.sqrt(w.size) * mean)) if mean > 0 else math.inf


def _ess(lw):
    if not np.isfinite(lw).any():
        return 0.0
    w = np.exp(lw - np.max(lw))
    return float(w.sum() ** 2 / (w @ w))


@dataclass(frozen=True)
class EvidenceEstimate:
    log_value: float
    se: float
    ess: float
    draws: int
    accepted: int
    method: str


@dataclass(frozen=True)
class ModelDraws:
    """Per-draw log importance weights (in evidence units) and distances."""

    index: object
    log_w: np.ndarray
    distance: np.ndarray
    accepted: int
    method: str

    def evidence(self):
        return EvidenceEstimate(_logmeanexp(self.log_w), _log_se(self.log_w), _ess(self.log_w),
                                int(self.log_w.size), self.accepted, self.method)


# ---------------------------------------------------------------------------
# proposals


@dataclass(frozen=True)
class _Proposal:
    """Mixture DEFENSIVE * Uniform(box) + (1 - DEFENSIVE) * N(mean, cov) in free coordinates."""

    kit: ModelKit
    mean: np.ndarray = None
    cov: np.ndarray = None

    @property
    def gaussian(self):
        return self.mean is not None

    def draw(self, rng, n):
        z = self.kit.draw_free(rng, n)
        if not self.gaussian:
            return z
        use = rng.random(n) >= DEFENSIVE
        k = int(use.sum())
        if k:
            g = rng.multivariate_normal(self.mean, self.cov, size=k, method="cholesky")
            z[use] = g
        return z

    def log_density(self, z):
        lu = -float(np.sum(np.log(2 * self.kit.half_widths)))
        if not self.gaussian:
            return np.full(z.shape[0], lu)
        inside = self.kit.in_box(z)
        lg = multivariate_normal(self.mean, self.cov, allow_singular=False).logpdf(z)
        lg = np.atleast_1d(lg)
        lmix = np.where(inside, np.logaddexp(math.log(DEFENSIVE) + lu, math.log1p(-DEFENSIVE) + lg),
                        math.log1p(-DEFENSIVE) + lg)
        return lmix


def _weights(kit, stats, prop, z):
    """log(lik * 1{Theta}) - log q(z) + log Jacobian for the free draws z."""
    thetas = kit.embed(z)
    lw = np.full(z.shape[0], -math.inf)
    ok = kit.in_box(z)
    if ok.any():
        sub = np.flatnonzero(ok)
        ok[sub] = kit.mask(thetas[sub])
    if ok.any():
        lw[ok] = kit.log_likelihood(thetas[ok], stats)
    return lw - prop.log_density(z) + kit.log_jacobian, thetas, ok


def _fit(z, lw, dim):
    w = np.exp(lw - np.max(lw))
    w = w / w.sum()
    mean = w @ z
    diff = z - mean
    cov = (diff * w[:, None]).T @ diff
    ridge = 1e-10 + 1e-8 * np.trace(cov) / max(dim, 1)
    return mean, cov + ridge * np.eye(dim)


def _tempered_proposal(kit, stats, rng, pilot=4096, rounds=4, top=0.01, inflate=1.5):
    """Gaussian fitted to the top fraction of a uniform pilot, then refined.

    Refinement rounds draw from the current mixture and refit the Gaussian to
    importance weights raised to increasing powers (tempering), ending at the
    full likelihood. Covariances are inflated by `inflate`^2 for safety.
    """
    dim = kit.free_dim
    base = _Proposal(kit)
    z = base.draw(rng, pilot)
    lw, _, ok = _weights(kit, stats, base, z)
    if ok.sum() < dim + 2:
        return base
    keep = max(int(math.ceil(top * ok.sum())), 4 * dim + 4)
    order = np.argsort(-lw)[:keep]
    mean, cov = _fit(z[order], np.zeros(order.size), dim)
    prop = _Proposal(kit, mean, cov * inflate ** 2)
    for beta in np.linspace(1.0 / rounds, 1.0, rounds):
        z = prop.draw(rng, pilot)
        lw, _, ok = _weights(kit, stats, prop, z)
        if not np.isfinite(lw).any():
            break
        # tempered weights: likelihood^beta relative to the proposal
        tl = np.where(ok, beta * (lw + prop.log_density(z)) - prop.log_density(z), -math.inf)
        mean, cov = _fit(z[ok], tl[ok], dim)
        prop = _Proposal(kit, mean, cov * inflate ** 2)
    return prop


def _seed(root, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(root), spawn_key=tuple(key)))


def draw_model(index, data, mc=20000, seed=0, method="uniform", truth=None, M=None,
               sigma=None, model_key=0):
    """Importance draws for one model with optional distances to `truth`.

    `method` is ``uniform`` (box sampling) or ``tempered`` (defensive
    Gaussian mixture tuned on a pilot). Draws are produced in chunks of
    CHUNK with seeds derived from (seed, model_key, chunk), so results do not
    depend on how work is scheduled.
    """
    if method not in ("uniform", "tempered"):
        raise ValueError(f"unknown evidence method {method!r}")
    kit = ModelKit(index, M=M, sigma=sigma if sigma is not None else data.sigma)
    stats = kit.statistics(data)
    if kit.free_dim == 0:
        method = "uniform"
        mc = 1
    prop = _Proposal(kit)
    if method == "tempered":
        prop = _tempered_proposal(kit, stats, _seed(seed, model_key, 1 << 20))
    dist_fn = kit.distance_evaluator(truth) if truth is not None else None
    lws, dists, accepted = [], [], 0
    for c, lo in enumerate(range(0, int(mc), CHUNK)):
        rng = _seed(seed, model_key, c)
        z = prop.draw(rng, min(CHUNK, int(mc) - lo))
        lw, thetas, ok = _weights(kit, stats, prop, z)
        accepted += int(ok.sum())
        lws.append(lw)
        if dist_fn is not None:
            d = np.full(z.shape[0], math.nan)
            if ok.any():
                d[ok] = dist_fn(thetas[ok])
            dists.append(d)
    lw = np.concatenate(lws)
    if accepted == 0:
        raise ValueError(f"no draw landed in Theta_j for model {index.label()}; "
                         "the bounding box does not meet the parameter set")
    dist = np.concatenate(dists) if dists else np.full(lw.shape, math.nan)
    return ModelDraws(index, lw, dist, accepted, method)


def model_evidence(index, data, mc=20000, seed=0, method="uniform", M=None, sigma=None):
    """log of int_{Theta_j} prod_i p_theta(Z_i) dtheta with its standard error."""
    return draw_model(index, data, mc, seed, method, M=M, sigma=sigma).evidence()


# ---------------------------------------------------------------------------
# aggregation over the sieve


def weighted_median(values, log_weights):
    """Median of `values` under weights exp(log_weights) (lower median)."""
    values = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    keep = np.isfinite(lw) & np.isfinite(values)
    if not keep.any():
        return math.nan
    v, lw = values[keep], lw[keep]
    order = np.argsort(v, kind="stable")
    w = np.exp(lw[order] - lw.max())
    cum = np.cumsum(w)
    return float(v[order][np.searchsorted(cum, 0.5 * cum[-1])])


@dataclass(frozen=True)
class PosteriorEstimate:
    """Tail mass U_n/V_n at one or more radii, with per-model diagnostics."""

    models: tuple
    log_evidence: np.ndarray
    evidence_se: np.ndarray
    ess: np.ndarray
    log_weights: np.ndarray
    radii: np.ndarray
    log_U: np.ndarray
    log_V: float
    tail_mass: np.ndarray
    tail_se: np.ndarray
    median_distance: float
    metric: str
    methods: tuple
    flags: tuple = field(default_factory=tuple)

    @property
    def model_weights(self):
        return np.exp(self.log_weights)

    def tail_at(self, radius):
        pos = np.flatnonzero(np.isclose(self.radii, radius, rtol=0, atol=1e-15))
        if pos.size == 0:
            raise KeyError(f"radius {radius} was not evaluated")
        return float(self.tail_mass[pos[0]]), float(self.tail_se[pos[0]])


def _choose_method(method, n):
    if method == "auto":
        return "tempered" if n > TEMPER_SWITCH else "uniform"
    return method


def _tail_stats(draws, log_a, radii, diameter):
    """log U_n(s) per radius, log V_n, tail masses and linearised standard errors."""
    shift = max(la + (np.max(d.log_w) if np.isfinite(d.log_w).any() else -math.inf)
                for la, d in zip(log_a, draws))
    scaled = [np.exp(la + d.log_w - shift) for la, d in zip(log_a, draws)]
    v_parts = np.array([s.mean() for s in scaled])
    V = v_parts.sum()
    log_V = math.log(V) + shift if V > 0 else -math.inf
    log_U = np.empty(len(radii))
    tail = np.empty(len(radii))
    se = np.empty(len(radii))
    for r_i, s_n in enumerate(radii):
        U = 0.0
        var = 0.0
        outs = []
        for s, d in zip(scaled, draws):
            if s_n >= diameter:
                out = np.zeros_like(s)
            else:
                out = np.where(np.isnan(d.distance), 0.0, (d.distance > s_n).astype(float))
            outs.append(out)
            U += float(np.mean(s * out))
        R = U / V if V > 0 else math.nan
        for s, out in zip(scaled, outs):
            if s.size > 1:
                var += float(np.var(s * (out - R), ddof=1)) / s.size
        log_U[r_i] = math.log(U) + shift if U > 0 else -math.inf
        tail[r_i] = R
        se[r_i] = math.sqrt(var) / V if V > 0 else math.nan
    return log_U, log_V, tail, se


def posterior_tail_mass(spec, data, truth, radius, metric=None, mc=20000, seed=0,
                        method="auto", cross_check=False):
    """Posterior mass outside the ball of radius `radius` around `truth`.

    `radius` may be a scalar or a sequence; `metric` is ``hellinger`` for
    density families and ``l2`` for regression (the default follows the
    family). Each model's integrals use the same draws for U_n and V_n.
    With `cross_check`, tempered runs are repeated with uniform sampling and
    models whose log-evidences disagree by more than 3 joint standard errors
    are flagged.
    """
    family = spec.family
    default = "l2" if family == "spline-regression" else "hellinger"
    metric = default if metric is None else metric
    if metric != default:
        raise ValueError(f"metric {metric!r} is not available for family {family!r}")
    radii = np.atleast_1d(np.asarray(radius, dtype=float))
    if np.any(radii < 0):
        raise ValueError("radius must be nonnegative")
    chosen = _choose_method(method, data.n)
    sigma = spec.sigma if family == "spline-regression" else None
    draws = []
    flags = []
    for pos, j in enumerate(spec.indices()):
        d = draw_model(j, data, mc, seed, chosen, truth=truth, M=spec.M, sigma=sigma,
                       model_key=pos)
        draws.append(d)
        if cross_check and chosen == "tempered" and d.log_w.size > 1:
            u = draw_model(j, data, mc, seed, "uniform", M=spec.M, sigma=sigma,
                           model_key=pos).evidence()
            e = d.evidence()
            joint = math.hypot(u.se, e.se)
            if not abs(u.log_value - e.log_value) <= 3 * joint:
                flags.append(f"estimator disagreement on model {j.label()}: "
                             f"{e.log_value:.6g} vs {u.log_value:.6g} (joint se {joint:.3g})")
    log_a = spec.log_a()
    diameter = math.sqrt(2.0) if metric == "hellinger" else math.inf
    log_U, log_V, tail, se = _tail_stats(draws, log_a, radii, diameter)
    ev = [d.evidence() for d in draws]
    log_ev = np.array([e.log_value for e in ev])
    post = log_a + log_ev
    post = post - logsumexp(post)
    all_lw = np.concatenate([la + d.log_w - math.log(d.log_w.size) for la, d in zip(log_a, draws)])
    all_d = np.concatenate([d.distance for d in draws])
    return PosteriorEstimate(
        models=tuple(spec.indices()), log_evidence=log_ev,
        evidence_se=np.array([e.se for e in ev]), ess=np.array([e.ess for e in ev]),
        log_weights=post, radii=radii, log_U=log_U, log_V=log_V, tail_mass=tail,
        tail_se=se, median_distance=weighted_median(all_d, all_lw), metric=metric,
        methods=tuple(d.method for d in draws), flags=tuple(flags))


def model_posterior(spec, data, mc=20000, seed=0, method="auto"):
    """Posterior model weights a_j * evidence_j, normalized, keyed by index."""
    chosen = _choose_method(method, data.n)
    sigma = spec.sigma if spec.family == "spline-regression" else None
    log_ev = np.array([draw_model(j, data, mc, seed, chosen, M=spec.M, sigma=sigma,
                                  model_key=pos).evidence().log_value
                       for pos, j in enumerate(spec.indices())])
    post = spec.log_a() + log_ev
    post = np.exp(post - logsumexp(post))
    return dict(zip(spec.indices(), post.tolist()))
