"""Sieve prior over a truncated model lattice.

Each model j carries constants (A_j, m_j, C_j) from its family formula, a
complexity eta_j built from gamma, and a log-weight

    log a_j = -kappa * eta_j - logsumexp_j'(-kappa * eta_j')

with kappa = 1 + (1 - 4 gamma)/8 for densities and
kappa = 1 + 1/(2 sigma^2) + 0.0056/sigma for regression.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .basis import HaarBasis, SplineBasis
from .expfam import FAMILIES, ConstraintSpec
from .metrics import c1_constant

__all__ = [
    "ModelIndex",
    "ModelConstants",
    "SieveSpec",
    "DEFAULT_RHO",
    "DEFAULT_BOUNDS",
    "gamma_for",
    "constants_for",
    "eta_for",
    "kappa_for",
    "log_weights",
    "enumerate_models",
    "summability",
    "build_sieve",
    "constraint_for",
]

DEFAULT_RHO = 0.056
REGRESSION_RHO = 0.0056
DEFAULT_BOUNDS = {
    "spline-density": {"kmax": 40, "qmax": 4, "Lmax": 5},
    "spline-regression": {"kmax": 40, "qmax": 4, "Lmax": 5},
    "haar-density": {"lmax": 7, "Lmax": 5},
}


@dataclass(frozen=True, order=True)
class ModelIndex:
    """A point of J: (k, q, L) for spline families, (l, L) for Haar."""

    family: str
    L: int
    k: int = None
    q: int = None
    l: int = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        if self.family == "haar-density":
            if self.l is None or self.l < 0:
                raise ValueError("Haar models need a level l >= 0")
        elif self.k is None or self.q is None or self.k < 0 or self.q < 1:
            raise ValueError("spline models need k >= 0 and q >= 1")

    @property
    def m(self):
        if self.family == "haar-density":
            return 2 ** (self.l + 1)
        return self.k + self.q

    @property
    def coef_dim(self):
        """Length of the coefficient vector theta."""
        return self.m - 1 if self.family == "haar-density" else self.m

    @property
    def free_dim(self):
        """Dimension of the affine hull the Lebesgue prior lives on."""
        return self.m - 1 if self.family != "spline-regression" else self.m

    def basis(self):
        if self.family == "haar-density":
            return HaarBasis(self.l)
        return SplineBasis.from_kq(self.k, self.q)

    def key(self):
        if self.family == "haar-density":
            return (self.l, self.L)
        return (self.k, self.q, self.L)

    def label(self):
        return "(" + ",".join(str(v) for v in self.key()) + ")"


@dataclass(frozen=True)
class ModelConstants:
    A: float
    m: int
    C: float
    eta: float = math.nan
    log_a: float = math.nan


def _bisect(fun, lo, hi, tol=1e-12):
    return brentq(fun, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


def gamma_for(family, rho=None, M=None, sigma=None, c0=None):
    """Root gamma in (0, 1/4) of the family's covering-ratio equation.

    Density families solve 0.13 gamma / sqrt(1 - 4 gamma) = rho. Regression
    solves rho = 0.13/(c2 sqrt(c1)) * gamma / sqrt(1 - 4 gamma) with
    c1 = c_{1,M,sigma}, c2 = 2 (c0 + 2M) and c0 = 2 sigma unless given.
    """
    if family == "spline-regression":
        if M is None or sigma is None or not (M > 0 and sigma > 0):
            raise ValueError("regression gamma needs M > 0 and sigma > 0")
        rho = REGRESSION_RHO if rho is None else rho
        c0 = 2 * sigma if c0 is None else c0
        scale = 0.13 / (2 * (c0 + 2 * M) * math.sqrt(c1_constant(M, sigma)))
    else:
        rho = DEFAULT_RHO if rho is None else rho
        scale = 0.13
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    target = rho / scale
    # g / sqrt(1 - 4g) increases from 0 to infinity on (0, 1/4): a root always exists
    return _bisect(lambda g: g / math.sqrt(1 - 4 * g) - target, 0.0, 0.25 - 1e-16)


def constants_for(index):
    """(A_j, m_j, C_j) with C_j = m_j + L in every family."""
    L = index.L
    if index.family == "spline-density":
        q = index.q
        A = 19.28 * math.sqrt(q) * (2 * q + 1) * 9 ** (q - 1) * (L + 1) * math.exp(L / 2) + 0.06
    elif index.family == "haar-density":
        A = 19.28 * 2 ** ((index.l + 1) / 2) * (2 * L + 1) * math.exp(L) + 0.06
    else:
        q = index.q
        A = 9.64 * math.sqrt(q) * (2 * q + 1) * 9 ** (q - 1) + 0.06
    m = index.m
    return ModelConstants(A=A, m=m, C=float(m + L))


def eta_for(index, gamma, M=None, sigma=None, c0=None, mode="literal"):
    """Model complexity eta_j.

    Density: (4m/(1-4g)) log(46.2 A sqrt(1-4g)/g) + 8C/(1-4g).
    Regression: (4m/(c1 (1-4g))) log(K A) + C max(1, 8/(c1 (1-4g))), where
    K = 1072.5 in ``literal`` mode and 15.4 c2 sqrt(c1) sqrt(1-4g)/g in
    ``lemma10`` mode.
    """
    if not 0 < gamma < 0.25:
        raise ValueError(f"gamma must lie in (0, 0.25), got {gamma}")
    c = constants_for(index)
    w = 1 - 4 * gamma
    if index.family != "spline-regression":
        return 4 * c.m / w * math.log(46.2 * c.A * math.sqrt(w) / gamma) + 8 * c.C / w
    c1 = c1_constant(M, sigma)
    if mode == "literal":
        K = 1072.5
    elif mode == "lemma10":
        c0 = 2 * sigma if c0 is None else c0
        K = 15.4 * 2 * (c0 + 2 * M) * math.sqrt(c1) * math.sqrt(w) / gamma
    else:
        raise ValueError(f"unknown eta mode {mode!r}")
    return 4 * c.m / (c1 * w) * math.log(K * c.A) + c.C * max(1.0, 8 / (c1 * w))


def kappa_for(family, gamma=None, sigma=None):
    if family == "spline-regression":
        return 1 + 1 / (2 * sigma ** 2) + 0.0056 / sigma
    return 1 + (1 - 4 * gamma) / 8


def log_weights(etas, kappa):
    """Normalized log a_j = -kappa eta_j - logsumexp(-kappa eta), and log alpha."""
    etas = np.asarray(etas, dtype=float)
    if etas.size == 0:
        raise ValueError("the truncated model set is empty")
    raw = -kappa * etas
    log_alpha = -logsumexp(raw)
    return raw + log_alpha, float(log_alpha)


def enumerate_models(family, kmax=None, qmax=None, Lmax=None, lmax=None):
    """Lexicographic enumeration of the truncated lattice (bounds inclusive).

    k runs over 0..kmax, q over 1..qmax, L over 1..Lmax, l over 0..lmax.
    """
    defaults = DEFAULT_BOUNDS[family]
    Lmax = defaults["Lmax"] if Lmax is None else int(Lmax)
    if Lmax < 1:
        raise ValueError("Lmax must be >= 1")
    if family == "haar-density":
        lmax = defaults["lmax"] if lmax is None else int(lmax)
        if lmax < 0:
            raise ValueError("lmax must be >= 0")
        return [ModelIndex(family, L=L, l=l) for l, L in
                itertools.product(range(lmax + 1), range(1, Lmax + 1))]
    kmax = defaults["kmax"] if kmax is None else int(kmax)
    qmax = defaults["qmax"] if qmax is None else int(qmax)
    if kmax < 0 or qmax < 1:
        raise ValueError("need kmax >= 0 and qmax >= 1")
    return [ModelIndex(family, L=L, k=k, q=q) for k, q, L in
            itertools.product(range(kmax + 1), range(1, qmax + 1), range(1, Lmax + 1))]


def summability(family, models):
    """Partial sum of e^{-C_j} over `models` and its full-lattice limit."""
    part = math.fsum(math.exp(-constants_for(j).C) for j in models)
    e1 = math.exp(-1.0)
    if family == "haar-density":
        # C = 2^{l+1} + L summed over l >= 0, L >= 1
        limit = sum(math.exp(-(2 ** (l + 1))) for l in range(12)) * e1 / (1 - e1)
    else:
        limit = math.exp(-2.0) / (1 - e1) ** 3
    return part, limit


@dataclass(frozen=True)
class SieveSpec:
    family: str
    gamma: float
    rho: float
    kappa: float
    models: tuple
    log_alpha: float
    bounds: dict = field(default_factory=dict)
    sigma: float = None
    M: float = None
    c0: float = None
    eta_mode: str = "literal"
    tail_bound: float = 0.0

    def __len__(self):
        return len(self.models)

    def indices(self):
        return [j for j, _ in self.models]

    def log_a(self):
        return np.array([c.log_a for _, c in self.models])

    def config(self):
        return {"family": self.family, "gamma": self.gamma, "rho": self.rho,
                "kappa": self.kappa, "bounds": dict(self.bounds), "sigma": self.sigma,
                "M": self.M, "c0": self.c0, "eta_mode": self.eta_mode}


def _tail_bound(family, kappa, gamma, bounds, M, sigma):
    """Crude bound on the excluded weight sum_{j outside} e^{-kappa eta_j}.

    Uses only the C_j part of eta (eta_j >= factor * C_j), so the bound is
    sum over excluded lattice points of e^{-kappa factor C_j}.
    """
    if family == "spline-regression":
        factor = max(1.0, 8 / (c1_constant(M, sigma) * (1 - 4 * gamma)))
    else:
        factor = 8 / (1 - 4 * gamma)
    r = math.exp(-kappa * factor)
    geo = lambda start: r ** start / (1 - r)
    if family == "haar-density":
        lmax, Lmax = bounds["lmax"], bounds["Lmax"]
        tot = 0.0
        for l in range(0, lmax + 40):
            for_L = geo(1) if l > lmax else geo(Lmax + 1)
            tot += r ** (2 ** (l + 1)) * for_L if 2 ** (l + 1) < 1000 else 0.0
        return tot
    kmax, qmax, Lmax = bounds["kmax"], bounds["qmax"], bounds["Lmax"]
    full = geo(0) * geo(1) * geo(1)
    # fraction of the full lattice sum lying outside the box, without cancellation
    log_kept = (math.log1p(-r ** (kmax + 1)) + math.log1p(-r ** qmax)
                + math.log1p(-r ** Lmax))
    return full * -math.expm1(log_kept)


def build_sieve(family, bounds=None, rho=None, sigma=None, M=None, c0=None,
                eta_mode="literal", models=None):
    """Enumerate the truncated lattice and attach constants, eta and log a_j."""
    bounds = dict(DEFAULT_BOUNDS[family], **(bounds or {}))
    if family == "spline-regression":
        if sigma is None or M is None:
            raise ValueError("regression sieves need sigma and M")
        c0 = 2 * sigma if c0 is None else c0
        rho = REGRESSION_RHO if rho is None else rho
        gamma = gamma_for(family, rho=rho, M=M, sigma=sigma, c0=c0)
        kappa = kappa_for(family, sigma=sigma)
    else:
        rho = DEFAULT_RHO if rho is None else rho
        gamma = gamma_for(family, rho=rho)
        kappa = kappa_for(family, gamma=gamma)
    if models is None:
        models = enumerate_models(family, **bounds)
    models = list(models)
    etas = [eta_for(j, gamma, M=M, sigma=sigma, c0=c0, mode=eta_mode) for j in models]
    log_a, log_alpha = log_weights(etas, kappa)
    rows = []
    for j, eta, la in zip(models, etas, log_a):
        c = constants_for(j)
        rows.append((j, ModelConstants(A=c.A, m=c.m, C=c.C, eta=eta, log_a=float(la))))
    return SieveSpec(family=family, gamma=gamma, rho=rho, kappa=kappa, models=tuple(rows),
                     log_alpha=log_alpha, bounds=bounds, sigma=sigma, M=M, c0=c0,
                     eta_mode=eta_mode,
                     tail_bound=_tail_bound(family, kappa, gamma, bounds, M, sigma))


def constraint_for(index, M=None, tol=None):
    """The parameter set Theta_j of a model index as a ConstraintSpec."""
    kw = {} if tol is None else {"tol": tol}
    return ConstraintSpec(index.family, index.basis(), index.L,
                          M=M if index.family == "spline-regression" else None, **kw)
