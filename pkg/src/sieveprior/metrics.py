"""Distances and divergences between densities and regression functions on [0, 1].

Density arguments are objects with a vectorised ``log_pdf`` and a
``breakpoints`` array (see :class:`sieveprior.expfam.ExpFamDensity`);
regression functions are callables, optionally with ``breakpoints``.
All integrals use Gauss panels aligned to the union of both arguments'
breakpoints.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._quad import integrate, merge_breaks, panel_rule, sup_grid

__all__ = [
    "DivergenceReport",
    "divergences",
    "l2_distance",
    "gaussian_closed_forms",
    "gaussian_hellinger_constant",
    "c1_constant",
    "barron_sheu_terms",
    "sup_log_ratio",
]


@dataclass(frozen=True)
class DivergenceReport:
    hellinger: float
    kl_D: float
    v: float
    v_centered: float
    l2: float
    sup_log_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def _breaks_of(*objs, base=None):
    return merge_breaks(*(getattr(o, "breakpoints", None) for o in objs), base=base)


def sup_log_ratio(f, g, per_panel=257):
    grid = sup_grid(_breaks_of(f, g), per_panel)
    return float(np.max(np.abs(f.log_pdf(grid) - g.log_pdf(grid))))


def divergences(f, g, rtol=1e-9, smooth_panels=16):
    """Hellinger, KL, second log-ratio moment and friends of f against g.

    Returns d_H(f, g), D(f||g), V(f||g), V'(f||g) = V - D^2 (clamped at 0),
    the L2 distance and sup |log f - log g|. Panels are the union of both
    breakpoint sets, refined to at least `smooth_panels` uniform panels for
    densities that carry no breakpoints of their own.
    """
    breaks = _breaks_of(f, g, base=smooth_panels)
    probe = panel_rule(breaks, 4)[0]
    if not (np.all(np.isfinite(f.log_pdf(probe))) and np.all(np.isfinite(g.log_pdf(probe)))):
        raise ValueError("densities must be strictly positive and finite on [0, 1]")

    def q(fun):
        return integrate(fun, breaks, rtol=rtol, atol=1e-15, order=8)

    def lr(x):
        return f.log_pdf(x) - g.log_pdf(x)

    hsq = q(lambda x: (np.exp(0.5 * f.log_pdf(x)) - np.exp(0.5 * g.log_pdf(x))) ** 2)
    kl = q(lambda x: np.exp(f.log_pdf(x)) * lr(x))
    v = q(lambda x: np.exp(f.log_pdf(x)) * lr(x) ** 2)
    l2sq = q(lambda x: (np.exp(f.log_pdf(x)) - np.exp(g.log_pdf(x))) ** 2)
    v_c = max(v - kl * kl, 0.0)
    return DivergenceReport(
        hellinger=math.sqrt(max(hsq, 0.0)),
        kl_D=max(kl, 0.0),
        v=v,
        v_centered=v_c,
        l2=math.sqrt(max(l2sq, 0.0)),
        sup_log_ratio=sup_log_ratio(f, g),
    )


def l2_distance(u, v, breakpoints=None, rtol=1e-10, smooth_panels=16):
    """sqrt(int_0^1 (u - v)^2 dx) for bounded functions, Lebesgue measure."""
    breaks = merge_breaks(getattr(u, "breakpoints", None), getattr(v, "breakpoints", None),
                          breakpoints, base=smooth_panels)
    val = integrate(lambda x: (np.asarray(u(x), float) - np.asarray(v(x), float)) ** 2,
                    breaks, rtol=rtol, atol=1e-24)
    return math.sqrt(max(val, 0.0))


def gaussian_closed_forms(f_o, f, sigma, breakpoints=None, rtol=1e-10, smooth_panels=16):
    """(D, V, d_H^2) between the Gaussian regression laws of f_o and f.

    With X uniform on [0, 1] and Y | X ~ N(f(X), sigma^2) the y-integrals are
    analytic:

        D     = ||f_o - f||^2 / (2 sigma^2)
        V     = ||f_o - f||^2 / sigma^2 + int (f_o - f)^4 / (4 sigma^4)
        d_H^2 = 2 int (1 - exp(-(f - f_o)^2 / (8 sigma^2)))
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    breaks = merge_breaks(getattr(f_o, "breakpoints", None), getattr(f, "breakpoints", None),
                          breakpoints, base=smooth_panels)

    def gap(x):
        return np.asarray(f_o(x), float) - np.asarray(f(x), float)

    sq = integrate(lambda x: gap(x) ** 2, breaks, rtol=rtol, atol=1e-24)
    quart = integrate(lambda x: gap(x) ** 4, breaks, rtol=rtol, atol=1e-24)
    hsq = integrate(lambda x: -2.0 * np.expm1(-gap(x) ** 2 / (8 * sigma ** 2)), breaks,
                    rtol=rtol, atol=1e-24)
    return sq / (2 * sigma ** 2), sq / sigma ** 2 + quart / (4 * sigma ** 4), hsq


def gaussian_hellinger_constant(M, sigma):
    """c_{0,M,sigma} = (1 - exp(-M^2/(2 sigma^2))) / (2 M^2)."""
    return -math.expm1(-M * M / (2 * sigma * sigma)) / (2 * M * M)


def c1_constant(M, sigma):
    """c_{1,M,sigma} = min(c_{0,M,sigma}, 1/(2 sigma^2))."""
    return min(gaussian_hellinger_constant(M, sigma), 1.0 / (2 * sigma * sigma))


def barron_sheu_terms(z):
    """Lower bound, middle term and upper bound of the exponential sandwich

    (z^2/2) e^{-max(-z,0)} <= e^z - 1 - z <= (z^2/2) e^{max(z,0)}.
    """
    z = np.asarray(z, dtype=float)
    half = 0.5 * z * z
    mid = np.expm1(z) - z
    return half * np.exp(-np.maximum(-z, 0.0)), mid, half * np.exp(np.maximum(z, 0.0))
