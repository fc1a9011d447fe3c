"""Panel-aligned Gauss-Legendre quadrature on [0, 1]."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def panel_rule(breaks, order):
    """Composite Gauss rule with `order` nodes on every panel between breaks.

    Returns the nodes and weights as flat arrays. Zero-width panels are
    dropped, so repeated breakpoints are harmless.
    """
    breaks = np.unique(np.asarray(breaks, dtype=float))
    a, b = breaks[:-1], breaks[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    t, w = _leggauss(int(order))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def merge_breaks(*groups, base=None):
    """Union of breakpoint arrays, always containing 0 and 1."""
    parts = [np.array([0.0, 1.0])]
    if base is not None:
        parts.append(np.linspace(0.0, 1.0, int(base) + 1))
    parts.extend(np.asarray(g, dtype=float) for g in groups if g is not None)
    return np.unique(np.clip(np.concatenate(parts), 0.0, 1.0))


def integrate(fun, breaks, rtol=1e-12, atol=0.0, order=8, max_order=512):
    """Integrate a vectorised `fun` over [0, 1] by order doubling.

    The node count per panel is doubled until two successive estimates
    agree to `rtol` (relative) or `atol`. Raises if the integrand never
    settles.
    """
    nodes, weights = panel_rule(breaks, order)
    prev = float(np.dot(weights, fun(nodes)))
    while order < max_order:
        order *= 2
        nodes, weights = panel_rule(breaks, order)
        cur = float(np.dot(weights, fun(nodes)))
        if abs(cur - prev) <= max(rtol * abs(cur), atol):
            return cur
        prev = cur
    raise ArithmeticError(f"quadrature did not converge (last change {abs(cur - prev):.3e})")


def sup_grid(breaks, per_panel=4097):
    """Evaluation points for sup-norm estimates: a uniform grid per panel.

    Panel end points are pulled inward by a relative 1e-13 so that one-sided
    limits of piecewise functions are sampled on both sides of a break.
    """
    breaks = np.unique(np.asarray(breaks, dtype=float))
    a, b = breaks[:-1], breaks[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    s = np.linspace(0.0, 1.0, int(per_panel))
    eps = 1e-13
    s[0], s[-1] = eps, 1.0 - eps
    return (a[:, None] + (b - a)[:, None] * s[None, :]).ravel()
