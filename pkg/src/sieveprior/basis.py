"""B-spline and Haar bases on [0, 1].

The spline bases use the clamped uniform knot layout

    (0, ..., 0, 1/(k+1), ..., k/(k+1), 1, ..., 1)

with each endpoint repeated q times, and are evaluated with the normalized
de Boor-Cox recursion, so the m = k + q functions sum to one. The Haar
basis holds the wavelets psi_{j1,k1}(x) = 2^{j1/2} psi*(2^{j1} x - k1) for
levels 0..l, flattened with the constant function in front.

Boundary convention for both families: intervals are half-open on the
right, except that x = 1 belongs to the last knot interval / last cell.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._quad import panel_rule, sup_grid

__all__ = [
    "KnotVector",
    "SplineBasis",
    "HaarBasis",
    "SupEstimate",
    "make_spline_knots",
    "eval_spline_basis",
    "spline_derivative_values",
    "derivative_coefficients",
    "eval_haar",
    "gram_matrix",
    "sup_norm",
]


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class KnotVector:
    """Clamped uniform knots: q-fold endpoints and k equispaced interior knots."""

    q: int
    k: int
    knots: tuple

    def __post_init__(self):
        if len(self.knots) != 2 * self.q + self.k:
            raise ValueError("knot count must be 2q + k")

    @property
    def array(self):
        return np.asarray(self.knots, dtype=float)


def make_spline_knots(k, q):
    """Knot vector for k interior knots and spline order q."""
    k, q = int(k), int(q)
    if k < 0:
        raise ValueError(f"interior knot count k must be >= 0, got {k}")
    if q < 1:
        raise ValueError(f"spline order q must be >= 1, got {q}")
    interior = [i / (k + 1) for i in range(1, k + 1)]
    return KnotVector(q=q, k=k, knots=tuple([0.0] * q + interior + [1.0] * q))


def _find_spans(t, q, m, x):
    # span mu satisfies t[mu] <= x < t[mu + 1]; x = 1 goes to the last interval
    span = np.searchsorted(t, x, side="right") - 1
    return np.clip(span, q - 1, m - 1)


def _basis_funs(t, q, x, span):
    """Non-zero order-q B-splines at x: column r is B_{span-q+1+r}."""
    n = x.shape[0]
    vals = np.zeros((n, q))
    vals[:, 0] = 1.0
    left = np.zeros((n, q))
    right = np.zeros((n, q))
    for j in range(1, q):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return vals


@dataclass(frozen=True)
class SplineBasis:
    """Normalized B-spline basis of order q on the clamped uniform knots."""

    knots: KnotVector
    _t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = self.knots.array
        t.flags.writeable = False
        object.__setattr__(self, "_t", t)

    @classmethod
    def from_kq(cls, k, q):
        return cls(make_spline_knots(k, q))

    @property
    def q(self):
        return self.knots.q

    @property
    def k(self):
        return self.knots.k

    @property
    def m(self):
        return self.knots.k + self.knots.q

    @property
    def breakpoints(self):
        return np.linspace(0.0, 1.0, self.k + 2)

    def local(self, x):
        """Spans and the q non-vanishing basis values at each point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        span = _find_spans(self._t, self.q, self.m, x)
        return span, _basis_funs(self._t, self.q, x, span)

    def __call__(self, x):
        """Dense (len(x), m) matrix of basis values; no range check."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        span, vals = self.local(x)
        out = np.zeros((x.shape[0], self.m))
        rows = np.arange(x.shape[0])[:, None]
        cols = span[:, None] - self.q + 1 + np.arange(self.q)[None, :]
        out[rows, cols] = vals
        return out

    def combine(self, theta, x):
        """theta'B(x) via the local values; theta may be (m,) or (m, p)."""
        theta = np.asarray(theta, dtype=float)
        span, vals = self.local(x)
        cols = span[:, None] - self.q + 1 + np.arange(self.q)[None, :]
        if theta.ndim == 1:
            return np.sum(vals * theta[cols], axis=1)
        return np.einsum("nr,nrp->np", vals, theta[cols])

    def lower(self, r):
        """Basis holding the r-th derivatives: same interior knots, order q - r."""
        return SplineBasis.from_kq(self.k, self.q - r)


def eval_spline_basis(basis, x):
    """Values (B_1(x), ..., B_m(x)) of the basis at a point or array of points."""
    x = _check_unit(x)
    out = basis(np.atleast_1d(x))
    return out[0] if np.ndim(x) == 0 else out


def derivative_coefficients(basis, theta, r):
    """Coefficients of D^r(theta'B) in the order q - r basis.

    Uses the exact recursion c'_i = (p - 1)(c_{i+1} - c_i) / (t_{i+p} - t_{i+1})
    for an order-p spline on knots t, applied r times.
    """
    theta = np.asarray(theta, dtype=float)
    r = int(r)
    if r < 0 or r >= basis.q:
        raise ValueError(f"derivative order r must satisfy 0 <= r < q = {basis.q}, got {r}")
    if theta.shape[0] != basis.m:
        raise ValueError(f"expected {basis.m} coefficients, got {theta.shape[0]}")
    t = basis.knots.array
    c = theta
    p = basis.q
    for _ in range(r):
        span = t[p:p + c.shape[0] - 1] - t[1:c.shape[0]]
        diff = np.diff(c, axis=0)
        if c.ndim > 1:
            span = span[:, None]
        c = (p - 1) * diff / span
        t = t[1:-1]
        p -= 1
    return c


def spline_derivative_values(basis, theta, r, x):
    """D^r(theta'B)(x), evaluated through the derivative coefficient recursion."""
    x = _check_unit(x)
    coef = derivative_coefficients(basis, theta, r)
    vals = basis.lower(r).combine(coef, np.atleast_1d(x))
    return float(vals[0]) if np.ndim(x) == 0 else vals


# ---------------------------------------------------------------------------
# Haar basis


@dataclass(frozen=True)
class HaarBasis:
    """Haar wavelets up to level l, flattened as i = 2^{j1} + k1 (constant is 0).

    Coefficient vectors pair with the m - 1 = 2^{l+1} - 1 wavelets; the
    constant function is carried only by :meth:`full` and the Gram matrix.
    """

    level: int

    def __post_init__(self):
        if int(self.level) < 0:
            raise ValueError(f"Haar level must be >= 0, got {self.level}")

    @property
    def m(self):
        return 2 ** (self.level + 1)

    @property
    def cells(self):
        return 2 ** (self.level + 1)

    @property
    def breakpoints(self):
        return np.linspace(0.0, 1.0, self.cells + 1)

    @staticmethod
    def flat_index(j1, k1):
        return 2 ** j1 + k1

    @staticmethod
    def level_shift(i):
        if i < 1:
            raise ValueError("wavelet flat indices start at 1")
        j1 = int(i).bit_length() - 1
        return j1, int(i) - 2 ** j1

    def synthesis_matrix(self):
        """(cells, m - 1) matrix of wavelet values on each finest cell."""
        ncell = self.cells
        out = np.zeros((ncell, self.m - 1))
        for i in range(1, self.m):
            j1, k1 = self.level_shift(i)
            width = ncell >> j1
            start = k1 * width
            amp = 2.0 ** (j1 / 2)
            out[start:start + width // 2, i - 1] = amp
            out[start + width // 2:start + width, i - 1] = -amp
        return out

    def cell_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.minimum((x * self.cells).astype(int), self.cells - 1)

    def __call__(self, x):
        """(len(x), m - 1) matrix of wavelet values."""
        return self.synthesis_matrix()[self.cell_of(x)]

    def full(self, x):
        """(len(x), m) matrix with the constant function in column 0."""
        w = self(x)
        return np.hstack([np.ones((w.shape[0], 1)), w])

    def combine(self, theta, x):
        theta = np.asarray(theta, dtype=float)
        return self(x) @ theta

    def cell_values(self, theta):
        """theta'B on each finest cell, exact (level by level, no dense matrix)."""
        theta = np.asarray(theta, dtype=float)
        ncell = self.cells
        out = np.zeros((ncell,) + theta.shape[1:])
        for j1 in range(self.level + 1):
            coef = theta[2 ** j1 - 1:2 ** (j1 + 1) - 1] * 2.0 ** (j1 / 2)
            half = ncell >> (j1 + 1)
            signed = np.stack([coef, -coef], axis=1).reshape((2 * coef.shape[0],) + coef.shape[1:])
            out += np.repeat(signed, half, axis=0)
        return out


def eval_haar(l, j1, k1, x):
    """psi_{j1,k1}(x) = 2^{j1/2} psi*(2^{j1} x - k1) for a level-l basis."""
    l, j1, k1 = int(l), int(j1), int(k1)
    if not 0 <= j1 <= l:
        raise ValueError(f"need 0 <= j1 <= l, got j1={j1}, l={l}")
    if not 0 <= k1 <= 2 ** j1 - 1:
        raise ValueError(f"need 0 <= k1 <= 2^j1 - 1, got k1={k1}")
    x = _check_unit(x)
    xs = np.atleast_1d(x)
    ncell = 2 ** (j1 + 1)
    cell = np.minimum((xs * ncell).astype(int), ncell - 1)
    val = np.where(cell == 2 * k1, 1.0, np.where(cell == 2 * k1 + 1, -1.0, 0.0))
    val = val * 2.0 ** (j1 / 2)
    return float(val[0]) if np.ndim(x) == 0 else val


# ---------------------------------------------------------------------------
# Gram matrices and sup norms


def gram_matrix(basis):
    """L2[0, 1] inner products of the basis functions.

    Spline bases are integrated per knot interval with a Gauss rule that is
    exact for the piecewise polynomial products. For the Haar basis the
    constant function is included, giving the m x m identity.
    """
    if isinstance(basis, HaarBasis):
        nodes, weights = panel_rule(basis.breakpoints, 1)
        vals = basis.full(nodes)
    else:
        nodes, weights = panel_rule(basis.breakpoints, basis.q + 1)
        vals = basis(nodes)
    gram = (vals * weights[:, None]).T @ vals
    return 0.5 * (gram + gram.T)


class SupEstimate(NamedTuple):
    """Grid maximum of |g| and the B-spline coefficient bound max|c_i|."""

    grid: float
    coef_bound: float


def sup_norm(basis, theta, r=0, per_panel=4097):
    """Estimate sup |D^r(theta'B)| on [0, 1].

    The grid value is the maximum over `per_panel` points in every knot
    interval (exact at the knots for q - r <= 2, where the spline is piecewise
    linear or constant). The coefficient bound is a guaranteed upper bound.
    """
    if isinstance(basis, HaarBasis):
        if r != 0:
            raise ValueError("Haar functions have no derivatives")
        v = float(np.max(np.abs(basis.cell_values(theta))))
        return SupEstimate(v, v)
    coef = derivative_coefficients(basis, theta, r)
    bound = float(np.max(np.abs(coef)))
    if basis.q - r <= 2:
        # piecewise linear or constant: extrema sit at the coefficients
        return SupEstimate(bound, bound)
    grid = sup_grid(basis.breakpoints, per_panel)
    vals = basis.lower(r).combine(coef, grid)
    return SupEstimate(float(np.max(np.abs(vals))), bound)
