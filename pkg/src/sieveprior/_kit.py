"""Per-model sampling kit: bounding box, affine embedding, likelihoods, distances.

A kit turns "free" coordinates z (uniform over a box) into coefficient
vectors theta = T z of one model, decides membership in Theta_j, and evaluates
log-likelihoods and distances to a truth for many theta at once.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import merge_breaks, panel_rule, sup_grid
from .basis import HaarBasis, gram_matrix
from .expfam import membership_mask, psi_batch
from .sieve import constraint_for

__all__ = ["ModelKit"]


def _node_rule(*breaks, base=16, order=16):
    return panel_rule(merge_breaks(*breaks, base=base), order)


@dataclass(frozen=True)
class ModelKit:
    """Sampling and evaluation helpers for one model index."""

    index: object
    M: float = None
    sigma: float = None
    spec: object = field(init=False, repr=False)
    half_widths: np.ndarray = field(init=False, repr=False)
    transform: np.ndarray = field(init=False, repr=False)
    log_jacobian: float = field(init=False, repr=False)

    def __post_init__(self):
        j = self.index
        if j.family == "spline-regression" and (self.M is None or self.sigma is None):
            raise ValueError("regression kits need M and sigma")
        object.__setattr__(self, "spec", constraint_for(j, M=self.M))
        if j.family == "haar-density":
            levels = np.array([HaarBasis.level_shift(i)[0] for i in range(1, j.m)])
            w = j.L * 2.0 ** (-levels / 2)
            T = np.eye(j.m - 1)
        elif j.family == "spline-density":
            w, T = self._spline_density_box()
        else:
            w, T = self._regression_box()
        w = np.asarray(w, dtype=float)
        w.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "half_widths", w)
        object.__setattr__(self, "transform", T)
        if T.shape[1]:
            _, logdet = np.linalg.slogdet(T.T @ T)
            object.__setattr__(self, "log_jacobian", 0.5 * float(logdet))
        else:
            object.__setattr__(self, "log_jacobian", 0.0)

    def _chain_transform(self, with_level):
        """Linear map from derivative-chain coordinates to B-spline coefficients.

        Coordinates are the left-end derivative values D^r g(0) = c^{(r)}_1
        for r = 1..q-2 (and r = 0 when `with_level`), followed by all
        coefficients of D^{q-1} g. Each is bounded by L, because clamped
        splines interpolate their end coefficients and D^{q-1} g is piecewise
        constant with its coefficients as values. Coefficients are rebuilt by
        c^{(r)}_{i+1} = c^{(r)}_i + c^{(r+1)}_i (t_{i+p} - t_{i+1})/(p - 1).
        """
        j = self.index
        m, q = j.m, j.q
        t_full = self.spec.basis.knots.array
        starts = list(range(0 if with_level else 1, q - 1))
        dim = len(starts) + (m - q + 1)

        def build(u):
            c = u[len(starts):]
            for r in range(q - 2, -1, -1):
                p = q - r
                t = t_full[r:t_full.size - r]
                span = t[p:p + c.size] - t[1:c.size + 1]
                first = u[starts.index(r)] if r in starts else 0.0
                c = np.concatenate([[first], first + np.cumsum(c * span / (p - 1))])
            return c

        return np.column_stack([build(e) for e in np.eye(dim)]) if dim else np.zeros((m, 0))

    def _spline_density_box(self):
        j = self.index
        m = j.m
        if j.q == 1:
            # free coordinates theta_1..theta_{m-1}, theta_m = -sum
            T = np.vstack([np.eye(m - 1), -np.ones((1, m - 1))]) if m > 1 else np.zeros((1, 0))
            return np.full(m - 1, 2.0 * j.L), T
        # the level is fixed afterwards by the zero-sum constraint
        T = self._chain_transform(with_level=False)
        T = T - T.mean(axis=0, keepdims=True)
        return np.full(m - 1, float(j.L)), T

    def _regression_box(self):
        j = self.index
        m = j.m
        level = min(j.L, self.M)
        if j.q == 1:
            return np.full(m, level), np.eye(m)
        T = self._chain_transform(with_level=True)
        return np.concatenate([[level], np.full(m - 1, float(j.L))]), T

    # geometry ---------------------------------------------------------------

    @property
    def family(self):
        return self.index.family

    @property
    def basis(self):
        return self.spec.basis

    @property
    def free_dim(self):
        return self.half_widths.shape[0]

    @property
    def log_volume(self):
        """Log Lebesgue volume of the sampling region inside the affine hull."""
        return float(np.sum(np.log(2 * self.half_widths))) + self.log_jacobian

    def draw_free(self, rng, n):
        u = rng.random((n, self.free_dim))
        return (2 * u - 1) * self.half_widths

    def embed(self, z):
        z = np.asarray(z, dtype=float)
        if z.ndim != 2:
            z = z.reshape(-1, self.free_dim)
        return z @ self.transform.T

    def in_box(self, z):
        return np.all(np.abs(z) <= self.half_widths, axis=1)

    def mask(self, thetas):
        thetas = np.atleast_2d(thetas)
        if thetas.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        return membership_mask(thetas, self.spec)

    # likelihood ---------------------------------------------------------------

    def design(self, x):
        return self.basis(np.asarray(x, dtype=float))

    def psi(self, thetas):
        thetas = np.atleast_2d(thetas)
        if thetas.shape[1] == 0:
            return np.zeros(thetas.shape[0])
        return psi_batch(self.basis, thetas)

    def log_pdf(self, thetas, x):
        """(len(thetas), len(x)) log-densities or regression values."""
        thetas = np.atleast_2d(thetas)
        vals = thetas @ self.design(x).T
        if self.family == "spline-regression":
            return vals
        return vals - self.psi(thetas)[:, None]

    def statistics(self, data):
        """Sufficient statistics of a dataset for this model."""
        if self.family == "spline-regression":
            X, Y = data.x, data.y
            B = self.design(X)
            return {"n": X.shape[0], "BtB": B.T @ B, "BtY": B.T @ Y, "YtY": float(Y @ Y)}
        X = data.x
        return {"n": X.shape[0], "S": self.design(X).sum(axis=0) if X.shape[0] else
                np.zeros(self.basis.m - 1 if isinstance(self.basis, HaarBasis) else self.basis.m)}

    def log_likelihood(self, thetas, stats):
        """Log-likelihood of each row of `thetas` from precomputed statistics."""
        thetas = np.atleast_2d(thetas)
        n = stats["n"]
        if self.family == "spline-regression":
            s = self.sigma
            quad = np.einsum("ij,jk,ik->i", thetas, stats["BtB"], thetas)
            rss = stats["YtY"] - 2 * thetas @ stats["BtY"] + quad
            return -n * math.log(math.sqrt(2 * math.pi) * s) - rss / (2 * s * s)
        if n == 0:
            return np.zeros(thetas.shape[0])
        return thetas @ stats["S"] - n * self.psi(thetas)

    # distances to a truth -----------------------------------------------------------

    def distance_evaluator(self, truth):
        """Callable thetas -> distance to `truth` (Hellinger or L2)."""
        breaks = getattr(truth, "breakpoints", None)
        if self.family == "spline-regression":
            gram = gram_matrix(self.basis)
            nodes, weights = _node_rule(self.basis.breakpoints, breaks, base=64, order=24)
            fo = np.asarray(truth(nodes), dtype=float)
            b = self.design(nodes).T @ (weights * fo)
            c = float(weights @ (fo * fo))

            def l2(thetas):
                thetas = np.atleast_2d(thetas)
                sq = np.einsum("ij,jk,ik->i", thetas, gram, thetas) - 2 * thetas @ b + c
                return np.sqrt(np.maximum(sq, 0.0))

            return l2
        nodes, weights = _node_rule(self.basis.breakpoints, breaks, base=32, order=16)
        root_o = np.exp(0.5 * truth.log_pdf(nodes))

        def hellinger(thetas):
            thetas = np.atleast_2d(thetas)
            out = np.empty(thetas.shape[0])
            for lo in range(0, thetas.shape[0], 4096):
                part = thetas[lo:lo + 4096]
                root = np.exp(0.5 * self.log_pdf(part, nodes))
                out[lo:lo + 4096] = np.sqrt(np.maximum(((root - root_o) ** 2) @ weights, 0.0))
            return out

        return hellinger

    def features(self, thetas, metric, per_panel=65, order=16):
        """Embed thetas so a norm of feature differences equals the metric.

        ``sup``: values of log f (or f) on a grid, compared in max-norm
        (exact for q <= 2 and Haar, where the extremes sit on the grid).
        ``hellinger`` / ``l2``: weighted root-density (or function) values at
        Gauss nodes, compared in Euclidean norm.
        """
        thetas = np.atleast_2d(thetas)
        if metric == "sup":
            if isinstance(self.basis, HaarBasis) or self.basis.q == 1:
                b = self.basis.breakpoints
                grid = 0.5 * (b[:-1] + b[1:])
            elif self.basis.q == 2:
                grid = self.basis.breakpoints
            else:
                grid = sup_grid(self.basis.breakpoints, per_panel)
            return self.log_pdf(thetas, grid)
        nodes, weights = _node_rule(self.basis.breakpoints, base=8, order=order)
        return self._weighted(self.log_pdf(thetas, nodes), weights, metric)

    def truth_features(self, truth, metric, order=16):
        """Features of a truth on the same rule as :meth:`features`."""
        if metric == "sup":
            raise ValueError("sup features are defined for model members only")
        nodes, weights = _node_rule(self.basis.breakpoints, base=8, order=order)
        if self.family == "spline-regression":
            vals = np.asarray(truth(nodes), dtype=float)[None, :]
        else:
            vals = np.asarray(truth.log_pdf(nodes), dtype=float)[None, :]
        return self._weighted(vals, weights, metric)

    def _weighted(self, vals, weights, metric):
        if metric == "hellinger":
            if self.family == "spline-regression":
                raise ValueError("the Hellinger feature map is for density families")
            return np.exp(0.5 * vals) * np.sqrt(weights)
        if metric == "l2":
            if self.family != "spline-regression":
                vals = np.exp(vals)
            return vals * np.sqrt(weights)
        raise ValueError(f"unknown metric {metric!r}")
