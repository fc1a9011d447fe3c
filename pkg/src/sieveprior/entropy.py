"""Covering and packing numbers of finite point clouds in model parameter sets.

Points are represented through feature vectors whose max-norm (``sup``) or
Euclidean norm (``hellinger``, ``l2``) differences equal the metric of
interest, so every distance query is a vectorised norm.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from ._kit import ModelKit
from .sieve import constants_for

__all__ = [
    "MetricSpace",
    "covering_number_upper",
    "greedy_cover",
    "packing_number_lower",
    "model_cloud",
    "CoveringRow",
    "verify_assumption_1",
    "ball_inclusion_check",
    "ball_mass_ratio",
]

_NORMS = ("sup", "euclidean")


@dataclass(frozen=True)
class MetricSpace:
    """A finite point cloud with a feature map realising the metric.

    ``points`` are the parameters (one row each); ``features`` are rows whose
    norm differences give distances; ``norm`` is ``"sup"`` or ``"euclidean"``.
    """

    points: np.ndarray
    features: np.ndarray
    norm: str = "sup"

    def __post_init__(self):
        if self.norm not in _NORMS:
            raise ValueError(f"norm must be one of {_NORMS}, got {self.norm!r}")
        pts = np.asarray(self.points, dtype=float)
        feats = np.asarray(self.features, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if feats.ndim == 1:
            feats = feats[:, None]
        if pts.shape[0] != feats.shape[0]:
            raise ValueError("points and features must have the same number of rows")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "features", feats)

    @classmethod
    def euclidean_line(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(values[:, None], values[:, None], "sup")

    def __len__(self):
        return self.points.shape[0]

    def distances_to(self, i, rows=None):
        """Distances from point i to `rows` (all points by default)."""
        feats = self.features if rows is None else self.features[rows]
        diff = feats - self.features[i]
        if self.norm == "sup":
            return np.max(np.abs(diff), axis=1)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def distances_from(self, feature_row, rows=None):
        feats = self.features if rows is None else self.features[rows]
        diff = feats - np.asarray(feature_row, dtype=float)
        if self.norm == "sup":
            return np.max(np.abs(diff), axis=1)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _region(space, region):
    idx = np.arange(len(space)) if region is None else np.asarray(region)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise ValueError("the region is empty")
    return idx


def greedy_cover(space, delta, region=None, method="sweep", max_candidates=64):
    """Centres of a greedy delta-cover of `region`.

    ``sweep``: repeatedly take the first uncovered point p (in cloud order)
    and, among up to `max_candidates` points within delta of p, choose the
    centre covering the most uncovered points. On a line this is the optimal
    interval sweep. ``farthest``: farthest-point traversal, stopping when
    every point is within delta of a centre.

    Centres are drawn from the region itself, so each ball is centred at a
    member of the covered set.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    idx = _region(space, region)
    if method == "farthest":
        return _farthest_cover(space, delta, idx)
    if method != "sweep":
        raise ValueError(f"unknown cover method {method!r}")
    uncovered = np.ones(idx.size, dtype=bool)
    centres = []
    while uncovered.any():
        first = int(np.flatnonzero(uncovered)[0])
        near = np.flatnonzero(space.distances_to(idx[first], idx) <= delta)
        if near.size > max_candidates:
            near = near[np.linspace(0, near.size - 1, max_candidates).astype(int)]
        open_rows = idx[uncovered]
        best, best_hit = idx[first], None
        for c in near:
            hit = space.distances_to(idx[c], open_rows) <= delta
            count = int(hit.sum())
            if best_hit is None or count > best_hit.sum():
                best, best_hit = idx[c], hit
        pos = np.flatnonzero(uncovered)
        uncovered[pos[best_hit]] = False
        centres.append(int(best))
    return np.array(centres, dtype=int)


def _farthest_cover(space, delta, idx):
    centres = [int(idx[0])]
    dist = space.distances_to(idx[0], idx)
    while dist.max() > delta:
        nxt = int(np.argmax(dist))
        centres.append(int(idx[nxt]))
        dist = np.minimum(dist, space.distances_to(idx[nxt], idx))
    return np.array(centres, dtype=int)


def covering_number_upper(space, delta, region=None, method="sweep"):
    """Greedy upper bound on N(region, delta, d)."""
    return int(greedy_cover(space, delta, region, method).size)


def packing_number_lower(space, delta, region=None):
    """Size of a greedy maximal delta-separated subset (strict separation).

    Any such set lower-bounds the covering number N(region, delta/2, d).
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    idx = _region(space, region)
    chosen = [int(idx[0])]
    mind = space.distances_to(idx[0], idx)
    while True:
        far = np.flatnonzero(mind > delta)
        if far.size == 0:
            break
        nxt = int(idx[far[0]])
        chosen.append(nxt)
        mind = np.minimum(mind, space.distances_to(nxt, idx))
    return len(chosen)


# ---------------------------------------------------------------------------
# model point clouds


def model_cloud(index, size, seed, M=None, sigma=None):
    """Scrambled-Sobol cloud over the model's bounding box, kept where theta is in Theta_j.

    Returns (kit, thetas). Zero-dimensional models yield their single point.
    """
    kit = ModelKit(index, M=M, sigma=sigma)
    if kit.free_dim == 0:
        return kit, kit.embed(np.zeros((1, 0)))
    sampler = qmc.Sobol(d=kit.free_dim, scramble=True, seed=np.random.default_rng(seed))
    u = sampler.random_base2(max(int(math.ceil(math.log2(size))), 0))[:size]
    z = (2 * u - 1) * kit.half_widths
    thetas = kit.embed(z)
    return kit, thetas[kit.mask(thetas)]


@dataclass(frozen=True)
class CoveringRow:
    r: float
    delta: float
    centre: int
    ball_size: int
    covering: int
    bound: float
    global_covering: int
    global_bound: float

    @property
    def ratio(self):
        return self.covering / self.bound

    @property
    def global_ratio(self):
        return self.global_covering / self.global_bound


def verify_assumption_1(index, gamma=None, trials=20, rho=0.056, cloud_size=2 ** 14, seed=0,
                        r_range=(0.05, 0.5), truth=None, method="sweep", M=None, sigma=None):
    """Greedy covering counts of Hellinger balls under d_{j,inf} against (A r/delta)^m.

    For each trial a centre theta, radius r and delta <= rho r are drawn; the
    Hellinger ball B_{d_H,j}(theta, r) restricted to the cloud is covered
    greedily in the sup metric and compared with (A_j r/delta)^{m_j}. The
    global ball {d_H(f_o, f_theta) <= r} is compared with (3 A_j r/delta)^{m_j}
    (`truth` defaults to the uniform density). `gamma` is recorded only.
    """
    if index.m > 3:
        raise ValueError(f"brute-force covering needs m <= 3, got m = {index.m}")
    if index.family == "spline-regression":
        raise ValueError("Hellinger balls are defined for the density families")
    kit, thetas = model_cloud(index, cloud_size, seed)
    sup_space = MetricSpace(thetas, kit.features(thetas, "sup"), "sup")
    hel = kit.features(thetas, "hellinger")
    hel_space = MetricSpace(thetas, hel, "euclidean")
    if truth is None:
        truth_feat = kit.features(np.zeros((1, index.coef_dim)), "hellinger")[0]
    else:
        truth_feat = kit.truth_features(truth, "hellinger")[0]
    to_truth = hel_space.distances_from(truth_feat)
    c = constants_for(index)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        centre = int(rng.integers(len(thetas)))
        r = float(np.exp(rng.uniform(*np.log(r_range))))
        delta = float(rho * r * rng.uniform(0.25, 1.0))
        ball = np.flatnonzero(hel_space.distances_to(centre) <= r)
        cover = covering_number_upper(sup_space, delta, ball, method)
        glob = np.flatnonzero(to_truth <= r)
        gcover = covering_number_upper(sup_space, delta, glob, method) if glob.size else 0
        rows.append(CoveringRow(r=r, delta=delta, centre=centre, ball_size=int(ball.size),
                                covering=cover, bound=(c.A * r / delta) ** c.m,
                                global_covering=gcover,
                                global_bound=(3 * c.A * r / delta) ** c.m))
    return rows


def ball_inclusion_check(index, radii, truth=None, cloud_size=10 ** 5, seed=0):
    """Pointwise check of B_{d_H}(f_o, r) inside B_{d_H}(theta*, 3r) on a cloud.

    theta* is the cloud point closest to f_o. Returns a list of
    (r, ball_size, worst_ratio) where worst_ratio = max d_H(theta*, theta)/(3r)
    over the global ball; the inclusion holds when it is <= 1.
    """
    kit, thetas = model_cloud(index, cloud_size, seed)
    feats = kit.features(thetas, "hellinger")
    space = MetricSpace(thetas, feats, "euclidean")
    if truth is None:
        tf = kit.features(np.zeros((1, index.coef_dim)), "hellinger")[0]
    else:
        tf = kit.truth_features(truth, "hellinger")[0]
    to_truth = space.distances_from(tf)
    star = int(np.argmin(to_truth))
    from_star = space.distances_to(star)
    out = []
    for r in radii:
        ball = to_truth <= r
        worst = float(np.max(from_star[ball]) / (3 * r)) if ball.any() else 0.0
        out.append((float(r), int(ball.sum()), worst))
    return out


def ball_mass_ratio(index, center_a, center_b, epsilon, mc_samples=10 ** 5, seed=0,
                    M=None, sigma=None):
    """pi_j(B(center_b, eps)) / pi_j(B(center_a, eps)) in d_{j,inf} by box sampling.

    Both balls are estimated from the same uniform draws; the standard error
    comes from the delta method for a ratio of correlated means.
    Returns (ratio, standard_error).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    kit = ModelKit(index, M=M, sigma=sigma)
    rng = np.random.default_rng(seed)
    z = kit.draw_free(rng, int(mc_samples))
    thetas = kit.embed(z)
    ok = kit.mask(thetas)
    feats = kit.features(thetas[ok], "sup")
    centres = kit.features(np.vstack([center_a, center_b]), "sup")
    in_a = np.zeros(thetas.shape[0])
    in_b = np.zeros(thetas.shape[0])
    in_a[ok] = np.max(np.abs(feats - centres[0]), axis=1) <= epsilon
    in_b[ok] = np.max(np.abs(feats - centres[1]), axis=1) <= epsilon
    ma, mb = in_a.mean(), in_b.mean()
    if ma == 0:
        raise ValueError("no draw fell in the ball around center_a; epsilon too small "
                         "for this sample size")
    ratio = mb / ma
    n = thetas.shape[0]
    resid = in_b - ratio * in_a
    se = math.sqrt(resid.var(ddof=1) / n) / ma
    return float(ratio), float(se)
