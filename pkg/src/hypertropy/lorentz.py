"""Lorentz (hyperboloid) model of hyperbolic space.

Points live on the upper sheet {x : <x,x>_L = 1/k, x0 > 0} of the hyperboloid
in (d+1)-dimensional Minkowski space, with curvature k < 0 and inner product
<x,y>_L = -x0*y0 + sum_i xi*yi. All functions accept single points (d+1,) or
row batches (n, d+1) of float64.
"""
from __future__ import annotations

import numpy as np

METRIC_SIGN_TIME = -1.0


class ManifoldError(ValueError):
    """Input violates a manifold precondition (off-sheet point, bad weights...)."""


def minkowski_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """<x,y>_L = -x0*y0 + sum_{i>=1} xi*yi, broadcasting over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ManifoldError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    prod = x * y
    return prod[..., 1:].sum(axis=-1) + METRIC_SIGN_TIME * prod[..., 0]


class Lorentz:
    """Geometry helpers bound to a fixed curvature (default -1)."""

    def __init__(self, curvature: float = -1.0):
        if curvature >= 0:
            raise ManifoldError(f"curvature must be negative, got {curvature}")
        self.k = float(curvature)
        self.sqrt_neg_k = float(np.sqrt(-self.k))

    # --- construction -----------------------------------------------------

    def origin(self, dim: int) -> np.ndarray:
        """The apex (1/sqrt(-k), 0, ..., 0) of the d-dimensional sheet."""
        o = np.zeros(dim + 1)
        o[0] = 1.0 / self.sqrt_neg_k
        return o

    def project(self, x: np.ndarray) -> np.ndarray:
        """Re-attach to the sheet by recomputing the time coordinate."""
        x = np.asarray(x, dtype=float)
        spatial = x[..., 1:]
        t = np.sqrt((spatial ** 2).sum(axis=-1) - 1.0 / self.k)
        return np.concatenate([t[..., None], spatial], axis=-1)

    def _settle(self, x: np.ndarray, drift: float = 1e-12) -> np.ndarray:
        err = np.abs(minkowski_inner(x, x) - 1.0 / self.k)
        if np.any(err > drift):
            return self.project(x)
        return x

    def check_point(self, x: np.ndarray, atol: float = 1e-9) -> None:
        x = np.asarray(x, dtype=float)
        err = np.abs(minkowski_inner(x, x) - 1.0 / self.k)
        if np.any(err > atol):
            raise ManifoldError(f"point off manifold: |<x,x>_L - 1/k| = {float(err.max()):.3e}")
        if np.any(x[..., 0] < 1.0 / self.sqrt_neg_k - atol):
            raise ManifoldError("point on the lower hyperboloid sheet")

    def check_tangent(self, base: np.ndarray, v: np.ndarray, atol: float = 1e-9) -> None:
        err = np.abs(minkowski_inner(base, v))
        if np.any(err > atol):
            raise ManifoldError(f"vector not tangent at base: |<v,x>_L| = {float(err.max()):.3e}")

    def project_tangent(self, base: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Orthogonal (Minkowski) projection of u onto the tangent space at base."""
        coef = self.k * minkowski_inner(base, u)
        return u - coef[..., None] * base

    # --- distances ----------------------------------------------------------

    def dist(self, x: np.ndarray, y: np.ndarray, check: bool = True) -> np.ndarray:
        """Geodesic distance arccosh(k*<x,y>_L) / sqrt(-k).

        The arccosh argument is >= 1 for on-sheet points; it is clamped at
        exactly 1 so dist(x, x) == 0 (the singularity there is removable).
        """
        if check:
            self.check_point(x)
            self.check_point(y)
        arg = np.maximum(self.k * minkowski_inner(x, y), 1.0)
        return np.arccosh(arg) / self.sqrt_neg_k

    def sqdist(self, x: np.ndarray, y: np.ndarray, check: bool = True) -> np.ndarray:
        """Squared Lorentzian difference 2/k - 2<x,y>_L (the smooth surrogate)."""
        if check:
            self.check_point(x)
            self.check_point(y)
        return np.maximum(2.0 / self.k - 2.0 * minkowski_inner(x, y), 0.0)

    def pairwise_sqdist(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """(n, m) matrix of squared Lorentzian differences between row batches."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        inner = X[:, 1:] @ Y[:, 1:].T - np.outer(X[:, 0], Y[:, 0])
        return np.maximum(2.0 / self.k - 2.0 * inner, 0.0)

    # --- maps ---------------------------------------------------------------

    def expmap(self, base: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Shoot the geodesic from base with tangent v; v = 0 returns base."""
        base = np.asarray(base, dtype=float)
        v = np.asarray(v, dtype=float)
        self.check_point(base)
        self.check_tangent(base, v, atol=1e-7)
        sq = np.maximum(minkowski_inner(v, v), 0.0)  # tangents are spacelike
        n = (self.sqrt_neg_k * np.sqrt(sq))[..., None]
        small = n < 1e-14
        safe_n = np.where(small, 1.0, n)
        out = np.cosh(n) * base + (np.sinh(n) / safe_n) * v
        out = np.where(small, np.broadcast_to(base, out.shape), out)
        return self._settle(out)

    def logmap(self, base: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Inverse of expmap; returns the zero vector when y == base."""
        base = np.asarray(base, dtype=float)
        y = np.asarray(y, dtype=float)
        self.check_point(base)
        self.check_point(y)
        beta = np.maximum(self.k * minkowski_inner(base, y), 1.0)[..., None]
        denom = np.sqrt(np.maximum(beta ** 2 - 1.0, 0.0))
        small = denom < 1e-14
        factor = np.arccosh(beta) / np.where(small, 1.0, denom)
        v = factor * (y - beta * base)
        return np.where(small, np.zeros_like(v), v)

    # --- aggregation ----------------------------------------------------------

    def centroid(self, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Closed-form minimizer of sum_i w_i * sqdist(mu, x_i) on the sheet.

        mu = s / (sqrt(-k) * sqrt(-<s,s>_L)) with s = sum_i w_i x_i; requires
        at least one strictly positive weight and a timelike weighted sum
        (always the case for non-negative weights on the upper sheet).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (points.shape[0],):
            raise ManifoldError(f"weights shape {weights.shape} != ({points.shape[0]},)")
        if np.any(weights < 0):
            raise ManifoldError("centroid weights must be non-negative")
        if not np.any(weights > 0):
            raise ManifoldError("centroid needs at least one positive weight")
        s = weights @ points
        q = minkowski_inner(s, s)
        if q >= 0:
            raise ManifoldError("weighted sum is not timelike; cannot normalize onto the sheet")
        mu = s / (self.sqrt_neg_k * np.sqrt(-q))
        return self._settle(mu)

    # --- projections -----------------------------------------------------------

    def to_poincare(self, x: np.ndarray) -> np.ndarray:
        """Stereographic projection onto the Poincare ball: x_s / (1 + sqrt(-k)*x0)."""
        x = np.asarray(x, dtype=float)
        return x[..., 1:] / (1.0 + self.sqrt_neg_k * x[..., 0])[..., None]

    def lift(self, features: np.ndarray) -> np.ndarray:
        """Map feature rows onto the sheet: L2-normalize, then expmap at the origin.

        Zero rows land exactly on the origin.
        """
        feats = np.atleast_2d(np.asarray(features, dtype=float))
        if not np.all(np.isfinite(feats)):
            raise ManifoldError("features must be finite")
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        unit = np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)
        tangent = np.concatenate([np.zeros((feats.shape[0], 1)), unit], axis=1)
        base = np.broadcast_to(self.origin(feats.shape[1]), tangent.shape)
        return self.expmap(base, tangent)
