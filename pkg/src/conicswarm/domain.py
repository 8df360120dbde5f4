"""Compact convex position domains: axis-aligned boxes and Euclidean balls.

Particle positions live in a compact convex set X. Both supported shapes
admit a closed-form Euclidean projection, which is all the generalized
(proximal) gradient step needs, and both support uniform sampling for the
birth process.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np

__all__ = ["Domain", "Box", "Ball", "grid_points"]


class Domain(ABC):
    """Compact convex subset of R^d with projection and uniform sampling."""

    dim: int

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean nearest point of the domain; identity on members.

        Accepts a single point of shape (d,) or a stack of shape (n, d).
        """

    @abstractmethod
    def contains(self, x: np.ndarray, tol: float = 1e-12):
        """Membership test, broadcast over a stack of points."""

    @abstractmethod
    def sample_uniform(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw points uniformly from the domain: (d,) or (size, d)."""

    @abstractmethod
    def volume(self) -> float:
        """Lebesgue volume, positive and finite."""

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point dimension {x.shape[-1]} != domain dimension {self.dim}")
        return x

    def prox_step(self, t: np.ndarray, v: np.ndarray, beta: float):
        """Generalized gradient step for descent vector v at base point t.

        Returns ``(t_plus, pi)`` where ``t_plus = argmin_{u in X} <u, v> +
        |u - t|^2 / (2 beta) = project(t - beta v)`` and
        ``pi = (t - t_plus) / beta``, so ``t_plus = t - beta * pi``.
        Vectorized over stacked rows of t and v.
        """
        if beta <= 0:
            raise ValueError("prox_step requires beta > 0")
        t = self._check_dim(t)
        v = self._check_dim(v)
        t_plus = self.project(t - beta * v)
        pi = (t - t_plus) / beta
        return t_plus, pi


class Box(Domain):
    """Axis-aligned box ``prod_i [lower_i, upper_i]``."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("box requires lower < upper in every coordinate")
        self.dim = self.lower.size

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def project(self, x):
        x = self._check_dim(x)
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol=1e-12):
        x = self._check_dim(x)
        ok = (x >= self.lower - tol) & (x <= self.upper + tol)
        return np.all(ok, axis=-1)

    def sample_uniform(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)

    def volume(self):
        return float(np.prod(self.upper - self.lower))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


class Ball(Domain):
    """Closed Euclidean ball of given center and radius."""

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("ball requires radius > 0")
        self.dim = self.center.size

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def project(self, x):
        x = self._check_dim(x)
        offset = x - self.center
        norm = np.linalg.norm(offset, axis=-1, keepdims=True)
        scale = np.where(norm > self.radius, self.radius / np.maximum(norm, 1e-300), 1.0)
        return self.center + offset * scale

    def contains(self, x, tol=1e-12):
        x = self._check_dim(x)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def sample_uniform(self, rng, size=None):
        # Rejection from the bounding box; acceptance ratio is fine for the
        # dimensions used here (d <= ~10).
        n = 1 if size is None else int(size)
        accepted = np.empty((n, self.dim))
        got = 0
        ratio = self.volume() / (2.0 * self.radius) ** self.dim
        while got < n:
            need = n - got
            chunk = max(16, int(need / max(ratio, 1e-6) * 1.2))
            chunk = min(chunk, 4_000_000 // max(self.dim, 1))
            cand = rng.uniform(-self.radius, self.radius, size=(chunk, self.dim)) + self.center
            keep = cand[np.linalg.norm(cand - self.center, axis=1) <= self.radius]
            take = min(need, keep.shape[0])
            accepted[got : got + take] = keep[:take]
            got += take
        return accepted[0] if size is None else accepted

    def volume(self):
        d = self.dim
        return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * self.radius**d

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


def grid_points(domain: Domain, resolution: int, rng: np.random.Generator | None = None,
                max_points: int = 50_000) -> np.ndarray:
    """Evaluation grid inside the domain.

    Boxes get a regular lattice of ``resolution`` points per axis (corners
    included); balls get the lattice of their bounding box filtered to the
    ball plus its center. When the lattice would exceed ``max_points`` the
    grid falls back to uniform samples, using ``rng`` (or a fixed stream).
    """
    if resolution < 2:
        raise ValueError("grid resolution must be at least 2")
    d = domain.dim
    if resolution**d > max_points:
        if rng is None:
            rng = np.random.Generator(np.random.Philox(0))
        return domain.sample_uniform(rng, size=max_points)
    if isinstance(domain, Box):
        axes = [np.linspace(domain.lower[i], domain.upper[i], resolution) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if isinstance(domain, Ball):
        lo = domain.center - domain.radius
        hi = domain.center + domain.radius
        axes = [np.linspace(lo[i], hi[i], resolution) for i in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts = pts[domain.contains(pts)]
        return np.vstack([pts, domain.center[None, :]])
    raise TypeError(f"unsupported domain type {type(domain)!r}")
