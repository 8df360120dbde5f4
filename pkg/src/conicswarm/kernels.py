"""Problem kernels: model kernel K, observation inner products and audits.

Every concrete model implements four vectorized primitives, each with an
optional mini-batch restriction ``idx`` (``None`` means the exact,
full-data quantity):

* ``kernel_matrix(A, B, idx)``        -- K(a_i, b_j), shape (|A|, |B|)
* ``weighted_grad1_kernel(A, B, c, idx)`` -- sum_j c_j * grad_a K(a_i, b_j)
* ``y_inner_many(T, idx)``            -- <y, phi_t> per row of T
* ``grad_y_inner_many(T, idx)``       -- gradient of the above

Scalar and per-data-sample accessors are derived from these, so the
average of per-sample values reproduces the full quantity by construction
of each concrete model.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .domain import Ball, Box, Domain, grid_points

__all__ = [
    "KernelModel",
    "SyntheticKernel",
    "GmmKernel",
    "ReluKernel",
    "AssumptionBounds",
    "gram_matrix",
    "y_inner_vec",
    "audit_assumptions",
]


def _rows(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if x.size else x.reshape(0, dim)
    return x


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (|a|, |b|)."""
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d2 = aa + bb - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def gauss_density(a: np.ndarray, b: np.ndarray, var: float, dim: int) -> np.ndarray:
    """Isotropic Gaussian density N(a; b, var*I) evaluated pairwise."""
    norm = (2.0 * np.pi * var) ** (-dim / 2.0)
    return norm * np.exp(-_sqdist(a, b) / (2.0 * var))


class KernelModel(ABC):
    """Abstract evaluator of the kernel and observation inner products."""

    dim: int
    #: whether per-sample kernel values differ from the exact kernel
    kernel_depends_on_samples: bool = False

    @property
    @abstractmethod
    def n_samples(self) -> int:
        """Number of data samples backing the stochastic oracle."""

    @property
    @abstractmethod
    def y_norm_sq(self) -> float:
        """Squared Hilbert norm of the observation."""

    @abstractmethod
    def kernel_matrix(self, a, b, idx=None) -> np.ndarray: ...

    @abstractmethod
    def weighted_grad1_kernel(self, a, b, coef, idx=None) -> np.ndarray: ...

    @abstractmethod
    def y_inner_many(self, t, idx=None) -> np.ndarray: ...

    @abstractmethod
    def grad_y_inner_many(self, t, idx=None) -> np.ndarray: ...

    # Scalar and per-sample views, derived from the vectorized primitives.

    def kernel(self, s, t) -> float:
        return float(self.kernel_matrix(_rows(s, self.dim), _rows(t, self.dim))[0, 0])

    def kernel_sample(self, s, t, i: int) -> float:
        return float(self.kernel_matrix(_rows(s, self.dim), _rows(t, self.dim), idx=np.array([i]))[0, 0])

    def grad1_kernel(self, s, t) -> np.ndarray:
        return self.weighted_grad1_kernel(_rows(s, self.dim), _rows(t, self.dim), np.ones(1))[0]

    def grad1_kernel_sample(self, s, t, i: int) -> np.ndarray:
        return self.weighted_grad1_kernel(
            _rows(s, self.dim), _rows(t, self.dim), np.ones(1), idx=np.array([i]))[0]

    def y_inner(self, t) -> float:
        return float(self.y_inner_many(_rows(t, self.dim))[0])

    def y_inner_sample(self, t, i: int) -> float:
        return float(self.y_inner_many(_rows(t, self.dim), idx=np.array([i]))[0])

    def grad_y_inner(self, t) -> np.ndarray:
        return self.grad_y_inner_many(_rows(t, self.dim))[0]

    def grad_y_inner_sample(self, t, i: int) -> np.ndarray:
        return self.grad_y_inner_many(_rows(t, self.dim), idx=np.array([i]))[0]


class SyntheticKernel(KernelModel):
    """Gaussian kernel on a box with a planted sparse observation.

    ``K(s, t) = exp(-|s - t|^2 / (2 sigma^2))`` so ``K(t, t) = 1`` and the
    positivity constant is exactly ``exp(-diam(X)^2 / (2 sigma^2))``. The
    observation is the image of a planted atomic measure plus a bounded
    perturbation spread over ``n_samples`` pseudo-samples, giving the
    stochastic oracle a real (but exactly controlled) noise source.
    """

    def __init__(self, domain: Box, sigma: float, atom_weights, atom_positions,
                 n_samples: int = 64, noise_scale: float = 0.0, n_anchors: int = 3,
                 seed: int = 0, center_noise: bool = False):
        if not isinstance(domain, Box):
            raise TypeError("SyntheticKernel expects a Box domain")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.domain = domain
        self.sigma = float(sigma)
        self.dim = domain.dim
        self.atom_weights = np.asarray(atom_weights, dtype=float).reshape(-1)
        self.atom_positions = _rows(atom_positions, self.dim)
        if self.atom_positions.shape[0] != self.atom_weights.size:
            raise ValueError("atom weights and positions must agree in length")
        self._n = int(n_samples)
        if self._n < 1:
            raise ValueError("n_samples must be >= 1")
        rng = np.random.Generator(np.random.Philox(seed))
        self.anchors = domain.sample_uniform(rng, size=int(n_anchors))
        # eta[i, r]: bounded per-sample noise coefficients, mean kept explicit.
        # Centering makes the aggregate observation exactly the planted image
        # while the per-sample oracle stays noisy.
        self.eta = noise_scale * rng.uniform(-1.0, 1.0, size=(self._n, int(n_anchors)))
        if center_noise:
            self.eta = self.eta - self.eta.mean(axis=0)
        self._eta_mean = self.eta.mean(axis=0)

    @property
    def n_samples(self):
        return self._n

    @property
    def y_norm_sq(self):
        coefs = np.concatenate([self.atom_weights, self._eta_mean])
        pts = np.vstack([self.atom_positions, self.anchors])
        return float(coefs @ self.kernel_matrix(pts, pts) @ coefs)

    def noise_sup(self) -> tuple[float, float]:
        """Exact a.s. bounds on the per-sample noise of values and gradients."""
        dev = np.abs(self.eta - self._eta_mean).sum(axis=1).max() if self.eta.size else 0.0
        grad_max = np.exp(-0.5) / self.sigma  # max |grad K| for the Gaussian kernel
        return float(dev), float(dev * grad_max)

    def exact_positivity(self) -> float:
        return float(np.exp(-self.domain.diameter**2 / (2.0 * self.sigma**2)))

    def kernel_matrix(self, a, b, idx=None):
        a = _rows(a, self.dim)
        b = _rows(b, self.dim)
        # Data-independent kernel: per-sample value equals the exact value.
        return np.exp(-_sqdist(a, b) / (2.0 * self.sigma**2))

    def weighted_grad1_kernel(self, a, b, coef, idx=None):
        a = _rows(a, self.dim)
        b = _rows(b, self.dim)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        k = self.kernel_matrix(a, b) * coef[None, :]
        # grad_a K = K * (b - a) / sigma^2
        return (k @ b - k.sum(axis=1)[:, None] * a) / self.sigma**2

    def _noise_coef(self, idx):
        if idx is None:
            return self._eta_mean
        return self.eta[np.asarray(idx, dtype=int)].mean(axis=0)

    def y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        core = self.kernel_matrix(t, self.atom_positions) @ self.atom_weights
        return core + self.kernel_matrix(t, self.anchors) @ self._noise_coef(idx)

    def grad_y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        g = self.weighted_grad1_kernel(t, self.atom_positions, self.atom_weights)
        return g + self.weighted_grad1_kernel(t, self.anchors, self._noise_coef(idx))


class GmmKernel(KernelModel):
    """Smoothed-density kernel for mixture deconvolution in the plane.

    The feature of a location t is the Gaussian density N(.; t, (1+tau^2) I)
    in L2, so the kernel is ``K(s, t) = N(s; t, 2 (1+tau^2) I)`` and the
    observation inner product averages ``N(X_i; t, (1+2 tau^2) I)`` over the
    data. The kernel itself carries no data dependence; only the
    observation side is estimated per sample.
    """

    def __init__(self, data: np.ndarray, tau: float):
        self.data = np.asarray(data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("data must be (n, d)")
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.tau = float(tau)
        self.dim = self.data.shape[1]
        self._kvar = 2.0 * (1.0 + tau**2)
        self._yvar = 1.0 + 2.0 * tau**2
        self._y_norm_sq = None

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def y_norm_sq(self):
        if self._y_norm_sq is None:
            n = self.n_samples
            total = 0.0
            step = max(1, 2_000_000 // max(n, 1))
            for lo in range(0, n, step):
                blk = gauss_density(self.data[lo : lo + step], self.data, 2.0 * self.tau**2, self.dim)
                total += float(blk.sum())
            self._y_norm_sq = total / n**2
        return self._y_norm_sq

    def kernel_matrix(self, a, b, idx=None):
        return gauss_density(_rows(a, self.dim), _rows(b, self.dim), self._kvar, self.dim)

    def weighted_grad1_kernel(self, a, b, coef, idx=None):
        a = _rows(a, self.dim)
        b = _rows(b, self.dim)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        k = self.kernel_matrix(a, b) * coef[None, :]
        return (k @ b - k.sum(axis=1)[:, None] * a) / self._kvar

    def _batch(self, idx):
        return self.data if idx is None else self.data[np.asarray(idx, dtype=int)]

    def y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        x = self._batch(idx)
        return gauss_density(t, x, self._yvar, self.dim).mean(axis=1)

    def grad_y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        x = self._batch(idx)
        k = gauss_density(t, x, self._yvar, self.dim)
        return (k @ x / x.shape[0] - k.mean(axis=1)[:, None] * t) / self._yvar


class ReluKernel(KernelModel):
    """Empirical two-layer ReLU kernel over a regression sample.

    Positions are neuron parameters ``t = (v, b)`` in R^{d+1}; the feature
    evaluates ``relu(<v, x_k> + b)`` across the data, with the empirical
    L2(P_n) inner product. The subgradient of relu at 0 is taken as 0.
    """

    kernel_depends_on_samples = True

    def __init__(self, features: np.ndarray, targets: np.ndarray):
        self.features = np.asarray(features, dtype=float)
        self.targets = np.asarray(targets, dtype=float).reshape(-1)
        if self.features.ndim != 2 or self.features.shape[0] != self.targets.size:
            raise ValueError("features must be (n, d) matching targets")
        self.dim = self.features.shape[1] + 1
        self._aug = np.hstack([self.features, np.ones((self.features.shape[0], 1))])

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def y_norm_sq(self):
        return float(np.mean(self.targets**2))

    def _acts(self, pos, idx):
        aug = self._aug if idx is None else self._aug[np.asarray(idx, dtype=int)]
        pre = aug @ pos.T
        return aug, pre

    def kernel_matrix(self, a, b, idx=None):
        a = _rows(a, self.dim)
        b = _rows(b, self.dim)
        aug, pre_a = self._acts(a, idx)
        act_a = np.maximum(pre_a, 0.0)
        act_b = np.maximum(aug @ b.T, 0.0)
        return act_a.T @ act_b / aug.shape[0]

    def weighted_grad1_kernel(self, a, b, coef, idx=None):
        a = _rows(a, self.dim)
        b = _rows(b, self.dim)
        coef = np.asarray(coef, dtype=float).reshape(-1)
        aug, pre_a = self._acts(a, idx)
        act_b = np.maximum(aug @ b.T, 0.0)
        u = act_b @ coef
        mask = pre_a > 0.0
        return (mask * u[:, None]).T @ aug / aug.shape[0]

    def y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        aug, pre = self._acts(t, idx)
        y = self.targets if idx is None else self.targets[np.asarray(idx, dtype=int)]
        return np.maximum(pre, 0.0).T @ y / aug.shape[0]

    def grad_y_inner_many(self, t, idx=None):
        t = _rows(t, self.dim)
        aug, pre = self._acts(t, idx)
        y = self.targets if idx is None else self.targets[np.asarray(idx, dtype=int)]
        mask = pre > 0.0
        return (mask * y[:, None]).T @ aug / aug.shape[0]


def gram_matrix(model: KernelModel, positions, signs) -> np.ndarray:
    """Signed Gram matrix with entries ``s_i s_j K(t_i, t_j)``."""
    positions = _rows(positions, model.dim)
    signs = np.asarray(signs, dtype=float).reshape(-1)
    if positions.shape[0] == 0:
        return np.empty((0, 0))
    k = model.kernel_matrix(positions, positions)
    return k * signs[:, None] * signs[None, :]


def y_inner_vec(model: KernelModel, positions, signs) -> np.ndarray:
    """Signed observation inner products ``s_j <y, phi_{t_j}>``."""
    positions = _rows(positions, model.dim)
    signs = np.asarray(signs, dtype=float).reshape(-1)
    if positions.shape[0] == 0:
        return np.empty(0)
    return signs * model.y_inner_many(positions)


@dataclass
class AssumptionBounds:
    """Empirical estimates of the regularity constants of a model.

    kernel_min    -- smallest sampled kernel value (0 flags failed positivity)
    smooth_max    -- bound on |K|, |grad K| and a finite-difference Hessian norm
    noise_sup     -- a.s. bound estimate on per-sample estimator deviations
    cert_slope    -- slope of the certificate lower bound in the TV norm
    cert_offset   -- offset of that lower bound (max |<y, phi_t>| on the grid)
    diag_gap      -- max |K(t, t) - 1|, reported for normalization warnings
    """

    kernel_min: float
    smooth_max: float
    noise_sup: float
    cert_slope: float
    cert_offset: float
    diag_gap: float = 0.0

    def __post_init__(self):
        if self.kernel_min < 0 or self.noise_sup < 0:
            raise ValueError("bounds must be nonnegative")
        if self.smooth_max < self.kernel_min:
            raise ValueError("smooth_max must dominate kernel_min")


def _fd_hessian_norm(model: KernelModel, s, t, h: float = 1e-4) -> float:
    """Spectral norm of a central finite-difference Hessian of K in s."""
    d = model.dim
    hess = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        gp = model.grad1_kernel(s + e, t)
        gm = model.grad1_kernel(s - e, t)
        hess[:, j] = (gp - gm) / (2.0 * h)
    hess = 0.5 * (hess + hess.T)
    return float(np.max(np.abs(np.linalg.eigvalsh(hess))))


def audit_assumptions(model: KernelModel, domain: Domain, grid_points_n: int,
                      rng: np.random.Generator, tv_cap: float = 1.0,
                      noise_safety: float = 1.5) -> AssumptionBounds:
    """Estimate the assumption constants by sampling the domain.

    Boxes contribute their corners to the sample (the kernel minimum of a
    radial kernel sits at maximal separation), the rest is uniform. The
    noise bound multiplies the worst observed per-sample deviation by
    ``noise_safety`` and scales kernel deviations by ``tv_cap``.
    """
    if grid_points_n < 2:
        raise ValueError("need at least two audit points")
    pts = domain.sample_uniform(rng, size=grid_points_n)
    if isinstance(domain, Box) and domain.dim <= 12:
        corners = grid_points(domain, 2)
        pts = np.vstack([pts, corners])

    kmat = model.kernel_matrix(pts, pts)
    kernel_min = max(float(kmat.min()), 0.0)
    kernel_abs_max = float(np.abs(kmat).max())
    diag = np.array([model.kernel(p, p) for p in pts[: min(64, len(pts))]])
    diag_gap = float(np.abs(diag - 1.0).max())

    n_pairs = min(48, len(pts) - 1)
    pair_a = pts[:n_pairs]
    pair_b = pts[1 : n_pairs + 1]
    grad_norms = [float(np.linalg.norm(model.grad1_kernel(a, b))) for a, b in zip(pair_a, pair_b)]
    inner_idx = [i for i in range(n_pairs) if _strictly_inside(domain, pair_a[i])][:12]
    hess_norms = [_fd_hessian_norm(model, pair_a[i], pair_b[i]) for i in inner_idx]
    smooth_max = max([kernel_abs_max] + grad_norms + hess_norms)

    # Per-sample deviations on a subsample of points and pairs; kernel-side
    # deviations enter scaled by the caller's TV cap since the certificate
    # weighs them by particle mass.
    n_eval = min(24, len(pts))
    eval_pts = pts[:n_eval]
    y_full = model.y_inner_many(eval_pts)
    gy_full = model.grad_y_inner_many(eval_pts)
    k_full = model.kernel_matrix(pair_a, pair_b)
    n_gpairs = min(8, n_pairs)
    one_coef = np.ones(1)
    gk_full = np.array([
        model.weighted_grad1_kernel(pair_a[j : j + 1], pair_b[j : j + 1], one_coef)[0]
        for j in range(n_gpairs)
    ])
    dev_y = dev_gy = dev_k = dev_gk = 0.0
    for i in range(model.n_samples):
        one = np.array([i])
        dev_y = max(dev_y, float(np.abs(model.y_inner_many(eval_pts, one) - y_full).max()))
        dev_gy = max(dev_gy, float(
            np.linalg.norm(model.grad_y_inner_many(eval_pts, one) - gy_full, axis=1).max()))
        if not model.kernel_depends_on_samples:
            continue
        dev_k = max(dev_k, float(np.abs(model.kernel_matrix(pair_a, pair_b, one) - k_full).max()))
        gk_one = np.array([
            model.weighted_grad1_kernel(pair_a[j : j + 1], pair_b[j : j + 1], one_coef, one)[0]
            for j in range(n_gpairs)
        ])
        dev_gk = max(dev_gk, float(np.linalg.norm(gk_one - gk_full, axis=1).max()))
    noise_val = dev_y + tv_cap * dev_k
    noise_grad = dev_gy + tv_cap * dev_gk
    noise_sup = noise_safety * max(noise_val, noise_grad)

    cert_offset = float(np.abs(model.y_inner_many(pts)).max())
    return AssumptionBounds(
        kernel_min=kernel_min,
        smooth_max=smooth_max,
        noise_sup=noise_sup,
        cert_slope=kernel_min,
        cert_offset=cert_offset,
        diag_gap=diag_gap,
    )


def _strictly_inside(domain: Domain, p: np.ndarray, margin: float = 1e-3) -> bool:
    if isinstance(domain, Box):
        return bool(np.all(p > domain.lower + margin) and np.all(p < domain.upper - margin))
    if isinstance(domain, Ball):
        return bool(np.linalg.norm(p - domain.center) < domain.radius - margin)
    return True
