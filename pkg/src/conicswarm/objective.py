"""BLASSO objective, dual certificate and optimality residuals.

For a lifted swarm with weights W, signs s and positions T the objective is

    J(nu) = 0.5 * |y|^2 + <kappa - k_T, W> + 0.5 * W' K_T W

with the signed Gram matrix ``K_T[i, j] = s_i s_j K(t_i, t_j)`` and
``k_T[j] = s_j <y, phi_{t_j}>``. The dual certificate at a lifted point
``(t, s)`` is ``s * (sum_j w_j s_j K(t_j, t) - <y, phi_t>) + kappa``; its
sign field drives birth (negative regions) and death (positive regions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Domain
from .kernels import KernelModel, gram_matrix, y_inner_vec
from .swarm import ParticleSwarm

__all__ = [
    "Problem",
    "KktReport",
    "loss",
    "dual_certificate",
    "dual_certificate_many",
    "dual_certificate_grad",
    "dual_certificate_grad_many",
    "frechet_gap",
    "kkt_residual",
]


@dataclass
class Problem:
    """A BLASSO instance: kernel model, position domain and penalty weight."""

    model: KernelModel
    domain: Domain
    kappa: float
    signed: bool = True

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.model.dim != self.domain.dim:
            raise ValueError("model and domain dimensions disagree")

    @property
    def sign_choices(self):
        return (1.0, -1.0) if self.signed else (1.0,)


def loss(problem: Problem, swarm: ParticleSwarm) -> float:
    """Exact objective value of a swarm (empty swarm gives 0.5 |y|^2)."""
    base = 0.5 * problem.model.y_norm_sq
    if len(swarm) == 0:
        return base
    k_t = y_inner_vec(problem.model, swarm.positions, swarm.signs)
    gram = gram_matrix(problem.model, swarm.positions, swarm.signs)
    w = swarm.weights
    return float(base + (problem.kappa - k_t) @ w + 0.5 * w @ gram @ w)


def dual_certificate_many(problem: Problem, swarm: ParticleSwarm,
                          points, signs) -> np.ndarray:
    """Exact certificate values at lifted points, vectorized."""
    points = np.asarray(points, dtype=float).reshape(-1, problem.model.dim)
    signs = np.asarray(signs, dtype=float).reshape(-1)
    model = problem.model
    if len(swarm):
        field = model.kernel_matrix(points, swarm.positions) @ (swarm.weights * swarm.signs)
    else:
        field = np.zeros(points.shape[0])
    return signs * (field - model.y_inner_many(points)) + problem.kappa


def dual_certificate(problem: Problem, swarm: ParticleSwarm, t, sign: float = 1.0) -> float:
    return float(dual_certificate_many(problem, swarm, np.asarray(t, dtype=float)[None, :],
                                       np.array([sign]))[0])


def dual_certificate_grad_many(problem: Problem, swarm: ParticleSwarm,
                               points, signs) -> np.ndarray:
    """Exact spatial gradient of the certificate at lifted points."""
    points = np.asarray(points, dtype=float).reshape(-1, problem.model.dim)
    signs = np.asarray(signs, dtype=float).reshape(-1)
    model = problem.model
    if len(swarm):
        field = model.weighted_grad1_kernel(points, swarm.positions, swarm.weights * swarm.signs)
    else:
        field = np.zeros_like(points)
    return signs[:, None] * (field - model.grad_y_inner_many(points))


def dual_certificate_grad(problem: Problem, swarm: ParticleSwarm, t, sign: float = 1.0) -> np.ndarray:
    return dual_certificate_grad_many(problem, swarm, np.asarray(t, dtype=float)[None, :],
                                      np.array([sign]))[0]


def frechet_gap(problem: Problem, nu: ParticleSwarm, sigma: ParticleSwarm) -> float:
    """Residual of the exact quadratic expansion of J around nu.

    Returns ``|J(nu + sigma) - J(nu) - <J'_nu, sigma> - 0.5 |Phi sigma|^2|``,
    which is zero in exact arithmetic for any lifted perturbation sigma.
    """
    if len(sigma) == 0:
        return 0.0
    combined = ParticleSwarm(
        np.concatenate([nu.weights, sigma.weights]),
        np.concatenate([nu.signs, sigma.signs]),
        np.vstack([nu.positions, sigma.positions]),
    )
    j_plus = loss(problem, combined)
    j_nu = loss(problem, nu)
    certs = dual_certificate_many(problem, nu, sigma.positions, sigma.signs)
    linear = float(certs @ sigma.weights)
    gram_sigma = gram_matrix(problem.model, sigma.positions, sigma.signs)
    quad = 0.5 * float(sigma.weights @ gram_sigma @ sigma.weights)
    return abs(j_plus - j_nu - linear - quad)


@dataclass
class KktReport:
    """Certificate extrema over a grid and over the swarm support."""

    min_cert_grid: float
    argmin_grid: np.ndarray
    max_abs_cert_support: float

    def is_stationary(self, tol: float) -> bool:
        """First-order optimality within tol: certificate nonnegative on the
        grid and (numerically) zero on the support."""
        return self.min_cert_grid >= -tol and self.max_abs_cert_support <= tol


def kkt_residual(problem: Problem, swarm: ParticleSwarm, grid) -> KktReport:
    """Certificate minimum over grid x sign choices plus support residual."""
    grid = np.asarray(grid, dtype=float).reshape(-1, problem.model.dim)
    if grid.shape[0] == 0:
        raise ValueError("kkt_residual requires a nonempty grid")
    best_val = np.inf
    best_arg = grid[0]
    for sign in problem.sign_choices:
        vals = dual_certificate_many(problem, swarm, grid, np.full(grid.shape[0], sign))
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_arg = grid[j].copy()
    if len(swarm):
        support = dual_certificate_many(problem, swarm, swarm.positions, swarm.signs)
        support_resid = float(np.abs(support).max())
    else:
        support_resid = 0.0
    return KktReport(best_val, best_arg, support_resid)
