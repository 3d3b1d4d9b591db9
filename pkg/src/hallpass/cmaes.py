"""Covariance matrix adaptation evolution strategy.

Standard (mu/mu_w, lambda) formulation with rank-one + rank-mu covariance
updates and cumulative step-size adaptation, specialized to small dense
search spaces. State is immutable; `tell` returns the updated state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class CmaesState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int
    best_theta: np.ndarray | None
    best_cost: float

    @property
    def dim(self):
        return len(self.mean)


def cmaes_init(theta0, sigma0: float) -> CmaesState:
    theta0 = np.asarray(theta0, dtype=float).ravel()
    if not sigma0 > 0.0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    n = len(theta0)
    return CmaesState(
        mean=theta0.copy(),
        sigma=float(sigma0),
        cov=np.eye(n),
        p_sigma=np.zeros(n),
        p_c=np.zeros(n),
        generation=0,
        best_theta=None,
        best_cost=math.inf,
    )


def _decompose(cov):
    # enforce symmetry before the eigensolve; floor eigenvalues to keep SPD
    c = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(c)
    vals = np.maximum(vals, 1e-14)
    return vals, vecs


def ask(state: CmaesState, n: int, rng: np.random.Generator) -> np.ndarray:
    """n samples from N(mean, sigma^2 C), shape (n, dim)."""
    if n < 2:
        raise ValueError("population size must be at least 2")
    vals, vecs = _decompose(state.cov)
    z = rng.standard_normal((n, state.dim))
    return state.mean + state.sigma * (z * np.sqrt(vals)) @ vecs.T


def _weights(n_pop: int, dim: int):
    mu = int(math.ceil(n_pop / 2))
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / float(w @ w)
    c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (dim + 1.0)) - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / dim) / (dim + 4.0 + 2.0 * mu_eff / dim)
    c_1 = 2.0 / ((dim + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((dim + 2.0) ** 2 + mu_eff))
    return w, mu, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu


def tell(state: CmaesState, samples, costs) -> CmaesState:
    """Rank-based distribution update from one evaluated generation."""
    samples = np.asarray(samples, dtype=float)
    costs = np.asarray(costs, dtype=float).ravel()
    if samples.ndim != 2 or samples.shape[1] != state.dim or len(samples) != len(costs):
        raise ValueError("samples/costs shape mismatch")
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")
    n_pop = len(samples)
    dim = state.dim
    w, mu, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu = _weights(n_pop, dim)

    order = np.argsort(costs, kind="stable")
    sel = samples[order[:mu]]
    y = (sel - state.mean) / state.sigma  # (mu, dim)
    y_w = w @ y

    mean_new = state.mean + state.sigma * y_w

    vals, vecs = _decompose(state.cov)
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.T
    p_sigma = (1.0 - c_sigma) * state.p_sigma + math.sqrt(
        c_sigma * (2.0 - c_sigma) * mu_eff
    ) * (inv_sqrt @ y_w)
    chi_n = math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim**2))
    gen = state.generation + 1
    sigma_new = state.sigma * math.exp(
        (c_sigma / d_sigma) * (np.linalg.norm(p_sigma) / chi_n - 1.0)
    )

    h_sigma = float(
        np.linalg.norm(p_sigma) / math.sqrt(1.0 - (1.0 - c_sigma) ** (2 * gen))
        < (1.4 + 2.0 / (dim + 1.0)) * chi_n
    )
    p_c = (1.0 - c_c) * state.p_c + h_sigma * math.sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w
    rank_mu = (y * w[:, None]).T @ y
    cov_new = (
        (1.0 - c_1 - c_mu) * state.cov
        + c_1 * (np.outer(p_c, p_c) + (1.0 - h_sigma) * c_c * (2.0 - c_c) * state.cov)
        + c_mu * rank_mu
    )
    vals, vecs = _decompose(cov_new)
    cov_new = (vecs * vals) @ vecs.T

    best_idx = int(order[0])
    if costs[best_idx] < state.best_cost:
        best_theta, best_cost = samples[best_idx].copy(), float(costs[best_idx])
    else:
        best_theta, best_cost = state.best_theta, state.best_cost

    return replace(
        state,
        mean=mean_new,
        sigma=float(sigma_new),
        cov=cov_new,
        p_sigma=p_sigma,
        p_c=p_c,
        generation=gen,
        best_theta=best_theta,
        best_cost=best_cost,
    )


def converged(state: CmaesState, threshold: float) -> bool:
    """The search stops once the step size falls below the threshold."""
    return state.sigma < threshold
