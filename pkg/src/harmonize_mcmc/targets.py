"""Target distributions and exactly-evaluable initial distributions.

A target is an unnormalized log-density with an optional gradient; initial
distributions are Gaussians specified through a lower-triangular covariance
factor so their normalized density (needed for initial importance weights)
is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import minimize

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized log-density, with gradient when available."""

    dim: int
    log_gamma: Callable[[np.ndarray], float]
    grad_log_gamma: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian given by mean and lower-triangular factor L, cov = L @ L.T."""

    mean: np.ndarray
    cov_factor: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        factor = np.atleast_2d(np.asarray(self.cov_factor, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_factor", factor)
        d = mean.size
        if factor.shape != (d, d):
            raise ValueError(f"cov_factor must be {d}x{d}, got {factor.shape}")
        if not np.allclose(factor, np.tril(factor)):
            raise ValueError("cov_factor must be lower-triangular")
        if np.any(np.diag(factor) <= 0):
            raise ValueError("cov_factor must have strictly positive diagonal")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.cov_factor @ self.cov_factor.T

    @classmethod
    def standard(cls, dim: int) -> "GaussianSpec":
        return cls(np.zeros(dim), np.eye(dim))

    @classmethod
    def isotropic(cls, mean, variance: float) -> "GaussianSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, np.sqrt(variance) * np.eye(mean.size))

    @classmethod
    def from_cov(cls, mean, cov) -> "GaussianSpec":
        return cls(mean, cholesky(np.asarray(cov, dtype=float), lower=True))


def gaussian_target(spec: GaussianSpec) -> TargetModel:
    """Gaussian target with the normalizing constant deliberately dropped.

    ``log_gamma(x) = -0.5 * ||L^-1 (x - mean)||^2``, so the value at the
    mean is exactly 0.
    """
    mean, factor = spec.mean, spec.cov_factor

    def log_gamma(x):
        z = solve_triangular(factor, np.asarray(x, dtype=float) - mean, lower=True)
        return -0.5 * float(z @ z)

    def grad_log_gamma(x):
        z = solve_triangular(factor, np.asarray(x, dtype=float) - mean, lower=True)
        return -solve_triangular(factor.T, z, lower=False)

    return TargetModel(dim=spec.dim, log_gamma=log_gamma, grad_log_gamma=grad_log_gamma)


def gaussian_log_density(spec: GaussianSpec, x) -> float:
    """Fully normalized Gaussian log-density at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != spec.mean.shape:
        raise ValueError(f"point has shape {x.shape}, spec has dimension {spec.dim}")
    z = solve_triangular(spec.cov_factor, x - spec.mean, lower=True)
    log_det = float(np.sum(np.log(np.diag(spec.cov_factor))))
    return -0.5 * float(z @ z) - 0.5 * spec.dim * _LOG_2PI - log_det


def gaussian_sample(spec: GaussianSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the Gaussian; shape (dim,) or (size, dim)."""
    if size is None:
        return spec.mean + spec.cov_factor @ rng.standard_normal(spec.dim)
    z = rng.standard_normal((size, spec.dim))
    return spec.mean + z @ spec.cov_factor.T


@dataclass(frozen=True)
class StochVolSpec:
    """Latent AR(1) volatility model for observations ``y``.

    State ``x`` of length L+1: ``x_0 ~ N(0, sigma^2 / (1 - phi^2))``,
    ``x_l = phi x_{l-1} + sigma eps_l``; observations
    ``y_l ~ N(0, beta^2 exp(x_l))``.
    """

    beta: float
    phi: float
    sigma: float
    observations: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.observations, dtype=float))
        object.__setattr__(self, "observations", y)
        if not abs(self.phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if y.size < 2:
            raise ValueError("need at least 2 observations")

    @property
    def dim(self) -> int:
        return self.observations.size


def stochvol_target(spec: StochVolSpec) -> TargetModel:
    """Posterior of the latent log-volatility path given observations.

    The gradient is analytic: a tridiagonal autoregressive prior part plus a
    diagonal likelihood part.
    """
    beta2 = spec.beta**2
    phi = spec.phi
    sig2 = spec.sigma**2
    v0 = sig2 / (1.0 - phi**2)
    y2 = spec.observations**2
    n = spec.dim

    def log_gamma(x):
        x = np.asarray(x, dtype=float)
        resid = x[1:] - phi * x[:-1]
        lp = -0.5 * x[0] ** 2 / v0 - 0.5 * np.log(v0)
        lp += -0.5 * float(resid @ resid) / sig2 - 0.5 * (n - 1) * np.log(sig2)
        lik = -0.5 * np.sum(x) - np.sum(y2 * np.exp(-x)) / (2.0 * beta2) - n * np.log(spec.beta)
        return float(lp + lik) - 0.5 * (2 * n - 1) * _LOG_2PI

    def grad_log_gamma(x):
        x = np.asarray(x, dtype=float)
        g = np.empty(n)
        resid = x[1:] - phi * x[:-1]
        g[0] = -x[0] / v0
        g[1:] = -resid / sig2
        g[:-1] += phi * resid / sig2
        g += -0.5 + y2 * np.exp(-x) / (2.0 * beta2)
        return g

    return TargetModel(dim=n, log_gamma=log_gamma, grad_log_gamma=grad_log_gamma)


def stochvol_simulate(
    beta: float, phi: float, sigma: float, n_steps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate latent path and observations of length ``n_steps + 1``."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not abs(phi) < 1:
        raise ValueError(f"|phi| must be < 1, got {phi}")
    if sigma < 0 or beta <= 0:
        raise ValueError("sigma must be >= 0 and beta > 0")
    x = np.empty(n_steps + 1)
    x[0] = rng.normal(0.0, np.sqrt(sigma**2 / (1.0 - phi**2)))
    eps = rng.standard_normal(n_steps)
    for i in range(n_steps):
        x[i + 1] = phi * x[i] + sigma * eps[i]
    y = beta * np.exp(x / 2.0) * rng.standard_normal(n_steps + 1)
    return x, y


def save_observations(path, y) -> None:
    """Write observations as a single-column CSV."""
    np.savetxt(path, np.asarray(y, dtype=float), fmt="%.17g")


def load_observations(path) -> np.ndarray:
    """Read observations from a single-column CSV."""
    y = np.loadtxt(path, dtype=float)
    return np.atleast_1d(y)


def _finite_difference_hessian(grad, x, h: float = 1e-5) -> np.ndarray:
    d = x.size
    hess = np.empty((d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        hess[:, j] = (grad(x + step) - grad(x - step)) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _jittered_cholesky(matrix: np.ndarray) -> np.ndarray:
    eigmin = float(np.linalg.eigvalsh(matrix).min())
    jitter = 1e-8 * (1.0 + abs(eigmin))
    attempt = matrix
    for _ in range(60):
        try:
            return cholesky(attempt, lower=True)
        except np.linalg.LinAlgError:
            attempt = attempt + jitter * np.eye(matrix.shape[0])
            jitter *= 10.0
    raise np.linalg.LinAlgError("could not factor matrix even after jittering")


def laplace_approx(target: TargetModel, init, max_iter: int = 2000) -> GaussianSpec:
    """Gaussian approximation N(mode, inverse curvature) of a target.

    The mode is found by gradient ascent (BFGS) started at ``init`` and is
    accepted once the gradient 2-norm drops below 1e-6; the covariance is
    the inverse of a finite-difference Hessian at the mode, symmetrized and
    jittered to positive-definiteness if needed.
    """
    if target.grad_log_gamma is None:
        raise ValueError("laplace_approx requires a target with a gradient")
    x0 = np.asarray(init, dtype=float)
    if x0.size != target.dim:
        raise ValueError(f"init has size {x0.size}, target dimension is {target.dim}")

    result = minimize(
        lambda x: -target.log_gamma(x),
        x0,
        jac=lambda x: -target.grad_log_gamma(x),
        method="BFGS",
        options={"gtol": 1e-9, "maxiter": max_iter},
    )
    mode = result.x
    grad_norm = float(np.linalg.norm(target.grad_log_gamma(mode)))
    if grad_norm >= 1e-6:
        raise RuntimeError(
            f"mode search did not converge within {max_iter} iterations "
            f"(gradient norm {grad_norm:.3e})"
        )
    hess = _finite_difference_hessian(target.grad_log_gamma, mode)
    cov = np.linalg.inv(-hess)
    cov = 0.5 * (cov + cov.T)
    return GaussianSpec(mode, _jittered_cholesky(cov))
