"""Markov kernels that keep a target invariant, together with couplings.

A coupled kernel advances two chains jointly and reports an explicit
``met`` flag; ``met`` is the only authority on meeting (never a
floating-point comparison of states), and ``met=True`` guarantees the two
returned states are bit-identical.

All couplings here share one recipe: couple the Gaussian proposals with a
reflection-maximal coupling, then (for Metropolis-Hastings kernels) accept
both proposals with a single shared uniform.  The pair counts as met only
when the proposals coupled and both chains accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_triangular

from .targets import TargetModel

Factor = Union[float, np.ndarray]  # scalar s means s * I


@dataclass(frozen=True)
class CoupledKernel:
    """One coupled transition plus its single-chain marginal.

    ``step(x, y, gen) -> (x', y', met)`` and ``single_step(x, gen) -> x'``
    must have equal marginal laws in x (and symmetrically in y).  Kernels
    are immutable; generators are passed per call, so disjoint streams may
    drive steps concurrently.
    """

    dim: int
    step: Callable[[np.ndarray, np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray, bool]]
    single_step: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    name: str = ""


def _apply_factor(factor: Factor, v: np.ndarray) -> np.ndarray:
    if np.ndim(factor) == 0:
        return float(factor) * v
    return factor @ v


def _unapply_factor(factor: Factor, v: np.ndarray) -> np.ndarray:
    if np.ndim(factor) == 0:
        return v / float(factor)
    return solve_triangular(factor, v, lower=True)


def _validate_factor(factor: Factor, dim: int) -> Factor:
    if np.ndim(factor) == 0:
        if float(factor) <= 0:
            raise ValueError(f"scale factor must be positive, got {factor}")
        return float(factor)
    factor = np.asarray(factor, dtype=float)
    if factor.shape != (dim, dim):
        raise ValueError(f"factor must be {dim}x{dim}, got {factor.shape}")
    if not np.allclose(factor, np.tril(factor)):
        raise ValueError("factor must be lower-triangular")
    if np.any(np.diag(factor) <= 0):
        raise ValueError("factor must have strictly positive diagonal")
    return factor


def reflection_maximal_sample(
    mu1: np.ndarray, mu2: np.ndarray, factor: Factor, gen: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Reflection-maximal coupling of N(mu1, F F^T) and N(mu2, F F^T).

    ``factor`` is the lower-triangular Cholesky factor F (a scalar ``s``
    stands for ``s * I``).  Returns ``(x, y, met)`` where ``met`` happens
    with the maximal probability, one minus the total variation between the
    two proposal laws, and on meeting the returned states are bit-identical.
    On non-meeting, the second innovation is the first one reflected through
    the hyperplane orthogonal to the standardized mean gap.
    """
    if np.ndim(factor) == 0 and float(factor) <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    gap = mu1 - mu2
    z = _unapply_factor(factor, gap)  # singular matrix factors raise here
    z_norm_sq = float(z @ z)
    v = gen.standard_normal(mu1.shape[0])
    x = mu1 + _apply_factor(factor, v)
    if z_norm_sq == 0.0:
        return x, x.copy(), True
    # densities compared in log space: accept when
    # log U < log N(v + z; 0, I) - log N(v; 0, I) = -<z, v> - ||z||^2 / 2
    log_u = np.log(gen.uniform())
    if log_u < -float(z @ v) - 0.5 * z_norm_sq:
        return x, x.copy(), True
    e = z / np.sqrt(z_norm_sq)
    w = v - 2.0 * float(e @ v) * e
    y = mu2 + _apply_factor(factor, w)
    return x, y, False


def ar1_coupled(rho: float, dim: int) -> CoupledKernel:
    """Autoregressive Gaussian kernel x' ~ N(rho x, (1 - rho^2) I).

    Keeps the standard Gaussian invariant (rho^2 + (1 - rho^2) = 1); the
    coupling is reflection-maximal on the shifted means.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    scale = float(np.sqrt(1.0 - rho**2))

    def single_step(x, gen):
        return rho * x + scale * gen.standard_normal(dim)

    def step(x, y, gen):
        return reflection_maximal_sample(rho * x, rho * y, scale, gen)

    return CoupledKernel(dim=dim, step=step, single_step=single_step, name="ar1")


def rwmh_coupled(target: TargetModel, step_size: float, factor: Factor = 1.0) -> CoupledKernel:
    """Random-walk Metropolis-Hastings with reflection-coupled proposals.

    Proposals are N(x, step_size * F F^T); acceptance uses one uniform
    shared by both chains.  The gradient of the target is not required.
    """
    if target.log_gamma is None:
        raise ValueError("rwmh requires a target with log_gamma")
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    factor = _validate_factor(factor, target.dim)
    prop_factor = np.sqrt(step_size) * factor if np.ndim(factor) else float(np.sqrt(step_size) * factor)
    log_gamma = target.log_gamma

    def single_step(x, gen):
        prop = x + _apply_factor(prop_factor, gen.standard_normal(target.dim))
        log_u = np.log(gen.uniform())
        if log_u < log_gamma(prop) - log_gamma(x):
            return prop
        return x.copy()

    def step(x, y, gen):
        xp, yp, proposals_met = reflection_maximal_sample(x, y, prop_factor, gen)
        log_u = np.log(gen.uniform())
        accept_x = log_u < log_gamma(xp) - log_gamma(x)
        accept_y = log_u < log_gamma(yp) - log_gamma(y)
        new_x = xp if accept_x else x.copy()
        new_y = yp if accept_y else y.copy()
        return new_x, new_y, bool(proposals_met and accept_x and accept_y)

    return CoupledKernel(dim=target.dim, step=step, single_step=single_step, name="rwmh")


def mala_coupled(target: TargetModel, step_size: float, factor: Factor = 1.0) -> CoupledKernel:
    """Langevin-proposal Metropolis-Hastings with reflection-coupled proposals.

    With preconditioner Sigma = F F^T, proposals are
    N(x + (step_size / 2) Sigma grad_log_gamma(x), step_size * Sigma) and
    the Hastings correction uses the same proposal density both ways; one
    shared uniform accepts each chain.
    """
    if target.grad_log_gamma is None:
        raise ValueError("mala requires a target with a gradient")
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    factor = _validate_factor(factor, target.dim)
    prop_factor = np.sqrt(step_size) * factor if np.ndim(factor) else float(np.sqrt(step_size) * factor)
    log_gamma, grad = target.log_gamma, target.grad_log_gamma
    half = 0.5 * step_size

    def drift(x):
        g = grad(x)
        if np.ndim(factor) == 0:
            return x + half * float(factor) ** 2 * g
        return x + half * (factor @ (factor.T @ g))

    def log_q(point, mean):
        z = _unapply_factor(prop_factor, point - mean)
        return -0.5 * float(z @ z)  # determinant cancels in the ratio

    def single_step(x, gen):
        mean_x = drift(x)
        prop = mean_x + _apply_factor(prop_factor, gen.standard_normal(target.dim))
        log_alpha = (
            log_gamma(prop) + log_q(x, drift(prop)) - log_gamma(x) - log_q(prop, mean_x)
        )
        if np.log(gen.uniform()) < log_alpha:
            return prop
        return x.copy()

    def step(x, y, gen):
        mean_x, mean_y = drift(x), drift(y)
        xp, yp, proposals_met = reflection_maximal_sample(mean_x, mean_y, prop_factor, gen)
        log_u = np.log(gen.uniform())
        accept_x = log_u < (
            log_gamma(xp) + log_q(x, drift(xp)) - log_gamma(x) - log_q(xp, mean_x)
        )
        accept_y = log_u < (
            log_gamma(yp) + log_q(y, drift(yp)) - log_gamma(y) - log_q(yp, mean_y)
        )
        new_x = xp if accept_x else x.copy()
        new_y = yp if accept_y else y.copy()
        return new_x, new_y, bool(proposals_met and accept_x and accept_y)

    return CoupledKernel(dim=target.dim, step=step, single_step=single_step, name="mala")


def synthetic_coupler(coupling_prob: float, dim: int) -> CoupledKernel:
    """Perfect sampler of N(0, I) whose pairs meet with exact probability.

    Each coupled step flips one Bernoulli(coupling_prob) coin: on success
    both chains receive the same fresh draw (met), otherwise two independent
    draws.  Both marginals are exact N(0, I) either way, so the kernel has a
    state-independent coupling probability by construction.  Note the coin
    is flipped anew every step, including for chains at equal states, so
    this coupling is deliberately not faithful.
    """
    if not 0 < coupling_prob <= 1:
        raise ValueError(f"coupling_prob must be in (0, 1], got {coupling_prob}")

    def single_step(x, gen):
        return gen.standard_normal(dim)

    def step(x, y, gen):
        if gen.uniform() < coupling_prob:
            draw = gen.standard_normal(dim)
            return draw, draw.copy(), True
        return gen.standard_normal(dim), gen.standard_normal(dim), False

    return CoupledKernel(dim=dim, step=step, single_step=single_step, name="synthetic")


@dataclass(frozen=True)
class KernelParams:
    """Named kernel selection with its tunables, as used by run configs."""

    variant: str
    rho: Optional[float] = None
    step_size: Optional[float] = None
    coupling_prob: Optional[float] = None
    precond: Optional[Factor] = None

    def __post_init__(self):
        if self.variant not in ("ar1", "rwmh", "mala", "synthetic"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "ar1" and not (self.rho is not None and 0 < self.rho < 1):
            raise ValueError("ar1 requires rho in (0, 1)")
        if self.variant in ("rwmh", "mala") and not (self.step_size is not None and self.step_size > 0):
            raise ValueError(f"{self.variant} requires step_size > 0")
        if self.variant == "synthetic" and not (
            self.coupling_prob is not None and 0 < self.coupling_prob <= 1
        ):
            raise ValueError("synthetic requires coupling_prob in (0, 1]")


def build_kernel(params: KernelParams, dim: int, target: TargetModel | None = None) -> CoupledKernel:
    """Instantiate the kernel described by ``params``."""
    if params.variant == "ar1":
        return ar1_coupled(params.rho, dim)
    if params.variant == "synthetic":
        return synthetic_coupler(params.coupling_prob, dim)
    if target is None:
        raise ValueError(f"{params.variant} requires a target")
    factor = params.precond if params.precond is not None else 1.0
    if params.variant == "rwmh":
        return rwmh_coupled(target, params.step_size, factor)
    return mala_coupled(target, params.step_size, factor)
