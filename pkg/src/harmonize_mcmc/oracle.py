"""Closed-form ground truth for the tractable Gaussian chain experiment.

For the autoregressive Gaussian kernel started from a Gaussian, the chain
law at every step is Gaussian with a known mean and covariance, so the
chi-squared and Kullback-Leibler divergences from the standard-normal
target have closed forms.  A one-dimensional adaptive quadrature sits
alongside as an independent check of those closed forms; the
multi-dimensional formulas are themselves validated by tensorization
against the quadrature in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cholesky
from scipy.stats import norm

from .divergences import FDivergenceSpec, theoretical_ess
from .targets import GaussianSpec


@dataclass(frozen=True)
class GaussianMarginal:
    """Gaussian law given by mean and full covariance matrix."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        d = mean.size
        if cov.shape != (d, d):
            raise ValueError(f"cov must be {d}x{d}, got {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("cov must be symmetric within 1e-12")
        try:
            cholesky(cov, lower=True)
        except np.linalg.LinAlgError:
            raise ValueError("cov must be positive-definite") from None

    @property
    def dim(self) -> int:
        return self.mean.size


def standard_marginal(dim: int) -> GaussianMarginal:
    return GaussianMarginal(np.zeros(dim), np.eye(dim))


def as_gaussian_spec(marginal: GaussianMarginal) -> GaussianSpec:
    """Cholesky-factored view of a marginal, usable as an initial law."""
    return GaussianSpec(marginal.mean, cholesky(marginal.cov, lower=True))


def gaussian_marginal_t(mu0: GaussianSpec, rho: float, t: int) -> GaussianMarginal:
    """Law of the autoregressive Gaussian chain after ``t`` steps from ``mu0``.

    One step maps ``N(m, S)`` to ``N(rho m, rho^2 S + (1 - rho^2) I)``;
    telescoping gives mean ``rho^t m`` and covariance
    ``rho^(2t) S + (1 - rho^(2t)) I``.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    d = mu0.dim
    shrink = rho ** (2 * t)
    cov = shrink * mu0.cov + (1.0 - shrink) * np.eye(d)
    return GaussianMarginal(rho**t * mu0.mean, cov)


def gaussian_chi2(p: GaussianMarginal, q: GaussianMarginal) -> float:
    """Chi-squared divergence of ``p`` from ``q``: ``int p^2 / q - 1``.

    Finite exactly when the combined precision ``2 p.cov^-1 - q.cov^-1`` is
    positive-definite; returns ``inf`` otherwise.  Computed in log space so
    large divergences do not overflow prematurely.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    prec_p = np.linalg.inv(p.cov)
    prec_q = np.linalg.inv(q.cov)
    combined = 2.0 * prec_p - prec_q
    combined = 0.5 * (combined + combined.T)
    if np.linalg.eigvalsh(combined).min() <= 0:
        return float("inf")
    b = 2.0 * prec_p @ p.mean - prec_q @ q.mean
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    _, logdet_c = np.linalg.slogdet(combined)
    quad_term = (
        0.5 * float(b @ np.linalg.solve(combined, b))
        - float(p.mean @ prec_p @ p.mean)
        + 0.5 * float(q.mean @ prec_q @ q.mean)
    )
    log_integral = 0.5 * logdet_q - logdet_p - 0.5 * logdet_c + quad_term
    if log_integral > 700.0:
        return float("inf")
    return float(np.expm1(log_integral))


def gaussian_kl(p: GaussianMarginal, q: GaussianMarginal) -> float:
    """Kullback-Leibler divergence KL(p || q) between Gaussians."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    d = p.dim
    prec_q = np.linalg.inv(q.cov)
    diff = q.mean - p.mean
    _, logdet_p = np.linalg.slogdet(p.cov)
    _, logdet_q = np.linalg.slogdet(q.cov)
    return 0.5 * float(
        np.trace(prec_q @ p.cov) + diff @ prec_q @ diff - d + logdet_q - logdet_p
    )


def quadrature_f_divergence_1d(
    spec: FDivergenceSpec, p: GaussianMarginal, q: GaussianMarginal
) -> float:
    """Adaptive quadrature of ``int q(x) f(p(x) / q(x)) dx`` in 1D.

    Independent of the closed forms above; integrates over a window of
    twelve combined standard deviations around the two means to absolute
    tolerance 1e-9.
    """
    if p.dim != 1 or q.dim != 1:
        raise ValueError("quadrature oracle is one-dimensional")
    mean_p, sd_p = float(p.mean[0]), float(np.sqrt(p.cov[0, 0]))
    mean_q, sd_q = float(q.mean[0]), float(np.sqrt(q.cov[0, 0]))
    lo = min(mean_p, mean_q) - 12.0 * (sd_p + sd_q)
    hi = max(mean_p, mean_q) + 12.0 * (sd_p + sd_q)

    def integrand(x):
        log_p = norm.logpdf(x, mean_p, sd_p)
        log_q = norm.logpdf(x, mean_q, sd_q)
        with np.errstate(over="ignore"):
            ratio = np.exp(log_p - log_q)
        return np.exp(log_q) * float(spec.f(ratio))

    value, abserr = quad(
        integrand, lo, hi, epsabs=1e-9, epsrel=1e-10, limit=400, points=[mean_p, mean_q]
    )
    if not np.isfinite(value) or abserr > max(1e-6, 1e-9 * abs(value)):
        raise RuntimeError(
            f"quadrature for {spec.name!r} did not converge (value={value}, abserr={abserr})"
        )
    return float(value)


def theoretical_ess_curve(mu0: GaussianSpec, rho: float, m: int, n_steps: int) -> np.ndarray:
    """Ideal effective sample size ``M / (chi2_t + 1)`` for ``t = 0..n_steps``.

    ``chi2_t`` is the closed-form chi-squared divergence of the
    standard-normal target from the chain law at step ``t``.
    """
    target = standard_marginal(mu0.dim)
    curve = np.empty(n_steps + 1)
    for t in range(n_steps + 1):
        chi2_t = gaussian_chi2(target, gaussian_marginal_t(mu0, rho, t))
        curve[t] = theoretical_ess(chi2_t, m)
    return curve
