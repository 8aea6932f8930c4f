"""f-divergence generators and weight-vector diagnostics.

A divergence between a weighted and an unweighted empirical measure on the
same support reduces to ``mean(f(M * W))`` for the generator ``f`` of the
divergence and normalized weights ``W`` of length ``M``.  This module
defines the generator specs, that empirical evaluation, and the effective
sample size, which is the chi-squared case in disguise:
``ess(W) = M / (chi2 + 1)``.

Generators may take the value ``+inf`` (for instance ``reverse_kl`` at a
zero weight); the empirical divergence propagates infinities instead of
raising, since an honest bound can legitimately be infinite early in a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import logsumexp

ArrayLike = Union[np.ndarray, list, tuple]


@dataclass(frozen=True)
class FDivergenceSpec:
    """A convex generator ``f`` with ``f(1) = 0`` defining one divergence.

    ``f`` maps ``[0, inf)`` to the extended reals and is vectorized.
    ``f_prime`` is the derivative on ``(0, inf)``, with the midpoint
    convention at a single kink point; it exists for verification harnesses
    only, the production bound needs just ``f``.  ``f_at_zero`` is the right
    limit of ``f`` at 0 (possibly ``inf``).
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    f_at_zero: float


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative weights, optionally known to sum to one."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(np.isfinite(values)):
            raise ValueError("weights must be finite")
        if np.any(values < 0):
            raise ValueError("weights must be nonnegative")
        if self.normalized and abs(values.sum() - 1.0) > 1e-8:
            raise ValueError(f"weights marked normalized but sum to {values.sum()!r}")

    def __len__(self) -> int:
        return self.values.size

    def normalize(self) -> "WeightVector":
        total = self.values.sum()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero weight vector")
        return WeightVector(self.values / total, normalized=True)


def _as_normalized_values(weights) -> np.ndarray:
    """Coerce a WeightVector or array to validated normalized values."""
    if isinstance(weights, WeightVector):
        if not weights.normalized:
            raise ValueError("expected a normalized WeightVector")
        return weights.values
    return WeightVector(np.asarray(weights, dtype=float), normalized=True).values


def _chi2_f(t):
    t = np.asarray(t, dtype=float)
    return (t - 1.0) ** 2


def _tv_f(t):
    t = np.asarray(t, dtype=float)
    return np.abs(t - 1.0) / 2.0


def _kl_f(t):
    # t*log(t), continuously extended with value 0 at t = 0
    t = np.asarray(t, dtype=float)
    safe = np.where(t > 0, t, 1.0)
    return np.where(t > 0, t * np.log(safe), 0.0)


def _reverse_kl_f(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.log(t)


def _hellinger2_f(t):
    t = np.asarray(t, dtype=float)
    return (np.sqrt(t) - 1.0) ** 2 / 2.0


def _tv_f_prime(t):
    # kink at t = 1: midpoint of the one-sided slopes -1/2 and 1/2 is 0
    t = np.asarray(t, dtype=float)
    return np.where(t == 1.0, 0.0, np.sign(t - 1.0) / 2.0)


def builtin_specs() -> dict[str, FDivergenceSpec]:
    """The named divergence generators, keyed by their stable names."""
    return {
        "chi2": FDivergenceSpec(
            name="chi2",
            f=_chi2_f,
            f_prime=lambda t: 2.0 * (np.asarray(t, dtype=float) - 1.0),
            f_at_zero=1.0,
        ),
        "tv": FDivergenceSpec(
            name="tv",
            f=_tv_f,
            f_prime=_tv_f_prime,
            f_at_zero=0.5,
        ),
        "kl": FDivergenceSpec(
            name="kl",
            f=_kl_f,
            f_prime=lambda t: np.log(np.asarray(t, dtype=float)) + 1.0,
            f_at_zero=0.0,
        ),
        "reverse_kl": FDivergenceSpec(
            name="reverse_kl",
            f=_reverse_kl_f,
            f_prime=lambda t: -1.0 / np.asarray(t, dtype=float),
            f_at_zero=np.inf,
        ),
        "hellinger2": FDivergenceSpec(
            name="hellinger2",
            f=_hellinger2_f,
            f_prime=lambda t: (1.0 - 1.0 / np.sqrt(np.asarray(t, dtype=float))) / 2.0,
            f_at_zero=0.5,
        ),
    }


def renyi_generator(alpha: float) -> FDivergenceSpec:
    """Generator ``f(t) = |t - 1|**alpha`` for ``alpha >= 1``.

    This is the power-form generator, not the logarithmic Renyi divergence.
    ``alpha = 2`` coincides with ``chi2``; ``alpha = 1`` is twice ``tv``.
    """
    if alpha < 1:
        raise ValueError(f"renyi generator requires alpha >= 1, got {alpha}")
    alpha = float(alpha)

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.abs(t - 1.0) ** alpha

    def f_prime(t):
        t = np.asarray(t, dtype=float)
        if alpha == 1.0:
            # kink at 1, midpoint convention
            return np.where(t == 1.0, 0.0, np.sign(t - 1.0))
        return alpha * np.sign(t - 1.0) * np.abs(t - 1.0) ** (alpha - 1.0)

    return FDivergenceSpec(name=f"renyi_{alpha:g}", f=f, f_prime=f_prime, f_at_zero=1.0)


def spec_by_name(name: str) -> FDivergenceSpec:
    """Resolve a divergence spec from its stable string name.

    Accepts the builtin names plus ``renyi_<alpha>``, e.g. ``renyi_1.5``.
    """
    specs = builtin_specs()
    if name in specs:
        return specs[name]
    if name.startswith("renyi_"):
        try:
            alpha = float(name.removeprefix("renyi_"))
        except ValueError:
            raise ValueError(f"malformed renyi spec name: {name!r}") from None
        return renyi_generator(alpha)
    valid = sorted(specs) + ["renyi_<alpha>"]
    raise ValueError(f"unknown divergence {name!r}; valid names: {', '.join(valid)}")


def empirical_f_divergence(spec: FDivergenceSpec, weights) -> float:
    """Divergence of the weighted vs the unweighted empirical measure.

    For normalized weights ``W`` of length ``M`` this is
    ``mean(f(M * W))``.  Infinite generator values propagate.
    """
    w = _as_normalized_values(weights)
    m = w.size
    with np.errstate(over="ignore"):
        vals = np.asarray(spec.f(m * w), dtype=float)
    if np.any(np.isnan(vals)):
        raise FloatingPointError(f"generator {spec.name!r} produced NaN")
    return float(np.mean(vals))


def ess(weights) -> float:
    """Effective sample size ``1 / sum(W**2)`` of normalized weights.

    Lies in ``[1, M]``; equals ``M / (chi2 + 1)`` for the empirical
    chi-squared divergence of the same weights.
    """
    w = _as_normalized_values(weights)
    denom = float(w @ w)
    if denom <= 0:
        raise ValueError("effective sample size undefined for all-zero weights")
    return 1.0 / denom


def theoretical_ess(chi2_value: float, m: int) -> float:
    """Ideal effective sample size ``M / (chi2 + 1)`` of ``m`` draws."""
    if chi2_value < 0:
        raise ValueError(f"chi-squared divergence must be >= 0, got {chi2_value}")
    if m <= 0:
        raise ValueError(f"sample count must be positive, got {m}")
    return m / (chi2_value + 1.0)


def normalize_log_weights(log_weights) -> WeightVector:
    """Normalized weights from unnormalized log weights, stably.

    Shift-invariant and overflow-safe for entries up to about +-700.
    Entries of ``-inf`` are allowed (zero weight) as long as at least one
    entry is finite.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log weights must be a non-empty 1-d array")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log weights must not contain NaN or +inf")
    if not np.any(np.isfinite(lw)):
        raise ValueError("at least one log weight must be finite")
    w = np.exp(lw - logsumexp(lw))
    return WeightVector(w / w.sum(), normalized=True)
