"""Weight harmonization of interacting coupled MCMC chains.

The engine advances 2N chains as N coupled pairs.  Whenever a pair meets,
the two chains' unnormalized weights are both replaced by their average
(done in log space), and the pairings of all pairs that met this step are
reshuffled so weight mass keeps circulating.  The total unnormalized weight
is conserved exactly, every convex-generator divergence bound computed from
the normalized weights is non-increasing, and the normalized weight vector
homogenizes toward uniform as the chains mix.

Determinism contract: the draws of pair ``i`` at step ``t`` come from the
stream ``(seed, t, i)`` and the reshuffle draw from ``(seed, t, reserved)``,
so results are bit-reproducible and independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np
from scipy.special import logsumexp

from .divergences import (
    FDivergenceSpec,
    WeightVector,
    _as_normalized_values,
    empirical_f_divergence,
    ess,
    normalize_log_weights,
)
from .kernels import CoupledKernel
from .rng import RESHUFFLE_LANE, StreamFamily, derangement
from .targets import GaussianSpec, TargetModel, gaussian_log_density, gaussian_sample

_LOG2 = float(np.log(2.0))

RESHUFFLE_POLICIES = ("derangement", "uniform_permutation")


@dataclass(frozen=True)
class HarmonizerConfig:
    """Run policy: stream seed and how met pairings are reshuffled.

    The merge coefficient is fixed at ``1/2`` (an even split maximizes the
    effective-sample-size improvement of a merge) and is not tunable.
    """

    seed: int
    reshuffle_policy: str = "derangement"
    alpha: float = 0.5

    def __post_init__(self):
        if self.reshuffle_policy not in RESHUFFLE_POLICIES:
            raise ValueError(
                f"reshuffle_policy must be one of {RESHUFFLE_POLICIES}, got {self.reshuffle_policy!r}"
            )
        if self.alpha != 0.5:
            raise ValueError("the merge coefficient is fixed at 1/2")


@dataclass
class ParticleSystem:
    """2N chain states with log weights and the current pairing.

    ``pairing[i] = j`` couples chain ``i`` with chain ``j + n_pairs``.
    Log weights are unnormalized; their log-sum-exp is invariant across
    harmonization steps.
    """

    states: np.ndarray  # (2N, d)
    log_w: np.ndarray  # (2N,)
    pairing: np.ndarray  # (N,)
    t: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.log_w = np.asarray(self.log_w, dtype=float)
        self.pairing = np.asarray(self.pairing, dtype=np.intp)
        n2 = self.states.shape[0]
        if self.states.ndim != 2 or n2 % 2 != 0 or n2 == 0:
            raise ValueError("states must be a (2N, d) array with N >= 1")
        if self.log_w.shape != (n2,):
            raise ValueError("log_w must have one entry per chain")
        if not np.all(np.isfinite(self.log_w)):
            raise ValueError("log weights must be finite")
        n = n2 // 2
        if self.pairing.shape != (n,) or not np.array_equal(np.sort(self.pairing), np.arange(n)):
            raise ValueError("pairing must be a permutation of 0..N-1")

    @property
    def n_pairs(self) -> int:
        return self.states.shape[0] // 2

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class StepReport:
    """Which pairs met during one step and how pairings were permuted."""

    coupled_set: tuple[int, ...]
    n_met: int
    permutation_applied: np.ndarray


@dataclass(frozen=True)
class DiagnosticRecord:
    """Weight diagnostics of a system at one time step.

    ``bounds[name]`` is the empirical divergence of the weighted versus
    unweighted particle measure, an upper-bound estimate of the divergence
    of the target from the chain law; values may be ``inf``.
    """

    t: int
    ess: float
    n_met: int
    min_weight: float
    max_weight: float
    logsumexp_w: float
    bounds: dict[str, float] = field(default_factory=dict)


def init_system(
    mu0: GaussianSpec, target: TargetModel, n_pairs: int, rng: np.random.Generator
) -> ParticleSystem:
    """Draw 2N chains from ``mu0`` with importance log weights.

    Weight ``i`` is ``log_gamma(x_i) - log mu0(x_i)``; the normalizing
    constant of the target drops out at normalization time.
    """
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    if mu0.dim != target.dim:
        raise ValueError(f"mu0 has dimension {mu0.dim}, target {target.dim}")
    states = gaussian_sample(mu0, rng, size=2 * n_pairs)
    log_w = np.array(
        [target.log_gamma(x) - gaussian_log_density(mu0, x) for x in states], dtype=float
    )
    bad = np.flatnonzero(~np.isfinite(log_w))
    if bad.size:
        raise ValueError(f"non-finite initial log weight at chain index {int(bad[0])}")
    return ParticleSystem(states=states, log_w=log_w, pairing=np.arange(n_pairs), t=0)


def harmonize_step(
    system: ParticleSystem, kernel: CoupledKernel, config: HarmonizerConfig
) -> tuple[ParticleSystem, StepReport]:
    """Advance every pair one coupled transition and harmonize weights.

    For each pair that meets, both log weights become
    ``logaddexp(lw_a, lw_b) - log 2`` (the log of the average), which keeps
    the total weight constant.  If more than one pair met, the partners of
    the met pairs are permuted among themselves according to the configured
    policy; a single met pair keeps its partner, since there is nothing to
    exchange with.
    """
    if kernel.dim != system.dim:
        raise ValueError(f"kernel dimension {kernel.dim} != system dimension {system.dim}")
    n = system.n_pairs
    t = system.t
    states = system.states
    new_states = np.empty_like(states)
    log_w = system.log_w.copy()
    pairing = system.pairing
    family = StreamFamily(config.seed)
    step_fn = kernel.step
    coupled: list[int] = []
    for i in range(n):
        partner = int(pairing[i]) + n
        gen = family.stream(t, i)
        x_next, y_next, met = step_fn(states[i], states[partner], gen)
        new_states[i] = x_next
        new_states[partner] = y_next
        if met:
            assert np.array_equal(x_next, y_next), "met flag set but states differ"
            merged = np.logaddexp(log_w[i], log_w[partner]) - _LOG2
            log_w[i] = merged
            log_w[partner] = merged
            coupled.append(i)

    sigma = np.arange(n)
    new_pairing = pairing.copy()
    if len(coupled) > 1:
        gen = family.stream(t, RESHUFFLE_LANE)
        idx = np.asarray(coupled, dtype=np.intp)
        if config.reshuffle_policy == "derangement":
            local = derangement(gen, idx.size)
        else:
            local = gen.permutation(idx.size)
        sigma[idx] = idx[local]
        new_pairing = pairing[sigma]

    new_system = ParticleSystem(states=new_states, log_w=log_w, pairing=new_pairing, t=t + 1)
    report = StepReport(coupled_set=tuple(coupled), n_met=len(coupled), permutation_applied=sigma)
    return new_system, report


def weighted_estimate(system: ParticleSystem, phi: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Self-normalized estimate ``sum_i W_i phi(x_i)`` under the target."""
    weights = normalize_log_weights(system.log_w).values
    values = np.asarray([np.asarray(phi(x), dtype=float) for x in system.states])
    bad = np.flatnonzero(~np.all(np.isfinite(values.reshape(values.shape[0], -1)), axis=1))
    if bad.size:
        raise ValueError(f"phi returned a non-finite value at chain index {int(bad[0])}")
    return np.tensordot(weights, values, axes=(0, 0))


def diagnostics(
    system: ParticleSystem,
    specs: Iterable[FDivergenceSpec],
    n_met: int = 0,
) -> DiagnosticRecord:
    """Weight diagnostics of the current system.

    ``n_met`` is carried over from the step report that produced the
    system (0 for a freshly initialized one).
    """
    weights = normalize_log_weights(system.log_w)
    w = weights.values
    bounds = {spec.name: empirical_f_divergence(spec, weights) for spec in specs}
    return DiagnosticRecord(
        t=system.t,
        ess=ess(weights),
        n_met=int(n_met),
        min_weight=float(w.min()),
        max_weight=float(w.max()),
        logsumexp_w=float(logsumexp(system.log_w)),
        bounds=bounds,
    )


def ess_after_merge(weights: Union[WeightVector, np.ndarray], j: int, k: int) -> float:
    """Effective sample size after averaging weights ``j`` and ``k``.

    Closed form: ``ess / (1 - ess * (W_j - W_k)^2 / 2)`` for the current
    ``ess``; always at least the current value and at most twice it.
    """
    w = _as_normalized_values(weights)
    if j == k:
        raise ValueError("merge indices must differ")
    current = 1.0 / float(w @ w)
    gap = float(w[j] - w[k])
    denom = 1.0 - current * gap**2 / 2.0
    assert denom > 0.0, "merge denominator must stay positive"
    return current / denom


def ess_merge_upper_bound(weights: Union[WeightVector, np.ndarray]) -> float:
    """Largest effective sample size any single merge could reach.

    Uses the weight ratio ``kappa = max W / min W``:
    ``ess / (1 - (kappa - 1)^2 / (2 (kappa^2 + M - 1)))`` for ``M``
    weights.  With a zero minimum weight the bound degrades to ``2 * ess``.
    """
    w = _as_normalized_values(weights)
    current = 1.0 / float(w @ w)
    w_min, w_max = float(w.min()), float(w.max())
    if w_min == 0.0:
        return 2.0 * current
    kappa = w_max / w_min
    m = w.size
    return current / (1.0 - (kappa - 1.0) ** 2 / (2.0 * (kappa**2 + m - 1.0)))


def run(
    system: ParticleSystem,
    kernel: CoupledKernel,
    specs: Iterable[FDivergenceSpec],
    n_steps: int,
    config: HarmonizerConfig,
) -> list[DiagnosticRecord]:
    """Run ``n_steps`` harmonization steps, recording diagnostics.

    Returns one record per time step including the initial state, so the
    trace has ``n_steps + 1`` rows.  Deterministic given ``config.seed``.
    """
    if n_steps < 0:
        raise ValueError(f"n_steps must be >= 0, got {n_steps}")
    specs = tuple(specs)
    records = [diagnostics(system, specs, n_met=0)]
    for _ in range(n_steps):
        system, report = harmonize_step(system, kernel, config)
        records.append(diagnostics(system, specs, n_met=report.n_met))
    return records
