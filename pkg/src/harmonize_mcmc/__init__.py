"""Interacting parallel MCMC chains with coupling-driven weight
harmonization, consistent weighted target estimates, and online
f-divergence upper-bound diagnostics."""

__version__ = "0.1.0"

from .divergences import (
    FDivergenceSpec,
    WeightVector,
    builtin_specs,
    empirical_f_divergence,
    ess,
    normalize_log_weights,
    renyi_generator,
    spec_by_name,
    theoretical_ess,
)
from .harmonizer import (
    DiagnosticRecord,
    HarmonizerConfig,
    ParticleSystem,
    StepReport,
    diagnostics,
    ess_after_merge,
    ess_merge_upper_bound,
    harmonize_step,
    init_system,
    run,
    weighted_estimate,
)
from .kernels import (
    CoupledKernel,
    KernelParams,
    ar1_coupled,
    build_kernel,
    mala_coupled,
    reflection_maximal_sample,
    rwmh_coupled,
    synthetic_coupler,
)
from .oracle import (
    GaussianMarginal,
    as_gaussian_spec,
    gaussian_chi2,
    gaussian_kl,
    gaussian_marginal_t,
    quadrature_f_divergence_1d,
    standard_marginal,
    theoretical_ess_curve,
)
from .rng import INIT_LANE, RESHUFFLE_LANE, StreamFamily, StreamKey, derangement, stream
from .targets import (
    GaussianSpec,
    StochVolSpec,
    TargetModel,
    gaussian_log_density,
    gaussian_sample,
    gaussian_target,
    laplace_approx,
    load_observations,
    save_observations,
    stochvol_simulate,
    stochvol_target,
)
