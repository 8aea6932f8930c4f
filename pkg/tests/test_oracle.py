"""Closed-form Gaussian divergences against independent quadrature."""

import numpy as np
import pytest

from harmonize_mcmc.divergences import builtin_specs, theoretical_ess
from harmonize_mcmc.oracle import (
    GaussianMarginal,
    as_gaussian_spec,
    gaussian_chi2,
    gaussian_kl,
    gaussian_marginal_t,
    quadrature_f_divergence_1d,
    standard_marginal,
    theoretical_ess_curve,
)
from harmonize_mcmc.targets import GaussianSpec


def g1(mean, var):
    return GaussianMarginal(np.array([mean]), np.array([[var]]))


def random_1d_pairs(rng, n):
    """Random finite-chi2 1D pairs: q keeps enough variance relative to p."""
    pairs = []
    while len(pairs) < n:
        mp, mq = rng.uniform(-1.5, 1.5, size=2)
        vp = rng.uniform(0.5, 1.5)
        vq = rng.uniform(0.6 * vp, 2.0 * vp)
        if 2.0 / vp - 1.0 / vq > 1e-2:
            pairs.append((g1(mp, vp), g1(mq, vq)))
    return pairs


def test_marginal_validation():
    with pytest.raises(ValueError):
        GaussianMarginal(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        GaussianMarginal(np.zeros(1), np.array([[-1.0]]))


def test_marginal_t_identity_at_zero():
    mu0 = GaussianSpec.isotropic(np.array([3.0, -1.0]), 2.0)
    marginal = gaussian_marginal_t(mu0, 0.7, 0)
    assert np.allclose(marginal.mean, mu0.mean)
    assert np.allclose(marginal.cov, mu0.cov)


def test_marginal_t_converges_to_target():
    mu0 = GaussianSpec.isotropic(np.array([10.0, 10.0]), 5.0)
    marginal = gaussian_marginal_t(mu0, 0.9, 800)
    assert np.allclose(marginal.mean, 0.0, atol=1e-12)
    assert np.allclose(marginal.cov, np.eye(2), atol=1e-12)


def test_marginal_t_two_step_hand_value():
    # rho=0.5, 1D, var 4: 0.0625 * 4 + (1 - 0.0625) = 1.1875
    mu0 = GaussianSpec(np.array([1.0]), np.array([[2.0]]))
    marginal = gaussian_marginal_t(mu0, 0.5, 2)
    assert marginal.cov[0, 0] == pytest.approx(1.1875, rel=1e-14)
    assert marginal.mean[0] == pytest.approx(0.25)


def test_marginal_t_matches_one_step_composition(rng):
    cov = np.array([[2.0, 0.5], [0.5, 1.2]])
    mu0 = GaussianSpec.from_cov(np.array([1.0, -2.0]), cov)
    rho = 0.85
    one = gaussian_marginal_t(mu0, rho, 1)
    assert np.allclose(one.cov, rho**2 * cov + (1 - rho**2) * np.eye(2), atol=1e-14)
    assert np.allclose(one.mean, rho * mu0.mean)


def test_marginal_t_semigroup():
    cov = np.array([[2.0, 0.3], [0.3, 0.9]])
    mu0 = GaussianSpec.from_cov(np.array([2.0, -1.0]), cov)
    rho = 0.8
    for t, s in [(3, 4), (1, 9), (6, 2)]:
        direct = gaussian_marginal_t(mu0, rho, t + s)
        restart = gaussian_marginal_t(as_gaussian_spec(gaussian_marginal_t(mu0, rho, t)), rho, s)
        assert np.allclose(direct.mean, restart.mean, atol=1e-10)
        assert np.allclose(direct.cov, restart.cov, atol=1e-10)
    with pytest.raises(ValueError):
        gaussian_marginal_t(mu0, rho, -1)


def test_chi2_identical_is_zero():
    p = g1(0.3, 1.2)
    assert gaussian_chi2(p, p) == pytest.approx(0.0, abs=1e-12)


def test_chi2_against_quadrature_frozen_pair():
    # chi2(N(0,1) || N(1,1)) = e - 1
    p, q = g1(0.0, 1.0), g1(1.0, 1.0)
    assert gaussian_chi2(p, q) == pytest.approx(np.e - 1.0, rel=1e-12)
    quad_val = quadrature_f_divergence_1d(builtin_specs()["chi2"], p, q)
    assert gaussian_chi2(p, q) == pytest.approx(quad_val, abs=1e-8)


def test_chi2_infinite_when_q_too_narrow():
    assert gaussian_chi2(g1(0.0, 1.0), g1(0.0, 0.49)) == np.inf
    assert np.isfinite(gaussian_chi2(g1(0.0, 1.0), g1(0.0, 0.51)))


def test_chi2_quadrature_agreement_on_random_pairs(rng):
    spec = builtin_specs()["chi2"]
    for p, q in random_1d_pairs(rng, 10):
        closed = gaussian_chi2(p, q)
        quad_val = quadrature_f_divergence_1d(spec, p, q)
        assert closed == pytest.approx(quad_val, abs=1e-6, rel=1e-6)


def test_kl_frozen_values():
    p, q = g1(0.0, 1.0), g1(1.0, 1.0)
    assert gaussian_kl(p, p) == pytest.approx(0.0, abs=1e-12)
    assert gaussian_kl(p, q) == pytest.approx(0.5, rel=1e-12)


def test_kl_tensorizes_over_independent_coordinates():
    p1, q1 = g1(0.2, 1.1), g1(-0.4, 0.9)
    p3 = GaussianMarginal(np.full(3, 0.2), 1.1 * np.eye(3))
    q3 = GaussianMarginal(np.full(3, -0.4), 0.9 * np.eye(3))
    assert gaussian_kl(p3, q3) == pytest.approx(3 * gaussian_kl(p1, q1), rel=1e-12)


def test_kl_quadrature_agreement(rng):
    spec = builtin_specs()["kl"]
    for p, q in random_1d_pairs(rng, 5):
        closed = gaussian_kl(p, q)
        quad_val = quadrature_f_divergence_1d(spec, p, q)
        assert closed == pytest.approx(quad_val, abs=1e-8)


def test_divergences_zero_iff_equal(rng):
    for _ in range(10):
        p, q = random_1d_pairs(rng, 1)[0]
        if abs(p.mean[0] - q.mean[0]) > 0.05 or abs(p.cov[0, 0] - q.cov[0, 0]) > 0.05:
            assert gaussian_chi2(p, q) > 1e-4
            assert gaussian_kl(p, q) > 1e-5


def test_chi2_tensorization_against_quadrature(rng):
    # d-dimensional closed form equals the product of 1D quadrature factors
    spec = builtin_specs()["chi2"]
    means_p = np.array([0.1, -0.3, 0.2])
    means_q = np.array([0.4, 0.0, -0.2])
    vars_p = np.array([1.0, 0.8, 1.2])
    vars_q = np.array([1.1, 0.9, 1.0])
    p3 = GaussianMarginal(means_p, np.diag(vars_p))
    q3 = GaussianMarginal(means_q, np.diag(vars_q))
    product = 1.0
    for i in range(3):
        quad_val = quadrature_f_divergence_1d(
            spec, g1(means_p[i], vars_p[i]), g1(means_q[i], vars_q[i])
        )
        product *= quad_val + 1.0
    assert gaussian_chi2(p3, q3) + 1.0 == pytest.approx(product, rel=1e-8)


def test_quadrature_identical_is_zero():
    p = g1(0.5, 1.0)
    assert quadrature_f_divergence_1d(builtin_specs()["chi2"], p, p) == pytest.approx(0.0, abs=1e-9)


def test_quadrature_tv_frozen_value():
    # TV of equal-variance unit Gaussians one apart: 2 Phi(1/2) - 1
    got = quadrature_f_divergence_1d(builtin_specs()["tv"], g1(0.0, 1.0), g1(1.0, 1.0))
    assert got == pytest.approx(0.3829249225480261, abs=1e-6)


def test_quadrature_requires_one_dimension():
    p3 = GaussianMarginal(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        quadrature_f_divergence_1d(builtin_specs()["tv"], p3, p3)


def test_ess_curve_limits():
    mu0 = GaussianSpec.isotropic(np.full(4, 5.0), 2.0)
    m = 128
    curve = theoretical_ess_curve(mu0, 0.9, m, 300)
    assert curve.shape == (301,)
    assert curve[-1] == pytest.approx(m, rel=1e-6)
    chi2_0 = gaussian_chi2(standard_marginal(4), gaussian_marginal_t(mu0, 0.9, 0))
    assert curve[0] == pytest.approx(theoretical_ess(chi2_0, m))


def test_ess_curve_monotone_for_shrinking_start():
    mu0 = GaussianSpec.isotropic(np.full(10, 5.0), 2.0)
    curve = theoretical_ess_curve(mu0, 0.9, 128, 200)
    assert np.all(np.diff(curve) >= -1e-9)
