"""Exponential-family primitives: closed forms, gradient identities,
normalization, equivariances, and input validation."""

import numpy as np
import pytest

from popvb.expfam import (FamilyKind, NatParam, SuffStats, combine_stats,
                          dirichlet_expectation, dirichlet_kl,
                          gaussian_mean_kl, log_density, log_normalizer,
                          mean_params, scale_stats, zero_stats)

# Monte-Carlo estimates (2e6 draws, seed 20250817) frozen as a cross-check on
# the digamma closed form for E[ln x], E[ln(1-x)] under Beta(3, 2).
BETA_3_2_ELOG_MC = (-0.583040249679584, -1.083595846243893)

DIR_2_2_LOG_NORMALIZER = -1.791759469228055  # ln Gamma(2)^2 / Gamma(4) = ln(1/6)
GAUSS_LOGPDF_X2_MEAN1 = -1.4189385332046727  # N(2 | mean 1, tau 1)


def dir_p(*vals):
    return NatParam(FamilyKind.dirichlet(len(vals)), np.array(vals, float))


def beta_p(a, b):
    return NatParam(FamilyKind.beta(), np.array([a, b], float))


def cat_p(*vals):
    return NatParam(FamilyKind.categorical(len(vals)),
                    np.array(vals, float))


def gauss_p(values, precision):
    values = np.asarray(values, float)
    return NatParam(FamilyKind.gaussian(values.size, precision), values)


# -- log normalizers and mean parameters -------------------------------------


def test_log_normalizer_closed_forms():
    assert log_normalizer(dir_p(1.0, 1.0)) == pytest.approx(0.0, abs=1e-12)
    assert log_normalizer(dir_p(2.0, 2.0)) == pytest.approx(
        DIR_2_2_LOG_NORMALIZER, abs=1e-12)
    assert log_normalizer(beta_p(3.0, 2.0)) == pytest.approx(
        np.log(1.0 / 12.0), abs=1e-12)
    assert log_normalizer(gauss_p([0.0, 0.0], 1.0)) == 0.0
    # Gaussian: sum v^2 / (2 tau)
    assert log_normalizer(gauss_p([2.0, 3.0], [2.0, 1.0])) == pytest.approx(
        4.0 / 4.0 + 9.0 / 2.0, abs=1e-12)


def test_dirichlet_mean_params_closed_forms():
    assert mean_params(dir_p(1.0, 1.0)) == pytest.approx(
        [-1.0, -1.0], abs=1e-10)
    assert mean_params(dir_p(2.0, 1.0)) == pytest.approx(
        [-0.5, -1.5], abs=1e-10)


def test_beta_mean_params_exact_and_mc():
    got = mean_params(beta_p(3.0, 2.0))
    assert got == pytest.approx([-7.0 / 12.0, -13.0 / 12.0], abs=1e-10)
    assert got == pytest.approx(BETA_3_2_ELOG_MC, abs=1e-3)


def test_categorical_mean_params_is_softmax():
    p = cat_p(0.4, -1.2, 2.0)
    m = mean_params(p)
    assert m.sum() == pytest.approx(1.0, abs=1e-12)
    raw = np.exp(p.values - p.values.max())
    assert m == pytest.approx(raw / raw.sum(), abs=1e-12)


def test_gaussian_mean_params():
    p = gauss_p([2.0, -3.0], [2.0, 0.5])
    assert mean_params(p) == pytest.approx([1.0, -6.0], abs=1e-12)


def test_mean_params_is_gradient_of_log_normalizer():
    cases = [
        dir_p(1.3, 2.1, 0.7),
        beta_p(2.5, 1.5),
        cat_p(0.3, -0.8, 1.2, 0.0),
        gauss_p([0.4, -1.1, 2.2], [2.0, 1.0, 0.5]),
    ]
    for p in cases:
        grad = mean_params(p)
        h = 1e-6
        for j in range(p.values.size):
            hi = p.values.copy()
            lo = p.values.copy()
            hi[j] += h
            lo[j] -= h
            fd = (log_normalizer(NatParam(p.family, hi))
                  - log_normalizer(NatParam(p.family, lo))) / (2 * h)
            assert fd == pytest.approx(grad[j], rel=1e-5, abs=1e-7), p.family


def test_dirichlet_mean_params_permutation_equivariant():
    v = np.array([0.4, 2.0, 1.1, 3.3])
    perm = np.array([2, 0, 3, 1])
    direct = mean_params(dir_p(*v[perm]))
    assert direct == pytest.approx(mean_params(dir_p(*v))[perm], abs=1e-14)


def test_dirichlet_expectation_matches_mean_params_rowwise():
    mat = np.array([[0.5, 1.5, 2.0], [1.0, 1.0, 1.0]])
    rows = dirichlet_expectation(mat)
    for r in range(2):
        assert rows[r] == pytest.approx(mean_params(dir_p(*mat[r])),
                                        abs=1e-12)


# -- densities ----------------------------------------------------------------


def test_categorical_log_density_uniform():
    p = cat_p(0.0, 0.0, 0.0, 0.0)
    for k in range(4):
        assert log_density(p, k) == pytest.approx(np.log(0.25), abs=1e-12)


def test_categorical_masses_sum_to_one():
    p = cat_p(0.3, -2.0, 1.7)
    total = sum(np.exp(log_density(p, k)) for k in range(3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_gaussian_log_density_values():
    p = gauss_p([1.0], 1.0)  # mean 1, tau 1
    assert log_density(p, np.array([2.0])) == pytest.approx(
        GAUSS_LOGPDF_X2_MEAN1, abs=1e-14)
    assert log_density(p, np.array([1.0])) == pytest.approx(
        -0.5 * np.log(2 * np.pi), abs=1e-14)


def test_gaussian_density_integrates_to_one():
    p = gauss_p([1.0], 2.0)  # mean 0.5, tau 2
    xs = np.linspace(-10.0, 11.0, 20001)
    pdf = np.array([np.exp(log_density(p, np.array([x]))) for x in xs])
    assert np.trapezoid(pdf, xs) == pytest.approx(1.0, abs=1e-4)


def test_flat_dirichlet_and_beta_densities():
    assert log_density(beta_p(1.0, 1.0), 0.37) == pytest.approx(0.0,
                                                                abs=1e-12)
    x = np.array([0.2, 0.3, 0.5])
    assert log_density(dir_p(1.0, 1.0, 1.0), x) == pytest.approx(
        np.log(2.0), abs=1e-12)


def test_log_density_domain_errors():
    with pytest.raises(ValueError):
        log_density(cat_p(0.0, 0.0), 2)
    with pytest.raises(ValueError):
        log_density(cat_p(0.0, 0.0), -1)
    for bad in (0.0, 1.0, -0.2, 1.4):
        with pytest.raises(ValueError):
            log_density(beta_p(2.0, 2.0), bad)
    with pytest.raises(ValueError):
        log_density(dir_p(1.0, 1.0), np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        log_density(dir_p(1.0, 1.0), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        log_density(gauss_p([0.0, 0.0], 1.0), np.array([1.0]))


# -- statistics algebra -------------------------------------------------------


def _stats(fam, values, weight):
    return SuffStats(fam, np.asarray(values, float), weight)


def test_stats_zero_is_identity():
    fam = FamilyKind.dirichlet(3)
    s = _stats(fam, [[1.0, 2.0, 0.5], [0.0, 1.0, 4.0]], 2.0)
    z = zero_stats(fam, leading_shape=(2,))
    assert z.weight == 0.0 and not z.values.any()
    out = combine_stats(s, z)
    assert np.array_equal(out.values, s.values) and out.weight == s.weight


def test_stats_combine_commutes_and_associates():
    fam = FamilyKind.beta()
    a = _stats(fam, [1.0, 0.5], 1.0)
    b = _stats(fam, [0.25, 2.0], 3.0)
    c = _stats(fam, [4.0, 0.0], 0.5)
    ab = combine_stats(a, b)
    ba = combine_stats(b, a)
    assert np.array_equal(ab.values, ba.values) and ab.weight == ba.weight
    left = combine_stats(combine_stats(a, b), c)
    right = combine_stats(a, combine_stats(b, c))
    assert np.allclose(left.values, right.values, atol=1e-12)
    assert left.weight == pytest.approx(right.weight, abs=1e-12)


def test_stats_scaling():
    fam = FamilyKind.categorical(2)
    s = _stats(fam, [[0.2, 0.8]], 1.0)
    scaled = scale_stats(s, 5.0)
    assert np.array_equal(scaled.values, np.array([[1.0, 4.0]]))
    assert scaled.weight == 5.0
    # c*(a+b) == c*a + c*b
    t = _stats(fam, [[1.0, 0.0]], 2.0)
    lhs = scale_stats(combine_stats(s, t), 3.0)
    rhs = combine_stats(scale_stats(s, 3.0), scale_stats(t, 3.0))
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)
    assert lhs.weight == pytest.approx(rhs.weight, abs=1e-12)


def test_stats_validation_errors():
    fam = FamilyKind.dirichlet(3)
    with pytest.raises(ValueError):
        SuffStats(fam, np.zeros((2, 2)), 1.0)  # wrong trailing axis
    with pytest.raises(ValueError):
        SuffStats(fam, np.zeros((2, 3)), -1.0)  # negative weight
    with pytest.raises(ValueError):
        combine_stats(_stats(fam, np.zeros((2, 3)), 1.0),
                      _stats(FamilyKind.categorical(3), np.zeros((2, 3)),
                             1.0))
    with pytest.raises(ValueError):
        combine_stats(_stats(fam, np.zeros((2, 3)), 1.0),
                      _stats(fam, np.zeros((1, 3)), 1.0))
    with pytest.raises(ValueError):
        scale_stats(_stats(fam, np.zeros((1, 3)), 1.0), -0.5)


# -- family and parameter validation ------------------------------------------


def test_family_validation_errors():
    with pytest.raises(ValueError):
        FamilyKind("weibull", 2)
    with pytest.raises(ValueError):
        FamilyKind("dirichlet", 0)
    with pytest.raises(ValueError):
        FamilyKind("beta", 2)
    with pytest.raises(ValueError):
        FamilyKind("gaussian_known_precision", 2)  # precision required
    with pytest.raises(ValueError):
        FamilyKind.gaussian(2, [1.0, -1.0])
    with pytest.raises(ValueError):
        FamilyKind("dirichlet", 2, fixed_precision=(1.0, 1.0))
    with pytest.raises(ValueError):
        FamilyKind.dirichlet(2).precision()
    assert FamilyKind.gaussian(2, 1.5).precision() == pytest.approx(
        [1.5, 1.5])
    assert FamilyKind.beta().n_coords == 2
    assert FamilyKind.categorical(7).n_coords == 7


def test_nat_param_validation_errors():
    with pytest.raises(ValueError):
        NatParam(FamilyKind.dirichlet(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        NatParam(FamilyKind.beta(), np.array([1.0, -2.0]))
    with pytest.raises(ValueError):
        NatParam(FamilyKind.dirichlet(3), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        NatParam(FamilyKind.beta(), np.array([1.0]))
    # categorical log-masses may be any sign
    NatParam(FamilyKind.categorical(2), np.array([-5.0, 3.0]))


# -- divergences --------------------------------------------------------------


def test_dirichlet_kl_values():
    flat = np.array([[1.0, 1.0]])
    assert dirichlet_kl(flat, flat)[0] == pytest.approx(0.0, abs=1e-12)
    post = np.array([[2.0, 1.0]])
    assert dirichlet_kl(post, flat)[0] == pytest.approx(
        np.log(2.0) - 0.5, abs=1e-12)
    # KL is nonnegative on random pairs and zero only at equality
    rng = np.random.default_rng(4)
    a = rng.uniform(0.2, 5.0, (20, 4))
    b = rng.uniform(0.2, 5.0, (20, 4))
    assert (dirichlet_kl(a, b) >= -1e-12).all()
    assert dirichlet_kl(a, a) == pytest.approx(np.zeros(20), abs=1e-10)


def test_gaussian_mean_kl_values():
    assert gaussian_mean_kl(np.array([1.0]), np.array([1.0]),
                            np.array([0.0]), np.array([1.0]))[0] == (
        pytest.approx(0.5, abs=1e-12))
    assert gaussian_mean_kl(np.array([0.0]), np.array([2.0]),
                            np.array([0.0]), np.array([1.0]))[0] == (
        pytest.approx(0.5 * (1.0 - np.log(2.0)), abs=1e-12))
    m = np.array([0.3, -0.7])
    v = np.array([0.9, 1.4])
    assert gaussian_mean_kl(m, v, m, v) == pytest.approx([0.0, 0.0],
                                                         abs=1e-12)
    rng = np.random.default_rng(5)
    for _ in range(20):
        q_m, p_m = rng.normal(size=2)
        q_v, p_v = rng.uniform(0.1, 4.0, 2)
        kl = gaussian_mean_kl(np.array([q_m]), np.array([q_v]),
                              np.array([p_m]), np.array([p_v]))[0]
        assert kl >= -1e-12
