import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mvsde_tools.geometry import FullSpace
from mvsde_tools.model import builtin_model
from mvsde_tools.particle import Gaussian, init_ensemble
from mvsde_tools.rates import (
    RateCertificate, build_h_transform, corollary44_k, dissipative_rate,
    ex0_bound, fit_rate, fixed_point_invariant, harris_rate, kappa1,
    lemma33_constants)
from mvsde_tools.utils.exceptions import DivergentIntegralError, RateFitError


def test_harris_rate():
    lam, delta = harris_rate(1, 1, 0.5, 0.5)
    assert_allclose(lam, math.log(2))
    assert_allclose(delta, 0.5)

    lam, delta = harris_rate(0.5, 0, 1, 1)
    assert_allclose(lam, 0.5 * math.log(4 / 3))
    assert_allclose(delta, 0.75)

    with pytest.raises(ValueError):
        harris_rate(0, 1, 1, 1)
    with pytest.raises(ValueError):
        harris_rate(1, 2, 1, 1)


def test_kappa1_scaling():
    for c in (1.1, 2.0, 5.0):
        k1, t1 = kappa1(c, 1.0)
        for lam in (0.3, 4.0):
            k, t = kappa1(c, lam)
            assert_allclose(k, math.sqrt(lam) * k1, rtol=1e-8)
            assert_allclose(t, t1 / lam, rtol=1e-5)


def test_kappa1_grid_oracle():
    c = math.e
    k, t_star = kappa1(c, 1.0)
    t = np.linspace(1.0, 30.0, 300001)[1:]
    vals = (1 - c * np.exp(-t)) / np.sqrt(t)
    assert k >= vals.max() - 1e-12
    assert_allclose(k, vals.max(), rtol=1e-8)
    assert_allclose(t_star, t[np.argmax(vals)], atol=1e-3)


def test_kappa1_monotone_in_c():
    values = [kappa1(c, 1.0)[0] for c in (1.1, 2.0, 5.0)]
    assert values[0] > values[1] > values[2] > 0
    with pytest.raises(ValueError):
        kappa1(1.0, 1.0)


def test_lemma33_constants():
    c, lam, q, k = 1.0, 1.0, 2, 0.01
    consts = lemma33_constants(c, lam, q, k)
    t_hat = math.log(2 * c) / lam
    growth = 2 ** (q - 1) * k ** q
    delta = 0.5 + (4 ** (q - 1) * (c * k) ** q * math.exp(growth * t_hat) /
                   (q * lam + growth))
    assert_allclose(consts.t_hat, t_hat)
    assert_allclose(consts.delta_k, delta, rtol=1e-12)
    assert_allclose(consts.lambda_prime,
                    -lam / math.log(2 * c) * math.log(delta), rtol=1e-12)
    assert consts.valid
    assert consts.k_q > k

    at_root = lemma33_constants(c, lam, q, consts.k_q)
    assert_allclose(at_root.delta_k, 1, rtol=1e-9)

    big = lemma33_constants(c, lam, q, 10 * consts.k_q)
    assert not big.valid
    assert big.delta_k > 1
    assert big.lambda_prime < 0
    assert not big.certificate(c).reliable


def test_corollary44_zeta_zero():
    alpha, theta0, theta2, beta = 0.7, 0.5, 2.0, 0.3
    res = corollary44_k(alpha, theta0, 3.0, theta2, beta, 0.0)
    assert_allclose(res.integral, 2 * alpha / (theta2 - theta0), rtol=1e-8)
    assert_allclose(res.k, (theta2 - theta0) - beta, rtol=1e-8)
    assert_allclose(res.beta_threshold, theta2 - theta0, rtol=1e-8)
    cert = res.certificate()
    assert cert.source == 'corollary44'
    assert cert.reliable


def test_corollary44_zeta_positive():
    k0 = corollary44_k(1.0, 0.0, 1.0, 2.0, 0.0, 0.0).k
    k1 = corollary44_k(1.0, 0.0, 1.0, 2.0, 0.0, 1.0).k
    assert 0 < k1 < k0
    res = corollary44_k(1.0, 0.0, 1.0, 2.0, 0.0, 1.0)
    assert_allclose(res.gamma([0.5, 2.0]), [3 * 0.5 - 1.0, 3 * 0.5 - 4.0])


def test_corollary44_divergent():
    with pytest.raises(DivergentIntegralError):
        corollary44_k(1.0, 2.0, 0.0, 2.0, 0.0, 0.0)


def test_dissipative_rate():
    cert = dissipative_rate(-2, 0)
    assert cert.lam == 1
    assert cert.reliable
    assert not dissipative_rate(1, 0).reliable


def test_h_transform():
    ht = build_h_transform(lambda r: np.ones_like(r))
    assert ht.H_infinity == np.inf
    assert_allclose(ht.H(3.5), 3.5, rtol=1e-10)

    ht = build_h_transform(lambda r: 1 + r)
    assert ht.H_infinity == np.inf
    assert_allclose(ht.H([1.0, 150.0]), np.log1p([1.0, 150.0]), rtol=1e-10)
    assert_allclose(ht.H_inv(math.log(6)), 5, rtol=1e-10)

    ht = build_h_transform(lambda r: (1 + r) ** 2)
    assert_allclose(ht.H_infinity, 1, atol=1e-8)
    assert_allclose(ht.H(4.0), 0.8, rtol=1e-10)
    assert_allclose(ht.H_inv(0.3), 3 / 7, rtol=1e-10)
    assert ht.H_inv(1.5) == np.inf
    assert ht.H_inv(-0.5) == 0

    with pytest.raises(ValueError, match='Phi must be >= 1'):
        build_h_transform(lambda r: 0.5 + r)


def test_ex0_bound():
    ht = build_h_transform(lambda r: (1 + r) ** 2)
    assert_allclose(ex0_bound(ht, 4.0, 2.0, 1.0, 1.0),
                    2 * (1 + 3 / 7) / math.e, rtol=1e-9)
    assert ex0_bound(ht, 4.0, 2.0, 1.0, 0.0) == 2 * (1 + 4.0)

    values = [ex0_bound(ht, 4.0, 2.0, 1.0, t)
              for t in np.linspace(0, 5, 100)]
    assert np.all(np.diff(values) <= 1e-12)

    with pytest.raises(ValueError):
        ex0_bound(ht, 4.0, 2.0, 1.0, -1.0)


def test_fit_rate_exact():
    t = np.linspace(0, 5, 51)
    cert = fit_rate(t, 3 * np.exp(-2 * t), burn_in=0)
    assert_allclose(cert.c, 3, rtol=1e-10)
    assert_allclose(cert.lam, 2, rtol=1e-10)
    assert_allclose(cert.r_squared, 1)
    assert cert.reliable
    assert cert.n_points == 51
    assert cert.window == (0, 5)

    row = cert.to_row()
    assert row['source'] == 'fitted'
    assert row['reliable'] == 1


def test_fit_rate_noisy():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 4, 81)
    values = 3 * np.exp(-2 * t) * (1 + 0.05 * rng.standard_normal(t.size))
    cert = fit_rate(t, values)
    assert_allclose(cert.lam, 2, rtol=0.05)
    assert cert.window[0] >= 0.4
    assert cert.r_squared > 0.99


def test_fit_rate_noise_floor():
    t = np.linspace(0, 5, 51)
    values = 3 * np.exp(-2 * t)
    cert = fit_rate(t, values, noise_floor=1e-3, burn_in=0)
    assert cert.window[1] < 5
    assert cert.noise_floor == 1e-3
    with pytest.raises(RateFitError):
        fit_rate(t, values, noise_floor=10.0)


def test_certificate_source():
    with pytest.raises(ValueError):
        RateCertificate(c=1, lam=1, source='guess')


def test_fixed_point_mean_field_ou():
    # Invariant law of the mean-field OU is N(0, 2/3) for beta=0.5.
    domain = FullSpace(1)
    model = builtin_model('mean_field_ou', beta=0.5)
    ens = init_ensemble(2000, Gaussian([1.0], 0.25), domain, seed=3)
    res = fixed_point_invariant(model, domain, ens, n=2000, dt=0.01,
                                T_stat=3.0, tol=0.08, max_iters=8, seed=4)
    assert res.converged
    assert res.iterations == len(res.history)
    assert res.means.shape == (res.iterations + 1, 1)
    assert abs(res.measure.mean()[0]) < 0.15
    assert_allclose(res.measure.variance(), [2 / 3], rtol=0.15)
