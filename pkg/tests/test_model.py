import math

import numpy as np
import pytest

from langevin_sc.errors import ConfigurationError, DimensionError, NumericalError
from langevin_sc.model import (Dictionary, ModelParams, energy_l0, energy_l1,
                               expected_cost_under_prior, grad_a, grad_lambda_l1,
                               grad_s_l1, grad_sigma, grad_u0, grad_u_l0, heaviside,
                               neg_log_joint_l1, normalize_columns,
                               prior_l0_pdf_components, threshold_f, threshold_g_lca,
                               u0_from_pi)


def loop_energy_l1(a, s, x, sigma, lam):
    d, k = a.shape
    total = 0.0
    for n in range(x.shape[1]):
        for i in range(d):
            r = x[i, n] - sum(a[i, j] * s[j, n] for j in range(k))
            total += r * r / (2 * sigma ** 2)
        total += lam * sum(abs(s[j, n]) for j in range(k))
    return total


def loop_f(u, u0):
    return max(abs(u) - u0, 0.0)


def central_diff(fun, z, h=1e-6):
    g = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        g[idx] = (fun(zp) - fun(zm)) / (2 * h)
    return g


def test_params_defaults_and_pi():
    p = ModelParams()
    assert p.sigma == 0.5 and p.lam == 1.0
    assert p.replace(u0=math.log(2)).pi == pytest.approx(0.5)
    assert p.tau_sigma_eff == p.tau_a


@pytest.mark.parametrize("bad", [dict(sigma=0), dict(lam=-1), dict(u0=-0.1),
                                 dict(temperature=-1), dict(dt=1.0),
                                 dict(dt=0.0), dict(sigma=float("nan"))])
def test_params_validation(bad):
    with pytest.raises(ConfigurationError):
        ModelParams(**bad)


def test_tau_a_below_tau_s_warns():
    with pytest.warns(RuntimeWarning):
        ModelParams(tau_a=0.5)


def test_energy_l1_matches_scalar_loop():
    rng = np.random.default_rng(1)
    a, s, x = rng.normal(size=(5, 3)), rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
    p = ModelParams(sigma=0.7, lam=1.3)
    e = energy_l1(a, s, x, p)
    assert e.total == pytest.approx(loop_energy_l1(a, s, x, 0.7, 1.3), rel=1e-12)
    assert e.recon + e.sparsity == pytest.approx(e.total, rel=1e-15)


def test_energy_examples():
    p = ModelParams()
    a = np.eye(3)
    x = np.ones((3, 2))
    # perfect reconstruction leaves only the sparsity term
    assert energy_l1(a, x, x, p).recon == 0.0
    assert energy_l1(a, x, x, p).total == pytest.approx(6.0)
    # zero codes: all energy in the data term
    assert energy_l1(a, np.zeros((3, 2)), x, p).total == pytest.approx(6 / (2 * 0.25))


def test_energy_l0_matches_scalar_loop():
    rng = np.random.default_rng(2)
    a, u, x = rng.normal(size=(4, 3)), rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
    p = ModelParams(u0=0.4)
    s = np.vectorize(loop_f)(u, 0.4)
    expected = loop_energy_l1(a, s, x, 0.5, 0.0) + 1.0 * np.abs(u).sum()
    assert energy_l0(a, u, x, p).total == pytest.approx(expected, rel=1e-12)


def test_threshold_functions():
    u = np.array([-2.0, -0.5, 0.0, 0.3, 1.5])
    assert np.allclose(threshold_f(u, 0.5), [1.5, 0.0, 0.0, 0.0, 1.0])
    assert np.allclose(threshold_g_lca(u, 0.5), [-1.5, 0.0, 0.0, 0.0, 1.0])
    assert heaviside(np.array([-1e-12, 0.0, 2.0])).tolist() == [0.0, 1.0, 1.0]
    assert (threshold_f(u, 0.0) == np.abs(u)).all()


def test_grad_sign_convention_at_zero():
    # sign(0) = 0: a zero coefficient feels only the data term
    a = np.eye(2)
    s = np.array([[0.0], [1.0]])
    x = np.array([[0.5], [1.0]])
    g = grad_s_l1(a, s, x, ModelParams())
    assert g[0, 0] == pytest.approx(-0.5 / 0.25)
    assert g[1, 0] == pytest.approx(1.0)


def _nonkink(rng, shape, avoid, margin=0.05):
    z = rng.normal(size=shape)
    for c in avoid:
        bad = np.abs(np.abs(z) - c) < margin
        z[bad] += np.sign(z[bad] + 1e-300) * 2 * margin
    return z


@pytest.mark.parametrize("seed", range(5))
def test_gradients_vs_finite_differences(seed):
    rng = np.random.default_rng(seed)
    d, k, n = 6, 4, 3
    a, x = rng.normal(size=(d, k)), rng.normal(size=(d, n))
    p = ModelParams(sigma=0.8, lam=0.7, u0=0.3)

    s = _nonkink(rng, (k, n), [0.0])
    fd = central_diff(lambda z: energy_l1(a, z, x, p).total, s)
    assert np.linalg.norm(grad_s_l1(a, s, x, p) - fd) <= 1e-6 * np.linalg.norm(fd)

    u = _nonkink(rng, (k, n), [0.0, p.u0])
    fd = central_diff(lambda z: energy_l0(a, z, x, p).total, u)
    assert np.linalg.norm(grad_u_l0(a, u, x, p) - fd) <= 1e-6 * np.linalg.norm(fd)

    fd = central_diff(lambda z: energy_l1(z, s, x, p).total, a)
    assert np.linalg.norm(grad_a(a, s, x, p) - fd) <= 1e-6 * np.linalg.norm(fd)

    # threshold: grad_u0 is the batch mean of -dE/du0
    fd = central_diff(lambda z: energy_l0(a, u, x, p.replace(u0=float(z[0]))).total,
                      np.array([p.u0]))[0]
    assert grad_u0(a, threshold_f(u, p.u0), x, p) == pytest.approx(-fd / n, rel=1e-6)


def test_sigma_and_lambda_gradients_are_likelihood_consistent():
    rng = np.random.default_rng(7)
    d, k, n = 5, 3, 4
    a, s, x = rng.normal(size=(d, k)), rng.normal(size=(k, n)), rng.normal(size=(d, n))
    p = ModelParams(sigma=0.9, lam=1.4)
    fd = central_diff(lambda z: neg_log_joint_l1(a, s, x, p.replace(sigma=float(z[0]))),
                      np.array([p.sigma]))[0]
    assert -fd * p.sigma ** 3 / (n * d) == pytest.approx(grad_sigma(a, s, x, p), rel=1e-6)
    fd = central_diff(lambda z: neg_log_joint_l1(a, s, x, p.replace(lam=float(z[0]))),
                      np.array([p.lam]))[0]
    assert fd / (n * k) == pytest.approx(grad_lambda_l1(s, p), rel=1e-6)


def test_grad_sigma_zero_at_matched_noise():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(10, 4))
    s = rng.normal(size=(4, 20000))
    x = a @ s + 0.5 * rng.normal(size=(10, 20000))
    assert abs(grad_sigma(a, s, x, ModelParams(sigma=0.5))) < 0.01


def test_prior_helpers():
    p = ModelParams(lam=2.0, u0=0.5)
    assert expected_cost_under_prior(p) == 0.5
    assert expected_cost_under_prior(p, "exponential") == 0.5
    assert prior_l0_pdf_components(p) == (pytest.approx(math.exp(-1.0)), 2.0)
    assert u0_from_pi(0.5, 1.0) == pytest.approx(math.log(2))
    with pytest.raises(ConfigurationError):
        u0_from_pi(0.0, 1.0)
    with pytest.raises(ConfigurationError):
        expected_cost_under_prior(p, "gauss")


def test_shape_and_finiteness_checks():
    p = ModelParams()
    with pytest.raises(DimensionError):
        energy_l1(np.ones((3, 2)), np.ones((3, 1)), np.ones((3, 1)), p)
    with pytest.raises(NumericalError) as err:
        energy_l1(np.ones((2, 2)), np.array([[np.nan], [0.0]]), np.ones((2, 1)), p)
    assert err.value.tensor == "S"


def test_dictionary_normalization():
    rng = np.random.default_rng(3)
    d = Dictionary(rng.normal(size=(8, 5)) * 3).normalize()
    assert np.allclose(d.norms, 1.0, atol=1e-12)
    z = normalize_columns(np.zeros((3, 2)))
    assert (z == 0).all()
    with pytest.raises(NumericalError):
        Dictionary(np.array([[np.inf]]))
