import json
import os
import subprocess
import sys

import numpy as np
import pytest

from zals import _kernels as K
from zals._accel import HAS_NUMBA
from zals.generators import GeneratorKind, log_normalizer, quantile_G
from zals.regression import loglik_l1, loglik_l2, score_l2

from .conftest import GENERATORS, gen_id

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def problem(kind, n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack((np.ones(n), rng.random((n, 2))))
    W = np.column_stack((np.ones(n), rng.random((n, 2))))
    logz = rng.normal(0.5, 1.5, n)
    beta = np.array([0.4, -0.3, 0.8])
    kappa = np.array([0.1, 0.5, -0.6])
    return (kind.code, kind.xi_value, log_normalizer(kind), float(quantile_G(kind, 0.3)), logz, X, W, beta, kappa)


def richardson(f, x, h=1e-3):
    """Richardson-extrapolated central differences (error O(h^4))."""
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = 1.0
        d1 = (f(x + h * e) - f(x - h * e)) / (2 * h)
        d2 = (f(x + 0.5 * h * e) - f(x - 0.5 * h * e)) / h
        g[j] = (4 * d2 - d1) / 3
    return g


@needs_numba
@pytest.mark.parametrize("kind", GENERATORS, ids=gen_id)
def test_l2_backends_agree(kind):
    args = problem(kind)
    a = K.l2_numpy(*args)
    b = K.l2_numba(*args)
    assert b == pytest.approx(a, rel=1e-12)
    va, ga = K.l2_grad_numpy(*args)
    vb, gb = K.l2_grad_numba(*args)
    assert vb == pytest.approx(va, rel=1e-12)
    np.testing.assert_allclose(gb, ga, rtol=1e-10, atol=1e-10)


@needs_numba
def test_l1_backends_agree():
    rng = np.random.default_rng(1)
    V = np.column_stack((np.ones(500), rng.normal(size=(500, 3)) * 5))
    is_zero = rng.random(500) < 0.4
    eta = np.array([0.3, 2.0, -1.5, 0.7])
    assert K.l1_numba(is_zero, V, eta) == pytest.approx(K.l1_numpy(is_zero, V, eta), rel=1e-13)
    va, ga = K.l1_grad_numpy(is_zero, V, eta)
    vb, gb = K.l1_grad_numba(is_zero, V, eta)
    assert vb == pytest.approx(va, rel=1e-13)
    np.testing.assert_allclose(gb, ga, rtol=1e-12)


@pytest.mark.parametrize("kind", GENERATORS, ids=gen_id)
def test_l2_gradient_richardson(kind):
    code, xi, ln, zp, logz, X, W, beta, kappa = problem(kind)
    k = X.shape[1]
    f = lambda th: K.l2_numpy(code, xi, ln, zp, logz, X, W, th[:k], th[k:])
    th = np.concatenate((beta, kappa))
    _, g = K.l2_value_grad(code, xi, ln, zp, logz, X, W, beta, kappa)
    np.testing.assert_allclose(g, richardson(f, th), rtol=1e-5, atol=1e-6)


def test_l1_gradient_richardson():
    rng = np.random.default_rng(2)
    V = np.column_stack((np.ones(300), rng.random((300, 2))))
    is_zero = rng.random(300) < 0.5
    eta = np.array([0.2, -0.4, 0.9])
    _, g = K.l1_value_grad(is_zero, V, eta)
    np.testing.assert_allclose(g, richardson(lambda e: K.l1_numpy(is_zero, V, e), eta), rtol=1e-7)


def test_score_l2_on_simulated_data(sim_spec):
    beta = np.array([0.5, 0.7, 1.0])
    kappa = np.array([0.5, 0.8, 1.0])
    th = np.concatenate((beta, kappa))
    f = lambda t: loglik_l2(sim_spec, t[:3], t[3:])
    np.testing.assert_allclose(score_l2(sim_spec, beta, kappa), richardson(f, th), rtol=1e-5)


def test_l1_extreme_predictor_is_finite():
    V = np.array([[1.0], [1.0]])
    for eta in (np.array([800.0]), np.array([-800.0])):
        v, g = K.l1_value_grad(np.array([True, False]), V, eta)
        assert np.isfinite(v) and np.all(np.isfinite(g))


def test_ebs_far_tail_score_is_finite():
    kind = GeneratorKind.ebs(0.5)
    v = np.array([-400.0, -30.0, 0.0, 30.0, 400.0])
    d = K.dlog_g_numpy(kind.code, kind.xi, v)
    assert np.all(~np.isnan(d))


def test_loglik_l1_uses_selected_backend(sim_spec):
    eta = np.array([0.5, 0.3, 0.5])
    assert loglik_l1(sim_spec, eta) == pytest.approx(K.l1_numpy(sim_spec.is_zero, sim_spec.V, eta), rel=1e-13)


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("", "numba" if HAS_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, ZALS_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from zals._kernels import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_fallback_backend_fits_identically():
    # a full fit under the numpy kernels matches the default backend
    code = (
        "import numpy as np, json\n"
        "from zals.simulation import SimDesign, generate_dataset\n"
        "from zals.regression import fit\n"
        "s = generate_dataset(SimDesign(), 0.5, 300, np.random.default_rng(4))\n"
        "m = fit(s)\n"
        "print(json.dumps(m.coef.as_vector().tolist()))\n"
    )
    runs = []
    for flag in ("1", ""):
        env = dict(os.environ, ZALS_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        runs.append(np.array(json.loads(out.stdout)))
    np.testing.assert_allclose(runs[0], runs[1], rtol=1e-6, atol=1e-7)
