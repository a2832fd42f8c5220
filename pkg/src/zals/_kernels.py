"""Inner loops of the log-likelihood and its score.

Every kernel exists twice: a row loop compiled by numba and a vectorised
numpy version. Which one the public names point at is decided by
``zals._accel.USE_NUMBA``. Both are kept importable so the benchmark and
the equivalence tests can call them side by side.

Generators are passed as an integer ``code`` plus the extra parameter
``xi`` (ignored by the log-normal). All kernels work on the standardized
log-scale value ``v`` and evaluate ``log g(v**2)``, which is better
conditioned than going through ``u = v**2``.
"""

import math

import numpy as np

from ._accel import HAS_NUMBA, USE_NUMBA, njit

LOGNORMAL = 0
STUDENT_T = 1
POWER_EXP = 2
EBS = 3

_LOG2 = math.log(2.0)


# ------------------------------------------------------------------ #
# numpy path
# ------------------------------------------------------------------ #


def log_g_numpy(code, xi, v):
    """``log g(v**2)`` for an array of standardized values."""
    v = np.asarray(v, dtype=float)
    if code == LOGNORMAL:
        return -0.5 * v * v
    if code == STUDENT_T:
        return -0.5 * (xi + 1.0) * np.log1p(v * v / xi)
    if code == POWER_EXP:
        return -0.5 * np.abs(v) ** (2.0 / (1.0 + xi))
    a = np.abs(v)
    with np.errstate(over="ignore"):
        sh = np.sinh(a)
        return a + np.log1p(np.exp(-2.0 * a)) - _LOG2 - (2.0 / (xi * xi)) * (sh * sh)


def dlog_g_numpy(code, xi, v):
    """Derivative of ``log g(v**2)`` with respect to ``v``."""
    v = np.asarray(v, dtype=float)
    if code == LOGNORMAL:
        return -v
    if code == STUDENT_T:
        return -(xi + 1.0) * v / (xi + v * v)
    if code == POWER_EXP:
        expo = 2.0 / (1.0 + xi) - 1.0
        a = np.abs(v)
        with np.errstate(divide="ignore"):
            mag = np.where(a > 0.0, a**expo, 0.0)
        return -np.sign(v) * mag / (1.0 + xi)
    with np.errstate(over="ignore"):
        return np.tanh(v) - (2.0 / (xi * xi)) * np.sinh(2.0 * v)


def _softplus(t):
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def l2_numpy(code, xi, log_norm, zp, logz, X, W, beta, kappa):
    """Positive-part log-likelihood summed over rows."""
    lw = W @ kappa
    v = (logz - X @ beta) * np.exp(-0.5 * lw) + zp
    with np.errstate(over="ignore", invalid="ignore"):
        return float(logz.size * log_norm - 0.5 * lw.sum() - logz.sum() + log_g_numpy(code, xi, v).sum())


def l2_grad_numpy(code, xi, log_norm, zp, logz, X, W, beta, kappa):
    """Value and score of the positive-part log-likelihood w.r.t. ``(beta, kappa)``."""
    lw = W @ kappa
    e = np.exp(-0.5 * lw)
    s = (logz - X @ beta) * e
    v = s + zp
    with np.errstate(over="ignore", invalid="ignore"):
        val = float(logz.size * log_norm - 0.5 * lw.sum() - logz.sum() + log_g_numpy(code, xi, v).sum())
        r = dlog_g_numpy(code, xi, v)
        gb = -(r * e) @ X
        gk = (-0.5 - 0.5 * r * s) @ W
    return val, np.concatenate((gb, gk))


def l1_numpy(is_zero, V, eta):
    """Bernoulli log-likelihood of the zero indicator under a logit link."""
    t = V @ eta
    return float(np.sum(is_zero * t - _softplus(t)))


def l1_grad_numpy(is_zero, V, eta):
    t = V @ eta
    p = np.where(t >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(t))), np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))
    return float(np.sum(is_zero * t - _softplus(t))), V.T @ (is_zero - p)


# ------------------------------------------------------------------ #
# numba path
# ------------------------------------------------------------------ #


@njit(cache=True, nogil=True)
def _log_g_scalar(code, xi, v):
    if code == 0:
        return -0.5 * v * v
    if code == 1:
        return -0.5 * (xi + 1.0) * math.log1p(v * v / xi)
    a = abs(v)
    if code == 2:
        return -0.5 * a ** (2.0 / (1.0 + xi))
    if a > 355.0:
        return -math.inf
    sh = math.sinh(a)
    return a + math.log1p(math.exp(-2.0 * a)) - 0.6931471805599453 - (2.0 / (xi * xi)) * sh * sh


@njit(cache=True, nogil=True)
def _dlog_g_scalar(code, xi, v):
    if code == 0:
        return -v
    if code == 1:
        return -(xi + 1.0) * v / (xi + v * v)
    if code == 2:
        a = abs(v)
        if a == 0.0:
            return 0.0
        mag = a ** (2.0 / (1.0 + xi) - 1.0) / (1.0 + xi)
        return -mag if v > 0.0 else mag
    if abs(v) > 355.0:
        return -math.inf if v > 0.0 else math.inf
    return math.tanh(v) - (2.0 / (xi * xi)) * math.sinh(2.0 * v)


@njit(cache=True, nogil=True)
def l2_numba(code, xi, log_norm, zp, logz, X, W, beta, kappa):
    n = logz.shape[0]
    total = n * log_norm
    for i in range(n):
        lw = 0.0
        for j in range(W.shape[1]):
            lw += W[i, j] * kappa[j]
        mu = 0.0
        for j in range(X.shape[1]):
            mu += X[i, j] * beta[j]
        v = (logz[i] - mu) * math.exp(-0.5 * lw) + zp
        total += -0.5 * lw - logz[i] + _log_g_scalar(code, xi, v)
    return total


@njit(cache=True, nogil=True)
def _l2_grad_numba(code, xi, log_norm, zp, logz, X, W, beta, kappa):
    n = logz.shape[0]
    kb = X.shape[1]
    kk = W.shape[1]
    grad = np.zeros(kb + kk)
    total = n * log_norm
    for i in range(n):
        lw = 0.0
        for j in range(kk):
            lw += W[i, j] * kappa[j]
        mu = 0.0
        for j in range(kb):
            mu += X[i, j] * beta[j]
        e = math.exp(-0.5 * lw)
        s = (logz[i] - mu) * e
        v = s + zp
        total += -0.5 * lw - logz[i] + _log_g_scalar(code, xi, v)
        r = _dlog_g_scalar(code, xi, v)
        cb = -r * e
        ck = -0.5 - 0.5 * r * s
        for j in range(kb):
            grad[j] += cb * X[i, j]
        for j in range(kk):
            grad[kb + j] += ck * W[i, j]
    return total, grad


def l2_grad_numba(code, xi, log_norm, zp, logz, X, W, beta, kappa):
    """Value and score of the positive-part log-likelihood (numba)."""
    val, grad = _l2_grad_numba(code, xi, log_norm, zp, logz, X, W, beta, kappa)
    return float(val), grad


@njit(cache=True, nogil=True)
def _l1_grad_numba(is_zero, V, eta):
    n, k = V.shape
    grad = np.zeros(k)
    total = 0.0
    for i in range(n):
        t = 0.0
        for j in range(k):
            t += V[i, j] * eta[j]
        et = math.exp(-abs(t))
        if t >= 0.0:
            sp = t + math.log1p(et)
            p = 1.0 / (1.0 + et)
        else:
            sp = math.log1p(et)
            p = et / (1.0 + et)
        total += is_zero[i] * t - sp
        c = is_zero[i] - p
        for j in range(k):
            grad[j] += c * V[i, j]
    return total, grad


def l1_numba(is_zero, V, eta):
    return float(_l1_grad_numba(is_zero, V, eta)[0])


def l1_grad_numba(is_zero, V, eta):
    val, grad = _l1_grad_numba(is_zero, V, eta)
    return float(val), grad


if USE_NUMBA:
    l2_value, l2_value_grad = l2_numba, l2_grad_numba
    l1_value, l1_value_grad = l1_numba, l1_grad_numba
else:
    l2_value, l2_value_grad = l2_numpy, l2_grad_numpy
    l1_value, l1_value_grad = l1_numpy, l1_grad_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "l1_value",
    "l1_value_grad",
    "l2_value",
    "l2_value_grad",
]
