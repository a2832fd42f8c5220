"""BFGS maximizer with backtracking line search and finite-difference helpers.

The objective is *maximized*. It may return ``-inf`` (or any non-finite
value) to signal an infeasible point; the line search then backtracks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OptimOptions:
    gtol: float = 1e-6
    ftol: float = 1e-10
    maxiter: int = 500
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    max_expansions: int = 20
    ftol_patience: int = 10


@dataclass
class OptimResult:
    """Outcome of :func:`maximize`.

    ``converged`` is set only when the sup-norm of the gradient at
    ``argmax`` is at most ``gtol``. ``hessian`` holds the Hessian of the
    *negative* objective when requested.
    """

    argmax: np.ndarray
    value: float
    gradient: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    message: str
    n_evals: int = 0
    hessian: np.ndarray | None = None
    trace: list[float] = field(default_factory=list, repr=False)


def _fd_steps(x, rel, floor):
    return np.maximum(floor, rel * np.abs(x))


def gradient_fd(fun: Callable, x, rel: float = 1e-7, floor: float = 1e-7) -> np.ndarray:
    """Central-difference gradient with steps ``max(floor, rel * |x_j|)``.

    A non-finite evaluation makes the affected component NaN.
    """
    x = np.asarray(x, dtype=float)
    h = _fd_steps(x, rel, floor)
    g = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        fp, fm = fun(xp), fun(xm)
        g[j] = (fp - fm) / (xp[j] - xm[j]) if math.isfinite(fp) and math.isfinite(fm) else math.nan
    return g


def hessian_fd(fun: Callable, x, grad: Callable | None = None, symmetrize: bool = True) -> np.ndarray:
    """Central-difference Hessian of ``fun`` at ``x``.

    With ``grad`` the columns are central differences of the gradient
    (step ``1e-5`` relative); otherwise second differences of function
    values (step ``1e-4`` relative), which are symmetric by construction.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    H = np.empty((k, k))
    if grad is not None:
        h = _fd_steps(x, 1e-5, 1e-5)
        for j in range(k):
            xp = x.copy()
            xm = x.copy()
            xp[j] += h[j]
            xm[j] -= h[j]
            H[:, j] = (np.asarray(grad(xp)) - np.asarray(grad(xm))) / (xp[j] - xm[j])
    else:
        h = _fd_steps(x, 1e-4, 1e-4)
        f0 = fun(x)
        for i in range(k):
            for j in range(i, k):
                if i == j:
                    xp = x.copy()
                    xm = x.copy()
                    xp[i] += h[i]
                    xm[i] -= h[i]
                    H[i, i] = (fun(xp) - 2.0 * f0 + fun(xm)) / h[i] ** 2
                    continue
                vals = []
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    xx = x.copy()
                    xx[i] += si * h[i]
                    xx[j] += sj * h[j]
                    vals.append(fun(xx))
                H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * h[i] * h[j])
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def maximize(
    fun: Callable,
    x0,
    grad: Callable | None = None,
    options: OptimOptions | None = None,
    hessian: bool = False,
) -> OptimResult:
    """Maximize ``fun`` by BFGS.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> float``. Non-finite values mark rejected points.
    x0 : array_like
        Starting point; ``fun(x0)`` must be finite.
    grad : callable, optional
        ``grad(x) -> ndarray``. Falls back to :func:`gradient_fd`.
    options : OptimOptions, optional
    hessian : bool
        Also return the finite-difference Hessian of ``-fun`` at the optimum.

    Notes
    -----
    Ascent direction ``p = H g`` with an inverse-Hessian approximation
    ``H`` started at ``I / (1 + |g|)`` and rescaled by ``s'y / y'y``
    before the first update. Steps are accepted by Armijo backtracking;
    when the unit step passes at once the step is doubled while the
    objective keeps rising, which stops the inverse-Hessian model from
    stalling on badly scaled problems. A final trial step goes to the
    vertex of the parabola through ``f(0)``, ``f'(0)`` and ``f(alpha)``;
    it is exact on quadratics, which restores the finite termination
    of BFGS there. The update is skipped when
    ``s'y <= 1e-10``. Iteration stops when
    ``max|g| < gtol``, when the relative change of the objective stays
    below ``ftol`` for ``ftol_patience`` consecutive iterations, after
    ``maxiter`` iterations, or when the line search
    fails twice in a row (once with BFGS direction, once after a reset
    to steepest ascent).
    """
    opts = options or OptimOptions()
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        val = float(fun(x))
        return val if math.isfinite(val) else -math.inf

    gfun = grad if grad is not None else (lambda x: gradient_fd(f, x))

    x = np.array(x0, dtype=float)
    fx = f(x)
    if not math.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")
    g = np.asarray(gfun(x), dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient is not finite at the starting point")

    k = x.size
    eye = np.eye(k)
    H = eye / (1.0 + np.linalg.norm(g))
    first_update = True
    trace = [fx]
    message = "maximum number of iterations reached"
    it = 0
    small = 0
    gnorm = float(np.max(np.abs(g))) if k else 0.0

    while it < opts.maxiter:
        if gnorm < opts.gtol:
            message = "gradient tolerance reached"
            break
        p = H @ g
        slope = float(g @ p)
        if not slope > 0.0:
            H = eye / (1.0 + np.linalg.norm(g))
            first_update = True
            p = H @ g
            slope = float(g @ p)

        accepted = False
        for restart in (False, True):
            if restart:
                H = eye / (1.0 + np.linalg.norm(g))
                first_update = True
                p = H @ g
                slope = float(g @ p)
            alpha = 1.0
            for j in range(opts.max_backtracks):
                x_new = x + alpha * p
                f_new = f(x_new)
                if f_new >= fx + opts.c1 * alpha * slope:
                    accepted = True
                    break
                alpha *= opts.backtrack
            if accepted:
                if j == 0:
                    # unit step taken at once: extend while the objective keeps rising
                    for _ in range(opts.max_expansions):
                        a2 = alpha / opts.backtrack
                        x2 = x + a2 * p
                        f2 = f(x2)
                        if not (f2 > f_new and f2 >= fx + opts.c1 * a2 * slope):
                            break
                        alpha, x_new, f_new = a2, x2, f2
                # one step to the vertex of the parabola through f(0), f'(0), f(alpha)
                curv = (f_new - fx - alpha * slope) / (alpha * alpha)
                if curv < 0.0:
                    a3 = -slope / (2.0 * curv)
                    if 0.0 < a3 != alpha:
                        x3 = x + a3 * p
                        f3 = f(x3)
                        if f3 > f_new and f3 >= fx + opts.c1 * a3 * slope:
                            alpha, x_new, f_new = a3, x3, f3
                break
        if not accepted:
            message = "line search failed"
            break

        it += 1
        g_new = np.asarray(gfun(x_new), dtype=float)
        if not np.all(np.isfinite(g_new)):
            message = "non-finite gradient"
            break
        s = x_new - x
        # ascent on f is descent on -f, so y is built from -g
        y = g - g_new
        sy = float(s @ y)
        f_old = fx
        x, fx, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        trace.append(fx)
        if sy > 1e-10:
            if first_update:
                H = eye * (sy / float(y @ y))
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + float(y @ Hy)) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        if gnorm < opts.gtol:
            message = "gradient tolerance reached"
            break
        small = small + 1 if abs(fx - f_old) <= opts.ftol * max(abs(f_old), 1.0) else 0
        if small >= opts.ftol_patience:
            message = "relative objective change below tolerance"
            break

    res = OptimResult(
        argmax=x,
        value=fx,
        gradient=g,
        gradient_norm=gnorm,
        iterations=it,
        converged=gnorm <= opts.gtol,
        message=message,
        n_evals=n_evals,
        trace=trace,
    )
    if hessian:
        res.hessian = -hessian_fd(fun, x, grad=grad)
    return res


__all__ = ["OptimOptions", "OptimResult", "gradient_fd", "hessian_fd", "maximize"]
