"""Quantile-parameterized log-symmetric laws and their zero-adjusted mixture.

``QuantileLS(q_level, Q, phi, gen)`` is the law of ``T = lam * exp(sqrt(phi) * Z)``
where ``Z`` has CDF :func:`~zals.generators.cdf_G` and
``lam = Q * exp(-sqrt(phi) * z_p)``, ``z_p = G^{-1}(q_level)``. The
shift is chosen so that ``Q`` is exactly the ``q_level``-quantile of ``T``.

``ZALS(pi, positive_part)`` puts mass ``pi`` at zero and spreads the rest
according to ``positive_part``.

``Q``, ``phi`` and ``pi`` may be arrays; they broadcast against the
evaluation points like numpy ufunc arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generators import GeneratorKind, cdf_G, log_kernel, log_normalizer, quantile_G, sample_standardized


def _scalar_or_array(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


@dataclass(frozen=True, eq=False)
class QuantileLS:
    """Continuous positive law whose ``q_level``-quantile is ``Q``.

    Parameters
    ----------
    q_level : float
        Modeled quantile level, in (0, 1).
    Q : float or ndarray
        The ``q_level``-quantile; positive.
    phi : float or ndarray
        Power (relative dispersion) parameter; positive.
    gen : GeneratorKind
        Density generator.
    """

    q_level: float
    Q: float | np.ndarray
    phi: float | np.ndarray
    gen: GeneratorKind

    def __post_init__(self):
        if not 0.0 < self.q_level < 1.0:
            raise ValueError(f"q_level must lie in (0, 1), got {self.q_level}")
        Q = np.asarray(self.Q, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if not np.all(Q > 0.0) or not np.all(np.isfinite(Q)):
            raise ValueError("Q must be positive and finite")
        if not np.all(phi > 0.0) or not np.all(np.isfinite(phi)):
            raise ValueError("phi must be positive and finite")
        object.__setattr__(self, "Q", _scalar_or_array(Q))
        object.__setattr__(self, "phi", _scalar_or_array(phi))

    @property
    def z_p(self) -> float:
        """``q_level``-quantile of the standardized law."""
        return float(quantile_G(self.gen, self.q_level))

    @property
    def lam(self):
        """Classical scale: the median of the law."""
        return self.Q * np.exp(-np.sqrt(self.phi) * self.z_p)

    def _standardize(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~(t > 0.0)):
            raise ValueError("evaluation points must be positive")
        return t, (np.log(t) - np.log(self.Q)) / np.sqrt(self.phi) + self.z_p

    def logpdf(self, t):
        t, v = self._standardize(t)
        out = log_normalizer(self.gen) - 0.5 * np.log(self.phi) - np.log(t) + log_kernel(self.gen, v * v)
        return _scalar_or_array(np.asarray(out))

    def pdf(self, t):
        return _scalar_or_array(np.exp(self.logpdf(t)))

    def cdf(self, t):
        _, v = self._standardize(t)
        return cdf_G(self.gen, v)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        out = self.lam * np.exp(np.sqrt(self.phi) * quantile_G(self.gen, p))
        return _scalar_or_array(np.asarray(out))

    def sample_log(self, rng: np.random.Generator, size=None):
        """Draws of ``log T = log(lam) + sqrt(phi) * Z``.

        With array parameters and ``size=None`` one draw per parameter
        entry is returned.
        """
        if size is None:
            size = np.broadcast(np.asarray(self.Q), np.asarray(self.phi)).shape or None
        z = sample_standardized(self.gen, rng, size)
        return _scalar_or_array(np.asarray(np.log(self.lam) + np.sqrt(self.phi) * z))

    def sample(self, rng: np.random.Generator, size=None):
        """Draws ``lam * exp(sqrt(phi) * Z)``.

        Very heavy tails (Student-t with small ``xi``) can leave the float
        range, giving ``inf`` or ``0``; use :meth:`sample_log` there.
        """
        with np.errstate(over="ignore", under="ignore"):
            return _scalar_or_array(np.asarray(np.exp(self.sample_log(rng, size))))


@dataclass(frozen=True, eq=False)
class ZALS:
    """Zero-adjusted mixture: mass ``pi`` at 0, weight ``1 - pi`` on ``positive_part``."""

    pi: float | np.ndarray
    positive_part: QuantileLS

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if not np.all((pi > 0.0) & (pi < 1.0)):
            raise ValueError("pi must lie strictly inside (0, 1)")
        object.__setattr__(self, "pi", _scalar_or_array(pi))

    @staticmethod
    def _check(z):
        z = np.asarray(z, dtype=float)
        if np.any(~(z >= 0.0)):
            raise ValueError("ZALS support is [0, inf); got a negative value")
        return z

    def pdf_mass(self, z):
        """``pi`` at ``z == 0`` (a probability), ``(1 - pi) f_T(z)`` otherwise (a density)."""
        z = self._check(z)
        pos = z > 0.0
        dens = (1.0 - self.pi) * self.positive_part.pdf(np.where(pos, z, 1.0))
        return _scalar_or_array(np.asarray(np.where(pos, dens, self.pi)))

    def cdf(self, z):
        z = self._check(z)
        pos = z > 0.0
        ft = self.positive_part.cdf(np.where(pos, z, 1.0))
        return _scalar_or_array(np.asarray(np.where(pos, self.pi + (1.0 - self.pi) * ft, self.pi)))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0.0) & (p < 1.0))):
            raise ValueError("probability must lie strictly inside (0, 1)")
        pos = p > self.pi
        cond = np.where(pos, (p - self.pi) / (1.0 - self.pi), 0.5)
        return _scalar_or_array(np.asarray(np.where(pos, self.positive_part.quantile(cond), 0.0)))

    def sample(self, rng: np.random.Generator, size=None):
        """Bernoulli(pi) for the zero indicator, then a positive-part draw.

        The zero indicators are drawn first, then one positive draw per
        entry, so the stream layout does not depend on ``pi``.
        """
        if size is None:
            size = np.broadcast(
                np.asarray(self.pi), np.asarray(self.positive_part.Q), np.asarray(self.positive_part.phi)
            ).shape or None
        zero = rng.random(size) < self.pi
        t = self.positive_part.sample(rng, size)
        return _scalar_or_array(np.asarray(np.where(zero, 0.0, t)))


__all__ = ["QuantileLS", "ZALS"]
