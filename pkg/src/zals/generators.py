"""Density generators of the log-symmetric family.

A generator ``g`` defines a symmetric law on the real line through the
density ``c * g(z**2)``, with ``c`` the normalizing constant. Four
kernels are supported:

==========  ======================================  ==================
name        g(u) (up to a constant)                 extra parameter
==========  ======================================  ==================
``normal``  exp(-u/2)                               none
``t``       (1 + u/xi)^(-(xi+1)/2)                  xi > 0
``pe``      exp(-u^(1/(1+xi))/2)                    -1 < xi <= 1
``ebs``     cosh(sqrt u) exp(-(2/xi^2) sinh^2 sqrt u)  xi > 0
==========  ======================================  ==================

All four have closed-form normalizers, CDFs and inverse CDFs: the
power-exponential reduces to a regularized incomplete gamma function and
the extended Birnbaum-Saunders kernel is the sinh-normal law, whose CDF
is ``Phi((2/xi) sinh w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import _kernels

_ALIASES = {
    "normal": "normal",
    "lognormal": "normal",
    "lno": "normal",
    "no": "normal",
    "t": "t",
    "student": "t",
    "student-t": "t",
    "lt": "t",
    "pe": "pe",
    "power-exponential": "pe",
    "lpe": "pe",
    "ebs": "ebs",
    "extended-bs": "ebs",
    "birnbaum-saunders": "ebs",
}

_CODES = {
    "normal": _kernels.LOGNORMAL,
    "t": _kernels.STUDENT_T,
    "pe": _kernels.POWER_EXP,
    "ebs": _kernels.EBS,
}


@dataclass(frozen=True)
class GeneratorKind:
    """One of the four density generators together with its extra parameter.

    Use the constructors :meth:`lognormal`, :meth:`student_t`,
    :meth:`power_exponential`, :meth:`ebs` or :meth:`from_name`.
    """

    name: str
    xi: float | None = None

    def __post_init__(self):
        if self.name not in _CODES:
            raise ValueError(f"unknown generator {self.name!r}")
        if self.name == "normal":
            if self.xi is not None:
                raise ValueError("the log-normal generator takes no extra parameter")
            return
        if self.xi is None or not math.isfinite(self.xi):
            raise ValueError(f"generator {self.name!r} needs a finite xi")
        object.__setattr__(self, "xi", float(self.xi))
        if self.name in ("t", "ebs") and not self.xi > 0.0:
            raise ValueError(f"xi must be positive for {self.name!r}, got {self.xi}")
        if self.name == "pe" and not -1.0 < self.xi <= 1.0:
            raise ValueError(f"xi must lie in (-1, 1] for 'pe', got {self.xi}")

    @classmethod
    def lognormal(cls) -> GeneratorKind:
        return cls("normal")

    @classmethod
    def student_t(cls, xi: float) -> GeneratorKind:
        return cls("t", xi)

    @classmethod
    def power_exponential(cls, xi: float) -> GeneratorKind:
        return cls("pe", xi)

    @classmethod
    def ebs(cls, xi: float) -> GeneratorKind:
        return cls("ebs", xi)

    @classmethod
    def from_name(cls, name: str, xi: float | None = None) -> GeneratorKind:
        key = _ALIASES.get(name.strip().lower())
        if key is None:
            raise ValueError(f"unknown generator {name!r}; expected one of normal, t, pe, ebs")
        return cls(key, None if key == "normal" else xi)

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled kernels."""
        return _CODES[self.name]

    @property
    def xi_value(self) -> float:
        """``xi`` as a float, 0.0 for the log-normal (kernels ignore it)."""
        return 0.0 if self.xi is None else self.xi

    def __str__(self):
        return self.name if self.xi is None else f"{self.name}(xi={self.xi:g})"


def kernel(kind: GeneratorKind, u):
    """Unnormalized kernel ``g(u)`` for ``u >= 0``."""
    return np.exp(log_kernel(kind, u))


def log_kernel(kind: GeneratorKind, u):
    """``log g(u)``, stable for large ``u``.

    For the EBS kernel the cosh term goes through
    ``log cosh x = |x| + log1p(exp(-2|x|)) - log 2``. Values whose true
    logarithm is below the float range (EBS beyond ``sqrt(u) ~ 355``)
    come back as ``-inf``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(np.isnan(u)):
        raise ValueError("kernel argument must be nonnegative")
    if kind.name == "normal":
        out = -0.5 * u
    elif kind.name == "t":
        out = -0.5 * (kind.xi + 1.0) * np.log1p(u / kind.xi)
    elif kind.name == "pe":
        out = -0.5 * u ** (1.0 / (1.0 + kind.xi))
    else:
        x = np.sqrt(u)
        with np.errstate(over="ignore"):
            sh = np.sinh(x)
            out = x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0) - (2.0 / kind.xi**2) * (sh * sh)
    return out[()] if out.ndim == 0 else out


@lru_cache(maxsize=256)
def log_normalizer(kind: GeneratorKind) -> float:
    """Logarithm of :func:`normalizer`; cached per ``(name, xi)``."""
    if kind.name == "normal":
        return -0.5 * math.log(2.0 * math.pi)
    xi = kind.xi
    if kind.name == "t":
        return math.lgamma((xi + 1.0) / 2.0) - math.lgamma(xi / 2.0) - 0.5 * math.log(xi * math.pi)
    if kind.name == "pe":
        # integral of exp(-|z|^a / 2) over the line is 2^(1 + 1/a) * Gamma(1 + 1/a)
        a = 2.0 / (1.0 + xi)
        return -((1.0 + 1.0 / a) * math.log(2.0) + math.lgamma(1.0 + 1.0 / a))
    # substituting s = sinh(z) turns the EBS integral into a gaussian one
    return math.log(2.0) - math.log(xi) - 0.5 * math.log(2.0 * math.pi)


def normalizer(kind: GeneratorKind) -> float:
    """Constant ``c`` with ``c * integral g(z**2) dz = 1``."""
    return math.exp(log_normalizer(kind))


def cdf_G(kind: GeneratorKind, w):
    """CDF of the standardized symmetric variable."""
    w = np.asarray(w, dtype=float)
    if kind.name == "normal":
        out = special.ndtr(w)
    elif kind.name == "t":
        out = special.stdtr(kind.xi, w)
    elif kind.name == "pe":
        a = 2.0 / (1.0 + kind.xi)
        tail = 0.5 * special.gammaincc(1.0 / a, 0.5 * np.abs(w) ** a)
        out = np.where(w < 0.0, tail, 1.0 - tail)
    else:
        with np.errstate(over="ignore"):
            out = special.ndtr((2.0 / kind.xi) * np.sinh(w))
    return out[()] if out.ndim == 0 else out


def quantile_G(kind: GeneratorKind, p):
    """Inverse of :func:`cdf_G` on ``(0, 1)``."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("probability must lie strictly inside (0, 1)")
    if kind.name == "normal":
        out = special.ndtri(p)
    elif kind.name == "t":
        out = special.stdtrit(kind.xi, p)
    elif kind.name == "pe":
        a = 2.0 / (1.0 + kind.xi)
        tail = np.minimum(p, 1.0 - p)
        mag = (2.0 * special.gammainccinv(1.0 / a, 2.0 * tail)) ** (1.0 / a)
        out = np.where(p < 0.5, -mag, mag)
    else:
        out = np.arcsinh(0.5 * kind.xi * special.ndtri(p))
    # exact median; stdtrit is off by an ulp there
    out = np.where(p == 0.5, 0.0, out)
    return out[()] if out.ndim == 0 else out


def _uniform(rng: np.random.Generator, size):
    u = rng.random(size)
    # rng.random() can return exactly 0.0
    return np.where(u == 0.0, 2.0**-60, u)


def sample_standardized(kind: GeneratorKind, rng: np.random.Generator, size=None):
    """Draw from the standardized symmetric law by inverse transform."""
    u = _uniform(rng, size)
    return quantile_G(kind, u)


__all__ = [
    "GeneratorKind",
    "cdf_G",
    "kernel",
    "log_kernel",
    "log_normalizer",
    "normalizer",
    "quantile_G",
    "sample_standardized",
]
