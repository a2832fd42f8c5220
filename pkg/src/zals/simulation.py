"""Monte Carlo study of the maximum-likelihood estimates.

Data come from the three-predictor model with two Uniform(0, 1)
covariates per predictor. For every quantile level and sample size the
study fits ``nrep`` replicates and reports, per coefficient,

    bias = mean(theta_hat - theta),   mse = mean((theta_hat - theta)**2).

Replicate ``r`` of cell ``(q_index, n_index)`` draws from
``default_rng([seed, q_index, n_index, r])``, so results do not depend on
execution order or on the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._accel import n_threads
from .distributions import QuantileLS, ZALS
from .generators import GeneratorKind
from .regression import FitOptions, ModelSpec, fit, link_phi, link_pi, link_Q

PARAMETERS = ("beta0", "beta1", "beta2", "kappa0", "kappa1", "kappa2", "eta0", "eta1", "eta2")
CSV_COLUMNS = ("generator", "q", "n", "parameter", "true_value", "bias", "mse", "n_failed")
UNRELIABLE_FAILURE_RATE = 0.2


@dataclass
class SimDesign:
    gen: GeneratorKind = field(default_factory=GeneratorKind.lognormal)
    q_levels: list[float] = field(default_factory=lambda: [0.1, 0.5, 0.9])
    true_beta: tuple[float, ...] = (0.5, 0.7, 1.0)
    true_kappa: tuple[float, ...] = (0.5, 0.8, 1.0)
    true_eta: tuple[float, ...] = (0.5, 0.3, 0.5)
    sample_sizes: list[int] = field(default_factory=lambda: [50, 100, 200, 300, 400, 500])
    nrep: int = 200
    seed: int = 2021

    def __post_init__(self):
        if self.nrep < 1:
            raise ValueError("nrep must be at least 1")
        if not self.sample_sizes or min(self.sample_sizes) < 10:
            raise ValueError("sample sizes must be at least 10")
        if not self.q_levels or not all(0.0 < q < 1.0 for q in self.q_levels):
            raise ValueError("quantile levels must lie in (0, 1)")
        for name in ("true_beta", "true_kappa", "true_eta"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} needs an intercept and two slopes")

    @property
    def truth(self) -> np.ndarray:
        return np.concatenate((self.true_beta, self.true_kappa, self.true_eta)).astype(float)


def _design_block(rng, n):
    return np.column_stack((np.ones(n), rng.random((n, 2))))


def generate_dataset(design: SimDesign, q_level: float, n: int, rng: np.random.Generator) -> ModelSpec:
    """One sample of size ``n``; covariate blocks X, W, V are drawn in that order."""
    X = _design_block(rng, n)
    W = _design_block(rng, n)
    V = _design_block(rng, n)
    law = ZALS(
        link_pi(V, design.true_eta),
        QuantileLS(q_level, link_Q(X, design.true_beta), link_phi(W, design.true_kappa), design.gen),
    )
    z = law.sample(rng)
    names = {b: ["(Intercept)", f"{c}1", f"{c}2"] for b, c in (("beta", "x"), ("kappa", "w"), ("eta", "v"))}
    return ModelSpec(design.gen, q_level, X, W, V, z, names=names)


def replicate_rng(seed: int, q_index: int, n_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([seed, q_index, n_index, rep])


@dataclass
class CellResult:
    q_level: float
    n: int
    estimates: np.ndarray  # (nrep, 9), NaN rows for failed replicates
    truth: np.ndarray

    @property
    def failed(self) -> np.ndarray:
        return np.isnan(self.estimates).any(axis=1)

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())

    @property
    def unreliable(self) -> bool:
        return self.n_failed > UNRELIABLE_FAILURE_RATE * self.estimates.shape[0]

    def bias(self) -> np.ndarray:
        ok = self.estimates[~self.failed]
        return np.mean(ok - self.truth, axis=0) if ok.size else np.full(self.truth.size, math.nan)

    def mse(self) -> np.ndarray:
        ok = self.estimates[~self.failed]
        return np.mean((ok - self.truth) ** 2, axis=0) if ok.size else np.full(self.truth.size, math.nan)


@dataclass
class MonteCarloReport:
    design: SimDesign
    cells: list[CellResult]

    def cell(self, q_level: float, n: int) -> CellResult:
        for c in self.cells:
            if c.n == n and math.isclose(c.q_level, q_level):
                return c
        raise KeyError((q_level, n))

    def rows(self) -> list[dict]:
        out = []
        for c in self.cells:
            bias, mse = c.bias(), c.mse()
            for j, name in enumerate(PARAMETERS):
                out.append(dict(generator=str(self.design.gen), q=c.q_level, n=c.n, parameter=name,
                                true_value=float(c.truth[j]), bias=float(bias[j]), mse=float(mse[j]),
                                n_failed=c.n_failed))
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _estimate(spec: ModelSpec, fitter: Callable, options: FitOptions | None) -> np.ndarray:
    try:
        m = fitter(spec, options)
    except (ValueError, np.linalg.LinAlgError, FloatingPointError):
        return np.full(len(PARAMETERS), math.nan)
    if not m.converged or not (m.has_zero_part and m.has_positive_part):
        return np.full(len(PARAMETERS), math.nan)
    return m.coef.as_vector()


def run_study(
    design: SimDesign,
    fitter: Callable | None = None,
    options: FitOptions | None = None,
    n_jobs: int | None = None,
    on_dataset: Callable | None = None,
) -> MonteCarloReport:
    """Generate, fit and tabulate every ``(q, n)`` cell of ``design``.

    Parameters
    ----------
    fitter : callable, optional
        ``fitter(spec, options) -> FittedModel``; defaults to
        :func:`zals.regression.fit`. Replicates that raise, or whose fit
        does not converge, count as failures and are left out of the
        averages.
    on_dataset : callable, optional
        Called as ``on_dataset(q_index, n_index, rep, spec)`` for every
        generated dataset (used for dumping data to disk).
    n_jobs : int, optional
        Worker threads; defaults to ``ZALS_THREADS`` or the core count.
    """
    fitter = fitter or (lambda spec, opts: fit(spec, opts))
    if options is None:
        options = FitOptions(compute_se=False)
    truth = design.truth
    tasks = [(qi, ni, r) for qi in range(len(design.q_levels))
             for ni in range(len(design.sample_sizes)) for r in range(design.nrep)]
    est = np.full((len(design.q_levels), len(design.sample_sizes), design.nrep, truth.size), math.nan)

    def run(task):
        qi, ni, r = task
        rng = replicate_rng(design.seed, qi, ni, r)
        spec = generate_dataset(design, design.q_levels[qi], design.sample_sizes[ni], rng)
        if on_dataset is not None:
            on_dataset(qi, ni, r, spec)
        est[qi, ni, r] = _estimate(spec, fitter, options)

    jobs = n_jobs or n_threads()
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, tasks))
    else:
        for t in tasks:
            run(t)

    cells = [CellResult(q, n, est[qi, ni], truth)
             for qi, q in enumerate(design.q_levels) for ni, n in enumerate(design.sample_sizes)]
    return MonteCarloReport(design, cells)


__all__ = [
    "CSV_COLUMNS",
    "PARAMETERS",
    "CellResult",
    "MonteCarloReport",
    "SimDesign",
    "generate_dataset",
    "replicate_rng",
    "run_study",
]
