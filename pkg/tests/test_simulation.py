import csv
import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import integrate, special

from zals.generators import GeneratorKind
from zals.regression import Coefficients, fit
from zals.simulation import CSV_COLUMNS, PARAMETERS, SimDesign, generate_dataset, replicate_rng, run_study


def truth_fitter(design):
    def fitter(spec, opts):
        c = Coefficients(np.array(design.true_beta), np.array(design.true_kappa), np.array(design.true_eta))
        return SimpleNamespace(coef=c, converged=True, has_zero_part=True, has_positive_part=True)
    return fitter


def small(**kw):
    base = dict(q_levels=[0.5], sample_sizes=[60], nrep=3, seed=7)
    base.update(kw)
    return SimDesign(**base)


class TestDesign:
    @pytest.mark.parametrize("kw", [dict(nrep=0), dict(sample_sizes=[5]), dict(sample_sizes=[]),
                                    dict(q_levels=[1.0]), dict(true_beta=(1.0, 2.0))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimDesign(**kw)

    def test_truth_vector(self):
        np.testing.assert_array_equal(SimDesign().truth, [0.5, 0.7, 1.0, 0.5, 0.8, 1.0, 0.5, 0.3, 0.5])


class TestGenerateDataset:
    def test_deterministic(self):
        a = generate_dataset(SimDesign(), 0.5, 200, replicate_rng(1, 0, 0, 3))
        b = generate_dataset(SimDesign(), 0.5, 200, replicate_rng(1, 0, 0, 3))
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.V, b.V)

    def test_replicates_differ(self):
        a = generate_dataset(SimDesign(), 0.5, 200, replicate_rng(1, 0, 0, 0))
        b = generate_dataset(SimDesign(), 0.5, 200, replicate_rng(1, 0, 0, 1))
        assert not np.array_equal(a.z, b.z)

    def test_covariates_uniform(self):
        s = generate_dataset(SimDesign(), 0.5, 5000, np.random.default_rng(0))
        for M in (s.X, s.W, s.V):
            assert np.all(M[:, 0] == 1.0)
            assert np.all((M[:, 1:] >= 0.0) & (M[:, 1:] < 1.0))
            assert abs(M[:, 1:].mean() - 0.5) < 0.02

    def test_zero_fraction_matches_integral(self):
        eta = SimDesign().true_eta
        p0, _ = integrate.dblquad(lambda v2, v1: special.expit(eta[0] + eta[1] * v1 + eta[2] * v2), 0, 1, 0, 1)
        assert p0 == pytest.approx(0.712, abs=0.02)
        s = generate_dataset(SimDesign(), 0.5, 100_000, np.random.default_rng(11))
        frac = float(np.mean(s.z == 0.0))
        # binomial sd is about 0.0014
        assert abs(frac - p0) < 0.006

    def test_no_zeros_when_eta_very_negative(self):
        s = generate_dataset(SimDesign(true_eta=(-20.0, 0.0, 0.0)), 0.5, 10_000, np.random.default_rng(3))
        assert np.all(s.z > 0.0)

    def test_median_of_positive_part(self):
        # at q = 0.5 and covariates at their draw, log z - log Q is symmetric about 0
        d = SimDesign(true_eta=(-20.0, 0.0, 0.0))
        s = generate_dataset(d, 0.5, 40_000, np.random.default_rng(8))
        r = np.log(s.z) - s.X @ np.array(d.true_beta)
        assert abs(np.mean(r > 0.0) - 0.5) < 0.01

    def test_quantile_level(self):
        d = SimDesign(true_eta=(-20.0, 0.0, 0.0), gen=GeneratorKind.student_t(4.0))
        s = generate_dataset(d, 0.9, 40_000, np.random.default_rng(9))
        below = np.log(s.z) < s.X @ np.array(d.true_beta)
        assert abs(below.mean() - 0.9) < 0.006


class TestRunStudy:
    def test_truth_fitter_gives_zero_error(self):
        d = small(q_levels=[0.2, 0.7], sample_sizes=[30, 40])
        rep = run_study(d, fitter=truth_fitter(d), n_jobs=1)
        assert len(rep.cells) == 4
        for c in rep.cells:
            np.testing.assert_array_equal(c.bias(), 0.0)
            np.testing.assert_array_equal(c.mse(), 0.0)
            assert c.n_failed == 0

    def test_bias_mse_brute_force(self):
        d = small(nrep=4)
        rep = run_study(d, n_jobs=1)
        est = []
        for r in range(d.nrep):
            spec = generate_dataset(d, 0.5, 60, replicate_rng(d.seed, 0, 0, r))
            m = fit(spec)
            est.append(m.coef.as_vector() if m.converged else np.full(9, np.nan))
        est = np.array(est)
        ok = ~np.isnan(est).any(axis=1)
        c = rep.cell(0.5, 60)
        assert c.n_failed == int((~ok).sum())
        if ok.any():
            np.testing.assert_allclose(c.bias(), np.mean(est[ok] - d.truth, axis=0), rtol=1e-6, atol=1e-7)
            np.testing.assert_allclose(c.mse(), np.mean((est[ok] - d.truth) ** 2, axis=0), rtol=1e-6, atol=1e-7)

    def test_single_replicate_identity(self):
        d = small(nrep=1, sample_sizes=[200])
        rep = run_study(d, n_jobs=1)
        c = rep.cells[0]
        if c.n_failed == 0:
            np.testing.assert_allclose(c.mse(), c.bias() ** 2, rtol=1e-12)

    def test_failures_are_excluded(self):
        d = small(nrep=4)
        calls = []

        def flaky(spec, opts):
            calls.append(1)
            if len(calls) % 2:
                raise ValueError("boom")
            return truth_fitter(d)(spec, opts)

        c = run_study(d, fitter=flaky, n_jobs=1).cells[0]
        assert c.n_failed == 2
        np.testing.assert_array_equal(c.bias(), 0.0)
        assert c.unreliable

    def test_all_failed_gives_nan(self):
        d = small()
        nc = lambda spec, opts: SimpleNamespace(converged=False, has_zero_part=True, has_positive_part=True)
        c = run_study(d, fitter=nc, n_jobs=1).cells[0]
        assert c.n_failed == d.nrep
        assert np.all(np.isnan(c.bias())) and np.all(np.isnan(c.mse()))

    def test_deterministic_across_threads(self):
        d = small(q_levels=[0.3, 0.5], nrep=4)
        a = run_study(d, n_jobs=1)
        b = run_study(d, n_jobs=3)
        for ca, cb in zip(a.cells, b.cells):
            np.testing.assert_array_equal(ca.estimates, cb.estimates)

    def test_dataset_hook(self):
        d = small(q_levels=[0.3, 0.5], nrep=2)
        seen = {}
        run_study(d, fitter=truth_fitter(d), n_jobs=1, on_dataset=lambda qi, ni, r, s: seen.__setitem__((qi, ni, r), s))
        assert sorted(seen) == [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)]
        assert seen[(1, 0, 1)].q_level == 0.5

    def test_cell_lookup(self):
        d = small(q_levels=[0.1, 0.9])
        rep = run_study(d, fitter=truth_fitter(d), n_jobs=1)
        assert rep.cell(0.9, 60).q_level == 0.9
        with pytest.raises(KeyError):
            rep.cell(0.5, 60)

    def test_csv(self, tmp_path):
        d = small()
        rep = run_study(d, fitter=truth_fitter(d), n_jobs=1)
        path = tmp_path / "mc.csv"
        rep.to_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert [r["parameter"] for r in rows] == list(PARAMETERS)
        assert rows[0]["generator"] == "normal"
        assert float(rows[1]["true_value"]) == 0.7
        assert all(float(r["mse"]) == 0.0 for r in rows)

    @pytest.mark.slow
    def test_mse_decreases_with_n(self):
        d = SimDesign(q_levels=[0.5], sample_sizes=[50, 400], nrep=60, seed=5)
        rep = run_study(d)
        m50, m400 = rep.cell(0.5, 50).mse(), rep.cell(0.5, 400).mse()
        assert np.all(m400 < m50)
        assert math.isfinite(m400[1])
