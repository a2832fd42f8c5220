import json

import numpy as np
import pytest

from zals.dataio import (
    ConfigError,
    DataError,
    FitConfig,
    MissingColumnError,
    ModelArtifact,
    NegativeResponseError,
    NonNumericError,
    RankDeficientError,
    build_spec,
    parse_q_grid,
    read_columns,
    write_csv,
)
from zals.generators import GeneratorKind
from zals.regression import fit


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def toy_config(**kw):
    d = dict(response="y", quantile=["a"], dispersion=[], zero=["b"])
    d.update(kw)
    return FitConfig.from_dict(d)


@pytest.fixture
def toy_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 300
    a, b = rng.random(n), rng.random(n)
    y = np.where(rng.random(n) < 0.3, 0.0, np.exp(0.5 + a + 0.4 * rng.normal(size=n)))
    path = tmp_path / "toy.csv"
    write_csv(path, ["y", "a", "b", "unused"], [(yi, ai, bi, "x") for yi, ai, bi in zip(y, a, b)])
    return path


class TestReadColumns:
    def test_basic(self, tmp_path):
        p = write(tmp_path / "d.csv", " y , x \n1,2\n\n3.5,4\n")
        t = read_columns(p, ["y", "x"])
        np.testing.assert_array_equal(t["y"], [1.0, 3.5])
        assert t.lines.tolist() == [2, 4]
        assert t.n_rows == 2

    def test_missing_column(self, tmp_path):
        p = write(tmp_path / "d.csv", "y,x\n1,2\n")
        with pytest.raises(MissingColumnError, match="'w'"):
            read_columns(p, ["y", "w"])

    def test_non_numeric_names_line(self, tmp_path):
        p = write(tmp_path / "d.csv", "y,x\n1,2\n\n1,abc\n")
        with pytest.raises(NonNumericError, match=r"'x' at line 4"):
            read_columns(p, ["y", "x"])

    def test_nan_rejected(self, tmp_path):
        p = write(tmp_path / "d.csv", "y\nnan\n")
        with pytest.raises(NonNumericError):
            read_columns(p, ["y"])

    def test_empty_and_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_columns(write(tmp_path / "e.csv", ""), ["y"])
        with pytest.raises(DataError):
            read_columns(tmp_path / "nope.csv", ["y"])

    def test_write_round_trip(self, tmp_path):
        vals = [0.1, 1 / 3, 1e-300, 12345.678901234567]
        write_csv(tmp_path / "r.csv", ["v"], [(v,) for v in vals])
        assert read_columns(tmp_path / "r.csv", ["v"])["v"].tolist() == vals


class TestQGrid:
    def test_range_inclusive(self):
        g = parse_q_grid("0.01:0.99:0.01")
        assert len(g) == 99 and g[0] == 0.01 and g[-1] == 0.99 and g[49] == 0.5

    def test_list(self):
        assert parse_q_grid("0.25, 0.5,0.75") == [0.25, 0.5, 0.75]

    @pytest.mark.parametrize("text", ["0:1:0.1", "0.1:0.9", "a,b", "0.5,1.2", "0.1:0.9:-0.1"])
    def test_bad(self, text):
        with pytest.raises(ConfigError):
            parse_q_grid(text)


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            FitConfig.from_dict(dict(response="y", bogus=1))

    def test_response_required(self):
        with pytest.raises(ConfigError):
            FitConfig.from_dict(dict(quantile=["a"]))

    @pytest.mark.parametrize("kw", [dict(q=1.5), dict(zero_threshold=-1.0), dict(generator="ebs"),
                                    dict(optimizer=dict(nope=1))])
    def test_invalid_values(self, kw):
        with pytest.raises(ConfigError):
            toy_config(**kw)

    def test_xi_values(self):
        assert toy_config(generator="t", xi=[3, 5]).xi_values() == [3.0, 5.0]
        assert toy_config(generator="t", xi=4).xi_values() == [4.0]
        assert toy_config().xi_values() == [None]

    def test_yaml_load(self, tmp_path):
        p = write(tmp_path / "c.yaml", "response: y\nquantile: [a]\ngenerator: pe\nxi: 0.3\n")
        cfg = FitConfig.load(p)
        assert cfg.generator == "pe" and cfg.xi == 0.3 and cfg.zero == []

    def test_bad_yaml(self, tmp_path):
        with pytest.raises(ConfigError):
            FitConfig.load(write(tmp_path / "c.yaml", "response: [y\n"))

    def test_columns_deduplicated(self):
        assert toy_config(dispersion=["a"]).columns() == ["y", "a", "b"]

    def test_shipped_config_parses(self):
        from pathlib import Path
        cfg = FitConfig.load(Path(__file__).resolve().parents[1] / "configs" / "affairs.yaml")
        assert cfg.generator == "ebs" and cfg.q_grid == "0.01:0.99:0.01"


class TestBuildSpec:
    def test_blocks_and_names(self, toy_csv):
        cfg = toy_config()
        spec = build_spec(cfg, read_columns(toy_csv, cfg.columns()))
        assert spec.names["beta"] == ["(Intercept)", "a"]
        assert spec.names["kappa"] == ["(Intercept)"]
        assert spec.W.shape == (300, 1)

    def test_negative_response(self, tmp_path):
        p = write(tmp_path / "d.csv", "y,a,b\n1,0.1,0.2\n-1,0.3,0.1\n")
        cfg = toy_config()
        with pytest.raises(NegativeResponseError, match=r"y=-1.0 at line 3"):
            build_spec(cfg, read_columns(p, cfg.columns()))

    def test_rank_deficient(self, tmp_path):
        p = write(tmp_path / "d.csv", "y,a,b\n1,1,0.2\n0,1,0.1\n2,1,0.5\n")
        cfg = toy_config()
        with pytest.raises(RankDeficientError, match="beta"):
            build_spec(cfg, read_columns(p, cfg.columns()))

    def test_zero_threshold(self, tmp_path):
        p = write(tmp_path / "d.csv", "y,a,b\n0.001,0.1,0.2\n0,0.5,0.1\n2,0.2,0.5\n3,0.9,0.7\n")
        cfg = toy_config(zero_threshold=0.01)
        spec = build_spec(cfg, read_columns(p, cfg.columns()))
        assert spec.z.tolist() == [0.0, 0.0, 2.0, 3.0]

    def test_overrides(self, toy_csv):
        cfg = toy_config()
        spec = build_spec(cfg, read_columns(toy_csv, cfg.columns()), gen=GeneratorKind.student_t(3.0), q=0.2)
        assert spec.gen == GeneratorKind.student_t(3.0) and spec.q_level == 0.2


class TestArtifact:
    def fitted(self, toy_csv, **kw):
        cfg = toy_config(**kw)
        spec = build_spec(cfg, read_columns(toy_csv, cfg.columns()))
        return cfg, spec, fit(spec, cfg.fit_options())

    def test_round_trip_bytes(self, toy_csv, tmp_path):
        cfg, spec, m = self.fitted(toy_csv)
        art = ModelArtifact.from_fit(m, cfg)
        art.save(tmp_path / "m.json")
        again = ModelArtifact.load(tmp_path / "m.json")
        assert again.to_json() == art.to_json()
        assert (tmp_path / "m.json").read_text() == art.to_json()

    def test_contents(self, toy_csv):
        cfg, spec, m = self.fitted(toy_csv)
        d = json.loads(ModelArtifact.from_fit(m, cfg).to_json())
        assert d["schema_version"] == 1
        assert d["n_obs"] == 300 and d["n_zeros"] == int(np.sum(spec.z == 0.0))
        assert [r["name"] for r in d["blocks"]["eta"]] == ["(Intercept)", "b"]
        assert d["loglik"]["total"] == pytest.approx(d["loglik"]["l1"] + d["loglik"]["l2"], rel=1e-12)
        assert d["aic"] == pytest.approx(-2 * d["loglik"]["total"] + 2 * d["n_params"], rel=1e-12)

    def test_to_model_reproduces_fit(self, toy_csv):
        cfg, spec, m = self.fitted(toy_csv)
        back = ModelArtifact.from_json(ModelArtifact.from_fit(m, cfg).to_json()).to_model(spec)
        np.testing.assert_array_equal(back.coef.as_vector(), m.coef.as_vector())
        for a, b in zip(back.fitted(), m.fitted()):
            np.testing.assert_array_equal(a, b)

    def test_to_model_rejects_other_columns(self, toy_csv):
        cfg, spec, m = self.fitted(toy_csv)
        art = ModelArtifact.from_fit(m, cfg)
        other = toy_config(quantile=["b"], zero=["a"])
        with pytest.raises(DataError):
            art.to_model(build_spec(other, read_columns(toy_csv, other.columns())))

    def test_schema_checks(self, toy_csv):
        cfg, spec, m = self.fitted(toy_csv)
        d = json.loads(ModelArtifact.from_fit(m, cfg).to_json())
        with pytest.raises(ConfigError):
            ModelArtifact.from_json(json.dumps(dict(d, schema_version=99)))
        with pytest.raises(ConfigError):
            ModelArtifact.from_json(json.dumps(dict(d, extra=1)))

    def test_nan_written_as_null(self, toy_csv):
        cfg, spec, m = self.fitted(toy_csv)
        m2 = fit(spec, cfg.fit_options(compute_se=False))
        d = json.loads(ModelArtifact.from_fit(m2, cfg).to_json())
        assert d["se_available"] is False
        assert all(r["se"] is None for r in d["blocks"]["beta"])
