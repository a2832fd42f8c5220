"""CSV ingestion, model configuration and the persisted JSON artifact."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .generators import GeneratorKind
from .optimizer import OptimOptions
from .regression import BLOCKS, Coefficients, FitOptions, FittedModel, ModelSpec

SCHEMA_VERSION = 1

# block key in the config -> coefficient block
CONFIG_BLOCKS = {"quantile": "beta", "dispersion": "kappa", "zero": "eta"}


class DataError(ValueError):
    """Problem with the input data. ``exit_code`` is the CLI exit status."""

    exit_code = 3


class MissingColumnError(DataError):
    exit_code = 4


class NonNumericError(DataError):
    exit_code = 5


class NegativeResponseError(DataError):
    exit_code = 6


class RankDeficientError(DataError):
    exit_code = 7


class ConfigError(ValueError):
    """Problem with a configuration, design or artifact file."""

    exit_code = 2


# ------------------------------------------------------------------ #
# CSV
# ------------------------------------------------------------------ #


@dataclass
class Table:
    """Numeric columns read from a CSV file.

    ``lines[i]`` is the 1-based file line of data row ``i`` (the header is
    line 1), used to point diagnostics at the offending row.
    """

    columns: dict[str, np.ndarray]
    lines: np.ndarray

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        return int(self.lines.size)


def read_columns(path, columns) -> Table:
    """Read the named numeric columns of a comma-separated file with a header row.

    Blank lines are skipped. Errors name the offending column and file line.
    """
    path = Path(path)
    columns = list(dict.fromkeys(columns))
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        index = {}
        for name in columns:
            if name not in header:
                raise MissingColumnError(f"column {name!r} not found in {path} (have: {', '.join(header)})")
            index[name] = header.index(name)
        values: dict[str, list[float]] = {name: [] for name in columns}
        lines = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            line_no = reader.line_num
            for name, j in index.items():
                cell = row[j].strip() if j < len(row) else ""
                try:
                    x = float(cell)
                except ValueError:
                    raise NonNumericError(f"non-numeric value {cell!r} in column {name!r} at line {line_no}") from None
                if not math.isfinite(x):
                    raise NonNumericError(f"non-finite value {cell!r} in column {name!r} at line {line_no}")
                values[name].append(x)
            lines.append(line_no)
    return Table({k: np.asarray(v, dtype=float) for k, v in values.items()}, np.asarray(lines, dtype=int))


def write_csv(path, header, rows) -> None:
    """Write rows with floats in shortest round-trip form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ------------------------------------------------------------------ #
# Configuration
# ------------------------------------------------------------------ #


def parse_q_grid(text: str) -> list[float]:
    """``"start:stop:step"`` (inclusive) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        try:
            start, stop, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad q grid {text!r}; expected start:stop:step") from None
        if step <= 0.0 or stop < start:
            raise ConfigError(f"bad q grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        grid = [round(start + i * step, 10) for i in range(count)]
    else:
        try:
            grid = [float(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"bad q grid {text!r}") from None
    if not grid or not all(0.0 < q < 1.0 for q in grid):
        raise ConfigError("q values must lie in (0, 1)")
    return grid


@dataclass
class FitConfig:
    response: str
    quantile: list[str] = field(default_factory=list)
    dispersion: list[str] = field(default_factory=list)
    zero: list[str] = field(default_factory=list)
    generator: str = "normal"
    xi: float | list[float] | None = None
    q: float = 0.5
    q_grid: str | None = None
    zero_threshold: float = 0.0
    intercept: bool = True
    seed: int = 0
    optimizer: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> FitConfig:
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a mapping")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(extra))}")
        if "response" not in d:
            raise ConfigError("configuration needs a 'response' column")
        cfg = cls(**d)
        for key in CONFIG_BLOCKS:
            cols = getattr(cfg, key) or []
            if isinstance(cols, str):
                cols = [cols]
            setattr(cfg, key, [str(c) for c in cols])
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> FitConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        if not 0.0 < float(self.q) < 1.0:
            raise ConfigError("q must lie in (0, 1)")
        if self.zero_threshold < 0.0:
            raise ConfigError("zero_threshold must be nonnegative")
        unknown = set(self.optimizer) - set(OptimOptions.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown optimizer options: {', '.join(sorted(unknown))}")
        for xi in self.xi_values():
            try:
                GeneratorKind.from_name(self.generator, xi)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    def xi_values(self) -> list[float | None]:
        if isinstance(self.xi, (list, tuple)):
            return [float(x) for x in self.xi]
        return [None if self.xi is None else float(self.xi)]

    def columns(self) -> list[str]:
        seen = [self.response]
        for key in CONFIG_BLOCKS:
            seen += [c for c in getattr(self, key) if c not in seen]
        return seen

    def fit_options(self, compute_se: bool = True) -> FitOptions:
        return FitOptions(optim=OptimOptions(**self.optimizer), compute_se=compute_se)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def build_spec(cfg: FitConfig, data: Table, gen: GeneratorKind | None = None,
               q: float | None = None) -> ModelSpec:
    """Assemble a :class:`ModelSpec` from ingested columns.

    Responses with ``|z| < zero_threshold`` become exact zeros; an
    intercept column is prepended to each block when ``cfg.intercept``.
    """
    z = data[cfg.response].copy()
    n = z.size
    if n == 0:
        raise DataError("no data rows")
    if cfg.zero_threshold > 0.0:
        z[np.abs(z) < cfg.zero_threshold] = 0.0
    bad = np.flatnonzero(z < 0.0)
    if bad.size:
        i = bad[0]
        raise NegativeResponseError(
            f"response must be nonnegative: {cfg.response}={float(z[i])!r} at line {data.lines[i]}")
    mats, names = [], {}
    for key, block in CONFIG_BLOCKS.items():
        cols = getattr(cfg, key)
        parts = ([np.ones(n)] if cfg.intercept else []) + [data[c] for c in cols]
        if not parts:
            raise ConfigError(f"block {key!r} has no columns and no intercept")
        mats.append(np.column_stack(parts))
        names[block] = (["(Intercept)"] if cfg.intercept else []) + list(cols)
    if gen is None:
        gen = GeneratorKind.from_name(cfg.generator, cfg.xi_values()[0])
    for block, M in zip(CONFIG_BLOCKS.values(), mats):
        if np.linalg.matrix_rank(M) < M.shape[1]:
            raise RankDeficientError(f"{block} design is rank deficient (columns: {', '.join(names[block])})")
    try:
        return ModelSpec(gen, float(cfg.q if q is None else q), *mats, z, names=names)
    except ValueError as exc:
        raise DataError(str(exc)) from None


# ------------------------------------------------------------------ #
# Artifact
# ------------------------------------------------------------------ #


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _block_rows(model: FittedModel, block: str) -> list[dict]:
    return [{k: (_num(v) if k != "name" else v) for k, v in row.items()} for row in model.table(block)]


@dataclass
class ModelArtifact:
    """JSON-serializable record of one fit.

    ``blocks`` maps ``"beta"``/``"kappa"``/``"eta"`` to lists of rows
    ``{name, estimate, se, z, p_value}``; unavailable numbers are ``null``.
    """

    config: dict
    generator: dict
    q_level: float
    n_obs: int
    n_zeros: int
    blocks: dict
    loglik: dict
    aic: float
    bic: float
    aic_log_response: float
    bic_log_response: float
    n_params: int
    converged: dict
    se_available: bool
    xi_search: dict | None = None
    schema_version: int = SCHEMA_VERSION
    software_version: str = __version__
    timestamp: str = ""

    @classmethod
    def from_fit(cls, model: FittedModel, cfg: FitConfig, xi_search: dict | None = None) -> ModelArtifact:
        spec = model.spec
        return cls(
            config=cfg.to_dict(),
            generator={"name": spec.gen.name, "xi": spec.gen.xi},
            q_level=spec.q_level,
            n_obs=spec.n,
            n_zeros=int(spec.is_zero.sum()),
            blocks={b: _block_rows(model, b) for b in BLOCKS},
            loglik={"total": model.loglik_total, "l1": model.loglik_l1, "l2": model.loglik_l2},
            aic=model.aic,
            bic=model.bic,
            aic_log_response=model.aic_log_response,
            bic_log_response=model.bic_log_response,
            n_params=model.n_params,
            converged={"zero": model.converged_zero, "positive": model.converged_positive},
            se_available=model.se_available,
            xi_search=None if xi_search is None else {repr(k): v for k, v in xi_search.items()},
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ModelArtifact:
        d = json.loads(text)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported artifact schema_version {d.get('schema_version')!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown artifact fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> ModelArtifact:
        try:
            return cls.from_json(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def fit_config(self) -> FitConfig:
        return FitConfig.from_dict(self.config)

    def gen(self) -> GeneratorKind:
        return GeneratorKind(self.generator["name"], self.generator["xi"])

    def coefficients(self, block: str, key: str = "estimate") -> np.ndarray:
        return np.array([math.nan if r[key] is None else r[key] for r in self.blocks[block]], dtype=float)

    def to_model(self, spec: ModelSpec) -> FittedModel:
        """Rebuild a :class:`FittedModel` over ``spec`` from the stored tables.

        Raises :class:`DataError` when the column layout of ``spec`` does
        not match the artifact.
        """
        for block in BLOCKS:
            stored = [r["name"] for r in self.blocks[block]]
            if stored != list(spec.names[block]):
                raise DataError(f"{block} columns {spec.names[block]} do not match the model ({stored})")
        est = Coefficients(*(self.coefficients(b) for b in BLOCKS))
        se = Coefficients(*(self.coefficients(b, "se") for b in BLOCKS))
        has_zero = bool(np.all(np.isfinite(est.eta)))
        has_pos = bool(np.all(np.isfinite(est.beta)) and np.all(np.isfinite(est.kappa)))
        return FittedModel(
            spec=spec, coef=est, se=se,
            loglik_total=self.loglik["total"], loglik_l1=self.loglik["l1"], loglik_l2=self.loglik["l2"],
            aic=self.aic, bic=self.bic, n_params=self.n_params,
            converged_zero=self.converged["zero"], converged_positive=self.converged["positive"],
            se_available=self.se_available, has_zero_part=has_zero, has_positive_part=has_pos,
        )


__all__ = [
    "ConfigError",
    "DataError",
    "FitConfig",
    "MissingColumnError",
    "ModelArtifact",
    "NegativeResponseError",
    "NonNumericError",
    "RankDeficientError",
    "Table",
    "build_spec",
    "parse_q_grid",
    "read_columns",
    "write_csv",
]
