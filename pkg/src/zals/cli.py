"""Command-line front end.

::

    zals fit       --data d.csv --config m.yaml [--q 0.5] [--gen ebs --xi 1.5] --out model.json
    zals sweep     --data d.csv --config m.yaml --q-grid 0.01:0.99:0.01 --out sweep.csv
    zals simulate  --design design.yaml --out mc.csv [--dump-data dir/]
    zals residuals --model model.json --data d.csv --seed 42 --out resid.csv

Exit status: 0 on success, 1 when a requested fit did not converge,
2 for configuration problems, 3-7 for data problems (see
:mod:`zals.dataio`), 8 when every point of a sweep failed.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml
from scipy import special

from . import __version__
from ._accel import n_threads
from .dataio import (
    ConfigError,
    DataError,
    FitConfig,
    ModelArtifact,
    build_spec,
    parse_q_grid,
    read_columns,
    write_csv,
)
from .generators import GeneratorKind
from .optimizer import OptimOptions
from .regression import BLOCKS, Z_975, FitOptions, fit, fit_sweep, randomized_quantile_residuals, select_xi
from .simulation import CSV_COLUMNS, SimDesign, run_study

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_ALL_FAILED = 8

BLOCK_TITLES = {
    "eta": "Participation: probability of a zero (logit link)",
    "beta": "Intensity: quantile Q (log link)",
    "kappa": "Intensity: dispersion phi (log link)",
}
SWEEP_COLUMNS = ("q", "block", "parameter", "estimate", "lo95", "hi95")


class _Abort(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _fmt(x, width=11, prec=4):
    if x is None or not math.isfinite(x):
        return "NA".rjust(width)
    return f"{x:{width}.{prec}f}"


def _stars(p):
    if p is None or not math.isfinite(p):
        return ""
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else "." if p < 0.1 else ""


def format_tables(art: ModelArtifact) -> str:
    """Coefficient tables in the usual Estimate / SE / z / p layout."""
    gen = GeneratorKind(art.generator["name"], art.generator["xi"])
    lines = [f"Zero-adjusted log-symmetric quantile regression, {gen}, q = {art.q_level:g}",
             f"n = {art.n_obs}, zeros = {art.n_zeros}"]
    for block in ("eta", "beta", "kappa"):
        rows = art.blocks[block]
        if not rows or all(r["estimate"] is None for r in rows):
            continue
        width = max(12, *(len(r["name"]) for r in rows))
        lines += ["", BLOCK_TITLES[block],
                  f"{'':{width}} {'Estimate':>11} {'Std.Err':>11} {'z':>9} {'p':>9}"]
        for r in rows:
            lines.append(f"{r['name']:{width}} {_fmt(r['estimate'])} {_fmt(r['se'])} "
                         f"{_fmt(r['z'], 9, 3)} {_fmt(r['p_value'], 9, 4)} {_stars(r['p_value'])}")
    lines += [
        "",
        f"log-likelihood {art.loglik['total']:.4f} (zero part {art.loglik['l1']:.4f}, "
        f"positive part {art.loglik['l2']:.4f}), parameters {art.n_params}",
        f"AIC {art.aic:.3f}  BIC {art.bic:.3f}  (log-response scale: AIC {art.aic_log_response:.3f}  "
        f"BIC {art.bic_log_response:.3f})",
    ]
    if not (art.converged["zero"] and art.converged["positive"]):
        lines.append(f"WARNING: not converged (zero part: {art.converged['zero']}, "
                     f"positive part: {art.converged['positive']})")
    if not art.se_available:
        lines.append("WARNING: standard errors unavailable (singular information matrix)")
    return "\n".join(lines)


# ------------------------------------------------------------------ #
# Subcommands
# ------------------------------------------------------------------ #


def _load_config(args) -> FitConfig:
    cfg = FitConfig.load(args.config)
    d = cfg.to_dict()
    if getattr(args, "gen", None):
        d["generator"] = args.gen
        if not args.xi:
            d["xi"] = None
    if getattr(args, "xi", None):
        try:
            xs = [float(t) for t in args.xi.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(f"bad --xi value {args.xi!r}") from None
        d["xi"] = xs[0] if len(xs) == 1 else xs
    if getattr(args, "q", None) is not None:
        d["q"] = args.q
    if getattr(args, "q_grid", None):
        d["q_grid"] = args.q_grid
    return FitConfig.from_dict(d)


def _read_data(cfg: FitConfig, path):
    return read_columns(path, cfg.columns())


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    table = _read_data(cfg, args.data)
    spec = build_spec(cfg, table)
    opts = cfg.fit_options()
    xis = cfg.xi_values()
    search = None
    if len(xis) > 1:
        try:
            model, search = select_xi(spec, xis, opts)
        except RuntimeError as exc:
            raise _Abort(EXIT_NOT_CONVERGED, str(exc)) from None
    else:
        model = fit(spec, opts)
    art = ModelArtifact.from_fit(model, cfg, search)
    print(format_tables(art))
    if search:
        print("xi search (AIC): " + ", ".join(f"{k:g}: {v:.3f}" for k, v in search.items()))
    if args.out:
        art.save(args.out)
    return EXIT_OK if model.converged else EXIT_NOT_CONVERGED


def sweep_rows(result) -> list[tuple]:
    rows = []
    for q, m in zip(result.q_grid, result.fits):
        if m is None:
            continue
        for block in BLOCKS:
            est, se = getattr(m.coef, block), getattr(m.se, block)
            for name, e, s in zip(m.spec.names[block], est, se):
                rows.append((q, block, name, float(e), float(e - Z_975 * s), float(e + Z_975 * s)))
    return rows


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not cfg.q_grid:
        raise ConfigError("sweep needs a q grid (--q-grid or 'q_grid' in the configuration)")
    grid = parse_q_grid(cfg.q_grid)
    table = _read_data(cfg, args.data)
    xis = cfg.xi_values()
    if len(xis) > 1:
        raise ConfigError("sweep takes a single xi")
    spec = build_spec(cfg, table, q=grid[0])
    result = fit_sweep(spec, grid, cfg.fit_options(), n_jobs=n_threads())
    if args.out:
        write_csv(args.out, SWEEP_COLUMNS, sweep_rows(result))
    n_ok = len(grid) - result.n_excluded
    print(f"{spec.gen}: {n_ok}/{len(grid)} grid points converged, {result.n_excluded} excluded; "
          f"mean AIC {result.mean_aic:.3f}, mean BIC {result.mean_bic:.3f} "
          f"(log-response scale: {result.mean_aic_log_response:.3f}, {result.mean_bic_log_response:.3f})")
    for q, msg in sorted(result.errors.items()):
        print(f"q = {q:g}: {msg}", file=sys.stderr)
    if n_ok == 0:
        raise _Abort(EXIT_ALL_FAILED, "no grid point produced a converged fit")
    return EXIT_OK if result.n_excluded == 0 else EXIT_NOT_CONVERGED


DESIGN_KEYS = {"generator", "xi", "q_levels", "true_beta", "true_kappa", "true_eta",
               "sample_sizes", "nrep", "seed", "optimizer"}


def load_design(path) -> tuple[SimDesign, dict]:
    """Read a YAML design file; returns the design and optimizer overrides."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("design must be a mapping")
    extra = set(raw) - DESIGN_KEYS
    if extra:
        raise ConfigError(f"unknown design keys: {', '.join(sorted(extra))}")
    kw = {k: raw[k] for k in ("q_levels", "sample_sizes", "nrep", "seed") if k in raw}
    for k in ("true_beta", "true_kappa", "true_eta"):
        if k in raw:
            kw[k] = tuple(float(v) for v in raw[k])
    try:
        kw["gen"] = GeneratorKind.from_name(raw.get("generator", "normal"), raw.get("xi"))
        design = SimDesign(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid design: {exc}") from None
    return design, dict(raw.get("optimizer") or {})


def _dump_datasets(design: SimDesign, datasets: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["z", "x1", "x2", "w1", "w2", "v1", "v2"]
    for (qi, ni, r), spec in sorted(datasets.items()):
        cols = np.column_stack((spec.z, spec.X[:, 1:], spec.W[:, 1:], spec.V[:, 1:]))
        write_csv(out_dir / f"q{qi}_n{design.sample_sizes[ni]}_r{r:04d}.csv", header,
                  [[float(v) for v in row] for row in cols])
    for qi, q in enumerate(design.q_levels):
        cfg = dict(response="z", quantile=["x1", "x2"], dispersion=["w1", "w2"], zero=["v1", "v2"],
                   generator=design.gen.name, xi=design.gen.xi, q=float(q), seed=design.seed)
        with open(out_dir / f"config_q{qi}.yaml", "w", encoding="utf-8") as fh:
            yaml.safe_dump(cfg, fh, sort_keys=False)


def cmd_simulate(args) -> int:
    design, optim = load_design(args.design)
    try:
        options = FitOptions(optim=OptimOptions(**optim), compute_se=False)
    except TypeError as exc:
        raise ConfigError(f"invalid optimizer options: {exc}") from None
    datasets = {}
    hook = None
    if args.dump_data:
        def hook(qi, ni, r, spec):
            datasets[(qi, ni, r)] = spec
    report = run_study(design, options=options, n_jobs=n_threads(), on_dataset=hook)
    if args.out:
        report.to_csv(args.out)
    if args.dump_data:
        _dump_datasets(design, datasets, Path(args.dump_data))
    for c in report.cells:
        flag = "  (unreliable: failure rate above 20%)" if c.unreliable else ""
        print(f"q = {c.q_level:g}, n = {c.n}: {c.n_failed}/{c.estimates.shape[0]} failed{flag}")
    return EXIT_OK


def cmd_residuals(args) -> int:
    art = ModelArtifact.load(args.model)
    cfg = art.fit_config()
    table = _read_data(cfg, args.data)
    spec = build_spec(cfg, table, gen=art.gen(), q=art.q_level)
    model = art.to_model(spec)
    if spec.positive.any() and not model.has_positive_part:
        raise DataError("the model has no positive part but the data contain positive responses")
    if spec.is_zero.any() and not model.has_zero_part:
        raise DataError("the model has no zero part but the data contain zeros")
    seed = cfg.seed if args.seed is None else args.seed
    res = randomized_quantile_residuals(model, np.random.default_rng(seed), spec)
    order = np.argsort(res, kind="stable")
    n = res.size
    theo = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    rows = [(int(i) + 1, float(res[i]), float(t)) for i, t in zip(order, theo)]
    if args.out:
        write_csv(args.out, ("index", "residual", "theoretical"), rows)
    print(f"{n} residuals: mean {res.mean():.4f}, sd {res.std(ddof=1):.4f}")
    return EXIT_OK


# ------------------------------------------------------------------ #
# Entry point
# ------------------------------------------------------------------ #


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zals", description="Zero-adjusted log-symmetric quantile regression.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--data", required=True, help="CSV file with a header row")
        sp.add_argument("--config", required=True, help="YAML model configuration")
        sp.add_argument("--gen", help="generator: normal, t, pe or ebs (overrides the configuration)")
        sp.add_argument("--xi", help="shape parameter; a comma-separated list selects the lowest AIC")

    sp = sub.add_parser("fit", help="fit one quantile level")
    model_args(sp)
    sp.add_argument("--q", type=float, help="quantile level in (0, 1)")
    sp.add_argument("--out", help="JSON model artifact")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("sweep", help="fit over a grid of quantile levels")
    model_args(sp)
    sp.add_argument("--q-grid", help="start:stop:step (inclusive) or a comma-separated list")
    sp.add_argument("--out", help="long-format CSV of estimates and 95%% intervals")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("simulate", help="Monte Carlo study")
    sp.add_argument("--design", required=True, help="YAML design file")
    sp.add_argument("--out", help="bias/MSE report CSV")
    sp.add_argument("--dump-data", help="directory for per-replicate datasets")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("residuals", help="randomized quantile residuals of a fitted model")
    sp.add_argument("--model", required=True, help="JSON model artifact from 'zals fit'")
    sp.add_argument("--data", required=True, help="CSV file with the model's columns")
    sp.add_argument("--seed", type=int, help="RNG seed (defaults to the configuration's)")
    sp.add_argument("--out", help="CSV of index, residual and normal plotting position, sorted")
    sp.set_defaults(func=cmd_residuals)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"zals: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except _Abort as exc:
        print(f"zals: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
