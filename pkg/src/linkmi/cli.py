"""Command line front end.

Subcommands: ``link`` (comparison + sampler only), ``fit`` (the full
pipeline), ``simulate`` (replicated scenario studies), ``report``
(re-aggregate a study log).  Configuration is a plain key = value file
with a [fields] section mapping columns to comparators; every key can be
overridden on the command line with --set key=value.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .comparison import FieldSpec, ValidationError, build_comparison_matrix
from .dataio import read_pairs_csv, read_record_file, write_rows_csv
from .emcore import EMConfig
from .gibbs import GibbsConfig, normalize_seeds, run_gibbs
from .pipeline import PipelineConfig, run_pipeline
from .simgen import ScenarioConfig, parse_error_level
from .study import (
    METRICS_HEADER,
    StudyConfig,
    aggregate_metrics,
    read_log_csv,
    run_simulation_study,
)


def parse_config_file(path):
    """key = value pairs plus a [fields] section of comparator lines."""
    options, fields = {}, []
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip().lower()
                continue
            if section == "fields":
                fields.append(line.split())
            elif "=" in line:
                key, val = line.split("=", 1)
                options[key.strip()] = val.strip()
            else:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
    return options, fields


def specs_from_fields(field_lines) -> list[FieldSpec]:
    specs = []
    for tokens in field_lines:
        if len(tokens) < 2:
            raise ValidationError(f"bad field line: {' '.join(tokens)}")
        name, kind, *rest = tokens
        if kind == "exact":
            specs.append(FieldSpec(name, "exact"))
        elif kind == "levenshtein":
            specs.append(FieldSpec(name, "levenshtein", tuple(float(t) for t in rest)))
        else:
            raise ValidationError(f"unknown comparator {kind!r} for field {name!r}")
    if not specs:
        raise ValidationError("config has no [fields] section")
    return specs


def _get(opts, key, default=None, cast=str):
    if key not in opts:
        if default is None and cast is not str:
            return None
        return default
    return cast(opts[key])


def _csv_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def gibbs_from(opts) -> GibbsConfig:
    return GibbsConfig(
        iterations=_get(opts, "iterations", 1000, int),
        burn_in=_get(opts, "burn_in", 100, int),
        dirichlet_mu=_get(opts, "dirichlet_mu", 1.0, float),
        dirichlet_nu=_get(opts, "dirichlet_nu", 1.0, float),
        alpha_pi=_get(opts, "alpha_pi", 1.0, float),
        beta_pi=_get(opts, "beta_pi", 1.0, float),
    )


def em_from(opts) -> EMConfig:
    return EMConfig(
        tol=_get(opts, "em_tol", 1e-8, float),
        max_iter=_get(opts, "em_max_iter", 500, int),
        restarts=_get(opts, "em_restarts", 3, int),
        clamp=_get(opts, "em_clamp", 1e-12, float),
        init=_get(opts, "em_init", "auto"),
        link_max_evals=_get(opts, "em_link_max_evals", 200, int),
    )


def _apply_overrides(opts, overrides):
    for item in overrides or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        opts[key.strip()] = val.strip()
    return opts


def _require(opts, key):
    if key not in opts:
        raise ValidationError(f"config is missing required key {key!r}")
    return opts[key]


def cmd_link(args):
    opts, field_lines = parse_config_file(args.config)
    _apply_overrides(opts, args.set)
    specs = specs_from_fields(field_lines)
    outdir = args.outdir or _require(opts, "outdir")
    os.makedirs(outdir, exist_ok=True)

    linking_cols = [s.name for s in specs]
    file1 = read_record_file(_require(opts, "file1"), linking_cols)
    file2 = read_record_file(_require(opts, "file2"), linking_cols)
    seeds = None
    if opts.get("seeds"):
        seeds = read_pairs_csv(opts["seeds"])
    seed_map = normalize_seeds(seeds, file1.n, file2.n)

    gamma = build_comparison_matrix(file1, file2, specs)
    cfg = gibbs_from(opts)
    cfg.seed = _get(opts, "seed", 0, int)
    chain = run_gibbs(gamma, cfg, seed_map)
    chain.save(os.path.join(outdir, "chain.jsonl"))
    write_rows_csv(
        os.path.join(outdir, "chain_summary.csv"),
        ["m", "n12"],
        list(zip(chain.draw_index.tolist(), chain.n12().tolist())),
    )
    print(f"wrote chain with {len(chain)} draws to {outdir}/chain.jsonl")
    return 0


def pipeline_config_from(opts, field_lines, args) -> PipelineConfig:
    specs = specs_from_fields(field_lines)
    return PipelineConfig(
        file1=_require(opts, "file1"),
        file2=_require(opts, "file2"),
        specs=specs,
        x_cols=_csv_list(_get(opts, "covariates", "x1")),
        y_col=_get(opts, "response", "y"),
        seeds=opts.get("seeds") or None,
        truth=opts.get("truth") or None,
        gibbs=gibbs_from(opts),
        em=em_from(opts),
        stride=_get(opts, "stride", 1, int),
        p_y=_get(opts, "p_y", "normal"),
        estimators=tuple(_csv_list(_get(opts, "estimators", "plmic,ts_ols"))),
        level=_get(opts, "level", 0.90, float),
        seed=_get(opts, "seed", 0, int),
        workers=args.workers or _get(opts, "workers", 1, int),
        outdir=args.outdir or opts.get("outdir"),
        save_chain=_get(opts, "save_chain", "0") in ("1", "true", "yes"),
        chain_path=args.chain or opts.get("chain") or None,
        diagnostics_m=_get(opts, "diagnostics_m", None, int),
    )


def cmd_fit(args):
    opts, field_lines = parse_config_file(args.config)
    _apply_overrides(opts, args.set)
    cfg = pipeline_config_from(opts, field_lines, args)
    if cfg.outdir is None:
        raise ValidationError("an output directory is required (outdir=...)")
    result = run_pipeline(cfg)
    for est, res in result.estimators.items():
        line = ", ".join(
            f"beta{p.coef}={p.estimate:.4f}+-{p.se:.4f}" for p in res.pooled
        )
        print(f"{est}: {line}")
    print(f"reports written to {cfg.outdir}")
    return 0


def scenario_grid_from(opts):
    beta = tuple(float(b) for b in _csv_list(_get(opts, "beta", "3,3")))
    overlaps = [float(v) for v in _csv_list(_get(opts, "overlap", "0.5"))]
    errors = [parse_error_level(v) for v in _csv_list(_get(opts, "n_error", "H"))]
    r2_list = [float(v) for v in _csv_list(_get(opts, "r2", "0.9"))]
    shift = _get(opts, "nonlink_shift", 0.0, float)
    scenarios = []
    for ov in overlaps:
        for ne in errors:
            for r2 in r2_list:
                scen = ScenarioConfig(
                    n1=_get(opts, "n1", 500, int),
                    n2=_get(opts, "n2", 500, int),
                    overlap=ov,
                    n_error=ne,
                    beta=beta,
                    r2=r2,
                    covariates=_get(opts, "covariates_kind", "normal"),
                    nonlink_shift=shift,
                    seed_fraction=_get(opts, "seed_fraction", 0.0, float),
                )
                name = f"ov{ov:g}_err{ne}_r2{r2:g}"
                if shift:
                    name += f"_r{shift:g}"
                scenarios.append((name, scen))
    return scenarios


def cmd_simulate(args):
    opts, _ = parse_config_file(args.config)
    _apply_overrides(opts, args.set)
    outdir = args.outdir or _require(opts, "outdir")
    cfg = StudyConfig(
        scenarios=scenario_grid_from(opts),
        replications=args.replications or _get(opts, "replications", 100, int),
        estimators=tuple(_csv_list(_get(opts, "estimators", "plmic,ts_ols,perfect"))),
        gibbs=gibbs_from(opts),
        em=em_from(opts),
        stride=_get(opts, "stride", 1, int),
        p_y=_get(opts, "p_y", "normal"),
        level=_get(opts, "level", 0.90, float),
        seed=_get(opts, "seed", 0, int),
        workers=args.workers or _get(opts, "workers", 1, int),
        outdir=outdir,
    )
    _, metrics = run_simulation_study(cfg)
    _print_metrics(metrics)
    print(f"study log and metrics written to {outdir}")
    return 0


def cmd_report(args):
    rows = read_log_csv(args.log)
    metrics = aggregate_metrics(rows)
    _print_metrics(metrics)
    if args.out:
        write_rows_csv(args.out, METRICS_HEADER, metrics)
        print(f"metrics written to {args.out}")
    return 0


def _print_metrics(metrics):
    print(
        f"{'scenario':24s} {'estimator':9s} {'coef':4s} "
        f"{'cover%':>7s} {'mad*100':>8s} {'len*100':>8s} {'nonconv':>7s} {'fail':>4s}"
    )
    for row in metrics:
        scen, est, coef, n, cov, mad, length, nonconv, failed = row
        print(
            f"{scen:24s} {est:9s} {coef:<4d} {cov:7.1f} {mad:8.1f} "
            f"{length:8.1f} {nonconv:7d} {failed:4d}"
        )


def build_parser():
    ap = argparse.ArgumentParser(
        prog="linkmi",
        description="Record linkage with false-link-robust regression inference",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry")
    common.add_argument("--outdir", help="output directory override")
    common.add_argument("--workers", type=int, help="parallel worker override")

    p = sub.add_parser("link", parents=[common], help="run the linkage sampler only")
    p.add_argument("config")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("fit", parents=[common], help="full pipeline with reports")
    p.add_argument("config")
    p.add_argument("--chain", help="reuse a saved chain.jsonl")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="replicated scenario study")
    p.add_argument("config")
    p.add_argument("--replications", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="re-aggregate a study log")
    p.add_argument("log")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
