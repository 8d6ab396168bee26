"""End-to-end orchestration: link, impute, fit, pool, report.

The pipeline is deterministic given its master seed: the linkage
sampler and every EM restart draw from seeds spawned off one
SeedSequence, and all report files are written with round-tripping
float formatting.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import ols_estimate, perfect_ols
from .comparison import (
    FieldSpec,
    RecordFile,
    ValidationError,
    build_comparison_matrix,
)
from .dataio import (
    read_pairs_csv,
    read_record_file,
    write_linked_dataset_csv,
    write_pooled_csv,
    write_rows_csv,
)
from .emcore import EMConfig
from .gibbs import Chain, GibbsConfig, normalize_seeds, run_gibbs
from .imputation import PooledEstimate, extract_all, pool_all
from .marginal import fit_marginal
from .plmi import fit_plmi
from .plmic import fit_plmic

KNOWN_ESTIMATORS = ("plmic", "plmi", "ts_ols", "perfect")


@dataclass
class PipelineConfig:
    file1: object  # path or RecordFile
    file2: object
    specs: list
    x_cols: list = field(default_factory=lambda: ["x1"])
    y_col: str = "y"
    seeds: object = None  # path or (n, 2) array of (i, j)
    truth: object = None
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    em: EMConfig = field(default_factory=EMConfig)
    stride: int = 1
    p_y: str = "normal"
    estimators: tuple = ("plmic", "ts_ols")
    level: float = 0.90
    seed: int = 0
    workers: int = 1
    outdir: str | None = None
    save_chain: bool = False
    chain_path: str | None = None  # reuse a previously saved chain
    diagnostics_m: int | None = None

    def validate(self):
        for est in self.estimators:
            if est not in KNOWN_ESTIMATORS:
                raise ValidationError(f"unknown estimator {est!r}")
        if "perfect" in self.estimators and self.truth is None:
            raise ValidationError("the perfect baseline needs a ground-truth file")
        if "plmi" in self.estimators and self.seeds is None:
            raise ValidationError("plmi needs a nonempty seed list")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("confidence level must lie in (0, 1)")
        if self.stride < 1:
            raise ValidationError("thinning stride must be >= 1")


@dataclass
class EstimatorResult:
    pooled: list  # PooledEstimate per coefficient
    n_fits: int = 0
    n_nonconverged: int = 0
    p_true_mean: float = math.nan  # mean latent prob over truly linked rows
    p_false_mean: float = math.nan
    per_m: list = field(default_factory=list)  # diagnostics rows


@dataclass
class PipelineResult:
    estimators: dict
    chain_n12: np.ndarray
    n_datasets: int
    manifest: dict


def ols_to_pooled(fit, level: float) -> list[PooledEstimate]:
    """Dress a single OLS fit in the pooled-report shape (between = 0)."""
    dof = fit.residuals.shape[0] - fit.beta.shape[0]
    ci = fit.conf_int(level)
    return [
        PooledEstimate(
            coef=l,
            estimate=float(fit.beta[l]),
            within=float(fit.variances[l]),
            between=0.0,
            total=float(fit.variances[l]),
            df=float(dof),
            level=level,
            lo=float(ci[l, 0]),
            hi=float(ci[l, 1]),
        )
        for l in range(fit.beta.shape[0])
    ]


def _load_inputs(cfg: PipelineConfig):
    linking_cols = [s.name for s in cfg.specs]
    f1 = cfg.file1
    if not isinstance(f1, RecordFile):
        f1 = read_record_file(f1, linking_cols, x_cols=cfg.x_cols)
    f2 = cfg.file2
    if not isinstance(f2, RecordFile):
        f2 = read_record_file(f2, linking_cols, y_col=cfg.y_col)
    seeds = cfg.seeds
    if seeds is not None and not isinstance(seeds, (np.ndarray, list, tuple, dict)):
        seeds = read_pairs_csv(seeds)
    truth = cfg.truth
    if truth is not None and not isinstance(truth, (np.ndarray, list, tuple)):
        truth = read_pairs_csv(truth)
    return f1, f2, seeds, truth


def _fit_one(args):
    kind, dataset, p_y, em_cfg, seed, collect = args
    rng = np.random.default_rng(seed)
    if kind == "plmic":
        return fit_plmic(dataset, p_y, em_cfg, rng=rng, collect_p_trace=collect)
    return fit_plmi(dataset, p_y, em_cfg, rng=rng, collect_p_trace=collect)


def _fit_many(kind, datasets, p_y, em_cfg, seed_seq, workers, diag_m=None):
    seeds = seed_seq.generate_state(len(datasets))
    tasks = [
        (kind, ds, p_y, em_cfg, int(seeds[m]), m == diag_m)
        for m, ds in enumerate(datasets)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_fit_one, tasks, chunksize=8))
    return [_fit_one(t) for t in tasks]


def _latent_prob_split(fits, datasets, truth_pairs):
    """Mean latent probability over true vs. false rows, across datasets."""
    truth = {(int(i), int(j)) for i, j in truth_pairs}
    sum_t = sum_f = 0.0
    n_t = n_f = 0
    for fit, ds in zip(fits, datasets):
        if not fit.converged:
            continue
        is_true = np.array(
            [(int(i), int(j)) in truth for i, j in ds.pairs], dtype=bool
        )
        sum_t += float(fit.p_tilde[is_true].sum())
        n_t += int(is_true.sum())
        sum_f += float(fit.p_tilde[~is_true].sum())
        n_f += int((~is_true).sum())
    return (
        sum_t / n_t if n_t else math.nan,
        sum_f / n_f if n_f else math.nan,
    )


def estimate_all(
    datasets,
    p_y,
    cfg: PipelineConfig,
    seed_seq,
    file1=None,
    file2=None,
    truth=None,
):
    """Run every configured estimator over the completed datasets."""
    results = {}
    for est in cfg.estimators:
        if est == "ts_ols":
            estimates = [ols_estimate(d) for d in datasets]
            pooled = pool_all(estimates, cfg.level)
            results[est] = EstimatorResult(pooled=pooled, n_fits=len(datasets))
        elif est == "perfect":
            fit = perfect_ols(truth, file1, file2)
            results[est] = EstimatorResult(pooled=ols_to_pooled(fit, cfg.level), n_fits=1)
        else:
            fits = _fit_many(
                est, datasets, p_y, cfg.em, seed_seq.spawn(1)[0],
                cfg.workers, cfg.diagnostics_m,
            )
            estimates = [f.estimate() for f in fits]
            pooled = pool_all(estimates, cfg.level)
            res = EstimatorResult(
                pooled=pooled,
                n_fits=len(fits),
                n_nonconverged=sum(1 for f in fits if not f.converged),
            )
            if truth is not None and len(truth):
                res.p_true_mean, res.p_false_mean = _latent_prob_split(
                    fits, datasets, truth
                )
            res.per_m = [
                (
                    ds.draw,
                    int(f.converged),
                    f.n_iter,
                    f.loglik,
                    *[float(v) for v in f.link_params],
                )
                for f, ds in zip(fits, datasets)
            ]
            if (
                cfg.diagnostics_m is not None
                and cfg.outdir
                and 0 <= cfg.diagnostics_m < len(fits)
            ):
                os.makedirs(cfg.outdir, exist_ok=True)
                _write_fit_diagnostics(cfg, est, fits[cfg.diagnostics_m])
            results[est] = res
    return results


def _write_fit_diagnostics(cfg, est, fit):
    out = os.path.join(cfg.outdir, f"trace_{est}_m{cfg.diagnostics_m}.csv")
    write_rows_csv(
        out,
        ["iteration", "loglik"],
        [(i, v) for i, v in enumerate(fit.loglik_trace)],
    )
    if fit.p_trace is not None and fit.p_trace.size:
        rows = []
        for it in range(fit.p_trace.shape[0]):
            for k in range(fit.p_trace.shape[1]):
                rows.append((it + 1, k + 1, fit.p_trace[it, k]))
        write_rows_csv(
            os.path.join(cfg.outdir, f"latent_{est}_m{cfg.diagnostics_m}.csv"),
            ["iteration", "k", "p_tilde"],
            rows,
        )


def config_manifest(cfg: PipelineConfig) -> dict:
    desc = {
        "file1": str(cfg.file1) if not isinstance(cfg.file1, RecordFile) else "<memory>",
        "file2": str(cfg.file2) if not isinstance(cfg.file2, RecordFile) else "<memory>",
        "specs": [
            {"name": s.name, "kind": s.kind, "thresholds": list(s.thresholds)}
            for s in cfg.specs
        ],
        "x_cols": list(cfg.x_cols),
        "y_col": cfg.y_col,
        "gibbs": {
            "iterations": cfg.gibbs.iterations,
            "burn_in": cfg.gibbs.burn_in,
            "dirichlet_mu": cfg.gibbs.dirichlet_mu,
            "dirichlet_nu": cfg.gibbs.dirichlet_nu,
            "alpha_pi": cfg.gibbs.alpha_pi,
            "beta_pi": cfg.gibbs.beta_pi,
        },
        "em": {
            "tol": cfg.em.tol,
            "max_iter": cfg.em.max_iter,
            "restarts": cfg.em.restarts,
            "clamp": cfg.em.clamp,
            "init": cfg.em.init,
            "link_max_evals": cfg.em.link_max_evals,
        },
        "stride": cfg.stride,
        "p_y": cfg.p_y,
        "estimators": list(cfg.estimators),
        "level": cfg.level,
        "seed": cfg.seed,
    }
    blob = json.dumps(desc, sort_keys=True).encode()
    return {
        "config": desc,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "rng_seed": cfg.seed,
        "versions": {
            "linkmi": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """link -> impute -> fit -> pool -> report, writing files when configured."""
    cfg.validate()
    file1, file2, seed_pairs, truth = _load_inputs(cfg)
    seed_map = normalize_seeds(seed_pairs, file1.n, file2.n)
    if "plmi" in cfg.estimators and not seed_map:
        raise ValidationError("plmi needs a nonempty seed list")

    master = np.random.SeedSequence(cfg.seed)
    ss_gibbs, ss_fits = master.spawn(2)

    gamma = build_comparison_matrix(file1, file2, cfg.specs)
    if cfg.chain_path:
        chain = Chain.load(cfg.chain_path)
        if chain.n1 != file1.n or chain.n2 != file2.n:
            raise ValidationError("saved chain does not match the input files")
    else:
        chain = run_gibbs(
            gamma, cfg.gibbs, seed_map, rng=np.random.default_rng(ss_gibbs)
        )

    datasets = extract_all(chain, file1, file2, gamma, seed_map, cfg.stride)
    if (
        cfg.diagnostics_m is not None
        and cfg.outdir
        and 0 <= cfg.diagnostics_m < len(datasets)
    ):
        os.makedirs(cfg.outdir, exist_ok=True)
        write_linked_dataset_csv(
            os.path.join(cfg.outdir, f"linked_m{cfg.diagnostics_m}.csv"),
            datasets[cfg.diagnostics_m],
        )
    needs_py = any(e in ("plmic", "plmi") for e in cfg.estimators)
    p_y = fit_marginal(file2.y, cfg.p_y) if needs_py else None

    results = estimate_all(
        datasets, p_y, cfg, ss_fits, file1=file1, file2=file2, truth=truth
    )
    manifest = config_manifest(cfg)

    if cfg.outdir:
        os.makedirs(cfg.outdir, exist_ok=True)
        n12 = chain.n12()
        write_rows_csv(
            os.path.join(cfg.outdir, "chain_summary.csv"),
            ["m", "n12"],
            list(zip(chain.draw_index.tolist(), n12.tolist())),
        )
        if cfg.save_chain:
            chain.save(os.path.join(cfg.outdir, "chain.jsonl"))
        for est, res in results.items():
            write_pooled_csv(
                os.path.join(cfg.outdir, f"pooled_{est}.csv"), res.pooled
            )
            if res.per_m:
                write_rows_csv(
                    os.path.join(cfg.outdir, f"fits_{est}.csv"),
                    ["m", "converged", "n_iter", "loglik", "link_params"],
                    [(m, c, i, ll, " ".join(repr(p) for p in ps))
                     for (m, c, i, ll, *ps) in res.per_m],
                )
        with open(os.path.join(cfg.outdir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
        _write_report(cfg, results)

    return PipelineResult(
        estimators=results,
        chain_n12=chain.n12(),
        n_datasets=len(datasets),
        manifest=manifest,
    )


def _write_report(cfg, results):
    lines = []
    for est, res in results.items():
        lines.append(f"[{est}]  fits={res.n_fits}  nonconverged={res.n_nonconverged}")
        for p in res.pooled:
            lines.append(
                f"  beta{p.coef}: {p.estimate:.6f}  se={p.se:.6f}  "
                f"df={p.df:.2f}  {int(p.level * 100)}% CI [{p.lo:.6f}, {p.hi:.6f}]"
            )
    with open(os.path.join(cfg.outdir, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
