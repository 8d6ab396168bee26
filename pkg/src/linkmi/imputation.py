"""Linked analysis datasets and multiple-imputation pooling.

Each retained sampler draw induces one completed dataset: the rows are
the linked pairs, carrying the file-1 covariates, the file-2 response,
and that draw's confidence measure for the pair.  Per-dataset estimates
are combined with Rubin's rules.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .comparison import RecordFile, ValidationError
from .gibbs import Chain, confidence_for_pairs

log = logging.getLogger(__name__)


@dataclass
class LinkedDataset:
    """One completed dataset; seed rows come first."""

    x: np.ndarray  # (n, p) covariates, no intercept column
    y: np.ndarray  # (n,)
    c: np.ndarray  # (n,) confidence measures
    is_seed: np.ndarray  # (n,) bool
    pairs: np.ndarray  # (n, 2) provenance (i, j)
    draw: int = -1  # which chain draw produced this dataset

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_seeds(self) -> int:
        return int(self.is_seed.sum())

    def validate(self):
        n = self.n
        if not (self.x.shape[0] == self.c.shape[0] == self.pairs.shape[0] == n):
            raise ValidationError("linked dataset arrays disagree on length")
        if not np.all(np.isfinite(self.c)):
            raise ValidationError("confidence measures must be finite")
        if self.is_seed[: self.n_seeds].sum() != self.n_seeds:
            raise ValidationError("seed rows must be ordered first")
        for col in (0, 1):
            ids = self.pairs[:, col]
            if np.unique(ids).size != n:
                raise ValidationError("provenance pairs must be one-to-one")

    def design_matrix(self) -> np.ndarray:
        return np.column_stack([np.ones(self.n), self.x])


def extract_linked_dataset(
    chain: Chain,
    k: int,
    file1: RecordFile,
    file2: RecordFile,
    gamma,
    seeds: dict | None = None,
) -> LinkedDataset:
    """Build the completed dataset for draw ``k`` of the chain.

    Confidence measures come from the same draw's (mu, nu).  Seeded rows
    are placed first, in file-2 order; the remaining links follow, also
    in file-2 order.
    """
    if file1.x is None:
        raise ValidationError("file 1 carries no covariate columns")
    if file2.y is None:
        raise ValidationError("file 2 carries no response column")
    z = chain.z[k]
    n1 = chain.n1
    seeds = seeds or {}

    j_all = np.flatnonzero(z < n1)
    i_all = z[j_all].astype(np.int64)
    if i_all.size and (i_all.max() >= file1.n or j_all.max() >= file2.n):
        raise ValidationError("draw references records outside the files")

    seed_flag = np.array([int(j) in seeds for j in j_all], dtype=bool)
    order = np.concatenate([np.flatnonzero(seed_flag), np.flatnonzero(~seed_flag)])
    j_idx = j_all[order]
    i_idx = i_all[order]

    c = confidence_for_pairs(gamma, chain.params(k), i_idx, j_idx)
    ds = LinkedDataset(
        x=file1.x[i_idx],
        y=file2.y[j_idx],
        c=c,
        is_seed=seed_flag[order],
        pairs=np.column_stack([i_idx, j_idx]),
        draw=int(chain.draw_index[k]),
    )
    ds.validate()
    return ds


def extract_all(chain, file1, file2, gamma, seeds=None, stride: int = 1):
    """Linked datasets for every ``stride``-th retained draw."""
    if stride < 1:
        raise ValidationError("thinning stride must be >= 1")
    return [
        extract_linked_dataset(chain, k, file1, file2, gamma, seeds)
        for k in range(0, len(chain), stride)
    ]


@dataclass
class PerDatasetEstimate:
    """Point estimates and variances from one completed-data analysis."""

    theta: np.ndarray  # coefficient vector
    variances: np.ndarray  # per-coefficient sampling variances
    converged: bool = True
    loglik: float = math.nan
    extra: dict = field(default_factory=dict)


@dataclass
class PooledEstimate:
    """Rubin's-rules summary for a single coefficient."""

    coef: int
    estimate: float
    within: float
    between: float
    total: float
    df: float
    level: float
    lo: float
    hi: float

    @property
    def se(self) -> float:
        return math.sqrt(self.total)


def pool_rubin(estimates, coef: int, level: float = 0.90) -> PooledEstimate:
    """Combine per-dataset estimates of one coefficient.

    Non-converged analyses are dropped (with a logged warning); at least
    two converged analyses are required.  When the between-imputation
    variance is exactly zero the reference distribution degenerates to
    the normal (df = inf).
    """
    usable = [e for e in estimates if e.converged]
    dropped = len(estimates) - len(usable)
    if dropped:
        log.warning("pooling dropped %d non-converged analyses", dropped)
    if len(usable) < 2:
        raise ValidationError("pooling needs at least 2 converged analyses")

    m = len(usable)
    th = np.array([float(e.theta[coef]) for e in usable])
    vh = np.array([float(e.variances[coef]) for e in usable])
    theta_bar = th.mean()
    v_bar = vh.mean()
    b = th.var(ddof=1)
    t_total = v_bar + (1.0 + 1.0 / m) * b
    if b > 0.0:
        try:
            df = (m - 1) * (1.0 + float(v_bar) / ((1.0 + 1.0 / m) * float(b))) ** 2
        except OverflowError:
            df = math.inf
    else:
        df = math.inf
    alpha = 1.0 - level
    q = float(stats.t.ppf(1.0 - alpha / 2.0, df)) if math.isfinite(df) else float(
        stats.norm.ppf(1.0 - alpha / 2.0)
    )
    half = q * math.sqrt(t_total)
    return PooledEstimate(
        coef=coef,
        estimate=float(theta_bar),
        within=float(v_bar),
        between=float(b),
        total=float(t_total),
        df=float(df),
        level=level,
        lo=float(theta_bar - half),
        hi=float(theta_bar + half),
    )


def pool_all(estimates, level: float = 0.90) -> list[PooledEstimate]:
    usable = [e for e in estimates if e.converged]
    if not usable:
        raise ValidationError("no converged analyses to pool")
    n_coef = len(usable[0].theta)
    return [pool_rubin(estimates, l, level) for l in range(n_coef)]
