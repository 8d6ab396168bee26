"""Closed-form OLS, the pooled two-stage baseline, and the true-link oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .comparison import RecordFile, ValidationError
from .imputation import PerDatasetEstimate, PooledEstimate, pool_all


@dataclass
class OlsFit:
    beta: np.ndarray
    sigma2: float  # unbiased residual variance RSS / (n - p - 1)
    variances: np.ndarray  # per-coefficient sampling variances
    residuals: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variances)

    def conf_int(self, level: float = 0.90) -> np.ndarray:
        """Classical t intervals, one row (lo, hi) per coefficient."""
        dof = self.residuals.shape[0] - self.beta.shape[0]
        q = float(stats.t.ppf(0.5 + level / 2.0, dof))
        half = q * self.se
        return np.column_stack([self.beta - half, self.beta + half])


def ols_fit(design: np.ndarray, y: np.ndarray) -> OlsFit:
    """Least squares through a QR decomposition.

    ``design`` must already contain the intercept column.  Rank
    deficiency and n <= p+1 are rejected.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, k = design.shape
    if n <= k:
        raise ValidationError("need more rows than coefficients")
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise ValidationError("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - design @ beta
    s2 = float(resid @ resid) / (n - k)
    rinv = np.linalg.solve(r, np.eye(k))
    xtx_inv = rinv @ rinv.T
    return OlsFit(
        beta=beta,
        sigma2=s2,
        variances=s2 * np.diag(xtx_inv),
        residuals=resid,
    )


def ols_estimate(dataset) -> PerDatasetEstimate:
    """OLS on one linked dataset, packaged for pooling."""
    fit = ols_fit(dataset.design_matrix(), dataset.y)
    return PerDatasetEstimate(theta=fit.beta, variances=fit.variances)


def ts_ols(datasets, level: float = 0.90) -> list[PooledEstimate]:
    """Two-stage baseline: plain OLS per completed dataset, Rubin-pooled.

    Seed rows are ordinary rows here; no reweighting of any kind.
    """
    if not datasets:
        raise ValidationError("no datasets to pool")
    return pool_all([ols_estimate(d) for d in datasets], level)


def perfect_ols(truth_pairs, file1: RecordFile, file2: RecordFile) -> OlsFit:
    """OLS using only the true links; the oracle nothing else can beat."""
    truth_pairs = np.asarray(truth_pairs, dtype=int)
    if truth_pairs.size == 0:
        raise ValidationError("ground truth has no pairs")
    if file1.x is None or file2.y is None:
        raise ValidationError("files lack study columns")
    i_idx, j_idx = truth_pairs[:, 0], truth_pairs[:, 1]
    x = file1.x[i_idx]
    design = np.column_stack([np.ones(x.shape[0]), x])
    return ols_fit(design, file2.y[j_idx])
