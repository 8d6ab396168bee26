"""Shared machinery for the post-linkage mixture EM fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .baselines import ols_fit
from .comparison import ValidationError
from .optimize import numerical_hessian

SIGMA2_FLOOR = 1e-30


@dataclass
class EMConfig:
    tol: float = 1e-8  # relative observed-log-likelihood change
    max_iter: int = 500
    restarts: int = 3
    clamp: float = 1e-12  # latent probability clamp for non-seed rows
    init: str = "auto"  # "auto" | "two_stage" | "seeds"
    link_max_evals: int = 200  # budget for the link-model inner optimizer

    def validate(self):
        if self.tol <= 0 or self.max_iter < 1 or self.restarts < 1:
            raise ValidationError("bad EM configuration")
        if not 0 < self.clamp < 0.5:
            raise ValidationError("clamp must lie in (0, 0.5)")
        if self.init not in ("auto", "two_stage", "seeds"):
            raise ValidationError(f"unknown init source: {self.init!r}")


@dataclass
class MixtureFit:
    """Converged mixture parameters for one completed dataset."""

    beta: np.ndarray
    sigma2: float
    link_params: np.ndarray  # (eta0, eta1) or (delta,)
    p_tilde: np.ndarray
    loglik_trace: np.ndarray
    cov: np.ndarray | None
    var_beta: np.ndarray | None
    converged: bool
    n_iter: int
    message: str = ""
    p_trace: np.ndarray | None = None  # optional per-iteration latent probs

    @property
    def loglik(self) -> float:
        return float(self.loglik_trace[-1]) if self.loglik_trace.size else -math.inf

    def estimate(self):
        from .imputation import PerDatasetEstimate

        var = self.var_beta if self.var_beta is not None else np.full_like(
            self.beta, np.nan
        )
        return PerDatasetEstimate(
            theta=self.beta,
            variances=var,
            converged=self.converged,
            loglik=self.loglik,
        )


def normal_logpdf(y, mean, sigma2):
    return -0.5 * (np.log(2.0 * np.pi * sigma2) + (y - mean) ** 2 / sigma2)


def weighted_least_squares(design, y, w, min_weight_total):
    """Closed-form maximizer of the weighted normal log-likelihood.

    Returns (beta, sigma2_mle) where sigma2 is the weight-normalized
    residual variance.  Raises when the effective sample is too small to
    identify the regression.
    """
    wsum = float(w.sum())
    if wsum < min_weight_total:
        raise ValidationError(
            f"effective sample {wsum:.2f} too small for the regression"
        )
    sw = np.sqrt(w)
    beta, _, rank, _ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
    if rank < design.shape[1]:
        raise ValidationError("weighted design matrix is rank deficient")
    resid = y - design @ beta
    sigma2 = float(w @ resid**2) / wsum
    return beta, max(sigma2, SIGMA2_FLOOR)


def init_regression(data, config: EMConfig):
    """Starting (beta, sigma2) from OLS, per the configured source.

    "two_stage" fits all rows of the dataset; "seeds" fits the seed rows
    only; "auto" prefers seeds whenever there are enough of them.  The
    returned sigma2 is the MLE (divide by n) version.
    """
    design = data.design_matrix()
    k = design.shape[1]
    use_seeds = config.init == "seeds" or (
        config.init == "auto" and data.n_seeds > k + 1
    )
    if config.init == "seeds" and data.n_seeds <= k + 1:
        use_seeds = False  # not enough seeds to identify the fit
    if use_seeds:
        rows = data.is_seed
        fit = ols_fit(design[rows], data.y[rows])
        n_rows = int(rows.sum())
    else:
        fit = ols_fit(design, data.y)
        n_rows = data.n
    rss = float(fit.residuals @ fit.residuals)
    return fit.beta, max(rss / n_rows, SIGMA2_FLOOR)


def jitter(rng, beta, sigma2, link, scale=0.1):
    """Multiplicative noise on a starting point, for EM restarts."""
    beta_j = beta * (1.0 + scale * rng.standard_normal(beta.shape))
    sigma2_j = sigma2 * math.exp(scale * rng.standard_normal())
    link_j = link * (1.0 + scale * rng.standard_normal(link.shape))
    return beta_j, max(sigma2_j, SIGMA2_FLOOR), link_j


def hessian_covariance(loglik_packed, u_hat):
    """Covariance from the negative inverse Hessian of the log-likelihood.

    Returns (cov, ok); ok is False when the negated Hessian is not
    positive definite, in which case cov is None.
    """
    try:
        hess = numerical_hessian(loglik_packed, u_hat)
    except ValueError:
        return None, False
    neg = -hess
    try:
        chol = np.linalg.cholesky(neg)
    except np.linalg.LinAlgError:
        return None, False
    cov = sla.cho_solve((chol, True), np.eye(neg.shape[0]))
    return 0.5 * (cov + cov.T), True


@dataclass
class EMAttempt:
    """Bookkeeping for one EM run within a multi-start fit."""

    beta: np.ndarray = field(default_factory=lambda: np.array([]))
    sigma2: float = math.nan
    link: np.ndarray = field(default_factory=lambda: np.array([]))
    trace: list = field(default_factory=list)
    p_trace: list = field(default_factory=list)
    reached_tol: bool = False
    failed: str = ""

    @property
    def final_loglik(self) -> float:
        return self.trace[-1] if self.trace else -math.inf
