"""Mixture-of-regressions EM driven by seeds alone (PLMI).

No confidence measures: every uncertain row shares one prior true-link
probability delta, and the seed rows (known links, ordered first in the
dataset) anchor the regression.  delta has a closed-form M-step, so the
only numerical optimization left is the variance Hessian.
"""

from __future__ import annotations

import math

import numpy as np

from .comparison import ValidationError
from .emcore import (
    EMAttempt,
    EMConfig,
    MixtureFit,
    hessian_covariance,
    init_regression,
    jitter,
    normal_logpdf,
    weighted_least_squares,
)

DELTA_EPS = 1e-12

# Below this, delta(1 - delta) leaves too little curvature for central
# differences to resolve: treat the solution as sitting on the boundary.
BOUNDARY_TOL = 1e-4


def observed_loglik_plmi(data, beta, sigma2, delta, p_y) -> float:
    """n_s log(delta) + seed regression terms + non-seed mixture terms."""
    if data.n_seeds < 1:
        raise ValidationError("PLMI requires at least one seed")
    logphi = normal_logpdf(data.y, data.design_matrix() @ np.asarray(beta), sigma2)
    log_py = np.log(p_y.pdf(data.y))
    return _obs_loglik(logphi, log_py, data.is_seed, delta)


def _obs_loglik(logphi, log_py, seeds, delta):
    free = ~seeds
    ns = int(seeds.sum())
    mix = np.logaddexp(
        logphi[free] + math.log(delta), log_py[free] + math.log1p(-delta)
    )
    return float(ns * math.log(delta) + logphi[seeds].sum() + mix.sum())


def e_step_plmi(data, beta, sigma2, delta, p_y, clamp=1e-12) -> np.ndarray:
    logphi = normal_logpdf(data.y, data.design_matrix() @ np.asarray(beta), sigma2)
    log_py = np.log(p_y.pdf(data.y))
    return _estep(logphi, log_py, data.is_seed, delta, clamp)


def _estep(logphi, log_py, seeds, delta, clamp):
    t = (logphi + math.log(delta)) - (log_py + math.log1p(-delta))
    p = np.exp(-np.logaddexp(0.0, -t))
    p = np.clip(p, clamp, 1.0 - clamp)
    p[seeds] = 1.0
    return p


def m_step_plmi(data, p_tilde):
    """WLS update for the regression plus the closed-form delta update.

    delta_new = (n_s + sum of non-seed latent probabilities) / n, i.e.
    the mean of p_tilde with seeds counted as one.
    """
    design = data.design_matrix()
    k = design.shape[1]
    beta, sigma2 = weighted_least_squares(design, data.y, p_tilde, 2.0 * k)
    delta = _delta_update(p_tilde, data.is_seed)
    return beta, sigma2, delta


def _delta_update(p_tilde, seeds):
    ns = int(seeds.sum())
    total = ns + float(p_tilde[~seeds].sum())
    return float(np.clip(total / p_tilde.shape[0], DELTA_EPS, 1.0 - DELTA_EPS))


def fit_plmi(
    data,
    p_y,
    config: EMConfig | None = None,
    init=None,
    rng=None,
    collect_p_trace: bool = False,
) -> MixtureFit:
    """EM fit of the seeded mixture on one completed dataset.

    Initialization: seed-only OLS for the regression (falling back to
    all rows when the seeds cannot identify it) and delta = 0.9.
    """
    config = config or EMConfig()
    config.validate()
    if data.n_seeds < 1:
        raise ValidationError("PLMI requires at least one seed")
    design = data.design_matrix()
    k = design.shape[1]
    if data.n <= k + 1:
        raise ValidationError("dataset too small for the mixture fit")
    if rng is None:
        rng = np.random.default_rng(0)

    y, seeds = data.y, data.is_seed
    log_py = np.log(p_y.pdf(y))
    beta0, sigma20 = init if init is not None else init_regression(data, config)
    beta0 = np.asarray(beta0, dtype=float)
    delta0 = 0.9

    attempts = []
    for attempt_idx in range(config.restarts):
        if attempt_idx == 0:
            beta, sigma2, delta = beta0.copy(), sigma20, delta0
        else:
            beta, sigma2, dvec = jitter(rng, beta0, sigma20, np.array([delta0]))
            delta = float(np.clip(dvec[0], DELTA_EPS, 1.0 - DELTA_EPS))
        att = EMAttempt(beta=beta, sigma2=sigma2, link=np.array([delta]))
        attempts.append(att)

        logphi = normal_logpdf(y, design @ beta, sigma2)
        ll = _obs_loglik(logphi, log_py, seeds, delta)
        att.trace.append(ll)
        for _ in range(config.max_iter):
            p = _estep(logphi, log_py, seeds, delta, config.clamp)
            if collect_p_trace:
                att.p_trace.append(p.copy())
            try:
                beta, sigma2 = weighted_least_squares(design, y, p, 2.0 * k)
            except ValidationError as err:
                att.failed = str(err)
                break
            delta = _delta_update(p, seeds)
            logphi = normal_logpdf(y, design @ beta, sigma2)
            ll_new = _obs_loglik(logphi, log_py, seeds, delta)
            att.trace.append(ll_new)
            att.beta, att.sigma2, att.link = beta, sigma2, np.array([delta])
            if abs(ll_new - ll) <= config.tol * (abs(ll) + 1.0):
                att.reached_tol = True
                break
            ll = ll_new

    best = max(attempts, key=lambda a: a.final_loglik)
    beta, sigma2, delta = best.beta, best.sigma2, float(best.link[0])
    converged = best.reached_tol and not best.failed

    logphi = normal_logpdf(y, design @ beta, sigma2)
    p_final = _estep(logphi, log_py, seeds, delta, config.clamp)

    # A delta at (or numerically against) the boundary is a boundary MLE:
    # that direction is curvature-free noise, so it is excluded from the
    # Hessian.  The regression block is unaffected because the cross
    # terms vanish as delta(1 - delta) -> 0.
    interior = delta * (1.0 - delta) > BOUNDARY_TOL
    cov, var_beta, ok = _plmi_covariance(
        design, y, seeds, log_py, beta, sigma2, delta,
        include_delta=interior and data.n_seeds < data.n,
    )
    return MixtureFit(
        beta=beta,
        sigma2=sigma2,
        link_params=np.array([delta]),
        p_tilde=p_final,
        loglik_trace=np.asarray(best.trace),
        cov=cov,
        var_beta=var_beta,
        converged=converged and ok,
        n_iter=len(best.trace) - 1,
        message=best.failed or ("" if ok else "non-positive-definite information"),
        p_trace=np.asarray(best.p_trace) if collect_p_trace else None,
    )


def _plmi_covariance(design, y, seeds, log_py, beta, sigma2, delta, include_delta=True):
    """Hessian-based covariance over (beta, log sigma2[, logit delta]).

    When the full information matrix fails its Cholesky factorization
    because the delta direction is (numerically) curvature-free, the
    covariance falls back to the regression block with delta frozen;
    the cross terms vanish with delta(1 - delta), so this is the
    correct limit.
    """
    k = design.shape[1]
    if include_delta:
        u_hat = np.concatenate(
            [beta, [math.log(sigma2)], [math.log(delta) - math.log1p(-delta)]]
        )

        def packed_full(u):
            b, ls, ld = u[:k], u[k], u[k + 1]
            d = 1.0 / (1.0 + math.exp(-ld))
            logphi = normal_logpdf(y, design @ b, math.exp(ls))
            return _obs_loglik(logphi, log_py, seeds, d)

        cov, ok = hessian_covariance(packed_full, u_hat)
        if ok:
            return cov, np.diag(cov)[:k].copy(), True

    u_hat = np.concatenate([beta, [math.log(sigma2)]])

    def packed_reduced(u):
        b, ls = u[:k], u[k]
        logphi = normal_logpdf(y, design @ b, math.exp(ls))
        return _obs_loglik(logphi, log_py, seeds, delta)

    cov, ok = hessian_covariance(packed_reduced, u_hat)
    if not ok:
        return None, None, False
    return cov, np.diag(cov)[:k].copy(), True
