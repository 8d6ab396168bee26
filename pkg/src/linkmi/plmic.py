"""Mixture-of-regressions EM with a logistic link-quality model (PLMIc).

Each completed dataset is treated as a mix of true links, whose
responses follow the regression, and false links, whose responses follow
the marginal density.  The prior probability that a row is a true link
is a logistic function of its confidence measure.  Rows flagged as seeds
are known links: their latent probability is pinned at one and their
likelihood contribution is the known-link term, so the EM ascent
property holds exactly with or without seeds.
"""

from __future__ import annotations

import logging
import math
import warnings

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
from .optimize import OptimizerConfig, nelder_mead

log = logging.getLogger(__name__)


def logistic_h(c, eta):
    """Prior true-link probability 1 / (1 + exp(-(eta0 + eta1 c)))."""
    t = np.asarray(eta[0] + eta[1] * np.asarray(c, dtype=float))
    return np.exp(-np.logaddexp(0.0, -t))


def _link_logterms(c, eta):
    t = eta[0] + eta[1] * c
    return -np.logaddexp(0.0, -t), -np.logaddexp(0.0, t)  # log h, log(1-h)


def _row_logliks(logphi, log_h, log_1mh, log_py, seeds):
    mix = np.logaddexp(logphi + log_h, log_py + log_1mh)
    return np.where(seeds, logphi + log_h, mix)


def observed_loglik_plmic(data, beta, sigma2, eta, p_y) -> float:
    """Observed-data log-likelihood of (beta, sigma2, eta).

    Non-seed rows contribute log(phi h + p_Y (1 - h)); seed rows are
    known links and contribute log(phi h).
    """
    logphi = normal_logpdf(data.y, data.design_matrix() @ np.asarray(beta), sigma2)
    log_h, log_1mh = _link_logterms(data.c, eta)
    log_py = np.log(p_y.pdf(data.y))
    return float(_row_logliks(logphi, log_h, log_1mh, log_py, data.is_seed).sum())


def e_step_plmic(data, beta, sigma2, eta, p_y, clamp=1e-12) -> np.ndarray:
    """Posterior true-link probabilities at the current parameters."""
    logphi = normal_logpdf(data.y, data.design_matrix() @ np.asarray(beta), sigma2)
    log_h, log_1mh = _link_logterms(data.c, eta)
    log_py = np.log(p_y.pdf(data.y))
    return _estep(logphi, log_h, log_1mh, log_py, data.is_seed, clamp)


def _estep(logphi, log_h, log_1mh, log_py, seeds, clamp):
    t = (logphi + log_h) - (log_py + log_1mh)
    p = np.exp(-np.logaddexp(0.0, -t))  # expit in log space
    p = np.clip(p, clamp, 1.0 - clamp)
    p[seeds] = 1.0
    return p


def q_plmic(data, beta, sigma2, eta, p_tilde, p_y) -> float:
    """Expected complete-data log-likelihood under the given latent probs."""
    logphi = normal_logpdf(data.y, data.design_matrix() @ np.asarray(beta), sigma2)
    log_h, log_1mh = _link_logterms(data.c, eta)
    log_py = np.log(p_y.pdf(data.y))
    q = p_tilde * (log_h + logphi)
    free = ~data.is_seed  # seeds have no false-link branch
    q[free] += (1.0 - p_tilde[free]) * (log_1mh[free] + log_py[free])
    return float(q.sum())


def _link_objective(c, p_tilde, seeds):
    w1 = p_tilde
    w0 = np.where(seeds, 0.0, 1.0 - p_tilde)

    def neg_q(eta):
        log_h, log_1mh = _link_logterms(c, eta)
        return -float(w1 @ log_h + w0 @ log_1mh)

    return neg_q


def m_step_plmic(
    data,
    p_tilde,
    p_y,
    beta_old,
    sigma2_old,
    eta_old,
    link_max_evals: int = 200,
):
    """One M-step: weighted least squares for the regression, a simplex
    search for the link model.  p_y enters neither subproblem (its term
    is constant in the parameters) but is kept for interface symmetry.
    """
    del p_y, beta_old, sigma2_old
    design = data.design_matrix()
    k = design.shape[1]
    beta, sigma2 = weighted_least_squares(design, data.y, p_tilde, 2.0 * k)
    eta = maximize_link_model(data.c, p_tilde, data.is_seed, eta_old, link_max_evals)
    return beta, sigma2, eta


def maximize_link_model(c, p_tilde, seeds, eta_start, max_evals=200):
    neg_q = _link_objective(c, p_tilde, seeds)
    cfg = OptimizerConfig(simplex_scale=0.25, f_tol=1e-11, max_evals=max_evals)
    eta, _ = nelder_mead(neg_q, np.asarray(eta_start, dtype=float), cfg)
    return eta


def fit_plmic(
    data,
    p_y,
    config: EMConfig | None = None,
    init=None,
    fix_eta=None,
    rng=None,
    collect_p_trace: bool = False,
) -> MixtureFit:
    """EM fit of the confidence-measure mixture on one completed dataset.

    ``init`` optionally overrides the starting (beta, sigma2).  With
    ``fix_eta`` the link model is frozen (used to force h to a constant)
    and excluded from the variance computation.  Multi-start: the first
    run starts at the configured initialization, later runs jitter it;
    the run with the best final observed log-likelihood wins.
    """
    config = config or EMConfig()
    config.validate()
    design = data.design_matrix()
    k = design.shape[1]
    if data.n <= k + 1:
        raise ValidationError("dataset too small for the mixture fit")
    if rng is None:
        rng = np.random.default_rng(0)

    y, c, seeds = data.y, data.c, data.is_seed
    log_py = np.log(p_y.pdf(y))
    beta0, sigma20 = init if init is not None else init_regression(data, config)
    beta0 = np.asarray(beta0, dtype=float)
    if fix_eta is None and data.n_seeds == data.n:
        fix_eta = (0.0, 1.0)  # no uncertain rows: the link model is unidentified
    eta0 = np.asarray(fix_eta if fix_eta is not None else (0.0, 1.0), dtype=float)

    attempts = []
    for attempt_idx in range(config.restarts):
        if attempt_idx == 0:
            beta, sigma2, eta = beta0.copy(), sigma20, eta0.copy()
        else:
            beta, sigma2, eta = jitter(rng, beta0, sigma20, eta0)
            if fix_eta is not None:
                eta = eta0.copy()
        att = EMAttempt(beta=beta, sigma2=sigma2, link=eta)
        attempts.append(att)

        log_h, log_1mh = _link_logterms(c, eta)
        logphi = normal_logpdf(y, design @ beta, sigma2)
        ll = float(_row_logliks(logphi, log_h, log_1mh, log_py, seeds).sum())
        att.trace.append(ll)
        for _ in range(config.max_iter):
            p = _estep(logphi, log_h, log_1mh, log_py, seeds, config.clamp)
            if collect_p_trace:
                att.p_trace.append(p.copy())
            try:
                beta, sigma2 = weighted_least_squares(design, y, p, 2.0 * k)
            except ValidationError as err:
                att.failed = str(err)
                break
            if fix_eta is None:
                eta = maximize_link_model(c, p, seeds, eta, config.link_max_evals)
                log_h, log_1mh = _link_logterms(c, eta)
            logphi = normal_logpdf(y, design @ beta, sigma2)
            ll_new = float(
                _row_logliks(logphi, log_h, log_1mh, log_py, seeds).sum()
            )
            att.trace.append(ll_new)
            att.beta, att.sigma2, att.link = beta, sigma2, eta
            if abs(ll_new - ll) <= config.tol * (abs(ll) + 1.0):
                att.reached_tol = True
                break
            ll = ll_new
        if fix_eta is None and att.link.size and att.link[1] < 0:
            # the link model is assumed monotone increasing in the
            # confidence measure; a negative slope breaks that reading
            warnings.warn(
                f"fitted link slope is negative ({att.link[1]:.4f}); "
                "the confidence measure may be anti-informative",
                stacklevel=2,
            )

    best = max(attempts, key=lambda a: a.final_loglik)
    beta, sigma2, eta = best.beta, best.sigma2, best.link
    converged = best.reached_tol and not best.failed

    logphi = normal_logpdf(y, design @ beta, sigma2)
    log_h, log_1mh = _link_logterms(c, eta)
    p_final = _estep(logphi, log_h, log_1mh, log_py, seeds, config.clamp)

    cov, var_beta, ok = _plmic_covariance(
        design, y, c, seeds, log_py, beta, sigma2, eta, fix_eta
    )
    return MixtureFit(
        beta=beta,
        sigma2=sigma2,
        link_params=eta,
        p_tilde=p_final,
        loglik_trace=np.asarray(best.trace),
        cov=cov,
        var_beta=var_beta,
        converged=converged and ok,
        n_iter=len(best.trace) - 1,
        message=best.failed or ("" if ok else "non-positive-definite information"),
        p_trace=np.asarray(best.p_trace) if collect_p_trace else None,
    )


def _plmic_covariance(design, y, c, seeds, log_py, beta, sigma2, eta, fix_eta):
    """Variance from the numerical Hessian, with sigma2 on the log scale.

    A logistic link near complete separation leaves (numerically) no
    curvature in the eta directions; the full information matrix then
    fails its Cholesky factorization even though the regression block is
    perfectly regular.  In that event the covariance falls back to the
    (beta, log sigma2) block with the link model frozen, which is the
    correct limit since the cross terms vanish with h(1-h).  Only a
    failure of the regression block itself marks the fit non-converged.
    """
    k = design.shape[1]

    def packed_reduced_factory(e):
        lh, l1mh = _link_logterms(c, e)

        def packed(u):
            b, ls = u[:k], u[k]
            logphi = normal_logpdf(y, design @ b, math.exp(ls))
            return float(_row_logliks(logphi, lh, l1mh, log_py, seeds).sum())

        return packed

    if fix_eta is None:
        h = logistic_h(c, eta)
        saturated = np.minimum(h, 1.0 - h).max() < 1e-4
        if not saturated:
            u_hat = np.concatenate([beta, [math.log(sigma2)], eta])

            def packed_full(u):
                b, ls, e = u[:k], u[k], u[k + 1 :]
                logphi = normal_logpdf(y, design @ b, math.exp(ls))
                lh, l1mh = _link_logterms(c, e)
                return float(_row_logliks(logphi, lh, l1mh, log_py, seeds).sum())

            cov, ok = hessian_covariance(packed_full, u_hat)
            if ok:
                return cov, np.diag(cov)[:k].copy(), True
        fix_eta = tuple(eta)

    u_hat = np.concatenate([beta, [math.log(sigma2)]])
    cov, ok = hessian_covariance(packed_reduced_factory(fix_eta), u_hat)
    if not ok:
        return None, None, False
    return cov, np.diag(cov)[:k].copy(), True
