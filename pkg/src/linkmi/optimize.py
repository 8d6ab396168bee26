"""Derivative-free minimization and finite-difference Hessians.

Small self-contained numerics used by the mixture M-steps and by the
Hessian-based variance estimates. Nothing here knows about linkage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OptimizerConfig:
    simplex_scale: float = 0.1
    f_tol: float = 1e-10
    x_tol: float = 1e-8  # relative simplex diameter at termination
    max_evals: int = 20_000

    def validate(self):
        if self.simplex_scale <= 0 or self.f_tol <= 0 or self.max_evals < 1:
            raise ValueError("optimizer config entries must be positive")
        if self.x_tol <= 0:
            raise ValueError("optimizer config entries must be positive")


def nelder_mead(objective, x0, config: OptimizerConfig | None = None):
    """Minimize ``objective`` from ``x0`` with the Nelder-Mead simplex.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Stops when the spread of the simplex function values falls below
    ``f_tol`` and the simplex has geometrically collapsed (guards the
    case of vertices landing symmetric around the optimum), or when the
    evaluation budget is exhausted.  The returned point is never worse
    than ``objective(x0)``.

    Returns ``(x_best, f_best)``.
    """
    cfg = config or OptimizerConfig()
    cfg.validate()
    x0 = np.asarray(x0, dtype=float)
    n = x0.size

    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    # Initial simplex: perturb each coordinate by scale (relative when nonzero).
    verts = [x0]
    for i in range(n):
        step = cfg.simplex_scale * (abs(x0[i]) if x0[i] != 0.0 else 1.0)
        v = x0.copy()
        v[i] += step
        verts.append(v)
    verts = np.array(verts)
    fvals = np.empty(n + 1)
    fvals[0] = f0
    evals = 1
    for i in range(1, n + 1):
        fvals[i] = _probe(objective, verts[i])
        evals += 1

    while evals < cfg.max_evals:
        order = np.argsort(fvals, kind="stable")
        verts, fvals = verts[order], fvals[order]
        if fvals[-1] - fvals[0] < cfg.f_tol:
            # An exactly flat simplex means a ridge beyond float
            # resolution; insisting on geometric collapse there would
            # just burn budget.  Otherwise require the simplex to have
            # shrunk, so that vertices straddling the optimum with equal
            # function values do not stop the search early.
            if fvals[-1] == fvals[0]:
                break
            diam = np.abs(verts[1:] - verts[0]).max() if n else 0.0
            if diam <= cfg.x_tol * (1.0 + np.abs(verts[0]).max()):
                break

        centroid = verts[:-1].mean(axis=0)
        worst = verts[-1]

        xr = centroid + (centroid - worst)        # reflection
        fr = _probe(objective, xr)
        evals += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)   # expansion
            fe = _probe(objective, xe)
            evals += 1
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
            continue

        if fr < fvals[-1]:                        # outside contraction
            xc = centroid + 0.5 * (xr - centroid)
            fc = _probe(objective, xc)
            evals += 1
            if fc <= fr:
                verts[-1], fvals[-1] = xc, fc
                continue
        else:                                     # inside contraction
            xc = centroid - 0.5 * (centroid - worst)
            fc = _probe(objective, xc)
            evals += 1
            if fc < fvals[-1]:
                verts[-1], fvals[-1] = xc, fc
                continue

        # Shrink toward the best vertex.
        for i in range(1, n + 1):
            verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
            fvals[i] = _probe(objective, verts[i])
            evals += 1

    best = int(np.argmin(fvals))
    return verts[best].copy(), float(fvals[best])


def _probe(objective, x):
    f = float(objective(x))
    return f if np.isfinite(f) else np.inf


def hessian_steps(x, rel=1e-5, floor=1e-5):
    """Per-coordinate central-difference steps: max(floor, rel * |x_i|)."""
    x = np.asarray(x, dtype=float)
    return np.maximum(floor, rel * np.abs(x))


def numerical_hessian(f, x, steps=None):
    """Central-difference Hessian of ``f`` at ``x``, symmetrized.

    ``steps`` may be a vector of per-coordinate steps; by default
    ``hessian_steps(x)`` is used.  Raises if any probe is non-finite.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = hessian_steps(x) if steps is None else np.asarray(steps, dtype=float)

    f0 = float(f(x))
    H = np.empty((n, n))

    def probe(v):
        val = float(f(v))
        if not np.isfinite(val):
            raise ValueError("non-finite objective value in Hessian probe")
        return val

    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        H[i, i] = (probe(x + e) - 2.0 * f0 + probe(x - e)) / h[i] ** 2
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h[i]
            ej[j] = h[j]
            val = (
                probe(x + ei + ej)
                - probe(x + ei - ej)
                - probe(x - ei + ej)
                + probe(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
            H[i, j] = val
            H[j, i] = val
    return 0.5 * (H + H.T)
