"""Marginal response densities for the false-link mixture component.

The mixture estimators need a plug-in density for responses of wrongly
linked rows.  It is fit once on all file-2 responses (before linkage)
and frozen during EM.  Two flavors: a normal MLE fit, and a Gaussian
kernel density with the 0.9 * min(sd, IQR/1.34) * n^(-1/5) bandwidth
rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .comparison import ValidationError

DENSITY_FLOOR = 1e-300


@dataclass
class MarginalDensity:
    """Fitted marginal density; evaluation is floored at 1e-300."""

    kind: str  # "normal" | "kde"
    mean: float = 0.0
    variance: float = 1.0
    points: np.ndarray | None = None
    bandwidth: float = 0.0

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        yv = np.atleast_1d(y)
        if self.kind == "normal":
            z2 = (yv - self.mean) ** 2 / self.variance
            vals = np.exp(-0.5 * z2) / np.sqrt(2.0 * np.pi * self.variance)
        else:
            z = (yv[:, None] - self.points[None, :]) / self.bandwidth
            kern = np.exp(-0.5 * z**2) / np.sqrt(2.0 * np.pi)
            vals = kern.mean(axis=1) / self.bandwidth
        vals = np.maximum(vals, DENSITY_FLOOR)
        return float(vals[0]) if scalar else vals

    def __call__(self, y):
        return self.pdf(y)


def fit_normal_marginal(y) -> MarginalDensity:
    """Normal fit by maximum likelihood (variance divides by n)."""
    y = np.asarray(y, dtype=float).ravel()
    if np.unique(y).size < 2:
        raise ValidationError("need at least 2 distinct response values")
    var = float(np.var(y))
    if var <= 0.0:
        raise ValidationError("responses are constant; marginal variance is zero")
    return MarginalDensity(kind="normal", mean=float(np.mean(y)), variance=var)


def fit_kde_marginal(y) -> MarginalDensity:
    """Gaussian KDE with Silverman's rule-of-thumb bandwidth."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 5:
        raise ValidationError("KDE needs at least 5 points")
    sd = float(np.std(y))
    q75, q25 = np.percentile(y, [75.0, 25.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    bw = 0.9 * spread * y.size ** (-0.2)
    if bw <= 0.0:
        raise ValidationError("degenerate sample; KDE bandwidth is zero")
    return MarginalDensity(kind="kde", points=y.copy(), bandwidth=bw)


def fit_marginal(y, kind: str = "normal") -> MarginalDensity:
    if kind == "normal":
        return fit_normal_marginal(y)
    if kind == "kde":
        return fit_kde_marginal(y)
    raise ValidationError(f"unknown marginal density kind: {kind!r}")


def eval_density(density: MarginalDensity, y):
    return density.pdf(y)
