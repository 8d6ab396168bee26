"""Bipartite Bayesian record-linkage Gibbs sampler.

States are label vectors Z of length n2: Z[j] = i < n1 links file-2
record j to file-1 record i, and Z[j] = n1 + j leaves j unlinked.  The
one-to-one (bipartite) constraint means no two j share a label below n1.
The sampler alternates a sequential rescan of Z with conjugate Dirichlet
updates of the per-field agreement-level probabilities (mu for linked
pairs, nu for non-linked pairs); the link proportion is integrated out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import lgamma, log

import numpy as np

from .comparison import ComparisonMatrix, ValidationError

PROB_FLOOR = 1e-300

# Use a single combo-code gather per sweep when the joint level space is
# small; fall back to per-field gathers otherwise.
MAX_COMBO_CODES = 65_536


@dataclass
class GibbsConfig:
    iterations: int = 1000
    burn_in: int = 100
    dirichlet_mu: float = 1.0  # prior count for every mu_fl
    dirichlet_nu: float = 1.0  # prior count for every nu_fl
    alpha_pi: float = 1.0
    beta_pi: float = 1.0
    seed: int | None = None

    def validate(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn-in must be < iterations")
        for v in (self.dirichlet_mu, self.dirichlet_nu, self.alpha_pi, self.beta_pi):
            if v <= 0:
                raise ValidationError("prior hyperparameters must be > 0")


@dataclass
class MatchParams:
    """Agreement-level probabilities: mu (linked) and nu (non-linked)."""

    mu: list  # per field, probability vector of length L_f
    nu: list

    def validate(self, tol=1e-12):
        for vecs in (self.mu, self.nu):
            for v in vecs:
                v = np.asarray(v)
                if (v < 0).any() or abs(v.sum() - 1.0) > tol:
                    raise ValidationError("level probabilities must form a simplex")

    @classmethod
    def from_prior(cls, level_counts, config: GibbsConfig, rng):
        mu = [rng.dirichlet(np.full(lf, config.dirichlet_mu)) for lf in level_counts]
        nu = [rng.dirichlet(np.full(lf, config.dirichlet_nu)) for lf in level_counts]
        return cls(mu=mu, nu=nu)


@dataclass
class LinkState:
    """Label vector plus the fixed seed assignments."""

    z: np.ndarray
    n1: int
    seeds: dict = field(default_factory=dict)  # j -> i

    @property
    def n2(self) -> int:
        return self.z.shape[0]

    @property
    def n12(self) -> int:
        return int((self.z < self.n1).sum())

    def validate(self):
        z = self.z
        linked = z[z < self.n1]
        if linked.size and (linked.min() < 0 or np.unique(linked).size != linked.size):
            raise ValidationError("labels below n1 must be unique and in range")
        unlinked_j = np.flatnonzero(z >= self.n1)
        if not np.array_equal(z[unlinked_j], self.n1 + unlinked_j):
            raise ValidationError("no-link labels must equal n1 + j")
        for j, i in self.seeds.items():
            if z[j] != i:
                raise ValidationError(f"seeded record {j} lost its fixed label")
        if self.n12 > min(self.n1, self.n2):
            raise ValidationError("more links than the smaller file allows")


def normalize_seeds(seeds, n1, n2) -> dict:
    """Accept a dict {j: i} or iterable of (i, j) pairs; validate and map j->i."""
    if seeds is None:
        return {}
    if isinstance(seeds, dict):
        pairs = [(i, j) for j, i in seeds.items()]
    else:
        pairs = [(int(i), int(j)) for i, j in seeds]
    out = {}
    used_i = set()
    for i, j in pairs:
        if not (0 <= i < n1 and 0 <= j < n2):
            raise ValidationError(f"seed pair ({i}, {j}) out of range")
        if j in out or i in used_i:
            raise ValidationError("seed pairs must be one-to-one")
        out[j] = i
        used_i.add(i)
    return out


def log_prior_z(n1: int, n2: int, n12: int, alpha_pi=1.0, beta_pi=1.0) -> float:
    """Log prior of a label vector; depends on Z only through n12."""

    def lbeta(a, b):
        return lgamma(a) + lgamma(b) - lgamma(a + b)

    return (
        lgamma(n1 - n12 + 1)
        - lgamma(n1 + 1)
        + lbeta(n12 + alpha_pi, n2 - n12 + beta_pi)
        - lbeta(alpha_pi, beta_pi)
    )


def log_prior_state(state: LinkState, config: GibbsConfig) -> float:
    return log_prior_z(state.n1, state.n2, state.n12, config.alpha_pi, config.beta_pi)


def log_ratio_tables(params: MatchParams) -> list:
    """Per field: table over levels 0..L_f of log(mu/nu); slot 0 (missing) is 0."""
    tables = []
    for mu_f, nu_f in zip(params.mu, params.nu):
        mu_f = np.maximum(np.asarray(mu_f, dtype=float), PROB_FLOOR)
        nu_f = np.maximum(np.asarray(nu_f, dtype=float), PROB_FLOOR)
        tables.append(np.concatenate(([0.0], np.log(mu_f) - np.log(nu_f))))
    return tables


def confidence_measure(gamma_ij, params: MatchParams) -> float:
    """Log-likelihood ratio of one agreement vector; missing fields add 0."""
    total = 0.0
    for lev, mu_f, nu_f in zip(gamma_ij, params.mu, params.nu):
        lev = int(lev)
        if lev == 0:
            continue
        m = max(float(mu_f[lev - 1]), PROB_FLOOR)
        u = max(float(nu_f[lev - 1]), PROB_FLOOR)
        total += log(m) - log(u)
    return total


def confidence_matrix(gamma: ComparisonMatrix, params: MatchParams) -> np.ndarray:
    """(n1, n2) matrix of confidence measures under the given parameters."""
    tables = log_ratio_tables(params)
    out = np.zeros((gamma.n1, gamma.n2))
    for f, table in enumerate(tables):
        out += table[gamma.levels[:, :, f]]
    return out


def confidence_for_pairs(gamma: ComparisonMatrix, params: MatchParams, i_idx, j_idx):
    """Confidence measures for selected (i, j) pairs, vectorized."""
    tables = log_ratio_tables(params)
    out = np.zeros(len(i_idx))
    for f, table in enumerate(tables):
        out += table[gamma.levels[i_idx, j_idx, f]]
    return out


def full_conditional_z_entry(
    j: int,
    z: np.ndarray,
    gamma: ComparisonMatrix,
    params: MatchParams,
    config: GibbsConfig,
) -> np.ndarray:
    """Resampling distribution of Z[j] given all other labels.

    Returns a length n1+1 probability vector: entry q < n1 is the
    probability of linking to file-1 record q, the last entry is the
    probability of no link.  Labels claimed by other records get exactly
    zero.  Computed in log space.
    """
    n1, n2 = gamma.n1, gamma.n2
    others = np.arange(n2) != j
    claimed = np.zeros(n1, dtype=bool)
    linked_labels = z[others]
    linked_labels = linked_labels[linked_labels < n1]
    claimed[linked_labels] = True
    n12m = linked_labels.size

    probs = np.zeros(n1 + 1)
    if n12m >= n1:  # every file-1 record is taken: no link with certainty
        probs[-1] = 1.0
        return probs

    tables = log_ratio_tables(params)
    logw = np.zeros(n1)
    for f, table in enumerate(tables):
        logw += table[gamma.levels[:, j, f]]
    logw[claimed] = -np.inf
    log_wn = log(
        (n1 - n12m) * (n2 - n12m - 1 + config.beta_pi) / (n12m + config.alpha_pi)
    )
    allw = np.concatenate((logw, [log_wn]))
    top = allw.max()
    w = np.exp(allw - top)
    probs[:] = w / w.sum()
    return probs


def init_z(
    gamma: ComparisonMatrix,
    params: MatchParams,
    seeds: dict | None = None,
    threshold: float = 0.0,
) -> np.ndarray:
    """Greedy one-to-one assignment of pairs with confidence above threshold.

    Seeded records are fixed first; remaining candidate pairs are taken
    in order of decreasing confidence while they respect the bipartite
    constraint.
    """
    n1, n2 = gamma.n1, gamma.n2
    seeds = seeds or {}
    z = np.arange(n2) + n1
    claimed = np.zeros(n1, dtype=bool)
    assigned = np.zeros(n2, dtype=bool)
    for j, i in seeds.items():
        z[j] = i
        claimed[i] = True
        assigned[j] = True

    c = confidence_matrix(gamma, params)
    flat = np.argsort(c, axis=None, kind="stable")[::-1]
    for k in flat:
        i, j = divmod(int(k), n2)
        if c[i, j] <= threshold:
            break
        if claimed[i] or assigned[j]:
            continue
        z[j] = i
        claimed[i] = True
        assigned[j] = True
    return z


def link_level_counts(z: np.ndarray, gamma: ComparisonMatrix):
    """Per-field level counts over linked and non-linked pairs.

    Missing comparisons (level 0) are skipped on both sides.
    """
    n1 = gamma.n1
    linked_j = np.flatnonzero(z < n1)
    linked_i = z[linked_j]
    linked, nonlinked = [], []
    for f, lf in enumerate(gamma.level_counts):
        lv = gamma.levels[:, :, f]
        total = np.bincount(lv.ravel(), minlength=lf + 1)[1:]
        if linked_j.size:
            among = np.bincount(lv[linked_i, linked_j], minlength=lf + 1)[1:]
        else:
            among = np.zeros(lf, dtype=np.int64)
        linked.append(among)
        nonlinked.append(total - among)
    return linked, nonlinked


def sample_mu_nu(
    z: np.ndarray,
    gamma: ComparisonMatrix,
    config: GibbsConfig,
    rng,
) -> MatchParams:
    """Conjugate update: Dirichlet draws from prior counts plus level counts."""
    linked, nonlinked = link_level_counts(z, gamma)
    mu = [rng.dirichlet(a + config.dirichlet_mu) for a in linked]
    nu = [rng.dirichlet(b + config.dirichlet_nu) for b in nonlinked]
    return MatchParams(mu=mu, nu=nu)


def _sample_mu_nu_fast(z, gamma, ws, config, rng) -> MatchParams:
    """sample_mu_nu with the all-pairs level histograms precomputed."""
    n1 = gamma.n1
    linked_j = np.flatnonzero(z < n1)
    linked_i = z[linked_j]
    mu, nu = [], []
    for f, lf in enumerate(gamma.level_counts):
        if linked_j.size:
            among = np.bincount(
                ws.levels_t[linked_j, linked_i, f], minlength=lf + 1
            )[1:]
        else:
            among = np.zeros(lf, dtype=int)
        mu.append(rng.dirichlet(among + config.dirichlet_mu))
        nu.append(rng.dirichlet(ws.total_counts[f] - among + config.dirichlet_nu))
    return MatchParams(mu=mu, nu=nu)


@dataclass
class Chain:
    """Post-burn-in draws of (Z, mu, nu), stored densely."""

    n1: int
    n2: int
    iterations: int
    burn_in: int
    level_counts: tuple
    z: np.ndarray  # (M, n2) int32
    mu: list  # per field: (M, L_f) float64
    nu: list
    draw_index: np.ndarray  # absolute 1-based iteration numbers

    def __len__(self) -> int:
        return self.z.shape[0]

    def params(self, k: int) -> MatchParams:
        return MatchParams(
            mu=[m[k] for m in self.mu],
            nu=[u[k] for u in self.nu],
        )

    def state(self, k: int, seeds: dict | None = None) -> LinkState:
        return LinkState(z=self.z[k].copy(), n1=self.n1, seeds=seeds or {})

    def n12(self) -> np.ndarray:
        return (self.z < self.n1).sum(axis=1)

    def save(self, path):
        with open(path, "w") as fh:
            head = {
                "kind": "brl-chain",
                "n1": self.n1,
                "n2": self.n2,
                "iterations": self.iterations,
                "burn_in": self.burn_in,
                "level_counts": list(self.level_counts),
            }
            fh.write(json.dumps(head) + "\n")
            for k in range(len(self)):
                rec = {
                    "m": int(self.draw_index[k]),
                    "z": self.z[k].tolist(),
                    "mu": [m[k].tolist() for m in self.mu],
                    "nu": [u[k].tolist() for u in self.nu],
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "Chain":
        with open(path) as fh:
            head = json.loads(fh.readline())
            if head.get("kind") != "brl-chain":
                raise ValidationError(f"{path} is not a chain file")
            recs = [json.loads(line) for line in fh if line.strip()]
        level_counts = tuple(head["level_counts"])
        m = len(recs)
        z = np.zeros((m, head["n2"]), dtype=np.int32)
        mu = [np.zeros((m, lf)) for lf in level_counts]
        nu = [np.zeros((m, lf)) for lf in level_counts]
        idx = np.zeros(m, dtype=np.int64)
        for k, rec in enumerate(recs):
            idx[k] = rec["m"]
            z[k] = rec["z"]
            for f in range(len(level_counts)):
                mu[f][k] = rec["mu"][f]
                nu[f][k] = rec["nu"][f]
        return cls(
            n1=head["n1"],
            n2=head["n2"],
            iterations=head["iterations"],
            burn_in=head["burn_in"],
            level_counts=level_counts,
            z=z,
            mu=mu,
            nu=nu,
            draw_index=idx,
        )


class _SweepWorkspace:
    """Preallocated buffers and level codes for the sequential rescan."""

    def __init__(self, gamma: ComparisonMatrix):
        self.n1, self.n2 = gamma.n1, gamma.n2
        strides = []
        size = 1
        for lf in gamma.level_counts:
            strides.append(size)
            size *= lf + 1
        self.combo = None
        if size <= MAX_COMBO_CODES:
            codes = np.zeros((self.n2, self.n1), dtype=np.int32)
            for f, s in enumerate(strides):
                codes += s * gamma.levels[:, :, f].T.astype(np.int32)
            decode = np.zeros((size, len(strides)), dtype=np.int64)
            for c in range(size):
                rem = c
                for f, lf in enumerate(gamma.level_counts):
                    decode[c, f] = rem % (lf + 1)
                    rem //= lf + 1
            self.combo = (codes, decode, size)
        self.levels_t = np.ascontiguousarray(gamma.levels.transpose(1, 0, 2))
        self.c_t = np.zeros((self.n2, self.n1))
        self.s_t = np.zeros((self.n2, self.n1))
        self.wbuf = np.zeros(self.n1)
        self.cbuf = np.zeros(self.n1)
        self.total_counts = [
            np.bincount(gamma.levels[:, :, f].ravel(), minlength=lf + 1)[1:]
            for f, lf in enumerate(gamma.level_counts)
        ]

    def refresh(self, tables):
        """Rebuild scaled link weights exp(c - shift) for the new parameters."""
        if self.combo is not None:
            codes, decode, size = self.combo
            lut = np.zeros(size)
            for f in range(decode.shape[1]):
                lut += tables[f][decode[:, f]]
            np.take(lut, codes, out=self.c_t)
        else:
            self.c_t[:] = 0.0
            for f in range(self.levels_t.shape[2]):
                self.c_t += tables[f][self.levels_t[:, :, f]]
        self.shift = np.maximum(self.c_t.max(axis=1), 0.0)
        np.exp(self.c_t - self.shift[:, None], out=self.s_t)


def run_gibbs(
    gamma: ComparisonMatrix,
    config: GibbsConfig | None = None,
    seeds=None,
    rng=None,
) -> Chain:
    """Run the collapsed bipartite linkage sampler and keep post-burn-in draws.

    Each iteration sequentially resamples every non-seeded Z[j] from its
    full conditional (seeded entries stay fixed), then redraws (mu, nu)
    from their Dirichlet full conditionals.  Deterministic given the
    config seed or a supplied generator.
    """
    config = config or GibbsConfig()
    config.validate()
    n1, n2 = gamma.n1, gamma.n2
    seed_map = normalize_seeds(seeds, n1, n2)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    params = MatchParams.from_prior(gamma.level_counts, config, rng)
    z = init_z(gamma, params, seed_map)
    claimed = np.zeros(n1, dtype=bool)
    live = np.ones(n1)
    linked = z[z < n1]
    claimed[linked] = True
    live[linked] = 0.0
    n12 = int(linked.size)

    scan_order = np.array([j for j in range(n2) if j not in seed_map], dtype=np.int64)
    ws = _SweepWorkspace(gamma)

    keep = config.iterations - config.burn_in
    z_out = np.zeros((keep, n2), dtype=np.int32)
    mu_out = [np.zeros((keep, lf)) for lf in gamma.level_counts]
    nu_out = [np.zeros((keep, lf)) for lf in gamma.level_counts]
    idx_out = np.zeros(keep, dtype=np.int64)

    alpha_pi, beta_pi = config.alpha_pi, config.beta_pi
    for it in range(1, config.iterations + 1):
        ws.refresh(log_ratio_tables(params))
        if scan_order.size:
            uniforms = rng.random(scan_order.size)
        for pos, j in enumerate(scan_order):
            old = z[j]
            if old < n1:
                claimed[old] = False
                live[old] = 1.0
                n12 -= 1
            if n12 >= n1:
                z[j] = n1 + j
                continue
            np.multiply(ws.s_t[j], live, out=ws.wbuf)
            wsum = float(ws.wbuf.sum())
            wn = (
                (n1 - n12)
                * (n2 - n12 - 1 + beta_pi)
                / (n12 + alpha_pi)
                * np.exp(-ws.shift[j])
            )
            total = wsum + wn
            if not np.isfinite(total) or total <= 0.0:
                # Pathological scaling; fall back to the exact log-space form.
                probs = full_conditional_z_entry(j, z, gamma, params, config)
                pick = int(rng.choice(n1 + 1, p=probs))
            else:
                u = uniforms[pos] * total
                if u < wn:
                    pick = n1
                else:
                    np.cumsum(ws.wbuf, out=ws.cbuf)
                    pick = int(np.searchsorted(ws.cbuf, u - wn, side="right"))
                    if pick >= n1 or ws.wbuf[pick] == 0.0:
                        pick = int(np.flatnonzero(ws.wbuf)[-1])
            if pick < n1:
                z[j] = pick
                claimed[pick] = True
                live[pick] = 0.0
                n12 += 1
            else:
                z[j] = n1 + j
        params = _sample_mu_nu_fast(z, gamma, ws, config, rng)
        if it > config.burn_in:
            k = it - config.burn_in - 1
            z_out[k] = z
            idx_out[k] = it
            for f in range(len(gamma.level_counts)):
                mu_out[f][k] = params.mu[f]
                nu_out[f][k] = params.nu[f]

    return Chain(
        n1=n1,
        n2=n2,
        iterations=config.iterations,
        burn_in=config.burn_in,
        level_counts=gamma.level_counts,
        z=z_out,
        mu=mu_out,
        nu=nu_out,
        draw_index=idx_out,
    )
