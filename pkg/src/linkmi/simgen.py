"""Synthetic paired files with known link structure.

Builds two files that share a controllable fraction of entities, injects
a fixed number of field errors into each overlapping record's second
copy, and attaches the regression study variables.  Entities carry four
linking fields (first name, last name, age, occupation) drawn from
bundled frequency tables, so common values create genuine linkage
ambiguity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .comparison import FieldSpec, RecordFile, ValidationError

FIELDS = ("first_name", "last_name", "age", "occupation")

ALPHABET = "abcdefghijklmnopqrstuvwxyz"

# Visually confusable substrings (both directions are applied).
OCR_CONFUSIONS = [
    ("0", "o"),
    ("1", "l"),
    ("2", "z"),
    ("5", "s"),
    ("8", "b"),
    ("m", "rn"),
    ("w", "vv"),
    ("d", "cl"),
    ("g", "q"),
    ("u", "v"),
]

AGE_RANGE = (18, 89)


def default_field_specs() -> list[FieldSpec]:
    """Name fields binned by edit distance; age and occupation exact."""
    name_bins = (0.25, 0.5, 1.0)
    return [
        FieldSpec("first_name", "levenshtein", name_bins),
        FieldSpec("last_name", "levenshtein", name_bins),
        FieldSpec("age", "exact"),
        FieldSpec("occupation", "exact"),
    ]


def load_frequency_table(name: str):
    """Bundled (values, probabilities) for one linking field."""
    path = resources.files("linkmi.data").joinpath(f"{name}.csv")
    values, counts = [], []
    with path.open() as fh:
        for row in csv.DictReader(fh):
            values.append(row["value"])
            counts.append(float(row["count"]))
    probs = np.asarray(counts)
    return values, probs / probs.sum()


def age_distribution():
    """Ages with a peak around the working years; the concentration is
    part of what makes distinct entities collide on linking fields."""
    ages = np.arange(AGE_RANGE[0], AGE_RANGE[1] + 1)
    w = np.exp(-0.5 * ((ages - 42.0) / 12.0) ** 2) + 0.08
    return [str(a) for a in ages], w / w.sum()


@dataclass
class ScenarioConfig:
    n1: int = 500
    n2: int = 500
    overlap: float = 0.5
    n_error: int = 3  # erroneous fields per overlapping record; L=1, H=3
    beta: tuple = (3.0, 3.0)  # intercept first
    r2: float | None = 0.9  # either a target R^2 ...
    sigma2: float | None = None  # ... or an explicit error variance
    covariates: str = "normal"  # "normal" | "normal_bernoulli"
    nonlink_shift: float = 0.0  # mean shift of x for non-link records
    seed_fraction: float = 0.0
    seed: int | None = None

    @property
    def n12(self) -> int:
        return int(round(self.overlap * self.n2))

    @property
    def n_covariates(self) -> int:
        return len(self.beta) - 1

    def validate(self):
        if not 0.0 < self.overlap <= 1.0:
            raise ValidationError("overlap must lie in (0, 1]")
        if self.n12 > min(self.n1, self.n2):
            raise ValidationError("overlap implies more links than records")
        if not 0 <= self.n_error <= len(FIELDS):
            raise ValidationError("n_error must lie in 0..F")
        if len(self.beta) < 2:
            raise ValidationError("need an intercept and at least one slope")
        if self.covariates not in ("normal", "normal_bernoulli"):
            raise ValidationError(f"unknown covariate spec: {self.covariates!r}")
        if self.covariates == "normal_bernoulli" and self.n_covariates != 2:
            raise ValidationError("normal_bernoulli expects exactly 2 covariates")
        if (self.r2 is None) == (self.sigma2 is None):
            raise ValidationError("give exactly one of r2 or sigma2")
        if not 0.0 <= self.seed_fraction <= 1.0:
            raise ValidationError("seed fraction must lie in [0, 1]")

    def error_variance(self) -> float:
        if self.sigma2 is not None:
            if self.sigma2 <= 0:
                raise ValidationError("sigma2 must be positive")
            return float(self.sigma2)
        return sigma_for_r2(self.beta, self.covariates, self.r2)


@dataclass
class GroundTruth:
    pairs: np.ndarray  # (n12, 2) of (i, j)
    corrupted_fields: list  # per pair, tuple of corrupted field indices
    seeds: np.ndarray  # (n_s, 2) subset of pairs

    def pair_set(self) -> set:
        return {(int(i), int(j)) for i, j in self.pairs}


def parse_error_level(value) -> int:
    """Accept 'L'/'H' shorthands or an explicit integer."""
    if isinstance(value, str):
        code = value.strip().upper()
        if code == "L":
            return 1
        if code == "H":
            return 3
        return int(code)
    return int(value)


def signal_variance(beta, covariates: str) -> float:
    """Analytic Var(x' beta) for the linked-record covariate law."""
    slopes = np.asarray(beta[1:], dtype=float)
    if covariates == "normal":
        return float(slopes @ slopes)
    return float(slopes[0] ** 2 + 0.25 * slopes[1] ** 2)


def sigma_for_r2(beta, covariates: str, r2: float) -> float:
    """Error variance giving the target coefficient of determination."""
    if not 0.0 < r2 < 1.0:
        raise ValidationError("target R^2 must lie in (0, 1)")
    sv = signal_variance(beta, covariates)
    if sv <= 0.0:
        raise ValidationError("all slopes are zero; the target R^2 is unattainable")
    return sv * (1.0 - r2) / r2


def corrupt_string(value: str, rng) -> str:
    """One random typo/OCR-style perturbation; always changes the string."""
    if not value:
        raise ValidationError("cannot corrupt an empty string")
    for _ in range(100):
        op = rng.integers(0, 5)
        if op == 0 or (op == 1 and len(value) == 1):  # substitution
            pos = int(rng.integers(0, len(value)))
            choices = [ch for ch in ALPHABET if ch != value[pos]]
            out = value[:pos] + choices[int(rng.integers(0, len(choices)))] + value[pos + 1 :]
        elif op == 1:  # deletion
            pos = int(rng.integers(0, len(value)))
            out = value[:pos] + value[pos + 1 :]
        elif op == 2:  # insertion
            pos = int(rng.integers(0, len(value) + 1))
            out = value[:pos] + ALPHABET[int(rng.integers(0, 26))] + value[pos:]
        elif op == 3:  # adjacent transposition
            if len(value) < 2:
                continue
            pos = int(rng.integers(0, len(value) - 1))
            out = value[:pos] + value[pos + 1] + value[pos] + value[pos + 2 :]
        else:  # OCR confusion, if any substring applies
            hits = []
            for a, b in OCR_CONFUSIONS:
                if a in value:
                    hits.append((a, b))
                if b in value:
                    hits.append((b, a))
            if not hits:
                continue
            a, b = hits[int(rng.integers(0, len(hits)))]
            pos = value.index(a)
            out = value[:pos] + b + value[pos + len(a) :]
        if out != value:
            return out
    raise ValidationError(f"could not corrupt value {value!r}")


def corrupt_age(value: str, rng) -> str:
    """Shift an integer age by 1..3 years in a random direction."""
    age = int(value)
    shift = int(rng.integers(1, 4)) * (1 if rng.random() < 0.5 else -1)
    return str(max(0, age + shift))


def corrupt_field(field_idx: int, value: str, rng) -> str:
    if FIELDS[field_idx] == "age":
        for _ in range(100):
            out = corrupt_age(value, rng)
            if out != value:
                return out
        raise ValidationError(f"could not corrupt age {value!r}")
    return corrupt_string(value, rng)


def _sample_entities(count: int, rng, tables):
    """Distinct field tuples, drawn value-by-value from the tables."""
    entities = []
    seen = set()
    for _ in range(60):
        need = count - len(entities)
        if need <= 0:
            break
        batch = max(2 * need, 64)
        cols = []
        for values, probs in tables:
            idx = rng.choice(len(values), size=batch, p=probs)
            cols.append([values[i] for i in idx])
        for row in zip(*cols):
            if row not in seen:
                seen.add(row)
                entities.append(row)
                if len(entities) == count:
                    break
    if len(entities) < count:
        raise ValidationError(
            "frequency tables cannot supply enough distinct entities"
        )
    return entities


def _draw_covariates(rng, n, spec: str, shift: float):
    if spec == "normal":
        return rng.normal(shift, 1.0, size=(n, 1))
    x1 = rng.normal(shift, 1.0, size=n)
    x2 = rng.binomial(1, 0.5, size=n).astype(float)
    return np.column_stack([x1, x2])


def generate_scenario(config: ScenarioConfig, tables=None):
    """Draw one (file1, file2, truth) triple.

    Overlapping entities appear once per file, with exactly ``n_error``
    linking fields corrupted in the file-2 copy; the remaining records
    are unique to their file.  File-1 records without a true link draw
    their observable covariates from the shifted non-link law, which is
    what makes false links costly; file-2 non-link responses use a
    private draw from the base covariate law (marginally, y stays
    homogeneous across link status).  Fully deterministic given
    ``config.seed``.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    if tables is None:
        tables = [
            load_frequency_table("first_names"),
            load_frequency_table("last_names"),
            age_distribution(),
            load_frequency_table("occupations"),
        ]

    n1, n2, n12 = config.n1, config.n2, config.n12
    beta = np.asarray(config.beta, dtype=float)
    sigma = np.sqrt(config.error_variance())
    entities = _sample_entities(n1 + n2 - n12, rng, tables)

    # Entities 0..n12-1 live in both files; then file-1-only, file-2-only.
    pos1 = rng.permutation(n1)
    pos2 = rng.permutation(n2)
    linking1 = [None] * n1
    for k in range(n1):
        linking1[pos1[k]] = list(entities[k])

    corrupted_fields = []
    linking2 = [None] * n2
    for k in range(n2):
        if k < n12:
            row = list(entities[k])
            fields = sorted(
                int(f) for f in rng.choice(len(FIELDS), config.n_error, replace=False)
            )
            for f in fields:
                row[f] = corrupt_field(f, row[f], rng)
            corrupted_fields.append(tuple(fields))
        else:
            row = list(entities[n1 + (k - n12)])
        linking2[pos2[k]] = row

    # Covariates: linked file-1 records follow the base law, the rest the
    # (possibly shifted) non-link law.
    x = np.empty((n1, config.n_covariates))
    link_rows1 = pos1[:n12]
    x[link_rows1] = _draw_covariates(rng, n12, config.covariates, 0.0)
    other1 = pos1[n12:]
    x[other1] = _draw_covariates(rng, n1 - n12, config.covariates, config.nonlink_shift)

    y = np.empty(n2)
    eps = rng.normal(0.0, sigma, size=n2)
    link_rows2 = pos2[:n12]
    y[link_rows2] = beta[0] + x[link_rows1] @ beta[1:] + eps[:n12]
    other2 = pos2[n12:]
    x_hidden = _draw_covariates(rng, n2 - n12, config.covariates, 0.0)
    y[other2] = beta[0] + x_hidden @ beta[1:] + eps[n12:]

    pairs = np.column_stack([link_rows1, link_rows2]).astype(np.int64)
    n_s = int(round(config.seed_fraction * n2))
    n_s = min(n_s, n12)
    if n_s > 0:
        chosen = rng.choice(n12, size=n_s, replace=False)
        seeds = pairs[np.sort(chosen)]
    else:
        seeds = np.zeros((0, 2), dtype=np.int64)

    file1 = RecordFile(linking=linking1, x=x, field_names=list(FIELDS))
    file2 = RecordFile(linking=linking2, y=y, field_names=list(FIELDS))
    truth = GroundTruth(
        pairs=pairs, corrupted_fields=corrupted_fields, seeds=seeds
    )
    return file1, file2, truth
