"""Agreement vectors between two record files.

Every pair of records (one per file) is summarized by a vector of ordinal
agreement levels, one per linking field.  Levels run 1..L_f with larger
values meaning greater similarity; 0 marks a missing comparison (either
side of the pair lacks the field value).
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

MISSING_LEVEL = 0

# Guard against materializing an absurd pair tensor by accident.
DEFAULT_MAX_CELLS = 200_000_000


class ValidationError(ValueError):
    """Bad inputs or configuration detected before any heavy work."""


@dataclass
class RecordFile:
    """One duplicate-free file: linking fields plus optional study columns.

    ``linking`` holds one row per record; entries are strings or None for
    missing.  ``x`` is an (n, p) covariate matrix (file 1 side) and ``y``
    an (n,) response vector (file 2 side); either may be None.  Record
    ids are implicit row positions 0..n-1.
    """

    linking: list
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    field_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.x is not None:
            self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
            if self.x.shape[0] != len(self.linking):
                raise ValidationError("covariate rows do not match record count")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float).ravel()
            if self.y.shape[0] != len(self.linking):
                raise ValidationError("response length does not match record count")
        widths = {len(row) for row in self.linking}
        if len(widths) > 1:
            raise ValidationError("records disagree on the number of linking fields")

    @property
    def n(self) -> int:
        return len(self.linking)

    @property
    def n_fields(self) -> int:
        return len(self.linking[0]) if self.linking else 0


@dataclass(frozen=True)
class FieldSpec:
    """How one linking field is compared and discretized.

    kind 'exact' gives two levels (2 = equal, 1 = unequal).  kind
    'levenshtein' bins the normalized edit distance: distance 0 maps to
    the top level L_f = len(thresholds) + 1, and each bin
    (t_{b-1}, t_b] maps to level L_f - 1 - b counting bins from 0.
    """

    name: str
    kind: str = "exact"
    thresholds: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exact", "levenshtein"):
            raise ValidationError(f"unknown comparator kind: {self.kind!r}")
        if self.kind == "exact":
            if self.thresholds:
                raise ValidationError("exact comparator takes no thresholds")
        else:
            ts = tuple(float(t) for t in self.thresholds)
            if not ts:
                raise ValidationError("levenshtein comparator needs thresholds")
            if any(not (0.0 < t <= 1.0) for t in ts):
                raise ValidationError("thresholds must lie in (0, 1]")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValidationError("thresholds must be strictly increasing")
            object.__setattr__(self, "thresholds", ts)

    @property
    def levels(self) -> int:
        return 2 if self.kind == "exact" else len(self.thresholds) + 1


@dataclass
class ComparisonMatrix:
    """Dense level tensor for all n1 x n2 pairs over F fields.

    ``levels[i, j, f]`` is the agreement level of pair (i, j) on field f,
    in 1..L_f, or 0 when the comparison is missing.
    """

    levels: np.ndarray  # (n1, n2, F) int8
    level_counts: tuple  # L_f per field

    @property
    def n1(self) -> int:
        return self.levels.shape[0]

    @property
    def n2(self) -> int:
        return self.levels.shape[1]

    @property
    def n_fields(self) -> int:
        return self.levels.shape[2]

    @property
    def missing_mask(self) -> np.ndarray:
        return self.levels == MISSING_LEVEL

    def validate(self):
        for f, lf in enumerate(self.level_counts):
            lv = self.levels[:, :, f]
            if lv.min() < 0 or lv.max() > lf:
                raise ValidationError(f"levels out of range for field {f}")


def normalized_levenshtein(a: str, b: str) -> float:
    """Edit distance divided by the length of the longer string.

    0.0 for equal strings (including two empty ones), 1.0 when every
    position must change.  Operates on Unicode code points.
    """
    if a == b:
        return 0.0
    la, lb = len(a), len(b)
    if la == 0:
        return 1.0
    if lb == 0:
        return 1.0
    if la < lb:  # keep the inner row short
        a, b, la, lb = b, a, lb, la
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        ca = a[i - 1]
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[lb] / la


def distance_to_level(dist: float, spec: FieldSpec) -> int:
    """Bin a normalized distance into an ordinal level (large = similar)."""
    if dist <= 0.0:
        return spec.levels
    idx = bisect_left(spec.thresholds, dist)
    return max(1, spec.levels - 1 - idx)


def compare_values(va, vb, spec: FieldSpec) -> int:
    if va is None or vb is None:
        return MISSING_LEVEL
    if spec.kind == "exact":
        return 2 if va == vb else 1
    return distance_to_level(normalized_levenshtein(va, vb), spec)


def compare_pair(rec_a, rec_b, specs) -> np.ndarray:
    """Agreement vector for one record pair; 0 marks missing fields."""
    if len(rec_a) != len(specs) or len(rec_b) != len(specs):
        raise ValidationError("record width does not match the field specs")
    return np.array(
        [compare_values(va, vb, s) for va, vb, s in zip(rec_a, rec_b, specs)],
        dtype=np.int8,
    )


def build_comparison_matrix(
    file1: RecordFile,
    file2: RecordFile,
    specs,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> ComparisonMatrix:
    """Materialize agreement levels for every pair of records.

    Distances for string comparators are computed once per unique value
    pair, then gathered; this is what makes 500x500 files cheap even
    though no blocking is done.
    """
    specs = list(specs)
    if file1.n_fields != len(specs) or file2.n_fields != len(specs):
        raise ValidationError("files and field specs disagree on F")
    n1, n2, nf = file1.n, file2.n, len(specs)
    if n1 * n2 * nf > max_cells:
        raise ValidationError(
            f"comparison tensor would hold {n1 * n2 * nf} cells; "
            f"cap is {max_cells}"
        )

    levels = np.zeros((n1, n2, nf), dtype=np.int8)
    for f, spec in enumerate(specs):
        col1 = [row[f] for row in file1.linking]
        col2 = [row[f] for row in file2.linking]
        levels[:, :, f] = _field_levels(col1, col2, spec)
    mat = ComparisonMatrix(levels=levels, level_counts=tuple(s.levels for s in specs))
    mat.validate()
    return mat


def _field_levels(col1, col2, spec: FieldSpec) -> np.ndarray:
    uniq1, inv1 = _unique_index(col1)
    uniq2, inv2 = _unique_index(col2)
    table = np.zeros((len(uniq1), len(uniq2)), dtype=np.int8)
    for i, va in enumerate(uniq1):
        if va is None:
            continue
        for j, vb in enumerate(uniq2):
            if vb is None:
                continue
            table[i, j] = compare_values(va, vb, spec)
    return table[np.ix_(inv1, inv2)]


def _unique_index(values):
    uniq, inv, seen = [], [], {}
    for v in values:
        if v not in seen:
            seen[v] = len(uniq)
            uniq.append(v)
        inv.append(seen[v])
    return uniq, np.asarray(inv)
