"""CSV ingestion and deterministic report writing.

All floats are written with ``repr`` so that a rerun with the same seed
produces byte-identical files.
"""

from __future__ import annotations

import csv

import numpy as np

from .comparison import RecordFile, ValidationError


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_record_file(path, linking_cols, x_cols=None, y_col=None) -> RecordFile:
    """Load one dataset; empty linking cells become missing values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in list(linking_cols) + list(x_cols or []) + ([y_col] if y_col else []):
            if col not in header:
                raise ValidationError(f"{path}: missing column {col!r}")
        linking, xs, ys = [], [], []
        for row in reader:
            linking.append(
                [row[c] if row[c] not in ("", None) else None for c in linking_cols]
            )
            if x_cols:
                try:
                    xs.append([float(row[c]) for c in x_cols])
                except ValueError as err:
                    raise ValidationError(f"{path}: bad covariate value ({err})")
            if y_col:
                try:
                    ys.append(float(row[y_col]))
                except ValueError as err:
                    raise ValidationError(f"{path}: bad response value ({err})")
    return RecordFile(
        linking=linking,
        x=np.asarray(xs) if x_cols else None,
        y=np.asarray(ys) if y_col else None,
        field_names=list(linking_cols),
    )


def write_record_file(path, rf: RecordFile, x_names=None, y_name="y"):
    """Emit the CSV schema the pipeline ingests."""
    x_names = x_names or [f"x{i + 1}" for i in range((rf.x.shape[1]) if rf.x is not None else 0)]
    header = list(rf.field_names)
    if rf.x is not None:
        header += list(x_names)
    if rf.y is not None:
        header.append(y_name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(rf.n):
            row = ["" if v is None else v for v in rf.linking[k]]
            if rf.x is not None:
                row += [_fmt(v) for v in rf.x[k]]
            if rf.y is not None:
                row.append(_fmt(rf.y[k]))
            w.writerow(row)


def read_pairs_csv(path) -> np.ndarray:
    """(i, j) pair lists used for seeds and ground truth."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"i", "j"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: expected columns i,j")
        pairs = [(int(row["i"]), int(row["j"])) for row in reader]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def write_pairs_csv(path, pairs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j"])
        for i, j in np.asarray(pairs, dtype=np.int64).reshape(-1, 2):
            w.writerow([int(i), int(j)])


def write_linked_dataset_csv(path, ds):
    """Columns (k, i, j, is_seed, c, y, x1..xp)."""
    p = ds.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "i", "j", "is_seed", "c", "y"] + [f"x{q + 1}" for q in range(p)])
        for k in range(ds.n):
            w.writerow(
                [
                    k + 1,
                    int(ds.pairs[k, 0]),
                    int(ds.pairs[k, 1]),
                    int(ds.is_seed[k]),
                    _fmt(ds.c[k]),
                    _fmt(ds.y[k]),
                ]
                + [_fmt(v) for v in ds.x[k]]
            )


def write_pooled_csv(path, pooled, coef_names=None):
    """Columns (coef, estimate, se, df, lo, hi)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coef", "estimate", "se", "df", "lo", "hi"])
        for p in pooled:
            name = coef_names[p.coef] if coef_names else f"beta{p.coef}"
            w.writerow([name, _fmt(p.estimate), _fmt(p.se), _fmt(p.df), _fmt(p.lo), _fmt(p.hi)])


def write_rows_csv(path, header, rows):
    """Generic deterministic CSV writer for logs and metric tables."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
