"""CSV ingestion, mean imputation, one-hot encoding, scaling and splitting.

The pipeline for a dataset manifest is::

    load_csv -> drop rows with a missing label -> impute_mean -> encode
             -> train_test_split -> standardize (fit on train, apply to test)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MISSING_TOKENS = frozenset({"?", "", "NA"})
DATA_DIR = Path(__file__).parent / "data"
BUILTIN_DATASETS = ("lenses", "concrete", "automobiles")


class DataError(ValueError):
    """Raised for malformed input files or invalid pipeline arguments."""


@dataclass(frozen=True)
class RawTable:
    """Parsed CSV contents before encoding.

    Numeric cells hold floats (NaN where missing), categorical cells hold the
    raw string (None where missing).
    """

    rows: list
    columns: list  # [(name, "numeric" | "categorical"), ...]
    missing_mask: np.ndarray  # bool, shape (n_rows, n_columns)

    @property
    def column_names(self):
        return [name for name, _ in self.columns]

    def column_index(self, name):
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not in table") from None


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list = field(default_factory=list)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DataError(f"labels shape {y.shape} does not match {X.shape[0]} rows")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs n >= 1 and d >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite entries")
        names = list(self.feature_names) or [f"x{i}" for i in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names)


@dataclass(frozen=True)
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray

    @property
    def constant_columns(self):
        return np.flatnonzero(self.stds == 0)


@dataclass(frozen=True)
class Manifest:
    path: Path
    label_column: str
    missing_tokens: frozenset = DEFAULT_MISSING_TOKENS
    categorical_columns: tuple | None = None
    drop_columns: tuple = ()
    name: str = ""

    @classmethod
    def from_dict(cls, spec, base_dir=None):
        if "path" not in spec or "label_column" not in spec:
            raise DataError("manifest needs 'path' and 'label_column'")
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        cats = spec.get("categorical_columns")
        return cls(
            path=path,
            label_column=spec["label_column"],
            missing_tokens=frozenset(spec.get("missing_tokens", DEFAULT_MISSING_TOKENS)),
            categorical_columns=tuple(cats) if cats is not None else None,
            drop_columns=tuple(spec.get("drop_columns", ())),
            name=spec.get("name", path.stem),
        )

    def to_dict(self):
        out = {
            "name": self.name,
            "path": str(self.path),
            "label_column": self.label_column,
            "missing_tokens": sorted(self.missing_tokens),
            "drop_columns": list(self.drop_columns),
        }
        if self.categorical_columns is not None:
            out["categorical_columns"] = list(self.categorical_columns)
        return out


def load_manifest(ref):
    """Load a manifest from a JSON file, or a bundled dataset by name."""
    if str(ref) in BUILTIN_DATASETS:
        ref = DATA_DIR / f"{ref}.json"
    ref = Path(ref)
    if not ref.exists():
        raise FileNotFoundError(f"manifest not found: {ref}")
    with open(ref, encoding="utf-8") as fh:
        spec = json.load(fh)
    return Manifest.from_dict(spec, base_dir=ref.parent)


def _parse_float(cell):
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def load_csv(path, label_column, missing_tokens=DEFAULT_MISSING_TOKENS,
             categorical_columns=None, drop_columns=()):
    """Read a headed CSV into a RawTable.

    A column is categorical if any non-missing cell fails to parse as a
    finite float, unless ``categorical_columns`` overrides the detection.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        records = [r for r in csv.reader(fh) if r]
    if not records:
        raise DataError(f"empty file: {path}")
    header = [h.strip() for h in records[0]]
    body = records[1:]
    if label_column not in header:
        raise DataError(f"label column {label_column!r} not in header of {path}")
    for lineno, rec in enumerate(body, start=2):
        if len(rec) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
    if not body:
        raise DataError(f"no data rows in {path}")

    keep = [j for j, h in enumerate(header) if h not in set(drop_columns)]
    header = [header[j] for j in keep]
    cells = [[rec[j].strip() for j in keep] for rec in body]
    tokens = set(missing_tokens)

    columns = []
    for j, name in enumerate(header):
        if categorical_columns is not None:
            kind = "categorical" if name in categorical_columns else "numeric"
        else:
            numeric = all(
                c in tokens or _parse_float(c) is not None for c in (row[j] for row in cells)
            )
            kind = "numeric" if numeric else "categorical"
        columns.append((name, kind))
    if dict(columns)[label_column] != "numeric":
        raise DataError(f"label column {label_column!r} is not numeric")

    mask = np.zeros((len(cells), len(header)), dtype=bool)
    rows = []
    for i, row in enumerate(cells):
        parsed = []
        for j, (cell, (name, kind)) in enumerate(zip(row, columns)):
            if cell in tokens:
                mask[i, j] = True
                parsed.append(math.nan if kind == "numeric" else None)
            elif kind == "numeric":
                value = _parse_float(cell)
                if value is None:
                    mask[i, j] = True
                    parsed.append(math.nan)
                else:
                    parsed.append(value)
            else:
                parsed.append(cell)
        rows.append(parsed)
    return RawTable(rows=rows, columns=columns, missing_mask=mask)


def drop_missing_rows(table, column):
    """Remove rows whose ``column`` cell is missing."""
    j = table.column_index(column)
    keep = ~table.missing_mask[:, j]
    rows = [r for r, k in zip(table.rows, keep) if k]
    return RawTable(rows=rows, columns=list(table.columns), missing_mask=table.missing_mask[keep])


def impute_mean(table):
    """Replace missing numeric cells with the column mean of observed cells.

    Missing categorical cells stay missing; they encode to an all-zero
    one-hot row.
    """
    rows = [list(r) for r in table.rows]
    mask = table.missing_mask.copy()
    for j, (name, kind) in enumerate(table.columns):
        if kind != "numeric" or not mask[:, j].any():
            continue
        observed = [rows[i][j] for i in range(len(rows)) if not mask[i, j]]
        if not observed:
            raise DataError(f"column {name!r} has no observed values to impute from")
        mean = math.fsum(observed) / len(observed)
        for i in np.flatnonzero(mask[:, j]):
            rows[i][j] = mean
        mask[:, j] = False
    return RawTable(rows=rows, columns=list(table.columns), missing_mask=mask)


def encode(table, label_column):
    """One-hot encode categorical columns (no dropped level) into a Dataset."""
    names, blocks = [], []
    labels = None
    n = len(table.rows)
    for j, (name, kind) in enumerate(table.columns):
        col = [r[j] for r in table.rows]
        if name == label_column:
            labels = np.array(col, dtype=float)
        elif kind == "numeric":
            names.append(name)
            blocks.append(np.array(col, dtype=float).reshape(n, 1))
        else:
            levels = sorted({c for c in col if c is not None})
            onehot = np.zeros((n, len(levels)))
            for i, c in enumerate(col):
                if c is not None:
                    onehot[i, levels.index(c)] = 1.0
            names.extend(f"{name}={lvl}" for lvl in levels)
            blocks.append(onehot)
    if not blocks:
        raise DataError("no feature columns besides the label")
    return Dataset(np.hstack(blocks), labels, names)


def load_dataset(manifest):
    """Run the ingestion pipeline (no scaling, no split) for a manifest."""
    if not isinstance(manifest, Manifest):
        manifest = load_manifest(manifest)
    table = load_csv(
        manifest.path,
        manifest.label_column,
        manifest.missing_tokens,
        manifest.categorical_columns,
        manifest.drop_columns,
    )
    table = drop_missing_rows(table, manifest.label_column)
    return encode(impute_mean(table), manifest.label_column)


def fit_scaler(X):
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise DataError("standardization needs at least 2 rows")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    # exact-zero spread only; tiny float residue on constant columns counts as constant
    stds[np.ptp(X, axis=0) == 0] = 0.0
    return ScalerParams(means=means, stds=stds)


def apply_scaler(data, params):
    safe = np.where(params.stds == 0, 1.0, params.stds)
    Z = (data.features - params.means) / safe
    Z[:, params.stds == 0] = 0.0
    return Dataset(Z, data.labels, data.feature_names)


def invert_scaler(data, params):
    """Undo :func:`apply_scaler`; constant columns come back as their mean."""
    X = data.features * params.stds + params.means
    return Dataset(X, data.labels, data.feature_names)


def standardize(data):
    """Scale each feature to mean 0 and population std 1; labels untouched."""
    params = fit_scaler(data.features)
    return apply_scaler(data, params), params


def train_test_split(data, test_fraction, seed):
    """Random disjoint split; test size is ``max(1, floor(n * test_fraction))``."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = max(1, int(math.floor(data.n * test_fraction)))
    if n_test >= data.n:
        raise DataError(f"split of n={data.n} at {test_fraction} leaves an empty training set")
    perm = np.random.default_rng(seed).permutation(data.n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return data.subset(train_idx), data.subset(test_idx)


def prepare_split(data, test_fraction=0.2, seed=42, normalize=True):
    """Split, then fit the scaler on train only and apply it to both parts."""
    train, test = train_test_split(data, test_fraction, seed)
    if not normalize:
        return train, test, None
    params = fit_scaler(train.features)
    return apply_scaler(train, params), apply_scaler(test, params), params
