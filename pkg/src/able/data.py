"""Tabular dataset handling: CSV loading, encoding, standardization, splits.

Input CSVs are plain UTF-8 with a header row and comma-separated fields;
empty cells are treated as missing. Quoting/escaping beyond plain fields is
not supported. A column is inferred as continuous iff every non-missing cell
parses as a number; everything else is categorical. Categorical values are
label-encoded in order of first appearance, then all feature columns are
standardized jointly (population variance, zero-variance columns clamped so
their standardized value is 0).
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSchema:
    """Column layout of a CSV: names, kinds, and categorical code maps."""

    columns: tuple[tuple[str, str], ...]  # (name, kind) in file order
    label_column: str
    category_maps: dict[str, dict[str, int]]

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        if self.label_column not in names:
            raise ValueError(f"label column {self.label_column!r} not among columns")
        for col, mapping in self.category_maps.items():
            codes = sorted(mapping.values())
            if codes != list(range(len(codes))):
                raise ValueError(f"category codes for {col!r} are not contiguous from 0")

    @property
    def feature_names(self) -> list[str]:
        return [name for name, _ in self.columns if name != self.label_column]

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "columns": [list(c) for c in self.columns],
            "label_column": self.label_column,
            "category_maps": self.category_maps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(
            columns=tuple((str(n), str(k)) for n, k in d["columns"]),
            label_column=str(d["label_column"]),
            category_maps={c: {str(k): int(v) for k, v in m.items()} for c, m in d["category_maps"].items()},
        )


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix plus integer class labels."""

    x: np.ndarray  # (rows, d) float64, finite
    y: np.ndarray  # (rows,) int class indices in [0, num_classes)
    schema: FeatureSchema
    num_classes: int

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x must be (rows, d) and y (rows,) with matching row counts")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels out of range")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def feature_names(self) -> list[str]:
        return self.schema.feature_names


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine transform to zero mean / unit variance."""

    means: np.ndarray
    stds: np.ndarray  # strictly positive (constant columns clamped to 1)

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        means = x.mean(axis=0)
        stds = x.std(axis=0)  # population (1/N) variance
        stds = np.where(stds < 1e-12, 1.0, stds)
        return cls(means=means, stds=stds)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.means) / self.stds

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        return x * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(means=np.asarray(d["means"], dtype=float), stds=np.asarray(d["stds"], dtype=float))


def _parses_as_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def load_csv(path: str, label_column: str) -> tuple[list[list[str]], FeatureSchema]:
    """Parse a CSV file and infer the feature schema.

    Returns the raw string table (data rows only, file column order) and a
    FeatureSchema. Raises on a missing file, a missing label column, or a
    ragged row (the error names the offending file line).
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except FileNotFoundError:
        raise FileNotFoundError(f"dataset file not found: {path}")
    if not rows:
        raise ValueError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise ValueError(f"{path}: label column {label_column!r} not in header {header}")
    table: list[list[str]] = []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}"
            )
        table.append([cell.strip() for cell in row])

    columns: list[tuple[str, str]] = []
    category_maps: dict[str, dict[str, int]] = {}
    for j, name in enumerate(header):
        cells = [r[j] for r in table if r[j] != ""]
        continuous = len(cells) > 0 and all(_parses_as_number(c) for c in cells)
        kind = CONTINUOUS if continuous else CATEGORICAL
        columns.append((name, kind))
        if kind == CATEGORICAL:
            mapping: dict[str, int] = {}
            for c in cells:  # codes by first appearance in file order
                if c not in mapping:
                    mapping[c] = len(mapping)
            category_maps[name] = mapping
    return table, FeatureSchema(tuple(columns), label_column, category_maps)


def _encode_column(cells: list[str], name: str, kind: str, mapping: dict[str, int] | None) -> np.ndarray:
    """Encode one column to floats, imputing missing cells (mean / mode)."""
    present = [c for c in cells if c != ""]
    if not present:
        raise ValueError(f"column {name!r} is entirely missing")
    if kind == CONTINUOUS:
        values = np.array([float(c) if c != "" else np.nan for c in cells])
        fill = np.nanmean(values)
        values[np.isnan(values)] = fill
        return values
    codes = []
    known = [mapping[c] for c in present if c in mapping]
    if not known:
        raise ValueError(f"column {name!r} has no values covered by the schema")
    counts = Counter(known)
    # mode imputation; ties broken toward the smaller code
    mode = min(counts, key=lambda c: (-counts[c], c))
    for c in cells:
        if c == "":
            codes.append(mode)
        elif c in mapping:
            codes.append(mapping[c])
        else:
            raise ValueError(f"column {name!r}: value {c!r} not present in schema")
    return np.array(codes, dtype=float)


def _encode_labels(cells: list[str], schema: FeatureSchema) -> tuple[np.ndarray, int]:
    name = schema.label_column
    if any(c == "" for c in cells):
        raise ValueError(f"label column {name!r} has missing values")
    if schema.kind_of(name) == CATEGORICAL:
        mapping = schema.category_maps[name]
        y = np.array([mapping[c] for c in cells], dtype=int)
        return y, len(mapping)
    # numeric labels: classes ordered by ascending value so 0/1 stay 0/1
    values = [float(c) for c in cells]
    classes = sorted(set(values))
    index = {v: i for i, v in enumerate(classes)}
    return np.array([index[v] for v in values], dtype=int), len(classes)


def encode_and_standardize(table: list[list[str]], schema: FeatureSchema) -> tuple[Dataset, Standardizer]:
    """Turn a raw string table into a standardized Dataset.

    Categorical cells become integer codes, missing cells are imputed
    (column mean for continuous, column mode for categorical), and all
    feature columns are standardized jointly. Labels are not standardized.
    """
    if not table:
        raise ValueError("empty table")
    names = [name for name, _ in schema.columns]
    label_idx = names.index(schema.label_column)
    feature_cols = []
    for j, (name, kind) in enumerate(schema.columns):
        if j == label_idx:
            continue
        cells = [r[j] for r in table]
        feature_cols.append(_encode_column(cells, name, kind, schema.category_maps.get(name)))
    x_raw = np.column_stack(feature_cols) if feature_cols else np.zeros((len(table), 0))
    y, num_classes = _encode_labels([r[label_idx] for r in table], schema)
    standardizer = Standardizer.fit(x_raw)
    ds = Dataset(x=standardizer.transform(x_raw), y=y, schema=schema, num_classes=num_classes)
    return ds, standardizer


def transform_with_schema(
    table: list[list[str]], schema: FeatureSchema, standardizer: Standardizer
) -> Dataset:
    """Encode new rows with a previously fitted schema and standardizer."""
    if not table:
        raise ValueError("empty table")
    names = [name for name, _ in schema.columns]
    label_idx = names.index(schema.label_column)
    feature_cols = []
    for j, (name, kind) in enumerate(schema.columns):
        if j == label_idx:
            continue
        cells = [r[j] for r in table]
        feature_cols.append(_encode_column(cells, name, kind, schema.category_maps.get(name)))
    x_raw = np.column_stack(feature_cols)
    y, num_classes = _encode_labels([r[label_idx] for r in table], schema)
    return Dataset(x=standardizer.transform(x_raw), y=y, schema=schema, num_classes=max(num_classes, 2))


def _largest_remainder_sizes(n_rows: int, fractions: tuple[float, float, float]) -> list[int]:
    # floor each share, then hand out leftovers by largest fractional
    # remainder; remainder ties prefer train, then test, then val
    exact = [f * n_rows for f in fractions]
    sizes = [int(np.floor(v)) for v in exact]
    remainders = [v - s for v, s in zip(exact, sizes)]
    tie_rank = {0: 0, 2: 1, 1: 2}  # train, test, val
    order = sorted(range(3), key=lambda i: (-remainders[i], tie_rank[i]))
    for i in range(n_rows - sum(sizes)):
        sizes[order[i % 3]] += 1
    return sizes


def split_dataset(
    ds: Dataset, fractions: tuple[float, float, float] = (0.70, 0.15, 0.15), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle rows with the given seed and split into train/val/test.

    The split is disjoint and covering; sizes follow largest-remainder
    rounding of the fractions. Datasets with fewer than 10 rows are refused.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    if ds.n_rows < 10:
        raise ValueError(f"dataset too small to split ({ds.n_rows} rows, need >= 10)")
    sizes = _largest_remainder_sizes(ds.n_rows, fractions)
    perm = np.random.default_rng(seed).permutation(ds.n_rows)
    bounds = np.cumsum([0] + sizes)
    parts = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        idx = np.sort(perm[lo:hi])
        parts.append(Dataset(x=ds.x[idx], y=ds.y[idx], schema=ds.schema, num_classes=ds.num_classes))
    return parts[0], parts[1], parts[2]
