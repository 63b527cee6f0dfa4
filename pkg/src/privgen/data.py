"""Datasets with group structure: CSV ingestion, synthetic group mixtures,
splits, and group statistics.

The CSV interface expects a header row; missing values are rejected.
Categorical features are one-hot encoded in first-seen order, and numeric
features are standardized with statistics taken from the training split only.
A companion metadata JSON records the schema, encoding order, and
standardization statistics.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with labels, per-example group ids, and (optionally)
    known group probabilities q."""

    features: np.ndarray          # (n, d) float64
    labels: np.ndarray            # (n,) int class indices
    groups: np.ndarray            # (n,) int group ids in {0..m-1}
    group_probs: np.ndarray | None = None   # (m,) known mixture weights
    feature_names: tuple = ()

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        groups = np.asarray(self.groups, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        if feats.ndim != 2:
            raise ValueError("features must be 2-D")
        n = feats.shape[0]
        if labels.shape != (n,) or groups.shape != (n,):
            raise ValueError("labels/groups length must match feature rows")
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite feature values")
        if self.group_probs is not None:
            q = np.asarray(self.group_probs, dtype=np.float64)
            object.__setattr__(self, "group_probs", q)
            if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
                raise ValueError("group_probs must be nonnegative and sum to 1")
            if groups.size and groups.max() >= q.size:
                raise ValueError("group id out of range for group_probs")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def num_groups(self):
        m = int(self.groups.max()) + 1 if self.n else 0
        if self.group_probs is not None:
            m = max(m, self.group_probs.size)
        return m

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.n else 0

    def subset(self, idx):
        """Row subset, keeping group metadata."""
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx],
                       labels=self.labels[idx], groups=self.groups[idx])


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``label`` maps the raw label column to class indices via ``label_values``
    (first-seen order when empty).  ``group_cols`` name the columns whose
    joint values define groups; group ids are assigned in first-seen order.
    Feature columns are either numeric or categorical (one-hot, first-seen
    category order).
    """

    label: str
    group_cols: tuple
    numeric_features: tuple = ()
    categorical_features: tuple = ()
    label_values: tuple = ()


def load_csv(path, schema):
    """Load a header CSV into a Dataset per the given schema.

    Raises SchemaError for missing columns, ParseError (with row index) for
    non-numeric values in numeric columns or missing values.  Numeric columns
    are kept raw here; use :func:`standardize` after splitting.
    """
    df = pd.read_csv(path, skipinitialspace=True, dtype=str)
    needed = ([schema.label] + list(schema.group_cols)
              + list(schema.numeric_features) + list(schema.categorical_features))
    for col in needed:
        if col not in df.columns:
            raise SchemaError(f"missing column {col!r}")
    na_mask = df[needed].isna().any(axis=1)
    if na_mask.any():
        raise ParseError(f"missing value at row {int(np.argmax(na_mask.values))}")

    cols = []
    names = []
    for col in schema.numeric_features:
        vals = pd.to_numeric(df[col], errors="coerce").values
        bad = np.isnan(vals)
        if bad.any():
            raise ParseError(
                f"non-numeric value in column {col!r} at row {int(np.argmax(bad))}")
        cols.append(vals.astype(np.float64))
        names.append(col)
    categories = {}
    for col in schema.categorical_features:
        seen = list(dict.fromkeys(df[col]))
        categories[col] = seen
        for cat in seen:
            cols.append((df[col] == cat).values.astype(np.float64))
            names.append(f"{col}={cat}")
    features = np.column_stack(cols) if cols else np.zeros((len(df), 0))

    label_order = list(schema.label_values) or list(dict.fromkeys(df[schema.label]))
    label_map = {v: i for i, v in enumerate(label_order)}
    try:
        labels = np.array([label_map[v] for v in df[schema.label]], dtype=np.int64)
    except KeyError as e:
        raise ParseError(f"unknown label value {e.args[0]!r}") from None

    group_keys = list(zip(*(df[c] for c in schema.group_cols)))
    group_order = list(dict.fromkeys(group_keys))
    group_map = {k: i for i, k in enumerate(group_order)}
    groups = np.array([group_map[k] for k in group_keys], dtype=np.int64)

    ds = Dataset(features, labels, groups)
    meta = {
        "schema": {
            "label": schema.label,
            "group_cols": list(schema.group_cols),
            "numeric_features": list(schema.numeric_features),
            "categorical_features": list(schema.categorical_features),
        },
        "label_order": label_order,
        "group_order": [list(k) for k in group_order],
        "categories": categories,
        "feature_names": names,
    }
    return ds, meta


def write_csv(ds, path):
    """Write features/labels/groups with generic column names (identity schema)."""
    cols = {f"x{i}": ds.features[:, i] for i in range(ds.d)}
    cols["label"] = ds.labels
    cols["group"] = ds.groups
    pd.DataFrame(cols).to_csv(path, index=False)


def load_identity_csv(path):
    """Re-load a file written by :func:`write_csv`."""
    df = pd.read_csv(path)
    feat_cols = [c for c in df.columns if c.startswith("x")]
    return Dataset(df[feat_cols].values.astype(np.float64),
                   df["label"].values, df["group"].values)


def standardize(train, *others):
    """Zero-mean/unit-variance transform fitted on the training split.

    Constant columns are left centered only.  Returns transformed copies of
    train and the other splits, plus the (mean, std) statistics.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)

    def apply(ds):
        return replace(ds, features=(ds.features - mean) / std)

    out = [apply(train)] + [apply(ds) for ds in others]
    return (*out, {"mean": mean.tolist(), "std": std.tolist()})


def write_metadata(meta, path):
    with open(path, "w") as f:
        json.dump(meta, f, indent=2)


def synth_group_mixture(q, means, n, noise_std, rng):
    """Synthetic mixture: group g ~ q, label uniform in {0, 1}, features at
    the (group, label) center plus isotropic Gaussian noise.

    ``means`` has shape (m, 2, d): per-group class-conditional centers.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.size == 0:
        raise ValueError("q must be nonempty")
    if abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("q must sum to 1")
    means = np.asarray(means, dtype=np.float64)
    m = q.size
    if n < m:
        raise ValueError("need n >= number of groups")
    groups = rng.choice(m, size=n, p=q)
    labels = rng.integers(0, 2, size=n)
    centers = means[groups, labels]
    if noise_std == 0.0:
        feats = centers.copy()
    else:
        feats = centers + noise_std * rng.normal(centers.shape)
    return Dataset(feats, labels, groups, group_probs=q)


def empirical_group_probs(ds):
    """Count of each group divided by n."""
    counts = np.bincount(ds.groups, minlength=ds.num_groups)
    return counts / ds.n


def group_counts(ds):
    return np.bincount(ds.groups, minlength=ds.num_groups)


def split(ds, fractions, rng):
    """Random disjoint (train, val, test) partition.

    Sizes are floor(fraction * n) with the remainder going to train.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.size != 3 or np.any(fractions < 0):
        raise ValueError("fractions must be three nonnegative numbers")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = ds.n
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    perm = rng.permutation(n)
    return (ds.subset(perm[:n_train]),
            ds.subset(perm[n_train:n_train + n_val]),
            ds.subset(perm[n_train + n_val:]))


# ADULT (census income) ingestion: four intersectional groups, sex x income
# class, with income doubling as the binary label.

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]

ADULT_SCHEMA = CsvSchema(
    label="income",
    group_cols=("sex", "income"),
    numeric_features=("age", "education-num", "capital-gain", "capital-loss",
                      "hours-per-week"),
    categorical_features=("workclass", "education", "marital-status",
                          "occupation", "relationship", "race", "sex",
                          "native-country"),
    label_values=("<=50K", ">50K"),
)


def load_adult(path):
    """Load the raw census-income CSV (header row expected, '?' rows dropped).

    Group ids follow a fixed order: (Female, <=50K), (Male, <=50K),
    (Female, >50K), (Male, >50K).
    """
    df = pd.read_csv(path, skipinitialspace=True, dtype=str)
    df.columns = [c.strip() for c in df.columns]
    df = df[~(df == "?").any(axis=1)].reset_index(drop=True)
    # Normalize label punctuation variants (">50K." in some distributions).
    df["income"] = df["income"].str.rstrip(".")
    buf = io.StringIO()
    df.to_csv(buf, index=False)
    buf.seek(0)
    ds, meta = load_csv(buf, ADULT_SCHEMA)
    order = [("Female", "<=50K"), ("Male", "<=50K"),
             ("Female", ">50K"), ("Male", ">50K")]
    remap = {meta["group_order"].index(list(k)): i
             for i, k in enumerate(order) if list(k) in meta["group_order"]}
    groups = np.array([remap[g] for g in ds.groups], dtype=np.int64)
    meta["group_order"] = [list(k) for k in order]
    ds = replace(ds, groups=groups)
    return ds, meta
