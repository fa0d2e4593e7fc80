"""Customer data model, CSV ingestion, standardization, CLV segmentation.

CSV schema: header ``f1,...,fK,clv,label``, UTF-8, ``.`` decimal separator,
no thousands separators. ``label`` is 0 for a churner and 1 for a
non-churner; ``clv`` is the customer lifetime value in euros and must be
strictly positive.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "CustomerRecord",
    "Dataset",
    "SegmentAssignment",
    "FeatureScaler",
    "load_dataset",
    "save_dataset",
    "standardize",
    "segment_by_clv",
    "quantile_segments",
    "segment_edges",
    "assign_segments",
]

RESERVED_COLUMNS = ("clv", "label")


@dataclass(frozen=True)
class CustomerRecord:
    """One customer: feature vector, binary label (0 = churner), CLV in euros."""

    features: np.ndarray
    label: int
    clv: float


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of customers sharing one schema."""

    name: str
    schema: tuple[str, ...]
    features: np.ndarray  # (n, k) float64
    labels: np.ndarray  # (n,) int64, values in {0, 1}
    clvs: np.ndarray  # (n,) float64, strictly positive

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        labels = np.asarray(self.labels, dtype=np.int64)
        clvs = np.asarray(self.clvs, dtype=float)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        n, k = feats.shape
        if n == 0:
            raise ValueError(f"dataset {self.name!r} is empty")
        if k != len(self.schema):
            raise ValueError(f"feature width {k} does not match schema width {len(self.schema)}")
        if labels.shape != (n,) or clvs.shape != (n,):
            raise ValueError("features, labels and clvs must agree in length")
        bad = np.flatnonzero(~np.isin(labels, (0, 1)))
        if bad.size:
            raise ValueError(f"label must be 0 or 1 at row {bad[0] + 1}")
        bad = np.flatnonzero(~(clvs > 0))
        if bad.size:
            raise ValueError(f"clv must be > 0 at row {bad[0] + 1}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        for arr in (feats, labels, clvs):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "clvs", clvs)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def churn_rate(self) -> float:
        return float(np.mean(self.labels == 0))

    def record(self, i: int) -> CustomerRecord:
        return CustomerRecord(self.features[i], int(self.labels[i]), float(self.clvs[i]))

    def records(self) -> Iterator[CustomerRecord]:
        return (self.record(i) for i in range(len(self)))

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            name=name if name is not None else self.name,
            schema=self.schema,
            features=self.features[idx],
            labels=self.labels[idx],
            clvs=self.clvs[idx],
        )

    def require_both_classes(self) -> "Dataset":
        """Raise unless churners and non-churners are both present."""
        if len(np.unique(self.labels)) < 2:
            raise ValueError(f"dataset {self.name!r} has a single class; need both for training")
        return self


def load_dataset(path: str | Path, schema: Sequence[str] | None = None, name: str | None = None) -> Dataset:
    """Load and validate a dataset CSV.

    Args:
        path: CSV file with a header row holding the feature columns plus
            ``clv`` and ``label``.
        schema: expected feature columns. When given, the header must
            contain exactly these features (any order); row vectors follow
            the schema order. When omitted, the features are all header
            columns except ``clv``/``label``, in header order.
        name: dataset identifier; defaults to the file stem.

    Raises:
        ValueError: missing/unexpected column, non-numeric cell, clv <= 0,
            or label outside {0, 1} -- each reported with its data row
            number (first data row is row 1).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in RESERVED_COLUMNS:
            if col not in header:
                raise ValueError(f"{path}: missing required column {col!r}")
        if schema is None:
            feature_cols = [h for h in header if h not in RESERVED_COLUMNS]
        else:
            feature_cols = list(schema)
            missing = [c for c in feature_cols if c not in header]
            if missing:
                raise ValueError(f"{path}: missing feature column(s) {missing}")
            extra = [h for h in header if h not in feature_cols and h not in RESERVED_COLUMNS]
            if extra:
                raise ValueError(f"{path}: unexpected column(s) {extra}")
        if len(set(header)) != len(header):
            raise ValueError(f"{path}: duplicate column names in header")
        col_index = {h: i for i, h in enumerate(header)}
        feat_idx = [col_index[c] for c in feature_cols]
        clv_idx = col_index["clv"]
        label_idx = col_index["label"]

        rows_feat: list[list[float]] = []
        rows_label: list[int] = []
        rows_clv: list[float] = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue  # ignore blank lines
            if len(row) != len(header):
                raise ValueError(f"{path}: row {row_no}: expected {len(header)} cells, got {len(row)}")

            def parse(cell: str, col: str) -> float:
                try:
                    return float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}: row {row_no}, column {col!r}: non-numeric value {cell!r}"
                    ) from None

            feats = [parse(row[i], feature_cols[j]) for j, i in enumerate(feat_idx)]
            clv = parse(row[clv_idx], "clv")
            if not clv > 0:
                raise ValueError(f"{path}: row {row_no}: clv must be > 0, got {clv}")
            label_f = parse(row[label_idx], "label")
            if label_f not in (0.0, 1.0):
                raise ValueError(f"{path}: row {row_no}: label must be 0 or 1, got {row[label_idx]!r}")
            rows_feat.append(feats)
            rows_label.append(int(label_f))
            rows_clv.append(clv)

    if not rows_feat:
        raise ValueError(f"{path}: no data rows")
    return Dataset(
        name=name if name is not None else path.stem,
        schema=tuple(feature_cols),
        features=np.asarray(rows_feat, dtype=float),
        labels=np.asarray(rows_label, dtype=np.int64),
        clvs=np.asarray(rows_clv, dtype=float),
    )


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write a dataset as CSV, lossless for a float round trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.schema) + ["clv", "label"])
        for i in range(len(ds)):
            writer.writerow(
                [repr(float(v)) for v in ds.features[i]]
                + [repr(float(ds.clvs[i])), str(int(ds.labels[i]))]
            )
    return path


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature affine transform fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray  # zero-variance columns carry std 1 (centering only)

    def transform(self, ds: Dataset) -> Dataset:
        return Dataset(
            name=ds.name,
            schema=ds.schema,
            features=(ds.features - self.mean) / self.std,
            labels=ds.labels,
            clvs=ds.clvs,
        )


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, FeatureScaler]:
    """Z-score both splits using statistics computed on train only.

    Train columns come out with mean 0 and (population) std 1. A
    zero-variance train column is centered but not scaled, so it maps to
    constant 0 on train; a warning is emitted because the column carries
    no information. Labels and CLVs are untouched.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    dead = std == 0
    if np.any(dead):
        cols = [train.schema[j] for j in np.flatnonzero(dead)]
        warnings.warn(f"zero-variance feature column(s) {cols}; mapped to constant 0", stacklevel=2)
        std = np.where(dead, 1.0, std)
    scaler = FeatureScaler(mean=mean, std=std)
    return scaler.transform(train), scaler.transform(test), scaler


@dataclass(frozen=True)
class SegmentAssignment:
    """Partition of records into q contiguous CLV quantile segments.

    Segment 0 holds the lowest CLVs. Sizes differ by at most one; when n
    is not divisible by q the lower-CLV segments take the extra record.
    CLV ties are broken by record index (stable sort), so the split is
    deterministic.
    """

    q: int
    segment_of: np.ndarray  # (n,) int, values in [0, q)

    def indices(self, segment: int) -> np.ndarray:
        return np.flatnonzero(self.segment_of == segment)


def quantile_segments(clvs, q: int) -> SegmentAssignment:
    """Split a raw CLV vector into q near-equal sorted segments."""
    clvs = np.asarray(clvs, dtype=float)
    n = clvs.size
    if not 1 <= q <= n:
        raise ValueError(f"q must be in [1, {n}], got {q}")
    order = np.argsort(clvs, kind="stable")
    base, extra = divmod(n, q)
    segment_of = np.empty(n, dtype=np.int64)
    start = 0
    for s in range(q):
        size = base + (1 if s < extra else 0)
        segment_of[order[start : start + size]] = s
        start += size
    return SegmentAssignment(q=q, segment_of=segment_of)


def segment_by_clv(ds: Dataset, q: int) -> SegmentAssignment:
    """Split records into q near-equal CLV-sorted segments."""
    return quantile_segments(ds.clvs, q)


def segment_edges(clvs, assignment: SegmentAssignment) -> np.ndarray:
    """Upper CLV edge of each segment except the last (q - 1 values).

    Together with :func:`assign_segments` this carries a training-split
    segmentation over to unseen customers.
    """
    clvs = np.asarray(clvs, dtype=float)
    return np.array(
        [clvs[assignment.indices(s)].max() for s in range(assignment.q - 1)], dtype=float
    )


def assign_segments(clvs, edges: np.ndarray) -> np.ndarray:
    """Map CLVs to segments by the given upper edges (clv <= edge -> that segment)."""
    clvs = np.asarray(clvs, dtype=float)
    return np.searchsorted(np.asarray(edges, dtype=float), clvs, side="left")
