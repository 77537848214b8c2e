"""Dataset container, CSV ingestion, and stratified splitting.

The on-disk format is plain CSV: UTF-8, comma separated, one header
row, decimal point '.', no thousands separators.  Empty or
unparseable cells are errors, never silently imputed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class DataSet:
    """Immutable regression dataset.

    ``y`` holds binary outcomes, ``X`` the fixed-effect regressors and
    ``Z`` the random-effect design.  When ``group_labels`` are given and
    ``Z`` is not, ``Z`` is built as the one-hot encoding of the labels
    with columns ordered by sorted distinct label (``group_levels``).
    All arrays are marked read-only; a DataSet is safe to share across
    concurrently running chains.
    """

    y: np.ndarray
    X: np.ndarray
    feature_names: tuple[str, ...]
    Z: np.ndarray | None = None
    group_labels: tuple[str, ...] | None = None
    group_levels: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        y_raw = np.asarray(self.y, dtype=float).reshape(-1)
        if not np.isin(y_raw, (0.0, 1.0)).all():
            raise DataError("y must contain only 0/1 values")
        y = y_raw.astype(np.int64)
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

        n = y.size
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if X.ndim != 2 or X.shape[0] != n:
            raise DataError(f"X must be n x p with n = {n}, got shape {X.shape}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError(
                f"{len(self.feature_names)} feature names for {X.shape[1]} columns"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")
        if not 0 < int(y.sum()) < n:
            raise DataError("y must contain at least one 0 and one 1")
        if not np.isfinite(X).all():
            raise DataError("X contains non-finite entries")

        labels = self.group_labels
        if labels is not None:
            labels = tuple(str(g) for g in labels)
            object.__setattr__(self, "group_labels", labels)
            if len(labels) != n:
                raise DataError(f"{len(labels)} group labels for {n} rows")
            levels = tuple(sorted(set(labels)))
            object.__setattr__(self, "group_levels", levels)
            if self.Z is None:
                col = {g: j for j, g in enumerate(levels)}
                Z = np.zeros((n, len(levels)))
                Z[np.arange(n), [col[g] for g in labels]] = 1.0
                object.__setattr__(self, "Z", Z)

        if self.Z is not None:
            Z = np.ascontiguousarray(np.asarray(self.Z, dtype=float))
            object.__setattr__(self, "Z", Z)
            if Z.ndim != 2 or Z.shape[0] != n:
                raise DataError(f"Z must be n x q with n = {n}, got shape {Z.shape}")
            if not np.isfinite(Z).all():
                raise DataError("Z contains non-finite entries")
            if labels is not None:
                # Z must be exactly the one-hot encoding of the labels
                if Z.shape[1] != len(self.group_levels):
                    raise DataError(
                        f"Z has {Z.shape[1]} columns for {len(self.group_levels)} group levels"
                    )
                col = {g: j for j, g in enumerate(self.group_levels)}
                expect = np.zeros_like(Z)
                expect[np.arange(n), [col[g] for g in labels]] = 1.0
                if not np.array_equal(Z, expect):
                    raise DataError("Z is not the one-hot encoding of group_labels")
                counts = Z.sum(axis=0)
                if (counts == 0).any():
                    empty = self.group_levels[int(np.argmin(counts))]
                    raise DataError(f"group level {empty!r} has zero rows")

        for arr in (self.y, self.X, self.Z):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]


def _parse_float(cell: str, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(
            f"line {line}, column {column!r}: cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise DataError(f"line {line}, column {column!r}: non-finite value {cell!r}")
    return value


def load_csv_dataset(
    path,
    y_column: str = "y",
    group_column: str | None = None,
) -> DataSet:
    """Load a DataSet from a headered CSV file.

    ``X`` is every column except the outcome and (optional) group
    column, in file order.  When ``group_column`` is given, ``Z`` is the
    one-hot encoding of that column.  Any cell that fails to parse is a
    hard error naming the file line and column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"{path}: duplicate column names {dupes}")
    if header.count(y_column) != 1:
        raise DataError(f"{path}: outcome column {y_column!r} not found")
    if group_column is not None and header.count(group_column) != 1:
        raise DataError(f"{path}: group column {group_column!r} not found")

    y_pos = header.index(y_column)
    group_pos = header.index(group_column) if group_column is not None else None
    feature_pos = [
        j for j in range(len(header)) if j != y_pos and j != group_pos
    ]
    feature_names = tuple(header[j] for j in feature_pos)
    if not feature_names:
        raise DataError(f"{path}: no feature columns")
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(rows)}")

    n = len(rows)
    y = np.empty(n, dtype=np.int64)
    X = np.empty((n, len(feature_pos)))
    labels: list[str] = []
    for i, row in enumerate(rows):
        line = i + 2  # 1-based, header is line 1
        if len(row) != len(header):
            raise DataError(
                f"{path}: line {line}: expected {len(header)} cells, got {len(row)}"
            )
        y_val = _parse_float(row[y_pos], line, y_column)
        if y_val not in (0.0, 1.0):
            raise DataError(
                f"{path}: line {line}: y value {row[y_pos]!r} is not 0 or 1"
            )
        y[i] = int(y_val)
        if group_pos is not None:
            label = row[group_pos].strip()
            if not label:
                raise DataError(f"{path}: line {line}: empty group label")
            labels.append(label)
        for k, j in enumerate(feature_pos):
            X[i, k] = _parse_float(row[j], line, header[j])

    return DataSet(
        y=y,
        X=X,
        feature_names=feature_names,
        group_labels=tuple(labels) if group_pos is not None else None,
    )


def save_csv_dataset(data: DataSet, path, group_column: str = "group") -> None:
    """Write a DataSet back to CSV, bit-exact under reload.

    Floats are serialized with ``repr`` (shortest round-trip form), so
    ``load_csv_dataset(save_csv_dataset(d))`` reproduces ``d`` exactly.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["y"]
        if data.group_labels is not None:
            header.append(group_column)
        header.extend(data.feature_names)
        writer.writerow(header)
        for i in range(data.n):
            row = [str(int(data.y[i]))]
            if data.group_labels is not None:
                row.append(data.group_labels[i])
            row.extend(repr(float(v)) for v in data.X[i])
            writer.writerow(row)


def subset_rows(data: DataSet, rows: np.ndarray) -> DataSet:
    """New DataSet from a row index subset.

    With group labels present, Z is rebuilt from the labels that survive
    (levels may shrink); a label-free Z is sliced as-is.
    """
    rows = np.asarray(rows, dtype=np.int64)
    labels = (
        tuple(data.group_labels[i] for i in rows)
        if data.group_labels is not None
        else None
    )
    Z = None
    if labels is None and data.Z is not None:
        Z = data.Z[rows]
    return DataSet(
        y=data.y[rows],
        X=data.X[rows],
        feature_names=data.feature_names,
        Z=Z,
        group_labels=labels,
    )


def stratified_split(
    data: DataSet, fraction: float, seed: int
) -> tuple[DataSet, DataSet]:
    """Partition into train/validation keeping class shares per group.

    Stratification cells are (group x class) when group labels exist,
    otherwise just class.  Each cell contributes
    ``round(fraction * cell_size)`` rows to the training side.  The
    partition is deterministic given ``seed``; row order is preserved.
    """
    if not 0.0 < float(fraction) < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    counts = np.bincount(data.y, minlength=2)
    if counts[0] < 2 or counts[1] < 2:
        raise DataError("both classes need at least 2 members to split")

    if data.group_labels is not None:
        keys = [(g, int(c)) for g in data.group_levels for c in (0, 1)]
        cells = {k: [] for k in keys}
        for i, (g, c) in enumerate(zip(data.group_labels, data.y)):
            cells[(g, int(c))].append(i)
        for (g, c), idx in cells.items():
            if len(idx) < 2:
                raise DataError(
                    f"stratification cell (group {g!r}, class {c}) has "
                    f"{len(idx)} rows; need at least 2"
                )
    else:
        cells = {c: np.flatnonzero(data.y == c).tolist() for c in (0, 1)}

    gen = np.random.default_rng(seed)
    train_rows: list[int] = []
    val_rows: list[int] = []
    for key in cells:
        idx = np.asarray(cells[key], dtype=np.int64)
        perm = gen.permutation(idx.size)
        n_train = int(np.floor(fraction * idx.size + 0.5))
        chosen = idx[perm[:n_train]]
        rest = idx[perm[n_train:]]
        train_rows.extend(chosen.tolist())
        val_rows.extend(rest.tolist())

    train_rows = np.sort(np.asarray(train_rows, dtype=np.int64))
    val_rows = np.sort(np.asarray(val_rows, dtype=np.int64))
    return subset_rows(data, train_rows), subset_rows(data, val_rows)


def standardize_columns(data: DataSet) -> DataSet:
    """Z-score every feature column (population standard deviation)."""
    mean = data.X.mean(axis=0)
    sd = data.X.std(axis=0)
    flat = np.flatnonzero(sd == 0.0)
    if flat.size:
        raise DataError(
            f"cannot standardize constant column {data.feature_names[flat[0]]!r}"
        )
    return DataSet(
        y=data.y,
        X=(data.X - mean) / sd,
        feature_names=data.feature_names,
        Z=data.Z,
        group_labels=data.group_labels,
    )
