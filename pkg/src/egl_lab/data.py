"""Datasets with stable integer ids and their CSV serialization.

The on-disk schema is ``id,f0,...,f{d-1},y`` (UTF-8, ``.`` decimal separator,
unique non-negative integer ids). Row order is preserved on round trip.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataFormatError, DimensionMismatchError
from .validation import as_target_vector


@dataclass(frozen=True)
class Dataset:
    """An ordered pool of (features, target) points keyed by integer ids."""

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatchError("X must be 2-D (n_samples, n_features)")
        y = as_target_vector(self.y, X.shape[0])
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != X.shape[0]:
            raise DimensionMismatchError("ids length must match number of rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if np.any(ids < 0):
            raise DataFormatError("ids must be non-negative")
        if len(np.unique(ids)) != len(ids):
            raise DataFormatError("ids must be unique")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(
            self, "_positions", {int(i): p for p, i in enumerate(ids)}
        )

    @classmethod
    def from_arrays(cls, X, y, ids=None):
        X = np.asarray(X, dtype=np.float64)
        if ids is None:
            ids = np.arange(X.shape[0], dtype=np.int64)
        return cls(X=X, y=y, ids=ids)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def take(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(X=self.X[positions], y=self.y[positions], ids=self.ids[positions])

    def positions_of(self, ids):
        try:
            return np.array([self._positions[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise KeyError(f"id {exc.args[0]} not present in dataset") from None

    def take_ids(self, ids):
        """Subset by id, in the order the ids are given."""
        return self.take(self.positions_of(ids))

    def drop_ids(self, ids):
        """Remove the given ids, preserving the remaining row order."""
        drop = set(int(i) for i in ids)
        keep = [p for p, i in enumerate(self.ids) if int(i) not in drop]
        return self.take(np.asarray(keep, dtype=np.int64))

    def concat(self, other):
        if other.n_features != self.n_features:
            raise DimensionMismatchError("feature widths differ")
        return Dataset(
            X=np.vstack([self.X, other.X]),
            y=np.concatenate([self.y, other.y]),
            ids=np.concatenate([self.ids, other.ids]),
        )

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(csv_header(self.n_features))
            for i, x, t in zip(self.ids, self.X, self.y):
                writer.writerow([int(i), *[repr(float(v)) for v in x], repr(float(t))])

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataFormatError(f"{path}: empty file") from None
            d = _parse_header(header, path)
            ids, rows, targets = [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != d + 2:
                    raise DataFormatError(
                        f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}"
                    )
                try:
                    ids.append(int(row[0]))
                    rows.append([float(v) for v in row[1 : d + 1]])
                    targets.append(float(row[d + 1]))
                except ValueError as exc:
                    raise DataFormatError(f"{path}:{lineno}: {exc}") from None
        X = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
        return cls(X=X, y=np.asarray(targets), ids=np.asarray(ids, dtype=np.int64))


def csv_header(n_features):
    return ["id", *[f"f{j}" for j in range(n_features)], "y"]


def _parse_header(header, path):
    if len(header) < 3 or header[0] != "id" or header[-1] != "y":
        raise DataFormatError(f"{path}: header must be id,f0,...,y")
    d = len(header) - 2
    if header[1:-1] != [f"f{j}" for j in range(d)]:
        raise DataFormatError(f"{path}: feature columns must be f0..f{d - 1}")
    return d
