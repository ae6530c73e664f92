"""Leakage-free supervised framing of a monthly series.

Every feature of the row dated t is computed from observations strictly
before t: lags, rolling statistics over the previous w months, and a cyclic
encoding of the calendar month of t itself.
"""

import csv
import logging
from dataclasses import dataclass, field, replace
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike, NDArray

from errors import DataError, ValidationError
from series_core import TimeSeries, parse_month

logger = logging.getLogger(__name__)

ROLLING_STATISTICS = ("mean", "std")


@dataclass(frozen=True)
class FeatureSpec:
    """Which features to build.

    Attributes:
        lags: Positive lags, lag_k(t) = y_(t-k)
        rolling_windows: Window length -> statistics among "mean" and "std"
        cyclic_month: Add month_sin / month_cos of the target month
        rolling_std_ddof: Denominator offset of the rolling std (n - 1 by default)
    """

    lags: tuple[int, ...] = tuple(range(1, 13))
    rolling_windows: dict[int, tuple[str, ...]] = field(
        default_factory=lambda: {12: ("mean", "std")}
    )
    cyclic_month: bool = True
    rolling_std_ddof: int = 1

    def __post_init__(self):
        lags = tuple(sorted(set(int(k) for k in self.lags)))
        if not lags or lags[0] < 1:
            raise ValidationError(f"(E) lags must be non-empty positive ints, got {self.lags}")
        windows = {}
        for window, statistics in sorted(self.rolling_windows.items()):
            if int(window) < 2:
                raise ValidationError(f"(E) rolling windows must be >= 2, got {window}")
            unknown = set(statistics) - set(ROLLING_STATISTICS)
            if unknown:
                raise ValidationError(f"(E) unknown rolling statistics {sorted(unknown)}")
            # Keep a fixed mean-then-std order
            windows[int(window)] = tuple(s for s in ROLLING_STATISTICS if s in statistics)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "rolling_windows", windows)

    @property
    def warm_up(self) -> int:
        """Number of leading observations with no complete feature row."""
        return max([max(self.lags), *self.rolling_windows])

    def column_names(self) -> tuple[str, ...]:
        names = [f"lag_{k}" for k in self.lags]
        for window, statistics in self.rolling_windows.items():
            names += [f"roll{statistic}_{window}" for statistic in statistics]
        if self.cyclic_month:
            names += ["month_sin", "month_cos"]
        return tuple(names)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Feature rows aligned with their target values and calendar months."""

    times: tuple[tuple[int, int], ...]
    columns: tuple[str, ...]
    rows: NDArray
    target: NDArray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        target = np.array(self.target, dtype=np.float64).ravel()
        if rows.ndim != 2:
            raise ValidationError(f"(E) feature rows must be 2-D, got shape {rows.shape}")
        if not len(self.times) == rows.shape[0] == len(target):
            raise ValidationError(
                f"(E) {len(self.times)} times, {rows.shape[0]} rows and"
                f" {len(target)} targets do not line up"
            )
        if rows.shape[1] != len(self.columns):
            raise ValidationError(
                f"(E) {rows.shape[1]} feature columns but {len(self.columns)} names"
            )
        rows.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "times", tuple(tuple(t) for t in self.times))
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.target)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def column_index(self, name: str) -> int:
        """Position of a named column.

        Raises:
            ValidationError: If there is no such column.
        """
        try:
            return self.columns.index(name)
        except ValueError as e:
            raise ValidationError(f"(E) unknown feature '{name}'") from e

    def column(self, name: str) -> NDArray:
        return self.rows[:, self.column_index(name)]

    def months(self) -> NDArray:
        """Calendar month (1-12) of every row."""
        return np.array([month for _, month in self.times], dtype=int)

    def take(self, indices: ArrayLike) -> Self:
        """Rows at the given positions, in the given order (repeats allowed)."""
        indices = np.asarray(indices, dtype=int)
        return replace(
            self,
            times=tuple(self.times[i] for i in indices),
            rows=self.rows[indices],
            target=self.target[indices],
        )

    def with_rows(self, rows: NDArray) -> Self:
        """Same times and targets with replacement feature values."""
        return replace(self, rows=rows)

    def index_of(self, month: tuple[int, int]) -> int:
        """Row position of a calendar month.

        Raises:
            ValidationError: If no row has that month.
        """
        try:
            return self.times.index(tuple(month))
        except ValueError as e:
            raise ValidationError(f"(E) no feature row for {month[0]}-{month[1]:02d}") from e

    def to_csv(self, path: str):
        """Write the matrix as CSV: ISO month first, features, target last."""
        with open(path, "w", encoding="utf-8", newline="") as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(["date", *self.columns, "target"])
            for time, row, target in zip(self.times, self.rows, self.target):
                writer.writerow(
                    [f"{time[0]:04d}-{time[1]:02d}", *map(repr, row.tolist()), repr(float(target))]
                )

    @classmethod
    def from_csv(cls, path: str) -> Self:
        """Read a matrix written by `to_csv`.

        Raises:
            DataError: With the line number of any malformed row.
        """
        with open(path, encoding="utf-8", newline="") as csv_file:
            reader = csv.reader(csv_file)
            header = next(reader, None)
            if header is None or len(header) < 3 or header[-1] != "target":
                raise DataError(f"(E) {path} is not a feature matrix export")

            times, rows, targets = [], [], []
            for line_no, fields in enumerate(reader, start=2):
                if len(fields) != len(header):
                    raise DataError(
                        f"(E) line {line_no}: expected {len(header)} fields, found {len(fields)}"
                    )
                try:
                    times.append(parse_month(fields[0]))
                    rows.append([float(v) for v in fields[1:-1]])
                    targets.append(float(fields[-1]))
                except ValueError as e:
                    raise DataError(f"(E) line {line_no}: {e}") from e

        return cls(
            times=tuple(times),
            columns=tuple(header[1:-1]),
            rows=np.array(rows).reshape(len(rows), len(header) - 2),
            target=np.array(targets),
        )


def build_feature_matrix(ts: TimeSeries, spec: FeatureSpec = None) -> FeatureMatrix:
    """Frame a series as a supervised table without looking ahead.

    The first `spec.warm_up` observations only feed features; rows start after them.

    Args:
        ts (TimeSeries): The series
        spec (FeatureSpec, optional): Feature definition. Defaults to FeatureSpec().

    Raises:
        DataError: If the series is too short to yield a single row.

    Returns:
        FeatureMatrix: One row per usable month
    """
    if spec is None:
        spec = FeatureSpec()

    y = ts.values
    n = len(y)
    warm_up = spec.warm_up
    if n <= warm_up:
        raise DataError(
            f"(E) series of length {n} is too short for a warm-up of {warm_up} months"
        )

    positions = np.arange(warm_up, n)
    columns = []

    for k in spec.lags:
        columns.append(y[positions - k])

    for window, statistics in spec.rolling_windows.items():
        # windows[i] covers y[i : i + window], so row t uses windows[t - window]
        windows = sliding_window_view(y, window)[positions - window]
        for statistic in statistics:
            if statistic == "mean":
                columns.append(np.mean(windows, axis=1))
            else:
                columns.append(np.std(windows, axis=1, ddof=spec.rolling_std_ddof))

    times = tuple(ts.month_at(i) for i in positions)

    if spec.cyclic_month:
        months = np.array([month for _, month in times], dtype=np.float64)
        columns.append(np.sin(2 * np.pi * months / 12))
        columns.append(np.cos(2 * np.pi * months / 12))

    return FeatureMatrix(
        times=times,
        columns=spec.column_names(),
        rows=np.column_stack(columns),
        target=y[positions],
    )


def chronological_split(
    fm: FeatureMatrix, test_months: int
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Hold out the final `test_months` rows. No shuffling.

    Raises:
        ValidationError: If test_months is not in 1..len(fm) - 1.
    """
    n = len(fm)
    if not 1 <= test_months < n:
        raise ValidationError(
            f"(E) test_months must be in 1..{n - 1} for {n} rows, got {test_months}"
        )
    split = n - test_months
    return fm.take(np.arange(split)), fm.take(np.arange(split, n))


class Standardizer:
    """Per-column z-scoring with statistics from the training rows only.

    Zero-variance columns are passed through untouched (centre 0, scale 1).
    """

    def __init__(self, columns: tuple[str, ...], mean: NDArray, scale: NDArray):
        self.columns = tuple(columns)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, train: FeatureMatrix) -> Self:
        if len(train) == 0:
            raise ValidationError("(E) cannot fit a standardizer on an empty matrix")
        mean = train.rows.mean(axis=0)
        scale = train.rows.std(axis=0)
        constant = scale == 0
        mean[constant] = 0.0
        scale[constant] = 1.0
        return cls(train.columns, mean, scale)

    def transform(self, rows: NDArray) -> NDArray:
        """Standardize raw feature rows (any leading shape)."""
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.scale

    def apply(self, fm: FeatureMatrix) -> FeatureMatrix:
        if fm.columns != self.columns:
            raise ValidationError("(E) standardizer was fitted on different columns")
        return fm.with_rows(self.transform(fm.rows))


def fit_standardizer(train: FeatureMatrix) -> Standardizer:
    return Standardizer.fit(train)


def apply_standardizer(sd: Standardizer, fm: FeatureMatrix) -> FeatureMatrix:
    return sd.apply(fm)


@dataclass(frozen=True)
class CvFolds:
    """Expanding-window folds as (train range, test range) pairs of row positions."""

    folds: tuple[tuple[range, range], ...]

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)


def expanding_cv_folds(n_rows: int, k: int = 5) -> CvFolds:
    """Chronological folds whose k test blocks tile the tail of the rows.

    The tail holds max(k, n_rows // (k + 1)) rows split into k consecutive
    blocks of equal size (the first blocks take any extra row). Fold i trains on
    every row before its test block.

    Raises:
        ValidationError: If k < 1 or n_rows < 2k.
    """
    if k < 1 or n_rows < 2 * k:
        raise ValidationError(f"(E) {n_rows} rows are too few for {k} folds")

    tail = max(k, n_rows // (k + 1))
    blocks = np.array_split(np.arange(n_rows - tail, n_rows), k)
    folds = tuple(
        (range(0, int(block[0])), range(int(block[0]), int(block[-1]) + 1))
        for block in blocks
    )
    return CvFolds(folds=folds)
