"""Univariate monthly series: loading, validation, transforms and summaries.

The CSV reader works line by line so that every problem can be reported with
the offending line number.
"""

import logging
import os
import re
from dataclasses import dataclass, field, replace
from typing import Iterator
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike, NDArray
from statsmodels.tsa import stattools

from errors import DataError, NumericalError, ValidationError
from eval_stats import pearson
from math_utils import add_months, difference_polynomial

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"
BUILTIN_DATASETS = {"airpassengers": "airpassengers.csv"}
DATE_PREFIX = re.compile(r"\s*\d{4}-\d{1,2}\b")


def find_file(name: str, subfolders: list[str] = None) -> str:
    """Find a file in the project directory by name

    Args:
        name (str): Name of the file
        subfolders (list[str], optional): Folders to search. Defaults to "data/".

    Raises:
        FileNotFoundError: Throws if file is not found.

    Returns:
        str: Full file path
    """
    if subfolders is None:
        subfolders = ["data/"]

    main_directory = os.path.dirname(os.path.abspath(__file__))

    # Search in the project directory first
    if os.path.isfile(os.path.join(main_directory, name)):
        return os.path.join(main_directory, name)

    for folder in subfolders:
        if os.path.isfile(os.path.join(main_directory, folder, name)):
            return os.path.join(main_directory, folder, name)

    raise FileNotFoundError(f" (E) File {name} not found!")


@dataclass(frozen=True)
class DifferencingStep:
    """One application of (1 - B)^d (1 - B^s)^D, with the values it consumed."""

    d: int
    D: int
    s: int
    prefix: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Ordered monthly observations starting at a calendar month.

    `history` records every differencing step applied to reach these values so
    that `inverse_difference` can rebuild the undifferenced series exactly.
    """

    start: tuple[int, int]
    values: NDArray
    transform_log: bool = False
    history: tuple[DifferencingStep, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        if values.size == 0:
            raise DataError("(E) a time series needs at least one observation")
        if not np.all(np.isfinite(values)):
            raise DataError("(E) time series contains missing or non-finite values")
        year, month = self.start
        if not 1 <= month <= 12:
            raise DataError(f"(E) invalid start month {month}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start", (int(year), int(month)))

    def __len__(self) -> int:
        return len(self.values)

    def month_at(self, index: int) -> tuple[int, int]:
        """Calendar (year, month) of the observation at a position."""
        return add_months(self.start[0], self.start[1], index)

    def months(self) -> Iterator[tuple[int, int]]:
        """Calendar index of every observation, in order."""
        for index in range(len(self)):
            yield self.month_at(index)

    @property
    def end(self) -> tuple[int, int]:
        return self.month_at(len(self) - 1)

    def window(self, start: tuple[int, int], end: tuple[int, int]) -> Self:
        """Slice the series to the inclusive calendar window [start, end].

        Raises:
            DataError: If the window does not overlap the series.
        """
        first = _month_offset(self.start, start)
        last = _month_offset(self.start, end)
        first, last = max(first, 0), min(last, len(self) - 1)
        if first > last:
            raise DataError(f"(E) window {start}..{end} lies outside the series")
        return replace(
            self,
            start=self.month_at(first),
            values=self.values[first : last + 1],
            history=(),
        )

    @classmethod
    def from_csv(cls, path: str) -> Self:
        """Load a series from a `date,value` CSV file. See `load_csv`."""
        return load_csv(path)


def _month_offset(origin: tuple[int, int], month: tuple[int, int]) -> int:
    return (month[0] - origin[0]) * 12 + (month[1] - origin[1])


def parse_month(text: str) -> tuple[int, int]:
    """Parse `YYYY-MM` or `YYYY-MM-DD` (the day is ignored).

    Raises:
        ValueError: If the text is not a date in one of those forms.
    """
    fields = text.strip().split("-")
    if len(fields) not in (2, 3) or len(fields[0]) != 4:
        raise ValueError(f"malformed date '{text}'")
    year, month = int(fields[0]), int(fields[1])
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in '{text}'")
    if len(fields) == 3 and not 1 <= int(fields[2]) <= 31:
        raise ValueError(f"day out of range in '{text}'")
    return year, month


def process_line(line: str, line_no: int) -> tuple[tuple[int, int], float] | None:
    """Parse one CSV line into ((year, month), value). Blank lines give None.

    Raises:
        DataError: With the line number for malformed dates or values.
    """
    fields = [token.strip() for token in line.strip().split(",")]
    if fields == [""]:
        return None
    if len(fields) != 2:
        raise DataError(f"(E) line {line_no}: expected 2 columns, found {len(fields)}")

    try:
        month = parse_month(fields[0])
    except ValueError as e:
        raise DataError(f"(E) line {line_no}: {e}") from e

    try:
        value = float(fields[1])
    except ValueError as e:
        raise DataError(f"(E) line {line_no}: non-numeric value '{fields[1]}'") from e
    if not np.isfinite(value):
        raise DataError(f"(E) line {line_no}: missing value '{fields[1]}'")

    return month, value


def resolve_path(path: str) -> str:
    """Map `builtin:<name>` to the bundled file, leave other paths untouched."""
    if not path.startswith(BUILTIN_PREFIX):
        return path
    name = path[len(BUILTIN_PREFIX) :]
    if name not in BUILTIN_DATASETS:
        raise DataError(f"(E) unknown builtin dataset '{name}'")
    return find_file(BUILTIN_DATASETS[name])


def load_csv(path: str) -> TimeSeries:
    """Load a monthly series from a two column `date,value` CSV file.

    The first line is treated as a header when it does not start with a date.

    Args:
        path (str): File path, or `builtin:airpassengers` for the bundled series

    Raises:
        DataError: For malformed dates, non-numeric values, out of order dates or gaps.

    Returns:
        TimeSeries: The series in file order
    """
    file = resolve_path(path)
    start = None
    previous = None
    values = []

    try:
        with open(file, encoding="utf-8") as csv_file:
            for line_no, line in enumerate(csv_file, start=1):
                try:
                    data = process_line(line, line_no)
                except DataError:
                    # Only a first line that does not start with a date is a header
                    if line_no == 1 and not DATE_PREFIX.match(line):
                        continue
                    raise

                if data is None:
                    continue

                month, value = data
                if previous is not None:
                    step = _month_offset(previous, month)
                    if step <= 0:
                        raise DataError(
                            f"(E) line {line_no}: dates are not increasing"
                            f" ({month[0]}-{month[1]:02d} after"
                            f" {previous[0]}-{previous[1]:02d})"
                        )
                    if step > 1:
                        raise DataError(
                            f"(E) line {line_no}: gap of {step - 1} month(s) before"
                            f" {month[0]}-{month[1]:02d}"
                        )
                else:
                    start = month

                previous = month
                values.append(value)
    except OSError as e:
        raise DataError(f"(E) could not read {file}: {e}") from e

    if not values:
        raise DataError(f"(E) no observations found in {file}")

    logger.debug("Loaded %d observations from %s", len(values), file)
    return TimeSeries(start=start, values=np.array(values))


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    std_dev: float
    min: float
    q25: float
    median: float
    q75: float
    max: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mean": self.mean,
            "std_dev": self.std_dev,
            "min": self.min,
            "q25": self.q25,
            "median": self.median,
            "q75": self.q75,
            "max": self.max,
        }


def descriptive_stats(ts: TimeSeries) -> StatsSummary:
    """Summarise a series. Std dev uses n - 1, quartiles use linear interpolation."""
    values = ts.values
    std_dev = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    q25, median, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return StatsSummary(
        mean=float(np.mean(values)),
        std_dev=std_dev,
        min=float(np.min(values)),
        q25=float(q25),
        median=float(median),
        q75=float(q75),
        max=float(np.max(values)),
    )


def lag_correlations(
    ts: TimeSeries, max_lag: int, detrend: bool = False
) -> list[tuple[int, float]]:
    """Pearson correlation between y_t and y_(t-k) for k = 1..max_lag.

    Args:
        ts (TimeSeries): The series
        max_lag (int): Largest lag to evaluate
        detrend (bool, optional): Correlate first differences instead of levels,
            which removes the trend so the yearly cycle dominates. Defaults to False.

    Raises:
        ValidationError: If the series is too short for max_lag.

    Returns:
        list[tuple[int, float]]: (lag, correlation) pairs
    """
    values = ts.values
    if detrend:
        values = np.diff(values)
    if max_lag < 1 or len(values) <= max_lag + 2:
        raise ValidationError(
            f"(E) max_lag {max_lag} is too large for a series of length {len(values)}"
        )
    return [(k, pearson(values[k:], values[:-k])) for k in range(1, max_lag + 1)]


#
# Transforms
#


def log_transform(ts: TimeSeries) -> TimeSeries:
    """Natural log of every value. Marks the series as log scale.

    Raises:
        DataError: If any value is not strictly positive.
    """
    if np.any(ts.values <= 0):
        raise DataError("(E) log transform needs strictly positive values")
    return replace(ts, values=np.log(ts.values), transform_log=True)


def exp_transform(ts: TimeSeries) -> TimeSeries:
    """Inverse of `log_transform`."""
    return replace(ts, values=np.exp(ts.values), transform_log=False)


def difference(ts: TimeSeries, d: int, D: int, s: int) -> TimeSeries:
    """Apply (1 - B)^d (1 - B^s)^D to the series.

    The result is d + D*s observations shorter. The consumed prefix is kept on
    the returned series so `inverse_difference` is exact.

    Raises:
        ValidationError: For negative orders or a non-positive period.
        DataError: If the series is too short.
    """
    if d < 0 or D < 0 or s < 1:
        raise ValidationError(f"(E) invalid differencing orders d={d}, D={D}, s={s}")

    lost = d + D * s
    if len(ts) <= lost:
        raise DataError(
            f"(E) series of length {len(ts)} is too short for d={d}, D={D}, s={s}"
        )

    poly = difference_polynomial(d, D, s)
    differenced = np.convolve(ts.values, poly)[lost : len(ts)]
    step = DifferencingStep(d=d, D=D, s=s, prefix=tuple(ts.values[:lost].tolist()))

    return TimeSeries(
        start=ts.month_at(lost),
        values=differenced,
        transform_log=ts.transform_log,
        history=ts.history + (step,),
    )


def integrate(
    differenced: ArrayLike, history: ArrayLike, d: int, D: int, s: int
) -> NDArray:
    """Undo (1 - B)^d (1 - B^s)^D given the values that precede the differenced ones.

    Args:
        differenced (ArrayLike): Values on the differenced scale
        history (ArrayLike): At least d + D*s undifferenced values immediately before them
        d (int): Ordinary differencing order
        D (int): Seasonal differencing order
        s (int): Seasonal period

    Returns:
        NDArray: The undifferenced values aligned with `differenced`
    """
    poly = difference_polynomial(d, D, s)
    lost = len(poly) - 1
    levels = list(np.asarray(history, dtype=np.float64)[len(history) - lost :])
    out = np.empty(len(differenced))

    for i, w in enumerate(differenced):
        level = w
        for k in range(1, lost + 1):
            level -= poly[k] * levels[-k]
        levels.append(level)
        out[i] = level

    return out


def inverse_difference(ts: TimeSeries) -> TimeSeries:
    """Undo the most recent `difference` call, restoring the consumed prefix.

    Raises:
        ValidationError: If the series was never differenced.
    """
    if not ts.history:
        raise ValidationError("(E) series has no differencing to invert")

    step = ts.history[-1]
    tail = integrate(ts.values, step.prefix, step.d, step.D, step.s)
    restored = np.concatenate([np.array(step.prefix, dtype=np.float64), tail])

    return TimeSeries(
        start=ts.month_at(-len(step.prefix)),
        values=restored,
        transform_log=ts.transform_log,
        history=ts.history[:-1],
    )


#
# Autocorrelation
#


def acf(ts: TimeSeries, max_lag: int) -> NDArray:
    """Sample autocorrelation for lags 0..max_lag (biased estimator, acf(0) = 1).

    Raises:
        ValidationError: If the series is not longer than max_lag.
        NumericalError: If the series has zero variance.
    """
    values = ts.values
    n = len(values)
    if max_lag < 0 or n <= max_lag:
        raise ValidationError(f"(E) need more than {max_lag} observations, got {n}")
    if np.all(values == values[0]):
        raise NumericalError("(E) autocorrelation of a zero-variance series")

    return stattools.acf(values, nlags=max_lag, adjusted=False, fft=False)


def pacf(ts: TimeSeries, max_lag: int) -> NDArray:
    """Partial autocorrelation for lags 0..max_lag via the Durbin-Levinson recursion.

    Raises:
        ValidationError: If max_lag is not below half the series length.
        NumericalError: If the series has zero variance.
    """
    values = ts.values
    if max_lag < 0 or max_lag >= len(values) // 2:
        raise ValidationError(
            f"(E) partial autocorrelation needs max_lag below {len(values) // 2}, got {max_lag}"
        )
    if np.all(values == values[0]):
        raise NumericalError("(E) autocorrelation of a zero-variance series")

    return stattools.pacf(values, nlags=max_lag, method="ldb")
