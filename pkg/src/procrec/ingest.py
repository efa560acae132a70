"""Price CSV ingestion, log returns, summary stats, and series splitting.

Input CSV contract: a header row, one row per observation, with a timestamp
column (ISO-8601 or epoch seconds, assumed UTC when naive) and a positive
price column. Column names are configurable; defaults are ``timestamp`` and
``price``. Rows are canonicalized by sorting on timestamp.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    DuplicateTimestamp,
    MalformedRow,
    NonPositivePrice,
    SeriesTooShort,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ColumnSchema",
    "PricePoint",
    "PriceSeries",
    "ReturnSeries",
    "SeriesStats",
    "load_price_csv",
    "compute_log_returns",
    "compute_stats",
    "split_halves",
    "phase_space_pairs",
    "write_phase_space_csv",
]


@dataclass(frozen=True)
class ColumnSchema:
    """Maps the logical timestamp/price fields onto CSV column names."""

    timestamp: str = "timestamp"
    price: str = "price"


@dataclass(frozen=True)
class PricePoint:
    timestamp: datetime
    price: float

    def __post_init__(self):
        if not (self.price > 0 and np.isfinite(self.price)):
            raise ValueError(f"price must be positive and finite, got {self.price}")


@dataclass(frozen=True)
class PriceSeries:
    """Ordered hourly price observations for one instrument.

    Timestamps are strictly increasing; at least two points are required so
    that a return can be formed.
    """

    instrument: str
    points: tuple[PricePoint, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise SeriesTooShort(
                f"{self.instrument}: need at least 2 price points, got {len(self.points)}"
            )
        for a, b in zip(self.points, self.points[1:]):
            if a.timestamp >= b.timestamp:
                raise ValueError(
                    f"{self.instrument}: timestamps not strictly increasing at {b.timestamp}"
                )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def prices(self) -> np.ndarray:
        return np.array([p.price for p in self.points], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ReturnSeries:
    """One-period log returns, dimensionless, one shorter than the price series.

    ``span`` records the first and last timestamp of the source price series;
    slices produced by :func:`split_halves` keep the parent span as provenance.
    """

    instrument: str
    values: np.ndarray
    span: tuple[datetime, datetime]

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.instrument}: non-finite return values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SeriesStats:
    """Sample mean and population standard deviation (divisor N) of a return series."""

    mean: float
    std: float
    count: int

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("std must be nonnegative")


def _parse_timestamp(raw: str) -> datetime:
    text = raw.strip()
    try:
        epoch = float(text)
    except ValueError:
        pass
    else:
        return datetime.fromtimestamp(epoch, tz=timezone.utc)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def load_price_csv(
    path: str | Path,
    schema: ColumnSchema | None = None,
    *,
    instrument: str | None = None,
    lenient: bool = False,
) -> PriceSeries:
    """Load one instrument's price series from a CSV file.

    Rows are sorted by timestamp before validation, so out-of-order input is
    accepted. In strict mode (default) the first malformed, non-positive or
    duplicate-timestamp row aborts the load with its line number. With
    ``lenient=True`` offending rows are skipped with a logged warning;
    duplicate timestamps keep the first occurrence in file order.
    """
    path = Path(path)
    schema = schema or ColumnSchema()
    name = instrument if instrument is not None else path.stem

    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file, expected a header row") from None
        header = [h.strip() for h in header]
        try:
            ts_col = header.index(schema.timestamp)
            price_col = header.index(schema.price)
        except ValueError:
            raise MalformedRow(
                1,
                f"header {header!r} does not contain columns "
                f"{schema.timestamp!r} and {schema.price!r}",
            ) from None
        n_cols = max(ts_col, price_col) + 1

        rows: list[tuple[datetime, float, int]] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) < n_cols:
                    raise ValueError("too few fields")
                ts = _parse_timestamp(row[ts_col])
                price = float(row[price_col].strip())
            except (ValueError, OverflowError, OSError) as exc:
                if lenient:
                    logger.warning("%s line %d skipped: %s", path, line, exc)
                    continue
                raise MalformedRow(line, f"unparseable row {row!r}") from None
            if not (price > 0 and np.isfinite(price)):
                if lenient:
                    logger.warning("%s line %d skipped: non-positive price %r", path, line, price)
                    continue
                raise NonPositivePrice(line, f"price {price!r} is not positive")
            rows.append((ts, price, line))

    rows.sort(key=lambda r: (r[0], r[2]))
    points: list[PricePoint] = []
    last_ts: datetime | None = None
    for ts, price, line in rows:
        if last_ts is not None and ts == last_ts:
            if lenient:
                logger.warning("%s line %d skipped: duplicate timestamp %s", path, line, ts)
                continue
            raise DuplicateTimestamp(line, f"timestamp {ts.isoformat()} repeats")
        points.append(PricePoint(ts, price))
        last_ts = ts

    if len(points) < 2:
        raise SeriesTooShort(f"{path}: only {len(points)} usable rows, need at least 2")
    return PriceSeries(instrument=name, points=tuple(points))


def compute_log_returns(prices: PriceSeries) -> ReturnSeries:
    """Natural-log price ratios: values[i] = ln(price[i+1]) - ln(price[i])."""
    p = prices.prices
    if len(p) < 2:
        raise SeriesTooShort(f"{prices.instrument}: need at least 2 prices")
    values = np.diff(np.log(p))
    return ReturnSeries(
        instrument=prices.instrument,
        values=values,
        span=(prices.points[0].timestamp, prices.points[-1].timestamp),
    )


def compute_stats(returns: ReturnSeries) -> SeriesStats:
    """Arithmetic mean and population standard deviation (divisor N)."""
    if len(returns) < 2:
        raise SeriesTooShort(f"{returns.instrument}: need at least 2 returns for stats")
    values = returns.values
    return SeriesStats(
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        count=len(values),
    )


def split_halves(returns: ReturnSeries) -> tuple[ReturnSeries, ReturnSeries]:
    """Split into a training half H1 and a test half H2.

    H1 gets the first floor(n/2) values; an odd leftover goes to H2 so the
    training half is never the larger one. Concatenating the halves
    reproduces the input exactly.
    """
    n = len(returns)
    if n < 4:
        raise SeriesTooShort(f"{returns.instrument}: need at least 4 returns to split, got {n}")
    cut = n // 2
    h1 = ReturnSeries(returns.instrument, returns.values[:cut].copy(), returns.span)
    h2 = ReturnSeries(returns.instrument, returns.values[cut:].copy(), returns.span)
    return h1, h2


def phase_space_pairs(returns: ReturnSeries) -> list[tuple[float, float]]:
    """Consecutive return pairs (r_t, r_{t+1}), the plot-ready dynamics data."""
    if len(returns) < 2:
        raise SeriesTooShort(f"{returns.instrument}: need at least 2 returns for pairs")
    v = returns.values
    return [(float(a), float(b)) for a, b in zip(v[:-1], v[1:])]


def write_phase_space_csv(pairs: Iterable[tuple[float, float]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r_t", "r_t_plus_1"])
        for a, b in pairs:
            writer.writerow([repr(a), repr(b)])
