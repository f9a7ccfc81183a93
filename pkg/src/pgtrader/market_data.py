"""Loading, validation and windowing of single-asset market series.

A series is a date-ordered list of bars (close price plus a scalar
sentiment in [-1, 1]) with an optional warm-up/test split. Series are
immutable after load and safe to share across threads.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BoundsError, ConfigError, DataError, ParseError, ValidationError

DEFAULT_SCHEMA = {"date": "date", "price": "close", "sentiment": "sentiment"}


@dataclass(frozen=True)
class Bar:
    """One trading day: close price and scalar news sentiment."""

    date: dt.date
    price: float
    sentiment: float = 0.0

    def __post_init__(self):
        if not (self.price > 0.0 and math.isfinite(self.price)):
            raise ValidationError(f"price must be positive and finite, got {self.price}")
        if not (-1.0 <= self.sentiment <= 1.0):
            raise ValidationError(f"sentiment must lie in [-1, 1], got {self.sentiment}")


@dataclass(frozen=True)
class MarketSeries:
    """Ordered bars for one symbol, optionally split into warm-up and test windows.

    ``warmup_range`` / ``test_range`` are half-open index intervals; they are
    None until :func:`split` is applied. ``rf`` is the per-step risk-free
    rate used by Sharpe computations downstream.
    """

    symbol: str
    bars: tuple[Bar, ...]
    warmup_range: tuple[int, int] | None = None
    test_range: tuple[int, int] | None = None
    rf: float = 0.0

    def __post_init__(self):
        for prev, cur in zip(self.bars, self.bars[1:]):
            if cur.date <= prev.date:
                raise ValidationError(
                    f"bar dates must be strictly increasing, got {prev.date} then {cur.date}"
                )
        if (self.warmup_range is None) != (self.test_range is None):
            raise ConfigError("warmup_range and test_range must be set together")
        if self.warmup_range is not None:
            w0, w1 = self.warmup_range
            t0, t1 = self.test_range
            if not (0 == w0 < w1 == t0 < t1 == len(self.bars)):
                raise ConfigError(
                    f"split ranges must tile the series contiguously, got {self.warmup_range} / {self.test_range}"
                )

    def __len__(self) -> int:
        return len(self.bars)

    @property
    def is_split(self) -> bool:
        return self.warmup_range is not None

    @property
    def warmup_bars(self) -> tuple[Bar, ...]:
        if not self.is_split:
            raise ConfigError("series has not been split")
        return self.bars[self.warmup_range[0] : self.warmup_range[1]]

    @property
    def test_bars(self) -> tuple[Bar, ...]:
        if not self.is_split:
            raise ConfigError("series has not been split")
        return self.bars[self.test_range[0] : self.test_range[1]]

    def prices(self) -> np.ndarray:
        return np.array([b.price for b in self.bars], dtype=np.float64)


def load_series(
    path: str,
    schema: Mapping[str, str] | None = None,
    symbol: str = "ASSET",
    rf: float = 0.0,
) -> MarketSeries:
    """Read a CSV of (date, close[, sentiment]) rows into a validated series.

    Rows are sorted by date; duplicate dates are rejected. A missing
    sentiment column defaults every bar to 0.0.
    """
    cols = dict(DEFAULT_SCHEMA)
    if schema:
        cols.update(schema)

    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path!r}: {exc}") from exc

    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"empty input file: {path!r}")
        for required in (cols["date"], cols["price"]):
            if required not in reader.fieldnames:
                raise DataError(f"missing required column {required!r} in {path!r}")
        has_sentiment = cols["sentiment"] in reader.fieldnames

        rows: list[Bar] = []
        for row in reader:
            line_no = reader.line_num
            try:
                date = dt.date.fromisoformat(row[cols["date"]].strip())
                price = float(row[cols["price"]])
                sentiment = float(row[cols["sentiment"]]) if has_sentiment else 0.0
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"malformed row at line {line_no}: {exc}") from exc
            try:
                rows.append(Bar(date=date, price=price, sentiment=sentiment))
            except ValidationError as exc:
                raise ValidationError(f"line {line_no}: {exc}") from exc

    if not rows:
        raise DataError(f"no data rows in {path!r}")

    rows.sort(key=lambda b: b.date)
    for prev, cur in zip(rows, rows[1:]):
        if cur.date == prev.date:
            raise ValidationError(f"duplicate date {cur.date} in {path!r}")

    return MarketSeries(symbol=symbol, bars=tuple(rows), rf=rf)


def split(series: MarketSeries, warmup_len: int) -> MarketSeries:
    """Mark the first ``warmup_len`` bars as warm-up and the rest as test."""
    if not (0 < warmup_len < len(series)):
        raise BoundsError(
            f"warmup_len must be in (0, {len(series)}), got {warmup_len}"
        )
    return dataclasses.replace(
        series,
        warmup_range=(0, warmup_len),
        test_range=(warmup_len, len(series)),
    )


def _dates(n: int, start: dt.date = dt.date(2020, 1, 1)) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range(n)]


def synthetic_series(
    generator: str,
    seed: int,
    length: int,
    symbol: str | None = None,
    rf: float = 0.0,
    **params,
) -> MarketSeries:
    """Deterministic synthetic price series for tests and demos.

    Generators: ``alternating`` (period-2 lo/hi), ``sinusoid``, ``trend``
    and ``random_walk``. Identical (generator, seed, length, params)
    always produce identical series.
    """
    if length < 2:
        raise ConfigError(f"synthetic series needs length >= 2, got {length}")
    rng = np.random.default_rng(seed)
    i = np.arange(length, dtype=np.float64)

    if generator == "alternating":
        lo = float(params.pop("lo", 10.0))
        hi = float(params.pop("hi", 12.0))
        prices = np.where(i.astype(int) % 2 == 0, lo, hi)
    elif generator == "sinusoid":
        base = float(params.pop("base", 100.0))
        amp = float(params.pop("amp", 10.0))
        period = float(params.pop("period", 20.0))
        prices = base + amp * np.sin(2.0 * np.pi * i / period)
    elif generator == "trend":
        start = float(params.pop("start", 100.0))
        drift = float(params.pop("drift", 0.5))
        prices = start + drift * i
    elif generator == "random_walk":
        start = float(params.pop("start", 100.0))
        vol = float(params.pop("vol", 1.0))
        steps = rng.normal(0.0, vol, size=length - 1)
        prices = start * np.exp(np.concatenate([[0.0], np.cumsum(steps)]) * 0.01)
    else:
        raise ConfigError(f"unknown synthetic generator {generator!r}")
    if params:
        raise ConfigError(f"unknown generator parameters: {sorted(params)}")
    if np.any(prices <= 0):
        raise ConfigError(f"generator {generator!r} produced non-positive prices")

    bars = tuple(
        Bar(date=d, price=float(p)) for d, p in zip(_dates(length), prices)
    )
    return MarketSeries(symbol=symbol or generator.upper(), bars=bars, rf=rf)


def write_csv(series: MarketSeries, path: str) -> None:
    """Write a series back out in the canonical CSV layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "close", "sentiment"])
        for bar in series.bars:
            writer.writerow([bar.date.isoformat(), repr(bar.price), repr(bar.sentiment)])


__all__ = [
    "Bar",
    "MarketSeries",
    "load_series",
    "split",
    "synthetic_series",
    "write_csv",
    "DEFAULT_SCHEMA",
]
