import datetime as dt

import numpy as np
import pytest

from pgtrader.market_data import Bar, MarketSeries, split


def make_series(prices, warmup_len=None, sentiments=None, rf=0.0, symbol="TST"):
    """Series with the given prices on consecutive dates."""
    start = dt.date(2021, 1, 1)
    sentiments = sentiments or [0.0] * len(prices)
    bars = tuple(
        Bar(date=start + dt.timedelta(days=i), price=float(p), sentiment=float(s))
        for i, (p, s) in enumerate(zip(prices, sentiments))
    )
    series = MarketSeries(symbol=symbol, bars=bars, rf=rf)
    if warmup_len is not None:
        series = split(series, warmup_len)
    return series


@pytest.fixture
def flat_series():
    return make_series([100.0] * 12, warmup_len=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_csv(path, rows, header=("date", "close", "sentiment")):
    path.write_text(
        ",".join(header) + "\n" + "".join(",".join(str(v) for v in r) + "\n" for r in rows)
    )
    return str(path)
