import datetime as dt

import pytest

from pgtrader.errors import BoundsError, ConfigError, DataError, ParseError, ValidationError
from pgtrader.market_data import Bar, load_series, split, synthetic_series

from conftest import make_series, write_csv


class TestLoadSeries:
    def test_three_rows_parse_in_date_order(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-03", 12, 0.1), ("2021-01-01", 10, 0.0), ("2021-01-02", 11, -0.2)],
        )
        series = load_series(path)
        assert [b.price for b in series.bars] == [10.0, 11.0, 12.0]
        assert [b.date.day for b in series.bars] == [1, 2, 3]
        assert series.bars[2].sentiment == 0.1

    def test_zero_price_names_the_row(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-01", 10, 0.0), ("2021-01-02", 0, 0.0), ("2021-01-03", 11, 0.0)],
        )
        with pytest.raises(ValidationError, match="line 3"):
            load_series(path)

    def test_missing_sentiment_column_defaults_zero(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-01", 10), ("2021-01-02", 11)],
            header=("date", "close"),
        )
        series = load_series(path)
        assert all(b.sentiment == 0.0 for b in series.bars)

    def test_malformed_row_names_line(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-01", 10, 0.0), ("not-a-date", 11, 0.0)],
        )
        with pytest.raises(ParseError, match="line 3"):
            load_series(path)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(DataError):
            load_series(str(p))

    def test_header_only_rejected(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("date,close,sentiment\n")
        with pytest.raises(DataError, match="no data rows"):
            load_series(str(p))

    def test_duplicate_dates_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-01", 10, 0.0), ("2021-01-01", 11, 0.0)],
        )
        with pytest.raises(ValidationError, match="duplicate date"):
            load_series(path)

    def test_missing_price_column_rejected(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", [("2021-01-01", 10)], header=("date", "px"))
        with pytest.raises(DataError, match="close"):
            load_series(path)

    def test_schema_remaps_columns(self, tmp_path):
        path = write_csv(
            tmp_path / "a.csv",
            [("2021-01-01", 10, 0.5)],
            header=("day", "px", "mood"),
        )
        series = load_series(path, schema={"date": "day", "price": "px", "sentiment": "mood"})
        assert series.bars[0].price == 10.0
        assert series.bars[0].sentiment == 0.5


class TestBarInvariants:
    def test_negative_price_rejected(self):
        with pytest.raises(ValidationError):
            Bar(date=dt.date(2021, 1, 1), price=-5.0)

    def test_sentiment_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            Bar(date=dt.date(2021, 1, 1), price=5.0, sentiment=1.5)

    def test_non_increasing_dates_rejected(self):
        from pgtrader.market_data import MarketSeries

        b = Bar(date=dt.date(2021, 1, 1), price=10.0)
        with pytest.raises(ValidationError):
            MarketSeries(symbol="X", bars=(b, b))


class TestSplit:
    def test_ten_bars_warmup_three(self):
        series = split(make_series(range(10, 20)), 3)
        assert series.warmup_range == (0, 3)
        assert series.test_range == (3, 10)
        assert len(series.warmup_bars) == 3
        assert len(series.test_bars) == 7

    @pytest.mark.parametrize("warmup_len", [0, 10, 11, -1])
    def test_out_of_range_warmup_rejected(self, warmup_len):
        with pytest.raises(BoundsError):
            split(make_series(range(10, 20)), warmup_len)

    def test_split_is_lossless(self):
        series = split(make_series(range(10, 20)), 4)
        assert series.warmup_bars + series.test_bars == series.bars


class TestSynthetic:
    def test_alternating_period_two(self):
        series = synthetic_series("alternating", seed=0, length=6)
        assert [b.price for b in series.bars] == [10.0, 12.0, 10.0, 12.0, 10.0, 12.0]

    def test_same_seed_identical(self):
        a = synthetic_series("random_walk", seed=7, length=50)
        b = synthetic_series("random_walk", seed=7, length=50)
        assert [x.price for x in a.bars] == [x.price for x in b.bars]

    def test_different_seed_differs(self):
        a = synthetic_series("random_walk", seed=7, length=50)
        b = synthetic_series("random_walk", seed=8, length=50)
        assert [x.price for x in a.bars] != [x.price for x in b.bars]

    @pytest.mark.parametrize("name", ["alternating", "sinusoid", "trend", "random_walk"])
    def test_all_generators_positive_increasing_dates(self, name):
        series = synthetic_series(name, seed=3, length=40)
        assert all(b.price > 0 for b in series.bars)
        dates = [b.date for b in series.bars]
        assert dates == sorted(dates) and len(set(dates)) == len(dates)

    def test_unknown_generator_rejected(self):
        with pytest.raises(ConfigError):
            synthetic_series("lottery", seed=0, length=10)

    def test_unknown_param_rejected(self):
        with pytest.raises(ConfigError):
            synthetic_series("trend", seed=0, length=10, wiggle=3)

    def test_roundtrip_through_csv(self, tmp_path):
        from pgtrader.market_data import write_csv as dump

        series = synthetic_series("sinusoid", seed=1, length=25)
        path = tmp_path / "syn.csv"
        dump(series, str(path))
        loaded = load_series(str(path))
        assert [b.price for b in loaded.bars] == [b.price for b in series.bars]
        assert [b.date for b in loaded.bars] == [b.date for b in series.bars]
