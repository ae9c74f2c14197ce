import math
import os
import stat

import numpy as np
import pytest

from npcopvar.errors import InvalidInputError
from npcopvar.io import (
    PriceSeries,
    atomic_writer,
    load_prices_csv,
    load_returns_csv,
    negative_log_returns,
    to_negative_log_returns,
    write_returns_csv,
)
from npcopvar.marginals import ReturnSeries


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadPrices:
    def test_two_rows(self, tmp_path):
        ps = load_prices_csv(write(tmp_path, "date,price\n2020-01-02,100\n2020-01-03,99\n"))
        assert len(ps) == 2
        assert ps.dates == ("2020-01-02", "2020-01-03")
        np.testing.assert_array_equal(ps.prices, [100.0, 99.0])

    def test_zero_price_names_row(self, tmp_path):
        p = write(tmp_path, "date,price\n2020-01-02,100\n2020-01-03,0\n2020-01-06,98\n")
        with pytest.raises(InvalidInputError, match="row 3"):
            load_prices_csv(p)

    def test_unparseable_price_names_row(self, tmp_path):
        p = write(tmp_path, "date,price\n2020-01-02,100\n2020-01-03,abc\n")
        with pytest.raises(InvalidInputError, match="row 3.*unparseable"):
            load_prices_csv(p)

    def test_unsorted_is_sorted(self, tmp_path):
        p = write(tmp_path, "date,price\n2020-01-06,3\n2020-01-02,1\n2020-01-03,2\n")
        ps = load_prices_csv(p)
        assert ps.dates == ("2020-01-02", "2020-01-03", "2020-01-06")
        np.testing.assert_array_equal(ps.prices, [1.0, 2.0, 3.0])

    def test_integer_labels_sort_numerically(self, tmp_path):
        ps = load_prices_csv(write(tmp_path, "date,price\n10,2\n9,1\n"))
        assert ps.dates == (9, 10)

    def test_duplicates_rejected(self, tmp_path):
        p = write(tmp_path, "date,price\n2020-01-02,100\n2020-01-02,101\n")
        with pytest.raises(InvalidInputError, match="duplicate"):
            load_prices_csv(p)

    def test_custom_columns(self, tmp_path):
        p = write(tmp_path, "Day,Open,Close\n1,10,11\n2,12,13\n")
        ps = load_prices_csv(p, date_column="Day", price_column="Close")
        np.testing.assert_array_equal(ps.prices, [11.0, 13.0])

    def test_missing_column(self, tmp_path):
        with pytest.raises(InvalidInputError, match="missing column"):
            load_prices_csv(write(tmp_path, "date,close\n1,2\n"))

    def test_missing_header_and_rows(self, tmp_path):
        with pytest.raises(InvalidInputError, match="header"):
            load_prices_csv(write(tmp_path, ""))
        with pytest.raises(InvalidInputError, match="no data rows"):
            load_prices_csv(write(tmp_path, "date,price\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidInputError, match="cannot open"):
            load_prices_csv(tmp_path / "nope.csv")


class TestPriceSeries:
    def test_invariants(self):
        with pytest.raises(InvalidInputError):
            PriceSeries((1, 2), [1.0, -1.0])
        with pytest.raises(InvalidInputError):
            PriceSeries((2, 1), [1.0, 2.0])
        with pytest.raises(InvalidInputError):
            PriceSeries((1,), [1.0, 2.0])


class TestReturns:
    def test_single_step(self):
        assert negative_log_returns([100.0, 99.0])[0] == pytest.approx(0.0100503, abs=1e-7)
        assert negative_log_returns([100.0, 99.0])[0] == pytest.approx(-math.log(0.99), rel=1e-15)

    def test_constant(self):
        np.testing.assert_array_equal(negative_log_returns(np.full(10, 42.0)), np.zeros(9))

    def test_e_ratio(self):
        assert negative_log_returns([100.0, 100.0 * math.e])[0] == pytest.approx(-1.0, abs=1e-15)

    def test_return_series_labels(self):
        ps = PriceSeries(("a1", "a2", "a3"), [100.0, 99.0, 100.0])
        rs = to_negative_log_returns(ps)
        assert isinstance(rs, ReturnSeries) and rs.timestamps == ("a2", "a3")
        np.testing.assert_allclose(rs.values, [-math.log(0.99), -math.log(100 / 99)], rtol=1e-15)

    def test_length_requirements(self):
        with pytest.raises(InvalidInputError):
            negative_log_returns([100.0])
        with pytest.raises(InvalidInputError):
            to_negative_log_returns(PriceSeries((1, 2), [100.0, 99.0]))


class TestReturnsCsv:
    def test_round_trip(self, tmp_path):
        rs = ReturnSeries(np.random.default_rng(0).standard_normal(20))
        p = tmp_path / "r.csv"
        with open(p, "w", newline="") as fh:
            write_returns_csv(rs, fh)
        assert p.read_text().splitlines()[0] == "date,loss"
        back = load_returns_csv(p)
        np.testing.assert_array_equal(back.values, rs.values)
        assert back.timestamps == tuple(range(1, 21))

    def test_bad_value(self, tmp_path):
        with pytest.raises(InvalidInputError, match="row 3"):
            load_returns_csv(write(tmp_path, "date,loss\n1,0.1\n2,nan\n"))

    def test_too_short(self, tmp_path):
        with pytest.raises(InvalidInputError, match="2 data rows"):
            load_returns_csv(write(tmp_path, "date,loss\n1,0.1\n"))


class TestAtomicWriter:
    def test_writes_and_replaces(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old")
        with atomic_writer(target) as fh:
            fh.write("new")
            assert target.read_text() == "old"
        assert target.read_text() == "new"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_failure_keeps_original(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old")
        with pytest.raises(RuntimeError):
            with atomic_writer(target) as fh:
                fh.write("partial")
                raise RuntimeError("stop")
        assert target.read_text() == "old"
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]

    def test_permissions_follow_umask(self, tmp_path):
        old = os.umask(0o022)
        try:
            with atomic_writer(tmp_path / "f.csv") as fh:
                fh.write("x")
        finally:
            os.umask(old)
        assert stat.S_IMODE(os.stat(tmp_path / "f.csv").st_mode) == 0o644
