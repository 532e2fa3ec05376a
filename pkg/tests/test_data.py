import datetime as dt
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestgp.data import (
    RawSeries,
    SplitSpec,
    inject_noise,
    load_csv,
    load_dataset,
    save_csv,
    save_dataset,
    shift_to_day_index,
    split,
    synth_generate,
)
from nestgp.errors import ConfigError, DuplicateTimestamp, ParseError
from nestgp.gp import Dataset, standardize


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_load_well_formed(tmp_path):
    s = load_csv(write(tmp_path, "t,value\n2018-01-05,60.1\n2018-01-06,61.0\n2018-01-09,59.5\n"))
    assert len(s) == 3 and s.is_dated
    assert list(s.values) == [60.1, 61.0, 59.5]


def test_load_numeric_index(tmp_path):
    s = load_csv(write(tmp_path, "t,value\n0,1.5\n1,2.5\n"))
    assert s.timestamps == (0.0, 1.0) and not s.is_dated


def test_load_reports_bad_row(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(write(tmp_path, "t,value\n0,1\n1,abc\n"))
    assert info.value.line == 3 and "line 3" in str(info.value)
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "t,value\n0,1,2\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "t,value\nyesterday,1\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "t,value\n0,nan\n"))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, ""))
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "t,value\n0,1\n2018-01-01,2\n"))


def test_load_rejects_duplicates(tmp_path):
    with pytest.raises(DuplicateTimestamp):
        load_csv(write(tmp_path, "t,value\n2018-01-05,1\n2018-01-05,2\n"))


def test_load_sorts_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="nestgp.data"):
        s = load_csv(write(tmp_path, "t,value\n2018-01-07,3\n2018-01-05,1\n2018-01-06,2\n"))
    assert list(s.values) == [1, 2, 3]
    assert "sorted" in caplog.text


def test_missing_file():
    with pytest.raises(OSError):
        load_csv("/nonexistent/series.csv")


def test_day_index():
    d = [dt.date(2018, 1, 5), dt.date(2018, 1, 6)]
    assert shift_to_day_index(RawSeries(d, [1, 2])).timestamps == (0.0, 1.0)
    d = [dt.date(2018, 1, 5), dt.date(2018, 1, 8)]
    assert shift_to_day_index(RawSeries(d, [1, 2])).timestamps == (0.0, 3.0)
    s = RawSeries([0.0, 4.0], [1, 2])
    assert shift_to_day_index(s) is s


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30))
@settings(max_examples=50)
def test_save_load_round_trip(tmp_path_factory, values):
    path = str(tmp_path_factory.mktemp("rt") / "s.csv")
    s = RawSeries([float(i) for i in range(len(values))], values)
    save_csv(s, path)
    back = load_csv(path)
    assert back.timestamps == s.timestamps
    assert np.array_equal(back.values, s.values)


def test_dated_round_trip(tmp_path):
    s = RawSeries([dt.date(2020, 2, 28), dt.date(2020, 3, 2)], [1.25, -3.5])
    save_csv(s, str(tmp_path / "d.csv"))
    back = load_csv(str(tmp_path / "d.csv"))
    assert back.timestamps == s.timestamps and np.array_equal(back.values, s.values)


def test_dataset_round_trip(tmp_path):
    d = Dataset([0.0, 1.5, 3.0], [0.1, 0.2, 1 / 3])
    save_dataset(d, str(tmp_path / "d.csv"))
    back = load_dataset(str(tmp_path / "d.csv"))
    assert np.array_equal(back.inputs, d.inputs) and np.array_equal(back.outputs, d.outputs)


def test_split_properties():
    s = synth_generate("stationary-gp", {}, 50, 0)
    tr, te = split(s, SplitSpec(30, 10, 4))
    assert len(tr) == 30 and len(te) == 10
    assert not set(tr.inputs) & set(te.inputs)
    assert np.all(np.diff(tr.inputs) > 0) and np.all(np.diff(te.inputs) > 0)
    tr2, _ = split(s, SplitSpec(30, 10, 4))
    assert np.array_equal(tr.inputs, tr2.inputs)
    tr3, _ = split(s, SplitSpec(30, 10, 5))
    assert not np.array_equal(tr.inputs, tr3.inputs)
    _, empty = split(s, SplitSpec(30, 0, 4))
    assert len(empty) == 0
    with pytest.raises(ConfigError):
        split(s, SplitSpec(45, 10, 0))


def test_split_uses_day_index():
    s = RawSeries([dt.date(2018, 1, 1), dt.date(2018, 1, 3), dt.date(2018, 1, 10)], [1, 2, 3])
    tr, _ = split(s, SplitSpec(3, 0, 0))
    assert list(tr.inputs) == [0, 2, 9]


def test_inject_noise():
    clean = Dataset(np.arange(10_000.0), np.zeros(10_000))
    assert inject_noise(clean, 0.0, 1) is clean
    noisy = inject_noise(clean, 0.01, 1)
    assert abs(np.var(noisy.outputs - clean.outputs, ddof=1) / 0.01 - 1) < 0.05
    assert np.array_equal(noisy.outputs, inject_noise(clean, 0.01, 1).outputs)
    with pytest.raises(ConfigError):
        inject_noise(clean, -1.0, 1)
    with pytest.raises(ConfigError):
        inject_noise(standardize(Dataset([0, 1, 2], [1, 2, 4])), 0.1, 1)


def test_synth_single_point():
    s = synth_generate("stationary-gp", {}, 1, 3)
    expected = np.random.Generator(np.random.PCG64(3)).standard_normal(1)[0]
    assert s.values[0] == pytest.approx(expected)


def test_synth_lag_one_correlation():
    ell = 5.0
    y = synth_generate("stationary-gp", {"length_scale": ell}, 2000, 0).values
    r = np.corrcoef(y[:-1], y[1:])[0, 1]
    # effective sample size is small for a smooth series; allow a generous band
    assert r == pytest.approx(math.exp(-1 / (2 * ell * ell)), abs=0.02)


def test_synth_standardizes_exactly():
    s = synth_generate("stationary-gp", {"length_scale": 3.0}, 100, 1)
    d = standardize(Dataset(s.numeric_inputs(), s.values))
    assert abs(d.outputs.mean()) < 1e-12 and abs(np.var(d.outputs, ddof=1) - 1) < 1e-12


def test_two_regime_continuous_at_changepoint():
    s = synth_generate("two-regime", {"changepoint": 50.0}, 101, 0)
    y = s.values
    slow_at_c = math.sin(2 * math.pi * 50 / 60)
    assert y[50] == pytest.approx(slow_at_c, abs=1e-12)
    x = np.asarray(s.timestamps)
    left = np.sin(2 * np.pi * x[49] / 60)
    assert abs(y[49] - left) < 1e-12
    # different local behaviour either side
    assert np.std(np.diff(y[:50])) < np.std(np.diff(y[51:]))


def test_synth_errors():
    with pytest.raises(ConfigError):
        synth_generate("walk", {}, 10, 0)
    with pytest.raises(ConfigError):
        synth_generate("stationary-gp", {"bogus": 1}, 10, 0)
    with pytest.raises(ConfigError):
        synth_generate("stationary-gp", {"length_scale": -1}, 10, 0)
    with pytest.raises(ConfigError):
        synth_generate("two-regime", {}, 0, 0)
