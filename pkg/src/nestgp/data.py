"""
Time-series ingestion, train/test splitting, noise injection and synthetic
corpora.

File formats (comma separated, one header row, UTF-8):

* series: ``t,value`` where ``t`` is an ISO-8601 date or a numeric index;
* dataset: ``x,y``.
"""

import csv
import datetime as dt
import logging
from dataclasses import dataclass

import numpy as np

from nestgp.errors import ConfigError, DuplicateTimestamp, ParseError
from nestgp.gp import Dataset
from nestgp.kernels import KernelSpec, build_corr_matrix
from nestgp.numerics import cholesky, make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RawSeries:
    """Timestamps (``datetime.date`` objects or floats) and values."""

    timestamps: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())
        if len(self.timestamps) != self.values.size:
            raise ConfigError("timestamps and values differ in length")

    def __len__(self):
        return self.values.size

    @property
    def is_dated(self):
        return bool(self.timestamps) and isinstance(self.timestamps[0], dt.date)

    def numeric_inputs(self):
        return np.asarray(shift_to_day_index(self).timestamps if self.is_dated
                          else self.timestamps, dtype=float)


def fmt_float(v):
    """Shortest repr that round-trips; integral values print as integers."""
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def _parse_timestamp(cell, line):
    cell = cell.strip()
    try:
        return float(cell)
    except ValueError:
        pass
    try:
        return dt.date.fromisoformat(cell)
    except ValueError:
        raise ParseError(f"cannot parse timestamp {cell!r}", line) from None


def load_csv(path):
    """Read a two-column ``t,value`` series.

    Unsorted rows are sorted (with a warning); a repeated timestamp raises
    DuplicateTimestamp.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty", 1)
    stamps, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
        ts = _parse_timestamp(row[0], lineno)
        try:
            val = float(row[1])
        except ValueError:
            raise ParseError(f"non-numeric value {row[1]!r}", lineno) from None
        if not np.isfinite(val):
            raise ParseError(f"missing or non-finite value {row[1]!r}", lineno)
        stamps.append(ts)
        values.append(val)
    kinds = {isinstance(s, dt.date) for s in stamps}
    if len(kinds) > 1:
        raise ParseError("mixed date and numeric timestamps")
    if len(set(stamps)) != len(stamps):
        seen = set()
        for s in stamps:
            if s in seen:
                raise DuplicateTimestamp(f"duplicate timestamp {s}")
            seen.add(s)
    order = sorted(range(len(stamps)), key=lambda i: stamps[i])
    if order != list(range(len(stamps))):
        logger.warning("%s: rows were not in time order; sorted", path)
        stamps = [stamps[i] for i in order]
        values = [values[i] for i in order]
    return RawSeries(stamps, values)


def save_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for ts, v in zip(series.timestamps, series.values):
            w.writerow([ts.isoformat() if isinstance(ts, dt.date) else fmt_float(ts), fmt_float(v)])


def save_dataset(d, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in zip(d.inputs, d.outputs):
            w.writerow([fmt_float(x), fmt_float(y)])


def load_dataset(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    xs, ys = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            xs.append(float(row[0]))
            ys.append(float(row[1]))
        except (ValueError, IndexError):
            raise ParseError(f"bad dataset row {row!r}", lineno) from None
    return Dataset(xs, ys)


def shift_to_day_index(series):
    """Map dates to calendar-day offsets from the first date; numeric
    timestamps are returned unchanged."""
    if not series.is_dated:
        return series
    t0 = series.timestamps[0]
    return RawSeries([float((t - t0).days) for t in series.timestamps], series.values)


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_test: int
    seed: int = 0


def split(series, spec):
    """Sample disjoint train and test sets without replacement.

    Returns ``(train, test)`` Datasets, each sorted by input.
    """
    n = len(series)
    if spec.n_train < 1 or spec.n_test < 0 or spec.n_train + spec.n_test > n:
        raise ConfigError(
            f"cannot draw {spec.n_train} train + {spec.n_test} test points from {n}")
    x = series.numeric_inputs()
    rng = make_rng(spec.seed)
    idx = rng.permutation(n)[: spec.n_train + spec.n_test]
    tr = np.sort(idx[: spec.n_train])
    te = np.sort(idx[spec.n_train:])
    return (Dataset(x[tr], series.values[tr]), Dataset(x[te], series.values[te]))


def inject_noise(d, sigma_eps_sq, seed):
    """Add ``Normal(0, sigma_eps_sq)`` errors to the outputs."""
    if sigma_eps_sq < 0:
        raise ConfigError("error variance must be non-negative")
    if d.standardized:
        raise ConfigError("inject noise before standardizing")
    if sigma_eps_sq == 0:
        return d
    e = make_rng(seed).normal(0.0, np.sqrt(sigma_eps_sq), size=len(d))
    return Dataset(d.inputs, d.outputs + e)


def _stationary_gp(n, seed, length_scale=5.0, spacing=1.0, sd=1.0, mean=0.0):
    if length_scale <= 0 or spacing <= 0 or sd <= 0:
        raise ConfigError("length_scale, spacing and sd must be positive")
    x = np.arange(n) * float(spacing)
    f = cholesky(build_corr_matrix(x, KernelSpec("sqe", ell=length_scale)), max_jitter=1e-4)
    z = make_rng(seed).standard_normal(n)
    return x, mean + sd * (f.lower @ z)


def _two_regime(n, seed, changepoint=None, slow_period=60.0, fast_period=8.0,
                slow_amp=1.0, fast_amp=1.0, spacing=1.0, noise_sd=0.0):
    if slow_period <= 0 or fast_period <= 0:
        raise ConfigError("periods must be positive")
    x = np.arange(n) * float(spacing)
    c = x[n // 2] if changepoint is None else float(changepoint)
    slow = slow_amp * np.sin(2 * np.pi * x / slow_period)
    # the fast part starts at phase 0 on the slow curve, so the series is continuous at c
    fast = slow_amp * np.sin(2 * np.pi * c / slow_period) + fast_amp * np.sin(
        2 * np.pi * (x - c) / fast_period)
    y = np.where(x < c, slow, fast)
    if noise_sd > 0:
        y = y + make_rng(seed).normal(0.0, noise_sd, size=n)
    return x, y


SYNTH_KINDS = {"stationary-gp": _stationary_gp, "two-regime": _two_regime}


def synth_generate(kind, params, n, seed):
    """Generate a synthetic series on a regular grid.

    ``stationary-gp`` draws from a zero-mean GP with a stationary SQE
    kernel (params: ``length_scale``, ``spacing``, ``sd``, ``mean``).
    ``two-regime`` joins a slow and a fast sinusoid at ``changepoint``
    (params: ``slow_period``, ``fast_period``, ``slow_amp``, ``fast_amp``,
    ``spacing``, ``noise_sd``).
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}")
    if n < 1:
        raise ConfigError("n must be positive")
    try:
        x, y = SYNTH_KINDS[kind](int(n), seed, **(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None
    return RawSeries(x.tolist(), y)
