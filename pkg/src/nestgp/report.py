"""
Prediction metrics, per-test-point prediction rows, the model-comparison
table, and the roster runner behind ``nestgp compare``.

The interval MSE of a model is the pair (MSE of the 95% HPD lower
endpoints, MSE of the upper endpoints) of the per-test-point
predictive-mean traces, reported low first.
"""

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from nestgp.blended import BlendedConfig, init_from_trace, run_blended_chain
from nestgp.data import fmt_float
from nestgp.errors import ConfigError, DimensionMismatch, InsufficientSamples, ParseError
from nestgp.gp import PredictiveSummary, standardize
from nestgp.inference import ChainConfig, hpd, run_chain
from nestgp.kernels import KernelSpec
from nestgp.nonstationary import NeighborhoodConfig, build_equivalent, predict_equivalent

HALF_WIDTH_FACTOR = 2.5
MIN_TRACE_SAMPLES = 20

COLUMNS = ("model", "n_hyperparameters", "mse_mean", "mse_hpd_low", "mse_hpd_high",
           "time_seconds", "n_iter")
TEXT_HEADERS = ("Model", "#Hyp.", "MSE(mean)", "MSE interval", "Time")
FOOTER = ("MSE interval: (MSE of the 95% HPD lower endpoints, MSE of the upper endpoints) "
          "of the per-test-point predictive-mean traces, ordered low <= high.")


@dataclass(frozen=True)
class ModelReport:
    model: str
    n_hyperparameters: int
    mse_mean: float
    mse_hpd_low: float
    mse_hpd_high: float
    time_seconds: Optional[float] = None
    n_iter: Optional[int] = None

    def __post_init__(self):
        if min(self.mse_mean, self.mse_hpd_low, self.mse_hpd_high) < 0:
            raise ConfigError("MSE values must be non-negative")
        if self.mse_hpd_low > self.mse_hpd_high:
            raise ConfigError("mse_hpd_low exceeds mse_hpd_high")


@dataclass(frozen=True)
class PredictionRow:
    x: float
    mean: float
    sd: float
    half_width: float
    hpd_low: float
    hpd_high: float
    truth: Optional[float] = None

    @classmethod
    def build(cls, x, mean, sd, hpd_low, hpd_high, truth=None):
        return cls(float(x), float(mean), float(sd), HALF_WIDTH_FACTOR * float(sd),
                   float(hpd_low), float(hpd_high), None if truth is None else float(truth))


def _means(preds):
    if isinstance(preds, PredictiveSummary):
        preds = preds.mean
    return np.asarray(preds, dtype=float).ravel()


def mse_mean(preds, truth):
    """Mean squared error of the predicted means (a PredictiveSummary or
    an array of means) against `truth`."""
    m = _means(preds)
    y = np.asarray(truth, dtype=float).ravel()
    if m.size != y.size:
        raise DimensionMismatch(f"{m.size} predictions but {y.size} true values")
    if m.size == 0:
        raise DimensionMismatch("need at least one prediction")
    return float(np.mean((m - y) ** 2))


def hpd_bounds(pred_traces, mass=0.95):
    """Per-test-point HPD endpoints of an ``(n_samples, n_test)`` trace."""
    traces = np.asarray(pred_traces, dtype=float)
    if traces.ndim != 2 or traces.shape[0] < MIN_TRACE_SAMPLES:
        raise InsufficientSamples(
            f"need at least {MIN_TRACE_SAMPLES} samples per test point, got "
            f"{traces.shape[0] if traces.ndim == 2 else 0}")
    intervals = [hpd(traces[:, j], mass) for j in range(traces.shape[1])]
    return (np.array([iv.lower for iv in intervals]), np.array([iv.upper for iv in intervals]))


def mse_hpd(pred_traces, truth, mass=0.95):
    """(low, high) interval MSE from per-test-point predictive-mean traces
    of shape ``(n_samples, n_test)``."""
    lo, hi = hpd_bounds(pred_traces, mass)
    a, b = mse_mean(lo, truth), mse_mean(hi, truth)
    return (a, b) if a <= b else (b, a)


def prediction_rows(summary, pred_traces=None, truth=None):
    """PredictionRows from a PredictiveSummary; HPDs come from the
    predictive-mean traces (or collapse onto the mean without them)."""
    if pred_traces is not None:
        lo, hi = hpd_bounds(pred_traces)
    else:
        lo = hi = summary.mean
    truth = [None] * len(summary) if truth is None else list(np.ravel(truth))
    return [PredictionRow.build(x, m, s, a, b, t)
            for x, m, s, a, b, t in zip(summary.inputs, summary.mean, summary.sd, lo, hi, truth)]


PREDICTION_COLUMNS = ("x", "mean", "sd", "half_width", "hpd_low", "hpd_high", "truth")


def render_prediction_rows(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_COLUMNS)
    for r in rows:
        w.writerow([fmt_float(getattr(r, c)) if getattr(r, c) is not None else ""
                    for c in PREDICTION_COLUMNS])
    return buf.getvalue()


def _fmt_mse(v, digits):
    return f"{v:.{digits}f}" if v < 1e6 else f"{v:.{digits}e}"


def _fmt_time(r):
    if r.time_seconds is None:
        return "-"
    return f"{r.time_seconds:.1f}s ({r.n_iter} it)" if r.n_iter else f"{r.time_seconds:.1f}s"


def render_report(reports, fmt="text"):
    """Render ModelReports as ``text``, ``csv`` or ``json``."""
    reports = list(reports)
    if not reports:
        raise ConfigError("nothing to report")
    if fmt == "json":
        return json.dumps({"columns": list(COLUMNS), "models": [asdict(r) for r in reports],
                           "note": FOOTER}, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in reports:
            w.writerow(["" if v is None else (v if isinstance(v, str) else fmt_float(v))
                        for v in (getattr(r, c) for c in COLUMNS)])
        return buf.getvalue()
    if fmt != "text":
        raise ConfigError(f"unknown report format {fmt!r}")
    rows = [(r.model, str(r.n_hyperparameters), _fmt_mse(r.mse_mean, 4),
             f"[{_fmt_mse(r.mse_hpd_low, 2)}, {_fmt_mse(r.mse_hpd_high, 2)}]", _fmt_time(r))
            for r in reports]
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(TEXT_HEADERS)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(TEXT_HEADERS, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines + ["", FOOTER]) + "\n"


def parse_report(text, fmt):
    """Inverse of :func:`render_report` for ``csv`` and ``json``."""
    if fmt == "json":
        return [ModelReport(**m) for m in json.loads(text)["models"]]
    if fmt != "csv":
        raise ConfigError("only csv and json reports can be parsed")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ParseError("unexpected report header", 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(ModelReport(
                row[0], int(row[1]), float(row[2]), float(row[3]), float(row[4]),
                float(row[5]) if row[5] else None, int(row[6]) if row[6] else None))
        except (ValueError, IndexError):
            raise ParseError(f"bad report row {row!r}", lineno) from None
    return out


# hyperparameter counts per model, following the comparison table's convention
ROSTER = {
    "stationary-sqe": 1,
    "stationary-matern": 2,
    "nonparametric-sqe": 2,
    "nonparametric-matern": 4,
    "nonparametric-sqe-noisy": 3,
    "nonstationary": 2,
    "blended": 3,
}
SEED_OFFSETS = {name: 1000 * i for i, name in enumerate(ROSTER)}
EQUIVALENT_THETA_SAMPLES = 50


@dataclass
class CompareConfig:
    """Settings shared by every model of a comparison run.

    `chain` supplies iteration counts, lookback and proposal settings;
    its seed is replaced per model by ``seed + SEED_OFFSETS[model]``.
    """

    chain: ChainConfig = field(default_factory=ChainConfig)
    seed: int = 0
    neighborhood: NeighborhoodConfig = field(default_factory=NeighborhoodConfig)
    blended_iter: int = 1000
    blended_burnin: int = 500


@dataclass
class ModelRun:
    report: ModelReport
    summary: object
    trace: object = None


def _chain_report(name, trace, truth, elapsed, n_iter):
    summary = trace.predictive_summary()
    low, high = mse_hpd(trace.pred_mean, truth)
    return ModelRun(ModelReport(name, ROSTER[name], mse_mean(summary, truth), low, high,
                                elapsed, n_iter), summary, trace)


def _equivalent_run(np_run, train, test, cfg):
    trace = np_run.trace
    d = standardize(train)
    t0 = time.perf_counter()
    spec = KernelSpec.from_thetas("sqe", trace.posterior_mean_thetas())
    pls = build_equivalent(d, spec, None, test.inputs, cfg.neighborhood)
    summary = predict_equivalent(d, pls, test.inputs)
    post = trace.theta_current[trace.post, 0]
    idx = np.unique(np.linspace(0, post.size - 1, EQUIVALENT_THETA_SAMPLES).astype(int))
    draws = []
    for ell in post[idx]:
        p = build_equivalent(d, KernelSpec("sqe", ell=float(ell)), None, test.inputs,
                             cfg.neighborhood)
        draws.append(predict_equivalent(d, p, test.inputs).mean)
    low, high = mse_hpd(np.array(draws), test.outputs)
    elapsed = time.perf_counter() - t0
    report = ModelReport("nonstationary", ROSTER["nonstationary"],
                         mse_mean(summary, test.outputs), low, high, elapsed, None)
    return ModelRun(report, summary, pls)


def run_model(name, train, test, cfg, cache=None):
    """Run one roster model; `cache` holds earlier runs that later models
    (the equivalent and the blended chain) build on."""
    if name not in ROSTER:
        raise ConfigError(f"unknown model {name!r}; choose from {', '.join(ROSTER)}")
    cache = {} if cache is None else cache
    if name in cache:
        return cache[name]
    truth = test.outputs
    if name in ("nonstationary", "blended"):
        base = run_model("nonparametric-sqe", train, test, cfg, cache)
        if name == "nonstationary":
            run = _equivalent_run(base, train, test, cfg)
        else:
            bcfg = BlendedConfig(test.inputs, cfg.neighborhood, "sqe", cfg.blended_iter,
                                 cfg.blended_burnin, cfg.seed + SEED_OFFSETS[name],
                                 max_jitter=cfg.chain.max_jitter)
            t0 = time.perf_counter()
            trace = run_blended_chain(train, bcfg, init_from_trace(base.trace))
            run = _chain_report(name, trace, truth, time.perf_counter() - t0, cfg.blended_iter)
    else:
        family = "matern" if "matern" in name else "sqe"
        chain = ChainConfig(**{**asdict(cfg.chain), "seed": cfg.seed + SEED_OFFSETS[name]})
        t0 = time.perf_counter()
        trace = run_chain(train, family, chain, test.inputs,
                          noise_mode=name.endswith("-noisy"),
                          nonparametric=name.startswith("nonparametric"))
        run = _chain_report(name, trace, truth, time.perf_counter() - t0, chain.n_iter)
    cache[name] = run
    return run


def compare(models, train, test, cfg, record_time=False):
    """Run `models` in order and return their reports (timing dropped
    unless `record_time`, so the output is reproducible)."""
    cache = {}
    reports = []
    for name in models:
        r = run_model(name, train, test, cfg, cache).report
        if not record_time:
            r = ModelReport(r.model, r.n_hyperparameters, r.mse_mean, r.mse_hpd_low,
                            r.mse_hpd_high, None, r.n_iter)
        reports.append(r)
    return reports, cache
