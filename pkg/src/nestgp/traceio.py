"""
Lossless CSV serialization of chain traces.

A saved trace is three files in one directory:

``trace.csv``
    one row per iteration: ``iteration``, block-1 and end-of-iteration
    hyperparameters, inner length scales and their log posteriors, the
    error variance, the block-1 log posterior and acceptance flags;
``predictions.csv``
    long format ``iteration,index,x,mean,variance`` (output units) for the
    post-burn-in iterations;
``trace.json``
    family, model, burn-in, standardization and test inputs.

Blended traces add ``pair_ell.csv``. Floats are written with the shortest
repr that round-trips, so a reload reproduces every value bit for bit.
"""

import csv
import json
import os

import numpy as np

from nestgp.data import fmt_float
from nestgp.errors import ParseError
from nestgp.gp import StandardizationParams
from nestgp.inference import PARAM_NAMES, ChainTrace

TRACE_CSV = "trace.csv"
PREDICTIONS_CSV = "predictions.csv"
META_JSON = "trace.json"
PAIR_CSV = "pair_ell.csv"


def trace_columns(trace):
    """Ordered ``(header, column array)`` pairs of the trace CSV."""
    cols = [("iteration", trace.iteration)]
    for k, name in enumerate(trace.names):
        cols.append((name, trace.theta[:, k]))
        cols.append((f"{name}_current", trace.theta_current[:, k]))
    if trace.delta is not None:
        for k, name in enumerate(trace.names):
            cols.append((f"delta_{name}", trace.delta[:, k]))
            cols.append((f"log_post_delta_{name}", trace.log_post_delta[:, k]))
    if trace.sigma_eps_sq is not None:
        cols.append(("sigma_eps_sq", trace.sigma_eps_sq))
    cols.append(("log_post", trace.log_post))
    cols.append(("accepted", trace.accepted))
    if trace.accepted_delta is not None:
        cols.append(("accepted_delta", trace.accepted_delta))
        cols.append(("block2", trace.block2))
    return cols


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return fmt_float(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path):
    """Return ``(header, rows)`` with every cell parsed as float."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty", 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append([float(c) for c in row])
        except ValueError:
            raise ParseError(f"{path}: non-numeric cell in {row!r}", lineno) from None
    return rows[0], np.array(out, dtype=float).reshape(len(out), len(rows[0]))


def write_trace(trace, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cols = trace_columns(trace)
    write_csv(os.path.join(out_dir, TRACE_CSV), [h for h, _ in cols],
              zip(*[list(c) for _, c in cols]))
    write_predictions(trace, os.path.join(out_dir, PREDICTIONS_CSV))
    p = trace.std_params
    meta = {
        "family": trace.family,
        "model": trace.model,
        "n_burnin": int(trace.n_burnin),
        "std_mean": p.mean if p else None,
        "std_sd": p.sd if p else None,
        "test_inputs": [float(x) for x in trace.test_inputs],
    }
    pairs = getattr(trace, "pairs", None)
    if pairs:
        meta["pairs"] = [list(pq) for pq in pairs]
        if trace.pair_ell is not None:
            header = ["iteration"] + [f"ell_{i}_{j}" for i, j in pairs]
            write_csv(os.path.join(out_dir, PAIR_CSV), header,
                      ([it] + row for it, row in zip(trace.iteration.tolist(),
                                                     trace.pair_ell.tolist())))
    with open(os.path.join(out_dir, META_JSON), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictions(trace, path):
    rows = []
    for r, it in enumerate(trace.pred_iteration.tolist()):
        for j, x in enumerate(trace.test_inputs.tolist()):
            rows.append([it, j, x, float(trace.pred_mean[r, j]), float(trace.pred_var[r, j])])
    write_csv(path, ["iteration", "index", "x", "mean", "variance"], rows)


def read_trace(run_dir):
    """Load a trace written by :func:`write_trace`."""
    with open(os.path.join(run_dir, META_JSON), encoding="utf-8") as fh:
        meta = json.load(fh)
    header, data = read_csv(os.path.join(run_dir, TRACE_CSV))
    col = {h: data[:, i] for i, h in enumerate(header)}
    names = PARAM_NAMES[meta["family"]]

    def stack(fmt):
        return np.column_stack([col[fmt.format(n)] for n in names])

    has_delta = f"delta_{names[0]}" in col
    test_inputs = np.array(meta["test_inputs"], dtype=float)
    _, pred = read_csv(os.path.join(run_dir, PREDICTIONS_CSV))
    n_test = test_inputs.size
    n_rows = pred.shape[0] // n_test if n_test else 0
    if n_test:
        pred_iteration = pred[::n_test, 0].astype(int)
        pred_mean = pred[:, 3].reshape(n_rows, n_test)
        pred_var = pred[:, 4].reshape(n_rows, n_test)
    else:
        pred_iteration = np.zeros(0, dtype=int)
        pred_mean = pred_var = np.zeros((0, 0))
    std = (StandardizationParams(meta["std_mean"], meta["std_sd"])
           if meta.get("std_sd") else None)
    kwargs = dict(
        family=meta["family"],
        model=meta["model"],
        n_burnin=int(meta["n_burnin"]),
        iteration=col["iteration"].astype(int),
        theta=stack("{}"),
        theta_current=stack("{}_current"),
        log_post=col["log_post"],
        accepted=col["accepted"].astype(bool),
        delta=stack("delta_{}") if has_delta else None,
        log_post_delta=stack("log_post_delta_{}") if has_delta else None,
        accepted_delta=col["accepted_delta"].astype(bool) if "accepted_delta" in col else None,
        block2=col["block2"].astype(bool) if "block2" in col else None,
        sigma_eps_sq=col.get("sigma_eps_sq"),
        test_inputs=test_inputs,
        pred_iteration=pred_iteration,
        pred_mean=pred_mean,
        pred_var=pred_var,
        std_params=std,
    )
    if "pairs" in meta:
        from nestgp.blended import BlendedTrace

        pairs = tuple(tuple(pq) for pq in meta["pairs"])
        pair_path = os.path.join(run_dir, PAIR_CSV)
        pair_ell = read_csv(pair_path)[1][:, 1:] if os.path.exists(pair_path) else None
        return BlendedTrace(**kwargs, pairs=pairs, pair_ell=pair_ell)
    return ChainTrace(**kwargs)
