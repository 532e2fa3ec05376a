"""
Command-line interface.

Subcommands: ``synth``, ``train``, ``equivalent``, ``blend``, ``predict``
and ``compare``. Every random choice is driven by ``--seed``. Settings may
also come from a ``key = value`` file given with ``--config``; keys are
the long flag names (``n-train`` or ``n_train``) and flags on the command
line win.

Exit status: 0 on success, 1 for usage errors and unreadable input, 2 for
numerical failures (with the chain iteration when there is one).
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from nestgp import __version__
from nestgp.blended import BlendedConfig, init_from_trace, run_blended_chain
from nestgp.data import (
    SYNTH_KINDS,
    SplitSpec,
    inject_noise,
    load_csv,
    load_dataset,
    save_csv,
    save_dataset,
    split,
    synth_generate,
)
from nestgp.errors import (
    ChainError,
    ConfigError,
    DegenerateData,
    DegenerateSample,
    InsufficientSamples,
    NestGPError,
    NotPositiveDefinite,
)
from nestgp.gp import Dataset, standardize
from nestgp.inference import ChainConfig, run_chain
from nestgp.kernels import KernelSpec, NoiseSpec
from nestgp.nonstationary import NeighborhoodConfig, build_equivalent, predict_equivalent
from nestgp.report import (
    ROSTER,
    CompareConfig,
    compare,
    prediction_rows,
    render_prediction_rows,
    render_report,
)
from nestgp.traceio import read_trace, write_csv, write_trace

logger = logging.getLogger("nestgp")

NUMERIC_ERRORS = (ChainError, NotPositiveDefinite, DegenerateData, DegenerateSample,
                  InsufficientSamples)
# arguments naming files; kept out of run.json so outputs do not depend on locations
PATH_ARGS = {"config", "data", "train", "test", "out", "out_dir", "run_dir"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def floats(text):
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def names(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def boolean(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--config", help="key = value settings file (flags take precedence)")


def _data_args(p):
    p.add_argument("--data", help="series CSV (t,value) to split into train and test")
    p.add_argument("--train", help="training dataset CSV (x,y)")
    p.add_argument("--test", help="test dataset CSV (x,y)")
    p.add_argument("--n-train", type=int, help="training points drawn from --data")
    p.add_argument("--n-test", type=int, default=20, help="test points drawn from --data")
    p.add_argument("--inject-noise", type=float, default=0.0,
                   help="add Normal(0, VAR) errors to the training outputs")


def _chain_args(p):
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--burnin", type=int,
                   help="burn-in iterations (default: 5000, at most half of --iters)")
    p.add_argument("--lookback", type=int,
                   help="lookback width (default: 100, at most half the burn-in)")
    for name in ("theta-init", "delta-init", "proposal-sds", "delta-proposal-sds",
                 "prior-means", "prior-sds", "delta-prior-means", "delta-prior-sds"):
        p.add_argument(f"--{name}", type=floats, help="comma-separated, one per hyperparameter")
    for name in ("noise-init", "noise-proposal-sd", "noise-prior-mean", "noise-prior-sd"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--max-jitter", type=float, default=1e-6)


def _neighborhood_args(p):
    p.add_argument("--epsilon", type=float, default=0.092, help="neighbourhood half-width")
    p.add_argument("--n-s", type=int, default=100, help="neighbours per input")


def build_parser():
    parser = _Parser(prog="nestgp", description="Two-layer Gaussian-process regression.")
    parser.add_argument("--version", action="version", version=f"nestgp {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic series")
    _common(p)
    p.add_argument("--kind", choices=sorted(SYNTH_KINDS), default="stationary-gp")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter (repeatable)")
    p.add_argument("--out", help="output series CSV")

    p = sub.add_parser("train", help="run a chain and save its trace")
    _common(p)
    _data_args(p)
    _chain_args(p)
    p.add_argument("--family", choices=("sqe", "matern"), default="sqe")
    p.add_argument("--noise", type=boolean, nargs="?", const=True, default=False,
                   help="learn the error variance")
    p.add_argument("--stationary", type=boolean, nargs="?", const=True, default=False,
                   help="single-layer model (no inner GPs)")
    p.add_argument("--out-dir", help="directory for the run files")

    p = sub.add_parser("equivalent", help="build the non-stationary equivalent of a run")
    _common(p)
    _neighborhood_args(p)
    p.add_argument("--run-dir", help="directory written by 'train'")
    p.add_argument("--out-dir", help="output directory (default: the run directory)")

    p = sub.add_parser("blend", help="run the blended chain from a finished run")
    _common(p)
    _neighborhood_args(p)
    p.add_argument("--run-dir", help="directory written by 'train'")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--proposal-sds", type=floats)
    p.add_argument("--prior-means", type=floats)
    p.add_argument("--prior-sds", type=floats)
    p.add_argument("--max-jitter", type=float, default=1e-6)
    p.add_argument("--out-dir", help="output directory for the blended trace")

    p = sub.add_parser("predict", help="write per-test-point predictions of a saved trace")
    _common(p)
    p.add_argument("--run-dir", help="directory holding a saved trace")
    p.add_argument("--out", help="output CSV (default: standard output)")

    p = sub.add_parser("compare", help="run a model roster and write the comparison table")
    _common(p)
    _data_args(p)
    _chain_args(p)
    _neighborhood_args(p)
    p.add_argument("--models", type=names, default=tuple(ROSTER),
                   help=f"comma-separated subset of {', '.join(ROSTER)}")
    p.add_argument("--blend-iters", type=int, default=1000)
    p.add_argument("--blend-burnin", type=int, default=500)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--record-time", type=boolean, nargs="?", const=True, default=False,
                   help="include wall time (output is then not reproducible)")
    p.add_argument("--out", help="report file (default: standard output)")
    return parser, sub.choices


def parse_args(argv):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    if getattr(args, "config", None):
        settings = read_config(args.config)
        sp = subparsers[args.command]
        known = {a.dest: a for a in sp._actions}
        unknown = sorted(set(settings) - set(known))
        if unknown:
            raise ConfigError(f"{args.config}: unknown settings {', '.join(unknown)}")
        defaults = {}
        for key, value in settings.items():
            action = known[key]
            if isinstance(action, argparse._AppendAction):
                defaults[key] = [v.strip() for v in value.split(",") if v.strip()]
            elif action.type is not None:
                defaults[key] = action.type(value)
            else:
                defaults[key] = value
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require(args, *names_):
    for n in names_:
        if getattr(args, n) in (None, ""):
            raise UsageError(f"nestgp {args.command}: --{n.replace('_', '-')} is required")


def _check_file(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")


def _load_data(args):
    if args.data:
        _check_file(args.data)
        series = load_csv(args.data)
        n_train = args.n_train if args.n_train is not None else len(series) - args.n_test
        train, test = split(series, SplitSpec(n_train, args.n_test, args.seed))
    elif args.train:
        _check_file(args.train)
        train = load_dataset(args.train)
        if args.test:
            _check_file(args.test)
            test = load_dataset(args.test)
        else:
            test = Dataset([], [])
    else:
        raise UsageError(f"nestgp {args.command}: give --data or --train")
    if args.inject_noise:
        train = inject_noise(train, args.inject_noise, args.seed + 1)
    return train, test


def _chain_config(args, seed):
    burnin = args.burnin if args.burnin is not None else min(5000, args.iters // 2)
    lookback = args.lookback if args.lookback is not None else min(100, max(2, burnin // 2))
    args.burnin, args.lookback = burnin, lookback  # recorded in run.json
    return ChainConfig(
        n_iter=args.iters, n_burnin=burnin, n_lb=lookback, seed=seed,
        theta_init=args.theta_init, delta_init=args.delta_init,
        proposal_sds=args.proposal_sds, delta_proposal_sds=args.delta_proposal_sds,
        prior_means=args.prior_means, prior_sds=args.prior_sds,
        delta_prior_means=args.delta_prior_means, delta_prior_sds=args.delta_prior_sds,
        noise_init=args.noise_init, noise_proposal_sd=args.noise_proposal_sd,
        noise_prior_mean=args.noise_prior_mean, noise_prior_sd=args.noise_prior_sd,
        max_jitter=args.max_jitter,
    )


def _write_run_json(args, out_dir, extra=None):
    settings = {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in sorted(vars(args).items()) if k not in PATH_ARGS and k != "verbose"}
    doc = {"nestgp": __version__, "settings": settings}
    doc.update(extra or {})
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args):
    _require(args, "out")
    params = {}
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = float(v)
    save_csv(synth_generate(args.kind, params, args.n, args.seed), args.out)


def _load_run_data(run_dir):
    _check_file(os.path.join(run_dir, "train.csv"))
    train = load_dataset(os.path.join(run_dir, "train.csv"))
    test_path = os.path.join(run_dir, "test.csv")
    test = load_dataset(test_path) if os.path.isfile(test_path) else Dataset([], [])
    return train, test


def cmd_train(args):
    _require(args, "out_dir")
    train, test = _load_data(args)
    trace = run_chain(train, args.family, _chain_config(args, args.seed), test.inputs,
                      noise_mode=args.noise, nonparametric=not args.stationary)
    os.makedirs(args.out_dir, exist_ok=True)
    write_trace(trace, args.out_dir)
    save_dataset(train, os.path.join(args.out_dir, "train.csv"))
    save_dataset(test, os.path.join(args.out_dir, "test.csv"))
    _write_run_json(args, args.out_dir, {
        "posterior_mean": dict(zip(trace.names, trace.posterior_mean_thetas())),
        "acceptance_rate": trace.acceptance_rate(),
    })


def cmd_equivalent(args):
    _require(args, "run_dir")
    out_dir = args.out_dir or args.run_dir
    _check_file(os.path.join(args.run_dir, "trace.csv"))
    trace = read_trace(args.run_dir)
    if trace.family != "sqe":
        raise ConfigError("the equivalent is built from an SQE-looking run")
    train, test = _load_run_data(args.run_dir)
    d = standardize(train)
    noise = None
    if trace.sigma_eps_sq is not None:
        noise = NoiseSpec(float(trace.sigma_eps_sq[trace.post].mean()), d.s_sq)
    spec = KernelSpec.from_thetas("sqe", trace.posterior_mean_thetas())
    pls = build_equivalent(d, spec, noise, test.inputs, NeighborhoodConfig(args.epsilon, args.n_s))
    os.makedirs(out_dir, exist_ok=True)
    header = ["x"] + [f"{x!r}" for x in pls.inputs.tolist()]
    for name, m in (("equivalent_corr.csv", pls.corr), ("equivalent_length_scales.csv", pls.values)):
        write_csv(os.path.join(out_dir, name), header,
                  ([x] + row for x, row in zip(pls.inputs.tolist(), m.tolist())))
    if len(test):
        summary = predict_equivalent(d, pls, test.inputs, noise)
        rows = prediction_rows(summary, truth=test.outputs)
        _emit(render_prediction_rows(rows), os.path.join(out_dir, "equivalent_predictions.csv"))


def cmd_blend(args):
    _require(args, "run_dir", "out_dir")
    _check_file(os.path.join(args.run_dir, "trace.csv"))
    base = read_trace(args.run_dir)
    train, test = _load_run_data(args.run_dir)
    if not len(test):
        raise ConfigError("the blended chain needs test inputs")
    cfg = BlendedConfig(test.inputs, NeighborhoodConfig(args.epsilon, args.n_s), base.family,
                        args.iters, args.burnin, args.seed, args.proposal_sds,
                        args.prior_means, args.prior_sds, max_jitter=args.max_jitter)
    trace = run_blended_chain(train, cfg, init_from_trace(base))
    os.makedirs(args.out_dir, exist_ok=True)
    write_trace(trace, args.out_dir)
    save_dataset(train, os.path.join(args.out_dir, "train.csv"))
    save_dataset(test, os.path.join(args.out_dir, "test.csv"))
    _write_run_json(args, args.out_dir, {
        "posterior_mean": dict(zip(trace.names, trace.posterior_mean_thetas())),
        "acceptance_rate": trace.acceptance_rate(),
    })


def cmd_predict(args):
    _require(args, "run_dir")
    _check_file(os.path.join(args.run_dir, "trace.csv"))
    trace = read_trace(args.run_dir)
    if trace.test_inputs.size == 0:
        raise ConfigError("the saved run has no test inputs")
    truth = None
    test_path = os.path.join(args.run_dir, "test.csv")
    if os.path.isfile(test_path):
        test = load_dataset(test_path)
        if np.array_equal(test.inputs, trace.test_inputs):
            truth = test.outputs
    rows = prediction_rows(trace.predictive_summary(), trace.pred_mean, truth)
    _emit(render_prediction_rows(rows), args.out)


def cmd_compare(args):
    train, test = _load_data(args)
    if not len(test):
        raise ConfigError("compare needs test points")
    unknown = [m for m in args.models if m not in ROSTER]
    if unknown:
        raise UsageError(f"unknown models: {', '.join(unknown)}")
    cfg = CompareConfig(_chain_config(args, args.seed), args.seed,
                        NeighborhoodConfig(args.epsilon, args.n_s),
                        args.blend_iters, args.blend_burnin)
    reports, _ = compare(args.models, train, test, cfg, record_time=args.record_time)
    _emit(render_report(reports, args.format), args.out)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "equivalent": cmd_equivalent,
    "blend": cmd_blend,
    "predict": cmd_predict,
    "compare": cmd_compare,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (NestGPError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
