"""
Metropolis-within-Gibbs inference for the two-layer GP model.

Each iteration ``t`` has up to two blocks:

* block 1 proposes every outer-kernel hyperparameter (and the error
  variance, when it is learnt) jointly from truncated Normals and accepts
  or rejects the whole vector against the multivariate Normal likelihood
  of the training data times Gaussian priors;
* block 2, from ``t = n_lb`` on, fits an inner stationary SQE GP to the
  last ``n_lb`` block-1 values of each hyperparameter (indexed by
  iteration), updates the inner length scales ``delta`` with one joint
  Metropolis step, and replaces each hyperparameter by the inner GP's
  posterior mean at the current iteration index.

The replaced value is the starting point of the next block-1 proposal and
is the value used for test-point predictions after burn-in.

With ``nonparametric=False`` only block 1 runs, which gives the
single-layer stationary baselines.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from nestgp.errors import (
    ChainError,
    ConfigError,
    DegenerateData,
    InsufficientSamples,
    NestGPError,
    NotPositiveDefinite,
)
from nestgp.gp import Dataset, mvn_loglik, predict_standardized, standardize, train_factor
from nestgp.kernels import MATERN_FAMILIES, SQE_FAMILIES, KernelSpec, NoiseSpec
from nestgp.numerics import (
    DEFAULT_MAX_JITTER,
    chol_solve,
    cholesky,
    make_rng,
    normal_logpdf,
    truncnorm_draw,
    truncnorm_logpdf,
)

logger = logging.getLogger(__name__)

THETA_FLOOR = 1e-6
PARAM_NAMES = {"sqe": ("ell",), "matern": ("ell", "nu")}


def canonical_family(family):
    if family in SQE_FAMILIES:
        return "sqe"
    if family in MATERN_FAMILIES:
        return "matern"
    raise ConfigError(f"unknown family {family!r}; expected 'sqe' or 'matern'")


@dataclass(frozen=True)
class HyperState:
    thetas: tuple
    deltas: tuple = ()
    sigma_eps_sq: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(v) for v in self.thetas))
        object.__setattr__(self, "deltas", tuple(float(v) for v in self.deltas))
        if any(not v > 0 for v in self.thetas + self.deltas):
            raise ConfigError(f"hyperparameters must be positive: {self}")


class LookbackBuffer:
    """FIFO of ``(iteration, value)`` pairs holding at most `capacity`."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ConfigError("lookback capacity must be positive")
        self.capacity = int(capacity)
        self._entries = deque(maxlen=self.capacity)

    def push(self, t, value):
        if self._entries and t <= self._entries[-1][0]:
            raise ValueError(f"lookback indices must increase ({t} after {self._entries[-1][0]})")
        self._entries.append((int(t), float(value)))

    def __len__(self):
        return len(self._entries)

    @property
    def full(self):
        return len(self._entries) == self.capacity

    @property
    def indices(self):
        return np.array([e[0] for e in self._entries], dtype=float)

    @property
    def values(self):
        return np.array([e[1] for e in self._entries], dtype=float)

    @property
    def newest(self):
        return self._entries[-1]

    @property
    def oldest(self):
        return self._entries[0]


@dataclass
class ChainConfig:
    """Settings for :func:`run_chain`.

    Any hyperparameter setting left as None is filled by :meth:`resolved`:
    the length-scale start is a tenth of the input range, the Matérn
    roughness starts at 1.5, inner length scales start at 1, and every
    prior is ``Normal(init, 10 * init)``.
    """

    n_iter: int = 10000
    n_burnin: int = 5000
    n_lb: int = 100
    seed: int = 0
    theta_init: Optional[Sequence[float]] = None
    delta_init: Optional[Sequence[float]] = None
    proposal_sds: Optional[Sequence[float]] = None
    delta_proposal_sds: Optional[Sequence[float]] = None
    prior_means: Optional[Sequence[float]] = None
    prior_sds: Optional[Sequence[float]] = None
    delta_prior_means: Optional[Sequence[float]] = None
    delta_prior_sds: Optional[Sequence[float]] = None
    noise_init: Optional[float] = None
    noise_proposal_sd: Optional[float] = None
    noise_prior_mean: Optional[float] = None
    noise_prior_sd: Optional[float] = None
    max_jitter: float = DEFAULT_MAX_JITTER

    def validate(self, nonparametric=True):
        if self.n_iter < 1:
            raise ConfigError("n_iter must be positive")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ConfigError(f"need 0 <= n_burnin < n_iter, got {self.n_burnin}, {self.n_iter}")
        if nonparametric:
            if self.n_lb < 2:
                raise ConfigError("n_lb must be at least 2")
            if self.n_lb >= self.n_burnin:
                raise ConfigError(f"need n_lb < n_burnin, got {self.n_lb} >= {self.n_burnin}")
        for name in ("proposal_sds", "delta_proposal_sds", "prior_sds", "delta_prior_sds"):
            vals = getattr(self, name)
            if vals is not None and any(not v > 0 for v in vals):
                raise ConfigError(f"{name} must be positive")
        for name in ("noise_proposal_sd", "noise_prior_sd", "noise_init"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name} must be positive")

    def resolved(self, d, family, noise_mode=False):
        """Copy with every None hyperparameter setting filled in for data
        `d` (unstandardized or standardized) and `family`."""
        family = canonical_family(family)
        h = len(PARAM_NAMES[family])

        def vec(v, default):
            if v is None:
                v = default
            v = tuple(float(x) for x in np.broadcast_to(np.asarray(v, dtype=float), (h,)))
            return v

        span = float(np.ptp(d.inputs)) if len(d) > 1 else 1.0
        default_theta = (max(span / 10.0, 1e-3),) + ((1.5,) if h == 2 else ())
        theta_init = vec(self.theta_init, default_theta)
        delta_init = vec(self.delta_init, 1.0)
        out = replace(
            self,
            theta_init=theta_init,
            delta_init=delta_init,
            proposal_sds=vec(self.proposal_sds, 0.5),
            delta_proposal_sds=vec(self.delta_proposal_sds, 0.1),
            prior_means=vec(self.prior_means, theta_init),
            prior_sds=vec(self.prior_sds, tuple(10 * v for v in theta_init)),
            delta_prior_means=vec(self.delta_prior_means, delta_init),
            delta_prior_sds=vec(self.delta_prior_sds, tuple(10 * v for v in delta_init)),
        )
        if noise_mode:
            s_sq = d.s_sq if d.standardized else float(np.var(d.outputs, ddof=1))
            init = self.noise_init if self.noise_init is not None else 0.01 * s_sq
            out = replace(
                out,
                noise_init=init,
                noise_proposal_sd=self.noise_proposal_sd or 0.25 * init,
                noise_prior_mean=self.noise_prior_mean if self.noise_prior_mean is not None else init,
                noise_prior_sd=self.noise_prior_sd or 10 * init,
            )
        return out


@dataclass(frozen=True)
class HpdInterval:
    lower: float
    upper: float
    mass: float = 0.95

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value):
        return self.lower <= value <= self.upper


def hpd(samples, mass=0.95):
    """Shortest interval spanned by ``ceil(mass * n)`` sorted samples.

    Ties go to the window with the lowest lower bound.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 20:
        raise InsufficientSamples(f"hpd needs at least 20 samples, got {n}")
    k = min(n, max(1, math.ceil(mass * n - 1e-9)))
    widths = x[k - 1:] - x[: n - k + 1]
    i = int(np.argmin(widths))
    return HpdInterval(float(x[i]), float(x[i + k - 1]), mass)


def propose(current, sd, rng):
    """Truncated-Normal random-walk proposal on ``(0, inf)``."""
    return truncnorm_draw(current, sd, rng, 0.0)


def _log_hastings(current, proposed, sds):
    """log q(current | proposed) - log q(proposed | current) for the
    truncated-Normal proposals; the truncation mass makes it non-zero."""
    return sum(
        truncnorm_logpdf(c, p, s) - truncnorm_logpdf(p, c, s)
        for c, p, s in zip(current, proposed, sds)
    )


def _accept(log_alpha, rng):
    u = rng.random()
    return log_alpha >= 0.0 or u <= math.exp(log_alpha)


def block1_log_post(thetas, sigma_eps_sq, d, family, cfg, noise_mode=False):
    """Log likelihood of the standardized training data plus Gaussian log
    priors, at outer hyperparameters `thetas`."""
    spec = KernelSpec.from_thetas(family, thetas)
    noise = NoiseSpec(sigma_eps_sq, d.s_sq) if noise_mode else None
    lp = mvn_loglik(d, spec, noise, cfg.max_jitter)
    for v, m, s in zip(thetas, cfg.prior_means, cfg.prior_sds):
        lp += normal_logpdf(v, m, s)
    if noise_mode:
        lp += normal_logpdf(sigma_eps_sq, cfg.noise_prior_mean, cfg.noise_prior_sd)
    return lp


def block1_step(state, d, family, cfg, rng, noise_mode=False, current_log_post=None,
                proposal=propose):
    """One joint Metropolis update of the outer hyperparameters.

    `cfg` must be resolved. Returns ``(state, accepted, log_post)`` where
    `log_post` belongs to the returned state. A proposal at which the
    covariance cannot be factorized is rejected.
    """
    if current_log_post is None:
        current_log_post = block1_log_post(
            state.thetas, state.sigma_eps_sq, d, family, cfg, noise_mode)
    cur = state.thetas
    prop = tuple(proposal(v, s, rng) for v, s in zip(cur, cfg.proposal_sds))
    log_q = _log_hastings(cur, prop, cfg.proposal_sds)
    prop_noise = state.sigma_eps_sq
    if noise_mode:
        prop_noise = proposal(state.sigma_eps_sq, cfg.noise_proposal_sd, rng)
        log_q += _log_hastings(
            (state.sigma_eps_sq,), (prop_noise,), (cfg.noise_proposal_sd,))
    if min(prop) <= 0 or (noise_mode and prop_noise <= 0):
        _accept(-math.inf, rng)
        return state, False, current_log_post
    try:
        prop_log_post = block1_log_post(prop, prop_noise, d, family, cfg, noise_mode)
    except NotPositiveDefinite:
        _accept(-math.inf, rng)
        return state, False, current_log_post
    if _accept(prop_log_post - current_log_post + log_q, rng):
        return replace(state, thetas=prop, sigma_eps_sq=prop_noise), True, prop_log_post
    return state, False, current_log_post


def inner_corr_matrix(indices, delta):
    """SQE correlation over iteration indices, length scale `delta`."""
    t = np.asarray(indices, dtype=float)
    diff = t[:, None] - t[None, :]
    return np.exp(-(diff * diff) / (2.0 * delta * delta))


def lookback_dataset(buf):
    """Standardized ``(iteration, value)`` data from a full buffer.

    Raises DegenerateData when the stored values are constant.
    """
    if not buf.full:
        raise ValueError(f"lookback buffer holds {len(buf)} of {buf.capacity} entries")
    return standardize(Dataset(buf.indices, buf.values))


def inner_log_post(data, delta, prior_mean, prior_sd, max_jitter=DEFAULT_MAX_JITTER):
    factor = cholesky(inner_corr_matrix(data.inputs, delta), max_jitter)
    return (mvn_loglik(data, None, factor=factor)
            + normal_logpdf(delta, prior_mean, prior_sd)), factor


def inner_predict(data, delta, t, factor=None, max_jitter=DEFAULT_MAX_JITTER):
    """Inner-GP posterior mean at iteration `t`, in the units of the
    stored hyperparameter values."""
    if factor is None:
        factor = cholesky(inner_corr_matrix(data.inputs, delta), max_jitter)
    k = np.exp(-((t - data.inputs) ** 2) / (2.0 * delta * delta))
    mean_std = float(k @ chol_solve(factor, data.outputs))
    p = data.std_params
    return mean_std * p.sd + p.mean


@dataclass
class Block2Result:
    deltas: tuple
    theta_preds: tuple
    accepted: bool
    log_posts: tuple
    floored: tuple = ()


def block2_step(buffers, deltas, block1_thetas, cfg, rng, proposal=propose):
    """Inner-layer update for every hyperparameter at once.

    Each buffer must be full; its entries are the block-1 values from the
    previous ``n_lb`` iterations, and the prediction is made one step past
    the newest index. The deltas of all non-degenerate buffers share one
    acceptance test. Afterwards each buffer receives the current block-1
    value at the prediction index and drops its oldest entry.
    """
    h = len(buffers)
    active = []
    datasets = [None] * h
    for k, buf in enumerate(buffers):
        try:
            datasets[k] = lookback_dataset(buf)
            active.append(k)
        except DegenerateData:
            pass

    new_deltas = list(deltas)
    log_posts = [0.0] * h
    factors = [None] * h
    accepted = False
    if active:
        cur_lp, cur_fac = {}, {}
        for k in active:
            cur_lp[k], cur_fac[k] = inner_log_post(
                datasets[k], deltas[k], cfg.delta_prior_means[k], cfg.delta_prior_sds[k],
                cfg.max_jitter)
        prop = {k: proposal(deltas[k], cfg.delta_proposal_sds[k], rng) for k in active}
        prop_lp, prop_fac = {}, {}
        ok = all(v > 0 for v in prop.values())
        if ok:
            try:
                for k in active:
                    prop_lp[k], prop_fac[k] = inner_log_post(
                        datasets[k], prop[k], cfg.delta_prior_means[k],
                        cfg.delta_prior_sds[k], cfg.max_jitter)
            except NotPositiveDefinite:
                ok = False
        log_alpha = -math.inf
        if ok:
            log_alpha = sum(prop_lp[k] - cur_lp[k] for k in active) + _log_hastings(
                [deltas[k] for k in active], [prop[k] for k in active],
                [cfg.delta_proposal_sds[k] for k in active])
        accepted = _accept(log_alpha, rng)
        for k in active:
            if accepted:
                new_deltas[k], log_posts[k], factors[k] = prop[k], prop_lp[k], prop_fac[k]
            else:
                log_posts[k], factors[k] = cur_lp[k], cur_fac[k]

    preds, floored = [], []
    for k, buf in enumerate(buffers):
        t = buf.newest[0] + 1
        if datasets[k] is None:
            pred = float(buf.values[-1])
        else:
            pred = inner_predict(datasets[k], new_deltas[k], t, factors[k])
        if not np.isfinite(pred):
            raise DegenerateData(f"inner prediction for parameter {k} is not finite")
        if pred < THETA_FLOOR:
            logger.info("inner prediction %.3g for parameter %d floored at %g",
                        pred, k, THETA_FLOOR)
            floored.append(k)
            pred = THETA_FLOOR
        preds.append(pred)
        buf.push(t, block1_thetas[k])
    return Block2Result(tuple(new_deltas), tuple(preds), accepted, tuple(log_posts),
                        tuple(floored))


@dataclass(eq=False)
class ChainTrace:
    """Per-iteration record of a chain.

    `theta` holds block-1 values, `theta_current` the value current at the
    end of the iteration (the inner-GP prediction once block 2 runs).
    Predictions are stored for post-burn-in iterations only, in output
    units.
    """

    family: str
    model: str
    n_burnin: int
    iteration: np.ndarray
    theta: np.ndarray
    theta_current: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    delta: Optional[np.ndarray] = None
    log_post_delta: Optional[np.ndarray] = None
    accepted_delta: Optional[np.ndarray] = None
    block2: Optional[np.ndarray] = None
    sigma_eps_sq: Optional[np.ndarray] = None
    test_inputs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pred_iteration: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    pred_mean: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    pred_var: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    std_params: object = None

    @property
    def names(self):
        return PARAM_NAMES[self.family]

    @property
    def n_iter(self):
        return self.iteration.size

    @property
    def post(self):
        return self.iteration > self.n_burnin

    def samples(self, name, current=False):
        """Post-burn-in samples of a named column: a hyperparameter name
        (block-1 or, with ``current=True``, end-of-iteration values),
        ``delta_<name>`` or ``sigma_eps_sq``."""
        if name == "sigma_eps_sq":
            return self.sigma_eps_sq[self.post]
        if name.startswith("delta_"):
            return self.delta[self.post, self.names.index(name[6:])]
        arr = self.theta_current if current else self.theta
        return arr[self.post, self.names.index(name)]

    def posterior_mean_thetas(self, current=True):
        arr = self.theta_current if current else self.theta
        return tuple(float(v) for v in arr[self.post].mean(axis=0))

    def acceptance_rate(self):
        return float(self.accepted[self.post].mean())

    def predictive_summary(self):
        """Mixture summary of the recorded predictions: the mean of the
        per-iteration means, and total variance = mean variance + variance
        of means."""
        from nestgp.gp import PredictiveSummary

        mean = self.pred_mean.mean(axis=0)
        var = self.pred_var.mean(axis=0) + self.pred_mean.var(axis=0)
        return PredictiveSummary(self.test_inputs, mean, var)

    def is_finite(self):
        arrays = [self.theta, self.theta_current, self.log_post, self.pred_mean, self.pred_var]
        arrays += [a for a in (self.delta, self.log_post_delta, self.sigma_eps_sq) if a is not None]
        return all(np.all(np.isfinite(a)) for a in arrays)


def run_chain(d, family, cfg, test_inputs=None, noise_mode=False, nonparametric=True,
              proposal=propose):
    """Run the chain and return its :class:`ChainTrace`.

    Parameters
    ----------
    d : Dataset
        Training data; standardized here if it is not already.
    family : {'sqe', 'matern'}
    cfg : ChainConfig
    test_inputs : array_like, optional
        Inputs at which predictions are recorded after burn-in.
    noise_mode : bool
        Learn the error variance in block 1.
    nonparametric : bool
        Run the inner layer; False gives the stationary single-layer model.
    proposal : callable
        ``proposal(current, sd, rng)``; the truncated Normal by default.
    """
    family = canonical_family(family)
    cfg.validate(nonparametric)
    d = standardize(d)
    cfg = cfg.resolved(d, family, noise_mode)
    rng = make_rng(cfg.seed)
    h = len(PARAM_NAMES[family])
    test_inputs = np.zeros(0) if test_inputs is None else np.asarray(test_inputs, float).ravel()

    state = HyperState(cfg.theta_init, cfg.delta_init if nonparametric else (),
                       cfg.noise_init if noise_mode else None)
    buffers = [LookbackBuffer(cfg.n_lb) for _ in range(h)] if nonparametric else []
    for k, buf in enumerate(buffers):
        buf.push(0, state.thetas[k])

    n = cfg.n_iter
    theta = np.empty((n, h))
    theta_cur = np.empty((n, h))
    log_post = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    delta = np.empty((n, h)) if nonparametric else None
    log_post_delta = np.zeros((n, h)) if nonparametric else None
    accepted_delta = np.zeros(n, dtype=bool) if nonparametric else None
    block2 = np.zeros(n, dtype=bool) if nonparametric else None
    noise_tr = np.empty(n) if noise_mode else None
    n_post = n - cfg.n_burnin if test_inputs.size else 0
    pred_mean = np.empty((n_post, test_inputs.size))
    pred_var = np.empty((n_post, test_inputs.size))
    p = d.std_params

    cur_lp = None
    for i, t in enumerate(range(1, n + 1)):
        try:
            state, acc, lp = block1_step(state, d, family, cfg, rng, noise_mode, cur_lp, proposal)
            theta[i] = state.thetas
            log_post[i] = lp
            accepted[i] = acc
            cur_lp = lp
            if nonparametric:
                if t >= cfg.n_lb:
                    res = block2_step(buffers, state.deltas, state.thetas, cfg, rng, proposal)
                    state = replace(state, thetas=res.theta_preds, deltas=res.deltas)
                    cur_lp = None
                    log_post_delta[i] = res.log_posts
                    accepted_delta[i] = res.accepted
                    block2[i] = True
                else:
                    for k, buf in enumerate(buffers):
                        buf.push(t, state.thetas[k])
                delta[i] = state.deltas
            theta_cur[i] = state.thetas
            if noise_mode:
                noise_tr[i] = state.sigma_eps_sq
            if t > cfg.n_burnin and n_post:
                j = t - cfg.n_burnin - 1
                spec = KernelSpec.from_thetas(family, state.thetas)
                noise = NoiseSpec(state.sigma_eps_sq, d.s_sq) if noise_mode else None
                m, v = predict_standardized(d, spec, test_inputs, noise, cfg.max_jitter)
                pred_mean[j] = m * p.sd + p.mean
                pred_var[j] = v * p.sd**2
        except NestGPError as exc:
            raise ChainError(t, exc) from exc

    return ChainTrace(
        family=family,
        model="nonparametric" if nonparametric else "stationary",
        n_burnin=cfg.n_burnin,
        iteration=np.arange(1, n + 1),
        theta=theta,
        theta_current=theta_cur,
        log_post=log_post,
        accepted=accepted,
        delta=delta,
        log_post_delta=log_post_delta,
        accepted_delta=accepted_delta,
        block2=block2,
        sigma_eps_sq=noise_tr,
        test_inputs=test_inputs,
        pred_iteration=np.arange(cfg.n_burnin + 1, n + 1) if n_post else np.zeros(0, int),
        pred_mean=pred_mean,
        pred_var=pred_var,
        std_params=p,
    )
