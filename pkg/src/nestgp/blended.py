"""
The blended model: a single-block Metropolis chain over the outer
hyperparameters whose likelihood rewards agreement, at the test inputs,
between the closed-form prediction of the learnt kernel and that of its
non-stationary equivalent.

The likelihood is

    log L(theta) = -sum_i |E_np,i - E_ns,i| / (2 * max(Var_np,i, 1e-6))

in standardized units. Inner length scales are not learnt here; the chain
is usually started at the posterior mean of a finished non-parametric run.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from nestgp.errors import ChainError, ConfigError, DomainError, NestGPError, NotPositiveDefinite
from nestgp.gp import predict_standardized, standardize, train_factor
from nestgp.inference import (
    PARAM_NAMES,
    ChainTrace,
    HyperState,
    _accept,
    _log_hastings,
    canonical_family,
    propose,
)
from nestgp.kernels import KernelSpec, NoiseSpec
from nestgp.nonstationary import (
    NeighborhoodConfig,
    build_equivalent,
    neighbor_grid,
    predict_equivalent_standardized,
)
from nestgp.numerics import DEFAULT_MAX_JITTER, make_rng, normal_logpdf

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


@dataclass
class BlendedConfig:
    """Settings for :func:`run_blended_chain`.

    Unset proposal sds default to 0.5 and priors to ``Normal(init, 10 * init)``.
    `pairs` selects entries of the ``(train + test)`` pair grid whose length
    scales are traced; by default the first train-train, test-test and
    train-test pairs.
    """

    test_inputs: Sequence[float]
    neighborhood: NeighborhoodConfig = field(default_factory=NeighborhoodConfig)
    family: str = "sqe"
    n_iter: int = 2000
    n_burnin: int = 1000
    seed: int = 0
    proposal_sds: Optional[Sequence[float]] = None
    prior_means: Optional[Sequence[float]] = None
    prior_sds: Optional[Sequence[float]] = None
    pairs: Optional[Sequence[tuple]] = None
    max_jitter: float = DEFAULT_MAX_JITTER

    def validate(self):
        if np.asarray(self.test_inputs, dtype=float).size < 1:
            raise ConfigError("blended chain needs at least one test input")
        if self.n_iter < 1 or not 0 <= self.n_burnin < self.n_iter:
            raise ConfigError(f"need 0 <= n_burnin < n_iter, got {self.n_burnin}, {self.n_iter}")
        for name in ("proposal_sds", "prior_sds"):
            vals = getattr(self, name)
            if vals is not None and any(not v > 0 for v in vals):
                raise ConfigError(f"{name} must be positive")
        canonical_family(self.family)


def blended_loglik_values(mean_np, mean_ns, var_np):
    """The blended log likelihood from standardized predictions."""
    diff = np.abs(np.asarray(mean_np, dtype=float) - np.asarray(mean_ns, dtype=float))
    var = np.maximum(np.asarray(var_np, dtype=float), VAR_FLOOR)
    return float(-np.sum(diff / (2.0 * var)))


@dataclass(frozen=True, eq=False)
class BlendedEval:
    log_lik: float
    mean_np: np.ndarray
    var_np: np.ndarray
    mean_ns: np.ndarray
    pls: object = None


def equivalent_mean(ev, d, spec, noise, factor, mean_np):
    """Default non-stationary leg: build the equivalent and predict."""
    pls = build_equivalent(d, spec, noise, ev.test_inputs, ev.cfg.neighborhood, factor,
                           ev.cfg.max_jitter, ev.grid)
    mean, _ = predict_equivalent_standardized(d, pls, ev.test_inputs, noise,
                                              ev.cfg.max_jitter, with_variance=False)
    return mean, pls


class BlendedEvaluator:
    """Evaluates the blended likelihood for fixed data, reusing the
    neighbour grid over ``train + test`` across calls."""

    def __init__(self, d, cfg, noise=None, equivalent: Callable = equivalent_mean):
        if not d.standardized:
            raise DomainError("blended likelihood expects a standardized dataset")
        self.d = d
        self.cfg = cfg
        self.family = canonical_family(cfg.family)
        self.noise = noise
        self.test_inputs = np.asarray(cfg.test_inputs, dtype=float).ravel()
        self.grid = neighbor_grid(np.concatenate([d.inputs, self.test_inputs]), cfg.neighborhood)
        self.equivalent = equivalent

    def __call__(self, thetas):
        spec = KernelSpec.from_thetas(self.family, thetas)
        factor = train_factor(self.d, spec, self.noise, self.cfg.max_jitter)
        mean_np, var_np = predict_standardized(self.d, spec, self.test_inputs, self.noise,
                                               self.cfg.max_jitter, factor)
        mean_ns, pls = self.equivalent(self, self.d, spec, self.noise, factor, mean_np)
        return BlendedEval(blended_loglik_values(mean_np, mean_ns, var_np),
                           mean_np, var_np, mean_ns, pls)


def _noise_for(state, d):
    if state.sigma_eps_sq:
        return NoiseSpec(state.sigma_eps_sq, d.s_sq)
    return None


def blended_loglik(theta, d, cfg):
    """Blended log likelihood at `theta` (a HyperState) for standardized
    training data `d`."""
    return BlendedEvaluator(d, cfg, _noise_for(theta, d))(theta.thetas).log_lik


@dataclass(eq=False)
class BlendedTrace(ChainTrace):
    """A ChainTrace with the traced pair length scales.

    `pairs` index into ``train + test``; `pair_ell[t, p]` is the length
    scale of pair `p` at the end of iteration ``t + 1``.
    """

    pairs: tuple = ()
    pair_ell: Optional[np.ndarray] = None

    def is_finite(self):
        return super().is_finite() and (self.pair_ell is None or bool(np.all(np.isfinite(self.pair_ell))))


def default_pairs(n_train, n_test):
    pairs = [(0, 1), (0, n_train - 1)]
    if n_test >= 2:
        pairs.append((n_train, n_train + 1))
    if n_test >= 1:
        pairs.append((0, n_train))
    return tuple(dict.fromkeys((i, j) for i, j in pairs if i != j))


def init_from_trace(trace):
    """Start state for the blended chain: the posterior means of a finished
    non-parametric run (and of its error variance, if learnt)."""
    noise = float(trace.sigma_eps_sq[trace.post].mean()) if trace.sigma_eps_sq is not None else None
    return HyperState(trace.posterior_mean_thetas(), (), noise)


def run_blended_chain(d, cfg, init, proposal=propose, equivalent=equivalent_mean):
    """Run the blended chain from `init` and return a :class:`BlendedTrace`.

    The error variance of `init`, if any, is held fixed. `equivalent`
    replaces the non-stationary leg (used to check that a leg equal to the
    non-parametric prediction leaves the likelihood at zero).
    """
    cfg.validate()
    family = canonical_family(cfg.family)
    d = standardize(d)
    h = len(PARAM_NAMES[family])
    if len(init.thetas) != h:
        raise ConfigError(f"{family} needs {h} hyperparameters, got {len(init.thetas)}")
    test_inputs = np.asarray(cfg.test_inputs, dtype=float).ravel()
    noise = _noise_for(init, d)
    ev = BlendedEvaluator(d, cfg, noise, equivalent)

    def vec(v, default):
        return tuple(float(x) for x in np.broadcast_to(
            np.asarray(default if v is None else v, dtype=float), (h,)))

    sds = vec(cfg.proposal_sds, 0.5)
    prior_means = vec(cfg.prior_means, init.thetas)
    prior_sds = vec(cfg.prior_sds, tuple(10 * v for v in init.thetas))
    pairs = tuple(cfg.pairs) if cfg.pairs is not None else default_pairs(len(d), test_inputs.size)
    n_points = len(d) + test_inputs.size
    if any(not (0 <= i < n_points and 0 <= j < n_points) for i, j in pairs):
        raise ConfigError(f"traced pairs must index the {n_points} train + test inputs")
    ii = np.array([p[0] for p in pairs], dtype=int)
    jj = np.array([p[1] for p in pairs], dtype=int)

    def log_prior(thetas):
        return sum(normal_logpdf(v, m, s) for v, m, s in zip(thetas, prior_means, prior_sds))

    rng = make_rng(cfg.seed)
    n = cfg.n_iter
    n_post = n - cfg.n_burnin
    theta = np.empty((n, h))
    log_post = np.empty(n)
    accepted = np.zeros(n, dtype=bool)
    pair_ell = np.empty((n, len(pairs)))
    pred_mean = np.empty((n_post, test_inputs.size))
    pred_var = np.empty((n_post, test_inputs.size))
    p = d.std_params

    cur = init.thetas
    try:
        cur_ev = ev(cur)
    except NestGPError as exc:
        raise ChainError(0, exc) from exc
    cur_lp = cur_ev.log_lik + log_prior(cur)
    if cur_ev.pls is None:
        pair_ell = None
    for i, t in enumerate(range(1, n + 1)):
        try:
            prop = tuple(proposal(v, s, rng) for v, s in zip(cur, sds))
            if min(prop) <= 0:
                _accept(-math.inf, rng)
            else:
                try:
                    prop_ev = ev(prop)
                except NotPositiveDefinite:
                    prop_ev = None
                if prop_ev is None:
                    _accept(-math.inf, rng)
                else:
                    prop_lp = prop_ev.log_lik + log_prior(prop)
                    if _accept(prop_lp - cur_lp + _log_hastings(cur, prop, sds), rng):
                        cur, cur_ev, cur_lp = prop, prop_ev, prop_lp
                        accepted[i] = True
        except NestGPError as exc:
            raise ChainError(t, exc) from exc
        theta[i] = cur
        log_post[i] = cur_lp
        if pair_ell is not None:
            pair_ell[i] = cur_ev.pls.values[ii, jj]
        if t > cfg.n_burnin:
            j = t - cfg.n_burnin - 1
            pred_mean[j] = cur_ev.mean_np * p.sd + p.mean
            pred_var[j] = cur_ev.var_np * p.sd**2

    return BlendedTrace(
        family=family,
        model="blended",
        n_burnin=cfg.n_burnin,
        iteration=np.arange(1, n + 1),
        theta=theta,
        theta_current=theta.copy(),
        log_post=log_post,
        accepted=accepted,
        test_inputs=test_inputs,
        pred_iteration=np.arange(cfg.n_burnin + 1, n + 1),
        pred_mean=pred_mean,
        pred_var=pred_var,
        std_params=p,
        pairs=pairs,
        pair_ell=pair_ell,
    )
