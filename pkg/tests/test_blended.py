import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nestgp.blended import (
    BlendedConfig,
    BlendedEvaluator,
    blended_loglik,
    blended_loglik_values,
    default_pairs,
    init_from_trace,
    run_blended_chain,
)
from nestgp.data import SplitSpec, split, synth_generate
from nestgp.errors import ConfigError, DomainError
from nestgp.gp import standardize
from nestgp.inference import ChainConfig, HyperState, run_chain
from nestgp.nonstationary import NeighborhoodConfig


def identity(current, sd, rng):
    return current


def stub(ev, d, spec, noise, factor, mean_np):
    return mean_np, None


@pytest.fixture(scope="module")
def data():
    s = synth_generate("stationary-gp", {"length_scale": 5.0}, 80, 2)
    return split(s, SplitSpec(20, 4, 2))


def _cfg(test, **kw):
    kw.setdefault("n_iter", 60)
    kw.setdefault("n_burnin", 30)
    return BlendedConfig(test.inputs, NeighborhoodConfig(1.0, 20), **kw)


def test_loglik_arithmetic():
    assert blended_loglik_values([0.5], [0.0], [0.25]) == pytest.approx(-1.0)
    assert blended_loglik_values([1.0, -2.0], [1.0, -2.0], [0.3, 0.1]) == 0.0
    # variance floor
    assert blended_loglik_values([1e-6], [0.0], [0.0]) == pytest.approx(-0.5)


@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 5)),
                min_size=1, max_size=10))
@settings(max_examples=100)
def test_loglik_nonpositive_and_zero_iff_equal(rows):
    a, b, v = (np.array(c) for c in zip(*rows))
    ll = blended_loglik_values(a, b, v)
    assert ll <= 0
    assert (ll == 0) == bool(np.all(a == b))


@given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.01, 2))
def test_loglik_decreasing_in_difference(d1, d2, var):
    if d1 == d2:
        return
    lo, hi = sorted((d1, d2))
    assert blended_loglik_values([lo], [0], [var]) > blended_loglik_values([hi], [0], [var])


def test_blended_loglik_on_data(data):
    train, test = data
    d = standardize(train)
    ll = blended_loglik(HyperState((5.0,)), d, _cfg(test))
    assert np.isfinite(ll) and ll <= 0
    with pytest.raises(DomainError):
        blended_loglik(HyperState((5.0,)), train, _cfg(test))


def test_stub_leg_gives_zero_likelihood(data):
    train, test = data
    ev = BlendedEvaluator(standardize(train), _cfg(test), equivalent=stub)
    assert ev((3.0,)).log_lik == 0.0


def test_stub_leg_samples_prior(data):
    train, test = data
    cfg = _cfg(test, n_iter=3000, n_burnin=500, prior_means=(2.0,), prior_sds=(1.0,),
               proposal_sds=(1.5,))
    tr = run_blended_chain(train, cfg, HyperState((2.0,)), equivalent=stub)
    assert np.all(tr.log_post[1:] <= 0)
    ell = tr.samples("ell")
    prior = stats.truncnorm(a=-2.0, b=np.inf, loc=2.0, scale=1.0)
    assert stats.kstest(ell, prior.cdf).statistic < 0.08
    assert tr.pair_ell is None


def test_identity_proposal_always_accepts(data):
    train, test = data
    tr = run_blended_chain(train, _cfg(test, n_iter=20, n_burnin=10), HyperState((4.0,)),
                           proposal=identity)
    assert tr.accepted.all()
    assert np.all(tr.theta == 4.0)


def test_deterministic_and_finite(data):
    train, test = data
    a = run_blended_chain(train, _cfg(test, seed=5), HyperState((4.0,)))
    b = run_blended_chain(train, _cfg(test, seed=5), HyperState((4.0,)))
    for name in ("theta", "log_post", "pair_ell", "pred_mean", "pred_var"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.is_finite()
    assert np.all(a.pair_ell > 0)
    assert a.model == "blended" and a.pred_mean.shape == (30, 4)


def test_matern_family(data):
    train, test = data
    tr = run_blended_chain(train, _cfg(test, family="matern", n_iter=20, n_burnin=10),
                           HyperState((4.0, 2.0)))
    assert tr.theta.shape == (20, 2) and tr.is_finite()


def test_config_errors(data):
    train, test = data
    with pytest.raises(ConfigError):
        BlendedConfig([]).validate()
    with pytest.raises(ConfigError):
        run_blended_chain(train, _cfg(test), HyperState((1.0, 2.0)))
    with pytest.raises(ConfigError):
        run_blended_chain(train, _cfg(test, pairs=[(0, 99)]), HyperState((1.0,)))


def test_default_pairs():
    assert default_pairs(5, 3) == ((0, 1), (0, 4), (5, 6), (0, 5))
    assert default_pairs(2, 0) == ((0, 1),)
    assert all(i != j for i, j in default_pairs(1, 1))


def test_init_from_trace(data):
    train, test = data
    tr = run_chain(train, "sqe", ChainConfig(n_iter=120, n_burnin=60, n_lb=30), noise_mode=True)
    init = init_from_trace(tr)
    assert init.thetas == pytest.approx(tr.posterior_mean_thetas())
    assert init.sigma_eps_sq == pytest.approx(tr.samples("sigma_eps_sq").mean())
