"""
Standardization, the zero-mean multivariate Normal likelihood, and
closed-form GP prediction.

All inference runs on standardized outputs, so the prior covariance is a
correlation matrix and the prior mean is zero. :func:`predict` returns
results in the original output units.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from nestgp.errors import DegenerateData, DimensionMismatch, DomainError
from nestgp.kernels import apply_noise, build_corr_matrix, cross_corr
from nestgp.numerics import (
    DEFAULT_MAX_JITTER,
    LOG_2PI,
    chol_solve,
    cholesky,
    log_det,
)

logger = logging.getLogger(__name__)

MIN_SAMPLE_VARIANCE = 1e-14
VARIANCE_CLIP_TOL = 1e-8


@dataclass(frozen=True)
class StandardizationParams:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError("standardization sd must be positive")


def _frozen(a):
    a = np.array(a, dtype=float).ravel()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Input/output pairs, optionally standardized on the output."""

    inputs: np.ndarray
    outputs: np.ndarray
    standardized: bool = False
    std_params: Optional[StandardizationParams] = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        object.__setattr__(self, "outputs", _frozen(self.outputs))
        if self.inputs.shape != self.outputs.shape:
            raise DimensionMismatch(
                f"{self.inputs.size} inputs but {self.outputs.size} outputs"
            )
        if not np.all(np.isfinite(self.inputs)):
            raise DomainError("inputs must be finite")
        if self.standardized and self.std_params is None:
            raise DomainError("standardized dataset needs std_params")

    def __len__(self):
        return self.inputs.size

    @property
    def s_sq(self):
        return self.std_params.sd**2 if self.std_params else 1.0


@dataclass(frozen=True, eq=False)
class PredictiveSummary:
    """Predictive mean and variance at each test input (output units)."""

    inputs: np.ndarray
    mean: np.ndarray
    variance: np.ndarray = field(repr=False)

    def __len__(self):
        return self.inputs.size

    @property
    def sd(self):
        return np.sqrt(self.variance)


def standardize(d):
    """Shift and scale outputs to zero sample mean and unit sample variance
    (divisor ``M - 1``)."""
    if d.standardized:
        return d
    y = d.outputs
    if y.size < 2:
        raise DegenerateData("need at least two outputs to standardize")
    mean = float(np.mean(y))
    var = float(np.var(y, ddof=1))
    if var <= MIN_SAMPLE_VARIANCE:
        raise DegenerateData(f"sample variance {var:.3g} is too small")
    sd = math.sqrt(var)
    return Dataset(d.inputs, (y - mean) / sd, True, StandardizationParams(mean, sd))


def unstandardize(d):
    if not d.standardized:
        return d
    p = d.std_params
    return Dataset(d.inputs, d.outputs * p.sd + p.mean, False, None)


def train_factor(d, spec, noise=None, max_jitter=DEFAULT_MAX_JITTER):
    sigma = apply_noise(build_corr_matrix(d.inputs, spec), noise)
    return cholesky(sigma, max_jitter)


def mvn_loglik(d, spec, noise=None, max_jitter=DEFAULT_MAX_JITTER, factor=None):
    """Log density of the standardized outputs under ``MN(0, Sigma')``.

    ``Sigma'`` is the correlation matrix of `spec` over the inputs plus the
    standardized noise nugget.
    """
    if factor is None:
        factor = train_factor(d, spec, noise, max_jitter)
    y = d.outputs
    alpha = chol_solve(factor, y)
    return -0.5 * (y.size * LOG_2PI + log_det(factor) + float(y @ alpha))


def clip_variance(var, where="prediction"):
    var = np.asarray(var, dtype=float)
    bad = var < -VARIANCE_CLIP_TOL
    if np.any(bad):
        logger.warning(
            "%s: %d predictive variances below -%g (min %.3g) clipped to 0",
            where, int(bad.sum()), VARIANCE_CLIP_TOL, float(var.min()),
        )
    return np.maximum(var, 0.0)


def predict_standardized(d, spec, test_inputs, noise=None,
                         max_jitter=DEFAULT_MAX_JITTER, factor=None,
                         with_variance=True):
    """Posterior mean and variance in standardized units.

    Returns ``(mean, variance)``; `variance` is None when
    ``with_variance=False``.
    """
    test_inputs = np.asarray(test_inputs, dtype=float).ravel()
    if factor is None:
        factor = train_factor(d, spec, noise, max_jitter)
    kstar = cross_corr(d.inputs, test_inputs, spec)
    mean = kstar.T @ chol_solve(factor, d.outputs)
    if not with_variance:
        return mean, None
    v = linalg.solve_triangular(factor.lower, kstar, lower=True, check_finite=False)
    var = clip_variance(1.0 - np.sum(v * v, axis=0))
    return mean, var


def predict(d, spec, noise, test_inputs, max_jitter=DEFAULT_MAX_JITTER, factor=None):
    """Closed-form GP prediction at `test_inputs`, unstandardized.

    Parameters
    ----------
    d : Dataset
        Standardized training data.
    spec : KernelSpec
        Kernel at fixed hyperparameters. For ``pairwise-sqe`` the length
        scales must cover every train-train and train-test pair.
    noise : NoiseSpec or None
    test_inputs : array_like

    Returns
    -------
    PredictiveSummary
    """
    if not d.standardized:
        raise DomainError("predict expects a standardized dataset")
    test_inputs = np.asarray(test_inputs, dtype=float).ravel()
    mean, var = predict_standardized(d, spec, test_inputs, noise, max_jitter, factor)
    p = d.std_params
    return PredictiveSummary(test_inputs, mean * p.sd + p.mean, var * p.sd**2)

