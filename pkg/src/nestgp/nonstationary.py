"""
Non-stationary equivalent of a learnt SQE-looking kernel.

For every input in ``train + test`` the learnt GP's posterior mean is
evaluated on ``n_s`` evenly spaced neighbours within ``epsilon``. The
Pearson correlation of two such samples, ``c``, is equated to
``exp(-(x_i - x_j)**2 / ell_ij**2)`` and solved for the pair length scale
``ell_ij``. Prediction then uses the pairwise-SQE kernel, whose
train-train matrix is the matrix of (clamped) correlations, repaired to be
positive semi-definite.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from nestgp.errors import DegenerateSample, DimensionMismatch, DomainError
from nestgp.gp import PredictiveSummary, predict_standardized
from nestgp.kernels import KernelSpec, apply_noise, build_corr_matrix
from nestgp.numerics import DEFAULT_MAX_JITTER, EIG_FLOOR, cholesky, nearest_psd

logger = logging.getLogger(__name__)

CORR_MIN = 1e-8
CORR_MAX = 1.0 - 1e-8


@dataclass(frozen=True)
class NeighborhoodConfig:
    epsilon: float = 0.092
    n_s: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.n_s < 1:
            raise DomainError("n_s must be positive")


def neighbors(x, cfg):
    """`n_s` evenly spaced points on ``[x - eps, x + eps]``."""
    return np.linspace(x - cfg.epsilon, x + cfg.epsilon, cfg.n_s)


def neighbor_grid(points, cfg):
    points = np.asarray(points, dtype=float).ravel()
    offsets = np.linspace(-cfg.epsilon, cfg.epsilon, cfg.n_s)
    return points[:, None] + offsets[None, :]


def neighbor_samples(d, spec, noise, points, cfg, factor=None, max_jitter=DEFAULT_MAX_JITTER,
                     grid=None):
    """Standardized posterior means at the neighbours of each point.

    Returns an array of shape ``(len(points), n_s)``. A precomputed
    `grid` from :func:`neighbor_grid` may be passed to skip rebuilding it.
    """
    if grid is None:
        grid = neighbor_grid(points, cfg)
    mean, _ = predict_standardized(d, spec, grid.ravel(), noise, max_jitter, factor,
                                   with_variance=False)
    return mean.reshape(grid.shape)


def corr_hat(s_i, s_j):
    """Pearson correlation of two equal-length samples."""
    a = np.asarray(s_i, dtype=float).ravel()
    b = np.asarray(s_j, dtype=float).ravel()
    if a.size != b.size:
        raise DimensionMismatch("samples differ in length")
    if a.size < 3:
        raise DegenerateSample("need at least 3 values per sample")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(da @ da), math.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise DegenerateSample("sample has zero variance")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def corr_hat_matrix(samples):
    """Pearson correlations between all rows of `samples`.

    Rows with zero variance get correlation 0 with every other row.
    Returns ``(corr, n_degenerate_rows)``.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[1] < 3:
        raise DegenerateSample("need at least 3 values per sample")
    dev = s - s.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.sum(dev * dev, axis=1))
    bad = norm <= 1e-300
    norm[bad] = 1.0
    z = dev / norm[:, None]
    c = np.clip(z @ z.T, -1.0, 1.0)
    c = 0.5 * (c + c.T)
    c[bad, :] = 0.0
    c[:, bad] = 0.0
    np.fill_diagonal(c, 1.0)
    return c, int(bad.sum())


def length_scale(x_i, x_j, c_hat):
    """Pair length scale solving ``exp(-(x_i - x_j)**2 / ell**2) = c_hat``.

    `c_hat` is clamped into ``[1e-8, 1 - 1e-8]``; equal inputs give 1.
    """
    if x_i == x_j:
        return 1.0
    c = min(max(c_hat, CORR_MIN), CORR_MAX)
    if c != c_hat:
        logger.debug("correlation %.6g clamped to %.6g", c_hat, c)
    return math.sqrt(-((x_i - x_j) ** 2) / math.log(c))


def length_scale_matrix(inputs, corr):
    """Vectorized :func:`length_scale` over all pairs.

    Returns ``(ell, clamped_corr, n_clamped)``; `n_clamped` counts
    off-diagonal pairs with distinct inputs whose correlation was clamped.
    """
    x = np.asarray(inputs, dtype=float).ravel()
    diff2 = (x[:, None] - x[None, :]) ** 2
    c = np.clip(corr, CORR_MIN, CORR_MAX)
    same = diff2 == 0
    offdiag = ~same
    n_clamped = int(np.count_nonzero((c != corr) & offdiag) // 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.sqrt(-diff2 / np.log(c))
    ell[same] = 1.0
    c = np.where(same, 1.0, c)
    return ell, c, n_clamped


def sensitivity_factor(c_hat):
    """Fractional error in ``ell_ij`` per unit fractional error in the
    estimated correlation, ``-1 / ln(c_hat**2)``."""
    if not 0 < c_hat < 1:
        raise DomainError("c_hat must lie in (0, 1)")
    return -1.0 / math.log(c_hat * c_hat)


@dataclass(frozen=True, eq=False)
class PairwiseLengthScales:
    """Pair length scales over ``inputs = train + test``.

    `corr` holds the clamped correlations that the length scales
    reproduce exactly; `raw_corr` the unclamped estimates.
    """

    inputs: np.ndarray
    n_train: int
    values: np.ndarray
    corr: np.ndarray
    raw_corr: np.ndarray
    n_clamped: int = 0

    def __post_init__(self):
        index = {}
        for i, x in enumerate(np.asarray(self.inputs, dtype=float)):
            index.setdefault(float(x), i)
        object.__setattr__(self, "_index", index)

    def positions(self, xs):
        try:
            return np.array([self._index[float(x)] for x in np.ravel(xs)], dtype=int)
        except KeyError as exc:
            raise DomainError(f"input {exc.args[0]} has no pairwise length scales") from None

    def lookup(self, a, b):
        return self.values[np.ix_(self.positions(a), self.positions(b))]

    def blocks(self, which="values"):
        """``(train-train, test-test, train-test)`` blocks of `values`
        (or of `corr` with ``which='corr'``)."""
        m = getattr(self, which)
        n = self.n_train
        return m[:n, :n], m[n:, n:], m[:n, n:]


def build_equivalent(d, spec, noise, test_inputs, cfg, factor=None,
                     max_jitter=DEFAULT_MAX_JITTER, grid=None):
    """Pair length scales of the non-stationary equivalent of `spec`.

    Parameters
    ----------
    d : Dataset
        Standardized training data.
    spec : KernelSpec
        The learnt kernel at fixed (posterior-mean) hyperparameters.
    noise : NoiseSpec or None
    test_inputs : array_like
    cfg : NeighborhoodConfig
    """
    test_inputs = np.asarray(test_inputs, dtype=float).ravel()
    points = np.concatenate([d.inputs, test_inputs])
    samples = neighbor_samples(d, spec, noise, points, cfg, factor, max_jitter, grid)
    raw, n_bad = corr_hat_matrix(samples)
    if n_bad:
        logger.warning("%d neighbour samples had zero variance", n_bad)
    ell, corr, n_clamped = length_scale_matrix(points, raw)
    if n_clamped:
        logger.info("%d of %d pair correlations clamped", n_clamped,
                    points.size * (points.size - 1) // 2)
    return PairwiseLengthScales(points, len(d), ell, corr, raw, n_clamped)


def equivalent_train_factor(d, pls, noise=None, max_jitter=DEFAULT_MAX_JITTER):
    """Cholesky factor of the PSD-repaired pairwise train-train matrix.

    Returns ``(factor, n_clipped_eigenvalues)``.
    """
    m = build_corr_matrix(d.inputs, KernelSpec("pairwise-sqe", pairwise=pls))
    w = np.linalg.eigvalsh(m)
    n_clipped = int(np.count_nonzero(w < EIG_FLOOR))
    if n_clipped:
        m = nearest_psd(m)
    return cholesky(apply_noise(m, noise), max_jitter), n_clipped


def predict_equivalent_standardized(d, pls, test_inputs, noise=None,
                                    max_jitter=DEFAULT_MAX_JITTER, with_variance=True):
    test_inputs = np.asarray(test_inputs, dtype=float).ravel()
    factor, n_clipped = equivalent_train_factor(d, pls, noise, max_jitter)
    if n_clipped:
        logger.info("PSD repair clipped %d eigenvalues", n_clipped)
    spec = KernelSpec("pairwise-sqe", pairwise=pls)
    return predict_standardized(d, spec, test_inputs, noise, max_jitter, factor, with_variance)


def predict_equivalent(d, pls, test_inputs, noise=None, max_jitter=DEFAULT_MAX_JITTER):
    """Predict with the pairwise-SQE kernel (output units)."""
    test_inputs = np.asarray(test_inputs, dtype=float).ravel()
    mean, var = predict_equivalent_standardized(d, pls, test_inputs, noise, max_jitter)
    p = d.std_params
    return PredictiveSummary(test_inputs, mean * p.sd + p.mean, var * p.sd**2)
