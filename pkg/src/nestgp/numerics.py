"""
Dense linear algebra, special functions, densities and random streams.

Everything that touches a covariance matrix goes through :func:`cholesky`,
which escalates a diagonal jitter by decades until the factorization
succeeds and records the jitter it needed.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from nestgp.errors import DimensionMismatch, DomainError, NotPositiveDefinite

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_MAX_JITTER = 1e-6
EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower Cholesky factor of ``m + jitter * I``."""

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def n(self):
        return self.lower.shape[0]


def as_sym_matrix(m, rtol=1e-12):
    """Return `m` as a float array after checking squareness, finiteness
    and symmetry."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    scale = max(np.max(np.abs(m)), 1.0) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > rtol * scale:
        raise DomainError("matrix is not symmetric")
    return m


def jitter_schedule(max_jitter):
    """Yield 0, 1e-10, 1e-9, ... up to and including `max_jitter`."""
    yield 0.0
    j = 1e-10
    while j <= max_jitter * (1 + 1e-12):
        yield j
        j *= 10.0
    if max_jitter > 0 and j / 10.0 < max_jitter * (1 - 1e-12):
        yield float(max_jitter)


def cholesky(m, max_jitter=DEFAULT_MAX_JITTER):
    """Factor a symmetric matrix, adding the smallest scheduled jitter that
    makes it positive definite.

    Parameters
    ----------
    m : (n, n) array_like
        Symmetric matrix.
    max_jitter : float
        Largest diagonal addition that may be tried.

    Returns
    -------
    CholeskyFactor

    Raises
    ------
    NotPositiveDefinite
        If no jitter up to `max_jitter` gives a factorizable matrix.
    """
    if max_jitter < 0:
        raise DomainError("max_jitter must be non-negative")
    m = as_sym_matrix(m)
    eye = np.eye(m.shape[0])
    for j in jitter_schedule(max_jitter):
        try:
            lower = np.linalg.cholesky(m + j * eye if j else m)
        except np.linalg.LinAlgError:
            continue
        if j:
            logger.debug("cholesky needed jitter %.1e (n=%d)", j, m.shape[0])
        return CholeskyFactor(lower, j)
    raise NotPositiveDefinite(
        f"{m.shape[0]}x{m.shape[0]} matrix not positive definite with jitter <= {max_jitter:g}"
    )


def chol_solve(f, b):
    """Solve ``(L L^T) x = b`` for a vector or matrix right-hand side."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.n:
        raise DimensionMismatch(f"factor is {f.n}x{f.n}, rhs has {b.shape[0]} rows")
    return linalg.cho_solve((f.lower, True), b, check_finite=False)


def log_det(f):
    return 2.0 * float(np.sum(np.log(np.diag(f.lower))))


def bessel_k(nu, z):
    """Modified Bessel function of the second kind, K_nu(z).

    Backed by :func:`scipy.special.kv`; accepts scalars or arrays.
    """
    nu_arr = np.asarray(nu, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    if np.any(nu_arr <= 0) or np.any(z_arr <= 0):
        raise DomainError("bessel_k requires nu > 0 and z > 0")
    out = special.kv(nu_arr, z_arr)
    return float(out) if np.ndim(out) == 0 else out


def normal_logpdf(x, mean, sd):
    if sd <= 0:
        raise DomainError(f"sd must be positive, got {sd}")
    r = (x - mean) / sd
    return -0.5 * LOG_2PI - math.log(sd) - 0.5 * r * r


def normal_cdf(x):
    return float(special.ndtr(x))


def truncnorm_logpdf(x, mean, sd, lower=0.0):
    """Log density of Normal(mean, sd^2) truncated to ``[lower, inf)``."""
    if x < lower:
        raise DomainError(f"x={x} below truncation point {lower}")
    # log(1 - Phi(a)) = log Phi(-a), stable for large |a|
    a = (lower - mean) / sd
    return normal_logpdf(x, mean, sd) - float(special.log_ndtr(-a))


def truncnorm_draw(mean, sd, rng, lower=0.0):
    """One draw from Normal(mean, sd^2) truncated below at `lower`, by
    inversion of the CDF (a single uniform per draw)."""
    a = (lower - mean) / sd
    pa = special.ndtr(a)
    u = rng.random()
    # mean >= lower keeps pa <= 0.5, so the inversion has full precision
    x = mean + sd * float(special.ndtri(pa + u * (1.0 - pa)))
    return max(x, lower)


def nearest_psd(m, floor=EIG_FLOOR):
    """Project a symmetric matrix onto matrices with eigenvalues >= `floor`.

    If the input has a unit diagonal it is treated as a correlation matrix
    and the output is rescaled back to a unit diagonal.
    """
    m = as_sym_matrix(m, rtol=1e-8)
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    if w[0] >= floor:
        return m.copy()
    out = (v * np.maximum(w, floor)) @ v.T
    out = 0.5 * (out + out.T)
    if np.allclose(np.diag(m), 1.0, atol=1e-12):
        d = np.sqrt(np.diag(out))
        out = out / np.outer(d, d)
        np.fill_diagonal(out, 1.0)
    return out


def make_rng(seed):
    """A seeded PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))
