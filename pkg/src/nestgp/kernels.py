"""
Correlation kernels on scalar inputs and assembly of correlation matrices.

Families
--------
``sqe`` / ``sqe-looking``
    ``exp(-(x - x')**2 / (2 * ell * ell'))``. Within one MCMC iteration the
    iteration-indexed length scale is a single number, so both names
    evaluate the stationary form.
``matern`` / ``matern-looking``
    ``2**(1-nu)/Gamma(nu) * (sqrt(2 nu) d/ell)**nu * K_nu(sqrt(2 nu) d/ell)``
    with ``d = |x - x'|``.
``pairwise-sqe``
    ``exp(-(x_i - x_j)**2 / ell_ij**2)`` with one length scale per input
    pair, looked up in a :class:`~nestgp.nonstationary.PairwiseLengthScales`.
"""

import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy import special

from nestgp.errors import DomainError
from nestgp.numerics import bessel_k

SQE_FAMILIES = ("sqe", "sqe-looking")
MATERN_FAMILIES = ("matern", "matern-looking")
FAMILIES = SQE_FAMILIES + MATERN_FAMILIES + ("pairwise-sqe",)

# below this scaled distance the Matérn product is replaced by its limit, 1
MATERN_ZERO = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    family: str
    ell: float = 1.0
    nu: Optional[float] = None
    pairwise: Any = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == "pairwise-sqe":
            if self.pairwise is None:
                raise DomainError("pairwise-sqe needs pairwise length scales")
            return
        if not self.ell > 0:
            raise DomainError(f"length scale must be positive, got {self.ell}")
        if self.family in MATERN_FAMILIES and not (self.nu is not None and self.nu > 0):
            raise DomainError(f"Matérn roughness must be positive, got {self.nu}")

    @property
    def n_params(self):
        return 2 if self.family in MATERN_FAMILIES else 1

    @classmethod
    def from_thetas(cls, family, thetas):
        """Spec for `family` ('sqe' or 'matern') at hyperparameters
        ``(ell,)`` or ``(ell, nu)``."""
        if family in SQE_FAMILIES:
            return cls("sqe-looking", ell=float(thetas[0]))
        if family in MATERN_FAMILIES:
            return cls("matern-looking", ell=float(thetas[0]), nu=float(thetas[1]))
        raise DomainError(f"no hyperparameter mapping for family {family!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Error variance `sigma_eps_sq` in output units squared, and the
    sample variance `s_sq` that was used to standardize the outputs."""

    sigma_eps_sq: float = 0.0
    s_sq: float = 1.0

    def __post_init__(self):
        if self.sigma_eps_sq < 0:
            raise DomainError("error variance must be non-negative")
        if not self.s_sq > 0:
            raise DomainError("s_sq must be positive")

    @property
    def nugget(self):
        return self.sigma_eps_sq / self.s_sq


def sqe_corr(x, x_prime, ell, ell_prime):
    if ell <= 0 or ell_prime <= 0:
        raise DomainError("length scales must be positive")
    return math.exp(-((x - x_prime) ** 2) / (2.0 * ell * ell_prime))


def _matern_values(d, ell, nu):
    d = np.abs(np.asarray(d, dtype=float))
    z = math.sqrt(2.0 * nu) * d / ell
    out = np.ones_like(z)
    pos = z >= MATERN_ZERO
    if np.any(pos):
        zp = z[pos]
        with np.errstate(under="ignore"):
            vals = (2.0 ** (1.0 - nu) / special.gamma(nu)) * zp**nu * bessel_k(nu, zp)
        # K_nu underflows to 0 far out; the correlation is 0 there as well
        out[pos] = np.nan_to_num(vals, nan=0.0)
    return out


def matern_corr(x, x_prime, ell, nu):
    if ell <= 0 or nu <= 0:
        raise DomainError("Matérn parameters must be positive")
    return float(_matern_values(np.array([x - x_prime]), ell, nu)[0])


def pairwise_sqe_corr(x_i, x_j, ell_ij):
    if ell_ij <= 0:
        raise DomainError("pairwise length scale must be positive")
    return math.exp(-((x_i - x_j) ** 2) / (ell_ij**2))


def cross_corr(a, b, spec):
    """Correlation matrix between input sets `a` (rows) and `b` (columns)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    diff = a[:, None] - b[None, :]
    if spec.family in SQE_FAMILIES:
        return np.exp(-(diff**2) / (2.0 * spec.ell * spec.ell))
    if spec.family in MATERN_FAMILIES:
        return _matern_values(diff, spec.ell, spec.nu)
    ell = spec.pairwise.lookup(a, b)
    return np.exp(-(diff**2) / ell**2)


def build_corr_matrix(inputs, spec):
    """Symmetric correlation matrix of `spec` over `inputs`, unit diagonal."""
    inputs = np.asarray(inputs, dtype=float).ravel()
    if not np.all(np.isfinite(inputs)):
        raise DomainError("inputs must be finite")
    m = cross_corr(inputs, inputs, spec)
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, 1.0)
    return m


def apply_noise(m, noise):
    if noise is None or noise.sigma_eps_sq == 0:
        return m
    return m + noise.nugget * np.eye(m.shape[0])
