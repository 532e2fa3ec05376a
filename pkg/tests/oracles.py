"""Independent reference implementations used by the tests."""

import math

import numpy as np


def cofactor_det(m):
    n = m.shape[0]
    if n == 1:
        return float(m[0, 0])
    return sum((-1) ** j * m[0, j] * cofactor_det(np.delete(m[1:], j, axis=1)) for j in range(n))


def mvn_logpdf(y, cov):
    """Normal density via explicit inverse and cofactor determinant."""
    y = np.asarray(y, float)
    inv = np.linalg.inv(cov)
    return -0.5 * (y.size * math.log(2 * math.pi) + math.log(cofactor_det(cov)) + y @ inv @ y)


def sqe_matrix(a, b, ell):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.array([[math.exp(-((p - q) ** 2) / (2 * ell * ell)) for q in b] for p in a])


def gp_predict(x, y, xs, ell, nugget=0.0):
    k = sqe_matrix(x, x, ell) + nugget * np.eye(len(x))
    ks = sqe_matrix(x, xs, ell)
    inv = np.linalg.inv(k)
    return ks.T @ inv @ y, 1.0 - np.einsum("ij,ik,kj->j", ks, inv, ks)


def shortest_window(samples, mass=0.95):
    """Scan every window of ceil(mass * n) sorted points."""
    x = sorted(samples)
    n = len(x)
    k = math.ceil(mass * n - 1e-9)
    best = None
    for i in range(n - k + 1):
        w = x[i + k - 1] - x[i]
        if best is None or w < best[0]:
            best = (w, x[i], x[i + k - 1])
    return best[1], best[2]


def pearson(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = a.size
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((p - ma) * (q - mb) for p, q in zip(a, b))
    va = sum((p - ma) ** 2 for p in a)
    vb = sum((q - mb) ** 2 for q in b)
    return cov / math.sqrt(va * vb)
