"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np


def enumerate_projection(x, z):
    """Exhaustive ordered-subsequence search.

    Costs are summed left to right, the same order in which the table
    accumulates them, so ties are exact. Among optimal index tuples the one
    returned is smallest when compared from the last position backwards.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    m, n = x.size, z.size
    best, best_idx = math.inf, None
    for idx in itertools.combinations(range(n), m):
        c = 0.0
        for r, i in enumerate(idx):
            c = c + (x[r] - z[i]) ** 2
        if c < best or (c == best and idx[::-1] < best_idx[::-1]):
            best, best_idx = c, idx
    return best, np.array(best_idx)


def normal_equations(A, x):
    A = np.asarray(A, dtype=float)
    return np.linalg.solve(A.T @ A, A.T @ np.asarray(x, dtype=float))


def naive_convolution(b, y):
    tau, k = len(b), len(y)
    out = [0.0] * (k + tau - 1)
    for l in range(k + tau - 1):
        for t in range(k):
            if 0 <= l - t < tau:
                out[l] += y[t] * b[l - t]
    return np.array(out)


def frobenius_distance(y, s_idx, yp, sp_idx, n):
    """``||y^T kron S - y'^T kron S'||_F`` with the matrices built explicitly."""
    def sel(idx):
        S = np.zeros((len(idx), n))
        S[np.arange(len(idx)), idx] = 1.0
        return S
    H = np.kron(np.asarray(y, dtype=float)[None, :], sel(s_idx))
    Hp = np.kron(np.asarray(yp, dtype=float)[None, :], sel(sp_idx))
    return float(np.linalg.norm(H - Hp))


def grid_envelope(nu, varsigma, varrho, points=1500):
    """Minimize ``(1 + xi - (s sqrt(1 + xi - 2 th) + r)^2) / (2 th)`` over the feasible region.

    The region lies between the parabola ``xi = th^2`` and the line
    ``xi = 2 nu th + varpi^2 - 1`` for ``th`` between their intersections;
    it is covered by a ``points x points`` grid in (th, xi).
    """
    varpi = varsigma * math.sqrt(1 - nu * nu) + varrho
    disc = nu * nu - 1 + varpi * varpi
    lo, hi = nu - math.sqrt(disc), nu + math.sqrt(disc)
    th = np.linspace(lo, hi, points)[:, None]
    top = 2 * nu * th + varpi * varpi - 1
    v = np.linspace(0.0, 1.0, points)[None, :]
    xi = th * th + (top - th * th) * v
    inner = np.maximum(1 + xi - 2 * th, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = (1 + xi - (varsigma * np.sqrt(inner) + varrho) ** 2) / (2 * th)
    obj = np.where(th > 0, obj, np.inf)
    return float(np.min(obj))


mpmath.mp.dps = 50


def mp_entropy(theta):
    t = mpmath.mpf(theta)
    if t == 0 or t == 1:
        return mpmath.mpf(0)
    return -t * mpmath.log(t) - (1 - t) * mpmath.log(1 - t)


def mp_feasibility(kappa, theta, delta, mu, c):
    kappa, theta, delta, mu, c = map(mpmath.mpf, (kappa, theta, delta, mu, c))
    return kappa * mpmath.log(1 + 2 / delta) + mp_entropy(theta) - c * delta ** 2 * mu ** 2 * (1 - theta) / 2


def mp_oversampling(delta, mu, c):
    delta, mu, c = map(mpmath.mpf, (delta, mu, c))
    return 2 * mpmath.log(1 + 2 / delta) / (c * delta ** 2 * mu ** 2)


def mp_varpi(nu, s, r):
    nu, s, r = map(mpmath.mpf, (nu, s, r))
    return s * mpmath.sqrt(1 - nu * nu) + r


def mp_chi(eps, delta, mu, snr, eta=1):
    eps, delta, mu, snr, eta = map(mpmath.mpf, (eps, delta, mu, snr, eta))
    near = mu * mpmath.sqrt((1 + eps) / (1 - eps)) * (1 + (eta + 1) / mpmath.sqrt(snr))
    far = (eta + 1) / mpmath.sqrt(snr * (1 - 2 * delta))
    return max(near, far)


def mp_init_probability(n, m, q):
    return mpmath.binomial(n - q, m - q) / mpmath.binomial(n, m)
