"""Independent reference computations used only by the tests."""

import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from barylab.geometry import Geometry


def pairwise_dist(space, xs, ys):
    """Metric by a route separate from the library: eigvals of A^{-1} B."""
    out = np.zeros((len(xs), len(ys)))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            if space.geometry is Geometry.EUCLIDEAN:
                out[i, j] = np.linalg.norm(np.asarray(x) - np.asarray(y))
            else:
                ev = np.linalg.eigvals(np.linalg.solve(x, y)).real
                lg = np.log(ev)
                out[i, j] = np.sqrt(np.sum(lg**2)) if space.geometry is Geometry.SPD_TRACE else np.max(np.abs(lg))
    return out


def lp_wasserstein(space, p, xs, a, ys, b):
    """W_p by a dense LP solved with HiGHS."""
    c = pairwise_dist(space, xs, ys) ** p
    m, n = c.shape
    a_eq = np.zeros((m + n, m * n))
    for i in range(m):
        a_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        a_eq[m + j, j::n] = 1.0
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return max(res.fun, 0.0) ** (1.0 / p)


def wasserstein_1d(p, xs, a, ys, b):
    """W_p on the line via the quantile coupling."""
    xs, ys = np.ravel(xs), np.ravel(ys)
    ia, ib = np.argsort(xs), np.argsort(ys)
    xs, a, ys, b = xs[ia], np.asarray(a)[ia], ys[ib], np.asarray(b)[ib]
    qs = np.unique(np.concatenate([[0.0], np.cumsum(a), np.cumsum(b)]).clip(0, 1))
    qs = qs[qs <= 1.0]
    ca, cb = np.cumsum(a), np.cumsum(b)
    total = 0.0
    for lo, hi in zip(qs[:-1], qs[1:]):
        mid = 0.5 * (lo + hi)
        i = min(np.searchsorted(ca, mid), len(xs) - 1)
        j = min(np.searchsorted(cb, mid), len(ys) - 1)
        total += (hi - lo) * abs(xs[i] - ys[j]) ** p
    return total ** (1.0 / p)


def commuting_geometric_mean(q, logs, weights):
    """exp(sum w_j log A_j) for A_j = Q diag(exp(l_j)) Q^T."""
    mean = np.tensordot(np.asarray(weights), np.asarray(logs), axes=1)
    return (q * np.exp(mean)) @ q.T


def binomial_tail(n, k0):
    """P(Bin(n, 1/2) >= k0), summed exactly in rationals."""
    return float(Fraction(sum(math.comb(n, k) for k in range(k0, n + 1)), 2**n))


def pencil_geodesic(a, b, t):
    """A #_t B = A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2} through scipy's sqrtm/fractional_matrix_power."""
    from scipy.linalg import fractional_matrix_power, sqrtm

    s = np.real(sqrtm(a))
    si = np.linalg.inv(s)
    inner = si @ b @ si
    inner = 0.5 * (inner + inner.T)
    return s @ np.real(fractional_matrix_power(inner, t)) @ s
