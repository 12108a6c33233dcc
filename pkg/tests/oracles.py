"""Independent brute-force implementations used as test oracles.

Everything here is written as directly as possible from the definitions,
with plain loops and exhaustive enumeration, and deliberately shares no code
with the package internals it checks.
"""

import itertools
from math import comb

import numpy as np


# -- exhaustive nearest neighbors -------------------------------------------


def brute_neighbors(points, y, k, exclude=None):
    """All-pairs scan: ids and distances of the k nearest points to y,
    ordered by (distance, id), optionally skipping one id."""
    points = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    dists = np.sqrt(((points - y) ** 2).sum(axis=1))
    order = sorted(range(len(points)), key=lambda i: (dists[i], i))
    if exclude is not None:
        order = [i for i in order if i != exclude]
    order = order[:k]
    return np.array(order, dtype=int), dists[order]


def brute_self_id(points, y):
    points = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    for i, p in enumerate(points):
        if (p == y).all():
            return i
    return None


# -- direct evaluation of the outlier scores --------------------------------


def oracle_knn(points, y, k):
    """Mean distance to the k nearest points (self excluded on exact match)."""
    _, d = brute_neighbors(points, y, k, exclude=brute_self_id(points, y))
    return float(np.mean(d[:k]))


def oracle_kdist(points, y, k):
    _, d = brute_neighbors(points, y, k, exclude=brute_self_id(points, y))
    return float(d[k - 1])


def oracle_lrd(points, y, k, use_reach_dist=True):
    """Inverse mean reachability distance over the k-neighborhood."""
    ids, d = brute_neighbors(points, y, k, exclude=brute_self_id(points, y))
    if use_reach_dist:
        reach = [max(d[j], oracle_kdist(points, points[ids[j]], k))
                 for j in range(k)]
    else:
        reach = list(d[:k])
    mean_reach = np.mean(reach)
    return float("inf") if mean_reach == 0 else float(1.0 / mean_reach)


def oracle_lof(points, y, k):
    ids, _ = brute_neighbors(points, y, k, exclude=brute_self_id(points, y))
    num = np.mean([oracle_lrd(points, points[i], k) for i in ids])
    den = oracle_lrd(points, y, k)
    if np.isinf(den):
        return 1.0 if np.isinf(num) else 0.0
    return float(num / den)


def oracle_max_lof(points, y, k_range):
    lo, hi = k_range
    return max(oracle_lof(points, y, k) for k in range(lo, hi + 1))


# -- combinatorial sample L-moments ------------------------------------------


def oracle_lmoment(z, r):
    """Unbiased sample L-moment by exhaustive enumeration of r-subsets."""
    z = np.sort(np.asarray(z, dtype=float))
    n = len(z)
    total = 0.0
    for subset in itertools.combinations(range(n), r):
        vals = [z[i] for i in subset]  # already ascending
        inner = sum(
            (-1) ** j * comb(r - 1, j) * vals[r - 1 - j] for j in range(r)
        )
        total += inner / r
    return total / comb(n, r)


# -- exhaustive HDI window search --------------------------------------------


def oracle_hdi(samples, level):
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    need = min(n, max(1, int(np.ceil(level * n - 1e-9))))
    best = None
    for i in range(n - need + 1):
        width = s[i + need - 1] - s[i]
        if best is None or width < best[0]:
            best = (width, s[i], s[i + need - 1])
    return best[1], best[2]


# -- ordinary least squares via normal equations -----------------------------


def oracle_ols_adjust(summaries, params, y_obs):
    """Unweighted least-squares particle adjustment via normal equations."""
    X = np.asarray(summaries, dtype=float) - np.asarray(y_obs, dtype=float)
    theta = np.asarray(params, dtype=float)
    design = np.column_stack([np.ones(len(X)), X])
    coef = np.linalg.solve(design.T @ design, design.T @ theta)
    return theta - X @ coef[1:]


# -- conjugate Gaussian posterior --------------------------------------------


def gaussian_posterior_mean(y_obs, prior_var, noise_var):
    """Posterior mean of theta ~ N(0, prior_var), y | theta ~ N(theta, noise_var)."""
    return float(y_obs) * prior_var / (prior_var + noise_var)
